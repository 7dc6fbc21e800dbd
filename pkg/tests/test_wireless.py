import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powergnn import graphs, wireless
from powergnn.defs import EXACT_ATOL
from powergnn.policy import AllocationSpec

import oracles


def _rng(seed):
    return np.random.default_rng(seed)


def _random_channel(rng, m, scale=1.0):
    return rng.rayleigh(scale=scale, size=(m, m)) * rng.uniform(0.1, 1.0, size=(m, m))


# -- topology generation ----------------------------------------------------

def test_adhoc_region_and_receiver_offsets():
    model = wireless.generate_adhoc(50, _rng(0))
    assert model.m == model.n == 50
    assert np.array_equal(model.pairing, np.arange(50))
    assert np.all(np.abs(model.tx_pos) <= 50.0)
    assert np.all(np.abs(model.rx_pos - model.tx_pos) <= 12.5)

def test_adhoc_scaled_region_for_larger_size_same_reference():
    s = 50.0 * np.sqrt(75.0 / 50.0)
    model = wireless.generate_adhoc(75, _rng(1), size_ref=50)
    assert np.all(np.abs(model.tx_pos) <= s)
    # density held constant: the drop really uses the enlarged region
    assert np.max(np.abs(model.tx_pos)) > 50.0
    assert np.all(np.abs(model.rx_pos - model.tx_pos) <= 12.5)

def test_adhoc_density_factor_shrinks_region():
    dense = wireless.generate_adhoc(20, _rng(2), density_factor=2.0)
    assert np.all(np.abs(dense.tx_pos) <= 10.0)

def test_adhoc_deterministic_given_stream():
    a = wireless.generate_adhoc(10, _rng(7))
    b = wireless.generate_adhoc(10, _rng(7))
    assert np.array_equal(a.tx_pos, b.tx_pos)
    assert np.array_equal(a.rx_pos, b.rx_pos)
    assert np.array_equal(a.pathloss, b.pathloss)

def test_adhoc_rejects_tiny_networks():
    with pytest.raises(ValueError):
        wireless.generate_adhoc(1, _rng(0))

def test_pathloss_matches_distance_law_pointwise():
    # vectorized pow differs from scalar pow by at most a few ulp
    model = wireless.generate_adhoc(6, _rng(3))
    for i in range(6):
        for j in range(6):
            d = np.linalg.norm(model.tx_pos[i] - model.rx_pos[model.pairing[j]])
            assert np.isclose(model.pathloss[i, j], d ** (-2.2), rtol=5e-15, atol=0)

def test_multicell_even_user_split():
    model = wireless.generate_multicell(50, 5, _rng(4))
    assert model.m == 50 and model.n == 5
    counts = np.bincount(model.pairing, minlength=5)
    assert np.array_equal(counts, np.full(5, 10))

def test_multicell_single_cell_is_multiple_access():
    model = wireless.generate_multicell(6, 1, _rng(5))
    assert np.array_equal(model.pairing, np.zeros(6, dtype=np.int64))

def test_multicell_one_user_per_cell_pairing_bijective():
    model = wireless.generate_multicell(9, 9, _rng(6))
    assert sorted(model.pairing.tolist()) == list(range(9))

def test_multicell_requires_even_division():
    with pytest.raises(ValueError):
        wireless.generate_multicell(10, 3, _rng(0))

def test_multicell_users_inside_their_cell():
    m, n = 12, 4
    model = wireless.generate_multicell(m, n, _rng(8))
    s = m * np.sqrt(1.0)
    width = 2 * s / 2
    # 2x2 grid: user and its base station share a cell rectangle
    for i in range(m):
        bs = model.rx_pos[model.pairing[i]]
        assert np.all(np.abs(model.tx_pos[i] - bs) <= width / 2 + 1e-12)


# -- topology serialization -------------------------------------------------

def test_topology_round_trip_bit_exact(tmp_path):
    model = wireless.generate_adhoc(15, _rng(9))
    path = tmp_path / "net.json"
    wireless.save_model(model, path)
    loaded = wireless.load_model(path)
    assert loaded.m == model.m and loaded.n == model.n
    assert np.array_equal(loaded.tx_pos, model.tx_pos)
    assert np.array_equal(loaded.rx_pos, model.rx_pos)
    assert np.array_equal(loaded.pairing, model.pairing)
    assert np.array_equal(loaded.pathloss, model.pathloss)

def test_topology_rejects_unknown_version():
    model = wireless.generate_adhoc(4, _rng(10))
    text = wireless.model_dumps(model).replace('"format_version": 1', '"format_version": 9')
    with pytest.raises(ValueError, match="version"):
        wireless.model_loads(text)


# -- fading -----------------------------------------------------------------

def test_fading_second_moment_is_unit():
    model = wireless.generate_adhoc(60, _rng(11))
    rng = _rng(12)
    total, count = 0.0, 0
    while count < 10**6:
        H = wireless.sample_fading(model, rng)
        hf = H / model.pathloss
        total += float(np.sum(hf * hf))
        count += hf.size
    assert 0.99 <= total / count <= 1.01

def test_fading_deterministic_given_stream():
    model = wireless.generate_adhoc(8, _rng(13))
    assert np.array_equal(
        wireless.sample_fading(model, _rng(14)), wireless.sample_fading(model, _rng(14))
    )

def test_fading_zero_pathloss_gives_zero_channel():
    pl = np.array([[1.0, 0.0], [0.5, 2.0]])
    model = wireless.NetworkModel(
        m=2, n=2, tx_pos=np.zeros((2, 2)), rx_pos=np.zeros((2, 2)),
        pairing=np.arange(2), pathloss=pl,
    )
    H = wireless.sample_fading(model, _rng(15))
    assert H[0, 1] == 0.0 and np.all(H[[0, 1], [0, 1]] > 0)


# -- capacity ---------------------------------------------------------------

def test_capacity_zero_power_zero_rate():
    H = _random_channel(_rng(16), 5)
    assert np.array_equal(wireless.capacity(np.zeros(5), H, 1.0), np.zeros(5))

def test_capacity_single_user_closed_form():
    r = wireless.capacity(np.array([1.0]), np.array([[1.0]]), 1.0)
    assert np.isclose(r[0], np.log(2.0), rtol=1e-15, atol=0)

def test_capacity_matches_scalar_oracle():
    rng = _rng(17)
    H = _random_channel(rng, 3)
    p = rng.uniform(0, 2, size=3)
    want = oracles.capacity_scalar(p, H, 0.7)
    got = wireless.capacity(p, H, 0.7)
    assert np.allclose(got, want, rtol=1e-13, atol=0)

def test_capacity_batched_matches_per_row():
    rng = _rng(18)
    H = _random_channel(rng, 4)
    P = rng.uniform(0, 1, size=(7, 4))
    batched = wireless.capacity(P, H, 1.0)
    assert batched.shape == (7, 4)
    for i in range(7):
        # batched and single-vector matmul may use different BLAS kernels
        assert np.allclose(batched[i], wireless.capacity(P[i], H, 1.0), rtol=1e-12, atol=0)

def test_capacity_monotone_in_cross_interference():
    rng = _rng(19)
    H = _random_channel(rng, 4)
    p = rng.uniform(0.1, 1, size=4)
    base = wireless.capacity(p, H, 1.0)
    H2 = H.copy()
    H2[2, 0] *= 3.0
    bumped = wireless.capacity(p, H2, 1.0)
    assert bumped[0] <= base[0]
    mask = np.ones(4, dtype=bool)
    mask[0] = False
    assert np.array_equal(bumped[mask], base[mask])

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_capacity_commutes_with_node_relabeling(seed, m):
    rng = _rng(seed)
    H = _random_channel(rng, m)
    p = rng.uniform(0, 1, size=m)
    perm = rng.permutation(m)
    Hp, pp = graphs.permute(H, p, perm)
    left = wireless.capacity(pp, Hp, 1.0)
    right = wireless.capacity(p, H, 1.0)[perm]
    assert np.max(np.abs(left - right)) <= EXACT_ATOL


# -- wmmse ------------------------------------------------------------------

def test_wmmse_single_user_full_power():
    res = wireless.wmmse(np.array([[0.8]]), 1.0, 2.0)
    assert res.converged
    assert np.isclose(res.p[0], 2.0, rtol=1e-12, atol=0)

def test_wmmse_stays_in_power_box():
    for seed in range(5):
        H = _random_channel(_rng(seed), 6)
        res = wireless.wmmse(H, 1.0, 1.5)
        assert np.all(res.p >= 0) and np.all(res.p <= 1.5 + 1e-15)

def test_wmmse_sum_rate_monotone_over_iterations():
    for seed in range(6):
        H = _random_channel(_rng(100 + seed), 4)
        rates = [
            wireless.sum_rate(wireless.wmmse(H, 1.0, 1.0, max_iters=k, tol=0.0).p, H, 1.0)
            for k in range(1, 14)
        ]
        diffs = np.diff(np.asarray(rates))
        assert np.all(diffs >= -1e-12)

def test_wmmse_never_beats_fine_grid_search():
    rng = _rng(20)
    H = _random_channel(rng, 4)
    p0 = 1.0
    res = wireless.wmmse(H, 1.0, p0, max_iters=300, tol=1e-10)
    levels = np.linspace(0.0, p0, 21)
    grid = np.stack(np.meshgrid(*([levels] * 4), indexing="ij"), axis=-1).reshape(-1, 4)
    best = wireless.sum_rate(grid, H, 1.0).max()
    assert wireless.sum_rate(res.p, H, 1.0) <= best + 1e-9

def test_wmmse_reports_non_convergence():
    H = _random_channel(_rng(21), 5)
    res = wireless.wmmse(H, 1.0, 1.0, max_iters=1, tol=1e-12)
    assert not res.converged and res.iterations == 1

def test_wmmse_agrees_with_plain_loop_reference():
    H = _random_channel(_rng(22), 5)
    res = wireless.wmmse(H, 1.0, 1.0, max_iters=40, tol=0.0)
    want = oracles.wmmse_reference(H, 1.0, 1.0, iters=40)
    assert np.allclose(res.p, want, rtol=1e-10, atol=1e-13)


# -- fixed baselines --------------------------------------------------------

def test_equal_power_constant_split():
    assert np.array_equal(wireless.equal_power(4, 2.0), np.full(4, 0.5))

def test_random_selection_cardinality():
    p = wireless.random_selection(4, 2.0, 1.0, _rng(23))
    assert sorted(p.tolist()) == [0.0, 0.0, 1.0, 1.0]

def test_random_selection_uniform_inclusion():
    m, k, n = 4, 2, 10**5
    rng = _rng(24)
    hits = np.zeros(m)
    for _ in range(n):
        hits += wireless.random_selection(m, 2.0, 1.0, rng) > 0
    freq = hits / n
    se = np.sqrt((k / m) * (1 - k / m) / n)
    assert np.all(np.abs(freq - k / m) <= 3 * se)

def test_random_selection_rejects_oversized_budget():
    with pytest.raises(ValueError):
        wireless.random_selection(3, 4.0, 1.0, _rng(0))


# -- exhaustive binary search ----------------------------------------------

def test_brute_force_single_user_transmits():
    p, total = wireless.brute_force_binary(np.array([[1.0]]), 1.0, 1.0)
    assert np.array_equal(p, np.array([1.0]))
    assert np.isclose(total, np.log(2.0), rtol=1e-15, atol=0)

def test_brute_force_uncoupled_pair_both_transmit():
    H = np.array([[1.0, 0.0], [0.0, 1.0]])
    p, _ = wireless.brute_force_binary(H, 1.0, 1.0)
    assert np.array_equal(p, np.array([1.0, 1.0]))

def test_brute_force_strong_coupling_silences_one_and_breaks_tie():
    H = np.array([[1.0, 10.0], [10.0, 1.0]])
    p, total = wireless.brute_force_binary(H, 1.0, 1.0)
    # symmetric single-transmitter optima tie; lowest code (node 0 silent) wins
    assert np.array_equal(p, np.array([0.0, 1.0]))
    assert np.isclose(total, np.log(2.0), rtol=1e-15, atol=0)

def test_brute_force_matches_enumeration_oracle():
    for seed in (25, 26, 27):
        H = _random_channel(_rng(seed), 6)
        p, total = wireless.brute_force_binary(H, 1.0, 1.0)
        want_p, want_total = oracles.best_binary_by_enumeration(H, 1.0, 1.0)
        assert np.array_equal(p, want_p)
        assert np.isclose(total, want_total, rtol=1e-12, atol=0)

def test_brute_force_guards_exponent():
    with pytest.raises(ValueError):
        wireless.brute_force_binary(np.eye(17), 1.0, 1.0)


# -- demand sampling --------------------------------------------------------

def test_demand_moment_and_support():
    x = wireless.sample_demand(10**6, 0.05, _rng(28))
    assert np.all(x >= 0)
    assert 0.05 * 0.99 <= x.mean() <= 0.05 * 1.01

def test_demand_deterministic():
    assert np.array_equal(
        wireless.sample_demand(50, 0.05, _rng(29)), wireless.sample_demand(50, 0.05, _rng(29))
    )


# -- problem spec -----------------------------------------------------------

def test_problem_spec_validation():
    alloc = AllocationSpec(p0=1.0)
    with pytest.raises(ValueError):
        wireless.ProblemSpec(sigma2=0.0, P_max=1.0, allocation=alloc)
    with pytest.raises(ValueError):
        wireless.ProblemSpec(sigma2=1.0, P_max=-1.0, allocation=alloc)
    with pytest.raises(ValueError):
        wireless.ProblemSpec(sigma2=1.0, P_max=1.0, allocation=alloc, variant="maxmin")
    spec = wireless.ProblemSpec(sigma2=1.0, P_max=10.0, allocation=alloc)
    assert spec.variant == "sum_rate_budget"
