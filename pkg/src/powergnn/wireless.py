"""Interference-network physics and baseline allocators.

Topology generators drop transmitter/receiver pairs in a square region and
derive a dense path-gain matrix from pairwise distances.  Channel matrices
combine that slow component with i.i.d. Rayleigh fast fading redrawn every
scheduling cycle.  Per-link rates use the Shannon formula, treating all
interference as noise.

Index convention: entry (i, j) of a channel matrix is the gain from
transmitter i to the receiver serving transmitter j, so column j collects
everything receiver r(j) hears.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .defs import format_float
from .policy import AllocationSpec

PATHLOSS_EXPONENT = 2.2

# unit mean-square fading: E[h_f^2] = 2 * scale^2 = 1
RAYLEIGH_SCALE = 1.0 / math.sqrt(2.0)

TOPOLOGY_VERSION = 1

VARIANTS = ("sum_rate_budget", "demand_constrained")


def pathloss_matrix(tx_pos: np.ndarray, rx_pos: np.ndarray, pairing: np.ndarray) -> np.ndarray:
    """Distance-law gains from every transmitter to every serving receiver."""
    rx_served = rx_pos[pairing]
    diff = tx_pos[:, None, :] - rx_served[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    with np.errstate(divide="ignore"):
        return dist ** (-PATHLOSS_EXPONENT)


@dataclass(frozen=True)
class NetworkModel:
    """Fixed network geometry; everything except fading."""

    m: int
    n: int
    tx_pos: np.ndarray
    rx_pos: np.ndarray
    pairing: np.ndarray
    pathloss: np.ndarray = field(compare=False)

    @classmethod
    def build(cls, tx_pos, rx_pos, pairing) -> "NetworkModel":
        tx_pos = np.asarray(tx_pos, dtype=np.float64)
        rx_pos = np.asarray(rx_pos, dtype=np.float64)
        pairing = np.asarray(pairing, dtype=np.int64)
        m, n = tx_pos.shape[0], rx_pos.shape[0]
        if tx_pos.shape != (m, 2) or rx_pos.shape != (n, 2):
            raise ValueError("positions must be planar coordinate arrays")
        if pairing.shape != (m,) or pairing.min() < 0 or pairing.max() >= n:
            raise ValueError("pairing must map every transmitter to a receiver")
        if n == m and len(set(pairing.tolist())) != m:
            raise ValueError("one receiver per transmitter requires a bijective pairing")
        if n < m and len(set(pairing.tolist())) != n:
            raise ValueError("every receiver must serve at least one transmitter")
        return cls(
            m=m,
            n=n,
            tx_pos=tx_pos,
            rx_pos=rx_pos,
            pairing=pairing,
            pathloss=pathloss_matrix(tx_pos, rx_pos, pairing),
        )


def generate_adhoc(
    m: int,
    rng: np.random.Generator,
    density_factor: float = 1.0,
    size_ref: int | None = None,
) -> NetworkModel:
    """Random pairs: transmitters uniform in a square, receivers nearby.

    The drop region is [-s, s]^2 with s = size_ref * sqrt(m / size_ref) /
    density_factor, which holds node density constant when m grows at fixed
    size_ref and shrinks all distances for density_factor > 1.  Receiver i
    lands in a side-length size_ref/2 box centered on its transmitter.
    """
    if m < 2:
        raise ValueError("need at least two transmitter/receiver pairs")
    if density_factor <= 0:
        raise ValueError("density_factor must be positive")
    base = m if size_ref is None else size_ref
    s = base * math.sqrt(m / base) / density_factor
    tx = rng.uniform(-s, s, size=(m, 2))
    rx = tx + rng.uniform(-base / 4.0, base / 4.0, size=(m, 2))
    return NetworkModel.build(tx, rx, np.arange(m))


def generate_multicell(
    m: int,
    n: int,
    rng: np.random.Generator,
    density_factor: float = 1.0,
    size_ref: int | None = None,
) -> NetworkModel:
    """Cellular layout: n base stations on a grid, m/n users per cell.

    The region matches generate_adhoc; it is partitioned into a near-square
    grid of n cells, each base station sits at its cell center, and that
    cell's users drop uniformly inside it.  Users are assigned to cells in
    contiguous index blocks.
    """
    if n < 1:
        raise ValueError("need at least one cell")
    if m < 2:
        raise ValueError("need at least two users")
    if m % n != 0:
        raise ValueError(f"cell count {n} must divide user count {m}")
    base = m if size_ref is None else size_ref
    s = base * math.sqrt(m / base) / density_factor
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    width, height = 2 * s / cols, 2 * s / rows
    cell_low = np.empty((n, 2))
    for c in range(n):
        cr, cc = divmod(c, cols)
        cell_low[c] = (-s + cc * width, s - (cr + 1) * height)
    bs = cell_low + 0.5 * np.array([width, height])
    users_per = m // n
    pairing = np.repeat(np.arange(n), users_per)
    low = cell_low[pairing]
    tx = rng.uniform(low, low + np.array([width, height]), size=(m, 2))
    return NetworkModel.build(tx, bs, pairing)


def sample_fading(
    model: NetworkModel,
    rng: np.random.Generator,
    rayleigh_scale: float = RAYLEIGH_SCALE,
) -> np.ndarray:
    """One channel matrix: path gains times i.i.d. Rayleigh fast fading."""
    hf = rng.rayleigh(scale=rayleigh_scale, size=(model.m, model.m))
    return model.pathloss * hf


def model_dumps(model: NetworkModel) -> str:
    """Versioned topology text; positions carry 17 significant digits.

    Path gains are recomputed on load, so the round trip is bit-exact.
    """

    def point(pq):
        return "[" + ", ".join(format_float(c) for c in pq) + "]"

    def points(arr):
        return "[" + ", ".join(point(row) for row in arr) + "]"

    pairing = json.dumps([int(v) for v in model.pairing])
    return (
        "{\n"
        f'  "format_version": {TOPOLOGY_VERSION},\n'
        f'  "m": {model.m},\n'
        f'  "n": {model.n},\n'
        f'  "tx_pos": {points(model.tx_pos)},\n'
        f'  "rx_pos": {points(model.rx_pos)},\n'
        f'  "pairing": {pairing}\n'
        "}"
    )


def model_loads(text: str) -> NetworkModel:
    doc = json.loads(text)
    if doc.get("format_version") != TOPOLOGY_VERSION:
        raise ValueError(f"unsupported topology version {doc.get('format_version')!r}")
    model = NetworkModel.build(doc["tx_pos"], doc["rx_pos"], doc["pairing"])
    if model.m != doc["m"] or model.n != doc["n"]:
        raise ValueError("topology dimensions disagree with position arrays")
    return model


def save_model(model: NetworkModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_dumps(model))
        fh.write("\n")


def load_model(path) -> NetworkModel:
    with open(path) as fh:
        return model_loads(fh.read())


@dataclass(frozen=True)
class ProblemSpec:
    """Resource-allocation problem: noise, budget, allocation set, variant."""

    sigma2: float
    P_max: float
    allocation: AllocationSpec
    variant: str = "sum_rate_budget"
    demand_mean: float = 0.05
    rayleigh_scale: float = RAYLEIGH_SCALE

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("noise power must be positive")
        if not self.P_max > 0:
            raise ValueError("power budget must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown problem variant {self.variant!r}")
        if self.variant == "demand_constrained" and not self.demand_mean > 0:
            raise ValueError("demand mean must be positive")
        if not self.rayleigh_scale > 0:
            raise ValueError("fading scale must be positive")


def capacity(p: np.ndarray, H: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-link achievable rate ln(1 + SINR), in nats per channel use.

    Gains enter squared; interference is everything the link's receiver
    hears from other transmitters.  Batched over leading axes of p.
    """
    p = np.asarray(p, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    G = H * H
    diag = np.diagonal(G)
    signal = p * diag
    interference = p @ G - signal
    return np.log1p(signal / (sigma2 + interference))


def sum_rate(p: np.ndarray, H: np.ndarray, sigma2: float) -> np.ndarray:
    return capacity(p, H, sigma2).sum(axis=-1)


@dataclass(frozen=True)
class WmmseResult:
    p: np.ndarray
    iterations: int
    converged: bool


def wmmse(
    H: np.ndarray,
    sigma2: float,
    p0: float,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> WmmseResult:
    """Weighted-MMSE power control for the scalar interference channel.

    Block-coordinate updates of receiver gain u, MSE weight w, and
    transmit amplitude v from a full-power start; each block update is the
    exact minimizer, so the sum-rate is non-decreasing across iterations.
    Returns p = v^2 clipped to [0, p0] with a convergence flag.
    """
    if not p0 > 0:
        raise ValueError("power level p0 must be positive")
    H = np.asarray(H, dtype=np.float64)
    G = H * H
    h_direct = np.diagonal(H)
    m = H.shape[0]
    vmax = math.sqrt(p0)
    v = np.full(m, vmax)
    for it in range(1, max_iters + 1):
        q = v * v
        u = h_direct * v / (sigma2 + q @ G)
        w = 1.0 / (1.0 - u * h_direct * v)
        wu2 = w * u * u
        den = G @ wu2
        num = w * u * h_direct
        with np.errstate(invalid="ignore", divide="ignore"):
            v_new = np.where(den > 0, num / den, 0.0)
        v_new = np.clip(v_new, 0.0, vmax)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            return WmmseResult(p=v * v, iterations=it, converged=True)
    return WmmseResult(p=v * v, iterations=max_iters, converged=False)


def equal_power(m: int, P_max: float) -> np.ndarray:
    """Spread the whole budget evenly: every user gets P_max / m."""
    if m < 1 or not P_max > 0:
        raise ValueError("need m >= 1 and a positive budget")
    return np.full(m, P_max / m)


def random_selection(m: int, P_max: float, p0: float, rng: np.random.Generator) -> np.ndarray:
    """Give p0 to a uniformly random subset of floor(P_max / p0) users."""
    if P_max > m * p0:
        raise ValueError(f"budget {P_max} exceeds m * p0 = {m * p0}")
    k = int(P_max / p0)
    chosen = rng.permutation(m)[:k]
    p = np.zeros(m)
    p[chosen] = p0
    return p


def brute_force_binary(H: np.ndarray, sigma2: float, p0: float):
    """Exhaustive maximizer of instantaneous sum-rate over {0, p0}^m.

    Ties break toward fewer transmitters, then the lowest code with node 0
    as the most significant bit.  Guarded to m <= 16.
    """
    H = np.asarray(H, dtype=np.float64)
    m = H.shape[0]
    if m > 16:
        raise ValueError(f"exhaustive search limited to m <= 16, got m = {m}")
    codes = np.arange(2 ** m)
    bits = (codes[:, None] >> (m - 1 - np.arange(m))) & 1
    allocations = bits * p0
    totals = sum_rate(allocations.astype(np.float64), H, sigma2)
    best_total = totals.max()
    tied = np.flatnonzero(totals == best_total)
    counts = bits[tied].sum(axis=1)
    composite = counts * (1 << m) + tied
    winner = tied[np.argmin(composite)]
    return allocations[winner].astype(np.float64), float(best_total)


def sample_demand(m: int, demand_mean: float, rng: np.random.Generator) -> np.ndarray:
    """Per-node arrival rates, i.i.d. exponential."""
    if not demand_mean > 0:
        raise ValueError("demand mean must be positive")
    return rng.exponential(demand_mean, size=m)
