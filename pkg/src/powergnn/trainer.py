"""Model-free primal-dual training of graph-filter allocation policies.

The constrained statistical problem

    max_A  u0(r)   s.t.  u(r) >= 0,  r = E[ f(p, H) ],  p ~ Psi_A(H)

is solved in the Lagrangian saddle sense with an augmented reward vector f
that folds constraint observables into r.  Gradients with respect to the
filter taps A never differentiate through f: the chain rule is replaced by
the likelihood-ratio identity

    grad_A E[ f(p, H)^T lam ] = E[ (f(p, H)^T lam) grad_A log Psi_A(p | H) ]

so f may be an arbitrary black box (here: per-link capacities plus, for the
budgeted variant, the instantaneous total power).  Within one iteration all
updates read the same snapshot of (r, lam, mu); the dual step size follows a
geometric schedule while the tap step is rescaled by ADAM.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .defs import (
    STREAM_DEMAND,
    STREAM_FADING_EVAL,
    STREAM_FADING_TRAIN,
    STREAM_INIT,
    STREAM_POLICY,
    stream,
)
from .gnn import (
    FilterTaps,
    GnnConfig,
    backward,
    forward,
    init_taps,
    num_params,
)
from .policy import grad_log_prob, sample, threshold
from .wireless import (
    NetworkModel,
    ProblemSpec,
    capacity,
    sample_demand,
    sample_fading,
)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the primal-dual loop.

    iters counts tap updates.  The dual step at iteration k (0-based) is
    dual_step0 * dual_decay**k; the tap step primal_step is constant and
    passed through ADAM.  batch averages the score-weighted gradient over
    independent fading draws before each update.
    """

    iters: int
    primal_step: float = 5e-3
    dual_step0: float = 1e-2
    dual_decay: float = 0.9995
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 1
    seed: int = 0
    eval_every: int = 1000
    eval_samples: int = 256
    init_scale: float = 0.1
    init_order_decay: float = 1.0
    init_identity: float = 1.0
    reward_baseline: bool = False
    baseline_decay: float = 0.99

    def __post_init__(self) -> None:
        if self.iters < 0:
            raise ValueError(f"iters must be >= 0, got {self.iters}")
        if self.primal_step < 0:
            raise ValueError("primal_step must be >= 0")
        if self.dual_step0 < 0:
            raise ValueError("dual_step0 must be >= 0")
        if not 0.0 < self.dual_decay <= 1.0:
            raise ValueError(
                f"dual_decay must lie in (0, 1], got {self.dual_decay}"
            )
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.eval_samples < 1:
            raise ValueError("eval_samples must be >= 1")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")


class ExtendedProblem:
    """Reward augmentation for one constrained-allocation variant.

    Bundles the observable map f (a black box to the optimizer), the utility
    u0 acting on the extended reward estimate r, and the constraint slack
    u(r) >= 0 with its Jacobian.  dim is the length of r, constraint_dim the
    length of u(r).
    """

    def __init__(
        self,
        variant: str,
        m: int,
        dim: int,
        constraint_dim: int,
        allocation,
        observe: Callable[[np.ndarray, np.ndarray], np.ndarray],
        node_input: Callable[[np.random.Generator], np.ndarray],
        u0: Callable[[np.ndarray], float],
        grad_u0: Callable[[np.ndarray], np.ndarray],
        u: Callable[[np.ndarray], np.ndarray],
        jac_u: Callable[[np.ndarray], np.ndarray],
        slack_against: Callable[[np.ndarray, np.ndarray], np.ndarray],
        update_input_stats: Callable[[np.ndarray, float], None],
        rate_sum: Callable[[np.ndarray], float],
    ) -> None:
        self.variant = variant
        self.m = m
        self.dim = dim
        self.constraint_dim = constraint_dim
        self.allocation = allocation
        self.observe = observe
        self.node_input = node_input
        self.u0 = u0
        self.grad_u0 = grad_u0
        self.u = u
        self.jac_u = jac_u
        self.slack_against = slack_against
        self.update_input_stats = update_input_stats
        self.rate_sum = rate_sum


def extend_problem(problem: ProblemSpec, m: int) -> ExtendedProblem:
    """Build the extended reward structure for a problem variant.

    sum_rate_budget: f(p, H) = [capacity(p, H); 1^T p] of length m+1,
    u0(r) = sum of the first m entries, one constraint P_max - r[m] >= 0.

    demand_constrained: f(p, H) = capacity(p, H), u0(r) = 1^T r, and m
    componentwise constraints r - xbar >= 0 where xbar tracks the running
    mean of the sampled demand vectors (updated with the dual step size, so
    it settles while the multipliers still move).
    """

    sigma2 = problem.sigma2

    if problem.variant == "sum_rate_budget":

        def observe(p: np.ndarray, H: np.ndarray) -> np.ndarray:
            return np.concatenate([capacity(p, H, sigma2), [float(np.sum(p))]])

        def node_input(rng: np.random.Generator) -> np.ndarray:
            return np.ones(m)

        def u0(r: np.ndarray) -> float:
            return float(np.sum(r[:m]))

        def grad_u0(r: np.ndarray) -> np.ndarray:
            g = np.ones(m + 1)
            g[m] = 0.0
            return g

        p_max = problem.P_max

        def u(r: np.ndarray) -> np.ndarray:
            return np.array([p_max - r[m]])

        def jac_u(r: np.ndarray) -> np.ndarray:
            j = np.zeros((1, m + 1))
            j[0, m] = -1.0
            return j

        def slack_against(f_mean: np.ndarray, x_mean: np.ndarray) -> np.ndarray:
            return np.array([p_max - f_mean[m]])

        def update_input_stats(x_mean: np.ndarray, eps: float) -> None:
            return None

        def rate_sum(f_mean: np.ndarray) -> float:
            return float(np.sum(f_mean[:m]))

        return ExtendedProblem(
            variant=problem.variant,
            m=m,
            dim=m + 1,
            constraint_dim=1,
            allocation=problem.allocation,
            observe=observe,
            node_input=node_input,
            u0=u0,
            grad_u0=grad_u0,
            u=u,
            jac_u=jac_u,
            slack_against=slack_against,
            update_input_stats=update_input_stats,
            rate_sum=rate_sum,
        )

    if problem.variant == "demand_constrained":
        demand_mean = problem.demand_mean
        xbar = np.zeros(m)

        def observe(p: np.ndarray, H: np.ndarray) -> np.ndarray:
            return capacity(p, H, sigma2)

        def node_input(rng: np.random.Generator) -> np.ndarray:
            return sample_demand(m, demand_mean, rng)

        def u0(r: np.ndarray) -> float:
            return float(np.sum(r))

        def grad_u0(r: np.ndarray) -> np.ndarray:
            return np.ones(m)

        def u(r: np.ndarray) -> np.ndarray:
            return r - xbar

        def jac_u(r: np.ndarray) -> np.ndarray:
            return np.eye(m)

        def slack_against(f_mean: np.ndarray, x_mean: np.ndarray) -> np.ndarray:
            return f_mean - x_mean

        def update_input_stats(x_mean: np.ndarray, eps: float) -> None:
            nonlocal xbar
            xbar = xbar + eps * (x_mean - xbar)

        def rate_sum(f_mean: np.ndarray) -> float:
            return float(np.sum(f_mean))

        return ExtendedProblem(
            variant=problem.variant,
            m=m,
            dim=m,
            constraint_dim=m,
            allocation=problem.allocation,
            observe=observe,
            node_input=node_input,
            u0=u0,
            grad_u0=grad_u0,
            u=u,
            jac_u=jac_u,
            slack_against=slack_against,
            update_input_stats=update_input_stats,
            rate_sum=rate_sum,
        )

    raise ValueError(f"unknown problem variant {problem.variant!r}")


def dual_step_sequence(
    dual_step0: float, dual_decay: float, iters: int
) -> np.ndarray:
    """Geometric dual steps eps_k = dual_step0 * dual_decay**k.

    Built by repeated multiplication so eps[k+1] == eps[k] * dual_decay holds
    bit-exactly, not just up to pow() rounding.
    """
    eps = np.empty(iters)
    val = dual_step0
    for k in range(iters):
        eps[k] = val
        val = val * dual_decay
    return eps


class Adam:
    """ADAM rescaling for the tap ascent direction.

    Only the taps go through ADAM; the dual variables follow the plain
    geometric schedule.  step() consumes a gradient and returns the scaled
    increment (ascent convention: add the result to the parameters).
    """

    def __init__(
        self,
        size: int,
        step_size: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class DualState:
    """Reward estimate and multipliers carried across iterations."""

    r: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, dim: int, constraint_dim: int) -> "DualState":
        return cls(
            r=np.zeros(dim), lam=np.zeros(dim), mu=np.zeros(constraint_dim)
        )


@dataclass
class EvalRecord:
    """Held-out evaluation snapshot taken during training."""

    iteration: int
    objective: float
    slack: np.ndarray
    lambda_norm: float
    mu_norm: float
    mu_min: float
    mean_sampled_sum_rate: float
    mean_thresholded_sum_rate: float


@dataclass
class TrainReport:
    records: List[EvalRecord] = field(default_factory=list)
    checkpoint_path: Optional[str] = None


def primal_dual_step(
    state: DualState,
    taps: FilterTaps,
    batch: List,
    ext: ExtendedProblem,
    config: TrainConfig,
    opt: Adam,
    policy_rng: np.random.Generator,
    eps_k: float,
    iteration: int,
    baseline: Optional[List[float]] = None,
) -> FilterTaps:
    """One saddle-point update; mutates state and returns the new taps.

    batch holds (H, x) pairs.  Every update below reads the snapshot of
    (r, lam, mu) taken at entry, so the order of the block updates cannot
    leak information within the iteration.
    """

    r0 = state.r.copy()
    lam0 = state.lam.copy()
    mu0 = state.mu.copy()

    grad_acc = np.zeros(num_params(taps.config))
    f_acc = np.zeros(ext.dim)
    x_acc = np.zeros(ext.m)
    weight_acc = 0.0
    try:
        for H, x in batch:
            probs, tape = forward(taps, H, x)
            draw = sample(probs, ext.allocation, policy_rng)
            f = ext.observe(draw.allocation, H)
            if not np.all(np.isfinite(f)):
                raise FloatingPointError("non-finite reward observation")
            weight = float(f @ lam0)
            if baseline is not None:
                weight_used = weight - baseline[0]
            else:
                weight_used = weight
            grads = backward(
                tape, taps, H, weight_used * grad_log_prob(draw, probs)
            )
            grad_acc += grads.flat()
            f_acc += f
            x_acc += x
            weight_acc += weight
    except FloatingPointError as exc:
        raise FloatingPointError(f"{exc} (iteration {iteration})") from None
    inv = 1.0 / len(batch)
    f_mean = f_acc * inv
    grad_mean = grad_acc * inv
    for name, arr in (
        ("reward observation", f_mean),
        ("tap gradient", grad_mean),
    ):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                f"non-finite {name} at iteration {iteration}"
            )

    state.r = r0 + eps_k * (ext.grad_u0(r0) + ext.jac_u(r0).T @ mu0 - lam0)
    state.mu = np.maximum(mu0 - eps_k * ext.u(r0), 0.0)
    state.lam = lam0 - eps_k * (f_mean - r0)
    new_taps = FilterTaps.from_flat(
        taps.config, taps.flat() + opt.step(grad_mean)
    )
    ext.update_input_stats(x_acc * inv, eps_k)
    if baseline is not None:
        d = config.baseline_decay
        baseline[0] = d * baseline[0] + (1.0 - d) * weight_acc * inv

    for name, arr in (
        ("reward estimate", state.r),
        ("lambda", state.lam),
        ("mu", state.mu),
        ("taps", new_taps.flat()),
    ):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                f"non-finite {name} at iteration {iteration}"
            )
    return new_taps


def evaluate_policy(
    taps: FilterTaps,
    ext: ExtendedProblem,
    fading: np.ndarray,
    inputs: np.ndarray,
    x_mean: np.ndarray,
    rng: np.random.Generator,
) -> dict:
    """Mean extended reward of the sampled and thresholded policies.

    fading has shape (S, m, m) and inputs (S, m); both stay fixed across all
    evaluations of one run so the records are comparable.
    """

    S = fading.shape[0]
    f_sampled = np.zeros(ext.dim)
    f_thresh = np.zeros(ext.dim)
    for j in range(S):
        H = fading[j]
        probs, _ = forward(taps, H, inputs[j])
        draw = sample(probs, ext.allocation, rng)
        f_sampled += ext.observe(draw.allocation, H)
        f_thresh += ext.observe(threshold(probs, ext.allocation), H)
    f_sampled /= S
    f_thresh /= S
    return {
        "f_sampled": f_sampled,
        "objective": ext.u0(f_sampled),
        "slack": ext.slack_against(f_sampled, x_mean),
        "sampled_sum_rate": ext.rate_sum(f_sampled),
        "thresholded_sum_rate": ext.rate_sum(f_thresh),
    }


def train(
    network: NetworkModel,
    problem: ProblemSpec,
    gnn_config: GnnConfig,
    config: TrainConfig,
) -> tuple[FilterTaps, TrainReport]:
    """Run the primal-dual loop and return final taps plus the eval trace.

    Randomness is split into independent labeled streams keyed by
    config.seed: tap init, training fading, training policy draws, demand
    draws, and a held-out evaluation set (fading, inputs, and per-record
    policy draws) that never advances the training streams.
    """

    ext = extend_problem(problem, network.m)

    init_rng = stream(config.seed, STREAM_INIT)
    fading_rng = stream(config.seed, STREAM_FADING_TRAIN)
    policy_rng = stream(config.seed, STREAM_POLICY, 0)
    demand_rng = stream(config.seed, STREAM_DEMAND, 0)

    taps = init_taps(
        gnn_config,
        init_rng,
        scale=config.init_scale,
        order_decay=config.init_order_decay,
        identity_gain=config.init_identity,
    )

    eval_fading_rng = stream(config.seed, STREAM_FADING_EVAL)
    eval_fading = np.stack(
        [
            sample_fading(network, eval_fading_rng, problem.rayleigh_scale)
            for _ in range(config.eval_samples)
        ]
    )
    if problem.variant == "demand_constrained":
        eval_demand_rng = stream(config.seed, STREAM_DEMAND, 1)
        eval_inputs = np.stack(
            [
                sample_demand(network.m, problem.demand_mean, eval_demand_rng)
                for _ in range(config.eval_samples)
            ]
        )
    else:
        eval_inputs = np.ones((config.eval_samples, network.m))
    eval_x_mean = eval_inputs.mean(axis=0)

    state = DualState.zeros(ext.dim, ext.constraint_dim)
    if config.iters > 0:
        # Cold duals (r = lam = 0) put the saddle dynamics on an undamped
        # orbit of amplitude |lam*| that the decaying schedule freezes at an
        # arbitrary phase, so the score weight flips sign for thousands of
        # iterations and the policy never moves.  Warm-start r at the reward
        # of the untrained policy and lam at its stationary structure
        # grad_u0; mu keeps the pinned zero init.
        probe = np.zeros(ext.dim)
        for _ in range(config.batch):
            H = sample_fading(network, fading_rng, problem.rayleigh_scale)
            x = ext.node_input(demand_rng)
            probs, _ = forward(taps, H, x)
            draw = sample(probs, ext.allocation, policy_rng)
            probe += ext.observe(draw.allocation, H)
        state.r = probe / config.batch
        state.lam = ext.grad_u0(state.r)
    opt = Adam(
        num_params(gnn_config),
        config.primal_step,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )
    baseline = [0.0] if config.reward_baseline else None

    report = TrainReport()
    eval_index = 0
    dual_steps = dual_step_sequence(
        config.dual_step0, config.dual_decay, config.iters
    )
    for k in range(config.iters):
        eps_k = dual_steps[k]
        batch = []
        for _ in range(config.batch):
            H = sample_fading(network, fading_rng, problem.rayleigh_scale)
            batch.append((H, ext.node_input(demand_rng)))
        taps = primal_dual_step(
            state, taps, batch, ext, config, opt, policy_rng, eps_k, k,
            baseline=baseline,
        )
        if (k + 1) % config.eval_every == 0 or k + 1 == config.iters:
            eval_rng = stream(config.seed, STREAM_POLICY, 1, eval_index)
            eval_index += 1
            stats = evaluate_policy(
                taps, ext, eval_fading, eval_inputs, eval_x_mean, eval_rng
            )
            report.records.append(
                EvalRecord(
                    iteration=k + 1,
                    objective=stats["objective"],
                    slack=stats["slack"],
                    lambda_norm=float(np.linalg.norm(state.lam)),
                    mu_norm=float(np.linalg.norm(state.mu)),
                    mu_min=float(np.min(state.mu)) if state.mu.size else 0.0,
                    mean_sampled_sum_rate=stats["sampled_sum_rate"],
                    mean_thresholded_sum_rate=stats["thresholded_sum_rate"],
                )
            )
    return taps, report
