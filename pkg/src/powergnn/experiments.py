"""Config-driven experiment runs: training, evaluation, transference, checks.

A run is described by one YAML file with five sections (network, problem,
regnn, train, output).  Loading is strict: unknown keys and malformed values
are collected into a ConfigError that names every offending field, so a
typo in a sweep dies loudly instead of silently using a default.

Every CSV written here starts with a header row followed by a comment line
carrying the resolved master seed and a hash of the resolved configuration;
bodies are reproducible byte for byte when seed and hash agree.  Floats are
serialized with 17 significant digits so parsing them back recovers the
exact double.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from .defs import (
    EQUIVARIANCE_ATOL,
    FD_STEP,
    GRAD_FD_RTOL,
    STREAM_BASELINE,
    STREAM_DEMAND,
    STREAM_FADING_EVAL,
    STREAM_POLICY,
    STREAM_TOPOLOGY,
    format_float,
    stream,
)
from .gnn import (
    FilterTaps,
    GnnConfig,
    backward,
    forward,
    init_taps,
    load_checkpoint,
    save_checkpoint,
    shift_scale_for,
)
from .graphs import permute, shift_stack
from .policy import AllocationSpec, sample, threshold
from .trainer import TrainConfig, extend_problem, train
from .wireless import (
    NetworkModel,
    ProblemSpec,
    capacity,
    equal_power,
    generate_adhoc,
    generate_multicell,
    load_model,
    random_selection,
    sample_demand,
    sample_fading,
    save_model,
    wmmse,
)

TOPOLOGY_KINDS = ("adhoc", "multicell")


class ConfigError(ValueError):
    """Invalid experiment configuration; carries one message per field."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class NetworkSection:
    m: int
    topology: str = "adhoc"
    n: Optional[int] = None
    density_factor: float = 1.0
    size_ref: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True)
class ProblemSection:
    variant: str = "sum_rate_budget"
    sigma2: float = 1.0
    P_max: float = 1.0
    p0: float = 1.0
    demand_mean: float = 0.05
    rayleigh_scale: Optional[float] = None


@dataclass(frozen=True)
class RegnnSection:
    L: int = 8
    F: tuple = (1,) * 9
    K: tuple = (5,) * 8
    hidden: str = "relu"
    shift_scale: object = "auto"


@dataclass(frozen=True)
class OutputSection:
    directory: str = "runs/out"
    eval_every: int = 1000
    eval_samples: int = 256


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkSection
    problem: ProblemSection
    regnn: RegnnSection
    train: TrainConfig
    output: OutputSection


class _Section:
    """Pop-and-validate view of one mapping section of the config file."""

    def __init__(self, name: str, data: dict, problems: List[str]):
        self.name = name
        self.data = dict(data)
        self.problems = problems

    def take(self, key, default=None, required=False, kind=None, check=None):
        if key not in self.data:
            if required:
                self.problems.append(f"{self.name}.{key}: required key missing")
            return default
        value = self.data.pop(key)
        if kind is not None:
            try:
                if kind is int:
                    if isinstance(value, bool) or value != int(value):
                        raise ValueError
                    value = int(value)
                elif kind is float:
                    if isinstance(value, bool):
                        raise ValueError
                    value = float(value)
                elif kind is bool:
                    if not isinstance(value, bool):
                        raise ValueError
                else:
                    value = kind(value)
            except (TypeError, ValueError):
                self.problems.append(
                    f"{self.name}.{key}: expected {kind.__name__}, got {value!r}"
                )
                return default
        if check is not None:
            message = check(value)
            if message:
                self.problems.append(f"{self.name}.{key}: {message}")
                return default
        return value

    def finish(self):
        for key in self.data:
            self.problems.append(f"{self.name}.{key}: unknown key")


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be nonnegative"


def config_from_mapping(doc: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a parsed mapping."""
    problems: List[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    known = {"network", "problem", "regnn", "train", "output"}
    for key in doc:
        if key not in known:
            problems.append(f"{key}: unknown section")
    shape = [f"{key}: expected a mapping" for key in doc
             if key in known and not isinstance(doc[key], dict)]
    if shape:
        raise ConfigError(problems + shape)

    net = _Section("network", doc.get("network", {}), problems)
    m = net.take("m", required=True, kind=int, check=_positive, default=2)
    topology = net.take(
        "topology", default="adhoc", kind=str,
        check=lambda v: None if v in TOPOLOGY_KINDS else
        f"must be one of {', '.join(TOPOLOGY_KINDS)}")
    n = net.take("n", default=None, kind=int, check=_positive)
    density = net.take("density_factor", default=1.0, kind=float, check=_positive)
    size_ref = net.take("size_ref", default=None, kind=int, check=_positive)
    seed = net.take("seed", default=0, kind=int, check=_nonneg)
    net.finish()
    if topology == "multicell" and n is None:
        problems.append("network.n: required for multicell topology")
    if topology == "adhoc" and n is not None and n != m:
        problems.append("network.n: ad-hoc networks are paired, n must equal m")

    prob = _Section("problem", doc.get("problem", {}), problems)
    variant = prob.take(
        "variant", default="sum_rate_budget", kind=str,
        check=lambda v: None if v in ("sum_rate_budget", "demand_constrained")
        else "must be sum_rate_budget or demand_constrained")
    sigma2 = prob.take("sigma2", default=1.0, kind=float, check=_positive)
    P_max = prob.take("P_max", default=float(m) / 2.0, kind=float, check=_positive)
    p0 = prob.take("p0", default=1.0, kind=float, check=_positive)
    demand_mean = prob.take("demand_mean", default=0.05, kind=float, check=_positive)
    rayleigh = prob.take("rayleigh_scale", default=None, kind=float, check=_positive)
    prob.finish()

    reg = _Section("regnn", doc.get("regnn", {}), problems)
    L = reg.take("L", default=8, kind=int, check=_positive)
    F_raw = reg.take("F", default=None)
    K_raw = reg.take("K", default=None)
    hidden = reg.take("hidden", default="relu", kind=str)
    shift_scale = reg.take("shift_scale", default="auto")
    reg.finish()
    if F_raw is None:
        F = (1,) * (L + 1)
    elif isinstance(F_raw, int) and not isinstance(F_raw, bool):
        F = (1,) + (F_raw,) * (L - 1) + (1,)
    elif isinstance(F_raw, list) and all(isinstance(v, int) for v in F_raw):
        F = tuple(F_raw)
    else:
        problems.append("regnn.F: expected an int or a list of ints")
        F = (1,) * (L + 1)
    if K_raw is None:
        K = (5,) * L
    elif isinstance(K_raw, int) and not isinstance(K_raw, bool):
        K = (K_raw,) * L
    elif isinstance(K_raw, list) and all(isinstance(v, int) for v in K_raw):
        K = tuple(K_raw)
    else:
        problems.append("regnn.K: expected an int or a list of ints")
        K = (5,) * L
    if not (shift_scale == "auto" or isinstance(shift_scale, (int, float))):
        problems.append("regnn.shift_scale: expected 'auto' or a positive number")
        shift_scale = "auto"
    if isinstance(shift_scale, (int, float)) and not isinstance(shift_scale, bool):
        if not shift_scale > 0:
            problems.append("regnn.shift_scale: must be positive")
            shift_scale = "auto"

    trn = _Section("train", doc.get("train", {}), problems)
    train_kwargs = dict(
        iters=trn.take("iters", default=1000, kind=int, check=_nonneg),
        primal_step=trn.take("primal_step", default=5e-3, kind=float, check=_positive),
        dual_step0=trn.take("dual_step0", default=1e-2, kind=float, check=_positive),
        dual_decay=trn.take("dual_decay", default=0.9995, kind=float),
        adam_beta1=trn.take("adam_beta1", default=0.9, kind=float),
        adam_beta2=trn.take("adam_beta2", default=0.999, kind=float),
        adam_eps=trn.take("adam_eps", default=1e-8, kind=float, check=_positive),
        batch=trn.take("batch", default=1, kind=int, check=_positive),
        init_scale=trn.take("init_scale", default=0.1, kind=float, check=_positive),
        init_order_decay=trn.take("init_order_decay", default=1.0, kind=float,
                                  check=_positive),
        init_identity=trn.take("init_identity", default=1.0, kind=float),
        reward_baseline=trn.take("reward_baseline", default=False, kind=bool),
        baseline_decay=trn.take("baseline_decay", default=0.99, kind=float),
    )
    train_seed = trn.take("seed", default=None, kind=int, check=_nonneg)
    train_kwargs["seed"] = seed if train_seed is None else train_seed
    trn.finish()

    out = _Section("output", doc.get("output", {}), problems)
    directory = out.take("directory", default="runs/out", kind=str)
    eval_every = out.take("eval_every", default=1000, kind=int, check=_positive)
    eval_samples = out.take("eval_samples", default=256, kind=int, check=_positive)
    out.finish()

    if not problems:
        try:
            train_cfg = TrainConfig(
                eval_every=eval_every, eval_samples=eval_samples, **train_kwargs
            )
        except ValueError as exc:
            problems.append(f"train: {exc}")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        network=NetworkSection(m=m, topology=topology, n=n, density_factor=density,
                               size_ref=size_ref, seed=seed),
        problem=ProblemSection(variant=variant, sigma2=sigma2, P_max=P_max, p0=p0,
                               demand_mean=demand_mean, rayleigh_scale=rayleigh),
        regnn=RegnnSection(L=L, F=F, K=K, hidden=hidden, shift_scale=shift_scale),
        train=train_cfg,
        output=OutputSection(directory=directory, eval_every=eval_every,
                             eval_samples=eval_samples),
    )


def load_config(path, seed_override: Optional[int] = None,
                out_override: Optional[str] = None,
                network_seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a config file, with optional CLI overrides.

    seed_override replaces the run seed (train.seed), leaving the topology
    untouched so a seed sweep retrains the same fixed network;
    network_seed_override replaces the topology seed instead.
    """
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"config parse error: {exc}"]) from None
    if doc is None:
        doc = {}
    if seed_override is not None:
        doc.setdefault("train", {})
        if isinstance(doc["train"], dict):
            doc["train"]["seed"] = seed_override
    if network_seed_override is not None:
        doc.setdefault("network", {})
        if isinstance(doc["network"], dict):
            doc["network"]["seed"] = network_seed_override
    if out_override is not None:
        doc.setdefault("output", {})
        if isinstance(doc["output"], dict):
            doc["output"]["directory"] = out_override
    return config_from_mapping(doc)


def resolved_mapping(config: ExperimentConfig, gnn: GnnConfig) -> dict:
    """Plain nested dict of the fully resolved run parameters."""
    net, prb, out = config.network, config.problem, config.output
    t = config.train
    return {
        "network": {
            "m": net.m, "topology": net.topology, "n": net.n,
            "density_factor": net.density_factor,
            "size_ref": net.size_ref if net.size_ref is not None else net.m,
            "seed": net.seed,
        },
        "problem": {
            "variant": prb.variant, "sigma2": prb.sigma2, "P_max": prb.P_max,
            "p0": prb.p0, "demand_mean": prb.demand_mean,
            "rayleigh_scale": prb.rayleigh_scale,
        },
        "regnn": {
            "L": gnn.layers, "F": list(gnn.features),
            "K": list(gnn.tap_lengths), "hidden": gnn.hidden_nonlinearity,
            "shift_scale": gnn.shift_scale,
        },
        "train": {
            "iters": t.iters, "primal_step": t.primal_step,
            "dual_step0": t.dual_step0, "dual_decay": t.dual_decay,
            "adam_beta1": t.adam_beta1, "adam_beta2": t.adam_beta2,
            "adam_eps": t.adam_eps, "batch": t.batch,
            "init_scale": t.init_scale, "init_order_decay": t.init_order_decay,
            "init_identity": t.init_identity,
            "reward_baseline": t.reward_baseline,
            "baseline_decay": t.baseline_decay,
            "seed": t.seed,
        },
        "output": {
            "directory": out.directory, "eval_every": out.eval_every,
            "eval_samples": out.eval_samples,
        },
    }


def config_hash(mapping: dict) -> str:
    """Order-independent 12-hex-digit digest of a resolved run mapping.

    The output directory is excluded on purpose: two runs of the same
    experiment into different folders must agree on the hash so their CSV
    bodies can be compared byte for byte.
    """
    mapping = {k: dict(v) for k, v in mapping.items()}
    mapping.get("output", {}).pop("directory", None)
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_network(config: ExperimentConfig) -> NetworkModel:
    net = config.network
    rng = stream(net.seed, STREAM_TOPOLOGY)
    if net.topology == "multicell":
        return generate_multicell(net.m, net.n, rng,
                                  density_factor=net.density_factor,
                                  size_ref=net.size_ref)
    return generate_adhoc(net.m, rng, density_factor=net.density_factor,
                          size_ref=net.size_ref)


def build_problem(config: ExperimentConfig) -> ProblemSpec:
    p = config.problem
    kwargs = dict(
        sigma2=p.sigma2,
        P_max=p.P_max,
        allocation=AllocationSpec(p0=p.p0),
        variant=p.variant,
        demand_mean=p.demand_mean,
    )
    if p.rayleigh_scale is not None:
        kwargs["rayleigh_scale"] = p.rayleigh_scale
    return ProblemSpec(**kwargs)


def build_gnn_config(config: ExperimentConfig, network: NetworkModel) -> GnnConfig:
    scale = config.regnn.shift_scale
    if scale == "auto":
        scale = shift_scale_for(network.pathloss)
    return GnnConfig(
        layers=config.regnn.L,
        features=config.regnn.F,
        tap_lengths=config.regnn.K,
        hidden_nonlinearity=config.regnn.hidden,
        shift_scale=float(scale),
    )


# -- CSV plumbing ------------------------------------------------------------

def _write_csv(path, columns: Sequence[str], rows, seed: int, digest: str):
    """Header + provenance comment + 17-significant-digit body."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    buf.write(f"# seed={seed} config={digest}\n")
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(format_float(float(v)))
        buf.write(",".join(cells) + "\n")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _say(quiet: bool, text: str):
    if not quiet:
        print(text)


# -- commands ----------------------------------------------------------------

def cmd_gen_network(config: ExperimentConfig, quiet: bool = False) -> str:
    """Generate the topology described by the network section and save it."""
    os.makedirs(config.output.directory, exist_ok=True)
    model = build_network(config)
    path = os.path.join(config.output.directory, "network.json")
    save_model(model, path)
    _say(quiet, f"wrote {path} (m={model.m}, topology={config.network.topology})")
    return path


def cmd_train(config: ExperimentConfig, quiet: bool = False) -> dict:
    """Train per config; write checkpoint, training CSV, and run header."""
    network = build_network(config)
    problem = build_problem(config)
    gnn_config = build_gnn_config(config, network)
    mapping = resolved_mapping(config, gnn_config)
    digest = config_hash(mapping)
    outdir = config.output.directory
    os.makedirs(outdir, exist_ok=True)

    _say(quiet, f"training m={network.m} {config.problem.variant} "
                f"iters={config.train.iters} seed={config.train.seed} "
                f"config={digest}")
    taps, report = train(network, problem, gnn_config, config.train)

    ckpt_path = os.path.join(outdir, "checkpoint.json")
    save_checkpoint(taps, ckpt_path)

    slack_dim = len(report.records[0].slack) if report.records else (
        1 if config.problem.variant == "sum_rate_budget" else network.m)
    columns = ["iteration", "objective", "mean_sampled_sum_rate",
               "mean_thresholded_sum_rate", "lambda_norm", "mu_norm",
               "mu_min"] + [f"slack_{j}" for j in range(slack_dim)]
    rows = [
        [r.iteration, r.objective, r.mean_sampled_sum_rate,
         r.mean_thresholded_sum_rate, r.lambda_norm, r.mu_norm, r.mu_min,
         *r.slack]
        for r in report.records
    ]
    csv_path = os.path.join(outdir, "training.csv")
    _write_csv(csv_path, columns, rows, config.train.seed, digest)

    header_path = os.path.join(outdir, "run_header.yaml")
    with open(header_path, "w") as fh:
        yaml.safe_dump({"config_hash": digest, "seed": config.train.seed,
                        "resolved": mapping}, fh, sort_keys=True)
    _say(quiet, f"wrote {ckpt_path}, {csv_path}, {header_path}")
    if report.records:
        last = report.records[-1]
        _say(quiet, f"final sampled sum-rate {last.mean_sampled_sum_rate:.4f} "
                    f"(thresholded {last.mean_thresholded_sum_rate:.4f})")
    return {"checkpoint": ckpt_path, "csv": csv_path, "header": header_path,
            "report": report, "taps": taps}


def _policy_rows(taps, network, problem, samples, seed, extra_label=0):
    """Per-draw sum-rates of policy and baselines on one shared fading set.

    All baselines respect the same average power budget the policy trains
    under: equal power spreads P_max/m, random selection activates
    P_max/p0 users at p0, and WMMSE runs with per-user cap P_max/m.
    Letting WMMSE spend p0 on every user would give the one baseline a
    power budget nobody else has, which is not a like-for-like comparison.
    """
    m = network.m
    ext = extend_problem(problem, m)
    fading_rng = stream(seed, STREAM_FADING_EVAL, extra_label)
    demand_rng = stream(seed, STREAM_DEMAND, 1, extra_label)
    policy_rng = stream(seed, STREAM_POLICY, 1, extra_label)
    base_rng = stream(seed, STREAM_BASELINE, extra_label)
    s2, p0, P_max = problem.sigma2, problem.allocation.p0, problem.P_max
    rows = []
    for j in range(samples):
        H = sample_fading(network, fading_rng, problem.rayleigh_scale)
        x = ext.node_input(demand_rng)
        row = {}
        if taps is not None:
            probs, _ = forward(taps, H, x)
            draw = sample(probs, ext.allocation, policy_rng)
            row["regnn_sampled"] = capacity(draw.allocation, H, s2).sum()
            row["regnn_thresholded"] = capacity(
                threshold(probs, ext.allocation), H, s2).sum()
        row["wmmse"] = capacity(wmmse(H, s2, P_max / m).p, H, s2).sum()
        row["equal"] = capacity(equal_power(m, P_max), H, s2).sum()
        row["random"] = capacity(
            random_selection(m, P_max, p0, base_rng), H, s2).sum()
        rows.append(row)
    return rows


def cmd_eval(config: ExperimentConfig, checkpoint_path: str,
             network_path: Optional[str] = None, samples: Optional[int] = None,
             quiet: bool = False) -> str:
    """Paired per-draw comparison of a trained policy against baselines."""
    taps = load_checkpoint(checkpoint_path)
    network = load_model(network_path) if network_path else build_network(config)
    problem = build_problem(config)
    samples = config.output.eval_samples if samples is None else samples
    mapping = resolved_mapping(config, taps.config)
    digest = config_hash(mapping)
    rows = _policy_rows(taps, network, problem, samples, config.train.seed)
    columns = ["draw", "regnn_sampled", "regnn_thresholded",
               "wmmse", "equal", "random"]
    table = [[j] + [rows[j][c] for c in columns[1:]] for j in range(len(rows))]
    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "eval.csv")
    _write_csv(path, columns, table, config.train.seed, digest)
    if rows:
        means = {c: float(np.mean([r[c] for r in rows])) for c in columns[1:]}
        _say(quiet, "mean sum-rates: " + "  ".join(
            f"{c}={v:.4f}" for c, v in means.items()))
    _say(quiet, f"wrote {path}")
    return path


def cmd_baseline(config: ExperimentConfig, network_path: Optional[str] = None,
                 samples: Optional[int] = None, quiet: bool = False) -> str:
    """Baselines only (WMMSE, equal, random) on the shared fading set."""
    network = load_model(network_path) if network_path else build_network(config)
    problem = build_problem(config)
    samples = config.output.eval_samples if samples is None else samples
    mapping = resolved_mapping(
        config, GnnConfig(layers=1, features=(1, 1), tap_lengths=(1,)))
    digest = config_hash(mapping)
    rows = _policy_rows(None, network, problem, samples, config.train.seed)
    columns = ["draw", "wmmse", "equal", "random"]
    table = [[j] + [rows[j][c] for c in columns[1:]] for j in range(len(rows))]
    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "baseline.csv")
    _write_csv(path, columns, table, config.train.seed, digest)
    if rows:
        means = {c: float(np.mean([r[c] for r in rows])) for c in columns[1:]}
        _say(quiet, "mean sum-rates: " + "  ".join(
            f"{c}={v:.4f}" for c, v in means.items()))
    _say(quiet, f"wrote {path}")
    return path


PERCENTILES = (10, 50, 90)


def cmd_transfer(config: ExperimentConfig, checkpoint_path: str,
                 sizes: Sequence[int], networks_per_size: int,
                 samples: int, quiet: bool = False) -> str:
    """Evaluate a trained policy on fresh larger networks at fixed density.

    Topologies are drawn at each target size with the training size as the
    density reference, so the node density (and with it the fitted operator
    scale) matches the training regime.
    """
    taps = load_checkpoint(checkpoint_path)
    problem = build_problem(config)
    size_ref = config.network.size_ref or config.network.m
    mapping = resolved_mapping(config, taps.config)
    digest = config_hash(mapping)
    seed = config.network.seed
    policies = ["regnn_sampled", "regnn_thresholded", "wmmse", "equal", "random"]
    table = []
    for size in sizes:
        per_policy: Dict[str, List[float]] = {c: [] for c in policies}
        for k in range(networks_per_size):
            rng = stream(seed, STREAM_TOPOLOGY, size, k)
            network = generate_adhoc(size, rng,
                                     density_factor=config.network.density_factor,
                                     size_ref=size_ref)
            scaled = ProblemSpec(
                sigma2=problem.sigma2, P_max=size * problem.allocation.p0 / 2.0,
                allocation=problem.allocation, variant=problem.variant,
                demand_mean=problem.demand_mean,
                rayleigh_scale=problem.rayleigh_scale)
            rows = _policy_rows(taps, network, scaled, samples, seed,
                                extra_label=size * 100000 + k)
            for c in policies:
                per_policy[c].extend(r[c] for r in rows)
        for c in policies:
            vals = np.asarray(per_policy[c])
            if vals.size:
                entry = [size, c, vals.mean()] + [
                    np.percentile(vals, q) for q in PERCENTILES]
                table.append(entry)
                _say(quiet, f"m'={size} {c}: mean={vals.mean():.4f}")
    columns = ["size", "policy", "mean"] + [f"p{q}" for q in PERCENTILES]
    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "transfer.csv")
    _write_csv(path, columns, table, seed, digest)
    _say(quiet, f"wrote {path}")
    return path


# -- oracle-check suites -----------------------------------------------------

def _capacity_reference(p, H, sigma2):
    """Scalar-loop SINR computation, independent of the vectorized path.

    Convention: H[j, i] is the gain from transmitter j into receiver i, so
    receiver i hears sigma2 plus the squared gains down column i.
    """
    m = len(p)
    out = np.zeros(m)
    for i in range(m):
        interference = sigma2
        for j in range(m):
            if j != i:
                interference += (H[j, i] ** 2) * p[j]
        out[i] = np.log(1.0 + (H[i, i] ** 2) * p[i] / interference)
    return out


def oracle_check(m: int = 6, instances: int = 20, seed: int = 0,
                 sign_flip: bool = False, quiet: bool = False) -> dict:
    """Run the numeric oracle suites on small random instances.

    sign_flip negates the computed tap gradient before comparison; it is a
    wired-in fault used to prove the gradient suite can actually fail.
    Returns a dict with per-suite worst residuals and a list of failures.
    """
    if m > 10:
        raise ValueError("oracle-check instances are capped at m <= 10")
    failures: List[str] = []
    worst = {"capacity": 0.0, "filter_power": 0.0, "gradient": 0.0,
             "equivariance": 0.0}

    for i in range(instances):
        rng = stream(seed, 900, i)
        mm = int(rng.integers(2, m + 1))
        H = rng.uniform(0, 1.0 / mm, size=(mm, mm))
        p = rng.uniform(0, 2.0, size=mm)
        s2 = float(rng.uniform(0.05, 2.0))
        got = capacity(p, H, s2)
        want = _capacity_reference(p, H, s2)
        resid = float(np.max(np.abs(got - want)))
        worst["capacity"] = max(worst["capacity"], resid)
        if resid > 1e-12:
            failures.append(f"capacity: instance seed ({seed},900,{i}) "
                            f"residual {resid:.3e} > 1e-12")

        z = rng.normal(size=(mm, 1))
        K = int(rng.integers(1, 6))
        stackd = shift_stack(H, z, K)
        Hp = np.eye(mm)
        resid = 0.0
        for k in range(K):
            resid = max(resid, float(np.max(np.abs(stackd[k] - Hp @ z))))
            Hp = H @ Hp
        worst["filter_power"] = max(worst["filter_power"], resid)
        if resid > 1e-10:
            failures.append(f"filter_power: instance seed ({seed},900,{i}) "
                            f"residual {resid:.3e} > 1e-10")

    for i in range(instances):
        rng = stream(seed, 901, i)
        mm = int(rng.integers(2, min(m, 6) + 1))
        layers = int(rng.integers(1, 4))
        config = GnnConfig.uniform(layers, width=int(rng.integers(1, 3)),
                                   tap_length=int(rng.integers(1, 4)))
        taps = init_taps(config, rng, scale=0.3)
        H = rng.uniform(0, 1.0 / mm, size=(mm, mm))
        x = rng.normal(size=mm)
        g_out = rng.normal(size=mm)
        _, tape = forward(taps, H, x)
        grad = backward(tape, taps, H, g_out).flat()
        if sign_flip:
            grad = -grad
        flat0 = taps.flat()
        fd = np.zeros_like(flat0)
        for t in range(flat0.size):
            for s, box in ((FD_STEP, 1.0), (-FD_STEP, -1.0)):
                flat = flat0.copy()
                flat[t] += s
                probs, _ = forward(FilterTaps.from_flat(config, flat), H, x)
                fd[t] += box * float(g_out @ probs)
        fd /= 2.0 * FD_STEP
        scale = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-30)
        rel = np.abs(grad - fd) / scale
        rel[np.abs(grad - fd) <= 1e-10] = 0.0
        resid = float(rel.max())
        worst["gradient"] = max(worst["gradient"], resid)
        if resid > GRAD_FD_RTOL:
            failures.append(f"gradient: instance seed ({seed},901,{i}) "
                            f"relative error {resid:.3e} > {GRAD_FD_RTOL:g}")

    for i in range(instances):
        rng = stream(seed, 902, i)
        mm = int(rng.integers(2, m + 1))
        layers = int(rng.integers(1, 5))
        config = GnnConfig.uniform(layers, width=int(rng.integers(1, 4)),
                                   tap_length=int(rng.integers(1, 6)))
        taps = init_taps(config, rng, scale=0.2)
        H = rng.uniform(0, 1.0 / mm, size=(mm, mm))
        x = rng.normal(size=mm)
        perm = rng.permutation(mm)
        Hp, xp = permute(H, x, perm)
        probs, _ = forward(taps, H, x)
        probs_p, _ = forward(taps, Hp, xp)
        resid = float(np.max(np.abs(probs_p - probs[perm])))
        worst["equivariance"] = max(worst["equivariance"], resid)
        if resid > EQUIVARIANCE_ATOL:
            failures.append(f"equivariance: instance seed ({seed},902,{i}) "
                            f"residual {resid:.3e} > {EQUIVARIANCE_ATOL:g}")

    for suite in ("capacity", "filter_power", "gradient", "equivariance"):
        _say(quiet, f"{suite}: worst residual {worst[suite]:.3e} "
                    f"({'FAIL' if any(f.startswith(suite) for f in failures) else 'ok'})")
    for f in failures:
        print(f)
    return {"worst": worst, "failures": failures}
