"""Layered graph-filter network with exact reverse-mode tap gradients.

Each layer applies a bank of polynomial graph filters to the previous
layer's features, sums the filtered features per output channel, and applies
a pointwise nonlinearity.  Hidden layers use the configured activation; the
final layer is squashed with a sigmoid so the output lives in (0, 1)^m and
can parameterize a transmit-probability vector.

There are no bias terms: an all-zero input produces all-zero hidden signals
and a constant 0.5 output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .defs import format_float
from .graphs import shift_stack

HIDDEN_NONLINEARITIES = ("relu", "abs", "sigmoid")
OUTPUT_NONLINEARITIES = ("sigmoid",)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GnnConfig:
    """Architecture: layer count, per-layer feature widths and filter lengths.

    `features` lists F_0..F_L (input and output widths must be 1);
    `tap_lengths` lists K_1..K_L.

    `shift_scale` multiplies the shift operator before filtering.  Filters in
    c*H and filters in H span the same function space (rescale order-k taps
    by c^k), so this changes no expressible policy; it only conditions the
    parameterization.  Channel matrices built from inverse-power path loss
    have entries far below one, and useful filters in raw H would need tap
    magnitudes in the hundreds, which first-order optimizers starting near
    zero cannot reach in any reasonable number of steps.  Scaling the
    operator so its diagonal is order one moves those filters next to the
    initialization.  Fitted by shift_scale_for() from a topology's path-loss
    matrix.
    """

    layers: int
    features: tuple
    tap_lengths: tuple
    hidden_nonlinearity: str = "relu"
    output_nonlinearity: str = "sigmoid"
    shift_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(int(f) for f in self.features))
        object.__setattr__(self, "tap_lengths", tuple(int(k) for k in self.tap_lengths))
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if len(self.features) != self.layers + 1:
            raise ValueError(
                f"features must list F_0..F_L ({self.layers + 1} values), "
                f"got {len(self.features)}"
            )
        if len(self.tap_lengths) != self.layers:
            raise ValueError(
                f"tap_lengths must list K_1..K_L ({self.layers} values), "
                f"got {len(self.tap_lengths)}"
            )
        if self.features[0] != 1 or self.features[-1] != 1:
            raise ValueError("input and output feature widths must both be 1")
        if any(f < 1 for f in self.features):
            raise ValueError("feature widths must be >= 1")
        if any(k < 1 for k in self.tap_lengths):
            raise ValueError("filter lengths must be >= 1")
        if self.hidden_nonlinearity not in HIDDEN_NONLINEARITIES:
            raise ValueError(f"unknown hidden nonlinearity {self.hidden_nonlinearity!r}")
        if self.output_nonlinearity not in OUTPUT_NONLINEARITIES:
            raise ValueError(f"unknown output nonlinearity {self.output_nonlinearity!r}")
        object.__setattr__(self, "shift_scale", float(self.shift_scale))
        if not np.isfinite(self.shift_scale) or self.shift_scale <= 0:
            raise ValueError("shift_scale must be a positive finite number")

    @classmethod
    def uniform(cls, layers: int, width: int = 1, tap_length: int = 5, **kw) -> "GnnConfig":
        """All hidden layers share one width and filter length."""
        features = (1,) + (width,) * (layers - 1) + (1,)
        if layers == 1:
            features = (1, 1)
        return cls(layers=layers, features=features, tap_lengths=(tap_length,) * layers, **kw)


def shift_scale_for(pathloss: np.ndarray) -> float:
    """Operator scale that puts a topology's rows at unit total gain.

    Returns 1 / median(row sums of pathloss).  Unit rows keep every power of
    the scaled operator at order one, so deep filter banks neither vanish
    nor blow up, while direct links (a third or so of a row under typical
    drops) become numerically resolvable.  Computed from the static
    path-loss matrix, never from a fading draw, so the scaled operator stays
    linear in the channel realization; and because inverse-power path loss
    is summable over a constant-density plane, row sums change little with
    network size and one fitted scale stays valid when a trained filter is
    reused on larger networks from the same density.
    """
    pathloss = np.asarray(pathloss, dtype=np.float64)
    med = float(np.median(pathloss.sum(axis=1)))
    if not np.isfinite(med) or med <= 0:
        raise ValueError("path-loss rows must have a positive median sum")
    return 1.0 / med


def num_params(config: GnnConfig) -> int:
    """Total tap count: sum over layers of K_l * F_{l-1} * F_l."""
    return sum(
        k * fin * fout
        for k, fin, fout in zip(config.tap_lengths, config.features[:-1], config.features[1:])
    )


def layer_shapes(config: GnnConfig) -> List[tuple]:
    return [
        (fin, fout, k)
        for k, fin, fout in zip(config.tap_lengths, config.features[:-1], config.features[1:])
    ]


class FilterTaps:
    """All learnable filter coefficients, one (F_in, F_out, K) array per layer."""

    def __init__(self, config: GnnConfig, arrays: List[np.ndarray]):
        shapes = layer_shapes(config)
        if len(arrays) != len(shapes):
            raise ValueError(f"expected {len(shapes)} tap arrays, got {len(arrays)}")
        self.config = config
        self.arrays = []
        for arr, shape in zip(arrays, shapes):
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"tap array shape {arr.shape} does not match {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError("tap arrays must be finite")
            self.arrays.append(arr)

    @classmethod
    def zeros(cls, config: GnnConfig) -> "FilterTaps":
        return cls(config, [np.zeros(s) for s in layer_shapes(config)])

    @classmethod
    def from_flat(cls, config: GnnConfig, flat: np.ndarray) -> "FilterTaps":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (num_params(config),):
            raise ValueError(
                f"flat tap vector has length {flat.size}, expected {num_params(config)}"
            )
        arrays, offset = [], 0
        for shape in layer_shapes(config):
            n = int(np.prod(shape))
            arrays.append(flat[offset : offset + n].reshape(shape).copy())
            offset += n
        return cls(config, arrays)

    def flat(self) -> np.ndarray:
        """Taps in (layer, in-feature, out-feature, order) lexicographic order."""
        return np.concatenate([a.ravel() for a in self.arrays])

    def copy(self) -> "FilterTaps":
        return FilterTaps(self.config, [a.copy() for a in self.arrays])


def init_taps(
    config: GnnConfig,
    rng: np.random.Generator,
    scale: float = 0.1,
    order_decay: float = 1.0,
    identity_gain: float = 1.0,
) -> FilterTaps:
    """Random small taps around an identity-passing filter bank.

    Taps are i.i.d. uniform on [-scale, scale]; the order-zero tap between
    matching feature indices is then shifted by `identity_gain`.  A positive
    shift matters for deep single-feature banks on nonnegative shift
    operators: there each layer's sign is governed by its order-zero tap, so
    one negative draw zeroes every node through the rectifier and the whole
    network is born with exactly zero gradient.  `identity_gain=0` recovers
    the plain uniform draw.  `order_decay` < 1 attenuates higher filter
    orders geometrically, which keeps activations bounded when the shift
    operator has large norm.
    """
    arrays = []
    for fin, fout, k in layer_shapes(config):
        a = rng.uniform(-scale, scale, size=(fin, fout, k))
        if order_decay != 1.0:
            a *= order_decay ** np.arange(k)
        if identity_gain != 0.0:
            for f in range(min(fin, fout)):
                a[f, f, 0] += identity_gain
        arrays.append(a)
    return FilterTaps(config, arrays)


def _sigmoid(y: np.ndarray) -> np.ndarray:
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ey = np.exp(y[~pos])
    out[~pos] = ey / (1.0 + ey)
    return out


def _activate(kind: str, y: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(y, 0.0)
    if kind == "abs":
        return np.abs(y)
    if kind == "sigmoid":
        return _sigmoid(y)
    raise ValueError(f"unknown nonlinearity {kind!r}")


def _activate_deriv(kind: str, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation y (post-activation z).

    ReLU and abs use subgradient 0 at the kink.
    """
    if kind == "relu":
        return (y > 0).astype(np.float64)
    if kind == "abs":
        return np.sign(y)
    if kind == "sigmoid":
        return z * (1.0 - z)
    raise ValueError(f"unknown nonlinearity {kind!r}")


@dataclass
class ForwardTape:
    """Cached intermediates from one forward pass, consumed by backward().

    shifted[l] holds [H^k z_l] for k < K_{l+1} (so shifted[l][0] is the
    layer-(l+1) input); pre[l] is the pre-activation of layer l+1.
    """

    config: GnnConfig
    dim: int
    shifted: List[np.ndarray] = field(default_factory=list)
    pre: List[np.ndarray] = field(default_factory=list)
    probs: np.ndarray | None = None


def forward(taps: FilterTaps, H: np.ndarray, x: np.ndarray):
    """Run the network on shift operator H and single-feature input x.

    Returns (probs, tape): probs is the (m,) output in (0, 1) after the
    final sigmoid, tape holds every intermediate needed for backward().
    Raises on any non-finite intermediate, naming the offending layer.
    """
    config = taps.config
    H = np.asarray(H, dtype=np.float64) * config.shift_scale
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != 1:
        raise ValueError("input signal must be single-feature")
    if H.shape[0] != H.shape[1] or H.shape[0] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {H.shape}, signal has dim {x.shape[0]}"
        )
    m = x.shape[0]
    tape = ForwardTape(config=config, dim=m)
    z = x
    L = config.layers
    for l in range(1, L + 1):
        W = taps.arrays[l - 1]
        # overflow is detected below and raised as an error, not propagated
        with np.errstate(over="ignore", invalid="ignore"):
            S = shift_stack(H, z, config.tap_lengths[l - 1])
            y = np.einsum("fgk,kmf->mg", W, S)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"non-finite pre-activation in layer {l} (inputs too large?)"
            )
        kind = config.hidden_nonlinearity if l < L else config.output_nonlinearity
        z = _activate(kind, y)
        tape.shifted.append(S)
        tape.pre.append(y)
    tape.probs = z[:, 0]
    return tape.probs, tape


def backward(tape: ForwardTape, taps: FilterTaps, H: np.ndarray, grad_out: np.ndarray) -> FilterTaps:
    """Gradient of grad_out . output with respect to every filter tap.

    Reverse-mode accumulation over the tape: the tap gradient at
    (l, f, g, k) is <delta_l^g, H^k z_{l-1}^f>, with delta chained through
    activation derivatives and the filter adjoint z -> (H^T)^k z.
    """
    config = taps.config
    if tape.config != config:
        raise ValueError("tape was recorded with a different architecture")
    if tape.probs is None or len(tape.shifted) != config.layers:
        raise ValueError("tape is incomplete")
    H = np.asarray(H, dtype=np.float64) * config.shift_scale
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.ndim == 1:
        grad_out = grad_out[:, None]
    if grad_out.shape != (tape.dim, 1):
        raise ValueError(
            f"grad_out has shape {grad_out.shape}, expected ({tape.dim}, 1)"
        )
    HT = H.T
    L = config.layers
    grads: List[np.ndarray] = [np.empty(0)] * L
    d = grad_out * _activate_deriv(
        config.output_nonlinearity, tape.pre[L - 1], tape.probs[:, None]
    )
    for l in range(L, 0, -1):
        S = tape.shifted[l - 1]
        W = taps.arrays[l - 1]
        grads[l - 1] = np.einsum("mg,kmf->fgk", d, S)
        if l > 1:
            T = shift_stack(HT, d, config.tap_lengths[l - 1])
            gz = np.einsum("fgk,kmg->mf", W, T)
            z_prev = tape.shifted[l - 1][0]
            d = gz * _activate_deriv(
                config.hidden_nonlinearity, tape.pre[l - 2], z_prev
            )
    return FilterTaps(config, grads)


def checkpoint_dumps(taps: FilterTaps) -> str:
    """Versioned text checkpoint; floats carry 17 significant digits."""
    cfg = taps.config
    head = {
        "format_version": CHECKPOINT_VERSION,
        "gnn": {
            "layers": cfg.layers,
            "features": list(cfg.features),
            "tap_lengths": list(cfg.tap_lengths),
            "hidden_nonlinearity": cfg.hidden_nonlinearity,
            "output_nonlinearity": cfg.output_nonlinearity,
            "shift_scale": cfg.shift_scale,
        },
    }
    flat = ", ".join(format_float(v) for v in taps.flat())
    body = json.dumps(head, indent=2)
    return body[:-2] + ',\n  "taps": [' + flat + "]\n}"


def checkpoint_loads(text: str) -> FilterTaps:
    doc = json.loads(text)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    g = doc["gnn"]
    config = GnnConfig(
        layers=g["layers"],
        features=tuple(g["features"]),
        tap_lengths=tuple(g["tap_lengths"]),
        hidden_nonlinearity=g["hidden_nonlinearity"],
        output_nonlinearity=g["output_nonlinearity"],
        shift_scale=g.get("shift_scale", 1.0),
    )
    return FilterTaps.from_flat(config, np.asarray(doc["taps"], dtype=np.float64))


def save_checkpoint(taps: FilterTaps, path) -> None:
    with open(path, "w") as fh:
        fh.write(checkpoint_dumps(taps))
        fh.write("\n")


def load_checkpoint(path) -> FilterTaps:
    with open(path) as fh:
        return checkpoint_loads(fh.read())
