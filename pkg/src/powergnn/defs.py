"""Shared numeric constants and the seeded stream layout.

All floating point work is float64. Tolerances used by tests and the
oracle-check command live here so there is a single place to read them off.
"""

from __future__ import annotations

import numpy as np

# Absolute tolerance for permutation-commutation identities on f64 data.
EQUIVARIANCE_ATOL = 1e-9

# Relative tolerance for iterated-shift vs explicit-matrix-power filter
# evaluation.
FILTER_ORACLE_RTOL = 1e-10

# Relative tolerance for reverse-mode tap gradients against central finite
# differences.
GRAD_FD_RTOL = 1e-5

# Absolute tolerance for exact linear-algebra identities (reward
# equivariance, permutation index identities).
EXACT_ATOL = 1e-12

# Bernoulli probabilities are clamped into [CLAMP_EPS, 1 - CLAMP_EPS] before
# sampling.  The floor does double duty: it keeps log-likelihood scores
# finite, and it acts as an exploration floor for the score-function
# estimator — without it the all-off (and all-on) corners are absorbing,
# because a link whose probability reaches the boundary almost never draws
# the opposite action again and its gradient signal vanishes.  1e-2 keeps
# every binary pattern reachable at a negligible cost in transmit power
# (at most p0 * CLAMP_EPS per silenced link in expectation).
CLAMP_EPS = 1e-2

# Finite-difference step for gradient checks.
FD_STEP = 1e-6

# Labels for independent random streams derived from one master seed.  New
# consumers append labels; existing streams never shift.
STREAM_TOPOLOGY = 0
STREAM_FADING_TRAIN = 1
STREAM_FADING_EVAL = 2
STREAM_POLICY = 3
STREAM_DEMAND = 4
STREAM_INIT = 5
STREAM_BASELINE = 6


def format_float(v: float) -> str:
    """Decimal text with 17 significant digits; round-trips float64 exactly.

    The token always parses as a number in structured-text files (a bare
    integer mantissa gets a trailing '.0').
    """
    s = format(float(v), ".17g")
    return s if ("e" in s or "." in s or "n" in s) else s + ".0"


def stream(master_seed: int, label: int, *extra: int) -> np.random.Generator:
    """Derive an independent generator from the master seed and a fixed label.

    `extra` indices carve sub-streams (per network, per evaluation pass) so
    consumers can be added without disturbing one another.
    """
    key = (label,) + tuple(extra)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=master_seed, spawn_key=key))
    )
