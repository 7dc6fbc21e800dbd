"""Randomized binary power-allocation policy.

The network output q in (0, 1)^m parameterizes independent Bernoulli draws,
one per transmitter: node i transmits at power p0 with probability q_i.  The
log-likelihood of a drawn pattern and its gradient feed the likelihood-ratio
policy-gradient estimator; the binary support set {0, p0}^m is feasible by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .defs import CLAMP_EPS


@dataclass(frozen=True)
class AllocationSpec:
    """Binary allocation: each node transmits at p0 or stays silent."""

    p0: float
    kind: str = "binary"

    def __post_init__(self):
        if self.kind != "binary":
            raise ValueError(f"unknown allocation kind {self.kind!r}")
        if not self.p0 > 0:
            raise ValueError("transmit power p0 must be positive")


@dataclass(frozen=True)
class PolicySample:
    allocation: np.ndarray
    log_prob: float
    bernoulli_draws: np.ndarray


def clamp_probs(probs: np.ndarray) -> np.ndarray:
    """Pull probabilities off the boundary so log and score stay finite."""
    return np.clip(np.asarray(probs, dtype=np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)


def sample(probs: np.ndarray, spec: AllocationSpec, rng: np.random.Generator) -> PolicySample:
    """Draw one binary allocation and record its log-likelihood in nats."""
    q = clamp_probs(probs)
    draws = rng.random(q.shape) < q
    log_prob = float(np.sum(np.where(draws, np.log(q), np.log1p(-q))))
    allocation = np.where(draws, spec.p0, 0.0)
    return PolicySample(allocation=allocation, log_prob=log_prob, bernoulli_draws=draws)


def log_prob(draws: np.ndarray, probs: np.ndarray) -> float:
    """Log-likelihood of a given transmit pattern under clamped probs."""
    q = clamp_probs(probs)
    d = np.asarray(draws, dtype=bool)
    return float(np.sum(np.where(d, np.log(q), np.log1p(-q))))


def grad_log_prob(policy_sample: PolicySample, probs: np.ndarray) -> np.ndarray:
    """Score function: d log-likelihood / d probs, componentwise.

    Component i is b_i/q_i - (1-b_i)/(1-q_i) with the same clamped q used at
    sampling time.  Feeding this into the network backward pass yields the
    gradient of the sample's log-likelihood with respect to every tap.
    """
    q = clamp_probs(probs)
    b = policy_sample.bernoulli_draws.astype(np.float64)
    return b / q - (1.0 - b) / (1.0 - q)


def threshold(probs: np.ndarray, spec: AllocationSpec) -> np.ndarray:
    """Deterministic evaluation mode: transmit where q_i > 0.5."""
    q = np.asarray(probs, dtype=np.float64)
    return np.where(q > 0.5, spec.p0, 0.0)
