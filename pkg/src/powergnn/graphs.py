"""Dense graph-signal primitives: shifts, polynomial filters, permutations.

A channel matrix is an m-by-m nonnegative array whose (i, j) entry is the
gain from transmitter i to the receiver paired with node j.  Signals are
(m, F) arrays; single-feature signals may be passed as (m,) vectors and are
handled column-wise.
"""

from __future__ import annotations

import numpy as np


def check_channel_matrix(H: np.ndarray) -> np.ndarray:
    """Validate an m-by-m nonnegative finite matrix, returning it as f64."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"channel matrix must be square, got shape {H.shape}")
    if H.shape[0] < 1:
        raise ValueError("channel matrix must have dim >= 1")
    if not np.all(np.isfinite(H)):
        raise ValueError("channel matrix has non-finite entries")
    if np.any(H < 0):
        raise ValueError("channel matrix has negative entries")
    return H


def shift(H: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """One graph shift: aggregate neighbor values along weighted edges (H @ Z)."""
    H = np.asarray(H, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if H.shape[0] != H.shape[1] or H.shape[1] != Z.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {H.shape}, signal has dim {Z.shape[0]}"
        )
    return H @ Z


def shift_stack(H: np.ndarray, Z: np.ndarray, order: int) -> np.ndarray:
    """Stack of iterated shifts [Z, HZ, ..., H^(order-1) Z], shape (order, m, F).

    Powers of H are never formed; each slice is one shift of the previous.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    Z = np.asarray(Z, dtype=np.float64)
    squeeze = Z.ndim == 1
    if squeeze:
        Z = Z[:, None]
    out = np.empty((order, Z.shape[0], Z.shape[1]))
    out[0] = Z
    for k in range(1, order):
        out[k] = shift(H, out[k - 1])
    return out[:, :, 0] if squeeze else out


def apply_filter(H: np.ndarray, Z: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Evaluate the polynomial filter sum_k taps[k] H^k Z by iterated shifts."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size == 0:
        raise ValueError("taps must be a non-empty 1-d array")
    Z = np.asarray(Z, dtype=np.float64)
    acc = taps[0] * Z
    cur = Z
    for k in range(1, taps.size):
        cur = shift(H, cur)
        acc = acc + taps[k] * cur
    return acc


def check_permutation(perm: np.ndarray) -> np.ndarray:
    """Validate an index bijection on {0..m-1} stored as an int array."""
    perm = np.asarray(perm)
    if perm.ndim != 1:
        raise ValueError("permutation must be a 1-d index array")
    m = perm.size
    if not np.array_equal(np.sort(perm), np.arange(m)):
        raise ValueError("permutation indices must be a bijection on 0..m-1")
    return perm.astype(np.intp)


def permutation_matrix(perm: np.ndarray) -> np.ndarray:
    """The 0/1 matrix P with (P^T v)[a] = v[perm[a]]; rows and columns sum to 1."""
    perm = check_permutation(perm)
    P = np.zeros((perm.size, perm.size))
    P[perm, np.arange(perm.size)] = 1.0
    return P


def invert_permutation(perm: np.ndarray) -> np.ndarray:
    perm = check_permutation(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def permute(H: np.ndarray, x: np.ndarray, perm: np.ndarray):
    """Relabel a graph and signal: returns (P^T H P, P^T x) via index gather."""
    perm = check_permutation(perm)
    H = np.asarray(H, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if H.shape[0] != perm.size or x.shape[0] != perm.size:
        raise ValueError(
            f"dimension mismatch: matrix {H.shape}, signal dim {x.shape[0]}, "
            f"permutation dim {perm.size}"
        )
    return H[np.ix_(perm, perm)], x[perm]
