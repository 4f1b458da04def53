"""User association: LP relaxation of the max-min scheduling problem and rounding."""

from __future__ import annotations

import numpy as np

from .convex_core import solve_lp


class AssociationError(RuntimeError):
    pass


def solve_association_lp(R):
    """Fractional association maximising the minimum average secrecy rate.

    ``R`` is the K x N matrix of (already clamped) per-slot secrecy rates.
    Returns ``(A, zeta)`` with ``A`` fractional and LP-optimal.
    """
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("secrecy rates must be non-negative")
    K, N = R.shape
    scale = R.max()
    if scale <= 0:
        return np.zeros((K, N)), 0.0
    Rs = R / scale
    nv = 1 + K * N
    # x = [zeta, a_11..a_1N, a_21, ...]
    A_ub = np.zeros((K + N, nv))
    for k in range(K):
        A_ub[k, 0] = 1.0
        A_ub[k, 1 + k * N:1 + (k + 1) * N] = -Rs[k] / N
    for n in range(N):
        A_ub[K + n, 1 + n + N * np.arange(K)] = 1.0
    b_ub = np.concatenate([np.zeros(K), np.ones(N)])
    c = np.zeros(nv)
    c[0] = 1.0
    bounds = [(None, None)] + [(0.0, 1.0)] * (K * N)
    rep = solve_lp(c, A_ub, b_ub, bounds)
    if rep.status != "optimal":
        raise AssociationError(f"association LP failed: {rep.status}")
    A = np.clip(rep.x[1:].reshape(K, N), 0.0, 1.0)
    zeta = float(np.min((A * R).mean(axis=1)))
    return A, zeta


def round_association(A, threshold=1e-6):
    """Per slot keep the largest share (lowest index on ties); tiny shares mean silence."""
    A = np.asarray(A, dtype=float)
    out = np.zeros_like(A)
    best = np.argmax(A, axis=0)
    cols = np.arange(A.shape[1])
    keep = A[best, cols] > threshold
    out[best[keep], cols[keep]] = 1.0
    return out


def prune_unprofitable(A, R):
    """Silence assignments whose secrecy rate is zero; zeta is unchanged."""
    A = np.asarray(A, dtype=float).copy()
    A[np.asarray(R) <= 0] = 0.0
    return A
