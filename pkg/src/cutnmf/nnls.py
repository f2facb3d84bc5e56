"""Coordinate descent for the two nonnegative least-squares half-steps.

Both half-steps reduce to ``min_{H >= 0} ||C - W H^T||_F^2``; the W step is
the same problem on ``C^T`` with the roles of the factors swapped. With
``Q = W^T W`` and ``G = H Q - C^T W`` (the gradient, up to a factor 2), the
rows of ``H`` are independent quadratic programs sharing ``Q``, and each
coordinate subproblem is a 1-d quadratic solved exactly by
``max(0, h - g / q)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


@dataclass(frozen=True)
class NnlsOptions:
    """Inner-solver budget.

    Parameters
    ----------
    inner_sweeps : int
        Coordinate passes per call; a greedy row gets ``inner_sweeps * k``
        single-coordinate updates at most.
    coord_tol : float
        A row stops once every projected gradient entry is within this value.
    greedy : bool
        Pick the coordinate with the largest objective decrease (default)
        instead of visiting coordinates cyclically.
    """

    inner_sweeps: int = 2
    coord_tol: float = 1e-9
    greedy: bool = True

    def __post_init__(self):
        if self.inner_sweeps < 1:
            raise ValueError("inner_sweeps must be >= 1")
        if self.coord_tol < 0:
            raise ValueError("coord_tol must be >= 0")


@numba.njit(cache=True)
def _greedy_row(h, g, Q, max_updates, tol):
    k = h.shape[0]
    for _ in range(max_updates):
        best = -1
        best_value = 0.0
        best_decrease = 0.0
        worst_pg = 0.0
        for f in range(k):
            q = Q[f, f]
            if q <= 0.0:
                continue
            pg = abs(g[f]) if h[f] > 0.0 else max(-g[f], 0.0)
            if pg > worst_pg:
                worst_pg = pg
            new = max(0.0, h[f] - g[f] / q)
            s = new - h[f]
            decrease = -g[f] * s - 0.5 * q * s * s
            if decrease > best_decrease:
                best_decrease = decrease
                best = f
                best_value = new
        if worst_pg <= tol or best < 0:
            return
        s = best_value - h[best]
        h[best] = best_value
        for f in range(k):
            g[f] += s * Q[best, f]


@numba.njit(cache=True)
def _cyclic_row(h, g, Q, sweeps, tol):
    k = h.shape[0]
    for _ in range(sweeps):
        worst_pg = 0.0
        for f in range(k):
            q = Q[f, f]
            if q <= 0.0:
                continue
            pg = abs(g[f]) if h[f] > 0.0 else max(-g[f], 0.0)
            if pg > worst_pg:
                worst_pg = pg
        if worst_pg <= tol:
            return
        for f in range(k):
            q = Q[f, f]
            if q <= 0.0:
                continue
            new = max(0.0, h[f] - g[f] / q)
            s = new - h[f]
            if s != 0.0:
                h[f] = new
                for e in range(k):
                    g[e] += s * Q[f, e]


@numba.njit(cache=True, parallel=True)
def _solve_rows(H, G, Q, sweeps, tol, greedy):
    k = H.shape[1]
    for i in numba.prange(H.shape[0]):
        if greedy:
            _greedy_row(H[i], G[i], Q, sweeps * k, tol)
        else:
            _cyclic_row(H[i], G[i], Q, sweeps, tol)


def _check_inputs(C, W, H_init):
    C = np.asarray(C, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H_init = np.asarray(H_init, dtype=np.float64)
    if C.ndim != 2 or W.ndim != 2 or H_init.ndim != 2:
        raise ValueError("C, W and H must be 2-d")
    n, m = C.shape
    if W.shape[0] != n or H_init.shape[0] != m or W.shape[1] != H_init.shape[1]:
        raise ValueError(
            f"shape mismatch: C {C.shape}, W {W.shape}, H {H_init.shape}")
    for name, a in (("C", C), ("W", W), ("H", H_init)):
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} has non-finite entries")
    if np.any(W < 0) or np.any(H_init < 0):
        raise ValueError("factors must be nonnegative")
    return C, W, H_init


def solve_for_H(C, W, H_init, opts: NnlsOptions = NnlsOptions()) -> np.ndarray:
    """Approximately solve ``min_{H >= 0} ||C - W H^T||_F^2`` from ``H_init``.

    The objective never increases relative to ``H_init``.
    """
    C, W, H_init = _check_inputs(C, W, H_init)
    Q = W.T @ W
    H = np.array(H_init, order="C")
    G = H @ Q - C.T @ W
    _solve_rows(H, G, Q, opts.inner_sweeps, opts.coord_tol, opts.greedy)
    return H


def solve_for_W(C, H, W_init, opts: NnlsOptions = NnlsOptions()) -> np.ndarray:
    """``min_{W >= 0} ||C - W H^T||_F^2``, via the transposed problem."""
    return solve_for_H(np.asarray(C).T, H, W_init, opts)


def objective(C, W, H) -> float:
    """Squared Frobenius residual ``||C - W H^T||_F^2``."""
    R = np.asarray(C, dtype=np.float64) - W @ H.T
    return float(np.vdot(R, R))


def kkt_residual(C, W, H) -> float:
    """Largest ``|min(h, g)|`` over H, with ``g`` the H-gradient of the objective.

    Zero exactly at a KKT point of the H subproblem.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (W.shape[0], H.shape[0]) or W.shape[1] != H.shape[1]:
        raise ValueError(f"shape mismatch: C {C.shape}, W {W.shape}, H {H.shape}")
    g = 2.0 * (H @ (W.T @ W) - C.T @ W)
    if H.size == 0:
        return 0.0
    return float(np.max(np.abs(np.minimum(H, g))))
