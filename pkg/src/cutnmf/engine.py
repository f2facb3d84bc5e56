"""Alternating nonnegative least squares and the CutNMF completion loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .nnls import NnlsOptions, objective, solve_for_H, solve_for_W
from .ratings import (CompletedMatrix, FactorPair, ObservedRatings, cut_upper,
                      round_nearest)
from .seeding import derive_rng

StopReason = Literal["max_iterations", "exact_reconstruction", "mfe_stagnated"]


@dataclass(frozen=True)
class CutNmfConfig:
    k: int
    j_max: int = 2000
    tol: float = 1e-7
    seed: int = 0
    nnls: NnlsOptions = field(default_factory=NnlsOptions)
    trace_every: int = 1
    check_descent: bool = False

    def __post_init__(self):
        if self.k < 1 or self.j_max < 1 or not self.tol > 0 or self.trace_every < 0:
            raise ValueError(f"invalid CutNmfConfig: {self}")


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    mfe: float
    mie: int
    elapsed: float


@dataclass(frozen=True, eq=False)
class CutNmfResult:
    factors: FactorPair
    completed: CompletedMatrix
    trace: list[IterationTrace]
    stop_reason: StopReason

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration


def initial_W(n_users: int, k: int, seed: int) -> np.ndarray:
    """Seeded starting factor, uniform on (0, 1]."""
    return 1.0 - derive_rng(seed, "W0").random((n_users, k))


def _mfe(a, b) -> float:
    d = a - b
    return float(np.sqrt(np.dot(d, d)) / d.size)


def _mie(a, b, v) -> int:
    return int(np.max(np.abs(a - np.minimum(round_nearest(b), v))))


def _observed(A: ObservedRatings, B):
    B = np.asarray(B, dtype=np.float64)
    if B.shape != A.shape:
        raise ValueError(f"matrix shape {B.shape} does not match ratings {A.shape}")
    if A.nnz == 0:
        raise ValueError("no observed ratings")
    return A.values.astype(np.float64), B[A.omega]


def mfe(A: ObservedRatings, B) -> float:
    """Mean Frobenius error ``||P_Omega(A - B)||_F / |Omega|``."""
    return _mfe(*_observed(A, B))


def mie(A: ObservedRatings, B) -> int:
    """Maximum integer error of the rounded, clipped ``B`` over Omega."""
    a, b = _observed(A, B)
    return _mie(a.astype(np.int64), b, A.scale.v_max)


def anls(A, W0, k: int, max_iter: int = 500, rel_tol: float = 1e-9,
         opts: NnlsOptions = NnlsOptions(),
         callback: Callable | None = None) -> FactorPair:
    """Plain ANLS on a fully known nonnegative matrix.

    Alternates an H half-step and a W half-step from ``H = 0`` and stops
    after ``max_iter`` rounds or once the relative change of
    ``0.5 * ||A - W H^T||_F^2`` is at most ``rel_tol``.
    ``callback(j, W, H)`` runs after every round.
    """
    A = np.asarray(A, dtype=np.float64)
    W = np.array(W0, dtype=np.float64)
    if W.shape != (A.shape[0], k):
        raise ValueError(f"W0 has shape {W.shape}, expected {(A.shape[0], k)}")
    if np.any(A < 0):
        raise ValueError("A must be nonnegative")
    H = np.zeros((A.shape[1], k))
    prev = 0.5 * objective(A, W, H)
    for j in range(1, max_iter + 1):
        H = solve_for_H(A, W, H, opts)
        W = solve_for_W(A, H, W, opts)
        if callback is not None:
            callback(j, W, H)
        cur = 0.5 * objective(A, W, H)
        if cur == 0.0 or abs(prev - cur) <= rel_tol * max(prev, cur):
            break
        prev = cur
    return FactorPair(W, H)


def _assert_descent(before, after, what, j):
    if after > before * (1 + 1e-12) + 1e-12:
        raise AssertionError(
            f"{what} half-step increased the objective at iteration {j}: "
            f"{before!r} -> {after!r}")


def cutnmf(A: ObservedRatings, cfg: CutNmfConfig,
           callback: Callable | None = None) -> CutNmfResult:
    """Complete ``A`` by alternating NNLS with clipped imputation.

    Each iteration fits the factors to the current working matrix C, forms
    ``B = W H^T``, and rebuilds C from the observed ratings plus ``min(B, v)``
    everywhere else. The loop ends at ``cfg.j_max``, when the rounded
    reconstruction matches every observed rating (MIE = 0), or when the
    relative change in mFE drops to ``cfg.tol``.

    ``callback(j, W, H, B, C)`` runs after every iteration.
    """
    if A.nnz == 0:
        raise ValueError("no observed ratings")
    v = A.scale.v_max
    obs = A.omega
    a = A.values.astype(np.float64)
    a_int = A.values.astype(np.int64)
    opts = cfg.nnls

    C = A.to_dense()
    W = initial_W(A.n_users, cfg.k, cfg.seed)
    H = np.zeros((A.n_items, cfg.k))
    err = 0.0
    trace: list[IterationTrace] = []
    start = time.perf_counter()
    stop: StopReason = "max_iterations"
    j = 0
    while j < cfg.j_max:
        j += 1
        err_old = err
        if cfg.check_descent:
            f0 = objective(C, W, H)
        H = solve_for_H(C, W, H, opts)
        if cfg.check_descent:
            f1 = objective(C, W, H)
            _assert_descent(f0, f1, "H", j)
        W = solve_for_W(C, H, W, opts)
        if cfg.check_descent:
            _assert_descent(f1, objective(C, W, H), "W", j)
        B = W @ H.T
        C = cut_upper(B, v)
        C[obs] = a
        b = B[obs]
        max_err = _mie(a_int, b, v)
        err = _mfe(a, b)
        if callback is not None:
            callback(j, W, H, B, C)
        if max_err == 0 or err == 0.0:
            stop = "exact_reconstruction"
        elif abs(err_old - err) / err <= cfg.tol:
            stop = "mfe_stagnated"
        last = stop != "max_iterations" or j == cfg.j_max
        if last or (cfg.trace_every and j % cfg.trace_every == 0):
            trace.append(IterationTrace(j, err, max_err, time.perf_counter() - start))
        if stop != "max_iterations":
            break
    return CutNmfResult(FactorPair(W, H), CompletedMatrix(C, A), trace, stop)


def reconstruction(result: CutNmfResult) -> np.ndarray:
    """Integer ratings ``cut_v([W H^T])`` on every cell."""
    B = result.factors.W @ result.factors.H.T
    return round_nearest(cut_upper(B, result.completed.source.scale.v_max))


def predict(result: CutNmfResult) -> np.ma.MaskedArray:
    """Integer predictions on the unobserved cells; observed cells are masked."""
    src = result.completed.source
    values = round_nearest(cut_upper(result.completed.values, src.scale.v_max))
    return np.ma.masked_array(values, mask=src.mask.copy())
