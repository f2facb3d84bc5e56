"""Comparison methods: user-based KNN, zero-filled NMF and regularized MF."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .ratings import FactorPair, ObservedRatings, cut_upper, round_nearest
from .seeding import derive_rng


@dataclass(frozen=True)
class KnnConfig:
    n_neighbors: int = 40
    min_overlap: int = 3

    def __post_init__(self):
        if self.n_neighbors < 1 or self.min_overlap < 2:
            raise ValueError(f"invalid KnnConfig: {self}")


def pearson_similarity(ratings_u: dict, ratings_w: dict, min_overlap: int = 3):
    """Pearson correlation over the items both users rated.

    Inputs map item -> rating. Returns ``None`` when fewer than
    ``min_overlap`` items are shared or either side has zero variance.
    """
    common = sorted(ratings_u.keys() & ratings_w.keys())
    if len(common) < min_overlap:
        return None
    x = [float(ratings_u[i]) for i in common]
    y = [float(ratings_w[i]) for i in common]
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return None
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def pearson_matrix(A: ObservedRatings, min_overlap: int = 3, block: int = 1024):
    """All user-user correlations at once.

    Returns ``(sim, overlap_mean)``: ``sim[u, w]`` is the correlation (NaN
    where undefined, and on the diagonal), ``overlap_mean[u, w]`` the mean
    rating of ``w`` over the items co-rated with ``u``. Sums of integer
    ratings are exact in float64, so the centred moments are formed as
    ``n * sum(xy) - sum(x) * sum(y)`` without cancellation error.
    """
    R = A.to_dense()
    M = A.mask.astype(np.float64)
    R2 = R * R
    n = A.n_users
    sim = np.full((n, n), np.nan)
    overlap_mean = np.full((n, n), np.nan)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        N = M[lo:hi] @ M.T
        Sx = R[lo:hi] @ M.T          # u's ratings on items w also rated
        Sy = M[lo:hi] @ R.T          # w's ratings on items u also rated
        Sxy = R[lo:hi] @ R.T
        Sxx = R2[lo:hi] @ M.T
        Syy = M[lo:hi] @ R2.T
        cov = N * Sxy - Sx * Sy
        vx = N * Sxx - Sx * Sx
        vy = N * Syy - Sy * Sy
        ok = (N >= min_overlap) & (vx > 0) & (vy > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(ok, cov / np.sqrt(vx * vy), np.nan)
            mu = np.where(N > 0, Sy / N, np.nan)
        sim[lo:hi] = np.clip(s, -1.0, 1.0)
        overlap_mean[lo:hi] = mu
    np.fill_diagonal(sim, np.nan)
    return sim, overlap_mean


def knn_predict(A_train: ObservedRatings, cfg: KnnConfig, queries) -> np.ndarray:
    """Integer predictions for ``queries`` (a ``(rows, cols)`` pair).

    The prediction is the user's mean rating plus the similarity-weighted
    mean deviation of the ``n_neighbors`` most similar users who rated the
    item, where a neighbour's deviation is taken from their own mean over
    the items shared with the user. Only positively correlated neighbours
    take part; without any, the user's mean is used, or the global mean for
    users with no training ratings.
    """
    rows, cols = (np.asarray(q, dtype=np.intp) for q in queries)
    sim, overlap_mean = pearson_matrix(A_train, cfg.min_overlap)
    csc = A_train.csc
    counts = np.bincount(A_train.users, minlength=A_train.n_users)
    sums = np.bincount(A_train.users, weights=A_train.values.astype(np.float64),
                       minlength=A_train.n_users)
    global_mean = float(A_train.values.mean())
    with np.errstate(invalid="ignore", divide="ignore"):
        user_mean = np.where(counts > 0, sums / counts, global_mean)

    out = np.empty(len(rows))
    for q, (u, i) in enumerate(zip(rows, cols)):
        start, end = csc.indptr[i], csc.indptr[i + 1]
        raters = csc.indices[start:end]
        r = csc.data[start:end]
        s = sim[u, raters]
        keep = s > 0
        pred = user_mean[u]
        if keep.any():
            raters, r, s = raters[keep], r[keep], s[keep]
            if len(s) > cfg.n_neighbors:
                top = np.argsort(-s, kind="stable")[: cfg.n_neighbors]
                raters, r, s = raters[top], r[top], s[top]
            dev = r - overlap_mean[u, raters]
            pred = user_mean[u] + np.dot(s, dev) / s.sum()
        out[q] = pred
    scale = A_train.scale
    return round_nearest(np.clip(out, scale.v_min, scale.v_max))


def nmf_multiplicative(A_filled, k: int, iterations: int = 200, seed: int = 0,
                       eps: float = 1e-9, callback: Callable | None = None) -> FactorPair:
    """Multiplicative updates for ``min ||A - W H^T||_F^2`` on a dense matrix.

    Missing ratings are simply zeros in ``A_filled``. ``eps`` keeps the
    denominators positive; ``callback(t, W, H)`` runs after each H and each
    W update (``t`` counts updates).
    """
    A = np.asarray(A_filled, dtype=np.float64)
    if np.any(A < 0):
        raise ValueError("A_filled must be nonnegative")
    rng = derive_rng(seed, "nmf_init")
    scale = math.sqrt(max(A.mean(), eps) / k)
    W = rng.random((A.shape[0], k)) * scale
    H = rng.random((A.shape[1], k)) * scale
    t = 0
    for _ in range(iterations):
        H *= (A.T @ W) / (H @ (W.T @ W) + eps)
        t += 1
        if callback is not None:
            callback(t, W, H)
        W *= (A @ H) / (W @ (H.T @ H) + eps)
        t += 1
        if callback is not None:
            callback(t, W, H)
    return FactorPair(W, H)


@dataclass(frozen=True)
class RegNmfConfig:
    k: int = 6
    lam: float = 0.05
    learning_rate: float = 0.005
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.lam < 0 or not self.learning_rate > 0 or self.epochs < 1:
            raise ValueError(f"invalid RegNmfConfig: {self}")


class DivergenceError(RuntimeError):
    pass


def entry_loss(a, w, h, lam) -> float:
    """``(a - w.h)^2 + lam (|w|^2 + |h|^2)`` for one observed rating."""
    e = a - np.dot(w, h)
    return float(e * e + lam * (np.dot(w, w) + np.dot(h, h)))


def entry_gradient(a, w, h, lam) -> tuple[np.ndarray, np.ndarray]:
    e = a - np.dot(w, h)
    return -2.0 * e * h + 2.0 * lam * w, -2.0 * e * w + 2.0 * lam * h


@numba.njit(cache=True)
def _sgd_epoch(W, H, users, items, values, order, lr, lam):
    k = W.shape[1]
    for t in order:
        u = users[t]
        i = items[t]
        e = values[t]
        for f in range(k):
            e -= W[u, f] * H[i, f]
        for f in range(k):
            w = W[u, f]
            h = H[i, f]
            W[u, f] = max(0.0, w - lr * (-2.0 * e * h + 2.0 * lam * w))
            H[i, f] = max(0.0, h - lr * (-2.0 * e * w + 2.0 * lam * h))


def regularized_objective(A: ObservedRatings, f: FactorPair, lam: float) -> float:
    rows, cols = A.omega
    w, h = f.W[rows], f.H[cols]
    e = A.values - np.einsum("ij,ij->i", w, h)
    return float(e @ e + lam * (np.sum(w * w) + np.sum(h * h)))


def regularized_mf(A_train: ObservedRatings, cfg: RegNmfConfig) -> FactorPair:
    """Projected SGD on the L2-regularized squared error over observed cells.

    Each epoch visits the observed ratings in a seeded random order and
    projects both factor rows onto the nonnegative orthant after each step.
    Raises ``DivergenceError`` once the objective exceeds ten times its
    starting value.
    """
    rng = derive_rng(cfg.seed, "rnmf")
    c = 2.0 * math.sqrt(float(A_train.values.mean()) / cfg.k)
    W = rng.uniform(0, c, (A_train.n_users, cfg.k))
    H = rng.uniform(0, c, (A_train.n_items, cfg.k))
    users = A_train.users.astype(np.int64)
    items = A_train.items.astype(np.int64)
    values = A_train.values.astype(np.float64)
    start = regularized_objective(A_train, FactorPair(W, H), cfg.lam)
    for _ in range(cfg.epochs):
        order = rng.permutation(A_train.nnz)
        _sgd_epoch(W, H, users, items, values, order, cfg.learning_rate, cfg.lam)
        current = regularized_objective(A_train, FactorPair(W, H), cfg.lam)
        if not np.isfinite(current) or current > 10 * start:
            raise DivergenceError(
                f"objective grew from {start:.4g} to {current:.4g}; lower the learning rate")
    return FactorPair(W, H)


def factor_predictions(f: FactorPair, v_max: int) -> np.ndarray:
    """``cut_v([W H^T])`` as integers, the same rule CutNMF predictions use."""
    return round_nearest(cut_upper(f.W @ f.H.T, v_max))
