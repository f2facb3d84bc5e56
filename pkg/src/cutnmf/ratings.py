"""Rating containers and the masking, clipping and rounding primitives."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class RatingScale:
    """Integer vote range ``v_min..v_max``."""

    v_max: int = 5
    v_min: int = 1

    def __post_init__(self):
        if not (1 <= self.v_min < self.v_max):
            raise ValueError(f"invalid rating scale [{self.v_min}, {self.v_max}]")

    @property
    def span(self) -> int:
        return self.v_max - self.v_min


@dataclass(frozen=True, eq=False)
class ObservedRatings:
    """Sparse integer ratings on the observed index set.

    ``users``, ``items`` and ``values`` are parallel arrays, one entry per
    observed cell. ``user_ids`` / ``item_ids`` optionally map internal
    indices back to the raw identifiers of the source file.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    scale: RatingScale = field(default_factory=RatingScale)
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.uint32)
        items = np.asarray(self.items, dtype=np.uint32)
        values = np.asarray(self.values)
        if not (users.ndim == items.ndim == values.ndim == 1):
            raise ValueError("users, items and values must be 1-d")
        if not (len(users) == len(items) == len(values)):
            raise ValueError("users, items and values must have equal length")
        if values.size and not np.all(values == np.round(values)):
            raise ValueError("ratings must be integers")
        if len(users):
            if users.max() >= self.n_users or items.max() >= self.n_items:
                raise ValueError("rating index outside matrix shape")
            if values.min() < self.scale.v_min or values.max() > self.scale.v_max:
                raise ValueError(
                    f"rating outside scale [{self.scale.v_min}, {self.scale.v_max}]")
        flat = users.astype(np.int64) * self.n_items + items
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate (user, item) pair")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "values", values.astype(np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_users, self.n_items)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def omega(self) -> tuple[np.ndarray, np.ndarray]:
        """Observed cells as ``(rows, cols)`` index arrays."""
        return self.users.astype(np.intp), self.items.astype(np.intp)

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.omega] = True
        m.setflags(write=False)
        return m

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Row-oriented view; ``csc`` gives the column-oriented one."""
        return sp.csr_matrix(
            (self.values.astype(np.float64), self.omega), shape=self.shape)

    @cached_property
    def csc(self) -> sp.csc_matrix:
        return self.csr.tocsc()

    def to_dense(self) -> np.ndarray:
        """``P_Omega(A)`` as a dense float matrix (zeros off the observed set)."""
        out = np.zeros(self.shape)
        out[self.omega] = self.values
        return out

    def subset(self, index: np.ndarray) -> ObservedRatings:
        """Entries selected by ``index`` (positions into the entry arrays)."""
        return ObservedRatings(
            self.n_users, self.n_items, self.users[index], self.items[index],
            self.values[index], self.scale, self.user_ids, self.item_ids)

    def sorted_entries(self) -> list[tuple[int, int, int]]:
        order = np.lexsort((self.items, self.users))
        return list(zip(self.users[order].tolist(), self.items[order].tolist(),
                        self.values[order].tolist()))


@dataclass(frozen=True, eq=False)
class FactorPair:
    """Nonnegative factors with ``W @ H.T`` approximating the ratings."""

    W: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.H.ndim != 2 or self.W.shape[1] != self.H.shape[1]:
            raise ValueError(
                f"factor shapes {self.W.shape} and {self.H.shape} are inconsistent")
        if self.W.shape[1] < 1:
            raise ValueError("rank must be at least 1")
        for name in ("W", "H"):
            a = getattr(self, name)
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError(f"{name} must be finite and nonnegative")

    @property
    def k(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True, eq=False)
class CompletedMatrix:
    """Observed ratings on Omega, clipped reconstruction elsewhere."""

    values: np.ndarray
    source: ObservedRatings

    def check(self) -> None:
        A = self.source
        if self.values.shape != A.shape:
            raise ValueError("completed matrix shape differs from its source")
        if not np.array_equal(self.values[A.omega], A.values.astype(np.float64)):
            raise ValueError("completed matrix disagrees with observed ratings")
        off = self.values[~A.mask]
        if off.size and (off.min() < 0 or off.max() > A.scale.v_max):
            raise ValueError("imputed values outside [0, v_max]")


def project_observed(M, omega) -> np.ndarray:
    """Keep the entries of ``M`` on ``omega`` (a boolean mask) and zero the rest."""
    M = np.asarray(M, dtype=np.float64)
    omega = np.asarray(omega, dtype=bool)
    if omega.shape != M.shape:
        raise ValueError(f"mask shape {omega.shape} does not match matrix {M.shape}")
    return np.where(omega, M, 0.0)


def cut_upper(M, v) -> np.ndarray:
    return np.minimum(np.asarray(M, dtype=np.float64), v)


def round_nearest(M) -> np.ndarray:
    """Nearest integer, exact halves away from zero."""
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise ValueError("cannot round non-finite values")
    t = np.trunc(M)
    # M - t is exact in floating point, so the tie test is exact too
    out = t + np.sign(M) * (np.abs(M - t) >= 0.5)
    return out.astype(np.int64)


def reconstruct(f: FactorPair) -> np.ndarray:
    return f.W @ f.H.T
