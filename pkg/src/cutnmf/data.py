"""MovieLens loaders, planted-factor synthetic data and train/test splits."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Literal

import numpy as np

from .ratings import ObservedRatings, RatingScale, round_nearest
from .seeding import derive_rng

Source = Literal["movielens_100k", "movielens_1m", "movielens_10m", "synthetic",
                 "generic_csv"]

# ML-10M has half stars; votes are doubled onto 1..10.
HALF_STAR_SCALE = RatingScale(v_max=10, v_min=1)


class RatingFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class DatasetSpec:
    source: Source
    path: Path | None = None
    scale: RatingScale = field(default_factory=RatingScale)

    def __post_init__(self):
        if self.source != "synthetic":
            if self.path is None or not Path(self.path).is_file():
                raise FileNotFoundError(f"dataset file not readable: {self.path}")


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int
    n_items: int
    true_rank: int
    n_observed: int
    seed: int = 0
    scale: RatingScale = field(default_factory=RatingScale)

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.true_rank) < 1:
            raise ValueError("sizes and rank must be positive")
        if not 0 < self.n_observed <= self.n_users * self.n_items:
            raise ValueError(
                f"n_observed={self.n_observed} outside (0, {self.n_users * self.n_items}]")


@dataclass(frozen=True, eq=False)
class Split:
    train: ObservedRatings
    test: ObservedRatings
    fraction: float
    seed: int


_SEPARATORS = {
    "movielens_100k": "\t",
    "movielens_1m": "::",
    "movielens_10m": "::",
    "generic_csv": ",",
}


def _parse_rating(text: str, half_stars: bool) -> int:
    value = Decimal(text)
    if half_stars:
        value *= 2
    if value != value.to_integral_value():
        raise ValueError(f"non-integral rating {text!r}")
    return int(value)


def load_movielens(spec: DatasetSpec) -> ObservedRatings:
    """Read a ratings file and reindex users and items to 0-based indices.

    Indices follow the sorted order of the raw identifiers; the raw IDs are
    kept on the result as ``user_ids`` / ``item_ids``.
    """
    if spec.source not in _SEPARATORS:
        raise ValueError(f"not a file source: {spec.source}")
    sep = _SEPARATORS[spec.source]
    half_stars = spec.source == "movielens_10m"
    scale = HALF_STAR_SCALE if half_stars else spec.scale
    min_fields = 3

    raw_users, raw_items, values = [], [], []
    seen = {}
    with open(spec.path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = re.split(r"\t" if sep == "\t" else re.escape(sep), line)
            if len(parts) < min_fields:
                raise RatingFormatError(spec.path, lineno, f"expected user{sep}item{sep}rating")
            try:
                u, i = int(parts[0]), int(parts[1])
                r = _parse_rating(parts[2].strip(), half_stars)
            except (ValueError, InvalidOperation) as exc:
                raise RatingFormatError(spec.path, lineno, str(exc)) from None
            if not scale.v_min <= r <= scale.v_max:
                raise RatingFormatError(
                    spec.path, lineno,
                    f"rating {parts[2]} outside scale [{scale.v_min}, {scale.v_max}]")
            if (u, i) in seen:
                raise RatingFormatError(
                    spec.path, lineno,
                    f"duplicate pair ({u}, {i}), first seen on line {seen[u, i]}")
            seen[u, i] = lineno
            raw_users.append(u)
            raw_items.append(i)
            values.append(r)

    user_ids, users = np.unique(np.array(raw_users, dtype=np.int64), return_inverse=True)
    item_ids, items = np.unique(np.array(raw_items, dtype=np.int64), return_inverse=True)
    return ObservedRatings(len(user_ids), len(item_ids), users, items,
                           np.array(values), scale, user_ids, item_ids)


def index_of(ids: np.ndarray, raw_id) -> int:
    """Internal index of ``raw_id`` in a sorted ID vocabulary."""
    pos = int(np.searchsorted(ids, raw_id))
    if pos >= len(ids) or ids[pos] != raw_id:
        raise KeyError(raw_id)
    return pos


def generate_synthetic(spec: SyntheticSpec) -> tuple[ObservedRatings, np.ndarray]:
    """Planted low-rank ratings.

    Draws uniform factors of rank ``true_rank``, rescales their product
    affinely onto ``[v_min, v_max]``, rounds to integer votes and reveals
    ``n_observed`` cells chosen uniformly without replacement. Returns the
    observed ratings and the full ground-truth vote matrix.
    """
    rng = derive_rng(spec.seed, "synthetic")
    W = rng.random((spec.n_users, spec.true_rank))
    H = rng.random((spec.n_items, spec.true_rank))
    P = W @ H.T
    lo, hi = P.min(), P.max()
    s = spec.scale
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        # no spread to rescale: every cell gets the scale midpoint
        truth = np.full(P.shape, int(round_nearest((s.v_min + s.v_max) / 2)))
    else:
        truth = round_nearest(s.v_min + (P - lo) * (s.span / (hi - lo)))
    truth = np.clip(truth, s.v_min, s.v_max)

    cells = rng.choice(spec.n_users * spec.n_items, size=spec.n_observed, replace=False)
    cells.sort()
    users, items = np.divmod(cells, spec.n_items)
    ratings = ObservedRatings(spec.n_users, spec.n_items, users, items,
                              truth[users, items], s)
    return ratings, truth


def split_train_test(A: ObservedRatings, fraction: float = 0.8, seed: int = 0) -> Split:
    """Uniform random partition of the observed cells into train and test."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n_train = int(round_nearest(fraction * A.nnz))
    if n_train == 0 or n_train == A.nnz:
        raise ValueError(f"fraction {fraction} leaves one side of the split empty")
    perm = derive_rng(seed, "split").permutation(A.nnz)
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    return Split(A.subset(train), A.subset(test), fraction, seed)


def write_csv(A: ObservedRatings, path) -> None:
    """Write ``user,item,rating`` lines using internal indices."""
    with open(path, "w") as fh:
        for u, i, r in zip(A.users.tolist(), A.items.tolist(), A.values.tolist()):
            fh.write(f"{u},{i},{r}\n")


def write_ground_truth(truth: np.ndarray, path) -> None:
    np.savetxt(path, truth, fmt="%d", delimiter=",")


def load_dataset(spec: DatasetSpec, synthetic: SyntheticSpec | None = None) -> ObservedRatings:
    if spec.source == "synthetic":
        if synthetic is None:
            raise ValueError("synthetic source needs a SyntheticSpec")
        return generate_synthetic(synthetic)[0]
    return load_movielens(spec)
