import os
from pathlib import Path

import numpy as np
import pytest

from cutnmf.ratings import ObservedRatings, RatingScale

ROOT = Path(__file__).resolve().parents[1]
ML100K = Path(os.environ.get("CUTNMF_ML100K", ROOT / "data" / "ml-100k" / "u.data"))


def random_ratings(rng, n, m, density=0.5, scale=RatingScale()):
    mask = rng.random((n, m)) < density
    mask[rng.integers(n), rng.integers(m)] = True
    users, items = np.nonzero(mask)
    values = rng.integers(scale.v_min, scale.v_max + 1, size=len(users))
    return ObservedRatings(n, m, users, items, values, scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ml100k_path():
    if not ML100K.is_file():
        pytest.fail(f"MovieLens 100K not found at {ML100K}; run scripts/fetch_ml100k.py")
    return ML100K


_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def criteria():
    """Record ``criteria[name] = (passed, detail)`` for the summary block."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split(".")[0])):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
