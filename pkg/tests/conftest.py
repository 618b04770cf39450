import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from fedopt import Dataset  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

GOLDEN = Path(__file__).parent / "golden"


def dataset_from_dense(X, y, loss="quadratic", lam=0.0, groups=None):
    X = np.asarray(X, dtype=np.float64)
    indptr, indices, data = [0], [], []
    for row in X:
        nz = np.flatnonzero(row)
        indices.extend(nz.tolist())
        data.extend(row[nz].tolist())
        indptr.append(len(indices))
    return Dataset.from_csr(np.array(indptr), np.array(indices, dtype=np.int64), np.array(data),
                            np.asarray(y, dtype=np.float64), X.shape[1], loss, lam, groups)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def verdict(criterion: int, ok: bool, detail: str):
    """Record one acceptance line, then fail the calling test if ``ok`` is false."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
