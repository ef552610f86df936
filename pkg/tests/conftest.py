import numpy as np
import pytest

from dashsvd.sparse import SparseMatrix
from dashsvd.synthetic import random_sparse


def write_text(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sparse_40x20():
    return random_sparse(40, 20, 160, seed=3)


@pytest.fixture
def diag12(tmp_path):
    """The 2x2 diag(1, 2) fixture as a Matrix Market file."""
    return write_text(
        tmp_path / "diag12.mtx",
        "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 2.0\n",
    )


def as_sparse(array):
    return SparseMatrix.from_dense(np.asarray(array, dtype=float))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
