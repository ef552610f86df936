"""Seeded test matrices with known structure."""
from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def random_orthonormal(rows: int, cols: int, seed: int) -> np.ndarray:
    """Haar-distributed orthonormal columns (QR of a Gaussian with sign-fixed R)."""
    Q, R = np.linalg.qr(_rng(seed).standard_normal((rows, cols)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def with_spectrum(rows: int, cols: int, sigmas, seed: int) -> np.ndarray:
    """Dense ``U diag(sigmas) V^T`` with random orthonormal factors."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    r = sigmas.size
    U = random_orthonormal(rows, r, seed)
    V = random_orthonormal(cols, r, seed + 1_000_003)
    return (U * sigmas) @ V.T


def dense1(n: int, seed: int = 0) -> np.ndarray:
    """Square Gaussian matrix."""
    return _rng(seed).standard_normal((n, n))


def dense2_spectrum(n: int) -> np.ndarray:
    return 1.0 / np.sqrt(np.arange(1, n + 1))


def dense2(n: int, seed: int = 0) -> np.ndarray:
    """Square matrix with singular values ``1/sqrt(i)``."""
    return with_spectrum(n, n, dense2_spectrum(n), seed)


def random_sparse(rows: int, cols: int, nnz: int, seed: int = 0) -> SparseMatrix:
    """Uniformly placed Gaussian entries; coincident positions are summed, so nnz may come out a little lower."""
    rng = _rng(seed)
    r = rng.integers(0, rows, size=nnz)
    c = rng.integers(0, cols, size=nnz)
    v = rng.standard_normal(nnz)
    return SparseMatrix.from_coo(rows, cols, r, c, v)


def parse_synthetic(name: str, seed: int = 0):
    """Build a matrix from ``'dense1:N'`` or ``'dense2:N'``; returns ``(matrix, exact_sigmas_or_None)``."""
    kind, _, size = name.partition(":")
    try:
        n = int(size)
    except ValueError:
        raise ValueError(f"bad synthetic matrix {name!r}; expected dense1:N or dense2:N") from None
    if n < 1:
        raise ValueError("synthetic size must be >= 1")
    if kind == "dense1":
        return dense1(n, seed), None
    if kind == "dense2":
        return dense2(n, seed), dense2_spectrum(n)
    raise ValueError(f"unknown synthetic kind {kind!r}; expected dense1 or dense2")
