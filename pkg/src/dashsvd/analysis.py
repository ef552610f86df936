"""Accuracy metrics, spectral-norm estimation, error bounds and flop models."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .dense import ORACLE_MAX_DIM, gaussian_matrix, oracle_svd
from .errors import DegenerateReference, HypothesisError, ShapeError
from .sparse import SparseMatrix, spmm


@dataclass(frozen=True)
class ReferenceSpectrum:
    """Known leading singular values of A, in descending order."""

    sigmas: np.ndarray
    source: str = "file"

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64).ravel()
        if sig.size == 0:
            raise ValueError("reference spectrum is empty")
        if np.any(sig < 0) or np.any(np.diff(sig) > 0):
            raise ValueError("reference singular values must be non-negative and descending")
        object.__setattr__(self, "sigmas", sig)

    def __len__(self):
        return self.sigmas.size

    @classmethod
    def from_oracle(cls, A) -> ReferenceSpectrum:
        if min(A.shape) > ORACLE_MAX_DIM:
            raise ShapeError(
                f"oracle reference refused for min dimension {min(A.shape)} > {ORACLE_MAX_DIM}; supply a spectrum file"
            )
        dense = A.to_dense() if isinstance(A, SparseMatrix) else A
        return cls(oracle_svd(dense).S, "oracle")

    @classmethod
    def from_file(cls, path) -> ReferenceSpectrum:
        text = Path(path).read_text()
        values = [float(tok) for line in text.splitlines() if (tok := line.strip())]
        return cls(np.array(values), "file")

    def save(self, path):
        Path(path).write_text("".join(f"{x!r}\n" for x in self.sigmas.tolist()))

    def need(self, count):
        if len(self) < count:
            raise ShapeError(f"reference spectrum has {len(self)} values, {count} needed")
        return self.sigmas[:count]


def _rmul(A, X):
    return spmm(A.T, X) if isinstance(A, SparseMatrix) else np.asarray(A).T @ X


def _positive(values, what):
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        raise DegenerateReference(f"{what}: reference sigma_{bad[0] + 1} is zero")


# ---------------------------------------------------------------------------
# error metrics


def eps_pve(A, U_hat, ref: ReferenceSpectrum) -> float:
    """Worst per-vector Rayleigh-quotient error of the left vectors, scaled by sigma_{k+1}^2."""
    U_hat = np.atleast_2d(np.asarray(U_hat, dtype=np.float64))
    k = U_hat.shape[1]
    sig = ref.need(k + 1)
    _positive(sig[k:], "eps_pve")
    W = _rmul(A, U_hat)
    rayleigh = np.einsum("ij,ij->j", W, W)
    return float(np.max(np.abs(sig[:k] ** 2 - rayleigh)) / sig[k] ** 2)


def eps_res(A, result, ref: ReferenceSpectrum) -> float:
    """Worst residual ``||A^T u_i - s_i v_i|| / sigma_i`` over the computed triplets."""
    U, S, V = result
    k = len(S)
    sig = ref.need(k)
    _positive(sig, "eps_res")
    R = _rmul(A, U) - V * S
    return float(np.max(np.linalg.norm(R, axis=0) / sig))


def eps_sigma(S_hat, ref: ReferenceSpectrum) -> float:
    S_hat = np.asarray(S_hat, dtype=np.float64)
    sig = ref.need(len(S_hat))
    _positive(sig, "eps_sigma")
    return float(np.max(np.abs(sig - S_hat) / sig))


def spectral_norm_estimate(op, iters: int = 300, seed: int = 0) -> float:
    """Largest singular value of a linear operator by the power method on ``B^T B``.

    ``op`` is anything :func:`scipy.sparse.linalg.aslinearoperator` accepts,
    including a ``LinearOperator`` with ``matvec`` and ``rmatvec``. The start
    vector is Gaussian from ``seed``. The estimate never exceeds the true norm
    and approaches it as ``iters`` grows (geometrically in sigma_2/sigma_1).
    """
    if isinstance(op, SparseMatrix):
        op = op.to_scipy()
    B = aslinearoperator(op)
    n = B.shape[1]
    x = gaussian_matrix(n, 1, seed)[:, 0]
    x /= np.linalg.norm(x)
    for _ in range(iters):
        z = B.rmatvec(B.matvec(x))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        x = z / nz
    return float(np.linalg.norm(B.matvec(x)))


def residual_operator(A, result) -> LinearOperator:
    """Matrix-free ``x -> A x - U (S (V^T x))`` with its adjoint."""
    U, S, V = result
    A_op = aslinearoperator(A.to_scipy() if isinstance(A, SparseMatrix) else A)

    def matvec(x):
        x = np.ravel(x)
        return A_op.matvec(x) - U @ (S * (V.T @ x))

    def rmatvec(y):
        y = np.ravel(y)
        return A_op.rmatvec(y) - V @ (S * (U.T @ y))

    return LinearOperator(A_op.shape, matvec=matvec, rmatvec=rmatvec, dtype=np.float64)


def eps_spec(A, result, ref: ReferenceSpectrum, iters: int = 300, seed: int = 0) -> float:
    """Relative excess of the spectral-norm residual over the optimal sigma_{k+1}."""
    k = len(result[1])
    sig = ref.need(k + 1)
    _positive(sig[k:], "eps_spec")
    norm = spectral_norm_estimate(residual_operator(A, result), iters, seed)
    return float((norm - sig[k]) / sig[k])


# ---------------------------------------------------------------------------
# probabilistic bounds on ||Q Q^T A - A||


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the bounds; ``j`` is a 1-based singular value index."""

    j: int
    beta: float
    gamma: float
    k: int
    l: int
    n: int
    p: int
    alphas: tuple = ()


def bound_failure_probability(bp: BoundParams) -> float:
    """The probability ``phi`` that the bound may fail."""
    r = bp.l - bp.j + 1
    g2 = bp.gamma**2
    base = 2.0 * g2 / math.exp(g2 - 1.0)
    first = (math.e / (r * bp.beta)) ** r / math.sqrt(2.0 * math.pi * r)
    tail = base ** (bp.n - bp.k) / math.sqrt(math.pi * (bp.n - bp.k)) + base**bp.l / math.sqrt(math.pi * bp.l)
    return first + tail / (4.0 * bp.gamma * (g2 - 1.0))


def _check_hypotheses(sig, bp):
    if not 1 <= bp.j < bp.k:
        raise HypothesisError(f"need 1 <= j < k, got j={bp.j}, k={bp.k}")
    if not bp.beta > 1:
        raise HypothesisError(f"need beta > 1, got {bp.beta}")
    if not bp.gamma > 1:
        raise HypothesisError(f"need gamma > 1, got {bp.gamma}")
    if bp.l > bp.n - bp.k:
        raise HypothesisError(f"need l <= n - k, got l={bp.l}, n-k={bp.n - bp.k}")
    if bp.p < 0:
        raise HypothesisError("need p >= 0")
    phi = bound_failure_probability(bp)
    if not phi <= 1:
        raise HypothesisError(f"need phi <= 1, got {phi:.4g}")
    need = max(bp.k + 1, bp.l)
    if len(sig) < need:
        raise ShapeError(f"reference spectrum has {len(sig)} values, {need} needed")
    return phi


def _bound(sig, bp, ratio_j, ratio_k):
    l, n, k, j = bp.l, bp.n, bp.k, bp.j
    c = bp.beta**2 * bp.gamma**2
    s_j1 = sig[j]
    s_k1 = sig[k]
    inner = (2 * l * l * c * ratio_j + 1) * s_j1**2 + (2 * l * (n - k) * c * ratio_k + 1) * s_k1**2
    return 2.0 * math.sqrt(inner)


def theorem1_bound(sig: ReferenceSpectrum, bp: BoundParams) -> tuple[float, float]:
    """Bound for the shifted iteration with shifts ``bp.alphas`` (one per step).

    Returns ``(bound, phi)``: the bound holds with probability at least
    ``1 - phi``. Shifts must satisfy ``0 <= alpha_c <= sigma_l^2 / 2``.
    """
    s = sig.sigmas
    phi = _check_hypotheses(s, bp)
    alphas = np.asarray(bp.alphas, dtype=np.float64)
    if alphas.size != bp.p:
        raise HypothesisError(f"need one shift per step: p={bp.p}, got {alphas.size} shifts")
    limit = s[bp.l - 1] ** 2 / 2
    if np.any(alphas < 0) or np.any(alphas > limit * (1 + 1e-12)):
        raise HypothesisError(f"need 0 <= alpha_c <= sigma_l^2/2 = {limit:.6g}")
    sj2, sj12, sk12 = s[bp.j - 1] ** 2, s[bp.j] ** 2, s[bp.k] ** 2
    denom = sj2 - alphas
    ratio_j = float(np.prod(((sj12 - alphas) / denom) ** 2))
    ratio_k = float(np.prod(((sk12 - alphas) / denom) ** 2))
    return _bound(s, bp, ratio_j, ratio_k), phi


def lemma6_bound(sig: ReferenceSpectrum, bp: BoundParams) -> tuple[float, float]:
    """Bound for plain power iteration (``bp.alphas`` is ignored)."""
    s = sig.sigmas
    phi = _check_hypotheses(s, bp)
    ratio_j = (s[bp.j] / s[bp.j - 1]) ** (4 * bp.p)
    ratio_k = (s[bp.k] / s[bp.j - 1]) ** (4 * bp.p)
    return _bound(s, bp, ratio_j, ratio_k), phi


# ---------------------------------------------------------------------------
# flop models


@dataclass(frozen=True)
class FlopConstants:
    """Per-kernel flop constants (tunable; the defaults are generic dense-kernel figures)."""

    c_mul: float = 2.0
    c_qr: float = 4.0
    c_svd: float = 22.0
    c_eig: float = 9.0

    def __post_init__(self):
        if min(self.c_mul, self.c_qr, self.c_svd, self.c_eig) <= 0:
            raise ValueError("flop constants must be positive")


def flop_estimate(alg: str, m: int, n: int, nnz: int, l: int, k: int, p: int, c: FlopConstants = FlopConstants()) -> float:
    """Modelled flop count of the basic (``'basic'``) or shifted/dash (``'dash'``) driver."""
    if alg == "basic":
        return (
            (2 * p + 2) * c.c_mul * nnz * l
            + (p + 1) * c.c_qr * m * l**2
            + c.c_svd * n * l**2
            + c.c_mul * m * l * k
        )
    if alg in ("dash", "shifted"):
        return (
            (2 * p + 2) * c.c_mul * nnz * l
            + (p + 1) * (2 * c.c_mul * n * l**2 + c.c_eig * l**3)
            + 2 * c.c_mul * m * l**2
            + c.c_eig * l**3
            + p * c.c_mul * n * l
            + c.c_mul * n * l * k
        )
    raise ValueError(f"unknown algorithm {alg!r}")
