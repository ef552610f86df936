"""Randomized truncated SVD drivers.

All three drivers work on an operator ``M`` with at least as many rows as
columns, so the subspace basis ``Q`` lives in the (smaller) column space:

* ``basic``   - sketch, ``p`` power steps ``Q = orth(M^T (M Q))``, SVD of ``M Q``.
* ``shifted`` - the same with ``M^T M - alpha I`` and the dynamic shift update.
* ``dash``    - ``shifted`` plus the per-vector-error stopping rule.

:func:`solve` picks the orientation: a wide input is handled through its
transpose and U/V are swapped back.
"""
from __future__ import annotations

import time
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from . import _threads
from .dense import TruncatedSvd, eig_svd, fix_signs, gaussian_matrix, qr_orth
from .errors import ConfigError, NumericalError, ShapeError
from .sparse import SparseMatrix, spmm

ALGORITHMS = ("basic", "shifted", "dash")
_ORTHONORMALIZERS = {"basic": ("qr", "eigsvd"), "shifted": ("eigsvd", "svd"), "dash": ("eigsvd", "svd")}
_DEFAULT_ORTH = {"basic": "qr", "shifted": "eigsvd", "dash": "eigsvd"}


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one truncated SVD run.

    ``p`` is the fixed number of power steps for ``basic`` and ``shifted``;
    ``dash`` instead iterates until the stopping rule holds or ``p_max`` is
    reached. ``s`` defaults to ``k // 2`` (at least 1). ``shift_update='fixed'``
    freezes the shift after the first step, for comparison experiments.
    """

    k: int
    s: int | None = None
    p: int | None = None
    p_max: int = 1000
    tol: float = 1e-2
    seed: int = 0
    algorithm: str = "dash"
    orthonormalizer: str | None = None
    threads: int | None = None
    deterministic: bool = True
    shift_update: str = "dynamic"

    def __post_init__(self):
        if self.s is None:
            object.__setattr__(self, "s", max(1, self.k // 2))
        if self.orthonormalizer is None and self.algorithm in _DEFAULT_ORTH:
            object.__setattr__(self, "orthonormalizer", _DEFAULT_ORTH[self.algorithm])
        self._validate()

    @property
    def l(self) -> int:
        return self.k + self.s

    def _validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.s < 0:
            raise ConfigError("s must be >= 0")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.p_max < 1:
            raise ConfigError("p_max must be >= 1")
        if self.p is not None and self.p < 0:
            raise ConfigError("p must be >= 0")
        if self.algorithm in ("basic", "shifted") and self.p is None:
            raise ConfigError(f"algorithm {self.algorithm!r} needs a power count p")
        if self.algorithm == "dash" and self.s < 1:
            raise ConfigError("dash needs s >= 1: the stopping rule reads the (k+1)-th value")
        if self.orthonormalizer not in _ORTHONORMALIZERS[self.algorithm]:
            allowed = ", ".join(_ORTHONORMALIZERS[self.algorithm])
            raise ConfigError(f"orthonormalizer for {self.algorithm!r} must be one of: {allowed}")
        if self.shift_update not in ("dynamic", "fixed"):
            raise ConfigError("shift_update must be 'dynamic' or 'fixed'")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def check_shape(self, shape):
        if self.l > min(shape):
            raise ShapeError(f"k + s = {self.l} exceeds min{tuple(shape)} = {min(shape)}")


@dataclass
class IterationState:
    """Snapshot handed to iteration callbacks.

    ``Q`` is the basis the step started from, ``s_hat`` the values returned
    by the step's eigSVD and ``alpha`` the shift the step used.
    """

    Q: np.ndarray
    alpha: float
    s_hat: np.ndarray
    iteration: int


@dataclass
class ShiftTrace:
    alphas: np.ndarray
    s_hat_history: list = field(default_factory=list)
    stopped_at: int = 0
    stop_reason: str = "fixed_p"
    timings: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# operator helpers


def _mul(M, X):
    return spmm(M, X) if isinstance(M, SparseMatrix) else M @ X


def _rmul(M, X):
    # M^T X; the sparse transpose is built once and cached on the matrix
    return spmm(M.T, X) if isinstance(M, SparseMatrix) else M.T @ X


def _transpose(A):
    return A.T


def _as_operator(A):
    if isinstance(A, SparseMatrix):
        return A
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ShapeError("matrix contains NaN or Inf")
    return A


def _orth_with_values(Y, method):
    if method == "svd":
        try:
            U, S, _ = np.linalg.svd(Y, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"dense SVD failed: {exc}") from exc
        return U, S
    U, S, _ = eig_svd(Y)
    return U, S


# ---------------------------------------------------------------------------
# building blocks


def update_shift(alpha: float, s_ll: float) -> float:
    """Move the shift halfway towards the smallest surrogate value when it is larger."""
    if s_ll > alpha:
        return (s_ll + alpha) / 2.0
    return alpha


def pve_stop_check(s_hat_prev, alpha_prev, s_hat, alpha, k, tol) -> bool:
    """True when every leading surrogate ``s_hat[i] + alpha`` (i < k) moved by
    at most ``tol`` times the current ``s_hat[k] + alpha``."""
    s_hat_prev = np.asarray(s_hat_prev, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if len(s_hat) < k + 1 or len(s_hat_prev) < k + 1:
        raise ShapeError(f"stopping rule needs at least k+1 = {k + 1} values")
    denom = s_hat[k] + alpha
    # grouped as surrogate minus surrogate so identical inputs give exactly zero
    change = np.abs((s_hat_prev[:k] + alpha_prev) - (s_hat[:k] + alpha))
    return bool(np.all(change <= tol * denom))


def sketch_basis(M, l: int, seed: int, orthonormalizer: str = "eigsvd") -> np.ndarray:
    """Orthonormal basis of ``M^T Omega`` for a Gaussian ``Omega`` with ``M.shape[0]`` rows."""
    omega = gaussian_matrix(M.shape[0], l, seed)
    Y = _rmul(M, omega)
    if orthonormalizer == "qr":
        return qr_orth(Y, strict=False)
    return _orth_with_values(Y, orthonormalizer)[0]


def shifted_power_iteration(
    M,
    Q: np.ndarray,
    iterations: int,
    *,
    k: int | None = None,
    tol: float | None = None,
    orthonormalizer: str = "eigsvd",
    shift_update: str = "dynamic",
    callback: Callable[[IterationState], None] | None = None,
) -> tuple[np.ndarray, ShiftTrace]:
    """Run up to ``iterations`` steps of ``Q = orth(M^T (M Q) - alpha Q)``.

    With ``tol`` (and ``k``) set, stops as soon as the per-vector rule holds;
    the check is made before the shift update, on the freshly computed values.
    Returns the final basis and a trace whose ``alphas[c]`` is the shift used
    in step ``c + 1``.
    """
    watch = tol is not None
    if watch and k is None:
        raise ConfigError("the stopping rule needs k")
    l = Q.shape[1]
    alpha = 0.0
    alpha_prev = 0.0
    s_prev = np.zeros(l)
    alphas = []
    history = []
    reason = "fixed_p"
    for j in range(1, iterations + 1):
        Y = _rmul(M, _mul(M, Q))
        if alpha:
            Y -= alpha * Q
        Q_in = Q
        Q, s_hat = _orth_with_values(Y, orthonormalizer)
        alphas.append(alpha)
        history.append(s_hat)
        if callback is not None:
            callback(IterationState(Q_in, alpha, s_hat, j))
        if watch and pve_stop_check(s_prev, alpha_prev, s_hat, alpha, k, tol):
            reason = "tol_met"
            break
        if shift_update == "dynamic" or j == 1:
            alpha = update_shift(alpha, s_hat[-1])
        s_prev, alpha_prev = s_hat, alpha
    else:
        if watch:
            reason = "p_max_reached"
    trace = ShiftTrace(np.array(alphas), history, len(alphas), reason)
    return Q, trace


def _finalize(M, Q, k):
    B = _mul(M, Q)
    U, S, W = eig_svd(B)
    return U[:, :k], S[:k].copy(), Q @ W[:, :k]


# ---------------------------------------------------------------------------
# drivers on an oriented operator (rows >= cols)


def _basic(M, cfg):
    t0 = time.perf_counter()
    Q = sketch_basis(M, cfg.l, cfg.seed, cfg.orthonormalizer)
    for _ in range(cfg.p):
        Y = _rmul(M, _mul(M, Q))
        if cfg.orthonormalizer == "qr":
            Q = qr_orth(Y, strict=False)
        else:
            Q = eig_svd(Y).U
    t1 = time.perf_counter()
    B = _mul(M, Q)
    try:
        U, S, Wt = np.linalg.svd(B, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"dense SVD failed: {exc}") from exc
    k = cfg.k
    result = (U[:, :k], S[:k].copy(), Q @ Wt[:k].T)
    trace = ShiftTrace(np.zeros(cfg.p), [], cfg.p, "fixed_p")
    trace.timings = {"iterate": t1 - t0, "finalize": time.perf_counter() - t1}
    return result, trace


def _shifted(M, cfg, callback=None):
    t0 = time.perf_counter()
    Q = sketch_basis(M, cfg.l, cfg.seed, cfg.orthonormalizer)
    if cfg.algorithm == "dash":
        Q, trace = shifted_power_iteration(
            M, Q, cfg.p_max, k=cfg.k, tol=cfg.tol,
            orthonormalizer=cfg.orthonormalizer, shift_update=cfg.shift_update, callback=callback,
        )
    else:
        Q, trace = shifted_power_iteration(
            M, Q, cfg.p, orthonormalizer=cfg.orthonormalizer,
            shift_update=cfg.shift_update, callback=callback,
        )
    t1 = time.perf_counter()
    result = _finalize(M, Q, cfg.k)
    trace.timings = {"iterate": t1 - t0, "finalize": time.perf_counter() - t1}
    return result, trace


# ---------------------------------------------------------------------------
# public entry points


def solve(A, cfg: SolverConfig, callback=None) -> tuple[TruncatedSvd, ShiftTrace]:
    """Truncated SVD of ``A`` (a :class:`SparseMatrix` or dense array) per ``cfg``.

    Inputs with fewer rows than columns are processed through their
    transpose; square inputs take the direct path. ``callback`` receives an
    :class:`IterationState` after every shifted step (ignored by ``basic``).
    """
    A = _as_operator(A)
    cfg.check_shape(A.shape)
    flipped = A.shape[0] < A.shape[1]
    M = _transpose(A) if flipped else A
    with ExitStack() as stack:
        if cfg.deterministic:
            # threaded BLAS is not reproducible across thread counts
            stack.enter_context(threadpool_limits(limits=1, user_api="blas"))
        elif cfg.threads is not None:
            stack.enter_context(threadpool_limits(limits=cfg.threads, user_api="blas"))
        stack.enter_context(_threads.using_threads(cfg.threads))
        stack.enter_context(_threads.determinism(cfg.deterministic))
        if cfg.algorithm == "basic":
            (U, S, V), trace = _basic(M, cfg)
        else:
            (U, S, V), trace = _shifted(M, cfg, callback)
    if flipped:
        U, V = V, U
    U, V = fix_signs(U, V)
    return TruncatedSvd(U, S, V), trace


def _with_algorithm(cfg, name):
    if cfg.algorithm == name:
        return cfg
    orth = cfg.orthonormalizer if cfg.orthonormalizer in _ORTHONORMALIZERS[name] else None
    return replace(cfg, algorithm=name, orthonormalizer=orth)


def basic_rsvd(A, cfg: SolverConfig) -> TruncatedSvd:
    """Randomized SVD with plain power iteration."""
    return solve(A, _with_algorithm(cfg, "basic"))[0]


def shifted_rsvd(A, cfg: SolverConfig, callback=None) -> tuple[TruncatedSvd, ShiftTrace]:
    """Randomized SVD with exactly ``cfg.p`` dynamically shifted power steps."""
    return solve(A, _with_algorithm(cfg, "shifted"), callback)


def dash_svd(A, cfg: SolverConfig, callback=None) -> tuple[TruncatedSvd, ShiftTrace]:
    """Shifted power iteration that stops once the per-vector error estimate drops below ``cfg.tol``."""
    return solve(A, _with_algorithm(cfg, "dash"), callback)
