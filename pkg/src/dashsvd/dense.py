"""Dense kernels used by the randomized drivers.

Everything here works on plain ``float64`` numpy arrays. ``eig_svd`` is the
Gram-matrix SVD used inside the power iteration; ``oracle_svd`` is a one-sided
Jacobi SVD kept deliberately independent of it so tests can cross-check the two.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

from . import _threads
from .errors import NumericalError, RankDeficient, ShapeError

EPS = np.finfo(np.float64).eps
ORACLE_MAX_DIM = 2000
_GRAM_BLOCK = 8192


class TruncatedSvd(NamedTuple):
    """``U`` (m x k), ``S`` (k, descending) and ``V`` (n x k) with A ~= U diag(S) V^T."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


class EigenPair(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_dense(C, name="matrix"):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ShapeError(f"{name} contains NaN or Inf")
    return C


def gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """I.i.d. standard normal ``rows x cols`` matrix.

    The stream comes from numpy's counter-based Philox4x64-10 bit generator
    keyed by ``seed``, with normals drawn by ``Generator.standard_normal``
    (ziggurat) and laid out in row-major order. The same seed always gives a
    bitwise identical matrix.
    """
    if rows < 1 or cols < 1:
        raise ShapeError("gaussian_matrix needs rows, cols >= 1")
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.standard_normal((rows, cols))


def gram(C: np.ndarray) -> np.ndarray:
    """``C^T C`` summed over fixed row blocks so the result ignores the worker count."""
    m = C.shape[0]
    if m <= _GRAM_BLOCK or not _threads.is_deterministic():
        return C.T @ C
    blocks = [(s, min(s + _GRAM_BLOCK, m)) for s in range(0, m, _GRAM_BLOCK)]
    partial = {}

    def work(start, stop):
        Cb = C[start:stop]
        partial[start] = Cb.T @ Cb

    _threads.run_blocks(work, blocks)
    G = partial[blocks[0][0]]
    for start, _ in blocks[1:]:
        G += partial[start]
    return G


def sym_eig(G) -> EigenPair:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending.

    Backed by LAPACK's divide-and-conquer symmetric solver (tridiagonal
    reduction followed by an implicit iteration).
    """
    G = as_dense(G, "G")
    n = G.shape[0]
    if G.shape != (n, n):
        raise ShapeError(f"sym_eig needs a square matrix, got {G.shape}")
    scale = np.abs(G).max() if G.size else 0.0
    if n and np.abs(G - G.T).max() > 1e-10 * scale:
        raise ShapeError("sym_eig needs a symmetric matrix")
    try:
        w, V = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    return EigenPair(w, V)


def fix_signs(U, V):
    """Make the first nonzero entry of every column of V non-negative, flipping U alongside."""
    nz = V != 0
    first = np.argmax(nz, axis=0)
    lead = V[first, np.arange(V.shape[1])]
    flip = lead < 0
    if flip.any():
        V = V.copy()
        U = U.copy()
        V[:, flip] *= -1.0
        U[:, flip] *= -1.0
    return U, V


def eig_svd(C, rank_floor: float | None = None) -> TruncatedSvd:
    """Economy SVD of a tall matrix through the eigen-decomposition of ``C^T C``.

    Eigenvalues come back ascending and are reversed so that ``S`` is
    descending, with columns of U and V reordered to match. Raises
    :class:`RankDeficient` when an eigenvalue of ``C^T C`` falls below
    ``rank_floor**2``; the default floor is ``max(m, n) * eps * sigma_max``.
    """
    C = as_dense(C, "C")
    m, n = C.shape
    if m < n:
        raise ShapeError(f"eig_svd needs rows >= cols, got {C.shape}")
    G = gram(C)
    w, V = sym_eig(G)
    w = w[::-1]
    V = np.ascontiguousarray(V[:, ::-1])
    if rank_floor is None:
        rank_floor = max(m, n) * EPS * np.sqrt(max(w[0], 0.0))
    bad = np.flatnonzero(~(w > rank_floor**2))
    if bad.size:
        raise RankDeficient(int(bad[0]), f"eig_svd: sigma_{bad[0] + 1}^2 = {w[bad[0]]:.3e} below rank floor")
    S = np.sqrt(w)
    U = (C @ V) / S
    U, V = fix_signs(U, V)
    return TruncatedSvd(U, S, V)


def qr_orth(C, strict: bool = True) -> np.ndarray:
    """Orthonormal basis for the columns of a tall ``C`` via Householder QR.

    With ``strict`` a numerically rank-deficient ``C`` raises
    :class:`RankDeficient`; otherwise the (still orthonormal) Q is returned as is.
    """
    C = as_dense(C, "C")
    m, n = C.shape
    if m < n:
        raise ShapeError(f"qr_orth needs rows >= cols, got {C.shape}")
    Q, R = np.linalg.qr(C)
    if strict:
        d = np.abs(np.diag(R))
        floor = max(m, n) * EPS * (d.max() if d.size else 0.0)
        bad = np.flatnonzero(~(d > floor))
        if bad.size:
            raise RankDeficient(int(bad[0]), f"qr_orth: column {bad[0]} is linearly dependent")
    return Q


@njit(cache=True)
def _jacobi_sweeps(W, V, tol, max_sweeps):
    # rows of W and V are the working columns; each pass sweeps all pairs (p, q)
    n, m = W.shape
    d = np.empty(n)
    for sweep in range(max_sweeps):
        # squared norms are refreshed exactly each sweep and updated in between
        for p in range(n):
            acc = 0.0
            for i in range(m):
                acc += W[p, i] * W[p, i]
            d[p] = acc
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = d[p]
                b = d[q]
                g = 0.0
                for i in range(m):
                    g += W[p, i] * W[q, i]
                if g == 0.0 or abs(g) <= tol * np.sqrt(a) * np.sqrt(b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    sgn = 1.0 if zeta >= 0.0 else -1.0
                    t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    wp = W[p, i]
                    wq = W[q, i]
                    W[p, i] = c * wp - s * wq
                    W[q, i] = s * wp + c * wq
                for i in range(n):
                    vp = V[p, i]
                    vq = V[q, i]
                    V[p, i] = c * vp - s * vq
                    V[q, i] = s * vp + c * vq
                d[p] = max(a - t * g, 0.0)
                d[q] = b + t * g
        if not rotated:
            return sweep + 1
    return -1


def _complete_basis(U, filled):
    """Fill the columns of U not marked in ``filled`` with an orthonormal completion."""
    m = U.shape[0]
    have = [U[:, j] for j in range(U.shape[1]) if filled[j]]
    candidates = iter(range(m))
    for j in range(U.shape[1]):
        if filled[j]:
            continue
        for i in candidates:
            v = np.zeros(m)
            v[i] = 1.0
            for _ in range(2):
                for h in have:
                    v -= (h @ v) * h
            nrm = np.linalg.norm(v)
            if nrm > 0.5:
                v /= nrm
                U[:, j] = v
                have.append(v)
                break
    return U


def oracle_svd(C, max_sweeps: int = 60) -> TruncatedSvd:
    """Full economy SVD by one-sided (Hestenes) Jacobi rotations.

    Intended as ground truth for small problems (min dimension <= 2000). Zero
    singular values get an orthonormal completion for their U columns.
    """
    C = as_dense(C, "C")
    m, n = C.shape
    if min(m, n) > ORACLE_MAX_DIM:
        raise ShapeError(f"oracle_svd refuses min dimension {min(m, n)} > {ORACLE_MAX_DIM}")
    if m < n:
        U, S, V = oracle_svd(C.T, max_sweeps)
        U, V = fix_signs(V, U)
        return TruncatedSvd(U, S, V)
    W = np.array(C.T, order="C")  # always a copy: the sweeps rotate W in place
    Vt = np.eye(n)
    if n and m:
        sweeps = _jacobi_sweeps(W, Vt, m * EPS, max_sweeps)
        if sweeps < 0:
            raise NumericalError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")
    sig = np.sqrt(np.einsum("ij,ij->i", W, W))
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    W = W[order]
    V = Vt[order].T.copy()
    U = np.zeros((m, n))
    filled = sig > 0.0
    U[:, filled] = (W[filled] / sig[filled, None]).T
    U = _complete_basis(U, filled)
    U, V = fix_signs(U, V)
    return TruncatedSvd(U, sig, V)
