"""Compressed-sparse-row matrices, Matrix Market I/O and sparse-times-dense products.

These are the only routines in the package that touch the input matrix A.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from . import _threads
from .errors import ParseError, ShapeError, UnsupportedFormat

INDEX = np.int64


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix.

    Rows are stored in ``row_offsets``/``col_indices``/``values`` with column
    indices strictly increasing inside each row and no explicit zeros. Build
    instances with :meth:`from_coo` or :meth:`from_dense` unless the arrays are
    already canonical.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=INDEX)
        indices = np.ascontiguousarray(self.col_indices, dtype=INDEX)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (offsets, indices, values):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", indices)
        object.__setattr__(self, "values", values)
        self._check()

    def _check(self):
        off, idx, val = self.row_offsets, self.col_indices, self.values
        if self.rows < 0 or self.cols < 0:
            raise ShapeError("negative dimensions")
        if off.shape != (self.rows + 1,) or off[0] != 0:
            raise ShapeError("row_offsets must have length rows+1 and start at 0")
        if np.any(np.diff(off) < 0):
            raise ShapeError("row_offsets must be non-decreasing")
        nnz = int(off[-1])
        if idx.shape != (nnz,) or val.shape != (nnz,):
            raise ShapeError("col_indices/values length must equal row_offsets[-1]")
        if nnz:
            if idx.min() < 0 or idx.max() >= self.cols:
                raise ShapeError("column index out of range")
            # strictly increasing within a row: a non-increase is only allowed at a row start
            steps = np.diff(idx) <= 0
            row_starts = np.zeros(nnz, dtype=bool)
            row_starts[off[1:-1][off[1:-1] < nnz]] = True
            if np.any(steps & ~row_starts[1:]):
                raise ShapeError("column indices must be strictly increasing within each row")
            if np.any(val == 0.0):
                raise ShapeError("explicit zeros are not stored")
            if not np.all(np.isfinite(val)):
                raise ShapeError("values must be finite")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    @cached_property
    def T(self) -> SparseMatrix:
        """Transpose, computed once and kept so A^T X products are row-parallel too."""
        return transpose(self)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"

    @classmethod
    def from_coo(cls, rows, cols, row_idx, col_idx, values) -> SparseMatrix:
        """Assemble from 0-based triplets; duplicates are summed, zeros dropped."""
        r = np.asarray(row_idx, dtype=INDEX).ravel()
        c = np.asarray(col_idx, dtype=INDEX).ravel()
        v = np.asarray(values, dtype=np.float64).ravel()
        if not (r.shape == c.shape == v.shape):
            raise ShapeError("triplet arrays must have equal length")
        if r.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise ShapeError("triplet index out of bounds")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size:
            first = np.ones(r.size, dtype=bool)
            first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.flatnonzero(first)
            v = np.add.reduceat(v, starts)
            r, c = r[starts], c[starts]
            keep = v != 0.0
            r, c, v = r[keep], c[keep], v[keep]
        offsets = np.zeros(rows + 1, dtype=INDEX)
        np.cumsum(np.bincount(r, minlength=rows), out=offsets[1:])
        return cls(rows, cols, offsets, c, v)

    @classmethod
    def from_dense(cls, array) -> SparseMatrix:
        a = np.asarray(array, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError("expected a 2-D array")
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def from_scipy(cls, mat) -> SparseMatrix:
        coo = mat.tocoo()
        return cls.from_coo(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_array((self.values, self.col_indices, self.row_offsets), shape=self.shape)


def transpose(A: SparseMatrix) -> SparseMatrix:
    counts = np.bincount(A.col_indices, minlength=A.cols)
    offsets = np.zeros(A.cols + 1, dtype=INDEX)
    np.cumsum(counts, out=offsets[1:])
    # stable sort keeps source rows ascending inside each output row
    order = np.argsort(A.col_indices, kind="stable")
    src_rows = np.repeat(np.arange(A.rows, dtype=INDEX), np.diff(A.row_offsets))
    return SparseMatrix(A.cols, A.rows, offsets, src_rows[order], A.values[order])


@njit(nogil=True, cache=True)
def _csr_dense_rows(offsets, indices, values, X, out, start, stop):
    ncol = X.shape[1]
    for i in range(start, stop):
        for jj in range(offsets[i], offsets[i + 1]):
            j = indices[jj]
            v = values[jj]
            for c in range(ncol):
                out[i, c] += v * X[j, c]


def _nnz_blocks(A, parts):
    """Contiguous row blocks holding roughly equal numbers of nonzeros."""
    if parts <= 1 or A.rows <= 1:
        return [(0, A.rows)]
    targets = A.nnz * np.arange(1, parts) / parts
    cuts = np.searchsorted(A.row_offsets, targets, side="left")
    edges = np.unique(np.concatenate(([0], np.clip(cuts, 0, A.rows), [A.rows])))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]


def spmm(A: SparseMatrix, X) -> np.ndarray:
    """Dense product ``A @ X``.

    Output rows are split across worker threads; every row is accumulated in
    stored column order by a single worker, so the result is bitwise identical
    for any thread count. A 1-D ``X`` gives a 1-D result.
    """
    X = np.asarray(X, dtype=np.float64)
    vector = X.ndim == 1
    if vector:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != A.cols:
        raise ShapeError(f"cannot multiply {A.shape} by {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError("dense operand contains NaN or Inf")
    out = _spmm(A, X)
    return out[:, 0] if vector else out


def _spmm(A, X):
    X = np.ascontiguousarray(X)
    out = np.zeros((A.rows, X.shape[1]))
    if A.nnz == 0 or X.shape[1] == 0:
        return out

    def work(start, stop):
        _csr_dense_rows(A.row_offsets, A.col_indices, A.values, X, out, start, stop)

    _threads.run_blocks(work, _nnz_blocks(A, _threads.get_threads()))
    return out


# ---------------------------------------------------------------------------
# Matrix Market

_FIELDS = {"real", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric"}


def _open_text(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt")
    return open(path)


def _parse_banner(line, lineno):
    tokens = line.split()
    if not tokens or tokens[0].lower() != "%%matrixmarket":
        raise ParseError(lineno, "missing %%MatrixMarket banner")
    if len(tokens) != 5:
        raise ParseError(lineno, "banner must have object, format, field and symmetry")
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise UnsupportedFormat(f"object type {obj!r} is not supported")
    if fmt == "array":
        raise UnsupportedFormat("dense 'array' files are not sparse inputs")
    if fmt != "coordinate":
        raise ParseError(lineno, f"unknown format {fmt!r}")
    if field in ("complex",):
        raise UnsupportedFormat("complex matrices are not supported")
    if field not in _FIELDS:
        raise ParseError(lineno, f"unknown field {field!r}")
    if symmetry in ("hermitian", "skew-symmetric"):
        raise UnsupportedFormat(f"{symmetry} matrices are not supported")
    if symmetry not in _SYMMETRIES:
        raise ParseError(lineno, f"unknown symmetry {symmetry!r}")
    return fmt, field, symmetry


def _data_lines(fh, start):
    """Yield (lineno, stripped line) for non-comment, non-blank lines."""
    for lineno, line in enumerate(fh, start=start):
        s = line.strip()
        if s and not s.startswith("%"):
            yield lineno, s


def load_matrix_market(path) -> SparseMatrix:
    """Read a coordinate Matrix Market file into a canonical CSR matrix.

    Indices are converted to 0-based, duplicate coordinates summed, symmetric
    storage mirrored (diagonal kept once) and ``pattern`` entries set to 1.0.
    """
    with _open_text(path) as fh:
        banner = fh.readline()
        _, field, symmetry = _parse_banner(banner, 1)
        lines = _data_lines(fh, 2)
        try:
            lineno, size_line = next(lines)
        except StopIteration:
            raise ParseError(2, "missing size line") from None
        parts = size_line.split()
        try:
            nrows, ncols, nent = (int(t) for t in parts)
        except ValueError:
            raise ParseError(lineno, "size line must be three integers") from None
        if nrows < 0 or ncols < 0 or nent < 0:
            raise ParseError(lineno, "negative size")
        if symmetry == "symmetric" and nrows != ncols:
            raise ParseError(lineno, "symmetric matrix must be square")

        want = 2 if field == "pattern" else 3
        r = np.empty(nent, dtype=INDEX)
        c = np.empty(nent, dtype=INDEX)
        v = np.ones(nent)
        count = 0
        last = lineno
        for lineno, s in lines:
            last = lineno
            tokens = s.split()
            if len(tokens) != want:
                raise ParseError(lineno, f"expected {want} fields, got {len(tokens)}")
            if count >= nent:
                raise ParseError(lineno, f"more than the declared {nent} entries")
            try:
                i, j = int(tokens[0]), int(tokens[1])
                if want == 3:
                    v[count] = float(tokens[2])
            except ValueError:
                raise ParseError(lineno, "malformed entry") from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise ParseError(lineno, f"index ({i}, {j}) outside {nrows}x{ncols}")
            r[count] = i - 1
            c[count] = j - 1
            count += 1
        if count != nent:
            raise ParseError(last + 1, f"expected {nent} entries, found {count}")

    if symmetry == "symmetric":
        off = r != c
        r, c, v = np.concatenate((r, c[off])), np.concatenate((c, r[off])), np.concatenate((v, v[off]))
    return SparseMatrix.from_coo(nrows, ncols, r, c, v)


def _fmt(x):
    return repr(float(x))


def write_matrix_market(path, A: SparseMatrix, comment=None):
    """Write ``A`` as ``coordinate real general`` with round-trip exact values."""
    rows = np.repeat(np.arange(1, A.rows + 1), np.diff(A.row_offsets))
    body = "".join(
        f"{i} {j} {_fmt(x)}\n" for i, j, x in zip(rows.tolist(), (A.col_indices + 1).tolist(), A.values.tolist())
    )
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.rows} {A.cols} {A.nnz}\n")
        fh.write(body)


def write_dense_array(path, X):
    """Write a dense matrix as a Matrix Market ``array real general`` file (column-major)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{X.shape[0]} {X.shape[1]}\n")
        fh.write("".join(f"{_fmt(x)}\n" for x in X.ravel(order="F").tolist()))


def read_dense_array(path) -> np.ndarray:
    with _open_text(path) as fh:
        tokens = fh.readline().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket" or tokens[2].lower() != "array":
            raise ParseError(1, "expected a '%%MatrixMarket matrix array' banner")
        if tokens[3].lower() not in ("real", "integer") or tokens[4].lower() != "general":
            raise UnsupportedFormat("only real general dense arrays are supported")
        lines = _data_lines(fh, 2)
        try:
            lineno, size = next(lines)
            m, n = (int(t) for t in size.split())
        except (StopIteration, ValueError):
            raise ParseError(2, "bad size line") from None
        vals = []
        for lineno, s in lines:
            try:
                vals.append(float(s))
            except ValueError:
                raise ParseError(lineno, "malformed value") from None
    if len(vals) != m * n:
        raise ParseError(lineno + 1, f"expected {m * n} values, found {len(vals)}")
    return np.array(vals).reshape((m, n), order="F")


# ---------------------------------------------------------------------------
# binary cache: b"DSH1", u64 rows/cols/nnz, then offsets, indices (u64) and values (f64), little-endian

_MAGIC = b"DSH1"


def save_cache(path, A: SparseMatrix):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQ", A.rows, A.cols, A.nnz))
        fh.write(A.row_offsets.astype("<u8").tobytes())
        fh.write(A.col_indices.astype("<u8").tobytes())
        fh.write(A.values.astype("<f8").tobytes())


def load_cache(path) -> SparseMatrix:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise UnsupportedFormat("not a DSH1 cache file")
        rows, cols, nnz = struct.unpack("<QQQ", fh.read(24))
        offsets = np.frombuffer(fh.read(8 * (rows + 1)), dtype="<u8").astype(INDEX)
        indices = np.frombuffer(fh.read(8 * nnz), dtype="<u8").astype(INDEX)
        values = np.frombuffer(fh.read(8 * nnz), dtype="<f8").astype(np.float64)
    return SparseMatrix(rows, cols, offsets, indices, values)
