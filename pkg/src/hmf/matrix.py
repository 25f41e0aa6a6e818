"""Weight-matrix representations and their batch-1 matvec kernels.

A compressed matrix is one of four carriers:

* ``DenseMatrix``   -- plain 2-D array, the uncompressed reference.
* ``LmfMatrix``     -- low-rank product ``left @ right``.
* ``HmfMatrix``     -- hybrid split: a dense block of ``j`` top rows stacked
  over a rank-``k`` product covering the remaining ``m - j`` rows.
* ``CsrMatrix``     -- magnitude-pruned sparse matrix in CSR layout.

Every carrier exposes the same small surface: ``matvec`` (never materializes
the full matrix), ``reconstruct`` (densify, the test oracle), ``param_count``
(stored scalars), ``compression_factor``, and ``mac_count`` /
``matvec_counted`` (analytic and instrumented multiply-accumulate counts).
All kernels accept a vector ``(n,)`` or a column batch ``(n, b)``.

Correctness paths use float64; benchmark callers pass float32 operands.
Storage is row-major throughout and the hybrid split is a row split.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions do not match the declared structure."""


class StructureError(ValueError):
    """Stored representation violates a structural invariant (CSR layout)."""


def _as_float_array(a, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.asarray(a)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def _check_operand(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim not in (1, 2) or x.shape[0] != n:
        raise ShapeError(f"operand must have leading dimension {n}, got shape {x.shape}")
    return x


@dataclass(eq=False)
class DenseMatrix:
    """Uncompressed ``(m, n)`` matrix; the baseline every scheme is measured against."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_float_array(self.data, "data")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def matvec(self, x) -> np.ndarray:
        x = _check_operand(x, self.cols)
        return self.data @ x

    def matvec_counted(self, x) -> tuple[np.ndarray, int]:
        """Kernel plus the number of multiply-accumulates it performed."""
        y = self.matvec(x)
        return y, self.data.shape[0] * self.data.shape[1]

    def mac_count(self) -> int:
        return self.rows * self.cols

    def reconstruct(self) -> "DenseMatrix":
        return DenseMatrix(self.data.copy())

    def param_count(self) -> int:
        return self.rows * self.cols

    def compression_factor(self) -> float:
        return 1.0

    def trainable_blocks(self) -> dict[str, np.ndarray]:
        return {"data": self.data}


@dataclass(eq=False)
class LmfMatrix:
    """Low-rank factorization ``A ~ left @ right``.

    ``left`` is ``(m, r)``, ``right`` is ``(r, n)``, ``1 <= r <= min(m, n)``.
    Stores ``r * (m + n)`` scalars in place of ``m * n``.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = _as_float_array(self.left, "left")
        self.right = _as_float_array(self.right, "right")
        m, r = self.left.shape
        r2, n = self.right.shape
        if r != r2:
            raise ShapeError(f"inner dimensions disagree: left {self.left.shape}, right {self.right.shape}")
        if not (1 <= r <= min(m, n)):
            raise ShapeError(f"rank {r} outside [1, min({m}, {n})]")

    @property
    def rows(self) -> int:
        return self.left.shape[0]

    @property
    def cols(self) -> int:
        return self.right.shape[1]

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    def matvec(self, x) -> np.ndarray:
        x = _check_operand(x, self.cols)
        return self.left @ (self.right @ x)

    def matvec_counted(self, x) -> tuple[np.ndarray, int]:
        x = _check_operand(x, self.cols)
        t = self.right @ x
        y = self.left @ t
        macs = self.right.shape[0] * self.right.shape[1] + self.left.shape[0] * self.left.shape[1]
        return y, macs

    def mac_count(self) -> int:
        return self.rank * (self.rows + self.cols)

    def reconstruct(self) -> DenseMatrix:
        return DenseMatrix(self.left @ self.right)

    def param_count(self) -> int:
        return self.rank * (self.rows + self.cols)

    def compression_factor(self) -> float:
        return self.rows * self.cols / self.param_count()

    def trainable_blocks(self) -> dict[str, np.ndarray]:
        return {"left": self.left, "right": self.right}


@dataclass(eq=False)
class HmfMatrix:
    """Hybrid split: ``j`` dense top rows over a rank-``k`` tail.

    The represented matrix is ``vstack([top, low_left @ low_right])`` with

    * ``top``       ``(j, n)``     dense block, rows kept verbatim,
    * ``low_left``  ``(m - j, k)`` tall factor,
    * ``low_right`` ``(k, n)``     flat factor.

    ``j`` may be 0 (pure low rank) or ``m`` (pure dense, ``k = 0``); whenever
    ``j < m`` the tail must carry ``k >= 1``.  Stored scalars:
    ``j*n + k*(m - j + n)``.
    """

    top: np.ndarray
    low_left: np.ndarray
    low_right: np.ndarray

    def __post_init__(self):
        self.top = _as_float_array(self.top, "top")
        self.low_left = _as_float_array(self.low_left, "low_left")
        self.low_right = _as_float_array(self.low_right, "low_right")
        j, n = self.top.shape
        tail, k = self.low_left.shape
        k2, n2 = self.low_right.shape
        if k != k2:
            raise ShapeError(f"inner dimensions disagree: low_left {self.low_left.shape}, low_right {self.low_right.shape}")
        if tail > 0 and n2 != n:
            raise ShapeError(f"column counts disagree: top has {n}, low_right has {n2}")
        if tail == 0:
            if k != 0:
                raise ShapeError("empty tail must have k = 0")
        else:
            if k < 1:
                raise ShapeError("non-empty tail requires k >= 1")
            if k > min(tail, n):
                raise ShapeError(f"k = {k} exceeds min(m - j, n) = {min(tail, n)}")

    @property
    def rows(self) -> int:
        return self.top.shape[0] + self.low_left.shape[0]

    @property
    def cols(self) -> int:
        return self.top.shape[1]

    @property
    def dense_rows(self) -> int:
        """The split point j: how many top rows are stored verbatim."""
        return self.top.shape[0]

    @property
    def rank(self) -> int:
        """The tail rank k."""
        return self.low_left.shape[1]

    def matvec(self, x) -> np.ndarray:
        # Top block and tail are applied separately; the tail goes through
        # the k-dimensional bottleneck, so the full matrix never exists.
        x = _check_operand(x, self.cols)
        y_top = self.top @ x
        y_tail = self.low_left @ (self.low_right @ x)
        return np.concatenate([y_top, y_tail])

    def matvec_counted(self, x) -> tuple[np.ndarray, int]:
        x = _check_operand(x, self.cols)
        y_top = self.top @ x
        t = self.low_right @ x
        y_tail = self.low_left @ t
        macs = (
            self.top.shape[0] * self.top.shape[1]
            + self.low_right.shape[0] * self.low_right.shape[1]
            + self.low_left.shape[0] * self.low_left.shape[1]
        )
        return np.concatenate([y_top, y_tail]), macs

    def mac_count(self) -> int:
        m, n, j, k = self.rows, self.cols, self.dense_rows, self.rank
        return j * n + k * n + k * (m - j)

    def op_reduction(self) -> tuple[int, float]:
        """(macs per matvec, dense-matvec macs / that count)."""
        ops = self.mac_count()
        return ops, self.rows * self.cols / ops

    def reconstruct(self) -> DenseMatrix:
        return DenseMatrix(np.concatenate([self.top, self.low_left @ self.low_right], axis=0))

    def param_count(self) -> int:
        m, n, j, k = self.rows, self.cols, self.dense_rows, self.rank
        return j * n + k * (m - j + n)

    def compression_factor(self) -> float:
        return self.rows * self.cols / self.param_count()

    def trainable_blocks(self) -> dict[str, np.ndarray]:
        return {"top": self.top, "low_left": self.low_left, "low_right": self.low_right}


@dataclass(eq=False)
class CsrMatrix:
    """Sparse matrix in compressed-sparse-row layout.

    ``row_offsets`` has ``m + 1`` entries with ``row_offsets[0] == 0`` and
    ``row_offsets[-1] == nnz``; column indices are strictly increasing within
    each row and live in ``[0, cols)``.  ``param_count`` counts stored values
    only; ``index_count`` reports the index overhead separately.
    """

    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_offsets = np.ascontiguousarray(np.asarray(self.row_offsets, dtype=np.int64))
        self.col_indices = np.ascontiguousarray(np.asarray(self.col_indices, dtype=np.int64))
        self.values = _as_float_array(self.values, "values", ndim=1)
        if self.cols < 0:
            raise StructureError(f"negative column count {self.cols}")
        if self.row_offsets.ndim != 1 or self.row_offsets.size < 1:
            raise StructureError("row_offsets must be a non-empty 1-D array")
        if self.row_offsets[0] != 0:
            raise StructureError("row_offsets must start at 0")
        if np.any(np.diff(self.row_offsets) < 0):
            raise StructureError("row_offsets must be non-decreasing")
        if self.row_offsets[-1] != self.values.size:
            raise StructureError(
                f"row_offsets end at {self.row_offsets[-1]} but {self.values.size} values are stored"
            )
        if self.col_indices.shape != self.values.shape:
            raise StructureError("col_indices and values must have equal length")
        if self.values.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.cols:
                raise StructureError(f"column indices outside [0, {self.cols})")
            for r in range(self.rows):
                lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
                if hi - lo > 1 and np.any(np.diff(self.col_indices[lo:hi]) <= 0):
                    raise StructureError(f"column indices not strictly increasing in row {r}")

    @property
    def rows(self) -> int:
        return self.row_offsets.size - 1

    @property
    def nnz(self) -> int:
        return self.values.size

    @cached_property
    def _scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.rows, self.cols)
        )

    @cached_property
    def row_indices(self) -> np.ndarray:
        """Row index of each stored value, aligned with col_indices/values."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_offsets))

    def refresh(self) -> None:
        """Drop cached kernel state after in-place edits to ``values``."""
        self.__dict__.pop("_scipy", None)

    def matvec(self, x) -> np.ndarray:
        x = _check_operand(x, self.cols)
        return self._scipy @ x

    def rmatvec(self, g) -> np.ndarray:
        """Transpose product ``A.T @ g``; used by the fine-tuning gradients."""
        g = _check_operand(g, self.rows)
        return self._scipy.T @ g

    def matvec_counted(self, x) -> tuple[np.ndarray, int]:
        return self.matvec(x), self.nnz

    def mac_count(self) -> int:
        return self.nnz

    def reconstruct(self) -> DenseMatrix:
        # Pure-numpy densify, kept independent of the sparse kernel so the
        # two can serve as oracle and subject for each other.
        out = np.zeros((self.rows, self.cols), dtype=self.values.dtype)
        out[self.row_indices, self.col_indices] = self.values
        return DenseMatrix(out)

    def param_count(self) -> int:
        return self.nnz

    def index_count(self) -> int:
        """Stored index scalars: one column index per value plus the offsets."""
        return self.nnz + self.rows + 1

    def compression_factor(self) -> float:
        return self.rows * self.cols / self.param_count()

    def trainable_blocks(self) -> dict[str, np.ndarray]:
        return {"values": self.values}


CompressedMatrix = DenseMatrix | LmfMatrix | HmfMatrix | CsrMatrix


def numerical_rank(a, tol: float = 1e-10) -> int:
    """Count singular values above ``tol`` relative to the largest one.

    Accepts a 2-D array or any CompressedMatrix (reconstructed first).
    The all-zero matrix has rank 0.
    """
    if isinstance(a, (DenseMatrix, LmfMatrix, HmfMatrix, CsrMatrix)):
        a = a.reconstruct().data
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"rank is defined for 2-D arrays, got shape {a.shape}")
    if min(a.shape) == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
