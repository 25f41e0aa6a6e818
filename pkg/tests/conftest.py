"""Shared builders and numeric checkers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hmf.matrix import CsrMatrix, DenseMatrix, HmfMatrix, LmfMatrix


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_dense(rng: np.random.Generator, m: int, n: int) -> DenseMatrix:
    return DenseMatrix(rng.standard_normal((m, n)))


def random_lmf(rng: np.random.Generator, m: int, n: int, r: int) -> LmfMatrix:
    return LmfMatrix(rng.standard_normal((m, r)), rng.standard_normal((r, n)))


def random_hmf(rng: np.random.Generator, m: int, n: int, j: int, k: int) -> HmfMatrix:
    return HmfMatrix(
        rng.standard_normal((j, n)),
        rng.standard_normal((m - j, k)),
        rng.standard_normal((k, n)),
    )


def random_csr(rng: np.random.Generator, m: int, n: int, density: float = 0.3) -> CsrMatrix:
    keep = rng.random((m, n)) < density
    keep[rng.integers(0, m), rng.integers(0, n)] = True  # never fully empty
    dense = np.where(keep, rng.standard_normal((m, n)), 0.0)
    offsets = np.zeros(m + 1, dtype=np.int64)
    cols = []
    vals = []
    for i in range(m):
        idx = np.flatnonzero(keep[i])
        cols.extend(idx.tolist())
        vals.extend(dense[i, idx].tolist())
        offsets[i + 1] = len(cols)
    return CsrMatrix(n, offsets, np.array(cols, dtype=np.int64), np.array(vals))


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(a)) if a.size else 0.0), float(np.max(np.abs(b)) if b.size else 0.0))
    return float(np.max(np.abs(a - b)) / scale) if a.size else 0.0


def central_diff(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Gradient of scalar f at x by central differences, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = f(x)
        flat[i] = keep - eps
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def row_reduction_rank(a: np.ndarray, tol: float = 1e-10) -> int:
    """Independent rank oracle: Gaussian elimination with partial pivoting."""
    work = np.array(a, dtype=np.float64)
    m, n = work.shape
    rank = 0
    row = 0
    first_pivot = None
    for col in range(n):
        if row >= m:
            break
        pivot = row + int(np.argmax(np.abs(work[row:, col])))
        scale = first_pivot if first_pivot is not None else np.abs(work[pivot, col])
        if np.abs(work[pivot, col]) <= tol * max(scale, 1e-300):
            continue
        if first_pivot is None:
            first_pivot = np.abs(work[pivot, col])
        work[[row, pivot]] = work[[pivot, row]]
        work[row + 1 :] -= np.outer(work[row + 1 :, col] / work[row, col], work[row])
        rank += 1
        row += 1
    return rank


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
