"""Building compressed matrices: random init, SVD factorization, pruning.

Two routes produce a compressed carrier:

* training-aware random init (``init_hmf`` / ``init_lmf`` / ``init_dense``),
  seeded and bit-reproducible, for models trained in compressed form;
* conversion from a trained dense matrix (``factorize_lmf_svd``,
  ``split_hmf_from_dense``, ``magnitude_prune``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrix import CsrMatrix, DenseMatrix, HmfMatrix, LmfMatrix
from .planner import PlanningError, StructurePlan


class PruningError(ValueError):
    """Pruning target keeps no values or is otherwise unusable."""


@dataclass
class InitSpec:
    """How to fill fresh factors.

    ``uniform-scaled`` draws each block i.i.d. uniform in
    ``+-sqrt(6 / (fan_in + fan_out))``, fans taken per block.  The svd-split
    route from a trained matrix lives in ``split_hmf_from_dense``.
    """

    seed: int = 0
    scheme: str = "uniform-scaled"


def _uniform_block(rng: np.random.Generator, shape: tuple[int, int], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out)) if fan_in + fan_out > 0 else 0.0
    return rng.uniform(-limit, limit, size=shape)


def _require_uniform(spec: InitSpec) -> None:
    if spec.scheme != "uniform-scaled":
        raise ValueError(
            f"init scheme {spec.scheme!r} is not a random init; "
            "use split_hmf_from_dense / factorize_lmf_svd for svd-split"
        )


def init_dense(m: int, n: int, spec: InitSpec) -> DenseMatrix:
    _require_uniform(spec)
    rng = np.random.default_rng(spec.seed)
    return DenseMatrix(_uniform_block(rng, (m, n), n, m))


def init_lmf(plan: StructurePlan, spec: InitSpec) -> LmfMatrix:
    if plan.scheme != "lmf":
        raise PlanningError(f"expected an lmf plan, got {plan.scheme!r}")
    _require_uniform(spec)
    rng = np.random.default_rng(spec.seed)
    m, n, r = plan.m, plan.n, plan.r
    left = _uniform_block(rng, (m, r), r, m)
    right = _uniform_block(rng, (r, n), n, r)
    return LmfMatrix(left, right)


def init_hmf(plan: StructurePlan, spec: InitSpec) -> HmfMatrix:
    """Fresh hybrid factors; blocks drawn in order top, low_left, low_right."""
    if plan.scheme != "hmf":
        raise PlanningError(f"expected an hmf plan, got {plan.scheme!r}")
    _require_uniform(spec)
    rng = np.random.default_rng(spec.seed)
    m, n, j, k = plan.m, plan.n, plan.j, plan.k
    top = _uniform_block(rng, (j, n), n, j)
    low_left = _uniform_block(rng, (m - j, k), k, m - j)
    low_right = _uniform_block(rng, (k, n), n, k)
    return HmfMatrix(top, low_left, low_right)


def factorize_lmf_svd(a: DenseMatrix | np.ndarray, r: int) -> LmfMatrix:
    """Best rank-r factorization: left = scaled singular vectors, right = V^T rows."""
    data = a.data if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)
    m, n = data.shape
    if not (1 <= r <= min(m, n)):
        raise PlanningError(f"rank {r} outside [1, min({m}, {n})]")
    u, s, vh = np.linalg.svd(data, full_matrices=False)
    return LmfMatrix(u[:, :r] * s[:r], vh[:r])


def split_hmf_from_dense(a: DenseMatrix | np.ndarray, j: int, k: int) -> HmfMatrix:
    """Keep the top j rows verbatim; rank-k SVD of the remaining block."""
    data = a.data if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)
    m, n = data.shape
    if not (0 <= j <= m):
        raise PlanningError(f"dense row count {j} outside [0, {m}]")
    tail = m - j
    if tail == 0:
        if k != 0:
            raise PlanningError("a split with j = m has no tail to factorize; k must be 0")
        return HmfMatrix(data.copy(), np.zeros((0, 0)), np.zeros((0, n)))
    if not (1 <= k <= min(tail, n)):
        raise PlanningError(f"tail rank {k} outside [1, min({tail}, {n})]")
    u, s, vh = np.linalg.svd(data[j:], full_matrices=False)
    return HmfMatrix(data[:j].copy(), u[:, :k] * s[:k], vh[:k])


def magnitude_prune(a: DenseMatrix | np.ndarray, target_cf: float) -> CsrMatrix:
    """Keep the floor(m*n / target_cf) largest-magnitude entries as CSR.

    Ties are broken lexicographically by (row, col): a stable sort over the
    row-major layout keeps the earliest positions.
    """
    data = a.data if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)
    m, n = data.shape
    if not (target_cf >= 1.0) or not math.isfinite(target_cf):
        raise PruningError(f"target compression factor must be >= 1, got {target_cf}")
    nnz = int(m * n // target_cf)
    if nnz < 1:
        raise PruningError(f"cf = {target_cf} keeps no values of a {m} x {n} matrix")
    order = np.argsort(-np.abs(data).ravel(), kind="stable")
    kept = np.sort(order[:nnz])  # back to row-major position order
    rows, cols = np.divmod(kept, n)
    offsets = np.zeros(m + 1, dtype=np.int64)
    np.add.at(offsets, rows + 1, 1)
    offsets = np.cumsum(offsets)
    return CsrMatrix(n, offsets, cols.astype(np.int64), data.ravel()[kept])
