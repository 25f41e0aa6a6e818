"""Exact parameter-budget planning for compressed structures.

Given matrix dimensions and a target compression factor ``target_cf``, each
solver picks the largest structure whose stored-scalar count stays within the
budget ``m*n / target_cf``.  All solvers floor, so the achieved compression
factor is always >= the requested one.

Budget identities (stored scalars per scheme):

* hybrid split: ``j*n + k*(m - j + n)``   -> solve j for fixed tail rank k
* low rank:     ``r*(m + n)``             -> solve r
* pruned:       ``nnz``                   -> values-only count
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class PlanningError(ValueError):
    """The requested budget admits no valid structure."""


@dataclass
class StructurePlan:
    """A solved structure: dimensions, scheme knobs, and what the choice buys."""

    m: int
    n: int
    scheme: str  # "dense" | "lmf" | "hmf" | "csr"
    target_cf: float
    achieved_cf: float
    max_rank: int
    j: int | None = None
    k: int | None = None
    r: int | None = None
    nnz: int | None = None

    def param_count(self) -> int:
        if self.scheme == "dense":
            return self.m * self.n
        if self.scheme == "lmf":
            return self.r * (self.m + self.n)
        if self.scheme == "hmf":
            return self.j * self.n + self.k * (self.m - self.j + self.n)
        return self.nnz


def _check_dims(m: int, n: int) -> None:
    if m < 1 or n < 1:
        raise PlanningError(f"dimensions must be positive, got {m} x {n}")


def _check_cf(target_cf: float) -> None:
    # cf = 1 is the no-compression corner; every solver degrades gracefully
    # there because flooring keeps achieved_cf >= 1.
    if not (target_cf >= 1.0) or not math.isfinite(target_cf):
        raise PlanningError(f"target compression factor must be at least 1, got {target_cf}")


def dense_plan(m: int, n: int) -> StructurePlan:
    _check_dims(m, n)
    return StructurePlan(m, n, "dense", 1.0, 1.0, min(m, n))


def solve_j_given_k(m: int, n: int, k: int, target_cf: float) -> StructurePlan:
    """Largest dense-row count j such that the hybrid split meets the budget.

    j = floor((m*n/target_cf - k*(m + n)) / (n - k)); requires k < n and a
    budget of at least k*(m + n), otherwise the tail alone overruns it.
    """
    _check_dims(m, n)
    _check_cf(target_cf)
    if not (1 <= k <= min(m, n)):
        raise PlanningError(f"tail rank k = {k} outside [1, min({m}, {n})]")
    if k >= n:
        raise PlanningError(f"k = {k} must be strictly below n = {n} to leave dense rows any budget")
    budget = m * n / target_cf
    if budget < k * (m + n):
        raise PlanningError(
            f"budget {budget:.1f} below the tail floor k*(m+n) = {k * (m + n)}; "
            f"binding constraint: target_cf <= m*n / (k*(m+n)) = {m * n / (k * (m + n)):.4f}"
        )
    j = int((budget - k * (m + n)) // (n - k))
    # A split cannot keep more than m - k dense rows while the tail holds
    # rank k; only budgets within a hair of cf = 1 ever hit this cap.
    j = min(j, m - k)
    params = j * n + k * (m - j + n)
    return StructurePlan(m, n, "hmf", target_cf, m * n / params, j + k, j=j, k=k)


def solve_max_k(m: int, n: int, target_cf: float) -> StructurePlan:
    """Largest tail rank whose hybrid split still keeps at least one dense row.

    This is the capacity corner of the hybrid family: the shared low-rank
    basis is as wide as the budget allows, and the dense block shrinks to the
    rows the leftover budget can hold.  Every budget that admits any hybrid
    with j >= 1 admits this one.
    """
    _check_dims(m, n)
    _check_cf(target_cf)
    budget = m * n / target_cf
    # j >= 1 needs budget >= k*(m+n) + (n-k), i.e. k <= (budget-n)/(m+n-1).
    k = min(int((budget - n) // (m + n - 1)), n - 1, m - 1)
    while k >= 1:
        plan = solve_j_given_k(m, n, k, target_cf)
        if plan.j >= 1:
            return plan
        k -= 1
    raise PlanningError(
        f"budget {budget:.1f} cannot hold a rank-1 tail plus one dense row "
        f"({m + n - 1 + n} scalars); binding constraint: "
        f"target_cf <= m*n / (m+2n-1) = {m * n / (m + 2 * n - 1):.4f}"
    )


def solve_lmf_rank(m: int, n: int, target_cf: float) -> StructurePlan:
    """Largest rank r with r*(m + n) within budget."""
    _check_dims(m, n)
    _check_cf(target_cf)
    r = int(m * n / target_cf // (m + n))
    if r < 1:
        raise PlanningError(
            f"budget {m * n / target_cf:.1f} cannot hold rank 1 ({m + n} scalars); "
            f"binding constraint: target_cf <= m*n / (m+n) = {m * n / (m + n):.4f}"
        )
    r = min(r, min(m, n))
    params = r * (m + n)
    return StructurePlan(m, n, "lmf", target_cf, m * n / params, r, r=r)


def solve_csr_nnz(m: int, n: int, target_cf: float) -> StructurePlan:
    """Largest kept-value count (values-only accounting) within budget."""
    _check_dims(m, n)
    _check_cf(target_cf)
    nnz = int(m * n // target_cf)
    if nnz < 1:
        raise PlanningError(f"budget keeps no values at cf = {target_cf} for a {m} x {n} matrix")
    return StructurePlan(m, n, "csr", target_cf, m * n / nnz, min(m, n), nnz=nnz)


def min_hmf_rank(m: int, n: int, target_cf: float) -> tuple[int, int, int]:
    """Sweep splits j >= 1, each with its largest affordable tail rank.

    Returns ``(j, k, j + k)`` for the split with the smallest reachable
    maximum rank.  This is the lower end of the rank range a hybrid split
    can buy at the given budget.
    """
    _check_dims(m, n)
    _check_cf(target_cf)
    budget = m * n / target_cf
    best: tuple[int, int, int] | None = None
    for j in range(1, m):
        k = int((budget - j * n) // (m - j + n))
        k = min(k, m - j, n)
        if k < 1:
            continue
        if best is None or j + k < best[2]:
            best = (j, k, j + k)
    if best is None:
        raise PlanningError(f"no split with j >= 1 fits budget {budget:.1f} for {m} x {n}")
    return best


@dataclass
class RankRangeRow:
    """Reachable-rank summary for one compression factor."""

    target_cf: float
    lmf_rank: int
    lmf_params: int
    hmf_j: int
    hmf_k: int
    hmf_params: int
    hmf_rank_max: int
    hmf_rank_min: int


RANK_RANGE_NOTE = (
    "rank-range lower bound is the (j, k) sweep minimum over splits with j >= 1; "
    "conventions that fix j = 2 report a value larger by one at some factors"
)


def rank_range_table(m: int, n: int, cfs, k: int = 1) -> list[RankRangeRow]:
    """Per compression factor: the low-rank rank and the hybrid rank range.

    The upper end of the hybrid range comes from ``solve_j_given_k`` with the
    given tail rank (default 1, which maximizes j + k); the lower end from the
    ``min_hmf_rank`` sweep.  See RANK_RANGE_NOTE for the lower-bound convention.
    """
    rows = []
    for cf in cfs:
        lmf = solve_lmf_rank(m, n, cf)
        hmf = solve_j_given_k(m, n, k, cf)
        _, _, rank_min = min_hmf_rank(m, n, cf)
        rows.append(
            RankRangeRow(
                target_cf=cf,
                lmf_rank=lmf.r,
                lmf_params=lmf.param_count(),
                hmf_j=hmf.j,
                hmf_k=hmf.k,
                hmf_params=hmf.param_count(),
                hmf_rank_max=hmf.max_rank,
                hmf_rank_min=rank_min,
            )
        )
    return rows


def solve_small_baseline(hidden: int, input_dim: int, layers: int, target_cf: float) -> int:
    """Largest hidden size whose dense LSTM stack fits the compressed budget.

    A standard LSTM layer stores ``4*(h*(h + input) + h)`` scalars.  The
    budget is the uncompressed stack's count divided by ``target_cf``.
    """
    if hidden < 1 or input_dim < 1 or layers < 1:
        raise PlanningError(f"invalid cell geometry: hidden={hidden} input={input_dim} layers={layers}")
    _check_cf(target_cf)

    def stack_params(h: int) -> int:
        return layers * 4 * (h * (h + input_dim) + h)

    budget = stack_params(hidden) / target_cf
    best = 0
    for h in range(1, hidden + 1):
        if stack_params(h) <= budget:
            best = h
        else:
            break
    if best == 0:
        raise PlanningError(f"no hidden size >= 1 fits budget {budget:.1f}")
    return best
