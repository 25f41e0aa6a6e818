"""Compressors: seeded init, SVD factorization, the verbatim split, pruning."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel_err
from hmf.compress import (
    InitSpec,
    PruningError,
    factorize_lmf_svd,
    init_dense,
    init_hmf,
    init_lmf,
    magnitude_prune,
    split_hmf_from_dense,
)
from hmf.matrix import DenseMatrix, numerical_rank
from hmf.planner import PlanningError, solve_j_given_k, solve_lmf_rank

# ---------------------------------------------------------------------------
# seeded initialization


def _plans():
    return solve_j_given_k(256, 256, 1, 5.0), solve_lmf_rank(256, 256, 5.0)


def test_init_is_deterministic_under_seed():
    hmf_plan, lmf_plan = _plans()
    spec = InitSpec(seed=11)
    a, b = init_hmf(hmf_plan, spec), init_hmf(hmf_plan, spec)
    assert np.array_equal(a.top, b.top)
    assert np.array_equal(a.low_left, b.low_left)
    assert np.array_equal(a.low_right, b.low_right)
    u, v = init_lmf(lmf_plan, spec), init_lmf(lmf_plan, spec)
    assert np.array_equal(u.left, v.left) and np.array_equal(u.right, v.right)
    assert not np.array_equal(init_hmf(hmf_plan, InitSpec(seed=12)).top, a.top)


def test_init_hmf_frozen_param_count():
    mat = init_hmf(solve_j_given_k(256, 256, 1, 5.0), InitSpec(seed=0))
    assert (mat.dense_rows, mat.rank) == (49, 1)
    assert mat.param_count() == 13007


def test_generic_init_attains_max_rank():
    mat = init_hmf(solve_j_given_k(64, 64, 2, 2.5), InitSpec(seed=5))
    assert numerical_rank(mat.reconstruct().data) == min(mat.dense_rows + mat.rank, 64)
    lmf = init_lmf(solve_lmf_rank(64, 64, 2.5), InitSpec(seed=5))
    assert numerical_rank(lmf.reconstruct().data) == lmf.rank


def test_init_blocks_respect_fan_scaled_bounds():
    mat = init_hmf(solve_j_given_k(96, 80, 3, 2.0), InitSpec(seed=2))
    m, n, j, k = 96, 80, mat.dense_rows, mat.rank
    for block, (fan_in, fan_out) in [
        (mat.top, (n, j)),
        (mat.low_left, (k, m - j)),
        (mat.low_right, (n, k)),
    ]:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(block).max() <= limit
        assert np.abs(block).max() > 0.5 * limit  # actually spread out, not collapsed
    dense = init_dense(10, 20, InitSpec(seed=2))
    assert np.abs(dense.data).max() <= math.sqrt(6.0 / 30)


def test_init_rejects_mismatched_plan_and_scheme():
    hmf_plan, lmf_plan = _plans()
    with pytest.raises(PlanningError):
        init_hmf(lmf_plan, InitSpec())
    with pytest.raises(PlanningError):
        init_lmf(hmf_plan, InitSpec())
    with pytest.raises(ValueError):
        init_hmf(hmf_plan, InitSpec(scheme="svd-split"))


# ---------------------------------------------------------------------------
# SVD factorization


def test_factorize_exact_recovery_at_true_rank(rng):
    a = rng.standard_normal((12, 5)) @ rng.standard_normal((5, 9))
    fac = factorize_lmf_svd(a, 5)
    assert rel_err(fac.reconstruct().data, a) < 1e-9
    full = factorize_lmf_svd(a, 9)
    assert rel_err(full.reconstruct().data, a) < 1e-9


def test_factorize_diag_by_hand():
    fac = factorize_lmf_svd(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(fac.reconstruct().data, np.diag([3.0, 2.0, 0.0]), atol=1e-12)


def test_factorize_matches_truncation_error_oracle(rng):
    a = rng.standard_normal((10, 8))
    s = np.linalg.svd(a, compute_uv=False)
    for r in range(1, 9):
        fac = factorize_lmf_svd(a, r)
        err = np.linalg.norm(a - fac.reconstruct().data)
        assert err == pytest.approx(math.sqrt(float(np.sum(s[r:] ** 2))), abs=1e-9)


def test_factorize_error_non_increasing_in_rank(rng):
    a = rng.standard_normal((15, 11))
    errs = [np.linalg.norm(a - factorize_lmf_svd(a, r).reconstruct().data) for r in range(1, 12)]
    assert all(e1 >= e2 - 1e-12 for e1, e2 in zip(errs, errs[1:]))


def test_factorize_rejects_bad_rank(rng):
    a = rng.standard_normal((4, 6))
    with pytest.raises(PlanningError):
        factorize_lmf_svd(a, 0)
    with pytest.raises(PlanningError):
        factorize_lmf_svd(a, 5)


# ---------------------------------------------------------------------------
# verbatim-top split


def test_split_keeps_top_rows_verbatim(rng):
    a = rng.standard_normal((8, 8))
    mat = split_hmf_from_dense(a, 4, 2)
    assert np.array_equal(mat.top, a[:4])
    rec = mat.reconstruct().data
    assert np.array_equal(rec[:4], a[:4])


def test_split_bottom_error_equals_svd_truncation(rng):
    a = rng.standard_normal((8, 8))
    mat = split_hmf_from_dense(a, 4, 2)
    bottom_err = np.linalg.norm(a[4:] - mat.reconstruct().data[4:])
    s = np.linalg.svd(a[4:], compute_uv=False)
    assert bottom_err == pytest.approx(math.sqrt(float(np.sum(s[2:] ** 2))), abs=1e-9)


def test_split_recovers_low_rank_bottom_exactly(rng):
    top = rng.standard_normal((3, 7))
    bottom = np.outer(rng.standard_normal(5), rng.standard_normal(7))
    a = np.vstack([top, bottom])
    mat = split_hmf_from_dense(a, 3, 1)
    assert rel_err(mat.reconstruct().data, a) < 1e-9


def test_split_degenerate_all_dense(rng):
    a = rng.standard_normal((4, 6))
    mat = split_hmf_from_dense(a, 4, 0)
    assert np.array_equal(mat.reconstruct().data, a)
    with pytest.raises(PlanningError):
        split_hmf_from_dense(a, 4, 1)
    with pytest.raises(PlanningError):
        split_hmf_from_dense(a, 2, 0)
    with pytest.raises(PlanningError):
        split_hmf_from_dense(a, 5, 1)


# ---------------------------------------------------------------------------
# magnitude pruning


def test_prune_hand_example():
    csr = magnitude_prune(np.array([[1.0, -3.0], [0.5, 2.0]]), 2.0)
    assert csr.nnz == 2
    assert np.array_equal(csr.reconstruct().data, [[0.0, -3.0], [0.0, 2.0]])


def test_prune_cf_one_keeps_everything(rng):
    a = rng.standard_normal((5, 5))
    csr = magnitude_prune(a, 1.0)
    assert csr.nnz == 25
    assert np.allclose(csr.reconstruct().data, a)


def test_prune_tie_break_is_lexicographic():
    a = np.full((2, 4), 7.0)
    csr = magnitude_prune(a, 2.0)
    assert np.array_equal(csr.reconstruct().data, [[7.0, 7.0, 7.0, 7.0], [0.0, 0.0, 0.0, 0.0]])
    signs = np.array([[-1.0, 1.0], [1.0, -1.0]])
    csr = magnitude_prune(signs, 2.0)
    assert np.array_equal(csr.reconstruct().data, [[-1.0, 1.0], [0.0, 0.0]])


def test_prune_rejects_empty_budget():
    with pytest.raises(PruningError):
        magnitude_prune(np.ones((2, 2)), 5.0)
    with pytest.raises(PruningError):
        magnitude_prune(np.ones((2, 2)), 0.5)


@given(
    m=st.integers(1, 20),
    n=st.integers(1, 20),
    cf=st.floats(1.0, 8.0),
    seed=st.integers(0, 2**32 - 1),
)
@settings(max_examples=100, deadline=None)
def test_prune_keeps_exactly_the_largest_magnitudes(m, n, cf, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    try:
        csr = magnitude_prune(a, cf)
    except PruningError:
        assert int(m * n // cf) < 1
        return
    assert csr.nnz == int(m * n // cf)
    rec = csr.reconstruct().data
    kept = rec != 0.0  # standard normal draws are never exactly zero
    assert int(kept.sum()) == csr.nnz
    assert np.array_equal(rec[kept], a[kept])
    if kept.any() and (~kept).any():
        assert np.abs(a[kept]).min() >= np.abs(a[~kept]).max()
