"""Recurrent cells over compressed carriers: steps, stacking, transparency."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.special import expit

from conftest import random_dense, random_hmf, rel_err
from hmf.cells import (
    RnnLayerWeights,
    RnnState,
    gru_step,
    lstm_step,
    preactivation,
    run_sequence,
    step,
    zero_state,
)
from hmf.matrix import DenseMatrix, ShapeError, numerical_rank


def _dense_layer(rng, kind: str, hidden: int, input_dim: int) -> RnnLayerWeights:
    gates = 4 if kind == "lstm" else 3
    return RnnLayerWeights(
        kind,
        random_dense(rng, gates * hidden, input_dim),
        random_dense(rng, gates * hidden, hidden),
        rng.standard_normal(gates * hidden) * 0.1,
    )


def _hmf_layer(rng, kind: str, hidden: int, input_dim: int, j: int, k: int) -> RnnLayerWeights:
    gates = 4 if kind == "lstm" else 3
    return RnnLayerWeights(
        kind,
        random_hmf(rng, gates * hidden, input_dim, j, k),
        random_hmf(rng, gates * hidden, hidden, j, k),
        rng.standard_normal(gates * hidden) * 0.1,
    )


def _densified(layer: RnnLayerWeights) -> RnnLayerWeights:
    return RnnLayerWeights(
        layer.kind, layer.w_in.reconstruct(), layer.w_rec.reconstruct(), layer.bias
    )


# ---------------------------------------------------------------------------
# single steps, frozen and degenerate values


def test_lstm_zero_everything_stays_zero():
    w = RnnLayerWeights("lstm", DenseMatrix(np.zeros((8, 3))), DenseMatrix(np.zeros((8, 2))), np.zeros(8))
    out = lstm_step(w, np.zeros(3), zero_state("lstm", 2))
    assert np.array_equal(out.h, np.zeros(2))
    assert np.array_equal(out.c, np.zeros(2))


def test_lstm_scalar_step_by_hand():
    # zero weights, zero bias: i=f=o=sigma(0)=1/2, g=tanh(0)=0
    w = RnnLayerWeights("lstm", DenseMatrix(np.zeros((4, 1))), DenseMatrix(np.zeros((4, 1))), np.zeros(4))
    out = lstm_step(w, np.zeros(1), RnnState(np.zeros(1), np.ones(1)))
    assert out.c[0] == pytest.approx(0.5)
    assert out.h[0] == pytest.approx(0.5 * np.tanh(0.5))


def test_gru_zero_everything_stays_zero():
    w = RnnLayerWeights("gru", DenseMatrix(np.zeros((6, 3))), DenseMatrix(np.zeros((6, 2))), np.zeros(6))
    out = gru_step(w, np.zeros(3), zero_state("gru", 2))
    assert np.array_equal(out.h, np.zeros(2))


def test_gru_scalar_step_by_hand():
    # zero weights: z=r=1/2, candidate tanh(0)=0, so h' = h/2
    w = RnnLayerWeights("gru", DenseMatrix(np.zeros((3, 1))), DenseMatrix(np.zeros((3, 1))), np.zeros(3))
    out = gru_step(w, np.zeros(1), RnnState(np.ones(1)))
    assert out.h[0] == pytest.approx(0.5)


def test_gru_saturated_update_gate_keeps_state(rng):
    w = _dense_layer(rng, "gru", 4, 3)
    w.bias[:4] = 60.0  # z saturates at 1, so the state passes through
    prev = RnnState(rng.standard_normal(4))
    out = gru_step(w, rng.standard_normal(3), prev)
    assert np.allclose(out.h, prev.h, atol=1e-12)


def test_lstm_saturated_forget_gate_accumulates(rng):
    w = _dense_layer(rng, "lstm", 4, 3)
    w.bias[4:8] = 60.0  # f -> 1: cell state is carried over intact
    w.bias[:4] = -60.0  # i -> 0: nothing new is written
    prev = RnnState(np.zeros(4), rng.standard_normal(4))
    out = lstm_step(w, rng.standard_normal(3), prev)
    assert np.allclose(out.c, prev.c, atol=1e-10)


def test_step_output_dims(rng):
    w = _dense_layer(rng, "lstm", 64, 32)
    out = lstm_step(w, rng.standard_normal(32), zero_state("lstm", 64))
    assert out.h.shape == (64,) and out.c.shape == (64,)


def test_gru_matches_reference_formula(rng):
    """Independent recomputation of the published update from raw blocks."""
    h, d = 5, 4
    w = _dense_layer(rng, "gru", h, d)
    x, prev = rng.standard_normal(d), rng.standard_normal(h)
    wi, wr, b = w.w_in.data, w.w_rec.data, w.bias
    z = expit(wi[:h] @ x + b[:h] + wr[:h] @ prev)
    r = expit(wi[h : 2 * h] @ x + b[h : 2 * h] + wr[h : 2 * h] @ prev)
    n = np.tanh(wi[2 * h :] @ x + b[2 * h :] + r * (wr[2 * h :] @ prev))
    want = z * prev + (1 - z) * n
    got = gru_step(w, x, RnnState(prev)).h
    assert rel_err(got, want) < 1e-12


def test_lstm_matches_reference_formula(rng):
    h, d = 5, 4
    w = _dense_layer(rng, "lstm", h, d)
    x, ph, pc = rng.standard_normal(d), rng.standard_normal(h), rng.standard_normal(h)
    pre = w.w_in.data @ x + w.w_rec.data @ ph + w.bias
    i, f = expit(pre[:h]), expit(pre[h : 2 * h])
    g, o = np.tanh(pre[2 * h : 3 * h]), expit(pre[3 * h :])
    want_c = f * pc + i * g
    out = lstm_step(w, x, RnnState(ph, pc))
    assert rel_err(out.c, want_c) < 1e-12
    assert rel_err(out.h, o * np.tanh(want_c)) < 1e-12


# ---------------------------------------------------------------------------
# representation transparency


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_compressed_step_matches_densified_step(rng, kind):
    w = _hmf_layer(rng, kind, 6, 5, j=4, k=2)
    dense = _densified(w)
    x = rng.standard_normal(5)
    state = RnnState(rng.standard_normal(6), rng.standard_normal(6) if kind == "lstm" else None)
    got, want = step(w, x, state), step(dense, x, state)
    assert rel_err(got.h, want.h) < 1e-9
    if kind == "lstm":
        assert rel_err(got.c, want.c) < 1e-9


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_hundred_step_sequences_stay_within_budget(rng, kind):
    layers = [_hmf_layer(rng, kind, 8, 6, j=5, k=3), _hmf_layer(rng, kind, 8, 8, j=6, k=2)]
    dense = [_densified(w) for w in layers]
    xs = [rng.standard_normal(6) for _ in range(100)]
    got, got_out = run_sequence(layers, xs, return_outputs=True)
    want, want_out = run_sequence(dense, xs, return_outputs=True)
    for a, b in zip(got, want):
        assert rel_err(a.h, b.h) < 1e-8
    assert rel_err(np.stack(got_out), np.stack(want_out)) < 1e-8


def test_hybrid_preactivation_tail_rank(rng):
    """Rows past the split see the state only through a k-dim bottleneck."""
    j, k, hidden = 5, 2, 4
    w = _hmf_layer(rng, "lstm", hidden, 3, j=j, k=k)
    x = rng.standard_normal(3)
    base = preactivation(w, x, np.zeros(hidden))
    jac = np.stack(
        [preactivation(w, x, e) - base for e in np.eye(hidden)], axis=1
    )  # exact: the map is affine in h
    assert numerical_rank(jac[j:]) == k
    assert numerical_rank(jac[:j]) == min(j, hidden)


# ---------------------------------------------------------------------------
# sequences and batching


def test_run_sequence_empty_returns_initial(rng):
    w = _dense_layer(rng, "gru", 3, 2)
    init = [RnnState(rng.standard_normal(3))]
    out = run_sequence([w], [], initial=init)
    assert out[0] is init[0]


def test_run_sequence_length_one_equals_single_step(rng):
    w = _dense_layer(rng, "lstm", 4, 3)
    x = rng.standard_normal(3)
    seq = run_sequence([w], [x])
    single = lstm_step(w, x, zero_state("lstm", 4))
    assert np.array_equal(seq[0].h, single.h)
    assert np.array_equal(seq[0].c, single.c)


def test_batched_step_matches_per_column(rng):
    w = _hmf_layer(rng, "gru", 5, 4, j=3, k=2)
    xs = rng.standard_normal((4, 6))
    hs = rng.standard_normal((5, 6))
    batched = gru_step(w, xs, RnnState(hs)).h
    for b in range(6):
        assert np.allclose(batched[:, b], gru_step(w, xs[:, b], RnnState(hs[:, b])).h, atol=1e-12)


def test_zero_state_shapes():
    s = zero_state("lstm", 7)
    assert s.h.shape == (7,) and s.c.shape == (7,)
    s = zero_state("gru", 7, batch=3)
    assert s.h.shape == (7, 3) and s.c is None


# ---------------------------------------------------------------------------
# validation


def test_layer_weight_validation(rng):
    with pytest.raises(ShapeError):
        RnnLayerWeights("elman", random_dense(rng, 4, 4), random_dense(rng, 4, 4), np.zeros(4))
    with pytest.raises(ShapeError):
        # rows not a gate multiple
        RnnLayerWeights("lstm", random_dense(rng, 6, 2), random_dense(rng, 6, 2), np.zeros(6))
    with pytest.raises(ShapeError):
        # recurrent matrix not square per gate block
        RnnLayerWeights("gru", random_dense(rng, 6, 3), random_dense(rng, 6, 3), np.zeros(6))
    with pytest.raises(ShapeError):
        # input matrix rows disagree with stacked gates
        RnnLayerWeights("gru", random_dense(rng, 9, 4), random_dense(rng, 6, 2), np.zeros(6))
    with pytest.raises(ShapeError):
        # bias length mismatch
        RnnLayerWeights("gru", random_dense(rng, 6, 4), random_dense(rng, 6, 2), np.zeros(5))


def test_step_kind_dispatch_guard(rng):
    w = _dense_layer(rng, "gru", 3, 2)
    with pytest.raises(ShapeError):
        lstm_step(w, np.zeros(2), zero_state("gru", 3))
    w = _dense_layer(rng, "lstm", 3, 2)
    with pytest.raises(ShapeError):
        gru_step(w, np.zeros(2), zero_state("lstm", 3))
