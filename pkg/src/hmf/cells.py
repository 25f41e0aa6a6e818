"""LSTM and GRU steps whose weight matrices may be any compressed carrier.

A layer holds one input matrix, one recurrent matrix, and one bias vector.
Both matrices stack all gate blocks row-wise (gate order i, f, g, o for LSTM
and z, r, n for GRU), so a compressed carrier spans the stacked gates as a
single unit; the bias is never compressed.  All steps accept a state vector
``(h,)`` or a column batch ``(h, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .matrix import CompressedMatrix, ShapeError

_GATES = {"lstm": 4, "gru": 3}


@dataclass(eq=False)
class RnnLayerWeights:
    """One recurrent layer: kind, input matrix, recurrent matrix, bias."""

    kind: str
    w_in: CompressedMatrix
    w_rec: CompressedMatrix
    bias: np.ndarray

    def __post_init__(self):
        if self.kind not in _GATES:
            raise ShapeError(f"unknown cell kind {self.kind!r}; expected one of {sorted(_GATES)}")
        self.bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if self.bias.ndim != 1:
            raise ShapeError(f"bias must be a vector, got shape {self.bias.shape}")
        gates = _GATES[self.kind]
        stacked = self.w_rec.rows
        if stacked % gates != 0:
            raise ShapeError(f"recurrent matrix rows {stacked} not divisible by {gates} gates")
        hidden = stacked // gates
        if self.w_rec.cols != hidden:
            raise ShapeError(
                f"recurrent matrix is {stacked} x {self.w_rec.cols}; expected {gates}*h x h"
            )
        if self.w_in.rows != stacked:
            raise ShapeError(f"input matrix rows {self.w_in.rows} != stacked gate rows {stacked}")
        if self.bias.size != stacked:
            raise ShapeError(f"bias length {self.bias.size} != stacked gate rows {stacked}")

    @property
    def hidden(self) -> int:
        return self.w_rec.cols

    @property
    def input_dim(self) -> int:
        return self.w_in.cols


@dataclass(eq=False)
class RnnState:
    """Hidden state h, plus the cell state c for LSTM (None for GRU)."""

    h: np.ndarray
    c: np.ndarray | None = None


def zero_state(kind: str, hidden: int, batch: int | None = None) -> RnnState:
    shape = (hidden,) if batch is None else (hidden, batch)
    h = np.zeros(shape)
    return RnnState(h, np.zeros(shape) if kind == "lstm" else None)


def _bias_column(bias: np.ndarray, like: np.ndarray) -> np.ndarray:
    return bias if like.ndim == 1 else bias[:, None]


def preactivation(w: RnnLayerWeights, x, h) -> np.ndarray:
    """Stacked gate pre-activations ``w_in @ x + w_rec @ h + bias``."""
    pre = w.w_in.matvec(x) + w.w_rec.matvec(h)
    return pre + _bias_column(w.bias, pre)


def lstm_step(w: RnnLayerWeights, x, state: RnnState) -> RnnState:
    """One LSTM update; gate blocks in order i, f, g, o."""
    if w.kind != "lstm":
        raise ShapeError(f"lstm_step on a {w.kind!r} layer")
    h = w.hidden
    pre = preactivation(w, x, state.h)
    i = expit(pre[:h])
    f = expit(pre[h : 2 * h])
    g = np.tanh(pre[2 * h : 3 * h])
    o = expit(pre[3 * h :])
    c = f * state.c + i * g
    return RnnState(o * np.tanh(c), c)


def gru_step(w: RnnLayerWeights, x, state: RnnState) -> RnnState:
    """One GRU update; gate blocks in order z, r, n.

    The reset gate scales the recurrent contribution of the candidate block
    before its tanh, so the recurrent matvec still runs once over the full
    stacked matrix: ``h' = z*h + (1 - z)*tanh(a_n + r * g_n)``.
    """
    if w.kind != "gru":
        raise ShapeError(f"gru_step on a {w.kind!r} layer")
    h = w.hidden
    a = w.w_in.matvec(x)
    a = a + _bias_column(w.bias, a)
    g = w.w_rec.matvec(state.h)
    z = expit(a[:h] + g[:h])
    r = expit(a[h : 2 * h] + g[h : 2 * h])
    n = np.tanh(a[2 * h :] + r * g[2 * h :])
    return RnnState(z * state.h + (1.0 - z) * n)


def step(w: RnnLayerWeights, x, state: RnnState) -> RnnState:
    return lstm_step(w, x, state) if w.kind == "lstm" else gru_step(w, x, state)


def run_sequence(
    layers: list[RnnLayerWeights],
    xs,
    initial: list[RnnState] | None = None,
    return_outputs: bool = False,
):
    """Unroll stacked layers left to right over a sequence of inputs.

    Returns the per-layer final states; an empty sequence returns the initial
    states untouched.  With ``return_outputs`` the top layer's hidden vector
    at every step is returned alongside.
    """
    if initial is None:
        states = [zero_state(w.kind, w.hidden) for w in layers]
    else:
        states = list(initial)
    if len(states) != len(layers):
        raise ShapeError(f"{len(states)} states for {len(layers)} layers")
    outputs = []
    for x in xs:
        feed = x
        for idx, w in enumerate(layers):
            states[idx] = step(w, feed, states[idx])
            feed = states[idx].h
        if return_outputs:
            outputs.append(feed)
    return (states, outputs) if return_outputs else states
