"""Hand-derived reverse-mode gradients for the kernels and cell steps.

No autodiff framework: every backward pass here mirrors its forward kernel
block by block, which keeps the gradients testable against central finite
differences in isolation.  Factor gradients follow from the chain rule
through the low-rank bottleneck; the sparse carrier only trains its stored
values (the support is fixed by pruning).

All functions accept single vectors ``(n,)`` or column batches ``(n, b)``;
batched parameter gradients are summed over the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .cells import RnnLayerWeights, RnnState, _bias_column
from .matrix import CompressedMatrix, CsrMatrix, DenseMatrix, HmfMatrix, LmfMatrix, ShapeError


@dataclass(eq=False)
class GradBundle:
    """Gradient w.r.t. the input plus one array per trainable block.

    ``parts`` keys mirror ``trainable_blocks()`` of the matrix the bundle
    came from, so an update loop can pair them by name.
    """

    dx: np.ndarray
    parts: dict[str, np.ndarray]


def _outer(g, x) -> np.ndarray:
    """g x^T for vectors or batches; batches sum into one parameter gradient."""
    if g.ndim == 1:
        return np.outer(g, x)
    return g @ x.T


def matvec_grad(mat: CompressedMatrix, x, g) -> GradBundle:
    """Reverse-mode of ``y = mat.matvec(x)`` given upstream ``g = dL/dy``."""
    x = np.asarray(x)
    g = np.asarray(g)
    if g.shape[0] != mat.rows or g.ndim != x.ndim:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output ({mat.rows}, ...)")

    if isinstance(mat, DenseMatrix):
        return GradBundle(dx=mat.data.T @ g, parts={"data": _outer(g, x)})

    if isinstance(mat, LmfMatrix):
        t = mat.right @ x
        gl = mat.left.T @ g
        return GradBundle(
            dx=mat.right.T @ gl,
            parts={"left": _outer(g, t), "right": _outer(gl, x)},
        )

    if isinstance(mat, HmfMatrix):
        j = mat.dense_rows
        g_top, g_tail = g[:j], g[j:]
        t = mat.low_right @ x
        gl = mat.low_left.T @ g_tail
        return GradBundle(
            dx=mat.top.T @ g_top + mat.low_right.T @ gl,
            parts={
                "top": _outer(g_top, x),
                "low_left": _outer(g_tail, t),
                "low_right": _outer(gl, x),
            },
        )

    if isinstance(mat, CsrMatrix):
        contrib = g[mat.row_indices] * x[mat.col_indices]
        dvalues = contrib if contrib.ndim == 1 else contrib.sum(axis=1)
        return GradBundle(dx=mat.rmatvec(g), parts={"values": dvalues})

    raise TypeError(f"no gradient rule for {type(mat).__name__}")


@dataclass(eq=False)
class StepGrads:
    """Gradients of one cell step: per-matrix bundles, bias, and carried state."""

    w_in: GradBundle
    w_rec: GradBundle
    dbias: np.ndarray
    dx: np.ndarray
    dh_prev: np.ndarray
    dc_prev: np.ndarray | None = None


def _reduce_bias(d: np.ndarray) -> np.ndarray:
    return d if d.ndim == 1 else d.sum(axis=1)


@dataclass(eq=False)
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_step_cached(w: RnnLayerWeights, x, state: RnnState) -> tuple[RnnState, LstmCache]:
    h = w.hidden
    pre = w.w_in.matvec(x) + w.w_rec.matvec(state.h)
    pre = pre + _bias_column(w.bias, pre)
    i = expit(pre[:h])
    f = expit(pre[h : 2 * h])
    g = np.tanh(pre[2 * h : 3 * h])
    o = expit(pre[3 * h :])
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    cache = LstmCache(np.asarray(x), state.h, state.c, i, f, g, o, c, tanh_c)
    return RnnState(o * tanh_c, c), cache


def lstm_step_backward(w: RnnLayerWeights, cache: LstmCache, dh, dc=None) -> StepGrads:
    """Reverse one LSTM step given dL/dh' and optionally dL/dc'."""
    i, f, g, o = cache.i, cache.f, cache.g, cache.o
    dc_total = dh * o * (1.0 - cache.tanh_c**2)
    if dc is not None:
        dc_total = dc_total + dc
    d_pre = np.concatenate(
        [
            dc_total * g * i * (1.0 - i),
            dc_total * cache.c_prev * f * (1.0 - f),
            dc_total * i * (1.0 - g**2),
            dh * cache.tanh_c * o * (1.0 - o),
        ]
    )
    gb_in = matvec_grad(w.w_in, cache.x, d_pre)
    gb_rec = matvec_grad(w.w_rec, cache.h_prev, d_pre)
    return StepGrads(
        w_in=gb_in,
        w_rec=gb_rec,
        dbias=_reduce_bias(d_pre),
        dx=gb_in.dx,
        dh_prev=gb_rec.dx,
        dc_prev=dc_total * f,
    )


@dataclass(eq=False)
class GruCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    g_n: np.ndarray


def gru_step_cached(w: RnnLayerWeights, x, state: RnnState) -> tuple[RnnState, GruCache]:
    h = w.hidden
    a = w.w_in.matvec(x)
    a = a + _bias_column(w.bias, a)
    g = w.w_rec.matvec(state.h)
    z = expit(a[:h] + g[:h])
    r = expit(a[h : 2 * h] + g[h : 2 * h])
    n = np.tanh(a[2 * h :] + r * g[2 * h :])
    cache = GruCache(np.asarray(x), state.h, z, r, n, g[2 * h :])
    return RnnState(z * state.h + (1.0 - z) * n), cache


def gru_step_backward(w: RnnLayerWeights, cache: GruCache, dh) -> StepGrads:
    """Reverse one GRU step given dL/dh'."""
    z, r, n = cache.z, cache.r, cache.n
    dz = dh * (cache.h_prev - n)
    dn_pre = dh * (1.0 - z) * (1.0 - n**2)
    dz_pre = dz * z * (1.0 - z)
    dr = dn_pre * cache.g_n
    dr_pre = dr * r * (1.0 - r)
    d_in = np.concatenate([dz_pre, dr_pre, dn_pre])
    d_rec = np.concatenate([dz_pre, dr_pre, dn_pre * r])
    gb_in = matvec_grad(w.w_in, cache.x, d_in)
    gb_rec = matvec_grad(w.w_rec, cache.h_prev, d_rec)
    return StepGrads(
        w_in=gb_in,
        w_rec=gb_rec,
        dbias=_reduce_bias(d_in),
        dx=gb_in.dx,
        dh_prev=gb_rec.dx + dh * z,
    )


def step_cached(w: RnnLayerWeights, x, state: RnnState):
    return lstm_step_cached(w, x, state) if w.kind == "lstm" else gru_step_cached(w, x, state)


def step_backward(w: RnnLayerWeights, cache, dh, dc=None) -> StepGrads:
    if w.kind == "lstm":
        return lstm_step_backward(w, cache, dh, dc)
    return gru_step_backward(w, cache, dh)
