"""Desk-scale training harness: truncated BPTT with hand-derived gradients.

Two bundled tasks exercise every compression scheme end to end:

* ``charlm`` -- next-character prediction over the bundled ~1 MB corpus;
* ``copy``   -- reproduce the input symbol stream after a fixed delay.

The model is a single recurrent layer over one-hot inputs plus an
uncompressed output projection.  Both layer matrices are compressed by
default (``compress_input=False`` keeps the input matrix dense); the output
projection and biases never are.  The default tail rank (``k=None``) is the
widest the budget allows while keeping at least one dense row, which makes
the hybrid's function class a superset of the rank-matched two-factor
model at the same budget.  Optimization is plain SGD: windowed truncated
backprop, global gradient-norm clipping, and a step decay that divides the
learning rate by a fixed factor after each epoch once the decay point is
passed.

Compared schemes are parameter-matched: the ``small`` baseline picks the
dense hidden size whose total trainable count lands nearest the hybrid
model's total (within 2 percent for the default geometries).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import cmx
from .cells import RnnLayerWeights, RnnState, step, zero_state
from .compress import InitSpec, init_dense, init_hmf, init_lmf, magnitude_prune
from .grads import step_backward, step_cached
from .matrix import CompressedMatrix, CsrMatrix
from .planner import PlanningError, solve_j_given_k, solve_lmf_rank, solve_max_k

SCHEMES = ("dense", "hmf", "lmf", "small", "pruned")
TASKS = ("charlm", "copy")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; the run was aborted."""


@dataclass
class TrainSpec:
    """Everything a toy run depends on; two equal specs give identical runs."""

    task: str = "charlm"
    scheme: str = "dense"
    cell: str = "gru"
    hidden: int = 64
    cf: float = 2.5
    k: int | None = None  # None: widest tail rank that keeps a dense row
    epochs: int = 20
    lr: float = 1.0
    lr_decay: float = 1.2
    decay_after: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    window: int = 32
    batch: int = 16
    train_chars: int = 100_000
    val_chars: int = 10_000
    copy_symbols: int = 8
    copy_delay: int = 3
    copy_batches: int = 80
    prune_after: int = 3
    compress_input: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.cell not in ("lstm", "gru"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if self.hidden < 1 or self.window < 1 or self.batch < 1 or self.epochs < 0:
            raise ValueError("hidden, window, batch must be >= 1 and epochs >= 0")
        if self.lr <= 0 or self.clip_norm <= 0 or self.lr_decay < 1.0:
            raise ValueError("lr and clip_norm must be positive, lr_decay >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError(f"tail rank k must be >= 1 (or None for automatic), got {self.k}")


@dataclass(eq=False)
class SequenceModel:
    """Recurrent layer plus an uncompressed softmax projection."""

    layer: RnnLayerWeights
    w_out: np.ndarray  # (vocab, hidden)
    b_out: np.ndarray  # (vocab,)


@dataclass
class EpochRow:
    epoch: int
    train_loss: float | None  # None on the pre-training row
    val_loss: float
    perplexity: float


@dataclass(eq=False)
class TrainRun:
    """A finished run: its spec, loss trajectory, and final weights."""

    spec: TrainSpec
    vocab: int
    param_total: int
    rows: list[EpochRow]
    model: SequenceModel

    @property
    def final_val_loss(self) -> float:
        return self.rows[-1].val_loss

    @property
    def final_perplexity(self) -> float:
        return self.rows[-1].perplexity


def load_corpus_text() -> str:
    return (resources.files("hmf") / "data" / "tinytext.txt").read_text(encoding="utf-8")


def model_param_total(model: SequenceModel) -> int:
    layer = model.layer
    return (
        layer.w_in.param_count()
        + layer.w_rec.param_count()
        + layer.bias.size
        + model.w_out.size
        + model.b_out.size
    )


def _gates(cell: str) -> int:
    return 4 if cell == "lstm" else 3


def _dense_total(hidden: int, vocab: int, gates: int) -> int:
    return gates * hidden * vocab + gates * hidden * hidden + gates * hidden + vocab * hidden + vocab


def _hmf_plan(rows: int, cols: int, cf: float, k: int | None):
    if k is None:
        return solve_max_k(rows, cols, cf)
    return solve_j_given_k(rows, cols, k, cf)


def _scheme_total(spec: TrainSpec, scheme: str, hidden: int, vocab: int) -> int:
    gates = _gates(spec.cell)
    rows = gates * hidden
    if scheme == "hmf":
        rec = _hmf_plan(rows, hidden, spec.cf, spec.k).param_count()
    elif scheme == "lmf":
        rec = solve_lmf_rank(rows, hidden, spec.cf).param_count()
    else:
        rec = rows * hidden
    w_in = rows * vocab  # default: input matrix stays dense
    if spec.compress_input and scheme == "hmf":
        w_in = _hmf_plan(rows, vocab, spec.cf, spec.k).param_count()
    elif spec.compress_input and scheme == "lmf":
        w_in = solve_lmf_rank(rows, vocab, spec.cf).param_count()
    return w_in + rec + rows + vocab * hidden + vocab


def size_small_hidden(spec: TrainSpec, vocab: int) -> int:
    """Dense hidden size whose total parameter count lands nearest the
    hybrid model's total at this spec's cf (the model it is compared with)."""
    target: float | None = None
    for scheme in ("hmf", "lmf"):
        try:
            target = float(_scheme_total(spec, scheme, spec.hidden, vocab))
            break
        except PlanningError:
            continue
    gates = _gates(spec.cell)
    if target is None:  # fall back to the algebraic budget
        target = (
            gates * spec.hidden * vocab
            + gates * spec.hidden**2 / spec.cf
            + gates * spec.hidden
            + vocab * spec.hidden
            + vocab
        )
    best_h, best_gap = 1, float("inf")
    for h in range(1, spec.hidden + 1):
        gap = abs(_dense_total(h, vocab, gates) - target)
        if gap < best_gap:
            best_h, best_gap = h, gap
    return best_h


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _build_rec(scheme: str, rows: int, cols: int, cf: float, k: int | None, seed: int) -> CompressedMatrix:
    if scheme == "hmf":
        return init_hmf(_hmf_plan(rows, cols, cf, k), InitSpec(seed))
    if scheme == "lmf":
        return init_lmf(solve_lmf_rank(rows, cols, cf), InitSpec(seed))
    return init_dense(rows, cols, InitSpec(seed))


def build_model(spec: TrainSpec, vocab: int) -> SequenceModel:
    """Create a fresh seeded model; ``pruned`` starts dense and is cut later."""
    hidden = size_small_hidden(spec, vocab) if spec.scheme == "small" else spec.hidden
    gates = _gates(spec.cell)
    rows = gates * hidden
    rng = np.random.default_rng(spec.seed)
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=3)]

    rec_scheme = spec.scheme if spec.scheme in ("hmf", "lmf") else "dense"
    in_scheme = rec_scheme if spec.compress_input else "dense"
    w_in = _build_rec(in_scheme, rows, vocab, spec.cf, spec.k, seeds[0])
    w_rec = _build_rec(rec_scheme, rows, hidden, spec.cf, spec.k, seeds[1])

    bias = np.zeros(rows)
    if spec.cell == "lstm":
        bias[hidden : 2 * hidden] = 1.0  # open forget gates at the start

    out_rng = np.random.default_rng(seeds[2])
    w_out = _glorot(out_rng, (vocab, hidden))
    return SequenceModel(
        layer=RnnLayerWeights(spec.cell, w_in, w_rec, bias),
        w_out=w_out,
        b_out=np.zeros(vocab),
    )


# ---------------------------------------------------------------------------
# tasks


def _one_hot(codes: np.ndarray, vocab: int) -> np.ndarray:
    out = np.zeros((vocab, codes.size))
    out[codes, np.arange(codes.size)] = 1.0
    return out


class _CharLmTask:
    """Next-char prediction over parallel streams cut from the corpus."""

    def __init__(self, spec: TrainSpec):
        self.spec = spec
        text = load_corpus_text()
        need = spec.train_chars + spec.val_chars
        if need > len(text):
            raise ValueError(f"corpus has {len(text)} chars, spec needs {need}")
        charset = sorted(set(text))
        self.vocab = len(charset)
        lookup = {ch: idx for idx, ch in enumerate(charset)}
        codes = np.fromiter((lookup[ch] for ch in text[:need]), dtype=np.int64, count=need)
        self._train = self._streams(codes[: spec.train_chars])
        self._val = self._streams(codes[spec.train_chars :])
        self.stateful = True

    def _streams(self, codes: np.ndarray) -> np.ndarray:
        b = self.spec.batch
        length = codes.size // b
        return codes[: b * length].reshape(b, length)

    def _windows(self, streams: np.ndarray):
        t = self.spec.window
        for start in range(0, streams.shape[1] - 1, t):
            x = streams[:, start : start + t]
            y = streams[:, start + 1 : start + t + 1]
            yield x[:, : y.shape[1]], y, None

    def train_windows(self, epoch: int):
        yield from self._windows(self._train)

    def val_windows(self):
        yield from self._windows(self._val)


class _CopyTask:
    """Echo the input stream ``delay`` steps later; positions before the
    first echo carry no loss."""

    def __init__(self, spec: TrainSpec):
        self.spec = spec
        self.vocab = spec.copy_symbols
        self.stateful = False
        mask = np.zeros(spec.window, dtype=bool)
        mask[spec.copy_delay :] = True
        self._mask = mask
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7777]))
        self._val = [self._draw(rng) for _ in range(20)]

    def _draw(self, rng: np.random.Generator):
        spec = self.spec
        x = rng.integers(0, self.vocab, size=(spec.batch, spec.window))
        y = np.roll(x, spec.copy_delay, axis=1)
        return x, y, self._mask

    def train_windows(self, epoch: int):
        rng = np.random.default_rng(np.random.SeedSequence([self.spec.seed, epoch]))
        for _ in range(self.spec.copy_batches):
            yield self._draw(rng)

    def val_windows(self):
        yield from self._val


def _make_task(spec: TrainSpec):
    return _CharLmTask(spec) if spec.task == "charlm" else _CopyTask(spec)


# ---------------------------------------------------------------------------
# optimization


def _trainable_arrays(model: SequenceModel) -> list[tuple[str, np.ndarray]]:
    layer = model.layer
    pairs = [(f"w_in.{name}", arr) for name, arr in layer.w_in.trainable_blocks().items()]
    pairs += [(f"w_rec.{name}", arr) for name, arr in layer.w_rec.trainable_blocks().items()]
    pairs += [("bias", layer.bias), ("w_out", model.w_out), ("b_out", model.b_out)]
    return pairs


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def _window_pass(model: SequenceModel, x_codes, y_codes, mask, state, vocab, train: bool):
    """Forward one window; if training, also return gradients for every array."""
    layer = model.layer
    batch, steps = x_codes.shape
    positions = steps if mask is None else int(mask.sum())
    scale = 1.0 / (batch * max(positions, 1))

    caches, hs, probs_list = [], [], []
    loss = 0.0
    for t in range(steps):
        x = _one_hot(x_codes[:, t], vocab)
        if train:
            state, cache = step_cached(layer, x, state)
            caches.append((x, cache))
        else:
            state = step(layer, x, state)
        if mask is not None and not mask[t]:
            hs.append(state.h)
            probs_list.append(None)
            continue
        logits = model.w_out @ state.h + model.b_out[:, None]
        logits -= logits.max(axis=0)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=0)
        picked = probs[y_codes[:, t], np.arange(batch)]
        loss += -np.log(np.maximum(picked, 1e-300)).sum() * scale
        hs.append(state.h)
        probs_list.append(probs)

    if not train:
        return loss, state, None

    grads = {name: np.zeros_like(arr) for name, arr in _trainable_arrays(model)}
    dh = np.zeros_like(state.h)
    dc = np.zeros_like(state.h) if layer.kind == "lstm" else None
    for t in reversed(range(steps)):
        if probs_list[t] is not None:
            dlogits = probs_list[t].copy()
            dlogits[y_codes[:, t], np.arange(batch)] -= 1.0
            dlogits *= scale
            grads["w_out"] += dlogits @ hs[t].T
            grads["b_out"] += dlogits.sum(axis=1)
            dh = dh + model.w_out.T @ dlogits
        x, cache = caches[t]
        sg = step_backward(layer, cache, dh, dc)
        for name, g in sg.w_in.parts.items():
            grads[f"w_in.{name}"] += g
        for name, g in sg.w_rec.parts.items():
            grads[f"w_rec.{name}"] += g
        grads["bias"] += sg.dbias
        dh = sg.dh_prev
        dc = sg.dc_prev
    return loss, state, grads


def _apply_update(model: SequenceModel, grads: dict[str, np.ndarray], lr: float) -> None:
    for name, arr in _trainable_arrays(model):
        arr -= lr * grads[name]
    if isinstance(model.layer.w_rec, CsrMatrix):
        model.layer.w_rec.refresh()
    if isinstance(model.layer.w_in, CsrMatrix):
        model.layer.w_in.refresh()


def _eval_loss(model: SequenceModel, task, vocab: int) -> float:
    total, count = 0.0, 0
    state = None
    for x, y, mask in task.val_windows():
        if state is None or not task.stateful:
            state = zero_state(model.layer.kind, model.layer.hidden, batch=x.shape[0])
        loss, state, _ = _window_pass(model, x, y, mask, state, vocab, train=False)
        total += loss
        count += 1
    return total / max(count, 1)


def _prune_model(model: SequenceModel, spec: TrainSpec) -> SequenceModel:
    layer = model.layer
    w_rec = magnitude_prune(layer.w_rec.reconstruct(), spec.cf)
    w_in = layer.w_in
    if spec.compress_input:
        w_in = magnitude_prune(w_in.reconstruct(), spec.cf)
    return SequenceModel(
        layer=RnnLayerWeights(layer.kind, w_in, w_rec, layer.bias),
        w_out=model.w_out,
        b_out=model.b_out,
    )


def train_toy(spec: TrainSpec) -> TrainRun:
    """Run one toy training job to completion, deterministically."""
    task = _make_task(spec)
    vocab = task.vocab
    model = build_model(spec, vocab)

    val = _eval_loss(model, task, vocab)
    rows = [EpochRow(0, None, val, math.exp(val))]
    if not math.isfinite(val):
        raise DivergenceError("non-finite validation loss before training")

    lr = spec.lr
    for epoch in range(1, spec.epochs + 1):
        if spec.scheme == "pruned" and epoch == spec.prune_after + 1:
            model = _prune_model(model, spec)
        losses = []
        state = None
        for x, y, mask in task.train_windows(epoch):
            if state is None or not task.stateful:
                state = zero_state(model.layer.kind, model.layer.hidden, batch=x.shape[0])
            loss, state, grads = _window_pass(model, x, y, mask, state, vocab, train=True)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss in epoch {epoch}")
            clip_gradients(grads, spec.clip_norm)
            _apply_update(model, grads, lr)
            state = RnnState(state.h.copy(), None if state.c is None else state.c.copy())
            losses.append(loss)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        val = _eval_loss(model, task, vocab)
        if not math.isfinite(val):
            raise DivergenceError(f"non-finite validation loss after epoch {epoch}")
        rows.append(EpochRow(epoch, train_loss, val, math.exp(val)))
        if epoch >= spec.decay_after:
            lr /= spec.lr_decay

    return TrainRun(spec, vocab, model_param_total(model), rows, model)


def evaluate(run: TrainRun) -> dict[str, float]:
    return {"val_loss": run.final_val_loss, "perplexity": run.final_perplexity}


# ---------------------------------------------------------------------------
# serialization


def run_to_csv(run: TrainRun) -> str:
    lines = ["epoch,train_loss,val_loss,perplexity"]
    for row in run.rows:
        train = "" if row.train_loss is None else repr(row.train_loss)
        lines.append(f"{row.epoch},{train},{row.val_loss!r},{row.perplexity!r}")
    return "\n".join(lines) + "\n"


def run_name(spec: TrainSpec) -> str:
    core = f"{spec.task}-{spec.scheme}-seed{spec.seed}"
    if spec.scheme in ("hmf", "lmf", "pruned"):
        core += f"-cf{spec.cf:g}"
    if spec.scheme == "hmf":
        core += "-kauto" if spec.k is None else f"-k{spec.k}"
    return core


def _describe(matrix: CompressedMatrix) -> dict:
    out: dict = {"kind": type(matrix).__name__, "rows": matrix.rows, "cols": matrix.cols}
    if hasattr(matrix, "dense_rows"):
        out["j"] = matrix.dense_rows
    if hasattr(matrix, "rank"):
        out["rank"] = matrix.rank
    if isinstance(matrix, CsrMatrix):
        out["nnz"] = matrix.values.size
    out["params"] = matrix.param_count()
    return out


def save_run(run: TrainRun, outdir, name: str | None = None) -> Path:
    """Write the loss CSV plus a weight manifest referencing CMX1 blobs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = name or run_name(run.spec)

    (outdir / f"{name}.csv").write_text(run_to_csv(run), encoding="utf-8")
    cmx.write_file(run.model.layer.w_in, outdir / f"{name}.w_in.cmx")
    cmx.write_file(run.model.layer.w_rec, outdir / f"{name}.w_rec.cmx")
    np.save(outdir / f"{name}.bias.npy", run.model.layer.bias)
    np.save(outdir / f"{name}.w_out.npy", run.model.w_out)
    np.save(outdir / f"{name}.b_out.npy", run.model.b_out)

    manifest = {
        "name": name,
        "task": run.spec.task,
        "scheme": run.spec.scheme,
        "cell": run.spec.cell,
        "cf": run.spec.cf,
        "k": run.spec.k,
        "seed": run.spec.seed,
        "hidden": run.model.layer.hidden,
        "vocab": run.vocab,
        "param_total": run.param_total,
        "epochs": run.spec.epochs,
        "final_val_loss": run.final_val_loss,
        "final_perplexity": run.final_perplexity,
        "w_in_structure": _describe(run.model.layer.w_in),
        "w_rec_structure": _describe(run.model.layer.w_rec),
        "files": {
            "trajectory": f"{name}.csv",
            "w_in": f"{name}.w_in.cmx",
            "w_rec": f"{name}.w_rec.cmx",
            "bias": f"{name}.bias.npy",
            "w_out": f"{name}.w_out.npy",
            "b_out": f"{name}.b_out.npy",
        },
    }
    manifest_path = outdir / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def load_model(manifest_path) -> tuple[SequenceModel, dict]:
    """Rebuild a saved model from its manifest; returns (model, manifest)."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    files = manifest["files"]
    layer = RnnLayerWeights(
        manifest["cell"],
        cmx.read_file(base / files["w_in"]),
        cmx.read_file(base / files["w_rec"]),
        np.load(base / files["bias"]),
    )
    model = SequenceModel(layer, np.load(base / files["w_out"]), np.load(base / files["b_out"]))
    return model, manifest
