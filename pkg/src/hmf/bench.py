"""Batch-1 latency measurement for matvec kernels and cell steps.

Measurement discipline: seeded float32 operands, warmup passes before any
timing, one monotonic-clock reading per repetition, median with p10/p90
spread, and a dead-code-elimination guard that folds every output into a
printed checksum.  Timed sections request a single core and a single BLAS
thread.  If the clock's reported resolution is coarser than 1 percent of a
measured median the whole result is flagged unreliable; callers surface the
flag instead of failing.
"""

from __future__ import annotations

import contextlib
import io
import os
import time
from dataclasses import dataclass, fields

import numpy as np

from .cells import RnnLayerWeights, lstm_step, gru_step, zero_state
from .compress import magnitude_prune
from .matrix import CompressedMatrix, CsrMatrix, DenseMatrix, HmfMatrix, LmfMatrix
from .planner import solve_j_given_k, solve_lmf_rank

CSV_HEADER = "representation,m,n,cf,j,k,r,nnz,median_ns,p10_ns,p90_ns,speedup"

REPRESENTATIONS = ("dense", "hmf", "lmf", "csr")


@dataclass
class BenchSpec:
    """What to measure.  ``kernel`` is "matvec", "lstm", or "gru"; for cell
    kernels each dim is the hidden size and the recurrent matrix is the
    compressed operand."""

    representations: tuple[str, ...] = REPRESENTATIONS
    dims: tuple[int, ...] = (256,)
    cfs: tuple[float, ...] = (2.5,)
    ks: tuple[int, ...] = (1,)
    reps: int = 50
    warmup: int = 10
    seed: int = 0
    kernel: str = "matvec"

    def __post_init__(self):
        if self.reps < 30:
            raise ValueError(f"reps must be >= 30, got {self.reps}")
        if self.warmup < 5:
            raise ValueError(f"warmup must be >= 5, got {self.warmup}")
        if self.kernel not in ("matvec", "lstm", "gru"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        unknown = set(self.representations) - set(REPRESENTATIONS)
        if unknown:
            raise ValueError(f"unknown representations {sorted(unknown)}")


@dataclass
class BenchRecord:
    """One timed configuration; empty structure fields stay None."""

    representation: str
    m: int
    n: int
    cf: float
    j: int | None
    k: int | None
    r: int | None
    nnz: int | None
    median_ns: int
    p10_ns: int
    p90_ns: int
    speedup: float


@dataclass
class BenchResult:
    records: list[BenchRecord]
    checksum: float
    unreliable: bool
    timer_resolution_ns: float


def _timer_resolution_ns() -> float:
    return time.get_clock_info("perf_counter").resolution * 1e9


@contextlib.contextmanager
def _pinned_single_thread():
    """Best effort: run the timed section on one core with one BLAS thread."""
    restore_mask = None
    if hasattr(os, "sched_setaffinity"):
        try:
            restore_mask = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {min(restore_mask)})
        except OSError:
            restore_mask = None
    try:
        try:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=1):
                yield
        except ImportError:
            yield
    finally:
        if restore_mask is not None:
            with contextlib.suppress(OSError):
                os.sched_setaffinity(0, restore_mask)


def _time_callable(fn, reps: int, warmup: int) -> tuple[list[int], float]:
    checksum = 0.0
    for _ in range(warmup):
        out = fn()
        checksum += float(np.asarray(out).ravel()[0])
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        out = fn()
        samples.append(time.perf_counter_ns() - t0)
        checksum += float(np.asarray(out).ravel()[0])
    return samples, checksum


def _percentiles(samples: list[int]) -> tuple[int, int, int]:
    arr = np.asarray(samples)
    p10, med, p90 = np.percentile(arr, [10, 50, 90], method="nearest")
    return int(med), int(p10), int(p90)


def _build_operand(rep: str, m: int, n: int, cf: float, k: int, rng) -> tuple[CompressedMatrix, dict]:
    if rep == "dense":
        return DenseMatrix(rng.standard_normal((m, n), dtype=np.float32)), {}
    if rep == "hmf":
        plan = solve_j_given_k(m, n, k, cf)
        top = rng.standard_normal((plan.j, n), dtype=np.float32)
        tall = rng.standard_normal((m - plan.j, plan.k), dtype=np.float32)
        flat = rng.standard_normal((plan.k, n), dtype=np.float32)
        return HmfMatrix(top, tall, flat), {"j": plan.j, "k": plan.k}
    if rep == "lmf":
        plan = solve_lmf_rank(m, n, cf)
        left = rng.standard_normal((m, plan.r), dtype=np.float32)
        right = rng.standard_normal((plan.r, n), dtype=np.float32)
        return LmfMatrix(left, right), {"r": plan.r}
    dense = rng.standard_normal((m, n), dtype=np.float32)
    pruned = magnitude_prune(dense, cf)
    return pruned, {"nnz": pruned.nnz}


def _make_kernel(spec: BenchSpec, mat: CompressedMatrix, rng):
    """The timed closure: a bare matvec, or one full cell step."""
    if spec.kernel == "matvec":
        x = rng.standard_normal(mat.cols, dtype=np.float32)
        return lambda: mat.matvec(x)
    hidden = mat.cols
    gates = 4 if spec.kernel == "lstm" else 3
    w_in = DenseMatrix(rng.standard_normal((gates * hidden, hidden), dtype=np.float32))
    bias = rng.standard_normal(gates * hidden)
    layer = RnnLayerWeights(spec.kernel, w_in, mat, bias)
    x = rng.standard_normal(hidden, dtype=np.float32)
    state = zero_state(spec.kernel, hidden)
    step_fn = lstm_step if spec.kernel == "lstm" else gru_step
    return lambda: step_fn(layer, x, state).h


def _operand_dims(spec: BenchSpec, dim: int) -> tuple[int, int]:
    if spec.kernel == "matvec":
        return dim, dim
    gates = 4 if spec.kernel == "lstm" else 3
    return gates * dim, dim


def run_bench(spec: BenchSpec) -> BenchResult:
    """Measure every (dim, cf, representation) cell of the requested grid."""
    records: list[BenchRecord] = []
    checksum = 0.0
    resolution = _timer_resolution_ns()
    unreliable = False

    with _pinned_single_thread():
        for dim in spec.dims:
            m, n = _operand_dims(spec, dim)
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, dim]))
            dense_mat, _ = _build_operand("dense", m, n, 1.0, 1, rng)
            samples, cs = _time_callable(_make_kernel(spec, dense_mat, rng), spec.reps, spec.warmup)
            checksum += cs
            dense_med, dense_p10, dense_p90 = _percentiles(samples)
            if "dense" in spec.representations:
                records.append(
                    BenchRecord("dense", m, n, 1.0, None, None, None, None,
                                dense_med, dense_p10, dense_p90, 1.0)
                )
            for cf in spec.cfs:
                for rep in spec.representations:
                    if rep == "dense":
                        continue
                    for k in spec.ks if rep == "hmf" else (None,):
                        mat, info = _build_operand(rep, m, n, cf, k or 1, rng)
                        samples, cs = _time_callable(
                            _make_kernel(spec, mat, rng), spec.reps, spec.warmup
                        )
                        checksum += cs
                        med, p10, p90 = _percentiles(samples)
                        records.append(
                            BenchRecord(
                                rep, m, n, cf,
                                info.get("j"), info.get("k"), info.get("r"), info.get("nnz"),
                                med, p10, p90, dense_med / med,
                            )
                        )

    for rec in records:
        if resolution > 0.01 * rec.median_ns:
            unreliable = True
    return BenchResult(records, checksum, unreliable, resolution)


# ---------------------------------------------------------------------------
# serialization


def _field_to_str(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(records: list[BenchRecord]) -> str:
    """Delimited output with a fixed header; parse_results inverts it."""
    if not records:
        raise ValueError("no benchmark records to emit")
    lines = [CSV_HEADER]
    for rec in records:
        lines.append(",".join(_field_to_str(getattr(rec, f.name)) for f in fields(BenchRecord)))
    return "\n".join(lines) + "\n"


def parse_results(text: str) -> list[BenchRecord]:
    stream = io.StringIO(text)
    header = stream.readline().strip()
    if header != CSV_HEADER:
        raise ValueError(f"unexpected header {header!r}")
    records = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(CSV_HEADER.split(",")):
            raise ValueError(f"malformed row {line!r}")
        rep, m, n, cf, j, k, r, nnz, med, p10, p90, speedup = parts
        opt = lambda s: None if s == "" else int(s)
        records.append(
            BenchRecord(rep, int(m), int(n), float(cf), opt(j), opt(k), opt(r), opt(nnz),
                        int(med), int(p10), int(p90), float(speedup))
        )
    return records


def emit_speedup_series(records: list[BenchRecord], outdir) -> list[str]:
    """Two-column (cf, speedup) series per representation and size; one file
    each, plain space-separated rows."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    keys = sorted({(rec.representation, rec.m, rec.n) for rec in records})
    for rep, m, n in keys:
        rows = [rec for rec in records if (rec.representation, rec.m, rec.n) == (rep, m, n)]
        rows.sort(key=lambda rec: rec.cf)
        path = outdir / f"speedup_{rep}_{m}x{n}.dat"
        path.write_text(
            "".join(f"{rec.cf:g} {rec.speedup!r}\n" for rec in rows), encoding="utf-8"
        )
        written.append(str(path))
    return written
