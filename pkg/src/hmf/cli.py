"""Command-line front end: plan, factorize, check, bench, train, report.

Every subcommand accepts ``--config FILE`` holding flat ``key=value`` lines
(keys are the long flag names with dashes as underscores); explicit flags
win over the file, built-in defaults fill the rest, and the effective
configuration is echoed as a ``#`` header line before any output.

Exit codes: 0 success, 2 measurement flagged unreliable, 3 planning
infeasible, 4 malformed container, 5 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

EXIT_OK = 0
EXIT_UNRELIABLE = 2
EXIT_PLANNING = 3
EXIT_FORMAT = 4
EXIT_DIVERGENCE = 5


def _cf_value(text: str) -> float:
    """A compression factor; accepts decimals and exact fractions like 5/3."""
    return float(Fraction(text))


def _cf_list(text: str) -> tuple[float, ...]:
    return tuple(_cf_value(part) for part in text.split(",") if part)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part)


def _k_value(text: str) -> int | None:
    return None if text == "auto" else int(text)


def _bool_value(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _read_config(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


class _Options:
    """Declares a subcommand's typed options once; resolves flag/config/default."""

    def __init__(self):
        self.spec: dict[str, tuple] = {}

    def add(self, parser: argparse.ArgumentParser, name: str, conv, default, help_text: str):
        self.spec[name.replace("-", "_")] = (conv, default)
        parser.add_argument(f"--{name}", type=str, default=None, help=help_text)

    def resolve(self, args: argparse.Namespace) -> dict:
        config = _read_config(args.config) if getattr(args, "config", None) else {}
        unknown = set(config) - set(self.spec)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        out = {}
        for key, (conv, default) in self.spec.items():
            raw = getattr(args, key, None)
            if raw is not None:
                out[key] = conv(raw)
            elif key in config:
                out[key] = conv(config[key])
            else:
                out[key] = default
        return out


def _echo_config(command: str, values: dict) -> None:
    parts = " ".join(f"{key}={_fmt(value)}" for key, value in sorted(values.items()))
    print(f"# {command} {parts}")


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


# ---------------------------------------------------------------------------
# plan


def _setup_plan(sub):
    parser = sub.add_parser("plan", help="solve structures for target compression factors")
    opts = _Options()
    opts.add(parser, "m", int, 256, "rows")
    opts.add(parser, "n", int, 256, "columns")
    opts.add(parser, "cf", _cf_list, (1.25, 5 / 3, 2.5, 5.0), "target factors, comma list; fractions allowed")
    opts.add(parser, "k", int, 1, "tail rank for the hybrid split")
    opts.add(parser, "csv", str, "", "also write the table to this CSV path")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_plan(opts.resolve(args)))


def _cmd_plan(cfg: dict) -> int:
    from .planner import RANK_RANGE_NOTE, rank_range_table

    _echo_config("plan", {k: v for k, v in cfg.items() if k != "csv"})
    rows = rank_range_table(cfg["m"], cfg["n"], cfg["cf"], k=cfg["k"])
    print(f"{'cf':>10} {'lmf_r':>6} {'lmf_params':>11} {'hmf_j':>6} {'hmf_k':>6} "
          f"{'hmf_params':>11} {'rank_min':>9} {'rank_max':>9}")
    for row in rows:
        print(f"{row.target_cf:>10.4f} {row.lmf_rank:>6} {row.lmf_params:>11} {row.hmf_j:>6} "
              f"{row.hmf_k:>6} {row.hmf_params:>11} {row.hmf_rank_min:>9} {row.hmf_rank_max:>9}")
    print(f"# note: {RANK_RANGE_NOTE}")
    if cfg["csv"]:
        lines = ["cf,lmf_rank,lmf_params,hmf_j,hmf_k,hmf_params,hmf_rank_min,hmf_rank_max"]
        for row in rows:
            lines.append(f"{row.target_cf:g},{row.lmf_rank},{row.lmf_params},{row.hmf_j},"
                         f"{row.hmf_k},{row.hmf_params},{row.hmf_rank_min},{row.hmf_rank_max}")
        Path(cfg["csv"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# factorize


def _setup_factorize(sub):
    parser = sub.add_parser("factorize", help="compress a dense CMX1 file")
    opts = _Options()
    opts.add(parser, "in", str, "", "input CMX1 path (dense)")
    opts.add(parser, "out", str, "", "output CMX1 path")
    opts.add(parser, "scheme", str, "lmf", "lmf | hmf | csr")
    opts.add(parser, "cf", _cf_value, 0.0, "target factor; solves the structure")
    opts.add(parser, "r", int, 0, "explicit rank (lmf)")
    opts.add(parser, "j", int, -1, "explicit dense rows (hmf)")
    opts.add(parser, "k", int, 1, "tail rank (hmf)")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_factorize(opts.resolve(args)))


def _cmd_factorize(cfg: dict) -> int:
    from . import cmx
    from .compress import factorize_lmf_svd, magnitude_prune, split_hmf_from_dense
    from .matrix import DenseMatrix
    from .planner import PlanningError, solve_j_given_k, solve_lmf_rank

    _echo_config("factorize", cfg)
    if not cfg["in"] or not cfg["out"]:
        raise ValueError("factorize needs --in and --out paths")
    src = cmx.read_file(cfg["in"])
    if not isinstance(src, DenseMatrix):
        raise cmx.FormatError(f"factorize expects a dense container, got {type(src).__name__}")

    m, n = src.rows, src.cols
    scheme = cfg["scheme"]
    if scheme == "lmf":
        r = cfg["r"] or (solve_lmf_rank(m, n, cfg["cf"]).r if cfg["cf"] else 0)
        if not r:
            raise PlanningError("lmf needs --r or --cf")
        out = factorize_lmf_svd(src, r)
    elif scheme == "hmf":
        j = cfg["j"]
        if j < 0:
            if not cfg["cf"]:
                raise PlanningError("hmf needs --j or --cf")
            j = solve_j_given_k(m, n, cfg["k"], cfg["cf"]).j
        out = split_hmf_from_dense(src, j, cfg["k"] if j < m else 0)
    elif scheme == "csr":
        if not cfg["cf"]:
            raise PlanningError("csr needs --cf")
        out = magnitude_prune(src, cfg["cf"])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    cmx.write_file(out, cfg["out"])
    print(f"wrote {cfg['out']}: {type(out).__name__} {m}x{n}, "
          f"params={out.param_count()}, cf={out.compression_factor():.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def _setup_check(sub):
    parser = sub.add_parser("check", help="compare a kernel against its densified oracle")
    opts = _Options()
    opts.add(parser, "file", str, "", "CMX1 file to check")
    opts.add(parser, "random", str, "", "or build a random operand: dense | lmf | hmf | csr")
    opts.add(parser, "m", int, 64, "rows for --random")
    opts.add(parser, "n", int, 64, "columns for --random")
    opts.add(parser, "j", int, -1, "dense rows for --random hmf (else planned from --cf)")
    opts.add(parser, "k", int, 1, "tail rank for --random hmf")
    opts.add(parser, "r", int, 0, "rank for --random lmf (else planned from --cf)")
    opts.add(parser, "cf", _cf_value, 2.5, "factor used when planning a random operand")
    opts.add(parser, "seed", int, 0, "seed for operands and probe vectors")
    opts.add(parser, "trials", int, 20, "number of probe vectors")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_check(opts.resolve(args)))


def _random_matrix(cfg: dict):
    import numpy as np

    from .compress import InitSpec, init_dense, init_hmf, init_lmf, magnitude_prune
    from .planner import StructurePlan, solve_j_given_k, solve_lmf_rank

    rep, m, n, seed = cfg["random"], cfg["m"], cfg["n"], cfg["seed"]
    if rep == "dense":
        return init_dense(m, n, InitSpec(seed))
    if rep == "lmf":
        plan = (StructurePlan(m, n, "lmf", 1.0, 1.0, cfg["r"], r=cfg["r"]) if cfg["r"]
                else solve_lmf_rank(m, n, cfg["cf"]))
        return init_lmf(plan, InitSpec(seed))
    if rep == "hmf":
        if cfg["j"] >= 0:
            j, k = cfg["j"], cfg["k"]
            plan = StructurePlan(m, n, "hmf", 1.0, 1.0, j + k, j=j, k=k)
        else:
            plan = solve_j_given_k(m, n, cfg["k"], cfg["cf"])
        return init_hmf(plan, InitSpec(seed))
    if rep == "csr":
        rng = np.random.default_rng(seed)
        return magnitude_prune(rng.standard_normal((m, n)), cfg["cf"])
    raise ValueError(f"unknown representation {rep!r}")


def _cmd_check(cfg: dict) -> int:
    import numpy as np

    from . import cmx

    _echo_config("check", cfg)
    if cfg["file"]:
        mat = cmx.read_file(cfg["file"])
    elif cfg["random"]:
        mat = _random_matrix(cfg)
    else:
        raise ValueError("check needs --file or --random")

    dense = mat.reconstruct()
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1]))
    worst = 0.0
    for _ in range(cfg["trials"]):
        x = rng.standard_normal(mat.cols)
        got = mat.matvec(x)
        want = dense.matvec(x)
        scale = max(float(np.max(np.abs(want))), 1e-30)
        worst = max(worst, float(np.max(np.abs(got - want))) / scale)
    ok = worst <= 1e-8
    print(f"{type(mat).__name__} {mat.rows}x{mat.cols}: max relative error {worst:.3e} "
          f"over {cfg['trials']} probes -> {'OK' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------------------
# bench


def _setup_bench(sub):
    parser = sub.add_parser("bench", help="time kernels and write the results table")
    opts = _Options()
    opts.add(parser, "kernel", str, "matvec", "matvec | lstm | gru")
    opts.add(parser, "dims", _int_list, (256, 512), "square sizes (hidden sizes for cells)")
    opts.add(parser, "cf", _cf_list, (2.5, 5.0), "target factors")
    opts.add(parser, "k", _int_list, (1,), "hybrid tail ranks")
    opts.add(parser, "reps", int, 50, "timed repetitions per cell (>= 30)")
    opts.add(parser, "warmup", int, 10, "warmup passes per cell (>= 5)")
    opts.add(parser, "seed", int, 0, "operand seed")
    opts.add(parser, "out", str, "bench.csv", "output CSV path")
    opts.add(parser, "series-dir", str, "", "directory for per-representation .dat series")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_bench(opts.resolve(args)))


def _cmd_bench(cfg: dict) -> int:
    from .bench import BenchSpec, emit_results, emit_speedup_series, run_bench

    _echo_config("bench", cfg)
    spec = BenchSpec(
        dims=cfg["dims"], cfs=cfg["cf"], ks=cfg["k"], reps=cfg["reps"],
        warmup=cfg["warmup"], seed=cfg["seed"], kernel=cfg["kernel"],
    )
    result = run_bench(spec)
    Path(cfg["out"]).write_text(emit_results(result.records), encoding="utf-8")
    series_dir = cfg["series_dir"] or str(Path(cfg["out"]).parent or ".")
    written = emit_speedup_series(result.records, series_dir)
    print(f"checksum={result.checksum!r}")
    print(f"timer_resolution_ns={result.timer_resolution_ns:g}")
    print(f"wrote {cfg['out']} and {len(written)} speedup series")
    if result.unreliable:
        print("warning: timer resolution exceeds 1% of a measured median; "
              "measurements flagged unreliable", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _setup_train(sub):
    parser = sub.add_parser("train", help="run a toy training job")
    opts = _Options()
    opts.add(parser, "task", str, "charlm", "charlm | copy")
    opts.add(parser, "scheme", str, "dense", "dense | hmf | lmf | small | pruned")
    opts.add(parser, "cell", str, "gru", "lstm | gru")
    opts.add(parser, "hidden", int, 64, "hidden units")
    opts.add(parser, "cf", _cf_value, 2.5, "target factor for compressed schemes")
    opts.add(parser, "k", _k_value, None, "hybrid tail rank, or `auto` for the widest feasible")
    opts.add(parser, "epochs", int, 20, "training epochs")
    opts.add(parser, "lr", float, 1.0, "SGD learning rate")
    opts.add(parser, "decay-after", int, 10, "first epoch after which lr decays")
    opts.add(parser, "clip-norm", float, 5.0, "global gradient-norm clip")
    opts.add(parser, "seed", int, 0, "seed for init and data order")
    opts.add(parser, "window", int, 32, "truncated-backprop window")
    opts.add(parser, "batch", int, 16, "parallel streams")
    opts.add(parser, "train-chars", int, 100_000, "corpus characters per epoch (charlm)")
    opts.add(parser, "val-chars", int, 10_000, "held-out characters (charlm)")
    opts.add(parser, "compress-input", _bool_value, True, "compress the input matrix too")
    opts.add(parser, "out", str, "runs", "output directory")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_train(opts.resolve(args)))


def _cmd_train(cfg: dict) -> int:
    from .training import TrainSpec, save_run, train_toy

    _echo_config("train", cfg)
    spec = TrainSpec(
        task=cfg["task"], scheme=cfg["scheme"], cell=cfg["cell"], hidden=cfg["hidden"],
        cf=cfg["cf"], k=cfg["k"], epochs=cfg["epochs"], lr=cfg["lr"],
        decay_after=cfg["decay_after"], clip_norm=cfg["clip_norm"], seed=cfg["seed"],
        window=cfg["window"], batch=cfg["batch"], train_chars=cfg["train_chars"],
        val_chars=cfg["val_chars"], compress_input=cfg["compress_input"],
    )
    run = train_toy(spec)
    manifest = save_run(run, cfg["out"])
    print(f"params={run.param_total} hidden={run.model.layer.hidden} vocab={run.vocab}")
    print(f"final val_loss={run.final_val_loss:.6f} perplexity={run.final_perplexity:.4f}")
    print(f"wrote {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def _setup_report(sub):
    parser = sub.add_parser("report", help="join bench and training outputs")
    opts = _Options()
    opts.add(parser, "bench", str, "bench.csv", "bench CSV produced by `bench`")
    opts.add(parser, "runs", str, "runs", "directory of training manifests")
    opts.add(parser, "out", str, "report", "output directory")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    parser.set_defaults(func=lambda args: _cmd_report(opts.resolve(args)))


def _cmd_report(cfg: dict) -> int:
    from .bench import parse_results
    from .report import build_points, emit_report, load_manifests, render_figures

    _echo_config("report", cfg)
    records = parse_results(Path(cfg["bench"]).read_text(encoding="utf-8"))
    manifests = load_manifests(cfg["runs"])
    if not manifests:
        raise ValueError(f"no run manifests found under {cfg['runs']}")
    points = build_points(manifests, records)
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    table = emit_report(points)
    (outdir / "report.csv").write_text(table, encoding="utf-8")
    figures = render_figures(points, outdir)
    print(table, end="")
    print(f"wrote {outdir / 'report.csv'} and {len(figures)} figures")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmf",
        description="hybrid matrix factorization: planning, kernels, toy training, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _setup_plan(sub)
    _setup_factorize(sub)
    _setup_check(sub)
    _setup_bench(sub)
    _setup_train(sub)
    _setup_report(sub)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    from .planner import PlanningError

    try:
        return args.func(args)
    except PlanningError as exc:
        print(f"planning error: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except Exception as exc:  # classify lazily to keep startup imports light
        from .cmx import FormatError
        from .compress import PruningError
        from .matrix import ShapeError, StructureError
        from .training import DivergenceError

        if isinstance(exc, (FormatError, StructureError)):
            print(f"format error: {exc}", file=sys.stderr)
            return EXIT_FORMAT
        if isinstance(exc, DivergenceError):
            print(f"divergence: {exc}", file=sys.stderr)
            return EXIT_DIVERGENCE
        if isinstance(exc, PruningError):
            print(f"planning error: {exc}", file=sys.stderr)
            return EXIT_PLANNING
        if isinstance(exc, (ShapeError, ValueError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
