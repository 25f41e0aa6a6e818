"""Join benchmark latencies with training quality into Pareto points.

Each saved training run contributes one point per (scheme, cf): x is the
measured matvec speedup over dense for that representation at the nearest
benchmarked compression factor, y is the run's final validation loss
(median across seeds when a combination was run more than once).  Output is
a delimited table plus rendered figures next to it.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from .bench import BenchRecord

REPORT_HEADER = "scheme,cf,params,speedup,final_val_loss,perplexity,runs"

# The dense-kernel schemes time identically to the baseline by construction.
_DENSE_EQUIVALENT = {"dense": "dense", "small": "dense", "hmf": "hmf", "lmf": "lmf", "pruned": "csr"}


@dataclass
class ParetoPoint:
    scheme: str
    cf: float
    params: int
    speedup: float
    final_val_loss: float
    perplexity: float
    runs: int


def load_manifests(runs_dir) -> list[dict]:
    paths = sorted(Path(runs_dir).glob("*.json"))
    manifests = []
    for path in paths:
        data = json.loads(path.read_text(encoding="utf-8"))
        if {"scheme", "cf", "final_val_loss"} <= data.keys():
            manifests.append(data)
    return manifests


def _speedup_for(records: list[BenchRecord], scheme: str, cf: float) -> float:
    rep = _DENSE_EQUIVALENT.get(scheme, scheme)
    if rep == "dense":
        return 1.0
    candidates = [rec for rec in records if rec.representation == rep]
    if not candidates:
        return float("nan")
    nearest_cf = min((rec.cf for rec in candidates), key=lambda c: abs(c - cf))
    matched = [rec.speedup for rec in candidates if rec.cf == nearest_cf]
    return statistics.median(matched)


def build_points(manifests: list[dict], records: list[BenchRecord]) -> list[ParetoPoint]:
    """Group runs by (scheme, cf) and take the median final loss per group."""
    groups: dict[tuple[str, float], list[dict]] = {}
    for man in manifests:
        cf = float(man["cf"]) if man["scheme"] != "dense" else 1.0
        groups.setdefault((man["scheme"], cf), []).append(man)
    points = []
    for (scheme, cf), group in sorted(groups.items()):
        losses = [float(man["final_val_loss"]) for man in group]
        ppls = [float(man["final_perplexity"]) for man in group]
        params = round(statistics.median(int(man["param_total"]) for man in group))
        points.append(
            ParetoPoint(
                scheme=scheme,
                cf=cf,
                params=params,
                speedup=_speedup_for(records, scheme, cf),
                final_val_loss=statistics.median(losses),
                perplexity=statistics.median(ppls),
                runs=len(group),
            )
        )
    return points


def emit_report(points: list[ParetoPoint]) -> str:
    lines = [REPORT_HEADER]
    for p in points:
        lines.append(
            f"{p.scheme},{p.cf:g},{p.params},{p.speedup!r},{p.final_val_loss!r},{p.perplexity!r},{p.runs}"
        )
    return "\n".join(lines) + "\n"


def render_figures(points: list[ParetoPoint], outdir) -> list[str]:
    """Render the speedup-versus-loss scatter (and a loss bar chart) as PNGs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    markers = {"dense": "s", "hmf": "o", "lmf": "^", "small": "v", "pruned": "x"}
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for scheme in sorted({p.scheme for p in points}):
        mine = sorted((p for p in points if p.scheme == scheme), key=lambda p: p.cf)
        xs = [p.speedup for p in mine]
        ys = [p.final_val_loss for p in mine]
        ax.plot(xs, ys, marker=markers.get(scheme, "o"), linestyle="--", label=scheme)
        for p in mine:
            if p.scheme != "dense":
                ax.annotate(f"cf={p.cf:g}", (p.speedup, p.final_val_loss),
                            textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("matvec speedup over dense")
    ax.set_ylabel("final validation loss")
    ax.invert_yaxis()  # up and to the right is better
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    pareto_path = outdir / "pareto.png"
    fig.savefig(pareto_path, dpi=150)
    plt.close(fig)
    written.append(str(pareto_path))

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    labels = [f"{p.scheme}\ncf={p.cf:g}" for p in points]
    ax.bar(range(len(points)), [p.final_val_loss for p in points])
    ax.set_xticks(range(len(points)), labels, fontsize=8)
    ax.set_ylabel("final validation loss")
    fig.tight_layout()
    loss_path = outdir / "val_loss.png"
    fig.savefig(loss_path, dpi=150)
    plt.close(fig)
    written.append(str(loss_path))
    return written
