"""Report assembly: manifest loading, point building, table, figures."""

from __future__ import annotations

import json
import math

import pytest

from hmf.bench import BenchRecord
from hmf.report import REPORT_HEADER, build_points, emit_report, load_manifests, render_figures


def _manifest(scheme: str, cf: float, seed: int, loss: float, params: int = 10_000) -> dict:
    return {
        "name": f"charlm-{scheme}-seed{seed}",
        "scheme": scheme,
        "cf": cf,
        "seed": seed,
        "param_total": params,
        "final_val_loss": loss,
        "final_perplexity": math.exp(loss),
    }


def _records() -> list[BenchRecord]:
    return [
        BenchRecord("dense", 192, 64, 1.0, None, None, None, None, 900, 880, 950, 1.0),
        BenchRecord("hmf", 192, 64, 2.5, 1, 19, None, None, 450, 440, 470, 2.0),
        BenchRecord("hmf", 192, 64, 5.0, 2, 9, None, None, 300, 290, 320, 3.0),
        BenchRecord("lmf", 192, 64, 2.5, None, None, 12, None, 500, 490, 520, 1.8),
        BenchRecord("csr", 192, 64, 2.5, None, None, None, 4915, 700, 690, 720, 1.3),
    ]


def test_load_manifests_filters_foreign_json(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps(_manifest("hmf", 2.5, 0, 1.1)))
    (tmp_path / "b.json").write_text(json.dumps({"unrelated": True}))
    (tmp_path / "c.txt").write_text("not json")
    manifests = load_manifests(tmp_path)
    assert len(manifests) == 1 and manifests[0]["scheme"] == "hmf"


def test_build_points_groups_and_medians():
    manifests = [
        _manifest("hmf", 2.5, 0, 1.05),
        _manifest("hmf", 2.5, 1, 1.10),
        _manifest("hmf", 2.5, 2, 1.07),
        _manifest("lmf", 2.5, 0, 1.12),
        _manifest("dense", 2.5, 0, 1.00),  # dense runs report at cf 1
    ]
    points = build_points(manifests, _records())
    by_key = {(p.scheme, p.cf): p for p in points}
    hmf_point = by_key[("hmf", 2.5)]
    assert hmf_point.runs == 3
    assert hmf_point.final_val_loss == pytest.approx(1.07)  # median of three seeds
    assert hmf_point.speedup == pytest.approx(2.0)
    assert by_key[("dense", 1.0)].speedup == 1.0
    assert by_key[("lmf", 2.5)].speedup == pytest.approx(1.8)


def test_build_points_nearest_cf_and_missing_rep():
    manifests = [_manifest("hmf", 4.6, 0, 1.2), _manifest("pruned", 2.5, 0, 1.3)]
    points = build_points(manifests, _records())
    by_scheme = {p.scheme: p for p in points}
    assert by_scheme["hmf"].speedup == pytest.approx(3.0)  # nearest benchmarked cf is 5.0
    assert by_scheme["pruned"].speedup == pytest.approx(1.3)  # pruned times as csr
    no_csr = [rec for rec in _records() if rec.representation != "csr"]
    orphan = build_points([_manifest("pruned", 2.5, 0, 1.3)], no_csr)
    assert math.isnan(orphan[0].speedup)


def test_small_baseline_times_as_dense():
    points = build_points([_manifest("small", 2.5, 0, 1.25)], _records())
    assert points[0].speedup == 1.0


def test_emit_report_layout():
    points = build_points([_manifest("hmf", 2.5, 0, 1.05, params=14569)], _records())
    text = emit_report(points)
    lines = text.strip().split("\n")
    assert lines[0] == REPORT_HEADER
    assert lines[1].startswith("hmf,2.5,14569,2.0,1.05,")
    assert lines[1].endswith(",1")


def test_render_figures_writes_pngs(tmp_path):
    manifests = [
        _manifest("hmf", 2.5, 0, 1.05),
        _manifest("hmf", 5.0, 0, 1.11),
        _manifest("lmf", 2.5, 0, 1.12),
        _manifest("dense", 1.0, 0, 1.0),
    ]
    points = build_points(manifests, _records())
    written = render_figures(points, tmp_path)
    assert sorted(p.rsplit("/", 1)[-1] for p in written) == ["pareto.png", "val_loss.png"]
    for path in written:
        blob = (tmp_path / path.rsplit("/", 1)[-1]).read_bytes()
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(blob) > 1000
