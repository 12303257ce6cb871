from __future__ import annotations

import json
from pathlib import Path

import pytest

from pricemfg import __version__
from pricemfg.cli import main

BENCH_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "benchmark.toml"


def _small_config(tmp_path: Path, extra: str = "") -> Path:
    cfg = tmp_path / "small.toml"
    cfg.write_text(BENCH_CONFIG.read_text().replace("n_t = 20", "n_t = 10").replace("n_x = 40", "n_x = 20") + extra)
    return cfg


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(BENCH_CONFIG)]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nn_t = 0\n")
    assert main(["validate", str(bad)]) == 2
    assert "grid.n_t must be ≥ 2" in capsys.readouterr().out


def test_run_rejects_bad_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[cost]\nc = -1.0\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert main(["run", str(BENCH_CONFIG), "--refine", "0", "--out", str(tmp_path / "out")]) == 2


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(_small_config(tmp_path)), "--out", str(out)]) == 0
    assert "status: ok" in capsys.readouterr().out
    for name in ("phi.csv", "m.csv", "u.csv", "price.csv", "supply.csv", "report.json",
                 "plotdata/price_numeric.csv", "plotdata/m_analytic_level0.csv"):
        assert (out / name).is_file(), name
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and report["converged"]
    assert report["levels"][0]["grid"]["n_t"] == 10
    header = (out / "phi.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t" and len(header) == 22


def test_runs_are_byte_identical(tmp_path):
    cfg = _small_config(tmp_path)
    bodies = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        bodies.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    assert bodies[0] == bodies[1]


@pytest.mark.slow
def test_refinement_tables(tmp_path):
    out = tmp_path / "ref"
    assert main(["run", str(_small_config(tmp_path)), "--refine", "2", "--out", str(out)]) == 0
    assert (out / "level_0" / "phi.csv").is_file() and (out / "level_1" / "phi.csv").is_file()
    rows = (out / "refinement.csv").read_text().splitlines()
    assert len(rows) == 3
    assert (out / "refinement_orders.csv").is_file()
