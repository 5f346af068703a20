"""Command-line surface, exercised through the click test runner."""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from qjl.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    result = runner.invoke(main, list(args), catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result.output


def test_buffon_pmf_csv(runner):
    out = _invoke(runner, "buffon", "pmf", "--a", "2.5", "--n", "3")
    lines = out.strip().splitlines()
    assert lines[0] == "k,p"
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [0, 1, 2, 3]
    total = sum(float(r[1]) for r in rows)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_buffon_moment(runner):
    out = _invoke(runner, "buffon", "moment", "--a", "0.7", "--n", "5", "--q", "3")
    assert float(out.strip()) == pytest.approx(0.375 * 0.7, rel=1e-12)


def test_buffon_mc_reports_tv(runner):
    out = _invoke(runner, "buffon", "mc", "--a", "0.5", "--n", "2",
                  "--count", "20000", "--seed", "4")
    lines = out.strip().splitlines()
    assert lines[0] == "k,count,frequency,exact"
    tv_line = [l for l in lines if l.startswith("# tv_distance")][0]
    assert float(tv_line.split(",")[1]) < 0.02


def test_embed_estimate_roundtrip(runner, tmp_path):
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    pts_path = tmp_path / "pts.csv"
    np.savetxt(pts_path, pts, delimiter=",")
    sk_path = tmp_path / "s.bjls"
    _invoke(runner, "embed", "--points", str(pts_path), "--m", "4096",
            "--delta", "0.1", "--seed", "5", "--out", str(sk_path))

    for metric, col in (("l1", 2), ("l2", 2)):
        out_path = tmp_path / f"d_{metric}.csv"
        _invoke(runner, "estimate", "--sketches", str(sk_path),
                "--metric", metric, "--out", str(out_path))
        rows = out_path.read_text().strip().splitlines()[1:]
        got = {(r.split(",")[0], r.split(",")[1]): float(r.split(",")[col])
               for r in rows}
        assert got[("0", "1")] == pytest.approx(1.0, rel=0.15)
        assert got[("0", "2")] == pytest.approx(2.0, rel=0.15)

    ham_path = tmp_path / "d_h.csv"
    _invoke(runner, "estimate", "--sketches", str(sk_path), "--metric", "hamming",
            "--out", str(ham_path))
    rows = ham_path.read_text().strip().splitlines()[1:]
    assert all(0.0 <= float(r.split(",")[2]) <= 1.0 for r in rows)


def test_gdelta_table_rows(runner, tmp_path):
    out_path = tmp_path / "g.csv"
    _invoke(runner, "gdelta", "table", "--n", "6", "--delta", "0.5",
            "--points", "64", "--out", str(out_path))
    lines = out_path.read_text().strip().splitlines()
    assert lines[0] == "lambda,g,lower_bound,upper_bound"
    assert len(lines) == 65
    for line in lines[1:]:
        lam, g, lo, hi = map(float, line.split(","))
        assert lo - 1e-9 <= g <= hi + 1e-9


def _write_config(tmp_path, **overrides):
    cfg = dict(s_points=5, dim=6, m_sweep=[32, 64], delta=0.5,
               delta_mode="mean_dist", trials=2, seed=3)
    cfg.update(overrides)
    lines = ["[experiment]"]
    for key, value in cfg.items():
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, list):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f"{key} = {value}")
    path = tmp_path / "run.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_experiment_distortion_and_manifest(runner, tmp_path):
    cfg_path = _write_config(tmp_path)
    out_dir = tmp_path / "run_out"
    out = _invoke(runner, "experiment", "distortion", "--config", str(cfg_path),
                  "--out", str(out_dir))
    assert "slope=" in out
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["kind"] == "l1"
    records = (out_dir / "records.csv").read_text().splitlines()
    assert records[0] == "m,trial,i,j,true,est,baseline"
    assert len(records) == 1 + 2 * 2 * 10  # header + sweep*trials*pairs


def test_experiment_l2(runner, tmp_path):
    cfg_path = _write_config(tmp_path)
    out_dir = tmp_path / "l2_out"
    out = _invoke(runner, "experiment", "l2", "--config", str(cfg_path),
                  "--out", str(out_dir))
    assert "slope_additive=" in out
    assert (out_dir / "records.csv").exists()


def test_experiment_equivalence(runner):
    out = _invoke(runner, "experiment", "equivalence", "--a", "0.5", "--n", "2",
                  "--samples", "1000000", "--seed", "2")
    tv = float(out.strip().split(",")[1])
    assert tv <= 0.005


def test_experiment_tails(runner, tmp_path):
    cfg_path = _write_config(tmp_path, dim=10, m_sweep=[256], delta=0.25,
                             delta_mode="absolute")
    out = _invoke(runner, "experiment", "tails", "--config", str(cfg_path),
                  "--distance", "1.0", "--draws", "1000")
    lines = out.strip().splitlines()
    assert lines[0].startswith("# c,")
    assert lines[1] == "epsilon,failure_rate,bound,sigma"
    assert len(lines) == 2 + 4  # default epsilon grid


def test_bad_config_rejected(runner, tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[experiment]\ns_points = 1\ndim = 4\nm_sweep = [8]\ndelta = 0.5\n")
    result = runner.invoke(main, ["experiment", "distortion", "--config", str(path)])
    assert result.exit_code != 0
    assert "bad config" in result.output
