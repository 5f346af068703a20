"""Experiment harness: configs, runs, persistence, tails."""

import json
import math

import numpy as np
import pytest

from qjl.buffon import BuffonParams, build_pmf, mc_sample, tv_distance
from qjl.harness import (
    ExperimentConfig,
    binary_tail_curve,
    check_equivalence,
    config_from_mapping,
    emit_report,
    generate_points,
    resolved_delta,
    run_distortion,
    run_from_manifest,
    run_l2_distortion,
    tail_curve,
)


def _cfg(**overrides):
    base = dict(s_points=6, dim=8, m_sweep=(32, 64, 128), delta=0.5,
                delta_mode="mean_dist", trials=3, seed=17)
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config and point generation

def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(s_points=1)
    with pytest.raises(ValueError):
        _cfg(m_sweep=())
    with pytest.raises(ValueError):
        _cfg(m_sweep=(64, 64))
    with pytest.raises(ValueError):
        _cfg(m_sweep=(128, 64))
    with pytest.raises(ValueError):
        _cfg(delta=-1.0)
    with pytest.raises(ValueError):
        _cfg(point_gen="torus")
    with pytest.raises(ValueError):
        _cfg(epsilon_grid=(0.1, 0.7))
    with pytest.raises(ValueError):
        _cfg(trials=0)


def test_config_from_mapping_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        config_from_mapping({"s_points": 4, "bogus": 1})


def test_generate_points_shapes_and_seeding():
    cfg = _cfg()
    a = generate_points(cfg)
    b = generate_points(cfg)
    assert a.points.shape == (6, 8)
    assert np.array_equal(a.points, b.points)

    shell = generate_points(_cfg(point_gen="sphere_shell"))
    norms = np.linalg.norm(shell.points, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-12

    grid = generate_points(_cfg(point_gen="grid"))
    assert np.unique(grid.points, axis=0).shape[0] == 6
    with pytest.raises(ValueError):
        generate_points(_cfg(point_gen="grid", s_points=6, dim=2))


def test_resolved_delta_modes():
    cfg = _cfg(delta=2.0, delta_mode="absolute")
    pts = generate_points(cfg)
    dists = pts.pairwise()
    assert resolved_delta(cfg, pts) == 2.0
    assert resolved_delta(_cfg(delta=2.0, delta_mode="diam"), pts) == pytest.approx(
        2.0 * dists.max()
    )
    assert resolved_delta(_cfg(delta=2.0, delta_mode="nu"), pts) == pytest.approx(
        2.0 * dists.min()
    )
    assert resolved_delta(_cfg(delta=2.0, delta_mode="mean_dist"), pts) == pytest.approx(
        2.0 * dists.mean()
    )


# ---------------------------------------------------------------------------
# distortion runs

def test_run_distortion_record_layout():
    cfg = _cfg()
    rep = run_distortion(cfg)
    n_pairs = 6 * 5 // 2
    assert rep.kind == "l1"
    assert rep.records.size == len(cfg.m_sweep) * cfg.trials * n_pairs
    assert len(rep.aggregates) == len(cfg.m_sweep)
    assert rep.columns == ("m", "trial", "i", "j", "true", "est", "baseline")
    # estimates sit in a sane range around the truth at these m
    rel = np.abs(rep.records["est"] - rep.records["true"]) / rep.records["true"]
    assert np.median(rel) < 0.5
    for key in ("slope_worst_abs", "c", "c_prime", "additive_fraction"):
        assert key in rep.fitted


def test_run_distortion_hamming_column():
    rep = run_distortion(_cfg(record_hamming=True, m_sweep=(32,)))
    assert "hamming" in rep.columns
    assert np.all(rep.records["hamming"] >= 0.0)
    assert np.all(rep.records["hamming"] <= 1.0)


def test_run_l2_distortion_layout_and_consistency():
    cfg = _cfg()
    rep = run_l2_distortion(cfg)
    assert rep.kind == "l2"
    assert rep.columns == ("m", "trial", "i", "j", "true", "raw", "g_true", "est", "baseline")
    # raw values concentrate around g(true): median relative gap is small
    rel = np.abs(rep.records["raw"] - rep.records["g_true"]) / rep.records["g_true"]
    assert np.median(rel) < 0.5
    assert "slope_additive" in rep.fitted


def test_run_l2_distortion_table_mismatch():
    from qjl.gdelta import build_gdelta

    cfg = _cfg(delta_mode="absolute", delta=0.5)
    with pytest.raises(ValueError):
        run_l2_distortion(cfg, table=build_gdelta(cfg.dim, 0.75, 64))


# ---------------------------------------------------------------------------
# persistence and reproduction

def test_emit_and_rerun_byte_identical(tmp_path):
    for runner, kind in ((run_distortion, "l1"), (run_l2_distortion, "l2")):
        rep = runner(_cfg())
        paths = emit_report(rep, tmp_path / kind / "first")
        rep2 = run_from_manifest(paths["manifest"])
        paths2 = emit_report(rep2, tmp_path / kind / "second")
        first = (tmp_path / kind / "first" / "records.csv").read_bytes()
        second = (tmp_path / kind / "second" / "records.csv").read_bytes()
        assert first == second
        agg = (tmp_path / kind / "first" / "aggregates.csv").read_text().strip().splitlines()
        assert len(agg) == len(_cfg().m_sweep) + 1  # header + one row per m


def test_manifest_contents(tmp_path):
    rep = run_distortion(_cfg())
    paths = emit_report(rep, tmp_path / "run")
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["kind"] == "l1"
    assert manifest["config"]["seed"] == 17
    assert manifest["config"]["m_sweep"] == [32, 64, 128]
    assert "delta_resolved" in manifest
    assert "c" in manifest["fitted"]


def test_run_from_manifest_unknown_kind(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"kind": "l3", "config": {}}))
    with pytest.raises(ValueError, match="kind"):
        run_from_manifest(bad)


# ---------------------------------------------------------------------------
# equivalence and tails

def test_check_equivalence_enforces_sample_floor():
    with pytest.raises(ValueError):
        check_equivalence(0.5, 2, 10_000, seed=0)


def test_check_equivalence_small_needle():
    tv = check_equivalence(0.5, 2, 1_000_000, seed=3)
    assert tv <= 0.005


def test_check_equivalence_degenerate_needle():
    # vanishing length: both distributions pile on zero, TV goes to zero
    tv = check_equivalence(1e-6, 3, 1_000_000, seed=4)
    assert tv <= 1e-5


def test_equivalence_matches_direct_mc_scale():
    # the embedding-path histogram and the geometric thrower target the same
    # law; at equal sample counts their TV errors agree within a factor 2
    a, dim, count = 2.5, 3, 1_000_000
    tv_pipeline = check_equivalence(a, dim, count, seed=9)
    params = BuffonParams(a, dim)
    hist = mc_sample(params, count, seed=9)
    tv_direct = tv_distance(hist / count, build_pmf(params).p)
    assert tv_pipeline <= 2.0 * tv_direct
    assert tv_direct <= 2.0 * tv_pipeline


def test_tail_curve_rows_and_bounds():
    cfg = _cfg(dim=12, m_sweep=(256,), delta=0.2, delta_mode="absolute",
               epsilon_grid=(0.0, 0.05, 0.1, 0.2), seed=8)
    u = np.zeros(12)
    v = np.zeros(12)
    v[0] = 1.0
    rows, (c, c_prime) = tail_curve(cfg, (u, v), draws=1000)
    assert c > 0.0 and c_prime > 0.0
    by_eps = {r["epsilon"]: r for r in rows}
    assert by_eps[0.0]["bound"] == 1.0  # vacuous
    assert by_eps[0.0]["failure_rate"] <= 1.0
    for r in rows:
        assert r["failure_rate"] <= r["bound"] + 3.0 * r["sigma"] + 1e-12


def test_tail_curve_validation():
    cfg = _cfg(delta_mode="absolute")
    u = np.zeros(8)
    v = np.ones(8)
    with pytest.raises(ValueError):
        tail_curve(cfg, (u, v), draws=10)
    with pytest.raises(ValueError):
        tail_curve(_cfg(delta_mode="diam"), (u, v), draws=1000)


def test_binary_tail_curve():
    u = np.eye(8)[0]
    v = np.eye(8)[1]
    rows = binary_tail_curve(u, v, m=256, draws=1000, epsilon_grid=(0.05, 0.1), seed=2)
    for r in rows:
        assert r["failure_rate"] <= r["bound"] + 3.0 * r["sigma"]


# ---------------------------------------------------------------------------
# invariants on the pinned acceptance runs (session fixtures)

def test_l1_worst_error_monotone_after_smoothing(l1_slope_report):
    errs = [a["worst_abs_median"] for a in l1_slope_report.aggregates]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_l2_additive_residual_decreasing(l2_slope_report):
    errs = [a["additive_resid_median"] for a in l2_slope_report.aggregates]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
