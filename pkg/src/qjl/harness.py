"""Desk-scale distortion experiments for the quantized random mapping.

Sweeps the embedded dimension over a fixed point cloud, records per-pair
distance estimates against the truth, fits the decay slopes and the smallest
band constants that cover 95% of pairs, checks the per-coordinate crossing
law through the full embedding path, and measures concentration tails.  All
outputs are CSV plus a JSON manifest from which every run can be reproduced
byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .buffon import BuffonParams, build_pmf, tv_distance
from .embedding import (
    _L1_SCALE,
    PointSet,
    Projector,
    _codes_from_projection,
    angular,
    embed,
)
from .gdelta import GDeltaTable, build_gdelta
from .rng import make_rng, polar_gaussian

POINT_GENERATORS = ("gaussian_cloud", "sphere_shell", "grid")
DELTA_MODES = ("absolute", "mean_dist", "diam", "nu")
SEPARATION_GUARD = 1e-9  # pairs closer than this skip multiplicative stats
_PAIR_CHUNK = 128
_RHO_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep description: cloud, bin width, embedded dimensions, repetitions.

    ``delta`` is interpreted through ``delta_mode``: an absolute width, or a
    multiple of the cloud's mean pairwise distance, diameter, or minimum
    pairwise distance.
    """

    s_points: int
    dim: int
    m_sweep: tuple
    delta: float
    delta_mode: str = "absolute"
    point_gen: str = "gaussian_cloud"
    trials: int = 5
    seed: int = 0
    epsilon_grid: tuple = (0.02, 0.05, 0.1, 0.2)
    record_hamming: bool = False
    gdelta_points: int = 96

    def __post_init__(self):
        if self.s_points < 2:
            raise ValueError(f"need at least 2 points, got {self.s_points}")
        if self.dim < 1:
            raise ValueError(f"ambient dimension must be >= 1, got {self.dim}")
        sweep = tuple(int(m) for m in self.m_sweep)
        if len(sweep) == 0:
            raise ValueError("m_sweep must not be empty")
        if any(m < 1 for m in sweep) or any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError(f"m_sweep must be strictly increasing positive, got {sweep}")
        object.__setattr__(self, "m_sweep", sweep)
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and > 0, got {self.delta}")
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"delta_mode must be one of {DELTA_MODES}")
        if self.point_gen not in POINT_GENERATORS:
            raise ValueError(f"point_gen must be one of {POINT_GENERATORS}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        eps = tuple(float(e) for e in self.epsilon_grid)
        if any(e < 0.0 or e > 0.5 for e in eps):
            raise ValueError(f"epsilon grid must lie in [0, 0.5], got {eps}")
        object.__setattr__(self, "epsilon_grid", eps)
        if self.gdelta_points < 64:
            raise ValueError(f"gdelta_points must be >= 64, got {self.gdelta_points}")


def _cell_seed(seed: int, *key: int) -> int:
    """Derived 64-bit seed for an independent experiment cell."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_points(cfg: ExperimentConfig) -> PointSet:
    """Point cloud for the run; seeded separately from the projectors."""
    rng = make_rng(cfg.seed, 0)
    s, dim = cfg.s_points, cfg.dim
    if cfg.point_gen == "gaussian_cloud":
        pts = polar_gaussian(rng, (s, dim))
    elif cfg.point_gen == "sphere_shell":
        pts = polar_gaussian(rng, (s, dim))
        norms = np.linalg.norm(pts, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        pts = pts / norms
    else:  # binary-corner lattice
        bits = max(1, math.ceil(math.log2(s)))
        if dim < bits:
            raise ValueError(
                f"grid generator needs dim >= ceil(log2(s)) = {bits}, got {dim}"
            )
        pts = np.zeros((s, dim))
        for i in range(s):
            for b in range(bits):
                pts[i, b] = (i >> b) & 1
    return PointSet(pts)


def resolved_delta(cfg: ExperimentConfig, pts: PointSet) -> float:
    if cfg.delta_mode == "absolute":
        return cfg.delta
    dists = pts.pairwise()
    scale = {
        "mean_dist": float(dists.mean()),
        "diam": float(dists.max()),
        "nu": float(dists.min()),
    }[cfg.delta_mode]
    if scale <= 0.0:
        raise ValueError("relative delta mode needs a cloud with distinct points")
    return cfg.delta * scale


@dataclass(eq=False)
class ExperimentReport:
    """Per-pair records plus per-m aggregates and fitted constants.

    ``records`` is a structured array whose fields are listed in ``columns``;
    aggregates are recomputable from it.
    """

    kind: str
    config: ExperimentConfig
    delta_resolved: float
    columns: tuple
    records: np.ndarray
    aggregates: list
    fitted: dict


def _fit_loglog_slope(m_values, errors) -> float:
    m_arr = np.asarray(m_values, dtype=float)
    err = np.asarray(errors, dtype=float)
    keep = err > 0.0
    if keep.sum() < 2:
        return float("nan")
    coef = np.polyfit(np.log(m_arr[keep]), np.log(err[keep]), 1)
    return float(coef[0])


def _fit_band_constants(resid_scaled, true_d, delta, coverage=0.95):
    """Smallest (c, c') with resid <= c*true + c'*delta on >= coverage of pairs.

    The trade-off between the two constants is one-dimensional, so the ratio
    c'/c is scanned over a fixed grid and the candidate with the smallest
    band width at the median distance wins.
    """
    resid_scaled = np.asarray(resid_scaled, dtype=float)
    true_d = np.asarray(true_d, dtype=float)
    med_true = float(np.median(true_d))
    best = None
    for rho in _RHO_GRID:
        c = float(np.quantile(resid_scaled / (true_d + rho * delta), coverage))
        width = c * med_true + rho * c * delta
        if best is None or width < best[0]:
            best = (width, c, rho * c)
    return best[1], best[2]


def _error_mass_split(records) -> dict:
    """Decompose the squared error mass of the estimates.

    est - true = (est - baseline) + (baseline - true) splits each residual
    into the quantization-induced part and the projection-induced part (the
    cross term vanishes in expectation over the dither); the additive
    fraction is the quantization share of the total squared mass.
    """
    quant_sq = float(np.sum((records["est"] - records["baseline"]) ** 2))
    proj_sq = float(np.sum((records["baseline"] - records["true"]) ** 2))
    total = quant_sq + proj_sq
    return {
        "quant_error_mass": quant_sq,
        "projection_error_mass": proj_sq,
        "additive_fraction": quant_sq / total if total > 0.0 else 1.0,
    }


def _pair_sums(codes_or_vals, idx_i, idx_j, power):
    """sum_j |row_i - row_j|^power over pairs, chunked to bound memory."""
    out = np.empty(idx_i.size)
    for lo in range(0, idx_i.size, _PAIR_CHUNK):
        hi = min(lo + _PAIR_CHUNK, idx_i.size)
        diff = (
            codes_or_vals[idx_i[lo:hi]].astype(float)
            - codes_or_vals[idx_j[lo:hi]].astype(float)
        )
        if power == 1:
            out[lo:hi] = np.abs(diff).sum(axis=1)
        else:
            out[lo:hi] = (diff * diff).sum(axis=1)
    return out


def run_distortion(cfg: ExperimentConfig) -> ExperimentReport:
    """l1-estimator sweep: embed the cloud at every (m, trial) cell with a
    fresh projector, record each pair's estimate against the true distance
    plus the unquantized baseline, and fit the worst-pair decay slope."""
    pts = generate_points(cfg)
    delta = resolved_delta(cfg, pts)
    idx_i, idx_j = np.triu_indices(cfg.s_points, 1)
    true_d = pdist(pts.points)

    fields = [("m", "i8"), ("trial", "i8"), ("i", "i8"), ("j", "i8"),
              ("true", "f8"), ("est", "f8"), ("baseline", "f8")]
    if cfg.record_hamming:
        fields.append(("hamming", "f8"))
    n_pairs = idx_i.size
    records = np.zeros(len(cfg.m_sweep) * cfg.trials * n_pairs, dtype=fields)

    aggregates = []
    row = 0
    for mi, m in enumerate(cfg.m_sweep):
        worst_abs, worst_rel = [], []
        for trial in range(cfg.trials):
            proj = Projector.create(m, cfg.dim, delta,
                                    seed=_cell_seed(cfg.seed, 1, mi, trial))
            y = pts.points @ proj.phi.T + proj.xi
            codes = _codes_from_projection(y, delta)
            est = _L1_SCALE / m * delta * _pair_sums(codes, idx_i, idx_j, 1)
            baseline = _L1_SCALE / m * _pair_sums(y, idx_i, idx_j, 1)

            block = records[row : row + n_pairs]
            block["m"] = m
            block["trial"] = trial
            block["i"] = idx_i
            block["j"] = idx_j
            block["true"] = true_d
            block["est"] = est
            block["baseline"] = baseline
            if cfg.record_hamming:
                signs = y - proj.xi >= 0.0
                for p, (i, j) in enumerate(zip(idx_i, idx_j)):
                    block["hamming"][p] = np.mean(signs[i] != signs[j])
            row += n_pairs

            resid = np.abs(est - true_d)
            worst_abs.append(float(resid.max()))
            sep = true_d > SEPARATION_GUARD
            if np.any(sep):
                worst_rel.append(float((resid[sep] / true_d[sep]).max()))
        aggregates.append({
            "m": m,
            "worst_abs_median": float(np.median(worst_abs)),
            "worst_rel_median": float(np.median(worst_rel)) if worst_rel else float("nan"),
            "n_records": cfg.trials * n_pairs,
        })

    resid_all = np.abs(records["est"] - records["true"])
    scaled = resid_all * np.sqrt(records["m"].astype(float))
    c_fit, c_prime_fit = _fit_band_constants(scaled, records["true"], delta)
    fitted = {
        "slope_worst_abs": _fit_loglog_slope(
            [a["m"] for a in aggregates], [a["worst_abs_median"] for a in aggregates]
        ),
        "slope_worst_rel": _fit_loglog_slope(
            [a["m"] for a in aggregates], [a["worst_rel_median"] for a in aggregates]
        ),
        "c": c_fit,
        "c_prime": c_prime_fit,
    }
    fitted.update(_error_mass_split(records))
    return ExperimentReport(
        kind="l1", config=cfg, delta_resolved=delta,
        columns=tuple(name for name, _ in fields),
        records=records, aggregates=aggregates, fitted=fitted,
    )


def run_l2_distortion(cfg: ExperimentConfig, table: GDeltaTable = None) -> ExperimentReport:
    """l2-estimator sweep against the calibrated distance map.

    Records the per-pair root mean square of the embedded difference (raw),
    the mapped truth g_delta(true), the inverted estimate, and the
    unquantized baseline.  The additive residual per m is the square root of
    the worst squared-domain deviation |raw^2 - g^2|, the form in which the
    additive distortion of the quasi-isometry enters the band.
    """
    pts = generate_points(cfg)
    delta = resolved_delta(cfg, pts)
    if table is None:
        table = build_gdelta(cfg.dim, delta, cfg.gdelta_points)
    elif not math.isclose(table.delta, delta, rel_tol=1e-9):
        raise ValueError(
            f"distance table bin width {table.delta} does not match the "
            f"resolved delta {delta}"
        )
    idx_i, idx_j = np.triu_indices(cfg.s_points, 1)
    true_d = pdist(pts.points)
    g_true = table.value(true_d)

    fields = [("m", "i8"), ("trial", "i8"), ("i", "i8"), ("j", "i8"),
              ("true", "f8"), ("raw", "f8"), ("g_true", "f8"),
              ("est", "f8"), ("baseline", "f8")]
    n_pairs = idx_i.size
    records = np.zeros(len(cfg.m_sweep) * cfg.trials * n_pairs, dtype=fields)

    aggregates = []
    row = 0
    for mi, m in enumerate(cfg.m_sweep):
        worst_abs, worst_sq = [], []
        for trial in range(cfg.trials):
            proj = Projector.create(m, cfg.dim, delta,
                                    seed=_cell_seed(cfg.seed, 1, mi, trial))
            y = pts.points @ proj.phi.T + proj.xi
            codes = _codes_from_projection(y, delta)
            raw = delta / math.sqrt(m) * np.sqrt(_pair_sums(codes, idx_i, idx_j, 2))
            est = table.inverse(raw)
            baseline = np.sqrt(_pair_sums(y, idx_i, idx_j, 2) / m)

            block = records[row : row + n_pairs]
            block["m"] = m
            block["trial"] = trial
            block["i"] = idx_i
            block["j"] = idx_j
            block["true"] = true_d
            block["raw"] = raw
            block["g_true"] = g_true
            block["est"] = est
            block["baseline"] = baseline
            row += n_pairs

            worst_abs.append(float(np.abs(est - true_d).max()))
            worst_sq.append(float(np.abs(raw**2 - g_true**2).max()))
        aggregates.append({
            "m": m,
            "worst_abs_median": float(np.median(worst_abs)),
            "additive_resid_median": math.sqrt(float(np.median(worst_sq))),
            "n_records": cfg.trials * n_pairs,
        })

    fitted = {
        "slope_worst_abs": _fit_loglog_slope(
            [a["m"] for a in aggregates], [a["worst_abs_median"] for a in aggregates]
        ),
        "slope_additive": _fit_loglog_slope(
            [a["m"] for a in aggregates],
            [a["additive_resid_median"] for a in aggregates],
        ),
    }
    return ExperimentReport(
        kind="l2", config=cfg, delta_resolved=delta,
        columns=tuple(name for name, _ in fields),
        records=records, aggregates=aggregates, fitted=fitted,
    )


def check_equivalence(a: float, dim: int, samples: int, seed: int) -> float:
    """Total-variation distance between the per-coordinate code-difference
    histogram (through the full embedding path, fixed-norm rows) and the
    exact crossing pmf at normalized length ``a``."""
    if samples < 1_000_000:
        raise ValueError(f"need at least 10^6 samples, got {samples}")
    params = BuffonParams(a, dim)
    pmf = build_pmf(params)
    delta = 1.0
    u = np.zeros(dim)
    v = np.zeros(dim)
    v[0] = a * delta / math.sqrt(dim)  # rows have norm sqrt(dim) exactly

    hist = np.zeros(pmf.n + 2, dtype=np.int64)
    chunk = max(1, 4_000_000 // dim)
    left = int(samples)
    block = 0
    while left > 0:
        b = min(chunk, left)
        proj = Projector.create(b, dim, delta,
                                seed=_cell_seed(seed, 2, block),
                                row_model="uniform_sphere")
        su = embed(proj, u)
        sv = embed(proj, v)
        diff = np.abs(su.codes - sv.codes)
        counts = np.bincount(diff, minlength=hist.size)
        if counts.size > hist.size:
            raise RuntimeError(
                f"code difference {counts.size - 1} beyond the support bound "
                f"{pmf.n + 1}"
            )
        hist += counts
        left -= b
        block += 1
    return tv_distance(hist / float(samples), pmf.p)


def _l1_pair_estimates(u, v, m, delta, draws, seed, stream):
    """l1 distance estimates of one pair over ``draws`` fresh projectors."""
    dim = u.size
    rng = make_rng(seed, stream)
    w = u - v
    out = np.empty(draws)
    chunk = max(1, 4_000_000 // max(m, 1))
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        rows = polar_gaussian(rng, (b * m, dim))
        xi = rng.random(b * m) * delta
        pu = rows @ u + xi
        pv = rows @ v + xi
        diff = np.abs(np.floor(pu / delta) - np.floor(pv / delta))
        out[done : done + b] = diff.reshape(b, m).sum(axis=1) * (_L1_SCALE / m * delta)
        done += b
    return out


def tail_curve(cfg: ExperimentConfig, pair, m: int = None, draws: int = 2000,
               constants=None):
    """Empirical band-violation rates against the analytic tail bound.

    For each epsilon in the config grid, reports the fraction of independent
    projector draws where |est - true| exceeds eps*(c*true + c'*delta),
    alongside min(1, 2 exp(-eps^2 m)) and its binomial sigma at ``draws``.
    When no constants are supplied, the band is calibrated on an independent
    batch: the linear part sigma*sqrt(2m) matches the Gaussian exponent of
    the bound at every epsilon, and the quadratic moderate-deviation term
    (scale max(delta, true), the Bernstein beta) is absorbed at the largest
    epsilon of the grid.  Returns (rows, (c, c')).
    """
    if draws < 1000:
        raise ValueError(f"need at least 1000 projector draws, got {draws}")
    if cfg.delta_mode != "absolute":
        raise ValueError("tail curves need an absolute bin width")
    u = np.asarray(pair[0], dtype=float)
    v = np.asarray(pair[1], dtype=float)
    if m is None:
        m = cfg.m_sweep[-1]
    delta = cfg.delta
    true = float(np.linalg.norm(u - v))

    if constants is None:
        cal = _l1_pair_estimates(u, v, m, delta, draws, cfg.seed, 3)
        linear = float(np.std(cal - true, ddof=1)) * math.sqrt(2.0 * m)
        quad = math.sqrt(2.0 * math.pi) * max(delta, true)
        eps_top = max(cfg.epsilon_grid) if cfg.epsilon_grid else 0.5
        width0 = linear + quad * eps_top
        c = c_prime = width0 / (true + delta)
    else:
        c, c_prime = constants

    est = _l1_pair_estimates(u, v, m, delta, draws, cfg.seed, 4)
    resid = np.abs(est - true)
    rows = []
    for eps in cfg.epsilon_grid:
        width = eps * (c * true + c_prime * delta)
        rate = float(np.mean(resid > width))
        bound = min(1.0, 2.0 * math.exp(-eps * eps * m))
        sigma = math.sqrt(bound * (1.0 - bound) / draws)
        rows.append({"epsilon": eps, "failure_rate": rate,
                     "bound": bound, "sigma": sigma})
    return rows, (c, c_prime)


def binary_tail_curve(u, v, m: int, draws: int, epsilon_grid, seed: int):
    """Sign-mapping tail: P(|d_H - d_S/pi| > eps) against 2 exp(-2 eps^2 m)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d_s = angular(u, v) / math.pi
    dim = u.size
    rng = make_rng(seed, 5)
    d_h = np.empty(draws)
    chunk = max(1, 4_000_000 // max(m, 1))
    done = 0
    while done < draws:
        b = min(chunk, draws - done)
        rows = polar_gaussian(rng, (b * m, dim))
        s_u = rows @ u >= 0.0
        s_v = rows @ v >= 0.0
        d_h[done : done + b] = (s_u != s_v).reshape(b, m).mean(axis=1)
        done += b
    out = []
    for eps in epsilon_grid:
        rate = float(np.mean(np.abs(d_h - d_s) > eps))
        bound = min(1.0, 2.0 * math.exp(-2.0 * eps * eps * m))
        sigma = math.sqrt(bound * (1.0 - bound) / draws)
        out.append({"epsilon": float(eps), "failure_rate": rate,
                    "bound": bound, "sigma": sigma})
    return out


# ---------------------------------------------------------------------------
# persistence

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def emit_report(report: ExperimentReport, out_dir) -> dict:
    """Write records.csv, aggregates.csv, and manifest.json under ``out_dir``.

    The manifest carries the full config and seed; rerunning it reproduces
    the records byte for byte.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        records_path = os.path.join(out_dir, "records.csv")
        aggregates_path = os.path.join(out_dir, "aggregates.csv")
        manifest_path = os.path.join(out_dir, "manifest.json")

        with open(records_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.columns)
            for rec in report.records:
                writer.writerow([_fmt(rec[name]) for name in report.columns])

        agg_cols = list(report.aggregates[0].keys())
        with open(aggregates_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(agg_cols)
            for agg in report.aggregates:
                writer.writerow([_fmt(agg[name]) for name in agg_cols])

        manifest = {
            "schema": 1,
            "kind": report.kind,
            "config": asdict(report.config),
            "delta_resolved": report.delta_resolved,
            "fitted": report.fitted,
        }
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report under {out_dir}: {exc}") from exc
    return {"records": records_path, "aggregates": aggregates_path,
            "manifest": manifest_path}


def config_from_mapping(data: dict) -> ExperimentConfig:
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    data = dict(data)
    for key in ("m_sweep", "epsilon_grid"):
        if key in data:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data)


def run_from_manifest(path) -> ExperimentReport:
    """Re-execute the run described by a manifest file."""
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc}") from exc
    kind = manifest.get("kind")
    if kind not in ("l1", "l2"):
        raise ValueError(f"manifest {path} has unknown kind {kind!r}")
    cfg = config_from_mapping(manifest["config"])
    if kind == "l1":
        return run_distortion(cfg)
    return run_l2_distortion(cfg)
