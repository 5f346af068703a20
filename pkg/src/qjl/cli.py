"""Command-line interface.

Subcommands mirror the library surface: crossing-law queries (pmf, moments,
Monte Carlo), point embedding into binary sketch files, pairwise distance
estimation from sketches, distance-map tables, and the experiment harness
driven by TOML configs.
"""

from __future__ import annotations

import math
import sys

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import buffon as bf
from . import gdelta as gd
from . import harness as hn
from . import sketch_io
from .embedding import Projector, embed_many


@click.group()
def main():
    """Quantized random projection sketching toolkit."""


# ---------------------------------------------------------------------------
# crossing-law subcommands

@main.group()
def buffon():
    """Exact needle-crossing distribution."""


@buffon.command("pmf")
@click.option("--a", "a", type=float, required=True, help="normalized needle length")
@click.option("--n", "dim", type=int, required=True, help="ambient dimension")
def buffon_pmf(a, dim):
    """Print k,p_k rows for the crossing distribution."""
    pmf = bf.build_pmf(bf.BuffonParams(a, dim))
    click.echo("k,p")
    for k, p in zip(pmf.support, pmf.p):
        click.echo(f"{k},{float(p)!r}")


@buffon.command("moment")
@click.option("--a", "a", type=float, required=True)
@click.option("--n", "dim", type=int, required=True)
@click.option("--q", "q", type=int, required=True, help="moment order >= 1")
def buffon_moment(a, dim, q):
    """Print the q-th crossing moment."""
    value = bf.moment(bf.build_pmf(bf.BuffonParams(a, dim)), q)
    click.echo(repr(value))


@buffon.command("mc")
@click.option("--a", "a", type=float, required=True)
@click.option("--n", "dim", type=int, required=True)
@click.option("--count", "count", type=int, required=True)
@click.option("--seed", "seed", type=int, default=0, show_default=True)
def buffon_mc(a, dim, count, seed):
    """Monte Carlo crossing histogram plus its TV distance to the exact pmf."""
    params = bf.BuffonParams(a, dim)
    hist = bf.mc_sample(params, count, seed)
    pmf = bf.build_pmf(params)
    tv = bf.tv_distance(hist / float(count), pmf.p)
    click.echo("k,count,frequency,exact")
    for k, (c, p) in enumerate(zip(hist, pmf.p)):
        click.echo(f"{k},{c},{float(c) / count!r},{float(p)!r}")
    click.echo(f"# tv_distance,{tv!r}")


# ---------------------------------------------------------------------------
# embedding subcommands

@main.command("embed")
@click.option("--points", "points_path", type=click.Path(exists=True), required=True,
              help="headerless CSV, one point per row")
@click.option("--m", "m", type=int, required=True, help="embedded dimension")
@click.option("--delta", "delta", type=float, required=True, help="bin width")
@click.option("--seed", "seed", type=int, default=0, show_default=True)
@click.option("--row-model", "row_model", type=click.Choice(["gaussian", "uniform_sphere"]),
              default="gaussian", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def embed_cmd(points_path, m, delta, seed, row_model, out_path):
    """Sketch a point file into a binary sketch file."""
    pts = sketch_io.load_points_csv(points_path)
    proj = Projector.create(m=m, dim=pts.shape[1], delta=delta, seed=seed,
                            row_model=row_model)
    codes = embed_many(proj, pts)
    sketch_io.write_sketches(out_path, proj, codes)
    click.echo(f"wrote {codes.shape[0]} sketches (m={m}) to {out_path}")


@main.command("estimate")
@click.option("--sketches", "sketches_path", type=click.Path(exists=True), required=True)
@click.option("--metric", type=click.Choice(["l1", "l2", "hamming"]), required=True)
@click.option("--gdelta-points", "gdelta_points", type=int, default=96, show_default=True,
              help="grid size of the distance map used by the l2 metric")
@click.option("--out", "out_path", type=click.Path(), required=True)
def estimate_cmd(sketches_path, metric, gdelta_points, out_path):
    """Pairwise distance estimates between all sketches in a file.

    The hamming metric reports the fraction of differing quantization codes.
    """
    header, codes = sketch_io.read_sketches(sketches_path)
    count, m = codes.shape
    if count < 2:
        raise click.ClickException("need at least two sketches for pairwise estimates")
    table = None
    if metric == "l2":
        table = gd.build_gdelta(max(header.dim, 2), header.delta, gdelta_points)
    idx_i, idx_j = np.triu_indices(count, 1)
    lines = ["i,j,estimate"]
    for i, j in zip(idx_i, idx_j):
        diff = (codes[i] - codes[j]).astype(float)
        if metric == "l1":
            est = math.sqrt(math.pi) / math.sqrt(2.0) / m * header.delta * float(
                np.abs(diff).sum()
            )
        elif metric == "l2":
            raw = header.delta / math.sqrt(m) * float(np.linalg.norm(diff))
            est = float(table.inverse(raw))
        else:
            est = float(np.mean(diff != 0.0))
        lines.append(f"{i},{j},{est!r}")
    try:
        with open(out_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise click.ClickException(f"cannot write {out_path}: {exc}")
    click.echo(f"wrote {idx_i.size} pairwise {metric} estimates to {out_path}")


# ---------------------------------------------------------------------------
# distance-map subcommands

@main.group()
def gdelta():
    """Calibrated nonlinear distance map for the l2 estimator."""


@gdelta.command("table")
@click.option("--n", "dim", type=int, required=True)
@click.option("--delta", "delta", type=float, required=True)
@click.option("--points", "points", type=int, default=96, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def gdelta_table(dim, delta, points, out_path):
    """Tabulate (lambda, g, lower bound, upper bound) rows."""
    table = gd.build_gdelta(dim, delta, points)
    lower, upper = table.bounds(table.grid)
    lines = ["lambda,g,lower_bound,upper_bound"]
    for lam, g, lo, hi in zip(table.grid, table.values, lower, upper):
        lines.append(f"{float(lam)!r},{float(g)!r},{float(lo)!r},{float(hi)!r}")
    try:
        with open(out_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise click.ClickException(f"cannot write {out_path}: {exc}")
    click.echo(f"wrote {table.grid.size} table rows to {out_path}")


# ---------------------------------------------------------------------------
# experiment subcommands

def _load_config(path) -> hn.ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")
    section = data.get("experiment", data)
    try:
        return hn.config_from_mapping(section)
    except (ValueError, TypeError) as exc:
        raise click.ClickException(f"bad config {path}: {exc}")


@main.group()
def experiment():
    """Distortion experiments; outputs CSV plus a reproduction manifest."""


@experiment.command("distortion")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default="distortion_run",
              show_default=True)
def experiment_distortion(config_path, out_dir):
    """l1-estimator sweep over the embedded dimension."""
    report = hn.run_distortion(_load_config(config_path))
    paths = hn.emit_report(report, out_dir)
    click.echo(f"slope={report.fitted['slope_worst_abs']!r} "
               f"c={report.fitted['c']!r} c_prime={report.fitted['c_prime']!r}")
    click.echo(f"wrote {paths['records']}, {paths['aggregates']}, {paths['manifest']}")


@experiment.command("l2")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default="l2_run", show_default=True)
def experiment_l2(config_path, out_dir):
    """l2-estimator sweep against the calibrated distance map."""
    report = hn.run_l2_distortion(_load_config(config_path))
    paths = hn.emit_report(report, out_dir)
    click.echo(f"slope_additive={report.fitted['slope_additive']!r}")
    click.echo(f"wrote {paths['records']}, {paths['aggregates']}, {paths['manifest']}")


@experiment.command("equivalence")
@click.option("--a", "a", type=float, required=True)
@click.option("--n", "dim", type=int, required=True)
@click.option("--samples", "samples", type=int, required=True)
@click.option("--seed", "seed", type=int, default=0, show_default=True)
def experiment_equivalence(a, dim, samples, seed):
    """TV distance between the embedding-path histogram and the exact pmf."""
    tv = hn.check_equivalence(a, dim, samples, seed)
    click.echo(f"tv_distance,{tv!r}")


@experiment.command("tails")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--distance", "distance", type=float, default=1.0, show_default=True,
              help="pair separation along the first axis")
@click.option("--draws", "draws", type=int, default=2000, show_default=True)
def experiment_tails(config_path, distance, draws):
    """Band-violation rates against the analytic tail bound."""
    cfg = _load_config(config_path)
    u = np.zeros(cfg.dim)
    v = np.zeros(cfg.dim)
    v[0] = distance
    rows, (c, c_prime) = hn.tail_curve(cfg, (u, v), draws=draws)
    click.echo(f"# c,{c!r},c_prime,{c_prime!r}")
    click.echo("epsilon,failure_rate,bound,sigma")
    for row in rows:
        click.echo(f"{row['epsilon']!r},{row['failure_rate']!r},"
                   f"{row['bound']!r},{row['sigma']!r}")


if __name__ == "__main__":
    main()
