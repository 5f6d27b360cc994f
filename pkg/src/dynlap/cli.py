"""Command-line entry points.

Verbs: ``case-study <name>``, ``run <config.json>``, ``difflimit
<config.json>``, ``render <field.csv> [contours.csv]``.  ``--threads`` falls
back to the ``DYNLAP_THREADS`` environment variable.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import accel
from .coherent import ContourSet, Polyline
from .errors import DynlapError
from .grid import Domain, Grid, ScalarField
from .pipeline import CASE_CONFIGS, RunConfig, run_case_study, run_pipeline
from .render import render_heatmap


def _apply_threads(threads):
    n = threads or int(os.environ.get("DYNLAP_THREADS", "0") or 0)
    if n:
        accel.set_num_threads(n)
    return n or None


@click.group()
def main():
    """Coherent-set extraction for volume-preserving planar dynamics."""


common_options = [
    click.option("--out", "out_dir", type=click.Path(), default=None,
                 help="Directory for run artifacts."),
    click.option("--threads", type=int, default=None,
                 help="Worker threads (default: DYNLAP_THREADS or all cores)."),
]


def _with_options(opts):
    def deco(fn):
        for opt in reversed(opts):
            fn = opt(fn)
        return fn

    return deco


@main.command("case-study")
@click.argument("name", type=click.Choice(sorted(CASE_CONFIGS)))
@_with_options(common_options)
@click.option("--grid", "grid_", nargs=2, type=int, default=None,
              help="Override NX NY.")
@click.option("--q-per-axis", type=int, default=None, help="Test points per box axis.")
@click.option("--levels", type=int, default=None, help="Number of scanned levels.")
@click.option("--k", type=int, default=None, help="Number of eigenpairs.")
def case_study_cmd(name, out_dir, threads, grid_, q_per_axis, levels, k):
    """Run a bundled case study and compare against its reference values."""
    overrides = {}
    if grid_:
        overrides["grid"] = {"nx": grid_[0], "ny": grid_[1]}
    if q_per_axis:
        overrides["q_per_axis"] = q_per_axis
    if levels:
        overrides["n_levels"] = levels
    if k:
        overrides["k"] = k
    if threads:
        overrides["threads"] = threads
    _apply_threads(threads)
    try:
        res = run_case_study(name, out_dir=out_dir or f"out_{name}", **overrides)
    except DynlapError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"artifacts written to {res.out_dir}")


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True))
@_with_options(common_options)
def run_cmd(config_path, out_dir, threads):
    """Run the pipeline described by a JSON config file."""
    cfg = RunConfig.from_json_file(config_path)
    if out_dir:
        cfg.out_dir = out_dir
    if threads:
        cfg.threads = threads
    _apply_threads(threads)
    try:
        res = run_pipeline(cfg)
    except DynlapError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(res.summary["result"], indent=2, sort_keys=True))
    if res.out_dir:
        click.echo(f"artifacts written to {res.out_dir}")


@main.command("difflimit")
@click.argument("config_path", type=click.Path(exists=True))
@_with_options(common_options)
def difflimit_cmd(config_path, out_dir, threads):
    """Run only the smoothing-limit verification of a config."""
    cfg = RunConfig.from_json_file(config_path)
    if cfg.difflimit is None:
        raise click.ClickException("config has no 'difflimit' section")
    if out_dir:
        cfg.out_dir = out_dir
    _apply_threads(threads)
    from .pipeline import build_domain, build_flow, run_difflimit
    from .transfer import build_ulam

    try:
        domain = build_domain(cfg.domain)
        grid = Grid(domain, int(cfg.grid["nx"]), int(cfg.grid["ny"]))
        flow = build_flow(cfg, domain)
        tm = build_ulam(grid, grid, flow, cfg.q_per_axis)
        report = run_difflimit(cfg, grid, tm, Path(cfg.out_dir) if cfg.out_dir else None)
    except DynlapError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(report.to_json())
    if not report.passes:
        click.echo("limit check condition NOT met", err=True)


@main.command("render")
@click.argument("field_csv", type=click.Path(exists=True))
@click.argument("contours_csv", type=click.Path(exists=True), required=False)
@_with_options(common_options)
def render_cmd(field_csv, contours_csv, out_dir, threads):
    """Render a field CSV (i,j,x,y,value) to a PNG heatmap."""
    field = _read_field_csv(field_csv)
    contours = _read_contours_csv(contours_csv, field.grid) if contours_csv else None
    out = Path(out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    target = out / (Path(field_csv).stem + ".png")
    try:
        render_heatmap(field, contours=contours, path=target)
    except DynlapError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {target}")


def _read_field_csv(path) -> ScalarField:
    data = np.genfromtxt(path, delimiter=",", names=True)
    i = data["i"].astype(int)
    j = data["j"].astype(int)
    nx = int(i.max()) + 1
    ny = int(j.max()) + 1
    xs = np.unique(data["x"])
    ys = np.unique(data["y"])
    dx = xs[1] - xs[0] if xs.size > 1 else 1.0
    dy = ys[1] - ys[0] if ys.size > 1 else 1.0
    dom = Domain(
        float(xs.min() - dx / 2), float(xs.max() + dx / 2),
        float(ys.min() - dy / 2), float(ys.max() + dy / 2),
    )
    grid = Grid(dom, nx, ny)
    vals = np.zeros(grid.n)
    vals[j * nx + i] = data["value"]
    return ScalarField(grid, vals)


def _read_contours_csv(path, grid) -> ContourSet:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    curves = []
    for cid in np.unique(data["curve_id"]):
        rows = data[data["curve_id"] == cid]
        order = np.argsort(rows["vertex_id"])
        verts = np.column_stack([rows["x"][order], rows["y"][order]])
        wraps = np.column_stack(
            [rows["wrap_x"][order], rows["wrap_y"][order]]
        ).astype(np.int64)
        curves.append(Polyline(verts, wraps))
    return ContourSet(level=0.0, grid=grid, curves=curves)


if __name__ == "__main__":
    sys.exit(main())
