"""Command-line entry points: run scenarios, verify criteria, summarize.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .acceptance import SUITES, run_suite
from .lattice import DtUnderflowError, ResourceError
from .scenario import ScenarioError, load_scenario, read_csv, run_scenario


@click.group()
@click.version_option(__version__)
def main():
    """Numerical laboratory for the two-component rouleau coagulation model."""


@main.command()
@click.argument("scenario")
@click.option("--out", default=None, help="Output directory (default: out/<name>).")
@click.option("--threads", default=1, show_default=True, help="FFT worker threads.")
@click.option("--deterministic/--no-deterministic", default=True, show_default=True,
              help="Keep a fixed reduction order (output depends only on the "
                   "scenario and --threads).")
@click.option("--tau-max", default=None, type=float, help="Override checkpoint tau_max.")
@click.option("--truncation-r", "truncation_R", default=None, type=float,
              help="Override the truncation radius R.")
def run(scenario, out, threads, deterministic, tau_max, truncation_R):
    """Run a scenario TOML (path or bundled name) and write artifacts."""
    try:
        sc = load_scenario(scenario)
        if tau_max is not None:
            sc.tau_max = tau_max
        if truncation_R is not None:
            sc.truncation_R = truncation_R
    except ScenarioError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    outdir = Path(out) if out else Path("out") / sc.name
    workers = threads if deterministic else -1
    try:
        result = run_scenario(sc, outdir, workers=workers,
                              progress=lambda msg: click.echo(msg, err=True))
    except (DtUnderflowError, ResourceError, RuntimeError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    click.echo(f"wrote {len(result.files)} artifacts to {outdir} "
               f"(horizon: {result.horizon_reason})")


@main.command()
@click.argument("suite", type=click.Choice(sorted(SUITES)))
def verify(suite):
    """Run an acceptance suite and print a criterion table."""
    results = run_suite(suite, progress=lambda m: click.echo(m, err=True))
    width = 58
    click.echo(f"{'criterion / check':<{width}} {'value':>12} {'threshold':>16} pass")
    click.echo("-" * (width + 36))
    all_pass = True
    for res in results:
        head = f"[{res.cid}] {res.title}"
        click.echo(f"{head:<{width}} {'':>12} {'':>16} {'PASS' if res.passed else 'FAIL'}")
        for row in res.rows:
            mark = "ok" if row.passed else "FAIL"
            click.echo(f"  {row.label:<{width - 2}} {row.value:>12.4g} "
                       f"{row.threshold:>16} {mark}")
        all_pass = all_pass and res.passed
    click.echo("-" * (width + 36))
    click.echo(f"suite {suite}: {'PASS' if all_pass else 'FAIL'}")
    if not all_pass:
        sys.exit(1)


@main.command()
@click.argument("outdir", type=click.Path(exists=True, file_okay=False))
def report(outdir):
    """Print a summary of the artifacts in an output directory."""
    outdir = Path(outdir)
    rp = outdir / "gelation_report.json"
    if rp.exists():
        rep = json.loads(rp.read_text(encoding="utf-8"))
        click.echo(f"gelates: {rep['gelates']} (branch {rep['branch']})")
        if rep["gelates"]:
            click.echo(f"T* = {rep['t_star']:.8g}")
            click.echo(f"theta = {np.round(rep['theta'], 6).tolist()}, "
                       f"c0 = {rep['c0']:.6g}, K0 = {rep['k0']:.6g}")
    for name in ("moments", "selfsim", "laplace", "ensemble"):
        path = outdir / f"{name}.csv"
        if path.exists():
            meta, cols, rows = read_csv(path)
            click.echo(f"{name}.csv: {len(rows)} rows [{', '.join(cols)}]")
    ls = outdir / "laplace_summary.json"
    if ls.exists():
        summary = json.loads(ls.read_text(encoding="utf-8"))
        click.echo(f"laplace: K0 = {summary['k0']:.6g}, final sup gap "
                   f"D = {summary['d_final']:.4g} on [0, {summary['rho_max']:g}]")


if __name__ == "__main__":
    main()
