"""Scenario configuration and the batch pipeline producing file artifacts.

A scenario is a single TOML file: channel weights, initial measure,
truncation radius, checkpoint policy and optional stochastic block.  The
pipeline runs moments -> lattice -> self-similar diagnostics -> Laplace
diagnostics -> optional ensemble and writes deterministic CSV/JSON files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:              # python < 3.11
    import tomli as tomllib

from . import __version__, lattice, laplace, moments, selfsim, stochastic, tensors
from .measure import DiscreteMeasure


class ScenarioError(ValueError):
    """Configuration problem; the message carries the offending field path."""


_FAMILIES = ("monodisperse", "two_point")


@dataclass
class Scenario:
    name: str
    alpha: tuple
    initial_points: list              # [(c, a, weight), ...]
    truncation_R: float = 256.0
    rtol: float = 1e-7
    atol: float = None
    t_end: float = None               # for non-gelling runs
    tau_max: float = 2.6
    n_checkpoints: int = 26
    rho_max: float = 5.0
    n_rho: int = 64
    leak_m2_stop: float = 0.005
    stochastic: dict = None
    raw: dict = field(default_factory=dict)

    def initial_measure(self):
        return DiscreteMeasure.from_points(self.initial_points)

    def content_hash(self):
        canon = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _need(cfg, key, path):
    if key not in cfg:
        raise ScenarioError(f"{path}.{key}: missing required field")
    return cfg[key]


def scenario_from_dict(cfg, name_hint="scenario"):
    name = cfg.get("name", name_hint)
    alpha = _need(cfg, "alpha", name)
    if len(alpha) != 3 or any(a < 0 for a in alpha) or not any(a > 0 for a in alpha):
        raise ScenarioError(f"{name}.alpha: need 3 nonnegative weights, not all zero")
    init = _need(cfg, "initial", name)
    points = []
    if "points" in init:
        for k, row in enumerate(init["points"]):
            if len(row) != 3:
                raise ScenarioError(f"{name}.initial.points[{k}]: need [c, a, weight]")
            c, a, w = row
            if int(c) != c or int(a) != a or c < 2 or a < 2:
                raise ScenarioError(
                    f"{name}.initial.points[{k}]: composition must be integer with c >= 2, a >= 2")
            if w <= 0:
                raise ScenarioError(f"{name}.initial.points[{k}]: weight must be positive")
            points.append((int(c), int(a), float(w)))
    elif "family" in init:
        fam = init["family"]
        if fam == "monodisperse":
            points = [(int(_need(init, "c", f"{name}.initial")),
                       int(_need(init, "a", f"{name}.initial")),
                       float(init.get("weight", 1.0)))]
        elif fam == "two_point":
            points = [(int(init["c1"]), int(init["a1"]), float(init["w1"])),
                      (int(init["c2"]), int(init["a2"]), float(init["w2"]))]
        else:
            raise ScenarioError(f"{name}.initial.family: unknown family {fam!r}, "
                                f"expected one of {_FAMILIES}")
        for k, (c, a, w) in enumerate(points):
            if c < 2 or a < 2 or w <= 0:
                raise ScenarioError(f"{name}.initial: point {k} invalid (c,a >= 2, w > 0)")
    else:
        raise ScenarioError(f"{name}.initial: need either points or family")

    cps = cfg.get("checkpoints", {})
    lap = cfg.get("laplace", {})
    sto = cfg.get("stochastic")
    if sto is not None:
        for key in ("volume", "seeds", "checkpoint_fractions"):
            _need(sto, key, f"{name}.stochastic")
    R = float(cfg.get("truncation_R", 256))
    if R <= 0:
        raise ScenarioError(f"{name}.truncation_R: must be positive")
    return Scenario(
        name=name,
        alpha=tuple(float(a) for a in alpha),
        initial_points=points,
        truncation_R=R,
        rtol=float(cfg.get("rtol", 1e-7)),
        atol=cfg.get("atol"),
        t_end=cfg.get("t_end"),
        tau_max=float(cps.get("tau_max", 2.6)),
        n_checkpoints=int(cps.get("count", 26)),
        rho_max=float(lap.get("rho_max", 5.0)),
        n_rho=int(lap.get("n_rho", 64)),
        leak_m2_stop=float(cfg.get("leak_m2_stop", 0.005)),
        stochastic=sto,
        raw=cfg,
    )


def load_scenario(path_or_name):
    """Load a scenario TOML from a path or from the bundled set."""
    p = Path(path_or_name)
    if not p.exists():
        bundled = Path(__file__).parent / "scenarios" / f"{path_or_name}.toml"
        if bundled.exists():
            p = bundled
        else:
            raise ScenarioError(f"scenario file or bundled name not found: {path_or_name}")
    with open(p, "rb") as fh:
        cfg = tomllib.load(fh)
    return scenario_from_dict(cfg, name_hint=p.stem)


# ---------------------------------------------------------------------------
# artifact writing
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, header_meta, columns, rows):
    """RFC-4180 CSV with '#'-prefixed metadata lines before the header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_meta:
            fh.write(f"# {line}\r\n")
        fh.write(",".join(columns) + "\r\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\r\n")


def read_csv(path):
    """Reader for the artifact CSVs: returns (meta lines, columns, rows)."""
    meta, cols, rows = [], None, []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                meta.append(line[1:].strip())
                continue
            if cols is None:
                cols = line.split(",")
                continue
            rows.append(line.split(","))
    return meta, cols, rows


@dataclass
class PipelineResult:
    scenario: Scenario
    outdir: Path
    report: moments.GelationReport
    files: dict
    horizon_reason: str = ""


def run_scenario(sc: Scenario, outdir, workers=1, progress=print):
    """Execute the full pipeline and write artifacts into outdir."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = [f"scenario={sc.name} hash={sc.content_hash()} version={__version__}"]
    files = {}
    f0 = sc.initial_measure()
    m0 = moments.extract_moments(f0, order_max=4)
    alpha = np.asarray(sc.alpha)

    progress(f"[{sc.name}] gelation analysis")
    report, mtraj = moments.analyze_gelation(m0, alpha)
    if not report.gelates:
        t_end = sc.t_end if sc.t_end is not None else 10.0
        mtraj = moments.integrate_moment_system(m0, alpha, t_end=t_end,
                                                n_checkpoints=sc.n_checkpoints)
    stamp = {"scenario": sc.name, "scenario_hash": sc.content_hash(),
             "version": __version__}
    rp = outdir / "gelation_report.json"
    rp.write_text(json.dumps({**report.to_dict(), **stamp},
                             sort_keys=True, indent=2) + "\n", encoding="utf-8")
    files["gelation_report"] = rp

    # checkpoint times
    if report.gelates:
        t_star = report.t_star
        cps = lattice.tau_checkpoints(t_star, sc.tau_max, sc.n_checkpoints)
        dt_min = 1e-12 * t_star
    else:
        t_star = math.inf
        t_end = sc.t_end if sc.t_end is not None else 10.0
        cps = np.linspace(0.0, t_end, sc.n_checkpoints + 1)[1:]
        dt_min = None

    progress(f"[{sc.name}] lattice run (R={sc.truncation_R:g})")
    run = lattice.solve(f0, alpha, sc.truncation_R, cps, rtol=sc.rtol,
                        atol=sc.atol, leak_m2_stop=sc.leak_m2_stop,
                        dt_min=dt_min, workers=workers)
    lattice.write_trajectory(run, outdir / "trajectory.jsonl", meta=stamp)
    files["trajectory"] = outdir / "trajectory.jsonl"

    # moments.csv: ODE and lattice series, long format
    rows = []
    for cp in run.checkpoints:
        ms = mtraj.moments_at(min(cp.t, mtraj.times[-1]))
        for src, mom in (("lattice", cp.moments), ("ode", ms)):
            rows += [[cp.t, f"{src}.m0", mom.m0],
                     [cp.t, f"{src}.m1_x", mom.m1[0]],
                     [cp.t, f"{src}.m1_y", mom.m1[1]],
                     [cp.t, f"{src}.m2_xx", mom.m2[0, 0]],
                     [cp.t, f"{src}.m2_xy", mom.m2[0, 1]],
                     [cp.t, f"{src}.m2_yy", mom.m2[1, 1]]]
        rows.append([cp.t, "lattice.leak_m2_fraction", cp.leaked_m2_fraction])
    write_csv(outdir / "moments.csv", meta, ["t", "name", "value"], rows)
    files["moments"] = outdir / "moments.csv"

    if report.gelates and any(
            cp.leaked_m2_fraction <= sc.leak_m2_stop and cp.t < t_star
            for cp in run.checkpoints[1:]):
        theta, c0, k0 = report.theta, report.c0, report.k0
        good = [cp for cp in run.checkpoints[1:]
                if cp.leaked_m2_fraction <= sc.leak_m2_stop and cp.t < t_star]
        snaps = [selfsim.rescale(cp.measure, cp.t, t_star) for cp in good]
        progress(f"[{sc.name}] self-similar diagnostics ({len(snaps)} snapshots)")
        t3p = tensors.outer_power(theta, 3)
        rows = []
        for s in snaps:
            m2F = s.moment_matrix()
            rows.append([
                s.tau, s.Z,
                float(np.linalg.norm(m2F - np.outer(theta, theta))),
                tensors.frobenius(s.moment_packed(3) - c0 * t3p),
                tensors.frobenius(s.moment_packed(4)),
                selfsim.localization_integral(s, theta, 2),
                selfsim.localization_integral(s, theta, 3),
            ])
        write_csv(outdir / "selfsim.csv", meta,
                  ["tau", "Z", "m2_dev", "m3_dev", "m4_norm", "loc_p2", "loc_p3"],
                  rows)
        files["selfsim"] = outdir / "selfsim.csv"

        progress(f"[{sc.name}] Laplace diagnostics")
        rho = laplace.rho_grid(sc.rho_max, sc.n_rho)
        target = laplace.selfsim_target(rho, k0)
        rows = []
        d_final = None
        for s in snaps:
            g, _ = selfsim.polar_project(s)
            _, dghat = laplace.radial_laplace(g, rho)
            gap = np.abs(dghat - target)
            d_final = float(gap.max())
            for rr, dd, tt, gg in zip(rho, dghat, target, gap):
                rows.append([s.tau, rr, dd, tt, gg])
        write_csv(outdir / "laplace.csv", meta,
                  ["tau", "rho", "dg_drho", "target", "gap"], rows)
        files["laplace"] = outdir / "laplace.csv"
        summary = {"k0": k0, "d_final": d_final, "rho_max": sc.rho_max, **stamp}
        (outdir / "laplace_summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        files["laplace_summary"] = outdir / "laplace_summary.json"

        # support scatter of the last snapshot (for the report figures);
        # capped to the heaviest points so wide 2-D clouds stay plottable
        s = snaps[-1]
        cap = 20_000
        order = np.lexsort((s.eta[:, 1], s.eta[:, 0], -s.weights))[:cap]
        rows = [[s.tau, s.eta[k, 0], s.eta[k, 1], s.weights[k]] for k in order]
        write_csv(outdir / "snapshots.csv", meta,
                  ["tau", "eta_x", "eta_y", "weight"], rows)
        files["snapshots"] = outdir / "snapshots.csv"

    if sc.stochastic:
        progress(f"[{sc.name}] stochastic ensemble")
        sto = sc.stochastic
        fr = sto["checkpoint_fractions"]
        if report.gelates:
            sto_cps = [f * report.t_star for f in fr]
        else:
            sto_cps = list(fr)
        res = stochastic.run_ensemble(f0, float(sto["volume"]), alpha,
                                      sto_cps, sto["seeds"])
        write_csv(outdir / "ensemble.csv", meta,
                  ["run_id", "t", "m0", "m1_x", "m1_y",
                   "m2_xx", "m2_xy", "m2_yy", "largest_fraction"],
                  res.to_csv_rows())
        files["ensemble"] = outdir / "ensemble.csv"

    return PipelineResult(sc, outdir, report, files, run.horizon_reason)
