"""Acceptance criteria as executable checks.

Each criterion returns a CriterionResult with one row per sub-check
(label, measured value, threshold, pass).  Expensive pipeline runs are
cached in-process and shared between criteria; all runs are deterministic
for a fixed worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lattice, laplace, moments, reference, selfsim, stochastic, tensors
from .measure import DiscreteMeasure
from .moments import extract_moments

WORKERS = 4

_CACHE = {}


@dataclass
class CheckRow:
    label: str
    value: float
    threshold: str
    passed: bool


@dataclass
class CriterionResult:
    cid: int
    title: str
    rows: list = field(default_factory=list)
    runtime: float = 0.0
    passed: bool = True

    def add(self, label, value, threshold, passed):
        self.rows.append(CheckRow(label, float(value), threshold, bool(passed)))
        self.passed = self.passed and bool(passed)


def _fit_exponent(taus, vals):
    """Negated slope of log(vals) against tau."""
    taus = np.asarray(taus, dtype=float)
    vals = np.asarray(vals, dtype=float)
    return -float(np.polyfit(taus, np.log(vals), 1)[0])


# ---------------------------------------------------------------------------
# shared expensive runs
# ---------------------------------------------------------------------------

REF_F0 = {(2, 3): 0.75, (2, 5): 0.25}
REF_ALPHA = (0.0, 0.0, 1.0)
REF_R = 2048.0


def reference_bundle():
    """Gelling reference at R = 2048: run, snapshots and moment analysis."""
    if "ref" in _CACHE:
        return _CACHE["ref"]
    f0 = DiscreteMeasure(REF_F0)
    m0 = extract_moments(f0)
    report, mtraj = moments.analyze_gelation(m0, REF_ALPHA)
    t_star = report.t_star
    taus = np.arange(0.1, 3.01, 0.1)
    cps = t_star * (1.0 - np.exp(-taus))
    run = lattice.solve(f0, REF_ALPHA, REF_R, cps, rtol=1e-5,
                        dt_min=1e-12 * t_star, workers=WORKERS)
    good = [cp for cp in run.checkpoints[1:] if cp.leaked_m2_fraction <= 0.005]
    snaps = [selfsim.rescale(cp.measure, cp.t, t_star) for cp in good]
    bundle = {"report": report, "mtraj": mtraj, "run": run, "snaps": snaps,
              "staus": np.array([s.tau for s in snaps])}
    _CACHE["ref"] = bundle
    return bundle


def criterion4_runs():
    if "c4" in _CACHE:
        return _CACHE["c4"]
    f0 = DiscreteMeasure({(2, 2): 1.0})
    m0 = extract_moments(f0)
    report = moments.detect_blow_up(m0, (1, 1, 1))
    traj = moments.integrate_moment_system(m0, (1, 1, 1))
    taus = np.arange(0.1, 4.01, 0.1)
    cps = report.t_star * (1.0 - np.exp(-taus))
    runs = {R: lattice.solve(f0, (1, 1, 1), R, cps, rtol=1e-6,
                             dt_min=1e-12 * report.t_star, workers=WORKERS)
            for R in (256, 512)}
    _CACHE["c4"] = (report, traj, runs)
    return _CACHE["c4"]


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def criterion_1():
    """Case-3 closed-form oracle and blow-up time."""
    t0 = time.time()
    res = CriterionResult(1, "Case-3 closed-form oracle")
    f0 = DiscreteMeasure({(2, 3): 1.0})
    m0 = extract_moments(f0)
    report = moments.detect_blow_up(m0, (0, 0, 1))
    res.add("|T* - 1/3|", abs(report.t_star - 1.0 / 3.0), "<= 1e-6",
            abs(report.t_star - 1.0 / 3.0) <= 1e-6)
    traj = moments.integrate_moment_system(m0, (0, 0, 1))
    errs = []
    for t in np.linspace(0.0, 0.3, 61):
        m2 = traj.m2_at(t)
        m2_ref = reference.case3_m2(m0, 1.0, t)
        errs.append(np.abs(m2 - m2_ref).max() / np.abs(m2_ref).max())
    res.add("max rel err M2 on [0, 0.3]", max(errs), "<= 1e-8", max(errs) <= 1e-8)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 5", res.runtime < 5)
    return res


_C2_MATRIX = [
    ("alpha1, x-active seed", (1, 0, 0), {(3, 2): 1.0}, True),
    ("alpha2 only", (0, 1, 0), {(2, 2): 1.0}, True),
    ("alpha3, int y(y-2) > 0", (0, 0, 1), {(2, 3): 1.0}, True),
    ("alpha3, int y(y-2) = 0", (0, 0, 1), {(2, 2): 1.0}, False),
    ("mixed all channels", (1, 1, 1), {(2, 3): 1.0}, True),
    ("mixed alpha1+alpha3", (1, 0, 1), {(2, 2): 1.0}, True),
]


def criterion_2():
    """Gelation classification matrix and the no-gel density law."""
    t0 = time.time()
    res = CriterionResult(2, "Gelation classification")
    mismatches = 0
    for label, alpha, f0d, expect in _C2_MATRIX:
        rep = moments.detect_blow_up(extract_moments(DiscreteMeasure(f0d)), alpha)
        ok = rep.gelates == expect
        mismatches += 0 if ok else 1
        res.add(f"{label}: gelates={rep.gelates}", float(rep.gelates),
                f"expect {expect}", ok)
    # no-gel line: N(t) = N0 / (1 + 2 N0 t) to t = 10
    m0 = extract_moments(DiscreteMeasure({(2, 2): 1.0}))
    traj = moments.integrate_moment_system(m0, (0, 0, 1), t_end=10.0,
                                           n_checkpoints=41)
    errs = [abs(ms.m0 - reference.constant_kernel_density(1.0, 1.0, t))
            for t, ms in zip(traj.times, traj.sets)]
    res.add("max |N(t) - closed form| to t=10", max(errs), "<= 1e-4",
            max(errs) <= 1e-4)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 30", res.runtime < 30)
    return res


_C3_SCENARIOS = [
    ("alpha=(1,1,1), seed (2,3)", (1, 1, 1), {(2, 3): 1.0}),
    ("alpha=(1,0,0), seed (3,2)", (1, 0, 0), {(3, 2): 1.0}),
    ("alpha=(0,0,1), seed (2,3)", (0, 0, 1), {(2, 3): 1.0}),
]


def criterion_3():
    """Normalization theta^T K theta = 1 and the Case-3 theta value."""
    t0 = time.time()
    res = CriterionResult(3, "theta identity")
    for label, alpha, f0d in _C3_SCENARIOS:
        rep, _ = moments.analyze_gelation(
            extract_moments(DiscreteMeasure(f0d)), alpha)
        K = moments.riccati_coefficients(np.zeros(2), alpha)[0]
        val = abs(float(rep.theta @ K @ rep.theta) - 1.0)
        res.add(f"{label}: |theta^T K theta - 1|", val, "<= 1e-4", val <= 1e-4)
        if alpha == (0, 0, 1):
            dev = float(np.abs(rep.theta - np.array([2.0, 1.0])).max())
            res.add("case-3 ||theta - (2,1)||", dev, "<= 1e-4", dev <= 1e-4)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 60", res.runtime < 60)
    return res


def criterion_4():
    """Lattice moments against the exact ODEs, with truncation refinement."""
    t0 = time.time()
    res = CriterionResult(4, "Lattice vs moment ODE")
    report, traj, runs = criterion4_runs()
    t_star = report.t_star

    def devs(run):
        out = {}
        for cp in run.checkpoints:
            ms = traj.moments_at(cp.t)
            out[round(cp.t, 14)] = (
                float(np.abs(cp.moments.m1 - ms.m1).max() / np.abs(ms.m1).max()),
                float(np.abs(cp.moments.m2 - ms.m2).max() / np.abs(ms.m2).max()))
        return out

    d256 = devs(runs[256])
    d512 = devs(runs[512])
    half1 = max(v[0] for t, v in d256.items() if t <= 0.5 * t_star)
    half2 = max(v[1] for t, v in d256.items() if t <= 0.5 * t_star)
    res.add("R=256 max M1 dev to 0.5 T*", half1, "<= 0.01", half1 <= 0.01)
    res.add("R=256 max M2 dev to 0.5 T*", half2, "<= 0.01", half2 <= 0.01)
    good = [cp.t for cp in runs[256].checkpoints if cp.leaked_m2_fraction <= 0.005]
    tc = round(good[-1], 14)
    ratio = d256[tc][1] / max(d512[tc][1], 1e-300)
    res.add(f"M2 deviation ratio at t/T*={tc / t_star:.2f}", ratio,
            ">= 1.8", ratio >= 1.8)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 300", res.runtime < 300)
    return res


def criterion_5(n_trials=1000, seed=20240):
    """Tensor right-hand sides against brute-force weak-form sums."""
    t0 = time.time()
    res = CriterionResult(5, "Tensor RHS oracles")
    rng = np.random.default_rng(seed)
    worst3 = 0.0
    worst4 = 0.0
    for _ in range(n_trials):
        pts = {}
        for _ in range(rng.integers(1, 4)):
            pts[(int(rng.integers(2, 12)), int(rng.integers(2, 12)))] = \
                float(rng.uniform(0.1, 2.0))
        f = DiscreteMeasure(pts)
        alpha = rng.uniform(0.0, 2.0, 3)
        alpha[rng.integers(0, 3)] += 0.1
        m = extract_moments(f)
        bf3 = tensors.pack(tensors.symmetrize(reference.weak_rhs_bruteforce(3, f, alpha)))
        bf4 = tensors.pack(tensors.symmetrize(reference.weak_rhs_bruteforce(4, f, alpha)))
        r3 = moments.third_moment_rhs(m.m3, m.m2, m.m1, alpha)
        r4 = moments.fourth_moment_rhs(m.m4, m.m3, m.m2, m.m1, alpha)
        worst3 = max(worst3, tensors.frobenius(r3 - bf3) / max(tensors.frobenius(bf3), 1e-300))
        worst4 = max(worst4, tensors.frobenius(r4 - bf4) / max(tensors.frobenius(bf4), 1e-300))
    res.add(f"3rd-moment rhs rel err ({n_trials} trials)", worst3, "<= 1e-12",
            worst3 <= 1e-12)
    res.add(f"4th-moment rhs rel err ({n_trials} trials)", worst4, "<= 1e-12",
            worst4 <= 1e-12)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 10", res.runtime < 10)
    return res


def criterion_6():
    """Localization decay rates of the rescaled lattice solution."""
    t0 = time.time()
    res = CriterionResult(6, "Localization decay (R=2048)")
    b = reference_bundle()
    report = b["report"]
    theta, c0 = report.theta, report.c0
    snaps, staus = b["snaps"], b["staus"]
    sel = staus >= 1.0
    t3p = tensors.outer_power(theta, 3)
    series = {"loc_p2": [], "loc_p3": [], "m2_dev": [], "m3_dev": [], "m4": []}
    for s in snaps:
        series["loc_p2"].append(selfsim.localization_integral(s, theta, 2))
        series["loc_p3"].append(selfsim.localization_integral(s, theta, 3))
        series["m2_dev"].append(np.linalg.norm(s.moment_matrix() - np.outer(theta, theta)))
        series["m3_dev"].append(tensors.frobenius(s.moment_packed(3) - c0 * t3p))
        series["m4"].append(tensors.frobenius(s.moment_packed(4)))
    for key in ("loc_p2", "loc_p3", "m2_dev", "m3_dev"):
        exp = _fit_exponent(staus[sel], np.array(series[key])[sel])
        res.add(f"{key} fitted exponent", exp, "in [0.7, 1.3]",
                0.7 <= exp <= 1.3)
    m4 = np.array(series["m4"])[sel]
    ratio = float(m4.max() / np.median(m4))
    res.add("(T*-t)^5-scaled M4 max/median", ratio, "< 10", ratio < 10)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 600", res.runtime < 600)
    return res


def criterion_7():
    """Convergence of the transform derivative to the limit profile."""
    t0 = time.time()
    res = CriterionResult(7, "Self-similar Laplace convergence")
    b = reference_bundle()
    k0 = b["report"].k0
    gs = [selfsim.polar_project(s)[0] for s in b["snaps"]]
    D = laplace.convergence_gap(gs, k0, rho_max=5.0)
    diffs = np.diff(D[-5:])
    blips = int(np.sum(diffs > 0.05 * D[-5:-1]))
    res.add("non-monotone blips in last 5 D", blips, "<= 1", blips <= 1)
    res.add("D(tau_final)", D[-1], "< 0.05", D[-1] < 0.05)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 600", res.runtime < 600)
    return res


def criterion_8():
    """Qualitative decay of the Burgers-equation forcing remainder."""
    t0 = time.time()
    res = CriterionResult(8, "Burgers remainder decay")
    b = reference_bundle()
    theta = b["report"].theta
    snaps, staus = b["snaps"], b["staus"]
    rho = laplace.rho_grid(5.0, 33)[1:]
    vals, taus = [], []
    for i in range(2, len(snaps) - 2):
        if staus[i] < 1.0:
            continue
        R = laplace.burgers_remainder(snaps, REF_ALPHA, theta, i, rho)
        vals.append(float(np.abs(R / rho).max()))
        taus.append(staus[i])
    slope = float(np.polyfit(taus, np.log(vals), 1)[0])
    res.add("fitted slope of max |R|/rho", slope, "<= -0.3", slope <= -0.3)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 600", res.runtime < 600)
    return res


_C9_ZETAS = [(0.05, 0.1), (0.3, 0.2), (0.5, 0.5), (1.0, 0.4), (2.0, 1.5)]


def criterion_9():
    """Characteristics system against the transformed lattice solution."""
    t0 = time.time()
    res = CriterionResult(9, "Characteristics oracle")
    f0 = DiscreteMeasure(REF_F0)
    rep = moments.detect_blow_up(extract_moments(f0), REF_ALPHA)
    t_end = 0.25 * rep.t_star
    run = lattice.solve(f0, REF_ALPHA, 512, [t_end], rtol=1e-10, workers=WORKERS)
    fm = run.checkpoints[-1].measure
    fh = laplace.laplace_characteristics(f0, REF_ALPHA, _C9_ZETAS, t_end)
    worst = 0.0
    for z, fc in zip(_C9_ZETAS, fh):
        fd = laplace.measure_transform(fm, z)
        worst = max(worst, float(np.abs(fc - fd).max()))
    res.add("max |fhat_char - fhat_lattice| at 5 zetas", worst, "<= 1e-3",
            worst <= 1e-3)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 60", res.runtime < 60)
    return res


def criterion_10():
    """Monte Carlo ensemble against lattice moments up to 0.5 T*."""
    t0 = time.time()
    res = CriterionResult(10, "Monte Carlo cross-check")
    f0 = DiscreteMeasure({(2, 3): 1.0})
    t_star = 1.0 / 3.0
    cps = [f * t_star for f in (0.1, 0.2, 0.3, 0.4, 0.5)]
    ens = stochastic.run_ensemble(f0, 100_000, (0, 0, 1), cps, range(64))
    run = lattice.solve(f0, (0, 0, 1), 256, cps, rtol=1e-10, workers=WORKERS)
    worst_z = 0.0
    for k in range(len(cps)):
        mom = run.checkpoints[k + 1].moments
        refs = {"m1_x": mom.m1[0], "m1_y": mom.m1[1], "m2_xx": mom.m2[0, 0],
                "m2_xy": mom.m2[0, 1], "m2_yy": mom.m2[1, 1]}
        for fld, rv in refs.items():
            # conserved marginals have zero sampling error, so the gap is
            # the deterministic solver's own tolerance; keep a floor above
            # it but far below any genuine sampling scale
            scale = ens.stderr[fld][k] + 1e-8 * abs(rv)
            z = abs(ens.mean[fld][k] - rv) / scale
            worst_z = max(worst_z, z)
            if z > 3.0:
                res.add(f"{fld} at t/T*={cps[k] / t_star:.1f}: z", z, "<= 3", False)
    res.add("max |mean - lattice| / stderr over M1, M2", worst_z, "<= 3",
            worst_z <= 3.0)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 600", res.runtime < 600)
    return res


def criterion_11():
    """Quadrature identities of the limit profile."""
    from scipy.integrate import quad

    t0 = time.time()
    res = CriterionResult(11, "Profile identities")
    worst_mass = 0.0
    worst_lap = 0.0
    for K0 in (0.5, 1.0, 2.0):
        val, _ = quad(lambda r: r * r * laplace.fs_profile(r, K0), 0.0, np.inf)
        worst_mass = max(worst_mass, abs(val - 1.0))
        for rho in (0.0, 0.5, 1.0, 2.0, 5.0):
            val, _ = quad(lambda r: r * r * laplace.fs_profile(r, K0)
                          * math.exp(-r * rho), 0.0, np.inf)
            worst_lap = max(worst_lap, abs(val - laplace.selfsim_target(rho, K0)))
    res.add("max |int r^2 Fs - 1|", worst_mass, "<= 1e-8", worst_mass <= 1e-8)
    res.add("max |int r^2 Fs e^-r rho - target|", worst_lap, "<= 1e-6",
            worst_lap <= 1e-6)
    res.runtime = time.time() - t0
    res.add("runtime [s]", res.runtime, "< 5", res.runtime < 5)
    return res


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
    9: criterion_9, 10: criterion_10, 11: criterion_11,
}

SUITES = {
    "oracles": (1, 2, 3, 5, 11),
    "localization": (6,),
    "laplace": (7, 8, 9),
    "all": tuple(range(1, 12)),
}


def run_suite(name, progress=None):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for cid in SUITES[name]:
        if progress:
            progress(f"criterion {cid} ...")
        results.append(CRITERIA[cid]())
    return results
