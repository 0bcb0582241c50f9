import numpy as np
import pytest

from rouleaux import lattice as L
from rouleaux import moments as M
from rouleaux import selfsim as S
from rouleaux.measure import DiscreteMeasure
from rouleaux.moments import extract_moments


def make_snaps(tau_max=1.6, n=16, R=96, f0d=None, alpha=(0, 0, 1)):
    f0 = DiscreteMeasure(f0d or {(2, 3): 0.75, (2, 5): 0.25})
    rep, _ = M.analyze_gelation(extract_moments(f0), alpha)
    cps = L.tau_checkpoints(rep.t_star, tau_max, n)
    run = L.solve(f0, alpha, R, cps, rtol=1e-8, leak_m2_stop=1.0)
    snaps = [S.rescale(cp.measure, cp.t, rep.t_star) for cp in run.checkpoints[1:]]
    return rep, snaps


def test_rescale_moment_scaling_identity():
    f = DiscreteMeasure({(2, 3): 0.4, (7, 5): 1.1, (3, 9): 0.2})
    mom = extract_moments(f)
    t, t_star = 0.07, 0.19
    F = S.rescale(f, t, t_star)
    h = t_star - t
    assert F.tau == pytest.approx(-np.log(1 - t / t_star))
    # M^k(F) = h^(2k-3) M^k(f), exact reindexing
    assert np.allclose(F.moment_matrix(), h * mom.m2, rtol=1e-15)
    assert np.allclose(F.moment_packed(3), h**3 * mom.m3, rtol=1e-15)
    assert np.allclose(F.moment_packed(4), h**5 * mom.m4, rtol=1e-15)
    w_sum = F.weights.sum()
    assert w_sum == pytest.approx(h**-3 * mom.m0, rel=1e-14)


def test_rescale_unit_factors_and_half():
    f = DiscreteMeasure({(2, 3): 2.0})
    F = S.rescale(f, 0.0, 1.0)
    assert np.allclose(F.eta, [[2, 3]]) and F.weights.tolist() == [2.0]
    F2 = S.rescale(f, 0.5, 1.0)
    mom = extract_moments(f)
    assert np.allclose(F2.moment_matrix(), 0.5 * mom.m2)
    with pytest.raises(ValueError):
        S.rescale(f, 1.0, 1.0)


def test_localization_examples():
    # mass on the theta ray contributes nothing
    theta = np.array([2.0, 1.0])
    eta = np.array([[2.0, 1.0], [4.0, 2.0], [0.2, 0.1]])
    F = S.ScaledSnapshot(0.0, 0.0, 1.0, eta, np.ones(3), 1.0)
    assert S.localization_integral(F, theta, 2) <= 1e-28
    # hand example: unit mass at (1, 0) against theta = (1, 1)
    F2 = S.ScaledSnapshot(0.0, 0.0, 1.0, np.array([[1.0, 0.0]]), np.ones(1), 1.0)
    assert S.localization_integral(F2, (1, 1), 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        S.localization_integral(F2, (0, 0), 2)
    with pytest.raises(ValueError):
        S.localization_integral(F2, (1, 1), 4)


def test_localization_moment_identities():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = rng.integers(1, 30)
        eta = rng.uniform(0.01, 5.0, (n, 2))
        w = rng.uniform(0.01, 2.0, n)
        theta = rng.uniform(0.1, 3.0, 2)
        F = S.ScaledSnapshot(0.0, 0.0, 1.0, eta, w, 1.0)
        l2 = S.localization_integral(F, theta, 2)
        l2m = S.localization_p2_from_moments(F.moment_matrix(), theta)
        assert l2 == pytest.approx(l2m, rel=1e-12, abs=1e-14)
        l3 = S.localization_integral(F, theta, 3)
        l3m = S.localization_p3_from_moments(F.moment_packed(3), theta)
        assert l3 == pytest.approx(l3m, rel=1e-12, abs=1e-14)


def test_polar_projection():
    eta = np.array([[3.0, 1.0]])
    F = S.ScaledSnapshot(0.0, 0.0, 1.0, eta, np.array([2.0]), 32.0)
    g, G = S.polar_project(F)
    assert g.r.tolist() == [4.0]
    assert g.weights.tolist() == [2.0 / 32.0]
    assert np.sum(g.weights * g.r**2) == pytest.approx(1.0)
    assert np.allclose(G.omega, [[0.75, 0.25]])
    # radial marginals of G and g agree
    assert np.allclose(G.r, g.r) and np.allclose(G.weights / G.Z, g.weights)
    with pytest.raises(ValueError):
        S.RadialMeasure(np.array([2.0]), np.array([1.0]))


def test_merge_shift_values():
    # at T* = 1 the shift is just (zeta_i) e^(-2 tau)
    d = S.merge_shift(0.7, 1.0)
    assert np.allclose(d, np.array([1.0, 2.0, 2.0]) * np.exp(-1.4))
    # T*-scaling carries T*^2 (measure-side convention)
    d2 = S.merge_shift(0.0, 0.5)
    assert np.allclose(d2, np.array([1.0, 2.0, 2.0]) * 0.25)


def test_projected_equation_residual_refines():
    rep, snaps = make_snaps(tau_max=1.2, n=24)
    theta = rep.theta
    mid = len(snaps) // 2
    res_fine = S.projected_equation_residual(snaps, (0, 0, 1), theta, mid)
    coarse = snaps[::2]
    res_coarse = S.projected_equation_residual(coarse, (0, 0, 1), theta, mid // 2)
    assert res_fine < res_coarse
    assert res_coarse / max(res_fine, 1e-300) >= 2.0   # order >= 1
    assert res_fine < 0.05


def test_projected_equation_zero_measure():
    empty = [S.ScaledSnapshot(0.1 * k, 0.0, 1.0, np.empty((0, 2)), np.empty(0), 1.0)
             for k in range(3)]
    val = S.projected_equation_residual(empty, (0, 0, 1), (2.0, 1.0), 1)
    assert val == 0.0


def test_normalizer_converges_to_theta_norm():
    # Z(tau) -> |theta|_1^2 at the same e^-tau rate as the moment residue
    from rouleaux.moments import analyze_gelation, extract_moments as em
    f0 = DiscreteMeasure({(2, 3): 0.75, (2, 5): 0.25})
    rep, traj = analyze_gelation(em(f0), (0, 0, 1))
    ts, theta = rep.t_star, rep.theta
    target = float(np.abs(theta).sum()) ** 2
    taus = np.linspace(1.0, 3.0, 12)
    gaps = []
    for tau in taus:
        t = ts * (1 - np.exp(-tau))
        Z = (ts - t) * float(traj.m2_at(t).sum())
        gaps.append(abs(Z - target))
    slope = -np.polyfit(taus, np.log(gaps), 1)[0]
    assert slope >= 0.7
