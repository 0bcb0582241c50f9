import math

import numpy as np
import pytest

from rouleaux import moments as M
from rouleaux import reference as ref
from rouleaux import tensors
from rouleaux.measure import DiscreteMeasure
from rouleaux.moments import extract_moments


def two_point():
    return DiscreteMeasure({(2, 2): 1.0, (3, 4): 1.0})


def test_extract_moments_examples():
    m = extract_moments(DiscreteMeasure({(2, 3): 2.0}))
    assert m.m1.tolist() == [4, 6]
    assert m.m2.tolist() == [[8, 12], [12, 18]]
    z = extract_moments(DiscreteMeasure())
    assert z.m0 == 0 and z.m2.tolist() == [[0, 0], [0, 0]]
    m = extract_moments(two_point())
    # m3_{112} = 2^2*2 + 3^2*4
    assert m.m3[1] == 44.0


def test_first_moment_rhs_examples():
    assert M.first_moment_rhs([2, 3], (0, 0, 1)).tolist() == [0, -9]
    assert M.first_moment_rhs([0, 0], (1, 1, 1)).tolist() == [0, 0]
    rng = np.random.default_rng(0)
    for _ in range(50):
        m1 = rng.uniform(0, 10, 2)
        alpha = rng.uniform(0, 2, 3)
        alpha[0] += 0.1
        assert M.first_moment_rhs(m1, alpha).sum() <= 1e-12


def test_riccati_coefficients_example_and_consistency():
    K, A, B = M.riccati_coefficients([1, 1], (1, 0, 0))
    assert A.tolist() == [[-2, 1], [0, 0]]
    K, A, B = M.riccati_coefficients([0, 0], (1, 1, 1))
    assert np.all(A == 0) and np.all(B == 0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        m1 = rng.uniform(0, 5, 2)
        alpha = rng.uniform(0, 2, 3)
        alpha[rng.integers(0, 3)] += 0.2
        s = rng.uniform(0, 4, 3)
        m2 = np.array([[s[0], s[1]], [s[1], s[2]]])
        K, A, B = M.riccati_coefficients(m1, alpha)
        lhs = m2 @ K @ m2 + m2 @ A + A.T @ m2 + B
        rhs = M.second_moment_rhs(m2, m1, alpha)
        scale = max(np.abs(rhs).max(), 1.0)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale
        assert np.abs(B - B.T).max() == 0.0


def test_second_moment_rhs_case3_seed():
    # delta_(2,3) seed under the arm channel: the auxiliary entry
    # N_22 = M2_22 - 2 M1_2 has derivative d0^2 = 9, so the raw rhs entry is
    # 9 + 2 * dM1_2/dt = 9 - 18 = -9 (confirmed by the weak-form oracle).
    f = DiscreteMeasure({(2, 3): 1.0})
    m = extract_moments(f)
    rhs = M.second_moment_rhs(m.m2, m.m1, (0, 0, 1))
    bf = ref.weak_rhs_bruteforce(2, f, (0, 0, 1))
    assert np.abs(rhs - bf).max() <= 1e-12 * np.abs(bf).max()
    assert rhs[1, 1] == pytest.approx(-9.0, abs=1e-12)
    n22_dot = rhs[1, 1] - 2.0 * M.first_moment_rhs(m.m1, (0, 0, 1))[1]
    d0 = m.m2[1, 1] - 2.0 * m.m1[1]
    assert n22_dot == pytest.approx(d0**2, abs=1e-12)
    assert M.second_moment_rhs(np.zeros((2, 2)), np.zeros(2), (1, 1, 1)).tolist() \
        == [[0, 0], [0, 0]]


def test_higher_rhs_bruteforce_spot():
    f = two_point()
    m = extract_moments(f)
    for alpha in ((1, 1, 1), (0.3, 1.7, 0.2)):
        bf3 = tensors.pack(tensors.symmetrize(ref.weak_rhs_bruteforce(3, f, alpha)))
        r3 = M.third_moment_rhs(m.m3, m.m2, m.m1, alpha)
        assert tensors.frobenius(r3 - bf3) <= 1e-12 * tensors.frobenius(bf3)
        bf4 = tensors.pack(tensors.symmetrize(ref.weak_rhs_bruteforce(4, f, alpha)))
        r4 = M.fourth_moment_rhs(m.m4, m.m3, m.m2, m.m1, alpha)
        assert tensors.frobenius(r4 - bf4) <= 1e-12 * tensors.frobenius(bf4)
    zero = M.third_moment_rhs(np.zeros(4), np.zeros((2, 2)), np.zeros(2), (1, 1, 1))
    assert np.all(zero == 0)


def test_leading_transport_operator_spectrum():
    """In the theta basis the leading block is upper bidiagonal with integer
    diagonal (n, ..., 0) and superdiagonal (beta, 2 beta, ...)."""
    rng = np.random.default_rng(2)
    for _ in range(5):
        alpha = rng.uniform(0.05, 2, 3)
        K = sum(alpha[i] * M.K_MATRICES[i] for i in range(3))
        v = rng.uniform(0.2, 2, 2)
        theta = v / math.sqrt(float(v @ K @ v))   # theta^T K theta = 1
        beta = float(theta @ K @ tensors.perp(theta))
        for order in (3, 4):
            op = M.leading_transport_operator(order, np.outer(theta, theta), alpha)
            basis = tensors.theta_basis(theta, order)
            mat = np.column_stack([
                tensors.expand_in_basis(op(b), basis) for b in basis])
            expected = np.zeros((order + 1, order + 1))
            for k in range(order + 1):
                expected[k, k] = order - k
                if k + 1 <= order:
                    expected[k, k + 1] = (k + 1) * beta
            assert np.allclose(mat, expected, atol=1e-10)
            evals = np.sort(np.linalg.eigvals(mat).real)
            assert np.allclose(evals, np.arange(order + 1), atol=1e-10)


def test_integrate_case3_closed_form():
    m = extract_moments(DiscreteMeasure({(2, 3): 1.0}))
    traj = M.integrate_moment_system(m, (0, 0, 1))
    for t in np.linspace(0, 0.3, 16):
        m2 = traj.m2_at(t)
        m2_ref = ref.case3_m2(m, 1.0, t)
        assert np.abs(m2 - m2_ref).max() <= 1e-8 * np.abs(m2_ref).max()


def test_integrate_nogel_bounded_and_m1_dissipation():
    m = extract_moments(DiscreteMeasure({(2, 2): 1.0}))
    traj = M.integrate_moment_system(m, (0, 0, 1), t_end=10.0)
    norms = [np.abs(ms.m2).max() for ms in traj.sets]
    assert max(norms) < 1e3
    m1sums = [ms.m1.sum() for ms in traj.sets]
    assert all(b <= a + 1e-10 for a, b in zip(m1sums, m1sums[1:]))
    # constant-kernel density law on the a = 2 line
    for t, ms in zip(traj.times, traj.sets):
        assert abs(ms.m0 - ref.constant_kernel_density(1.0, 1.0, t)) <= 1e-6


def test_detect_blow_up_branches():
    m23 = extract_moments(DiscreteMeasure({(2, 3): 1.0}))
    m22 = extract_moments(DiscreteMeasure({(2, 2): 1.0}))
    m32 = extract_moments(DiscreteMeasure({(3, 2): 1.0}))
    rep = M.detect_blow_up(m23, (0, 0, 1))
    assert rep.gelates and rep.branch == "alpha3_cond"
    assert abs(rep.t_star - 1 / 3) <= 1e-8
    rep = M.detect_blow_up(m22, (0, 0, 1))
    assert not rep.gelates and math.isinf(rep.t_star)
    # x-degenerate seeds do not gel under channel 1 alone (exact reduction)
    rep = M.detect_blow_up(m23, (1, 0, 0))
    assert not rep.gelates
    rep = M.detect_blow_up(m32, (1, 0, 0))
    assert rep.gelates and abs(rep.t_star - ref.case1_t_star(m32, 1.0)) <= 1e-8
    rep = M.detect_blow_up(m22, (1, 0, 1))
    assert rep.gelates and rep.branch == "alpha12"
    rep = M.detect_blow_up(m22, (0, 1, 0))
    assert rep.gelates


def test_case1_closed_form_matches_direct_integration():
    m = extract_moments(DiscreteMeasure({(3, 2): 1.0}))
    sol = M.integrate_m2_direct(m, (1, 0, 0), 0.2)
    for t in np.linspace(0, 0.2, 9):
        y = sol.sol(t)
        m2 = np.array([[y[3], y[4]], [y[4], y[5]]])
        m2_ref = ref.case1_m2(m, 1.0, t)
        assert np.abs(m2 - m2_ref).max() <= 1e-8 * np.abs(m2_ref).max()


def test_theta_extraction_case3():
    m = extract_moments(DiscreteMeasure({(2, 3): 1.0}))
    traj = M.integrate_moment_system(m, (0, 0, 1))
    theta, c0, k0, resid = M.extract_theta_c0(traj)
    assert np.abs(theta - np.array([2.0, 1.0])).max() <= 1e-4
    K = M.riccati_coefficients(np.zeros(2), (0, 0, 1))[0]
    assert abs(theta @ K @ theta - 1.0) <= 1e-4
    assert c0 > 0
    assert k0 == pytest.approx(c0 * float(np.abs(theta).sum()), rel=1e-12)
    assert abs(k0 - 2.0 / 3.0) <= 1e-4   # c0 = 2/9 and |theta|_1 = 3 here
    assert resid["rank1"] <= 1e-6


def test_hamiltonian_route_matches_direct_m2():
    m = extract_moments(DiscreteMeasure({(2, 2): 1.0}))
    rep = M.detect_blow_up(m, (1, 1, 1))
    traj = M.integrate_moment_system(m, (1, 1, 1))
    sol = M.integrate_m2_direct(m, (1, 1, 1), 0.95 * rep.t_star)
    for t in np.linspace(0, 0.95 * rep.t_star, 21):
        y = sol.sol(t)
        m2_direct = np.array([[y[3], y[4]], [y[4], y[5]]])
        if np.abs(m2_direct).max() > 1e3:
            break
        m2_uv = traj.m2_at(t)
        assert np.abs(m2_uv - m2_direct).max() <= 1e-9 * max(np.abs(m2_direct).max(), 1.0)


def test_moment_residue_rates_and_fourth_bound():
    m = extract_moments(DiscreteMeasure({(2, 3): 0.75, (2, 5): 0.25}))
    rep, traj = M.analyze_gelation(m, (0, 0, 1))
    ts, theta, c0 = rep.t_star, rep.theta, rep.c0
    hs = ts * np.exp(-np.linspace(1.0, 3.3, 12))
    errs2 = [np.linalg.norm((h) * traj.m2_at(ts - h) - np.outer(theta, theta))
             for h in hs]
    slope2 = np.polyfit(np.log(hs), np.log(errs2), 1)[0]
    assert slope2 >= 0.9
    t3p = tensors.outer_power(theta, 3)
    errs3 = [tensors.frobenius(traj.rescaled_w_at(ts - h)[0] - c0 * t3p) for h in hs]
    slope3 = np.polyfit(np.log(hs), np.log(errs3), 1)[0]
    assert slope3 >= 0.9
    w4 = np.array([tensors.frobenius(traj.rescaled_w_at(ts - h)[1]) for h in hs])
    assert w4.max() < 10 * np.median(w4)
    # derivative bound on (T*-t) M^2 via finite differences
    dw = [np.abs(h * traj.m2_at(ts - h) - 1.01 * h * traj.m2_at(ts - 1.01 * h)).max()
          / (0.01 * h) for h in hs]
    assert max(dw) < 50 * np.median(dw)


def test_check_dichotomy():
    m = extract_moments(DiscreteMeasure({(2, 2): 1.0}))
    _, traj = M.analyze_gelation(m, (1, 1, 1))
    out = M.check_dichotomy(traj)
    assert out["branch"] == "both_diverge"
    assert out["last_m2_11"] > 0 and out["last_time"] > 0
    traj2 = M.integrate_moment_system(m, (0, 0, 1), t_end=10.0)
    assert M.check_dichotomy(traj2)["branch"] == "both_bounded"


def test_cauchy_schwarz_moment_chain():
    rng = np.random.default_rng(3)
    for _ in range(100):
        pts = {(int(rng.integers(2, 40)), int(rng.integers(2, 40))):
               float(rng.uniform(0.01, 3)) for _ in range(rng.integers(1, 8))}
        m = extract_moments(DiscreteMeasure(pts))
        lhs = np.linalg.norm(m.m2)
        rhs = 2.0 * np.linalg.norm(m.m1) ** 0.5 * tensors.frobenius(m.m3) ** 0.5
        assert lhs <= rhs * (1 + 1e-12)


def test_asymmetry_guard_raises():
    with pytest.raises(M.AsymmetryError):
        M._checked_pack(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_blow_up_search_error_on_capped_horizon():
    m = extract_moments(DiscreteMeasure({(2, 3): 1.0}))
    with pytest.raises(M.BlowUpSearchError):
        M.detect_blow_up(m, (0, 0, 1), horizon=1e-6, max_doublings=2)


def test_slow_gelation_horizon_doubling():
    # tiny gel condition: T* = 1/d0 is large and the det-V root search
    # must extend its horizon repeatedly before bracketing it
    f = DiscreteMeasure({(2, 2): 0.99, (2, 3): 0.01})
    m = extract_moments(f)
    d0 = m.m2[1, 1] - 2 * m.m1[1]
    rep = M.detect_blow_up(m, (0, 0, 1))
    assert abs(rep.t_star - 1.0 / d0) <= 1e-8 / d0


def test_gelling_trajectory_with_explicit_t_end():
    f = DiscreteMeasure({(2, 2): 0.99, (2, 3): 0.01})
    m = extract_moments(f)
    rep = M.detect_blow_up(m, (0, 0, 1))
    t_end = 0.5 * rep.t_star
    traj = M.integrate_moment_system(m, (0, 0, 1), t_end=t_end)
    assert traj.times[-1] == pytest.approx(t_end, rel=1e-12)
    # closed form: M2_22 = d0/(1 - d0 t) + 2 y0/(1 + y0 t)
    ms = traj.moments_at(t_end)
    m2_ref = ref.case3_m2(m, 1.0, t_end)
    assert np.abs(ms.m2 - m2_ref).max() <= 1e-8 * np.abs(m2_ref).max()
    with pytest.raises(ValueError):
        M.integrate_moment_system(m, (0, 0, 1), t_end=2 * rep.t_star)
