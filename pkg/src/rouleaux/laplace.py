"""Desingularized Laplace transforms and the self-similar limit profile.

The radial transform g^(rho) = int r (1 - e^(-r rho)) g(dr) stays finite
for measures with an origin singularity; its rho-derivative is the plain
Laplace transform of r^2 g and converges to (1 + 2 K0 rho)^(-1/2) at the
gelation point.  The module also evaluates the forcing remainder of the
Burgers-type equation satisfied by g^ and solves the two-dimensional
characteristics system of the full transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .kernels import K_MATRICES, XI, validate_alpha
from .measure import DiscreteMeasure
from .moments import first_moment_rhs
from .selfsim import RadialMeasure, merge_shift, polar_project

# The quasilinear transform equation reads d_t fhat = (b . grad) fhat + c;
# along its characteristics Z' = -b, so that d/dt fhat(t, Z(t)) = c.  The
# sign is fixed against a small-time expansion of the transform computed
# directly from the measure (see tests), not taken from the transport form.
CHARACTERISTIC_SIGN = -1.0


def rho_grid(rho_max=10.0, n=64):
    """Increasing grid on [0, rho_max] clustered near 0."""
    j = np.arange(n)
    return rho_max * np.sin(0.5 * np.pi * j / (n - 1)) ** 2


def radial_laplace(g: RadialMeasure, rho):
    """Desingularized transform and its rho-derivative on a rho grid."""
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_arr < 0):
        raise ValueError("rho must be nonnegative")
    E = np.exp(-np.outer(rho_arr, g.r))
    ghat = (1.0 - E) @ (g.weights * g.r)
    dghat = E @ (g.weights * g.r**2)
    if np.isscalar(rho) or np.asarray(rho).ndim == 0:
        return float(ghat[0]), float(dghat[0])
    return ghat, dghat


def selfsim_target(rho, K0):
    """Limiting Laplace transform (1 + 2 K0 rho)^(-1/2) of r^2 g_inf."""
    if K0 <= 0:
        raise ValueError("K0 must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    return (1.0 + 2.0 * K0 * rho) ** -0.5


def fs_profile(r, K0):
    """Limit profile F_s(r) = (2 pi K0)^(-1/2) r^(-5/2) e^(-r/(2 K0))."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    if K0 <= 0:
        raise ValueError("K0 must be positive")
    return r**-2.5 * np.exp(-r / (2.0 * K0)) / math.sqrt(2.0 * math.pi * K0)


def ginf_density(r, K0):
    """Radial density g_inf(r) = (2 pi K0 r)^(-1/2) e^(-r/(2 K0)) = r^2 F_s."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    if K0 <= 0:
        raise ValueError("K0 must be positive")
    return np.exp(-r / (2.0 * K0)) / np.sqrt(2.0 * math.pi * K0 * r)


def q0_map(rho, K0):
    """Reference characteristic map Q0(rho) = K0 rho^2 / 2 + rho."""
    rho = np.asarray(rho, dtype=float)
    return 0.5 * K0 * rho**2 + rho


def q0_inverse(rho, K0):
    """Inverse of Q0 on [0, inf): 2 rho / (1 + sqrt(1 + 2 K0 rho))."""
    rho = np.asarray(rho, dtype=float)
    return 2.0 * rho / (1.0 + np.sqrt(1.0 + 2.0 * K0 * rho))


@dataclass
class LaplaceGrid:
    rho: np.ndarray
    values: np.ndarray


def convergence_gap(g_list, K0, rho_max=5.0, n_rho=64):
    """Per-snapshot sup gap D = max_rho |d_rho g^ - (1+2 K0 rho)^(-1/2)|."""
    rho = rho_grid(rho_max, n_rho)
    target = selfsim_target(rho, K0)
    gaps = []
    for g in g_list:
        _, dghat = radial_laplace(g, rho)
        gaps.append(float(np.abs(dghat - target).max()))
    return np.array(gaps)


# ---------------------------------------------------------------------------
# Burgers-equation remainder
# ---------------------------------------------------------------------------


def _fd_weights_interior():
    return np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _z_dot(Zs, k, dtau):
    """4th-order log-clock derivative of Z at index k; one-sided at ends."""
    n = len(Zs)
    if 2 <= k <= n - 3:
        w = _fd_weights_interior()
        return float(w @ Zs[k - 2:k + 3]) / dtau
    if k < 2:
        w = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
        return float(w @ Zs[k:k + 5]) / dtau
    w = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / 12.0
    return float(w @ Zs[k - 4:k + 1]) / dtau


def burgers_remainder(snapshots, alpha, theta, index, rho):
    """Forcing remainder R(tau, rho) of the transform equation
    d_tau g^ = g^ + (g^ - 2 rho) d_rho g^ + R at snapshots[index]."""
    alpha = validate_alpha(alpha)
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = len(snapshots)
    if n < 5:
        raise ValueError("need at least 5 snapshots for the Z derivative")
    taus = np.array([F.tau for F in snapshots])
    dtaus = np.diff(taus)
    if not np.allclose(dtaus, dtaus[0], rtol=1e-8):
        raise ValueError("snapshots must be uniformly spaced in tau")
    F0 = snapshots[index]
    g, G = polar_project(F0)
    Zs = np.array([F.Z for F in snapshots])
    zdot = _z_dot(Zs, index, dtaus[0])

    ghat, dghat = radial_laplace(g, rho)
    n1 = float(np.abs(theta).sum())
    out = -(zdot / F0.Z) * ghat + (F0.Z / n1**2 - 1.0) * ghat * dghat

    delta = merge_shift(F0.tau, F0.t_star)
    for ch in range(3):
        if alpha[ch] == 0.0:
            continue
        coef = alpha[ch] * F0.Z * float(theta @ K_MATRICES[ch] @ theta) / n1**2
        h1 = _h1_pair(g.r, g.weights, g.r, g.weights, rho, delta[ch])
        h2 = _h2_pair(g.r, g.weights, g.r, g.weights, rho, delta[ch])
        out += coef * (h1 + h2)
    omega_t = theta / n1
    for ch in range(3):
        if alpha[ch] == 0.0:
            continue
        K = K_MATRICES[ch]
        k_theta = float(omega_t @ K @ omega_t)
        acc = np.zeros_like(rho)
        for a in (0, 1):
            for b in (0, 1):
                if K[a, b] == 0.0:
                    continue
                wa = G.weights * G.omega[:, a]
                wb = G.weights * G.omega[:, b]
                acc += K[a, b] * (_h1_pair(G.r, wa, G.r, wb, rho, delta[ch])
                                  + _h2_pair(G.r, wa, G.r, wb, rho, delta[ch])
                                  + _h3_pair(G.r, wa, G.r, wb, rho))
        acc -= k_theta * (_h1_pair(G.r, G.weights, G.r, G.weights, rho, delta[ch])
                          + _h2_pair(G.r, G.weights, G.r, G.weights, rho, delta[ch])
                          + _h3_pair(G.r, G.weights, G.r, G.weights, rho))
        out += (alpha[ch] / F0.Z) * acc
    return out


def _h1_pair(r1, w1, r2, w2, rho, delta):
    # II r' r^2 e^(-rho (r+r')) (1 - e^(delta rho)) dmu dmu'
    E1 = np.exp(-np.outer(rho, r1))
    E2 = np.exp(-np.outer(rho, r2))
    s_r2e = E1 @ (w1 * r1**2)
    s_re = E2 @ (w2 * r2)
    return (1.0 - np.exp(delta * rho)) * s_r2e * s_re


def _h2_pair(r1, w1, r2, w2, rho, delta):
    # -1/2 delta II r r' (1 - e^(-(r+r'-delta) rho)) dmu dmu'
    E1 = np.exp(-np.outer(rho, r1))
    E2 = np.exp(-np.outer(rho, r2))
    s1 = float(np.sum(w1 * r1))
    s2 = float(np.sum(w2 * r2))
    s1e = E1 @ (w1 * r1)
    s2e = E2 @ (w2 * r2)
    return -0.5 * delta * (s1 * s2 - np.exp(delta * rho) * s1e * s2e)


def _h3_pair(r1, w1, r2, w2, rho):
    # II r' r^2 e^(-r rho) (1 - e^(-r' rho)) dmu dmu'
    E1 = np.exp(-np.outer(rho, r1))
    E2 = np.exp(-np.outer(rho, r2))
    s_r2e = E1 @ (w1 * r1**2)
    s_r1m = float(np.sum(w2 * r2)) - E2 @ (w2 * r2)
    return s_r2e * s_r1m


def transform_defect(snapshots, alpha, theta, index, rho):
    """Defect d_tau g^ - g^ - (g^ - 2 rho) d_rho g^ - R (finite differences).

    Should vanish to the accuracy of the tau finite differences; used as a
    consistency check of the whole projected pipeline.
    """
    taus = np.array([F.tau for F in snapshots])
    dtau = taus[1] - taus[0]
    if not 1 <= index < len(snapshots) - 1:
        raise ValueError("index must be interior")
    rho = np.asarray(rho, dtype=float)

    def ghat_at(k):
        g, _ = polar_project(snapshots[k])
        return radial_laplace(g, rho)[0]

    dtau_g = (ghat_at(index + 1) - ghat_at(index - 1)) / (2.0 * dtau)
    g, _ = polar_project(snapshots[index])
    ghat, dghat = radial_laplace(g, rho)
    R = burgers_remainder(snapshots, alpha, theta, index, rho)
    return dtau_g - ghat - (ghat - 2.0 * rho) * dghat - R


# ---------------------------------------------------------------------------
# characteristics of the two-dimensional transform
# ---------------------------------------------------------------------------


def measure_transform(f: DiscreteMeasure, zeta):
    """Vector transform f^(zeta) = sum w z (1 - e^(-z . zeta))."""
    comps, w = f.arrays()
    zeta = np.asarray(zeta, dtype=float)
    if comps.shape[0] == 0:
        return np.zeros(2)
    z = comps.astype(float)
    fac = w * (1.0 - np.exp(-z @ zeta))
    return np.array([float(fac @ z[:, 0]), float(fac @ z[:, 1])])


def _char_rhs(t, y, alpha, m1_of_t):
    zeta = y[0:2]
    fh = y[2:4]
    m1 = m1_of_t(t)
    b = np.zeros(2)
    c = np.zeros(2)
    for ch in range(3):
        if alpha[ch] == 0.0:
            continue
        K = K_MATRICES[ch]
        xi = XI[ch].astype(float)
        e = math.exp(-float(xi @ zeta))
        b += alpha[ch] * (K @ (fh + (1.0 - e) * (m1 - fh)))
        resid = m1 - fh
        c += 0.5 * alpha[ch] * (float(m1 @ K @ m1)
                                - float(resid @ K @ resid) * e) * xi
    return np.concatenate((CHARACTERISTIC_SIGN * b, c))


class CharacteristicEscape(RuntimeError):
    """A characteristic left the nonnegative quadrant."""


def laplace_characteristics(f0: DiscreteMeasure, alpha, zeta_points, t_end,
                            rtol=1e-11, max_iter=60):
    """Transform values f^(t_end, zeta) via the characteristics system.

    For each requested zeta the launch point is found by shooting so the
    characteristic lands on zeta at t_end.  Values whose characteristic
    leaves the nonnegative quadrant are reported as NaN.
    """
    alpha = validate_alpha(alpha)
    from .moments import extract_moments

    m0 = extract_moments(f0, order_max=2)

    def m1_rhs(t, y):
        return first_moment_rhs(y, alpha)

    m1_sol = solve_ivp(m1_rhs, (0.0, t_end), m0.m1, method="DOP853",
                       rtol=1e-12, atol=1e-14, dense_output=True)
    if not m1_sol.success:
        raise RuntimeError(f"first-moment integration failed: {m1_sol.message}")
    m1_of_t = lambda t: m1_sol.sol(t)

    def escape(t, y, *_):
        return min(y[0], y[1]) + 1e-12

    escape.terminal = True

    def land(zeta0):
        y0 = np.concatenate((zeta0, measure_transform(f0, zeta0)))
        sol = solve_ivp(_char_rhs, (0.0, t_end), y0, args=(alpha, m1_of_t),
                        method="DOP853", rtol=rtol, atol=1e-13, events=escape)
        if sol.t_events[0].size or not sol.success:
            raise CharacteristicEscape("characteristic left the quadrant")
        return sol.y[0:2, -1], sol.y[2:4, -1]

    results = []
    for zeta_target in np.atleast_2d(np.asarray(zeta_points, dtype=float)):
        zeta0 = zeta_target.copy()
        value = np.full(2, np.nan)
        try:
            for _ in range(max_iter):
                zt, fh = land(zeta0)
                gap = zeta_target - zt
                if np.abs(gap).max() <= 1e-12 * (1.0 + np.abs(zeta_target).max()):
                    value = fh
                    break
                zeta0 = zeta0 + gap
                if np.any(zeta0 < 0):
                    raise CharacteristicEscape("launch point left the quadrant")
            else:
                raise RuntimeError("shooting for the characteristic did not converge")
        except CharacteristicEscape:
            value = np.full(2, np.nan)
        results.append(value)
    return np.array(results)
