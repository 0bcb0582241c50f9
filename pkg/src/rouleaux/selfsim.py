"""Self-similar rescaling, localization diagnostics and polar projection.

A snapshot f(t) is mapped to F(tau) with points eta = z (T*-t)^2 and
weights w (T*-t)^-3, tau = -ln(1 - t/T*); moments then obey
M^k(F) = (T*-t)^(2k-3) M^k(f) exactly.  Radii use the 1-norm and
direction deviations the Euclidean norm throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import K_MATRICES, validate_alpha
from .measure import DiscreteMeasure

# merge-offset 1-norm losses zeta_i = -(xi_i1 + xi_i2)
_ZETA = np.array([1.0, 2.0, 2.0])


@dataclass
class ScaledSnapshot:
    """Rescaled point cloud F(tau) with its second-moment normalizer Z."""

    tau: float
    t: float
    t_star: float
    eta: np.ndarray       # (n, 2)
    weights: np.ndarray   # (n,)
    Z: float

    def moment_matrix(self):
        """Second moments of F as a 2x2 matrix."""
        e, w = self.eta, self.weights
        return np.array([
            [np.sum(w * e[:, 0] ** 2), np.sum(w * e[:, 0] * e[:, 1])],
            [np.sum(w * e[:, 0] * e[:, 1]), np.sum(w * e[:, 1] ** 2)]])

    def moment_packed(self, order):
        """Packed symmetric moment tensor of F of the given order."""
        e, w = self.eta, self.weights
        return np.array([np.sum(w * e[:, 0] ** (order - k) * e[:, 1] ** k)
                         for k in range(order + 1)])


def rescale(f: DiscreteMeasure, t, t_star) -> ScaledSnapshot:
    """Self-similar change of variables applied to a lattice snapshot."""
    if not 0 <= t < t_star:
        raise ValueError(f"need 0 <= t < T*, got t={t}, T*={t_star}")
    comps, w = f.arrays()
    h = t_star - t
    eta = comps.astype(float) * h**2
    weights = w / h**3
    r1 = eta.sum(axis=1)
    Z = float(np.sum(weights * r1**2))
    tau = -math.log(1.0 - t / t_star)
    return ScaledSnapshot(tau, float(t), float(t_star), eta, weights, Z)


def localization_integral(F: ScaledSnapshot, theta, p):
    """Directional concentration integral
    sum w |eta|_1^p || eta/|eta|_1 - theta/|theta|_1 ||^2."""
    if p not in (2, 3):
        raise ValueError(f"p must be 2 or 3, got {p!r}")
    theta = np.asarray(theta, dtype=float)
    n1 = float(np.abs(theta).sum())
    if n1 == 0.0:
        raise ValueError("theta must be nonzero")
    omega_t = theta / n1
    r = F.eta.sum(axis=1)
    pos = r > 0
    dirs = F.eta[pos] / r[pos, None]
    dev2 = np.sum((dirs - omega_t) ** 2, axis=1)
    return float(np.sum(F.weights[pos] * r[pos] ** p * dev2))


def localization_p2_from_moments(m2F, theta):
    """Moment identity for the p = 2 localization integral."""
    theta = np.asarray(theta, dtype=float)
    m2F = np.asarray(m2F, dtype=float)
    n1 = float(np.abs(theta).sum())
    n2sq = float(theta @ theta)
    return (float(np.trace(m2F)) + (n2sq / n1**2) * float(m2F.sum())
            - (2.0 / n1) * float(m2F.sum(axis=1) @ theta))


def localization_p3_from_moments(m3F_packed, theta):
    """Moment identity for the p = 3 localization integral.

    The integrand expands into cubic monomials |eta| ||eta||^2,
    |eta|^3 and |eta|^2 (eta . theta), each a fixed contraction of the
    packed third moment.
    """
    theta = np.asarray(theta, dtype=float)
    m3 = np.asarray(m3F_packed, dtype=float)
    n1 = float(np.abs(theta).sum())
    n2sq = float(theta @ theta)
    t1 = np.array([1.0, 1.0, 1.0, 1.0])
    t2 = np.array([1.0, 3.0, 3.0, 1.0])
    t3 = np.array([theta[0], 2 * theta[0] + theta[1],
                   theta[0] + 2 * theta[1], theta[1]])
    return float(t1 @ m3 + (n2sq / n1**2) * (t2 @ m3) - (2.0 / n1) * (t3 @ m3))


@dataclass
class RadialMeasure:
    """Weighted points on r > 0 normalized so that sum w r^2 = 1."""

    r: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        norm = float(np.sum(self.weights * self.r**2))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"radial measure not normalized: sum w r^2 = {norm!r}")


@dataclass
class PolarMeasure:
    """Pushforward G of F to (r, omega) coordinates, unnormalized."""

    r: np.ndarray
    omega: np.ndarray     # (n, 2), 1-norm unit simplex points
    weights: np.ndarray
    Z: float


def polar_project(F: ScaledSnapshot):
    """Radial distribution g = P_# G / Z and the full polar measure G."""
    if F.Z <= 0:
        raise ValueError("snapshot has Z <= 0")
    r = F.eta.sum(axis=1)
    pos = r > 0
    r = r[pos]
    w = F.weights[pos]
    omega = F.eta[pos] / r[:, None]
    g = RadialMeasure(r, w / F.Z)
    G = PolarMeasure(r, omega, w, F.Z)
    return g, G


def merge_shift(tau, t_star):
    """Radial merge shifts delta_i(tau) = zeta_i T*^2 e^(-2 tau).

    The merge rule in eta-coordinates is (eta, eta') -> eta + eta'
    + xi_i (T*-t)^2 and (T*-t)^2 = T*^2 e^(-2 tau), so the radial loss
    carries a factor T*^2, not 1/T*^2.
    """
    return _ZETA * t_star**2 * math.exp(-2.0 * tau)


def _radial_sums(g_r, g_w, rho):
    """Weighted exponential sums used by the separable double integrals."""
    E = np.exp(-np.outer(rho, g_r))                 # (nrho, n)
    s_r = float(np.sum(g_w * g_r))
    s_re = E @ (g_w * g_r)                          # sum w r e^-rho r
    s_r2e = E @ (g_w * g_r**2)                      # sum w r^2 e^-rho r
    s_r1m = s_r - s_re                              # sum w r (1 - e^-rho r)
    return s_r, s_re, s_r2e, s_r1m


def projected_equation_residual(snapshots, alpha, theta, index, rho_probes=(0.5, 1.0, 2.0, 4.0)):
    """Defect of the projected radial equation at snapshots[index].

    Both sides are evaluated for the dictionary of test functions
    phi(r) = 1 - e^(-r rho); the time derivative uses centered differences
    on the snapshot grid.  Returns the largest absolute defect.
    """
    alpha = validate_alpha(alpha)
    theta = np.asarray(theta, dtype=float)
    if not 1 <= index < len(snapshots) - 1:
        raise ValueError("index must be interior to the snapshot window")
    if all(s.eta.shape[0] == 0 for s in snapshots):
        return 0.0
    Fm, F0, Fp = snapshots[index - 1], snapshots[index], snapshots[index + 1]
    dtau_m = F0.tau - Fm.tau
    dtau_p = Fp.tau - F0.tau
    if not math.isclose(dtau_m, dtau_p, rel_tol=1e-8):
        raise ValueError("snapshots must be uniformly spaced in tau")
    rho = np.asarray(rho_probes, dtype=float)

    def pair(F):
        g, _ = polar_project(F)
        E = np.exp(-np.outer(rho, g.r))
        return (1.0 - E) @ g.weights

    lhs = (pair(Fp) - pair(Fm)) / (dtau_m + dtau_p)

    g, G = polar_project(F0)
    zdot = (Fp.Z - Fm.Z) / (dtau_m + dtau_p)
    E = np.exp(-np.outer(rho, g.r))
    phi_g = (1.0 - E) @ g.weights
    rdphi_g = rho * (E @ (g.weights * g.r))
    rhs = 3.0 * phi_g - 2.0 * rdphi_g - (zdot / F0.Z) * phi_g

    n1 = float(np.abs(theta).sum())
    delta = merge_shift(F0.tau, F0.t_star)
    # concentrated-kernel part, against g x g
    for ch in range(3):
        if alpha[ch] == 0.0:
            continue
        coef = alpha[ch] * F0.Z * float(theta @ K_MATRICES[ch] @ theta) / n1**2
        rhs += 0.5 * coef * _dbar_pair(g.r, g.weights, g.r, g.weights, rho, delta[ch])
    # kernel-deviation part, against G x G
    omega_t = theta / n1
    for ch in range(3):
        if alpha[ch] == 0.0:
            continue
        coef = alpha[ch] / F0.Z
        k_theta = float(omega_t @ K_MATRICES[ch] @ omega_t)
        K = K_MATRICES[ch]
        acc = np.zeros_like(rho)
        for a in (0, 1):
            for b in (0, 1):
                if K[a, b] == 0.0:
                    continue
                acc += K[a, b] * _dbar_pair(G.r, G.weights * G.omega[:, a],
                                            G.r, G.weights * G.omega[:, b],
                                            rho, delta[ch])
        acc -= k_theta * _dbar_pair(G.r, G.weights, G.r, G.weights, rho, delta[ch])
        rhs += 0.5 * coef * acc
    return float(np.abs(lhs - rhs).max())


def _dbar_pair(r1, w1, r2, w2, rho, delta):
    """Separable evaluation of II r r' Dbar_i phi(r, r') d mu d mu' for
    phi(r) = 1 - e^(-r rho); requires r + r' >= delta on the support."""
    if (r1.size and r2.size) and (r1.min() + r2.min() < delta):
        raise ValueError("merge shift exceeds the smallest radius pair")
    E1 = np.exp(-np.outer(rho, r1))
    E2 = np.exp(-np.outer(rho, r2))
    s1_r = float(np.sum(w1 * r1))
    s2_r = float(np.sum(w2 * r2))
    s1_re = E1 @ (w1 * r1)
    s2_re = E2 @ (w2 * r2)
    edr = np.exp(delta * rho)
    # r r' [phi(r+r'-delta) - phi(r) - phi(r')]
    #   = r r' [e^-rho r + e^-rho r' - e^(delta rho) e^-rho(r+r') - 1]
    return (s1_re * s2_r + s1_r * s2_re - edr * s1_re * s2_re - s1_r * s2_r)
