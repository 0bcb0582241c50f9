"""Moment tensors, their exact ODE hierarchy and gelation detection.

The k-th moment of a measure f is the symmetric k-tensor integral of
z^(x) k.  The hierarchy closes downwards: d/dt M^k involves M^1 .. M^k
only (the would-be (k+1)-order terms of the merge rule cancel against the
loss terms).  The second moments satisfy a matrix Riccati equation whose
blow-up time T* is located through the linear (U, V) system with
M^2 = U V^{-1}; third and fourth moments are integrated in renormalized
form (T*-t)^3 M^3, (T*-t)^5 M^4 on a logarithmic clock so the trajectory
stays well conditioned arbitrarily close to T*.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import json
import math

import numpy as np
from scipy.integrate import solve_ivp

from . import tensors
from .kernels import K_MATRICES, XI, validate_alpha

# stacked packed layout for orders 1..4: offsets into a 14-vector
_OFFSET = {1: 0, 2: 2, 3: 5, 4: 9}
_STACK_LEN = 14


@dataclass
class MomentSet:
    """Moments M^0 .. M^4: scalar, vector, symmetric matrix, packed tensors."""

    m0: float
    m1: np.ndarray          # shape (2,)
    m2: np.ndarray          # shape (2, 2), symmetric
    m3: np.ndarray = None   # packed, shape (4,)
    m4: np.ndarray = None   # packed, shape (5,)

    def stacked(self):
        """Orders 1..4 as one packed vector (missing orders filled with 0)."""
        y = np.zeros(_STACK_LEN)
        y[0:2] = self.m1
        y[2:5] = [self.m2[0, 0], self.m2[0, 1], self.m2[1, 1]]
        if self.m3 is not None:
            y[5:9] = self.m3
        if self.m4 is not None:
            y[9:14] = self.m4
        return y


def extract_moments(f, order_max=4):
    """Moments of a DiscreteMeasure up to order_max (exact sparse sums)."""
    comps, w = f.arrays()
    if comps.shape[0] == 0:
        return MomentSet(0.0, np.zeros(2), np.zeros((2, 2)),
                         np.zeros(4) if order_max >= 3 else None,
                         np.zeros(5) if order_max >= 4 else None)
    x = comps[:, 0].astype(float)
    y = comps[:, 1].astype(float)
    m0 = float(np.sum(w))
    m1 = np.array([np.sum(w * x), np.sum(w * y)])
    m2 = np.zeros((2, 2))
    m3 = m4 = None
    if order_max >= 2:
        m2 = np.array([[np.sum(w * x * x), np.sum(w * x * y)],
                       [np.sum(w * x * y), np.sum(w * y * y)]])
    if order_max >= 3:
        m3 = np.array([np.sum(w * x ** (3 - k) * y**k) for k in range(4)])
    if order_max >= 4:
        m4 = np.array([np.sum(w * x ** (4 - k) * y**k) for k in range(5)])
    return MomentSet(m0, m1, m2, m3, m4)


# ---------------------------------------------------------------------------
# weak-form right-hand sides
#
# For phi = z^(x)n the weak form gives
#   d/dt M^n = 1/2 sum_i alpha_i II K_i(z,z') [ (z+z'+xi_i)^(x)n
#                                               - z^(x)n - z'^(x)n ] f f'.
# Expanding the pure power into words over {z, z', xi} and integrating each
# word turns the right side into contractions of lower moments; the pure-z
# and pure-z' words cancel exactly against the loss terms.
# ---------------------------------------------------------------------------


def number_density_rhs(m1, alpha):
    """d/dt M^0 = -1/2 sum_i alpha_i m1^T K_i m1."""
    alpha = validate_alpha(alpha)
    m1 = np.asarray(m1, dtype=float)
    return -0.5 * sum(alpha[i] * float(m1 @ K_MATRICES[i] @ m1) for i in range(3))


def first_moment_rhs(m1, alpha):
    """d/dt M^1 = sum_i (alpha_i/2) (m1^T K_i m1) xi_i."""
    alpha = validate_alpha(alpha)
    m1 = np.asarray(m1, dtype=float)
    out = np.zeros(2)
    for i in range(3):
        out += 0.5 * alpha[i] * float(m1 @ K_MATRICES[i] @ m1) * XI[i]
    return out


_FULL_TABLE_CACHE = {}


def _full_table(order):
    """Per-channel term lists (flat target index, ia, ib, coef) for the
    full-tensor assembly; built once per order."""
    if order in _FULL_TABLE_CACHE:
        return _FULL_TABLE_CACHE[order]
    channels = []
    for i in range(3):
        K = K_MATRICES[i]
        xi = XI[i].astype(float)
        flat, ia_l, ib_l, coef = [], [], [], []
        for word in product((0, 1, 2), repeat=order):
            nz = word.count(0)
            nzp = word.count(1)
            if nz == order or nzp == order:
                continue
            for idx in product((0, 1), repeat=order):
                z_twos = sum(b for b, s in zip(idx, word) if s == 0)
                zp_twos = sum(b for b, s in zip(idx, word) if s == 1)
                xifac = 1.0
                for b, s in zip(idx, word):
                    if s == 2:
                        xifac *= xi[b]
                if xifac == 0.0:
                    continue
                pos = 0
                for b in idx:
                    pos = 2 * pos + b
                for a in (0, 1):
                    for b in (0, 1):
                        if K[a, b] == 0.0:
                            continue
                        flat.append(pos)
                        ia_l.append(_OFFSET[1 + nz] + a + z_twos)
                        ib_l.append(_OFFSET[1 + nzp] + b + zp_twos)
                        coef.append(0.5 * K[a, b] * xifac)
        channels.append((np.array(flat, dtype=np.intp),
                         np.array(ia_l, dtype=np.intp),
                         np.array(ib_l, dtype=np.intp),
                         np.array(coef)))
    _FULL_TABLE_CACHE[order] = channels
    return channels


def _rhs_full(order, stacked, alpha):
    """Full-tensor assembly of d/dt M^order from packed moments 1..order."""
    out = np.zeros(2**order)
    for i in range(3):
        if alpha[i] == 0.0:
            continue
        flat, ia, ib, coef = _full_table(order)[i]
        out += alpha[i] * np.bincount(flat, weights=coef * stacked[ia] * stacked[ib],
                                      minlength=2**order)
    return out.reshape((2,) * order)


_TABLE_CACHE = {}


def _contraction_table(order):
    """Per-channel sparse tables turning stacked moments into packed rhs."""
    if order in _TABLE_CACHE:
        return _TABLE_CACHE[order]
    mult = tensors.multiplicities(order)
    channels = []
    for i in range(3):
        K = K_MATRICES[i]
        xi = XI[i].astype(float)
        terms = {}
        for word in product((0, 1, 2), repeat=order):
            nz = word.count(0)
            nzp = word.count(1)
            if nz == order or nzp == order:
                continue
            for idx in product((0, 1), repeat=order):
                slot = sum(idx)
                z_twos = sum(b for b, s in zip(idx, word) if s == 0)
                zp_twos = sum(b for b, s in zip(idx, word) if s == 1)
                xifac = 1.0
                for b, s in zip(idx, word):
                    if s == 2:
                        xifac *= xi[b]
                if xifac == 0.0:
                    continue
                for a in (0, 1):
                    for b in (0, 1):
                        if K[a, b] == 0.0:
                            continue
                        ia = _OFFSET[1 + nz] + a + z_twos
                        ib = _OFFSET[1 + nzp] + b + zp_twos
                        key = (slot, ia, ib)
                        terms[key] = terms.get(key, 0.0) + 0.5 * K[a, b] * xifac / mult[slot]
        slot_idx = np.array([k[0] for k in terms], dtype=np.intp)
        ia_idx = np.array([k[1] for k in terms], dtype=np.intp)
        ib_idx = np.array([k[2] for k in terms], dtype=np.intp)
        coef = np.array(list(terms.values()))
        channels.append((slot_idx, ia_idx, ib_idx, coef))
    _TABLE_CACHE[order] = channels
    return channels


def _rhs_packed(order, stacked, alpha):
    """Packed d/dt M^order via the cached contraction tables."""
    out = np.zeros(order + 1)
    for i in range(3):
        if alpha[i] == 0.0:
            continue
        slot_idx, ia, ib, coef = _contraction_table(order)[i]
        out += alpha[i] * np.bincount(slot_idx, weights=coef * stacked[ia] * stacked[ib],
                                      minlength=order + 1)
    return out


def _stack(m1, m2=None, m3=None, m4=None):
    y = np.zeros(_STACK_LEN)
    y[0:2] = np.asarray(m1, dtype=float)
    if m2 is not None:
        m2 = np.asarray(m2, dtype=float)
        y[2:5] = [m2[0, 0], 0.5 * (m2[0, 1] + m2[1, 0]), m2[1, 1]]
    if m3 is not None:
        y[5:9] = np.asarray(m3, dtype=float)
    if m4 is not None:
        y[9:14] = np.asarray(m4, dtype=float)
    return y


class AsymmetryError(RuntimeError):
    """Raised when an assembled moment rhs fails its symmetry diagnostic."""


def _checked_pack(full, tol=1e-13):
    norm = float(np.sqrt(np.sum(full**2)))
    resid = tensors.asymmetry(full)
    if norm > 0 and resid > tol * norm:
        raise AsymmetryError(f"asymmetry residual {resid:.3e} exceeds {tol:.0e} * {norm:.3e}")
    return tensors.pack(tensors.symmetrize(full))


def second_moment_rhs(m2, m1, alpha):
    """d/dt M^2 (matrix Riccati right side), assembled from the weak form."""
    alpha = validate_alpha(alpha)
    full = _rhs_full(2, _stack(m1, m2=m2), alpha)
    packed = _checked_pack(full)
    return np.array([[packed[0], packed[1]], [packed[1], packed[2]]])


def third_moment_rhs(m3, m2, m1, alpha):
    """d/dt M^3 as a packed symmetric 3-tensor."""
    alpha = validate_alpha(alpha)
    return _checked_pack(_rhs_full(3, _stack(m1, m2=m2, m3=m3), alpha))


def fourth_moment_rhs(m4, m3, m2, m1, alpha):
    """d/dt M^4 as a packed symmetric 4-tensor."""
    alpha = validate_alpha(alpha)
    return _checked_pack(_rhs_full(4, _stack(m1, m2=m2, m3=m3, m4=m4), alpha))


def riccati_coefficients(m1, alpha):
    """Matrices (K, A, B) with d/dt M^2 = M^2 K M^2 + M^2 A + A^T M^2 + B.

    B reduces to (1/2) sum_i alpha_i (m1^T K_i m1) xi_i (x) xi_i, which is
    the symmetric form required by the Riccati ansatz.
    """
    alpha = validate_alpha(alpha)
    m1 = np.asarray(m1, dtype=float)
    K = sum(alpha[i] * K_MATRICES[i] for i in range(3))
    A = np.zeros((2, 2))
    B = np.zeros((2, 2))
    for i in range(3):
        if alpha[i] == 0.0:
            continue
        xi = XI[i].astype(float)
        A += alpha[i] * K_MATRICES[i] @ np.outer(m1, xi)
        B += 0.5 * alpha[i] * float(m1 @ K_MATRICES[i] @ m1) * np.outer(xi, xi)
    return K, A, B


def leading_transport_operator(order, m2_like, alpha):
    """The bilinear block T -> (order) P_n A(T, S) of the order-n transport.

    With S = theta (x) theta and theta^T K theta = 1 its matrix in the
    theta / theta-perp basis is upper bidiagonal with diagonal
    (order, ..., 1, 0) and superdiagonal (beta, 2 beta, ...).
    Input and output are packed; m2_like is a symmetric 2x2 matrix.
    """
    alpha = validate_alpha(alpha)
    K = sum(alpha[i] * K_MATRICES[i] for i in range(3))
    S = np.asarray(m2_like, dtype=float)

    def apply(packed):
        J = tensors.unpack(packed)
        full = np.zeros((2,) * order)
        for idx in product((0, 1), repeat=order):
            acc = 0.0
            for a in (0, 1):
                for b in (0, 1):
                    if K[a, b] == 0.0:
                        continue
                    acc += K[a, b] * S[idx[0], a] * J[(b,) + idx[1:]]
            full[idx] = acc
        return tensors.pack(tensors.symmetrize(order * full))

    return apply


# ---------------------------------------------------------------------------
# gelation detection and trajectories
# ---------------------------------------------------------------------------


@dataclass
class GelationReport:
    gelates: bool
    branch: str
    t_star: float               # math.inf when no gelation
    theta: np.ndarray = None
    c0: float = None
    k0: float = None
    omega_theta: np.ndarray = None
    residuals: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "gelates": self.gelates,
            "branch": self.branch,
            "t_star": None if math.isinf(self.t_star) else self.t_star,
            "theta": None if self.theta is None else [float(v) for v in self.theta],
            "c0": self.c0,
            "k0": self.k0,
            "omega_theta": None if self.omega_theta is None
            else [float(v) for v in self.omega_theta],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class BlowUpSearchError(RuntimeError):
    """Raised when a gelling system shows no det V root within the horizon cap."""


def classify_gelation(m: MomentSet, alpha):
    """Gelation branch from alpha and the initial moments.

    The alpha3-only criterion (blow-up iff int y(y-2) f0 > 0) has an exact
    mirror for alpha1-only systems: N = M^2 + M^1 (x) xi_1 satisfies
    dN/dt = alpha_1 N^T K_1 N whose (1,1) entry obeys the scalar Riccati
    equation q' = alpha_1 q^2 with q = int x(x-2) f0, so data supported on
    {x = 2} never gel under channel 1 alone.
    """
    alpha = validate_alpha(alpha)
    a1, a2, a3 = alpha
    q_x = float(m.m2[0, 0] - 2.0 * m.m1[0])   # int x(x-2) f0
    q_y = float(m.m2[1, 1] - 2.0 * m.m1[1])   # int y(y-2) f0
    if a2 > 0 or (a1 > 0 and a3 > 0):
        return True, "alpha12"
    if a1 > 0:
        return (True, "alpha1_cond") if q_x > 0 else (False, "no_gel")
    return (True, "alpha3_cond") if q_y > 0 else (False, "no_gel")


def _hamiltonian_rhs(t, y, alpha):
    m1 = y[1:3]
    U = y[3:7].reshape(2, 2)
    V = y[7:11].reshape(2, 2)
    K, A, B = riccati_coefficients(m1, alpha)
    dm0 = number_density_rhs(m1, alpha)
    dm1 = first_moment_rhs(m1, alpha)
    dU = A.T @ U + B @ V
    dV = -K @ U - A @ V
    return np.concatenate(([dm0], dm1, dU.ravel(), dV.ravel()))


def _hamiltonian_y0(m: MomentSet):
    return np.concatenate(([m.m0], m.m1, m.m2.ravel(), np.eye(2).ravel()))


def detect_blow_up(f0_moments: MomentSet, alpha, horizon=None, max_doublings=60):
    """Classify gelation and locate T* as the first root of det V(t)."""
    alpha = validate_alpha(alpha)
    if f0_moments.m0 <= 0:
        raise ValueError("initial measure must be nonzero")
    gelates, branch = classify_gelation(f0_moments, alpha)
    if not gelates:
        return GelationReport(False, branch, math.inf)

    def det_v(t, y, *_):
        return y[7] * y[10] - y[8] * y[9]

    det_v.terminal = True
    det_v.direction = -1

    y0 = _hamiltonian_y0(f0_moments)
    K = sum(alpha[i] * K_MATRICES[i] for i in range(3))
    scale = float(np.sqrt(np.sum(K**2)) * np.sqrt(np.sum(f0_moments.m2**2)))
    hor = horizon if horizon is not None else 4.0 / max(scale, 1e-30)
    for _ in range(max_doublings):
        sol = solve_ivp(_hamiltonian_rhs, (0.0, hor), y0, args=(alpha,),
                        method="DOP853", rtol=1e-12, atol=1e-12, events=det_v,
                        dense_output=False)
        if sol.t_events[0].size:
            return GelationReport(True, branch, float(sol.t_events[0][0]))
        hor *= 2.0
    raise BlowUpSearchError(
        f"classified as gelling ({branch}) but det V has no root up to t={hor:.3e}")


@dataclass
class MomentTrajectory:
    """Moment trajectory with dense evaluators valid up to the resolved end."""

    alpha: np.ndarray
    gelates: bool
    t_star: float
    times: np.ndarray
    sets: list
    _sol: object = None       # dense solve_ivp solution
    _mode: str = "direct"     # "direct" (t clock) or "sigma" (gel clock)

    def _eval_state(self, t):
        if self._mode == "sigma":
            h = self.t_star - t
            if h <= 0:
                raise ValueError(f"t={t} is at or past T*={self.t_star}")
            sigma = -math.log(h)
            return self._sol.sol(np.clip(sigma, self._sol.t[0], self._sol.t[-1]))
        return self._sol.sol(t)

    def moments_at(self, t):
        y = self._eval_state(t)
        if self._mode == "sigma":
            h = self.t_star - t
            U = y[3:7].reshape(2, 2)
            V = y[7:11].reshape(2, 2)
            m2 = U @ np.linalg.inv(V)
            m2 = 0.5 * (m2 + m2.T)
            m3 = y[11:15] / h**3
            m4 = y[15:20] / h**5
            return MomentSet(float(y[0]), y[1:3].copy(), m2, m3, m4)
        m2 = np.array([[y[3], y[4]], [y[4], y[5]]])
        return MomentSet(float(y[0]), y[1:3].copy(), m2, y[6:10].copy(), y[10:15].copy())

    def m2_at(self, t):
        return self.moments_at(t).m2

    def rescaled_w_at(self, t):
        """(W3, W4) = ((T*-t)^3 M^3, (T*-t)^5 M^4) without forming M^k."""
        if self._mode != "sigma":
            raise ValueError("renormalized moments only exist on gelling trajectories")
        y = self._eval_state(t)
        return y[11:15].copy(), y[15:20].copy()


def _direct_rhs(t, y, alpha):
    m1 = y[1:3]
    stacked = np.concatenate((m1, y[3:6], y[6:10], y[10:15]))
    dm0 = number_density_rhs(m1, alpha)
    dm1 = first_moment_rhs(m1, alpha)
    d2 = _rhs_packed(2, stacked, alpha)
    d3 = _rhs_packed(3, stacked, alpha)
    d4 = _rhs_packed(4, stacked, alpha)
    return np.concatenate(([dm0], dm1, d2, d3, d4))


def _sigma_rhs(sigma, y, alpha):
    h = math.exp(-sigma)
    m1 = y[1:3]
    U = y[3:7].reshape(2, 2)
    V = y[7:11].reshape(2, 2)
    Vinv_scaled = np.array([[V[1, 1], -V[0, 1]], [-V[1, 0], V[0, 0]]])
    det = V[0, 0] * V[1, 1] - V[0, 1] * V[1, 0]
    m2 = U @ Vinv_scaled / det
    m2 = 0.5 * (m2 + m2.T)
    W3 = y[11:15]
    W4 = y[15:20]
    m3 = W3 / h**3
    m4 = W4 / h**5
    stacked = _stack(m1, m2=m2, m3=m3, m4=m4)

    K, A, B = riccati_coefficients(m1, alpha)
    dm0 = number_density_rhs(m1, alpha)
    dm1 = first_moment_rhs(m1, alpha)
    dU = A.T @ U + B @ V
    dV = -K @ U - A @ V
    d3 = _rhs_packed(3, stacked, alpha)
    d4 = _rhs_packed(4, stacked, alpha)
    dW3 = -3.0 * W3 + h**4 * d3
    dW4 = -5.0 * W4 + h**6 * d4
    return np.concatenate((h * np.concatenate(([dm0], dm1, dU.ravel(), dV.ravel())),
                           dW3, dW4))


def integrate_moment_system(f0_moments: MomentSet, alpha, t_end=None,
                            n_checkpoints=33, resolve=1e-6, rtol=1e-11):
    """Integrate the coupled M^0..M^4 system.

    Gelling data are integrated on the logarithmic clock sigma = -ln(T*-t)
    with M^2 carried as U V^{-1} and M^3, M^4 renormalized, stopping at
    (T*-t)/T* = resolve.  Non-gelling data are integrated directly to t_end.
    """
    alpha = validate_alpha(alpha)
    if f0_moments.m3 is None or f0_moments.m4 is None:
        raise ValueError("moment integration requires moments up to order 4")
    report = detect_blow_up(f0_moments, alpha)

    if report.gelates:
        t_star = report.t_star
        if t_end is not None and t_end >= t_star:
            raise ValueError(f"t_end={t_end} must be below T*={t_star}")
        h_end = (t_star - t_end) if t_end is not None else resolve * t_star
        s0 = -math.log(t_star)
        s1 = -math.log(h_end)
        y0 = np.concatenate((_hamiltonian_y0(f0_moments),
                             t_star**3 * f0_moments.m3,
                             t_star**5 * f0_moments.m4))
        sol = solve_ivp(_sigma_rhs, (s0, s1), y0, args=(alpha,),
                        method="DOP853", rtol=rtol, atol=1e-13, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"moment integration failed: {sol.message}")
        taus = np.linspace(0.0, s1 - s0, n_checkpoints)
        times = t_star * (1.0 - np.exp(-taus))
        traj = MomentTrajectory(alpha, True, t_star, times, [], sol, "sigma")
    else:
        if t_end is None:
            raise ValueError("t_end is required for non-gelling data")
        y0 = np.concatenate(([f0_moments.m0], f0_moments.m1,
                             _stack(f0_moments.m1, f0_moments.m2)[2:5],
                             f0_moments.m3, f0_moments.m4))
        sol = solve_ivp(_direct_rhs, (0.0, t_end), y0, args=(alpha,),
                        method="DOP853", rtol=rtol, atol=1e-13, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"moment integration failed: {sol.message}")
        times = np.linspace(0.0, t_end, n_checkpoints)
        traj = MomentTrajectory(alpha, False, math.inf, times, [], sol, "direct")

    traj.sets = [traj.moments_at(t) for t in times]
    return traj


def integrate_m2_direct(f0_moments: MomentSet, alpha, t_end, rtol=1e-11):
    """Direct integration of (m0, m1, m2); reference for the U V^{-1} route."""
    alpha = validate_alpha(alpha)

    def rhs(t, y):
        m1 = y[1:3]
        stacked = _stack(m1, m2=np.array([[y[3], y[4]], [y[4], y[5]]]))
        return np.concatenate(([number_density_rhs(m1, alpha)],
                               first_moment_rhs(m1, alpha),
                               _rhs_packed(2, stacked, alpha)))

    y0 = np.concatenate(([f0_moments.m0], f0_moments.m1,
                         _stack(f0_moments.m1, f0_moments.m2)[2:5]))
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853",
                    rtol=rtol, atol=1e-13, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"direct m2 integration failed: {sol.message}")
    return sol


def extract_theta_c0(traj: MomentTrajectory, levels=17):
    """Localization direction theta, tail constant c0 and K0 = c0 |theta|_1.

    theta (x) theta is obtained by Richardson extrapolation of
    (T*-t) M^2(t) on the geometric grid T*-t_k = 2^{-k} T*/8; c0 from the
    renormalized third moment at the resolved end.
    """
    if not traj.gelates:
        raise ValueError("theta extraction requires a gelling trajectory")
    t_star = traj.t_star
    hs = t_star / 8.0 * 0.5 ** np.arange(levels)
    h_min = math.exp(-traj._sol.t[-1])
    hs = hs[hs >= 0.999 * h_min]
    X = [h * traj.m2_at(t_star - h) for h in hs]
    # Richardson on expansions in h with ratio 2
    rows = [np.array(X)]
    for lev in range(1, 5):
        prev = rows[-1]
        fac = 2.0**lev
        rows.append((fac * prev[1:] - prev[:-1]) / (fac - 1.0))
    est = rows[-1][-1]
    est = 0.5 * (est + est.T)
    evals, evecs = np.linalg.eigh(est)
    lam, v = evals[-1], evecs[:, -1]
    if v[0] + v[1] < 0:
        v = -v
    theta = math.sqrt(max(lam, 0.0)) * v
    rank1_resid = abs(evals[0]) / max(lam, 1e-300)

    mult3 = tensors.multiplicities(3)
    t3 = tensors.outer_power(theta, 3)

    def c0_at(h):
        W3, _ = traj.rescaled_w_at(t_star - h)
        return float(np.sum(mult3 * W3) / np.sum(mult3 * t3))

    c0_fine = c0_at(h_min * 1.001)
    c0_coarse = c0_at(2 * h_min)
    c0 = 2.0 * c0_fine - c0_coarse
    W3_end, _ = traj.rescaled_w_at(t_star - h_min * 1.001)
    resid3 = tensors.frobenius(W3_end - c0 * t3) / max(tensors.frobenius(W3_end), 1e-300)
    k0 = c0 * float(abs(theta[0]) + abs(theta[1]))
    residuals = {"rank1": float(rank1_resid), "m3_rank1": float(resid3)}
    return theta, c0, k0, residuals


def analyze_gelation(f0_moments: MomentSet, alpha, resolve=1e-6):
    """Full gelation report: classification, T*, theta, c0, K0."""
    report = detect_blow_up(f0_moments, alpha)
    if not report.gelates:
        return report, None
    traj = integrate_moment_system(f0_moments, alpha, resolve=resolve)
    theta, c0, k0, residuals = extract_theta_c0(traj)
    report.theta = theta
    report.c0 = c0
    report.k0 = k0
    norm1 = float(abs(theta[0]) + abs(theta[1]))
    report.omega_theta = theta / norm1 if norm1 > 0 else theta
    report.residuals = residuals
    return report, traj


def check_dichotomy(traj: MomentTrajectory, growth_factor=100.0):
    """Late-time behaviour of the diagonal second moments.

    Near a blow-up either both diagonal entries diverge or both stay
    bounded; mixed behaviour indicates an inconsistency.
    """
    m2_first = traj.sets[0].m2
    m2_last = traj.sets[-1].m2
    growth = np.array([m2_last[0, 0] / max(m2_first[0, 0], 1e-300),
                       m2_last[1, 1] / max(m2_first[1, 1], 1e-300)])
    diverging = growth > growth_factor
    if diverging.all():
        branch = "both_diverge"
    elif not diverging.any():
        branch = "both_bounded"
    else:
        branch = "mixed"
    return {"branch": branch,
            "growth": growth.tolist(),
            "last_m2_11": float(m2_last[0, 0]),
            "last_m2_22": float(m2_last[1, 1]),
            "last_time": float(traj.times[-1])}
