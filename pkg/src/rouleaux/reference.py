"""Closed-form reference solutions used as independent oracles.

Single-channel systems admit an exact reduction: N = M^2 + M^1 (x) xi_i
satisfies dN/dt = alpha_i N^T K_i N, which solves in elementary terms.
The arm-only system restricted to the line {a = 2} reduces to constant-
kernel coagulation with explicit number density.
"""

from __future__ import annotations

import numpy as np

from .kernels import XI
from .moments import MomentSet, validate_alpha


def case3_n_entries(m: MomentSet, alpha3, t):
    """Entries (a, b, c, d) of N(t) = M^2 + M^1 (x) xi_3 for alpha = (0,0,a3).

    The system is da/dt = a3 c^2, db/dt = a3 c d, dc/dt = a3 c d,
    dd/dt = a3 d^2; it blows up iff d0 = M^2_22(0) - 2 M^1_2(0) > 0.
    """
    N0 = m.m2 + np.outer(m.m1, XI[2].astype(float))
    a0, b0 = N0[0, 0], N0[0, 1]
    c0, d0 = N0[1, 0], N0[1, 1]
    den = 1.0 - alpha3 * d0 * t
    a = a0 + alpha3 * c0**2 * t / den
    b = b0 + alpha3 * c0 * d0 * t / den
    c = c0 / den
    d = d0 / den
    return a, b, c, d


def case3_m2(m: MomentSet, alpha3, t):
    """Exact M^2(t) for alpha = (0, 0, alpha3)."""
    a, b, c, d = case3_n_entries(m, alpha3, t)
    y2 = m.m1[1] / (1.0 + alpha3 * m.m1[1] * t)
    m1t = np.array([m.m1[0], y2])
    N = np.array([[a, b], [c, d]])
    return N - np.outer(m1t, XI[2].astype(float))


def case3_t_star(m: MomentSet, alpha3):
    d0 = m.m2[1, 1] - 2.0 * m.m1[1]
    return np.inf if d0 <= 0 else 1.0 / (alpha3 * d0)


def case1_m2(m: MomentSet, alpha1, t):
    """Exact M^2(t) for alpha = (alpha1, 0, 0) via N = M^2 + M^1 (x) xi_1."""
    N0 = m.m2 + np.outer(m.m1, XI[0].astype(float))
    a0, b0 = N0[0, 0], N0[0, 1]
    c0, d0 = N0[1, 0], N0[1, 1]
    den = 1.0 - alpha1 * a0 * t
    a = a0 / den
    b = b0 / den
    c = c0 - b0 + b0 / den
    if a0 != 0.0:
        d = d0 + (b0**2 / a0) * (1.0 / den - 1.0)
    else:
        d = d0 + alpha1 * b0**2 * t
    # first moments: x' = -alpha1 x^2, y' = (alpha1/2) x^2
    x0, y0 = m.m1
    xt = x0 / (1.0 + alpha1 * x0 * t)
    yt = y0 + 0.5 * (x0 - xt)
    m1t = np.array([xt, yt])
    N = np.array([[a, b], [c, d]])
    return N - np.outer(m1t, XI[0].astype(float))


def case1_t_star(m: MomentSet, alpha1):
    a0 = m.m2[0, 0] - 2.0 * m.m1[0]
    return np.inf if a0 <= 0 else 1.0 / (alpha1 * a0)


def constant_kernel_density(n0, alpha3, t):
    """Number density of the arm-only system on the line {a = 2}.

    The restriction is constant-kernel coagulation with K = 4 alpha3:
    N(t) = N0 / (1 + 2 alpha3 N0 t).
    """
    return n0 / (1.0 + 2.0 * alpha3 * n0 * t)


def weak_rhs_bruteforce(order, f, alpha):
    """Weak-form double sum over a discrete measure with phi = z^(x) order.

    Independent O(n^2) oracle for the moment right-hand sides; returns the
    full (2,)*order tensor (a float for order 0).  Vectorized over ordered
    support pairs but otherwise a literal transcription of the double sum.
    """
    from itertools import product

    alpha = validate_alpha(alpha)
    from .kernels import XI

    comps, w = f.arrays()
    n = comps.shape[0]
    if n == 0:
        return np.zeros((2,) * order) if order > 0 else 0.0
    z = comps.astype(float)
    ju, jv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ju, jv = ju.ravel(), jv.ravel()
    u, v = z[ju], z[jv]
    ww = w[ju] * w[jv]
    out = np.zeros((2,) * order) if order > 0 else 0.0
    for i in range(3):
        if alpha[i] == 0.0:
            continue
        if i == 0:
            rate = u[:, 0] * v[:, 0]
        elif i == 1:
            rate = 0.5 * (u[:, 0] * v[:, 1] + u[:, 1] * v[:, 0])
        else:
            rate = u[:, 1] * v[:, 1]
        pref = 0.5 * alpha[i] * ww * rate
        tgt = u + v + XI[i]
        if order == 0:
            out = out - float(pref.sum())
            continue
        for idx in product((0, 1), repeat=order):
            tp = up = vp = 1.0
            for b in idx:
                tp = tp * tgt[:, b]
                up = up * u[:, b]
                vp = vp * v[:, b]
            out[idx] += float(pref @ (tp - up - vp))
    return out
