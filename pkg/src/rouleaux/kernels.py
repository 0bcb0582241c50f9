"""Coagulation kernels, reaction offsets and truncated kernels.

Clusters live on the lattice S = {(c, a) : c >= 2, a >= 2} where c is the
face count and a the arm count.  The implied size s = a + 2c - 3 is an
integer that the three reaction channels conserve (channel 3 adds one edge,
so s1 + s2 + 1).  All three kernels are bilinear forms z^T K_i z' of
homogeneity 2.
"""

from __future__ import annotations

import numpy as np

# reaction offsets xi_i: the merge rule of channel i is (z, z') -> z + z' + xi_i
XI = (
    np.array([-2, 1], dtype=np.int64),
    np.array([-1, -1], dtype=np.int64),
    np.array([0, -2], dtype=np.int64),
)

# bilinear-form matrices of the three channels
K_MATRICES = (
    np.array([[1.0, 0.0], [0.0, 0.0]]),
    np.array([[0.0, 0.5], [0.5, 0.0]]),
    np.array([[0.0, 0.0], [0.0, 1.0]]),
)

CHANNELS = (1, 2, 3)

# 1-norm loss of each merge rule, zeta_i = -(xi_i1 + xi_i2) in {1, 2}
ZETA = (1, 2, 2)


class ChannelError(ValueError):
    """Raised for a reaction-channel index outside {1, 2, 3}."""


def _check_channel(i):
    if i not in (1, 2, 3):
        raise ChannelError(f"channel index must be 1, 2 or 3, got {i!r}")


def validate_composition(v):
    """Check that v = (c, a) lies on the lattice and return it as an int tuple."""
    c, a = v
    ci, ai = int(c), int(a)
    if ci != c or ai != a:
        raise ValueError(f"composition must be integer, got {v!r}")
    if ci < 2 or ai < 2:
        raise ValueError(f"composition must satisfy c >= 2 and a >= 2, got {v!r}")
    return (ci, ai)


def size(v):
    """Implied cluster size s = a + 2c - 3 (number of tree edges)."""
    c, a = v
    return a + 2 * c - 3


def validate_alpha(alpha):
    """Validate channel weights (nonnegative, not all zero); returns float array."""
    arr = np.asarray(alpha, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"alpha must have 3 components, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError(f"alpha components must be nonnegative, got {alpha!r}")
    if not np.any(arr > 0):
        raise ValueError("alpha must have at least one positive component")
    return arr


def reaction_offset(i):
    """Offset vector xi_i of reaction channel i."""
    _check_channel(i)
    return XI[i - 1].copy()


def kernel_eval(i, z, zp):
    """Rate K_i(z, z') = z^T K_i z' of channel i for clusters z, z'."""
    _check_channel(i)
    x, y = float(z[0]), float(z[1])
    xp, yp = float(zp[0]), float(zp[1])
    if i == 1:
        return x * xp
    if i == 2:
        return 0.5 * (x * yp + xp * y)
    return y * yp


def combined_kernel(alpha):
    """Weighted kernel matrix K = sum_i alpha_i K_i."""
    arr = validate_alpha(alpha)
    return arr[0] * K_MATRICES[0] + arr[1] * K_MATRICES[1] + arr[2] * K_MATRICES[2]


def apply_reaction(i, z, zp):
    """Composition produced when z and z' merge through channel i.

    The result (c1+c2, a1+a2) + xi_i stays on the lattice because
    c1+c2-2 >= 2 and a1+a2-2 >= 2 for lattice inputs.
    """
    _check_channel(i)
    xi = XI[i - 1]
    return (z[0] + zp[0] + int(xi[0]), z[1] + zp[1] + int(xi[1]))


def ramp_depth(R):
    """Depression depth of the cutoff ramp, small enough that the kernel
    truncation error on the transition shell stays below exp(-R)."""
    # on the shell K <= 4R^2 and 1 - chi chi' <= 2 eps, so K - K^R <= e^-R
    return np.exp(-R) / (2.0 * (1.0 + 4.0 * R * R))


def chi_cutoff(s, R):
    """Cutoff profile in the sup-norm radius s = |z|_inf.

    Equals 1 for s <= R, dips by at most ramp_depth(R) on (R, 2R] through a
    C^1 smoothstep, and is 0 for s > 2R.  The jump across s = 2R is forced:
    no continuous profile can keep K - K^R below exp(-R) on the whole shell
    while vanishing at its outer edge.
    """
    if R <= 0:
        raise ValueError(f"cutoff R must be positive, got {R!r}")
    s = np.asarray(s, dtype=float)
    u = np.clip((s - R) / R, 0.0, 1.0)
    val = 1.0 - ramp_depth(R) * (u * u * (3.0 - 2.0 * u))
    return np.where(s > 2.0 * R, 0.0, val)


def truncated_kernel_eval(i, R, z, zp):
    """Truncated kernel K_i^(R)(z, z') = K_i(z, z') chi(|z|_inf) chi(|z'|_inf).

    Exactly K_i when both clusters are in [0, R]^2, exactly 0 when either
    leaves [0, 2R]^2, and within exp(-R) of K_i in between.
    """
    _check_channel(i)
    if R <= 0:
        raise ValueError(f"cutoff R must be positive, got {R!r}")
    s = max(abs(float(z[0])), abs(float(z[1])))
    sp = max(abs(float(zp[0])), abs(float(zp[1])))
    return kernel_eval(i, z, zp) * float(chi_cutoff(s, R)) * float(chi_cutoff(sp, R))
