"""Symmetric tensors over R^2 in packed component form.

A symmetric n-tensor over R^2 has n+1 independent components; we store them
packed by the number of 2-indices, so packed[k] is the value at any index
word with k twos.  Multiplicities binom(n, k) convert packed sums into sums
over the full index set (norms, contractions against full tensors).
"""

from __future__ import annotations

from itertools import permutations, product
from math import comb

import numpy as np


def multiplicities(n):
    """Number of full index words per packed slot, binom(n, k) for k twos."""
    return np.array([comb(n, k) for k in range(n + 1)], dtype=float)


def pack(full):
    """Packed components of an already-symmetric full tensor of shape (2,)*n."""
    full = np.asarray(full, dtype=float)
    n = full.ndim
    return np.array([full[(1,) * k + (0,) * (n - k)] for k in range(n + 1)])


def unpack(packed):
    """Full (2,)*n tensor from packed components."""
    packed = np.asarray(packed, dtype=float)
    n = packed.size - 1
    full = np.empty((2,) * n)
    for idx in product((0, 1), repeat=n):
        full[idx] = packed[sum(idx)]
    return full


def symmetrize(full):
    """Projection P_n onto symmetric tensors (average over index permutations)."""
    full = np.asarray(full, dtype=float)
    n = full.ndim
    out = np.zeros_like(full)
    perms = list(permutations(range(n)))
    for p in perms:
        out += np.transpose(full, p)
    return out / len(perms)


def asymmetry(full):
    """Frobenius distance of a full tensor from its symmetric projection."""
    full = np.asarray(full, dtype=float)
    return float(np.sqrt(np.sum((full - symmetrize(full)) ** 2)))


def frobenius(packed):
    """Frobenius norm over the full index set from packed components."""
    packed = np.asarray(packed, dtype=float)
    return float(np.sqrt(np.sum(multiplicities(packed.size - 1) * packed**2)))


def outer_power(v, n):
    """Packed components of v^(x) n (pure tensor power of a 2-vector)."""
    v = np.asarray(v, dtype=float)
    return np.array([v[0] ** (n - k) * v[1] ** k for k in range(n + 1)])


def perp(v):
    """Rotated vector v_perp = (-v2, v1)."""
    v = np.asarray(v, dtype=float)
    return np.array([-v[1], v[0]])


def theta_basis(theta, n):
    """Packed basis B_j = P_n(theta^(n-j) (x) theta_perp^j), j = 0..n.

    This is the basis in which the leading moment-transport operator is
    upper bidiagonal with integer diagonal.
    """
    theta = np.asarray(theta, dtype=float)
    tp = perp(theta)
    basis = []
    for j in range(n + 1):
        full = np.ones(())
        vecs = [theta] * (n - j) + [tp] * j
        full = vecs[0]
        for v in vecs[1:]:
            full = np.multiply.outer(full, v)
        basis.append(pack(symmetrize(full)))
    return basis


def expand_in_basis(packed, basis):
    """Coordinates of a packed symmetric tensor in a packed basis."""
    n = np.asarray(packed).size - 1
    w = multiplicities(n)
    gram = np.array([[np.sum(w * bi * bj) for bj in basis] for bi in basis])
    rhs = np.array([np.sum(w * bi * np.asarray(packed)) for bi in basis])
    return np.linalg.solve(gram, rhs)
