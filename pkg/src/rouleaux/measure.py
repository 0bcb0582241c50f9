"""Sparse nonnegative measures on the composition lattice."""

from __future__ import annotations

import numpy as np

from .kernels import validate_composition


class DiscreteMeasure:
    """Finitely supported nonnegative measure on S = {c >= 2, a >= 2}.

    Entries map integer compositions (c, a) to concentration weights.
    """

    __slots__ = ("entries",)

    def __init__(self, entries=None, validate=True):
        d = {}
        if entries:
            for v, w in dict(entries).items():
                w = float(w)
                if w < 0:
                    raise ValueError(f"negative weight {w!r} at {v!r}")
                if w == 0.0:
                    continue
                key = validate_composition(v) if validate else (int(v[0]), int(v[1]))
                d[key] = d.get(key, 0.0) + w
        self.entries = d

    @classmethod
    def monodisperse(cls, c, a, weight=1.0):
        return cls({(c, a): weight})

    @classmethod
    def from_points(cls, triples):
        """Build from an iterable of (c, a, weight)."""
        m = cls()
        for c, a, w in triples:
            key = validate_composition((c, a))
            m.entries[key] = m.entries.get(key, 0.0) + float(w)
        return m

    def copy(self):
        out = DiscreteMeasure()
        out.entries = dict(self.entries)
        return out

    def arrays(self):
        """Support and weights as (n, 2) int64 and (n,) float arrays."""
        if not self.entries:
            return np.empty((0, 2), dtype=np.int64), np.empty(0)
        comps = np.array(list(self.entries.keys()), dtype=np.int64)
        w = np.array(list(self.entries.values()))
        return comps, w

    def total(self):
        return float(sum(self.entries.values()))

    def norm1(self):
        """Total variation weighted by (1 + |z|_1)."""
        return float(sum(w * (1.0 + v[0] + v[1]) for v, w in self.entries.items()))

    def max_extent(self):
        """Largest coordinate over the support (sup-norm radius)."""
        if not self.entries:
            return 0
        return max(max(v) for v in self.entries)

    def cleanup(self, drop_tol):
        """Remove entries below drop_tol; returns removed weight."""
        dropped = 0.0
        for v in [v for v, w in self.entries.items() if w < drop_tol]:
            dropped += self.entries.pop(v)
        return dropped

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, DiscreteMeasure) and self.entries == other.entries

    def __repr__(self):
        return f"DiscreteMeasure({len(self.entries)} points, total={self.total():.6g})"
