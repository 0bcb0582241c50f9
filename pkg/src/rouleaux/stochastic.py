"""Stochastic particle simulator for the three-channel merge dynamics.

Finite system of particles on the composition lattice; an unordered pair
merges through channel i at rate alpha_i K_i(z, z') / V.  The product
structure of the kernels makes the total rate a function of running
coordinate sums, and pairs are drawn by two coordinate-weighted draws
with a same-particle rejection.  The mean-field limit V -> infinity of
the empirical measure is the deterministic equation, which makes the
simulator an independent check of the lattice solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import apply_reaction, validate_alpha
from .measure import DiscreteMeasure

_CHECK_EVERY = 10_000   # events between brute-force rate-sum audits
_COMPACT_EVERY = 4096   # events between removal of extinct compositions


class RateSumError(RuntimeError):
    """Incrementally maintained rates drifted from the brute-force sum."""


@dataclass
class ParticleSystem:
    """Multiset of composition particles with O(1) rate bookkeeping."""

    volume: float
    rng_seed: int
    t: float = 0.0
    comps: np.ndarray = field(default_factory=lambda: np.empty((0, 2), np.int64))
    counts: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    events: int = 0

    def __post_init__(self):
        self.rng = np.random.default_rng(self.rng_seed)
        self._index = {tuple(v): k for k, v in enumerate(self.comps)}
        self._refresh_sums()

    @classmethod
    def from_measure(cls, f: DiscreteMeasure, volume, rng_seed):
        """Particle counts round(w V) per composition of a measure."""
        items = sorted(f.entries.items())
        comps = np.array([v for v, _ in items], dtype=np.int64).reshape(-1, 2)
        counts = np.array([round(w * volume) for _, w in items], dtype=np.int64)
        for (v, w), n in zip(items, counts):
            if abs(w * volume - n) > 1e-9 * max(1.0, abs(w * volume)):
                raise ValueError(f"weight {w} at {v} gives non-integer count")
        return cls(float(volume), int(rng_seed), comps=comps, counts=counts)

    # -- bookkeeping -------------------------------------------------------

    def _refresh_sums(self):
        c = self.comps[:, 0].astype(float)
        a = self.comps[:, 1].astype(float)
        n = self.counts.astype(float)
        self.s_x = float(n @ c)
        self.s_y = float(n @ a)
        self.s_xx = float(n @ (c * c))
        self.s_xy = float(n @ (c * a))
        self.s_yy = float(n @ (a * a))

    def particle_count(self):
        return int(self.counts.sum())

    def pair_rates(self):
        """Unordered-pair kernel sums per channel (self-pairs excluded)."""
        return np.array([
            0.5 * (self.s_x * self.s_x - self.s_xx),
            0.5 * (self.s_x * self.s_y - self.s_xy),
            0.5 * (self.s_y * self.s_y - self.s_yy),
        ])

    def pair_rates_bruteforce(self):
        """O(n^2) audit of pair_rates over live compositions."""
        live = self.counts > 0
        comps = self.comps[live].astype(float)
        n = self.counts[live].astype(float)
        x, y = comps[:, 0], comps[:, 1]
        nn = np.outer(n, n)
        k1 = np.outer(x, x)
        k2 = 0.5 * (np.outer(x, y) + np.outer(y, x))
        k3 = np.outer(y, y)
        out = []
        for kk in (k1, k2, k3):
            total = float(np.sum(nn * kk)) - float(np.sum(n * np.diag(kk)))
            out.append(0.5 * total)
        return np.array(out)

    def _audit(self):
        inc = self.pair_rates()
        ref = self.pair_rates_bruteforce()
        scale = max(float(np.abs(ref).max()), 1e-300)
        if np.abs(inc - ref).max() > 1e-10 * scale:
            self._refresh_sums()
            if np.abs(self.pair_rates() - ref).max() > 1e-10 * scale:
                raise RateSumError(
                    f"rate drift {np.abs(inc - ref).max():.3e} vs scale {scale:.3e}")

    def _compact(self):
        live = self.counts > 0
        if live.all():
            return
        self.comps = self.comps[live]
        self.counts = self.counts[live]
        self._index = {tuple(v): k for k, v in enumerate(self.comps)}

    def _comp_index(self, v):
        k = self._index.get(v)
        if k is None:
            k = len(self.counts)
            self.comps = np.vstack([self.comps, np.array(v, dtype=np.int64)])
            self.counts = np.append(self.counts, 0)
            self._index[v] = k
        return k

    def _adjust(self, k, dn):
        v = self.comps[k]
        c, a = float(v[0]), float(v[1])
        self.counts[k] += dn
        self.s_x += dn * c
        self.s_y += dn * a
        self.s_xx += dn * c * c
        self.s_xy += dn * c * a
        self.s_yy += dn * a * a

    # -- sampling ----------------------------------------------------------

    def _draw_weighted(self, weights):
        cum = np.cumsum(weights)
        total = cum[-1]
        u = self.rng.random() * total
        return int(np.searchsorted(cum, u, side="right"))

    def _draw_pair(self, ch):
        c = self.comps[:, 0].astype(float)
        a = self.comps[:, 1].astype(float)
        n = self.counts.astype(float)
        w_first = n * (c if ch in (0, 1) else a)
        w_second = n * (c if ch == 0 else a)
        while True:
            i = self._draw_weighted(w_first)
            j = self._draw_weighted(w_second)
            if i != j:
                return i, j
            ni = self.counts[i]
            if ni >= 2 and self.rng.random() < (ni - 1.0) / ni:
                return i, j

    def _draw_waiting(self, alpha):
        """Exponential waiting time of the next event and channel rates."""
        rates = alpha * self.pair_rates() / self.volume
        total = float(rates.sum())
        if total <= 0:
            raise ValueError("total merge rate is zero")
        return self.rng.exponential(1.0 / total), rates

    def _execute(self, rates):
        """Commit one merge event drawn from the given channel rates."""
        ch = self._draw_weighted(rates)
        i, j = self._draw_pair(ch)
        u = (int(self.comps[i, 0]), int(self.comps[i, 1]))
        v = (int(self.comps[j, 0]), int(self.comps[j, 1]))
        k = self._comp_index(apply_reaction(ch + 1, u, v))
        self._adjust(i, -1)
        self._adjust(j, -1)
        self._adjust(k, +1)
        self.events += 1
        if self.events % _COMPACT_EVERY == 0:
            self._compact()
        if self.events % _CHECK_EVERY == 0:
            self._audit()

    def largest_fraction(self):
        """Largest implied particle size over the total implied size."""
        live = self.counts > 0
        if not live.any():
            return 0.0
        sizes = (self.comps[live][:, 1] + 2 * self.comps[live][:, 0] - 3).astype(float)
        total = float(self.counts[live] @ sizes)
        return float(sizes.max()) / total if total > 0 else 0.0

    def total_size(self):
        live = self.counts > 0
        sizes = self.comps[live][:, 1] + 2 * self.comps[live][:, 0] - 3
        return int(self.counts[live] @ sizes)


def gillespie_step(sys: ParticleSystem, alpha):
    """Execute one merge event (waiting time, channel, pair) in place."""
    alpha = validate_alpha(alpha)
    if sys.particle_count() < 2:
        raise ValueError("need at least 2 particles")
    dt, rates = sys._draw_waiting(alpha)
    sys.t += dt
    sys._execute(rates)
    return sys


def empirical_measure(sys: ParticleSystem) -> DiscreteMeasure:
    """Concentration measure count/V per composition."""
    live = sys.counts > 0
    m = DiscreteMeasure()
    m.entries = {(int(v[0]), int(v[1])): n / sys.volume
                 for v, n in zip(sys.comps[live], sys.counts[live])}
    return m


def run_replica(f0: DiscreteMeasure, volume, alpha, seed, checkpoint_times):
    """Simulate one replica and record moments at the checkpoints."""
    from .moments import extract_moments

    alpha = validate_alpha(alpha)
    sys = ParticleSystem.from_measure(f0, volume, seed)
    rows = []
    for t_cp in checkpoint_times:
        while sys.t < t_cp and sys.particle_count() >= 2:
            dt, rates = sys._draw_waiting(alpha)
            if sys.t + dt > t_cp:
                # memoryless clock: park at the checkpoint and redraw
                sys.t = t_cp
                break
            sys.t += dt
            sys._execute(rates)
        mom = extract_moments(empirical_measure(sys), order_max=2)
        rows.append({
            "t": t_cp, "m0": mom.m0,
            "m1_x": mom.m1[0], "m1_y": mom.m1[1],
            "m2_xx": mom.m2[0, 0], "m2_xy": mom.m2[0, 1], "m2_yy": mom.m2[1, 1],
            "largest_fraction": sys.largest_fraction(),
        })
    return rows


_FIELDS = ("m0", "m1_x", "m1_y", "m2_xx", "m2_xy", "m2_yy", "largest_fraction")


@dataclass
class EnsembleResult:
    times: np.ndarray
    seeds: list
    rows: list          # per replica: list of checkpoint dicts
    mean: dict          # field -> array over checkpoints
    stderr: dict

    def to_csv_rows(self):
        out = []
        for run_id, rep in zip(range(len(self.rows)), self.rows):
            for row in rep:
                out.append([run_id, row["t"]] + [row[f] for f in _FIELDS])
        return out


def run_ensemble(f0: DiscreteMeasure, volume, alpha, checkpoint_times, seeds):
    """Independent replicas; per-checkpoint moment means and stderrs."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least 2 replicas")
    rows = [run_replica(f0, volume, alpha, s, checkpoint_times) for s in seeds]
    mean = {}
    stderr = {}
    nrep = len(seeds)
    for f in _FIELDS:
        data = np.array([[row[f] for row in rep] for rep in rows])
        mean[f] = data.mean(axis=0)
        stderr[f] = data.std(axis=0, ddof=1) / math.sqrt(nrep)
    return EnsembleResult(np.asarray(checkpoint_times, dtype=float), seeds,
                          rows, mean, stderr)
