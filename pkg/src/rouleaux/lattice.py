"""Deterministic lattice solver for the truncated coagulation equation.

The vector field is quadratic: gains are lattice convolutions of
coordinate-weighted copies of the measure (the kernels are sums of
products), losses are pointwise rates against running weighted sums.
Gains are evaluated by FFT over a dense grid spanning the live support;
a unimodular integer change of lattice basis is chosen automatically so
that measures concentrated along a ray (the typical gelling geometry)
get thin grids.  The transforms are fully padded, so every merge target
is represented exactly: targets inside the box [0, 2R]^2 feed the gain
term and targets beyond it are routed into a leakage accumulator, which
keeps conservation checks meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len, rfft2, irfft2

from .kernels import XI, chi_cutoff, validate_alpha
from .measure import DiscreteMeasure
from .moments import MomentSet, extract_moments

_XI_ARR = np.array(XI)           # (3, 2)
_HALO = 96                       # slab margin once the support is large
_MINKOWSKI_CELLS = 300_000       # below this, slab covers all pair sums
_MAX_PADDED_CELLS = 90_000_000   # hard cap on FFT work arrays


class SupportError(ValueError):
    """Measure support leaves the computational box."""


class DtUnderflowError(RuntimeError):
    """Step size collapsed; the trajectory is approaching blow-up."""


class ResourceError(RuntimeError):
    """Support geometry needs a larger grid than the configured cap."""


@dataclass
class LeakAccumulator:
    m0: float = 0.0
    m1: np.ndarray = field(default_factory=lambda: np.zeros(2))
    m2: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def copy(self):
        return LeakAccumulator(self.m0, self.m1.copy(), self.m2.copy())

    def add_scaled(self, other, fac):
        self.m0 += fac * other.m0
        self.m1 += fac * other.m1
        self.m2 += fac * other.m2

    def as_moment_set(self):
        return MomentSet(self.m0, self.m1.copy(), self.m2.copy())

    def to_dict(self):
        return {"m0": self.m0, "m1": self.m1.tolist(), "m2": self.m2.tolist()}


@dataclass
class SolverState:
    t: float
    measure: DiscreteMeasure
    leaked: LeakAccumulator = field(default_factory=LeakAccumulator)
    step_count: int = 0
    last_dt: float = 0.0
    clip_count: int = 0
    clipped_mass: float = 0.0

    def copy(self):
        return SolverState(self.t, self.measure.copy(), self.leaked.copy(),
                           self.step_count, self.last_dt, self.clip_count,
                           self.clipped_mass)


def _check_support(comps, R):
    if comps.shape[0] and comps.max() > 2 * R:
        raise SupportError(
            f"support reaches {comps.max()} beyond the box [0, {2 * R}]^2")


# ---------------------------------------------------------------------------
# reference O(n^2) evaluation (oracle for the grid engine)
# ---------------------------------------------------------------------------


def coagulation_rhs_pairs(f, alpha, R):
    """Direct double-loop evaluation of the truncated coagulation operator.

    Returns (rhs dict, leak-rate accumulator).  Quadratic in the support
    size; this is the reference the fast engine is tested against.
    """
    from .kernels import apply_reaction, kernel_eval

    alpha = validate_alpha(alpha)
    comps, w = f.arrays()
    n = comps.shape[0]
    _check_support(comps, R)
    rhs = {}
    leak = LeakAccumulator()
    chi = chi_cutoff(np.max(comps, axis=1) if n else np.empty(0), R)
    for iu in range(n):
        u = (int(comps[iu, 0]), int(comps[iu, 1]))
        lam = 0.0
        for iv in range(n):
            v = (int(comps[iv, 0]), int(comps[iv, 1]))
            for ch in range(3):
                if alpha[ch] == 0.0:
                    continue
                kval = kernel_eval(ch + 1, u, v) * chi[iu] * chi[iv]
                lam += alpha[ch] * kval * w[iv]
                rate = 0.5 * alpha[ch] * w[iu] * w[iv] * kval
                if rate == 0.0:
                    continue
                tgt = apply_reaction(ch + 1, u, v)
                if max(tgt) <= 2.0 * R:
                    rhs[tgt] = rhs.get(tgt, 0.0) + rate
                else:
                    vec = np.array(tgt, dtype=float)
                    leak.m0 += rate
                    leak.m1 += rate * vec
                    leak.m2 += rate * np.outer(vec, vec)
        rhs[u] = rhs.get(u, 0.0) - w[iu] * lam
    return rhs, leak


# ---------------------------------------------------------------------------
# sheared dense-grid engine
# ---------------------------------------------------------------------------


def _box_area(i, j):
    return (int(i.max()) - int(i.min()) + 1) * (int(j.max()) - int(j.min()) + 1)


def _reduce_basis(comps, rounds=8, entry_cap=64):
    """Unimodular U with grid coords U (c, a) minimizing the bounding box.

    Greedy integer row reduction (regression-guided shears on either row);
    compositions of shears align the grid with the support's ray even when
    the ray is not an elementary lattice direction.  det U = +-1 always.
    """
    U = np.eye(2, dtype=np.int64)
    if comps.shape[0] < 2:
        return U
    i = comps[:, 0].astype(np.int64).copy()
    j = comps[:, 1].astype(np.int64).copy()
    area = _box_area(i, j)
    for _ in range(rounds):
        improved = False
        for target in (0, 1):
            x, y = (i, j) if target == 0 else (j, i)
            vy = float(np.var(y))
            if vy == 0.0:
                continue
            q_fit = int(round(float(np.cov(x, y)[0, 1]) / vy))
            for q in dict.fromkeys([q_fit, q_fit + 1, q_fit - 1, 1, -1]):
                if q == 0:
                    continue
                U_new = U.copy()
                if target == 0:
                    U_new[0] -= q * U_new[1]
                else:
                    U_new[1] -= q * U_new[0]
                if np.abs(U_new).max() > entry_cap:
                    continue
                xn = x - q * y
                new_area = (_box_area(xn, j) if target == 0 else _box_area(i, xn))
                if new_area < area:
                    if target == 0:
                        i = xn
                    else:
                        j = xn
                    U = U_new
                    area = new_area
                    improved = True
                    break
        if not improved:
            break
    return U


class _GridWorkspace:
    """Dense slab over the (sheared) support with fully padded transforms.

    Slab cell (p, q) has grid coordinates (i0 + p, j0 + q); the convolution
    frame index (m, l) has grid coordinates (2 i0 + m, 2 j0 + l) and covers
    every pair sum, so no wraparound occurs.
    """

    def __init__(self, comps, R, workers=1, minkowski=None):
        self.R = float(R)
        self.workers = workers
        self.U = _reduce_basis(comps)
        d = int(round(np.linalg.det(self.U)))
        self.V = d * np.array([[self.U[1, 1], -self.U[0, 1]],
                               [-self.U[1, 0], self.U[0, 0]]], dtype=np.int64)
        i, j = self._to_grid(comps[:, 0].astype(np.int64),
                             comps[:, 1].astype(np.int64))
        ilo, ihi = int(i.min()), int(i.max())
        jlo, jhi = int(j.min()), int(j.max())
        if minkowski is None:
            minkowski = ((ihi - ilo + 1) * (jhi - jlo + 1) * 4 <= _MINKOWSKI_CELLS)
        halo = 4 if minkowski else _HALO
        if minkowski:
            # cover all one-step merge targets exactly
            xi_i, xi_j = self._shear_offsets()
            ilo2 = min(ilo, 2 * ilo + int(xi_i.min()))
            ihi2 = max(ihi, 2 * ihi + int(xi_i.max()))
            jlo2 = min(jlo, 2 * jlo + int(xi_j.min()))
            jhi2 = max(jhi, 2 * jhi + int(xi_j.max()))
            ilo, ihi, jlo, jhi = ilo2, ihi2, jlo2, jhi2
        self.i0 = ilo - halo
        self.j0 = jlo - halo
        self.ni = ihi - ilo + 1 + 2 * halo
        self.nj = jhi - jlo + 1 + 2 * halo
        self.Li = next_fast_len(2 * self.ni + 4)
        self.Lj = next_fast_len(2 * self.nj + 4)
        if self.Li * self.Lj > _MAX_PADDED_CELLS:
            raise ResourceError(
                f"padded grid {self.Li} x {self.Lj} exceeds the cell cap; "
                "support too spread out for the dense engine")
        # slab-frame true coordinates and cutoff
        C, A = self._coords(self.i0 + np.arange(self.ni),
                            self.j0 + np.arange(self.nj))
        self.C, self.A = C, A
        self.chi = chi_cutoff(np.maximum(C, A), R)
        # per-channel target masks and scatter slices in the conv frame:
        # conv index (m, l) holds the pair sum at grid coords
        # (2 i0 + m, 2 j0 + l); channel targets add the sheared offset.
        self.conv_inbox = {}
        self.all_inbox = {}
        self.conv_sl = {}
        self.slab_sl = {}
        cmax = float(C.max())
        amax = float(A.max())
        m = (2 * self.i0 + np.arange(self.Li)).astype(np.int64)
        l = (2 * self.j0 + np.arange(self.Lj)).astype(np.int64)
        xi_i, xi_j = self._shear_offsets()
        for ch in range(3):
            di, dj = int(xi_i[ch]), int(xi_j[ch])
            xi_c, xi_a = int(_XI_ARR[ch, 0]), int(_XI_ARR[ch, 1])
            # no merge target can leave the box: skip all mask work
            self.all_inbox[ch] = (2 * cmax + xi_c <= 2 * R
                                  and 2 * amax + xi_a <= 2 * R)
            if self.all_inbox[ch]:
                self.conv_inbox[ch] = None
            else:
                Cc = (self.V[0, 0] * (m + di)[:, None]
                      + self.V[0, 1] * (l + dj)[None, :])
                Ac = (self.V[1, 0] * (m + di)[:, None]
                      + self.V[1, 1] * (l + dj)[None, :])
                self.conv_inbox[ch] = (Cc <= 2 * R) & (Ac <= 2 * R)
                del Cc, Ac
            # target slab index p = m + i0 + di
            p_lo = max(0, -self.i0 - di)
            p_hi = max(min(self.Li, self.ni - self.i0 - di), p_lo)
            q_lo = max(0, -self.j0 - dj)
            q_hi = max(min(self.Lj, self.nj - self.j0 - dj), q_lo)
            self.conv_sl[ch] = (slice(p_lo, p_hi), slice(q_lo, q_hi))
            self.slab_sl[ch] = (slice(p_lo + self.i0 + di, p_hi + self.i0 + di),
                                slice(q_lo + self.j0 + dj, q_hi + self.j0 + dj))

    # -- coordinate maps -------------------------------------------------

    def _to_grid(self, c, a):
        return (self.U[0, 0] * c + self.U[0, 1] * a,
                self.U[1, 0] * c + self.U[1, 1] * a)

    def _coords(self, ivec, jvec):
        ivec = np.asarray(ivec, dtype=np.int64)
        jvec = np.asarray(jvec, dtype=np.int64)
        C = (self.V[0, 0] * ivec[:, None] + self.V[0, 1] * jvec[None, :])
        A = (self.V[1, 0] * ivec[:, None] + self.V[1, 1] * jvec[None, :])
        return C.astype(float), A.astype(float)

    def _point_coords(self, i, j):
        c = self.V[0, 0] * i + self.V[0, 1] * j
        a = self.V[1, 0] * i + self.V[1, 1] * j
        return c.astype(float), a.astype(float)

    def _shear_offsets(self):
        xi_c = _XI_ARR[:, 0]
        xi_a = _XI_ARR[:, 1]
        return (self.U[0, 0] * xi_c + self.U[0, 1] * xi_a,
                self.U[1, 0] * xi_c + self.U[1, 1] * xi_a)

    # -- state transfer --------------------------------------------------

    def grid_from_measure(self, f):
        comps, w = f.arrays()
        _check_support(comps, self.R)
        i, j = self._to_grid(comps[:, 0].astype(np.int64),
                             comps[:, 1].astype(np.int64))
        grid = np.zeros((self.ni, self.nj))
        grid[i - self.i0, j - self.j0] = w
        return grid

    def fits(self, grid, pad=2):
        """True while no live weight sits within pad cells of the slab edge."""
        return not (grid[:pad].any() or grid[-pad:].any()
                    or grid[:, :pad].any() or grid[:, -pad:].any())

    def measure_from_grid(self, grid, drop_tol=0.0):
        i, j = np.nonzero(grid > drop_tol)
        c, a = self._point_coords(i + self.i0, j + self.j0)
        m = DiscreteMeasure()
        m.entries = {(int(cc), int(aa)): float(v)
                     for cc, aa, v in zip(c, a, grid[i, j])}
        return m

    # -- vector field ----------------------------------------------------

    def rhs(self, grid, alpha):
        """Gain minus loss on the slab, plus leakage moment rates."""
        wx = grid * self.C * self.chi
        wy = grid * self.A * self.chi
        need_x = alpha[0] > 0 or alpha[1] > 0
        need_y = alpha[1] > 0 or alpha[2] > 0
        FX = rfft2(wx, (self.Li, self.Lj), workers=self.workers) if need_x else None
        FY = rfft2(wy, (self.Li, self.Lj), workers=self.workers) if need_y else None
        out = np.zeros_like(grid)
        leak = LeakAccumulator()
        xi_i, xi_j = self._shear_offsets()
        for ch in range(3):
            if alpha[ch] == 0.0:
                continue
            if ch == 0:
                FF = FX * FX
            elif ch == 1:
                FF = FX * FY
            else:
                FF = FY * FY
            conv = irfft2(FF, (self.Li, self.Lj), workers=self.workers)
            conv *= 0.5 * alpha[ch]
            if not self.all_inbox[ch]:
                floor = 1e-15 * float(np.abs(conv).max())
                inbox = self.conv_inbox[ch]
                outside = ~inbox & (conv > floor)
                if outside.any():
                    mi, lj = np.nonzero(outside)
                    cc, aa = self._point_coords(
                        2 * self.i0 + mi + int(xi_i[ch]),
                        2 * self.j0 + lj + int(xi_j[ch]))
                    gv = conv[mi, lj]
                    leak.m0 += float(gv.sum())
                    leak.m1 += np.array([float(gv @ cc), float(gv @ aa)])
                    cxx = float(gv @ (cc * cc))
                    cxy = float(gv @ (cc * aa))
                    cyy = float(gv @ (aa * aa))
                    leak.m2 += np.array([[cxx, cxy], [cxy, cyy]])
                np.multiply(conv, inbox, out=conv)
            out[self.slab_sl[ch]] += conv[self.conv_sl[ch]]
        Mx = float(wx.sum())
        My = float(wy.sum())
        lam = (alpha[0] * self.C * Mx
               + 0.5 * alpha[1] * (self.C * My + self.A * Mx)
               + alpha[2] * self.A * My)
        out -= grid * self.chi * lam
        return out, leak


def coagulation_rhs(f, alpha, R, workers=1):
    """Truncated coagulation operator applied to a measure.

    Returns (rhs dict over compositions, leak-rate accumulator); agrees
    with coagulation_rhs_pairs to rounding on any support.
    """
    alpha = validate_alpha(alpha)
    comps, _ = f.arrays()
    if comps.shape[0] == 0:
        return {}, LeakAccumulator()
    ws = _GridWorkspace(comps, R, workers=workers)
    grid = ws.grid_from_measure(f)
    rhs, leak = ws.rhs(grid, alpha)
    floor = 1e-14 * float(np.abs(rhs).max())
    rhs[np.abs(rhs) <= floor] = 0.0
    ii, jj = np.nonzero(rhs)
    cc, aa = ws._point_coords(ii + ws.i0, jj + ws.j0)
    result = {(int(c), int(a)): float(rhs[i, j])
              for c, a, i, j in zip(cc, aa, ii, jj)}
    return result, leak


# ---------------------------------------------------------------------------
# embedded Dormand-Prince 5(4) stepping with positivity guard
# ---------------------------------------------------------------------------

_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


class _Stepper:
    """Adaptive grid stepping shared by step() and solve()."""

    def __init__(self, state: SolverState, alpha, R, rtol=1e-6, atol=None,
                 dt_min=None, workers=1):
        self.alpha = validate_alpha(alpha)
        self.R = float(R)
        self.rtol = rtol
        mass0 = state.measure.total()
        self.atol = atol if atol is not None else 1e-15 * max(mass0, 1e-300)
        self.dt_min = dt_min
        self.workers = workers
        self.t = state.t
        self.leaked = state.leaked.copy()
        self.step_count = state.step_count
        self.clip_count = state.clip_count
        self.clipped_mass = state.clipped_mass
        self.last_dt = state.last_dt
        self.drop_tol_rel = 1e-16
        self.dt = None
        self.ws = None
        self.grid = None
        self._rebuild(state.measure)

    def _rebuild(self, measure):
        comps, _ = measure.arrays()
        if comps.shape[0] == 0:
            self.ws, self.grid = None, None
            return
        self.ws = _GridWorkspace(comps, self.R, workers=self.workers)
        self.grid = self.ws.grid_from_measure(measure)

    def measure(self):
        if self.ws is None:
            return DiscreteMeasure()
        return self.ws.measure_from_grid(self.grid)

    def state(self):
        return SolverState(self.t, self.measure(), self.leaked.copy(),
                           self.step_count, self.last_dt, self.clip_count,
                           self.clipped_mass)

    def _initial_dt(self, dt_max):
        rhs, _ = self.ws.rhs(self.grid, self.alpha)
        scale = float(np.abs(rhs).sum())
        mass = float(self.grid.sum())
        if scale == 0.0 or not np.isfinite(dt_max):
            return min(dt_max, 1.0) if scale == 0.0 else 0.01 * mass / scale
        return min(dt_max, 0.01 * mass / scale)

    def advance(self, t_target, max_steps=10 ** 6):
        """Integrate to exactly t_target (DtUnderflowError near blow-up)."""
        if self.ws is None:
            self.t = t_target
            return
        while self.t < t_target * (1.0 - 1e-15):
            if self.dt is None:
                self.dt = self._initial_dt(t_target - self.t)
            floor = (self.dt_min if self.dt_min is not None
                     else 1e-13 * max(self.t, 1e-6))
            if self.dt < floor:
                raise DtUnderflowError(
                    f"dt={self.dt:.3e} below dt_min={floor:.3e} at t={self.t:.8g}")
            dt_try = min(self.dt, t_target - self.t)
            clamped = dt_try < self.dt
            accepted, dt_sugg = self._try_step(dt_try)
            if accepted:
                self.step_count += 1
                self.last_dt = dt_try
                if self.step_count > max_steps:
                    raise RuntimeError("step budget exhausted")
                if not clamped:
                    self.dt = dt_sugg
            else:
                self.dt = dt_sugg

    def _try_step(self, dt):
        ws, grid = self.ws, self.grid
        ks = []
        leaks = []
        for s in range(7):
            ys = grid if s == 0 else grid + dt * sum(
                a * k for a, k in zip(_DP_A[s], ks) if a != 0.0)
            rhs, leak = ws.rhs(ys, self.alpha)
            ks.append(rhs)
            leaks.append(leak)
        inc5 = dt * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        inc4 = dt * sum(b * k for b, k in zip(_DP_B4, ks))
        y5 = grid + inc5
        err = float(np.abs(inc5 - inc4).sum())
        tol = self.rtol * float(grid.sum()) + self.atol
        neg_min = float(y5.min())
        if neg_min < -self.atol or err > tol:
            shrink = 0.5 if neg_min < -self.atol else max(
                0.2, 0.9 * (tol / max(err, 1e-300)) ** 0.2)
            return False, dt * shrink
        neg = y5 < 0.0
        if neg.any():
            self.clip_count += int(neg.sum())
            self.clipped_mass += float(-y5[neg].sum())
            y5[neg] = 0.0
        for b, leak in zip(_DP_B5, leaks):
            if b != 0.0:
                self.leaked.add_scaled(leak, dt * b)
        self.t += dt
        self.grid = y5
        self._after_accept()
        return True, dt * min(5.0, max(0.2, 0.9 * (tol / max(err, 1e-300)) ** 0.2))

    def _after_accept(self):
        drop = self.drop_tol_rel * float(self.grid.sum())
        self.grid[self.grid <= drop] = 0.0
        if not self.grid.any():
            self.ws, self.grid = None, None
            return
        if not self.ws.fits(self.grid):
            self._rebuild(self.ws.measure_from_grid(self.grid))


def step(state: SolverState, alpha, R, dt_max, rtol=1e-6, atol=None,
         dt_min=None, workers=1):
    """Advance by one accepted adaptive step of size at most dt_max."""
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    st = _Stepper(state, alpha, R, rtol=rtol, atol=atol, dt_min=dt_min,
                  workers=workers)
    if st.ws is None:
        out = state.copy()
        out.t += dt_max
        out.step_count += 1
        return out
    dt = min(st._initial_dt(dt_max), dt_max)
    while True:
        accepted, dt_next = st._try_step(dt)
        if accepted:
            st.step_count += 1
            st.last_dt = dt
            return st.state()
        floor = dt_min if dt_min is not None else 1e-13 * max(state.t, 1e-6)
        if dt_next < floor:
            raise DtUnderflowError(f"dt={dt_next:.3e} below dt_min={floor:.3e}")
        dt = min(dt_next, dt_max)


@dataclass
class Checkpoint:
    t: float
    measure: DiscreteMeasure
    leaked: LeakAccumulator
    moments: MomentSet
    leaked_m2_fraction: float


@dataclass
class LatticeRun:
    alpha: np.ndarray
    R: float
    checkpoints: list
    horizon_reason: str
    clip_count: int = 0
    clipped_mass: float = 0.0

    @property
    def times(self):
        return np.array([cp.t for cp in self.checkpoints])


def solve(f0: DiscreteMeasure, alpha, R, checkpoint_times, *, rtol=1e-6,
          atol=None, leak_m2_stop=0.005, dt_min=None, workers=1,
          max_steps=10 ** 6):
    """Integrate from f0 through the given checkpoint times.

    Stops early when the leaked second moment exceeds leak_m2_stop of the
    current second moment (truncation horizon) or when the step size
    underflows (blow-up approach); the run records the reason.
    """
    alpha = validate_alpha(alpha)
    stepper = _Stepper(SolverState(0.0, f0.copy()), alpha, R, rtol=rtol,
                       atol=atol, dt_min=dt_min, workers=workers)
    checkpoints = []
    reason = "completed"

    def record():
        st = stepper.state()
        mom = extract_moments(st.measure, order_max=4)
        m2_sum = float(mom.m2.sum())
        frac = float(st.leaked.m2.sum()) / m2_sum if m2_sum > 0 else 0.0
        checkpoints.append(Checkpoint(st.t, st.measure, st.leaked, mom, frac))
        return frac

    record()
    for t_cp in checkpoint_times:
        if t_cp <= stepper.t:
            continue
        try:
            stepper.advance(t_cp, max_steps=max_steps)
        except DtUnderflowError:
            reason = "dt_underflow"
            record()
            break
        frac = record()
        if frac > leak_m2_stop:
            reason = "leak_horizon"
            break
    return LatticeRun(alpha, float(R), checkpoints, reason,
                      stepper.clip_count, stepper.clipped_mass)


def tau_checkpoints(t_star, tau_max, n):
    """Times t = T* (1 - e^-tau) on a uniform tau grid, tau > 0."""
    taus = np.linspace(0.0, tau_max, n + 1)[1:]
    return t_star * (1.0 - np.exp(-taus))


# ---------------------------------------------------------------------------
# diagnostics on measures and trajectories
# ---------------------------------------------------------------------------


def collision_integral(f: DiscreteMeasure, phi, alpha, R):
    """1/2 sum_i alpha_i II K_i^R Delta_i phi f f' by direct double sum."""
    from .kernels import apply_reaction, kernel_eval

    alpha = validate_alpha(alpha)
    comps, w = f.arrays()
    n = comps.shape[0]
    if n > 4000:
        raise ResourceError("collision integral is O(n^2); support too large")
    chi = chi_cutoff(np.max(comps, axis=1) if n else np.empty(0), R)
    total = 0.0
    for iu in range(n):
        u = (int(comps[iu, 0]), int(comps[iu, 1]))
        pu = phi(u)
        for iv in range(n):
            v = (int(comps[iv, 0]), int(comps[iv, 1]))
            for ch in range(3):
                if alpha[ch] == 0.0:
                    continue
                rate = alpha[ch] * chi[iu] * chi[iv] * kernel_eval(ch + 1, u, v)
                if rate == 0.0:
                    continue
                tgt = apply_reaction(ch + 1, u, v)
                total += 0.5 * w[iu] * w[iv] * rate * (phi(tgt) - pu - phi(v))
    return total


def weak_form_residual(run: LatticeRun, phi, t, account_leakage=False):
    """A-posteriori weak-form defect |<phi,f(t)> - <phi,f0> - integral|.

    The collision integral is evaluated at the stored checkpoints up to t
    and integrated with composite Simpson, matching the stepper's order.
    """
    from scipy.integrate import simpson

    times = run.times
    if t > times[-1] + 1e-12:
        raise ValueError(f"trajectory ends at {times[-1]}, requested {t}")
    mask = times <= t + 1e-12
    ts = times[mask]
    if len(ts) < 3:
        raise ValueError("need at least 3 checkpoints up to t")
    cps = [cp for cp, m in zip(run.checkpoints, mask) if m]

    def pairing(cp):
        return sum(wv * phi(v) for v, wv in cp.measure.entries.items())

    integrand = [collision_integral(cp.measure, phi, run.alpha, run.R)
                 for cp in cps]
    integral = simpson(integrand, x=ts)
    lhs = pairing(cps[-1]) - pairing(cps[0])
    if account_leakage:
        lhs += _phi_against_leak(cps[-1].leaked, phi) - _phi_against_leak(
            cps[0].leaked, phi)
    return abs(lhs - integral)


def _phi_against_leak(leak: LeakAccumulator, phi):
    """Pair a test function with the leaked moments.

    Exact for test functions that are quadratic polynomials in (c, a);
    the quadratic model is identified from six lattice evaluations.
    """
    pts = [(2, 2), (3, 2), (2, 3), (4, 2), (3, 3), (2, 4)]
    A = np.array([[1.0, c, a, c * c, c * a, a * a] for c, a in pts])
    coef = np.linalg.solve(A, np.array([float(phi(p)) for p in pts]))
    return (coef[0] * leak.m0 + coef[1] * leak.m1[0] + coef[2] * leak.m1[1]
            + coef[3] * leak.m2[0, 0] + coef[4] * leak.m2[0, 1]
            + coef[5] * leak.m2[1, 1])


def mass_flux(f: DiscreteMeasure, alpha, R_flux):
    """Mass flux pair (J1, J2) across the 1-norm shell at R_flux."""
    from .kernels import ZETA, kernel_eval

    alpha = validate_alpha(alpha)
    if R_flux <= 0:
        raise ValueError("R_flux must be positive")
    comps, w = f.arrays()
    n = comps.shape[0]
    if n > 4000:
        raise ResourceError("mass flux is O(n^2); support too large")
    j1 = 0.0
    j2 = 0.0
    for iu in range(n):
        u = comps[iu]
        nu = float(u[0] + u[1])
        if nu > R_flux:
            continue
        for iv in range(n):
            v = comps[iv]
            nv = float(v[0] + v[1])
            for ch in range(3):
                if alpha[ch] == 0.0:
                    continue
                if nu + nv < R_flux + ZETA[ch]:
                    continue
                rate = alpha[ch] * kernel_eval(ch + 1, u, v) * w[iu] * w[iv]
                j1 += rate * nu
                j2 -= ZETA[ch] * rate
    return j1, j2


# ---------------------------------------------------------------------------
# trajectory serialization (JSON lines)
# ---------------------------------------------------------------------------


def write_trajectory(run: LatticeRun, path, meta=None):
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for cp in run.checkpoints:
            entries = sorted([[int(c), int(a), float(wv)]
                              for (c, a), wv in cp.measure.entries.items()])
            rec = {"t": cp.t, "entries": entries, "leaked": cp.leaked.to_dict()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trajectory(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "meta" in rec:
                continue
            m = DiscreteMeasure({(c, a): wv for c, a, wv in rec["entries"]})
            leak = LeakAccumulator(rec["leaked"]["m0"],
                                   np.array(rec["leaked"]["m1"]),
                                   np.array(rec["leaked"]["m2"]))
            out.append((rec["t"], m, leak))
    return out
