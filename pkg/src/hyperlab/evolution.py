"""Finite-difference evolver for the coupled wave / Klein-Gordon system

    Box u     = v (A^a d_a v + R v) + Q^{ab} d_a v d_b v  (+ f_u)
    Box v + v = P^{ab} d_a u d_b u                          (+ f_v)

with Box = d_t^2 - Laplacian, on the box [-L, L]^2 with zero Dirichlet data.
The time derivative inside the nonlinear terms uses the second-order backward
difference over the three known levels, so the scheme stays explicit and
second order. The first step comes from a Taylor expansion with the PDE.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from . import kernels
from .errors import CoverageError, InstabilityError, NullConditionError, StencilError
from .fields import T, X1, X2, AnalyticField, bump, bump_data_norm
from .frame import MINKOWSKI, QuadraticForm, SpacetimePoint, is_null_form
from .slab import GridSpec, Slab


@dataclass(frozen=True)
class SystemCoefficients:
    A: tuple = (0.0, 0.0, 0.0)
    R: float = 0.0
    Q: QuadraticForm = field(default_factory=QuadraticForm.zero)
    P: QuadraticForm = field(default_factory=QuadraticForm.zero)

    def __post_init__(self):
        A = tuple(float(a) for a in self.A)
        if len(A) != 3:
            raise ValueError("A needs three components")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", float(self.R))
        if not is_null_form(self.P):
            raise NullConditionError(
                "SystemCoefficients: P fails the null condition P^{ab} xi_a xi_b = 0 "
                "for null xi (xi_0^2 = xi_1^2 + xi_2^2)")

    @classmethod
    def canonical(cls):
        """A = (1, 0, 0), R = 1, Q = P = m."""
        return cls((1.0, 0.0, 0.0), 1.0, MINKOWSKI, MINKOWSKI)

    @classmethod
    def zero(cls):
        return cls()

    def packed(self):
        return np.concatenate([np.array(self.A + (self.R,)), self.Q.entries(), self.P.entries()]).astype(float)

    def rhs_u(self, v, vt, v1, v2):
        A0, A1, A2 = self.A
        return v * (A0 * vt + A1 * v1 + A2 * v2 + self.R * v) + self.Q(np.stack([vt, v1, v2], axis=-1))

    def rhs_v(self, ut, u1, u2):
        return self.P(np.stack([ut, u1, u2], axis=-1))


@dataclass(frozen=True)
class CauchyData:
    """Data (u, d_t u, v, d_t v) at t = 2, as callables of (x1, x2).

    ``epsilon`` is the amplitude used by the instability detector; the
    callables already include it. ``support_radius`` bounds the support.
    """

    u0: Callable
    u1: Callable
    v0: Callable
    v1: Callable
    epsilon: float = 0.0
    support_radius: float = 1.0

    def __post_init__(self):
        if not 0 < self.support_radius <= 1.0:
            raise ValueError("CauchyData: support must lie in the unit disc (support_radius <= 1)")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @classmethod
    def zero(cls):
        z = lambda x1, x2: np.zeros(np.broadcast(x1, x2).shape)  # noqa: E731
        return cls(z, z, z, z, 0.0, 1.0)


DEFAULT_WEIGHTS = (0.0, 1.0, 0.0, 1.0)


def bump_data(epsilon, radius=0.8, centers=None, weights=DEFAULT_WEIGHTS, profile="gauss-bump",
              sharpness=5.0, order=3):
    """Bump data normalised so each piece has Sobolev-type size ``epsilon * weight``.

    Each of u0, u1, v0, v1 is ``epsilon * w / N * bump(x - c)`` where N is
    sum_{|I|<=order} ||d^I bump||_{L^2}; this is how the smallness parameter of
    the system measures data. The default centers put v0 and v1 off the origin
    so that the Klein-Gordon phase varies across the slice.

    The default weights give zero displacements and bump velocities. A
    Klein-Gordon displacement keeps its high wavenumbers, which travel at
    nearly unit speed and hold a slowly decaying tail at t - r = O(1) over the
    hyperboloids s <= 8; velocity data carries the extra 1/omega.
    """
    if centers is None:
        centers = ((0.0, 0.0), (0.0, 0.0), (0.1, 0.0), (-0.05, 0.08))
    reach = max(math.hypot(*c) for c in centers) + radius
    if reach > 1.0:
        raise ValueError(f"bump data reach {reach:.3g} leaves the unit disc")
    norm = bump_data_norm(radius, order, profile, sharpness)

    def piece(c, w):
        amp = epsilon * w / norm
        return lambda x1, x2: amp * bump(x1, x2, c, radius, profile, sharpness)

    fns = [piece(c, w) for c, w in zip(centers, weights)]
    return CauchyData(*fns, epsilon=float(epsilon), support_radius=reach)


# ---------------------------------------------------------------- state

@dataclass
class SlabState:
    """Live evolution state: the most recent time levels of u and v.

    ``levels`` holds level indices k (time t_start + k dt), oldest first.
    """

    grid: GridSpec
    levels: list
    u: list
    v: list
    region: Region
    step_index: int = 0
    last_sup: float = 0.0

    @property
    def t(self) -> float:
        return self.grid.time(self.levels[-1])

    @property
    def times(self):
        return np.array([self.grid.time(k) for k in self.levels])


def _grad(a, dx):
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[1:-1, :] = (a[2:, :] - a[:-2, :]) / (2 * dx)
    gy[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2 * dx)
    return gx, gy


def _lap(a, dx):
    out = np.zeros_like(a)
    out[1:-1, 1:-1] = (a[2:, 1:-1] + a[:-2, 1:-1] + a[1:-1, 2:] + a[1:-1, :-2] - 4 * a[1:-1, 1:-1]) / dx ** 2
    return out


def _zero_edges(a):
    a[0, :] = a[-1, :] = a[:, 0] = a[:, -1] = 0.0
    return a


def initial_state(data: CauchyData, coeffs: SystemCoefficients, grid: GridSpec, forcing=None, region=None) -> SlabState:
    """Levels -1, 0, 1 from the data and a third-order Taylor expansion."""
    X1, X2 = grid.mesh()
    dx, dt = grid.dx, grid.dt
    t0 = grid.t_start
    u0 = _zero_edges(np.asarray(data.u0(X1, X2), dtype=float).copy())
    u1 = _zero_edges(np.asarray(data.u1(X1, X2), dtype=float).copy())
    v0 = _zero_edges(np.asarray(data.v0(X1, X2), dtype=float).copy())
    v1 = _zero_edges(np.asarray(data.v1(X1, X2), dtype=float).copy())
    ux, uy = _grad(u0, dx)
    vx, vy = _grad(v0, dx)
    fu = fv = 0.0
    dfu = dfv = 0.0
    if forcing is not None:
        fu, fv = forcing(t0, X1, X2)
        fp = forcing(t0 + dt, X1, X2)
        fm = forcing(t0 - dt, X1, X2)
        dfu = (fp[0] - fm[0]) / (2 * dt)
        dfv = (fp[1] - fm[1]) / (2 * dt)
    utt = _lap(u0, dx) + coeffs.rhs_u(v0, v1, vx, vy) + fu
    vtt = _lap(v0, dx) - v0 + coeffs.rhs_v(u1, ux, uy) + fv
    uttt = _lap(u1, dx) + dfu
    vttt = _lap(v1, dx) - v1 + dfv
    um = u0 - dt * u1 + 0.5 * dt ** 2 * utt - dt ** 3 / 6 * uttt
    up = u0 + dt * u1 + 0.5 * dt ** 2 * utt + dt ** 3 / 6 * uttt
    vm = v0 - dt * v1 + 0.5 * dt ** 2 * vtt - dt ** 3 / 6 * vttt
    vp = v0 + dt * v1 + 0.5 * dt ** 2 * vtt + dt ** 3 / 6 * vttt
    levels = [-1, 0, 1]
    us = [_zero_edges(np.ascontiguousarray(a, dtype=float)) for a in (um, u0, up)]
    vs = [_zero_edges(np.ascontiguousarray(a, dtype=float)) for a in (vm, v0, vp)]
    region = Region.full(grid) if region is None else region
    keep = region.mask(u0.shape)
    for a in us + vs:
        a[~keep] = 0.0
    return SlabState(grid, levels, us, vs, region, 1)


@dataclass(frozen=True)
class Region:
    """Rows [i0, i1); row i is updated on columns [jlo[i], jhi[i]); [j0, j1) bounds them."""

    i0: int
    i1: int
    j0: int
    j1: int
    jlo: np.ndarray
    jhi: np.ndarray

    @classmethod
    def full(cls, grid: GridSpec):
        n = grid.n
        return cls(1, n - 1, 1, n - 1, np.full(n, 1, dtype=np.intp), np.full(n, n - 1, dtype=np.intp))

    @classmethod
    def disc(cls, grid: GridSpec, radius):
        """Lattice points with r <= radius (clipped to the grid interior)."""
        n, c, dx = grid.n, grid.half, grid.dx
        x = grid.coords
        m = np.floor(np.sqrt(np.maximum(radius * radius - x * x, 0.0)) / dx + 1e-9).astype(np.intp)
        inside = np.abs(x) <= radius + 1e-12
        jlo = np.where(inside, np.maximum(c - m, 1), 1).astype(np.intp)
        jhi = np.where(inside, np.minimum(c + m + 1, n - 1), 1).astype(np.intp)
        rows = np.nonzero(inside)[0]
        if rows.size == 0:
            return cls(c, c, c, c, jlo, jhi)
        i0 = max(int(rows[0]), 1)
        i1 = min(int(rows[-1]) + 1, n - 1)
        return cls(i0, i1, int(jlo[i0:i1].min()), int(jhi[i0:i1].max()), jlo, jhi)

    def mask(self, shape):
        out = np.zeros(shape, dtype=bool)
        for i in range(self.i0, self.i1):
            out[i, self.jlo[i]:self.jhi[i]] = True
        return out


def active_radius(t, support_radius, pad, t_start=2.0):
    """Radius of the updated disc: the data cone plus a pad, never beyond r = t - 1."""
    return min(t - 1.0, support_radius + (t - t_start) + pad)


_EMPTY = np.zeros((1, 1))


def step(state: SlabState, coeffs: SystemCoefficients, forcing=None, *, region=None, keep_levels=4,
         epsilon=0.0, backend=None, threads=1) -> SlabState:
    """Advance ``state`` by one leapfrog step (in place) and return it.

    ``forcing(t, X1, X2) -> (f_u, f_v)`` is sampled at the middle level.
    Raises InstabilityError when the fields stop being finite or exceed
    1e6 * epsilon (when epsilon > 0).
    """
    g = state.grid
    if not g.cfl_factor <= 1 / math.sqrt(2):
        raise ValueError("CFL violated")
    if len(state.u) < 3:
        raise ValueError("step needs three stored levels")
    region = state.region if region is None else region
    i0, i1, j0, j1 = region.i0, region.i1, region.j0, region.j1
    if len(state.u) >= max(keep_levels, 4):
        u_new = state.u.pop(0)
        v_new = state.v.pop(0)
        state.levels.pop(0)
    else:
        u_new = np.zeros((g.n, g.n))
        v_new = np.zeros((g.n, g.n))
    t_mid = g.time(state.levels[-1])
    if forcing is not None:
        x = g.coords
        fu, fv = forcing(t_mid, x[i0:i1, None], x[None, j0:j1])
        shape = (i1 - i0, j1 - j0)
        fu = np.ascontiguousarray(np.broadcast_to(fu, shape), dtype=float)
        fv = np.ascontiguousarray(np.broadcast_to(fv, shape), dtype=float)
        forced = True
    else:
        fu = fv = _EMPTY
        forced = False
    kern = kernels.get_kernel(backend)
    sup = kern.leapfrog_step(u_new, state.u[-1], state.u[-2], state.u[-3],
                             v_new, state.v[-1], state.v[-2], state.v[-3],
                             fu, fv, coeffs.packed(), g.dx, g.dt, i0, i1, j0, j1,
                             region.jlo, region.jhi, forced, threads)
    state.u.append(u_new)
    state.v.append(v_new)
    state.levels.append(state.levels[-1] + 1)
    state.region = region
    state.step_index += 1
    if not math.isfinite(sup) or (epsilon > 0 and sup > 1e6 * epsilon):
        raise InstabilityError(f"instability detected at t={state.t:.6g}: sup norm {sup:.3g}", t=state.t, sup=sup)
    state.last_sup = sup
    return state


# ---------------------------------------------------------------- trajectory

@dataclass(frozen=True)
class Trajectory:
    """Result of :func:`evolve`: per-step sup norms, observer outputs, optional recorded slab."""

    grid: GridSpec
    coeffs: SystemCoefficients
    data: CauchyData
    t_end: float
    times: np.ndarray
    sup_norm: np.ndarray
    metrics: dict
    slices: dict
    slab: Slab | None
    final_state: SlabState
    support_offset: float
    backend: str

    def metric(self, name):
        """(s values, metric values) for a metric recorded by observers."""
        s = sorted(k for k, d in self.metrics.items() if name in d)
        if not s:
            raise CoverageError(f"trajectory holds no metric {name!r}")
        return np.array(s), np.array([self.metrics[k][name] for k in s])


def evolve(data: CauchyData, coeffs: SystemCoefficients, t_end: float, observers: Sequence = (),
           grid: GridSpec | None = None, forcing=None, record=False, active_box=None, pad=0.5,
           backend=None, threads=1) -> Trajectory:
    """Run the leapfrog scheme from t = 2 to ``t_end``.

    Parameters
    ----------
    observers : sequence
        Objects with ``attach(grid, t_end, support_offset)``, ``observe(state)``,
        ``finalize(state)`` and a ``levels_needed`` attribute; their ``metrics``
        and ``slices`` dicts are merged into the trajectory.
    active_box : {"cone", "full"} or None
        "cone" updates only the disc r <= min(t - 1, support + (t - 2) + pad), so
        the fields are exactly zero outside, as finite propagation speed demands;
        default is "cone" without forcing and "full" with it.
    record : bool
        Keep every time level as a :class:`Slab` (memory heavy).
    """
    if grid is None:
        grid = GridSpec(extent=max(float(t_end), 3.0))
    if t_end < grid.t_start:
        raise ValueError("t_end must be >= 2")
    if grid.extent < t_end - 1.0:
        raise CoverageError(f"grid extent {grid.extent} must be at least t_end - 1 = {t_end - 1}")
    if active_box is None:
        active_box = "full" if forcing is not None else "cone"
    support = data.support_radius
    # fields live in t - r >= t_start - support; slices sample slightly beyond that
    support_offset = grid.t_start - support - 0.1

    def region_at(t):
        if active_box == "full":
            return Region.full(grid)
        return Region.disc(grid, active_radius(t, support, pad, grid.t_start))

    state = initial_state(data, coeffs, grid, forcing, region_at(grid.time(1)))

    keep = 4
    for ob in observers:
        ob.attach(grid, t_end, support_offset)
        keep = max(keep, int(getattr(ob, "levels_needed", 4)))

    nsteps = int(math.ceil((t_end - grid.time(1)) / grid.dt - 1e-9))
    times = [grid.time(k) for k in state.levels]
    sups = [max(float(np.max(np.abs(a))) for a in (state.u[i], state.v[i])) for i in range(3)]
    record_u = [a.copy() for a in state.u] if record else None
    record_v = [a.copy() for a in state.v] if record else None

    for ob in observers:
        ob.observe(state)
    for _ in range(max(nsteps, 0)):
        step(state, coeffs, forcing, region=region_at(state.t + grid.dt), keep_levels=keep,
             epsilon=data.epsilon, backend=backend, threads=threads)
        times.append(state.t)
        sups.append(state.last_sup)
        if record:
            record_u.append(state.u[-1].copy())
            record_v.append(state.v[-1].copy())
        for ob in observers:
            ob.observe(state)
    for ob in observers:
        ob.finalize(state)

    metrics, slices = {}, {}
    for ob in observers:
        for s, vals in getattr(ob, "metrics", {}).items():
            metrics.setdefault(s, {}).update(vals)
        slices.update(getattr(ob, "slices", {}))
    slab = None
    if record:
        slab = Slab(grid, np.array(times), np.stack(record_u), np.stack(record_v))
    return Trajectory(grid, coeffs, data, float(t_end), np.array(times), np.array(sups), metrics, slices,
                      slab, state, support_offset, backend or kernels.BACKEND)


# ---------------------------------------------------------------- manufactured solutions

def manufactured_forcing(u_exact: AnalyticField, v_exact: AnalyticField, coeffs: SystemCoefficients):
    """Forcing pair that makes (u_exact, v_exact) an exact solution of the forced system."""

    masks = [sp.lambdify((T, X1, X2), f.mask, "numpy") for f in (u_exact, v_exact) if f.mask is not None]
    masked = len(masks) == 2

    def pair(t, x1, x2):
        d = lambda f, k: f.derivative(*k, t, x1, x2)  # noqa: E731
        box_u = d(u_exact, (2, 0, 0)) - d(u_exact, (0, 2, 0)) - d(u_exact, (0, 0, 2))
        box_v = d(v_exact, (2, 0, 0)) - d(v_exact, (0, 2, 0)) - d(v_exact, (0, 0, 2))
        v = d(v_exact, (0, 0, 0))
        fu = box_u - coeffs.rhs_u(v, d(v_exact, (1, 0, 0)), d(v_exact, (0, 1, 0)), d(v_exact, (0, 0, 1)))
        fv = box_v + v - coeffs.rhs_v(d(u_exact, (1, 0, 0)), d(u_exact, (0, 1, 0)), d(u_exact, (0, 0, 1)))
        return fu, fv

    def forcing(t, x1, x2):
        t, x1, x2 = np.broadcast_arrays(np.asarray(t, dtype=float), x1, x2)
        if not masked:
            return pair(t, x1, x2)
        # both fields vanish off their masks, so only the supports need evaluating
        with np.errstate(all="ignore"):
            inside = np.zeros(t.shape, dtype=bool)
            for m in masks:
                inside |= np.broadcast_to(m(t, x1, x2), t.shape) > 0
        fu, fv = np.zeros(t.shape), np.zeros(t.shape)
        if inside.any():
            fu[inside], fv[inside] = pair(t[inside], x1[inside], x2[inside])
        return fu, fv

    return forcing


def manufactured_data(u_exact: AnalyticField, v_exact: AnalyticField, t0=2.0, epsilon=1.0, support_radius=1.0):
    return CauchyData(u_exact.at(t0), u_exact.dt_at(t0), v_exact.at(t0), v_exact.dt_at(t0),
                      epsilon=epsilon, support_radius=support_radius)


# ---------------------------------------------------------------- hessian identity

def hessian_identity_terms(jet, t, x1, x2):
    """Both sides of (s/t)^2 d_t d_t u = Box u - R_1[u].

    R_1[u] = t^{-1}(2 (x^a/t) L_a d_t u - sum_a L_a db_a u - (r^2/t^2) d_t u + 2 d_t u).
    Returns (lhs, rhs).
    """
    t, x1, x2 = (np.asarray(a, dtype=float) for a in (t, x1, x2))
    ut, u1, u2 = jet[(1, 0, 0)], jet[(0, 1, 0)], jet[(0, 0, 1)]
    utt, ut1, ut2 = jet[(2, 0, 0)], jet[(1, 1, 0)], jet[(1, 0, 1)]
    u11, u22 = jet[(0, 2, 0)], jet[(0, 0, 2)]
    r2 = x1 ** 2 + x2 ** 2
    box = utt - u11 - u22
    La_dt = [x1 * utt + t * ut1, x2 * utt + t * ut2]
    # L_a(db_a u) with db_a u = (x^a/t) u_t + u_a
    L_db = 0.0
    for xa, uta, uaa in ((x1, ut1, u11), (x2, ut2, u22)):
        L_db = L_db + (-xa ** 2 / t ** 2 * ut + xa ** 2 / t * utt + xa * uta + ut + xa * uta + t * uaa)
    R1 = (2 * (x1 / t * La_dt[0] + x2 / t * La_dt[1]) - L_db - r2 / t ** 2 * ut + 2 * ut) / t
    lhs = (t ** 2 - r2) / t ** 2 * utt
    return lhs, box - R1


def hessian_identity_residual(slab: Slab, p: SpacetimePoint, field_name="u") -> float:
    """(s/t)^2 u_tt - (Box u - R_1[u]) at ``p`` from stencil derivatives of a stored slab."""
    try:
        jet = slab.jets_at(field_name, p.t, p.x1, p.x2, 2)
    except (IndexError, StencilError) as exc:
        raise StencilError(f"second-derivative stencil unavailable at {p}") from exc
    lhs, rhs = hessian_identity_terms(jet, p.t, p.x1, p.x2)
    return float(lhs[0] - rhs[0])


# ---------------------------------------------------------------- checkpoints

MAGIC = b"HYPSLAB1"


def save_checkpoint(path, state: SlabState):
    """Write ``state`` in the flat binary checkpoint format.

    Layout (little endian): 8-byte magic ``HYPSLAB1``; int64 n, nlev, first level
    index, step index, i0, i1, j0, j1; float64 dx, extent, cfl_factor, t_start;
    int64 arrays jlo[n], jhi[n] (updated column range per row); then nlev u
    arrays and nlev v arrays, each n*n float64 in row-major order.
    """
    g = state.grid
    nlev = len(state.levels)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        rg = state.region
        fh.write(struct.pack("<8q", g.n, nlev, state.levels[0], state.step_index, rg.i0, rg.i1, rg.j0, rg.j1))
        fh.write(struct.pack("<4d", g.dx, g.extent, g.cfl_factor, g.t_start))
        fh.write(np.ascontiguousarray(rg.jlo, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(rg.jhi, dtype="<i8").tobytes())
        for a in list(state.u) + list(state.v):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path) -> SlabState:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError("not a hyperlab checkpoint")
        n, nlev, k0, step_index, i0, i1, j0, j1 = struct.unpack("<8q", fh.read(64))
        dx, extent, cfl, t_start = struct.unpack("<4d", fh.read(32))
        grid = GridSpec(dx=dx, extent=extent, cfl_factor=cfl, t_start=t_start)
        if grid.n != n:
            raise ValueError("checkpoint grid header is inconsistent")
        jlo = np.frombuffer(fh.read(8 * n), dtype="<i8").astype(np.intp)
        jhi = np.frombuffer(fh.read(8 * n), dtype="<i8").astype(np.intp)
        arrs = [np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).astype(float) for _ in range(2 * nlev)]
    levels = list(range(k0, k0 + nlev))
    return SlabState(grid, levels, arrs[:nlev], arrs[nlev:], Region(i0, i1, j0, j1, jlo, jhi), step_index)
