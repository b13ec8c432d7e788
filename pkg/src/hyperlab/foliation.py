"""Hyperboloid slices, hyperboloidal energies, L2(H_s) norms and the Klainerman-Sobolev ratio.

Every integral over H_s uses the flat measure dx of the spatial projection,
discretised by the slab lattice (weight dx^2 per point). Slices are built
either from a stored :class:`~hyperlab.slab.Slab` or streamed during an
evolution by :class:`SliceObserver`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import operators
from .errors import CoverageError, DomainError, MissingDerivativeError
from .frame import SpacetimePoint
from .slab import GridSpec, Slab, jet_keys, lattice_jets

FORMS = ("A", "B", "C")


@dataclass
class HyperboloidSlice:
    """Samples on H_s at lattice columns; ``jets[name][(kt, k1, k2)]`` are derivative samples."""

    s: float
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    weights: np.ndarray
    jets: dict = field(default_factory=dict)
    order: int = 1

    @property
    def r(self):
        return np.hypot(self.x1, self.x2)

    @property
    def size(self):
        return self.t.size

    def get(self, name, key=(0, 0, 0)):
        try:
            return self.jets[name][key]
        except KeyError:
            raise MissingDerivativeError(f"slice lacks {name} derivative {key}") from None

    def apply(self, name, word):
        """Samples of d^I L^J applied to field ``name`` (word applied right to left)."""
        op = operators.word_operator(word)
        if operators.order(op) > self.order:
            raise MissingDerivativeError(f"word {word} needs jets of order {operators.order(op)}, slice has {self.order}")
        if name not in self.jets:
            raise MissingDerivativeError(f"slice lacks field {name!r}")
        return operators.evaluate(op, self.jets[name], self.t, self.x1, self.x2)

    def integrate(self, density):
        return float(np.sum(self.weights * density))

    def l2_norm(self, values):
        return math.sqrt(max(self.integrate(np.asarray(values) ** 2), 0.0))

    @classmethod
    def concat(cls, parts, s=None, order=None):
        parts = [p for p in parts if p.size]
        if not parts:
            return cls(s if s is not None else 0.0, *(np.zeros(0) for _ in range(4)), {}, order or 0)
        names = parts[0].jets.keys()
        jets = {n: {k: np.concatenate([p.jets[n][k] for p in parts]) for k in parts[0].jets[n]} for n in names}
        cat = lambda a: np.concatenate([getattr(p, a) for p in parts])  # noqa: E731
        return cls(parts[0].s, cat("t"), cat("x1"), cat("x2"), cat("weights"), jets, parts[0].order)


def cone_reach(s, offset):
    """Largest r on H_s with t - r >= offset."""
    return (s * s - offset * offset) / (2.0 * offset)


def sample_hyperboloid(slab: Slab, s: float, order: int = 1, support_offset: float = 1.0, fields=None) -> HyperboloidSlice:
    """Build the slice H_s from a stored slab.

    Samples sit at the lattice columns with t - r > ``support_offset`` (default:
    the cone region K) at their own time t = sqrt(s^2 + r^2); time dependence is
    interpolated through four (five for third-order jets) stored levels.
    """
    if s < 2.0:
        raise DomainError("slices are defined for s >= 2")
    g = slab.grid
    reach = cone_reach(s, support_offset)
    if reach > g.extent - 3 * g.dx:
        raise CoverageError(f"H_{s} reaches r={reach:.3g}, beyond the grid extent {g.extent}")
    t_need = math.sqrt(s * s + reach * reach)
    lo, hi = slab.t_range
    if t_need > hi + 1e-12 or s < lo:
        raise CoverageError(f"slab time range [{lo}, {hi}] does not contain H_{s} (needs up to t={t_need:.4g})")
    x = g.coords
    k = int(math.ceil(reach / g.dx)) + 1
    idx = np.arange(max(g.half - k, 2), min(g.half + k + 1, g.n - 2))
    I, J = np.meshgrid(idx, idx, indexing="ij")
    X1, X2 = x[I], x[J]
    r = np.hypot(X1, X2)
    tt = np.sqrt(s * s + r * r)
    sel = (tt - r) > support_offset
    I, J, X1, X2, tt = I[sel], J[sel], X1[sel], X2[sel], tt[sel]
    fields = fields or (("u", "v") if slab.v is not None else ("u",))
    jets = {name: slab.jets(name, I, J, tt, order) for name in fields}
    return HyperboloidSlice(float(s), tt, X1, X2, np.full(tt.shape, g.dx ** 2), jets, order)


# ---------------------------------------------------------------- energies

@dataclass(frozen=True)
class EnergyValue:
    value: float
    c2: int
    form_used: str


def energy_density(slc: HyperboloidSlice, c2=0, form="A", name="u", word=()):
    """Pointwise integrand of E_{c2}(s, D u) for the word D (identity by default)."""
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if c2 not in (0, 1):
        raise ValueError("c2 must be 0 or 1")
    word = tuple(word)
    w = slc.apply(name, word) if c2 else 0.0
    wt = slc.apply(name, ("dt",) + word)
    w1 = slc.apply(name, ("d1",) + word)
    w2 = slc.apply(name, ("d2",) + word)
    t, x1, x2 = slc.t, slc.x1, slc.x2
    a1, a2 = x1 / t, x2 / t
    if form == "A":
        dens = wt * wt + w1 * w1 + w2 * w2 + 2.0 * (a1 * wt * w1 + a2 * wt * w2)
    elif form == "B":
        q2 = (slc.s / t) ** 2
        db1 = a1 * wt + w1
        db2 = a2 * wt + w2
        dens = db1 * db1 + db2 * db2 + q2 * wt * wt
    else:
        q2 = (slc.s / t) ** 2
        perp = wt + a1 * w1 + a2 * w2
        rot = (x1 * w2 - x2 * w1) / t
        dens = perp * perp + q2 * (w1 * w1 + w2 * w2) + rot * rot
    return dens + c2 * w * w if c2 else dens


def energy(slc: HyperboloidSlice, c2=0, form="A", name="u", word=()) -> EnergyValue:
    """E_{c2}(s, D u) = integral over H_s (measure dx) of the chosen equivalent integrand."""
    return EnergyValue(slc.integrate(energy_density(slc, c2, form, name, word)), c2, form)


def box_residual(slc: HyperboloidSlice, name="u", c2=0):
    """Samples of Box u + c2 u from second-order jets."""
    j = slc.jets.get(name)
    if j is None or (2, 0, 0) not in j:
        raise MissingDerivativeError("residual needs second-order jets")
    return j[(2, 0, 0)] - j[(0, 2, 0)] - j[(0, 0, 2)] + c2 * j[(0, 0, 0)]


def ks_denominator(slc: HyperboloidSlice, name="u", max_order=2):
    return sum(slc.l2_norm(slc.apply(name, w)) for w in operators.vector_field_words(max_order))


@dataclass(frozen=True)
class KSResult:
    ratio: float
    status: str
    numerator: float
    denominator: float


def klainerman_sobolev_ratio(slab: Slab, s: float, p: SpacetimePoint, name="u", support_offset=1.0) -> KSResult:
    """t |u(p)| / sum_{|I|+|J|<=2} ||d^I L^J u||_{L2(H_s)} for p on H_s in K."""
    if not p.in_cone:
        raise DomainError("KS ratio needs p in K")
    if abs(p.t * p.t - p.r ** 2 - s * s) > 1e-9 * s * s:
        raise DomainError("p must lie on H_s")
    slc = sample_hyperboloid(slab, s, order=2, support_offset=support_offset, fields=(name,))
    den = ks_denominator(slc, name)
    num = p.t * abs(float(slab.jets_at(name, p.t, p.x1, p.x2, 0)[(0, 0, 0)][0]))
    if den == 0.0:
        return KSResult(float("nan"), "zero-field", num, den)
    return KSResult(num / den, "ok", num, den)


# ---------------------------------------------------------------- energy inequality

@dataclass(frozen=True)
class EnergyInequalityReport:
    lhs: float
    rhs: float
    slack: float
    s: np.ndarray
    energy: np.ndarray
    source_norm: np.ndarray
    worst_s: float


def energy_inequality_from_series(s, energies, fnorms) -> EnergyInequalityReport:
    """Check E(s)^{1/2} <= E(s0)^{1/2} + int_{s0}^s ||f|| for every s of the series (trapezoid in s).

    ``slack`` is the smallest rhs - lhs over s > s0; at s0 both sides agree by construction.
    """
    s = np.asarray(s, dtype=float)
    root = np.sqrt(np.maximum(np.asarray(energies, dtype=float), 0.0))
    f = np.asarray(fnorms, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])
    rhs = root[0] + cum
    gap = rhs - root
    k = int(np.argmin(gap[1:])) + 1 if gap.size > 1 else 0
    return EnergyInequalityReport(float(root[-1]), float(rhs[-1]), float(gap[k]), s, np.asarray(energies), f, float(s[k]))


def check_energy_inequality(traj, c2: int, s0: float, s1: float, n_s: int = 41, name=None) -> EnergyInequalityReport:
    """Both sides of the hyperboloidal energy inequality for a field of an evolved trajectory.

    The field is u for c2 = 0 and v for c2 = 1 unless ``name`` is given; the
    source is f = Box w + c2 w evaluated from the numerical solution. Uses the
    recorded slab when present, otherwise metrics ``E{c2}:{name}`` and
    ``F{c2}:{name}`` stored by an observer.
    """
    name = name or ("u" if c2 == 0 else "v")
    if traj.slab is not None:
        s = np.linspace(s0, s1, n_s)
        E, F = [], []
        for sv in s:
            slc = sample_hyperboloid(traj.slab, sv, order=2, support_offset=traj.support_offset, fields=(name,))
            E.append(energy(slc, c2, "A", name).value)
            F.append(slc.l2_norm(box_residual(slc, name, c2)))
        return energy_inequality_from_series(s, E, F)
    try:
        sE, E = traj.metric(f"E{c2}:{name}")
        sF, F = traj.metric(f"F{c2}:{name}")
    except CoverageError as exc:
        raise CoverageError("trajectory has neither a recorded slab nor energy metrics") from exc
    keep = (sE >= s0 - 1e-12) & (sE <= s1 + 1e-12)
    if keep.sum() < 2 or not np.allclose(sE, sF):
        raise CoverageError(f"trajectory metrics do not cover [{s0}, {s1}]")
    return energy_inequality_from_series(sE[keep], E[keep], F[keep])


# ---------------------------------------------------------------- streaming observer

@dataclass(frozen=True)
class Metric:
    """A slice functional: kind 'sum' integrates, 'l2' takes the L2 norm, 'max' the sup."""

    name: str
    fn: Callable
    kind: str = "sum"

    def __post_init__(self):
        if self.kind not in ("sum", "l2", "max"):
            raise ValueError("metric kind must be 'sum', 'l2' or 'max'")

    def partial(self, frag: HyperboloidSlice):
        vals = np.asarray(self.fn(frag), dtype=float)
        if self.kind == "max":
            return float(np.max(vals)) if vals.size else 0.0
        if self.kind == "l2":
            return float(np.sum(frag.weights * vals * vals))
        return float(np.sum(frag.weights * vals))

    def combine(self, parts):
        if self.kind == "max":
            return max(parts, default=0.0)
        total = math.fsum(parts)
        return math.sqrt(max(total, 0.0)) if self.kind == "l2" else total


def energy_metric(name, c2, word=(), form="A"):
    label = f"E{c2}:{name}" if not word else f"E{c2}:{name}:{operators.word_label(word)}"
    return Metric(label, lambda f: energy_density(f, c2, form, name, word), "sum")


def residual_metric(name, c2):
    return Metric(f"F{c2}:{name}", lambda f: box_residual(f, name, c2), "l2")


class SliceObserver:
    """Samples H_s for each requested s while the evolution runs.

    Lattice columns are visited once, in the step whose time band contains
    their slice time; jets use the last ``levels_needed`` levels. Values are
    reduced through ``metrics`` and, with ``keep=True``, whole slices are kept.
    """

    def __init__(self, s_values, order=1, metrics=(), keep=False, fields=("u", "v"), flush_points=200_000):
        self.s_values = sorted(float(s) for s in s_values)
        if any(s < 2.0 for s in self.s_values):
            raise DomainError("slices are defined for s >= 2")
        self.order = int(order)
        self.metric_list = list(metrics)
        self.keep = keep
        self.fields = tuple(fields)
        self.flush_points = flush_points
        self.levels_needed = max(4, self.order + 2)
        self.metrics = {}
        self.slices = {}

    def attach(self, grid: GridSpec, t_end: float, support_offset: float):
        self.grid = grid
        self.offset = support_offset
        t_last = grid.time(math.ceil((t_end - grid.t_start) / grid.dt - 1e-9) + 1)
        reach = {s: cone_reach(s, support_offset) for s in self.s_values}
        for s, rr in reach.items():
            if rr > grid.extent - 3 * grid.dx:
                raise CoverageError(f"H_{s} reaches r={rr:.3g}, beyond the grid extent {grid.extent}")
            if math.sqrt(s * s + rr * rr) > t_last - 1e-9 * t_last:
                raise CoverageError(f"H_{s} needs t up to {math.sqrt(s * s + rr * rr):.4g} > t_end={t_end}")
        rmax = max(reach.values(), default=0.0)
        k = int(math.ceil(rmax / grid.dx)) + 1
        idx = np.arange(max(grid.half - k, 2), min(grid.half + k + 1, grid.n - 2))
        I, J = np.meshgrid(idx, idx, indexing="ij")
        x = grid.coords
        r2 = x[I] ** 2 + x[J] ** 2
        order = np.argsort(r2, axis=None, kind="stable")
        self._r2 = r2.ravel()[order]
        self._I = I.ravel()[order].astype(np.intp)
        self._J = J.ravel()[order].astype(np.intp)
        self._reach2 = {s: rr * rr for s, rr in reach.items()}
        self._done = {s: -np.inf for s in self.s_values}
        self._pending = {s: [] for s in self.s_values}
        self._npending = {s: 0 for s in self.s_values}
        self._parts = {s: {m.name: [] for m in self.metric_list} for s in self.s_values}
        self._kept = {s: [] for s in self.s_values}

    def _band(self, state, t_hi, final=False):
        nl = self.levels_needed
        times = state.times[-nl:]
        for s in self.s_values:
            t_lo = self._done[s]
            if t_hi < s or t_hi <= t_lo:
                continue
            a2 = -np.inf if t_lo == -np.inf else t_lo * t_lo - s * s
            b2 = min(t_hi * t_hi - s * s, self._reach2[s])
            self._done[s] = t_hi
            ia = 0 if a2 < 0 else np.searchsorted(self._r2, a2, side="right")
            ib = np.searchsorted(self._r2, b2, side="right")
            if ib <= ia:
                continue
            I, J = self._I[ia:ib], self._J[ia:ib]
            x = self.grid.coords
            X1, X2 = x[I], x[J]
            r = np.sqrt(self._r2[ia:ib])
            tt = np.sqrt(s * s + self._r2[ia:ib])
            sel = (tt - r) > self.offset
            if not sel.all():
                I, J, X1, X2, tt = I[sel], J[sel], X1[sel], X2[sel], tt[sel]
            if tt.size == 0:
                continue
            jets = {}
            for name in self.fields:
                levels = getattr(state, name)[-nl:]
                jets[name] = lattice_jets(levels, times, I, J, tt, self.grid.dx, self.order)
            frag = HyperboloidSlice(s, tt, X1, X2, np.full(tt.shape, self.grid.dx ** 2), jets, self.order)
            self._pending[s].append(frag)
            self._npending[s] += tt.size
            if self._npending[s] >= self.flush_points:
                self._flush(s)

    def _flush(self, s):
        if not self._pending[s]:
            return
        frag = HyperboloidSlice.concat(self._pending[s], s, self.order)
        self._pending[s] = []
        self._npending[s] = 0
        for m in self.metric_list:
            self._parts[s][m.name].append(m.partial(frag))
        if self.keep:
            self._kept[s].append(frag)

    def observe(self, state):
        if len(state.levels) < self.levels_needed:
            return
        self._band(state, state.times[-2])

    def finalize(self, state):
        if len(state.levels) >= self.levels_needed:
            self._band(state, state.times[-1], final=True)
        for s in self.s_values:
            self._flush(s)
            self.metrics[s] = {m.name: m.combine(self._parts[s][m.name]) for m in self.metric_list}
            if self.keep:
                self.slices[s] = HyperboloidSlice.concat(self._kept[s], s, self.order)
