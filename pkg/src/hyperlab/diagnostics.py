"""Decay fits, bootstrap energy bounds, the Katayama substitution and L2 source norms.

Everything here reads slice metrics recorded by a :class:`SliceObserver`
during :func:`evolve`, so one run feeds all reports. ``plan_run`` picks the
grid extent and end time needed to cover a list of hyperboloids.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import operators
from .errors import ConfigError, CoverageError
from .evolution import CauchyData, SystemCoefficients, Trajectory, evolve
from .foliation import HyperboloidSlice, Metric, SliceObserver, cone_reach, energy_metric, sample_hyperboloid
from .frame import MINKOWSKI
from .slab import GridSpec

DEFAULT_DELTA = 0.1


# ---------------------------------------------------------------- parameters and series

@dataclass(frozen=True)
class BootstrapParams:
    """Constants of the bootstrap bounds E^{1/2} <= C1 eps s^delta."""

    C0: float
    C1: float
    epsilon: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not (self.C0 > 0 and self.C1 > 0):
            raise ConfigError("bootstrap constants must be positive")
        if not self.C1 > self.C0:
            raise ConfigError(f"bootstrap needs C1 > C0 (got C1={self.C1}, C0={self.C0})")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        if self.C1 * self.epsilon > 1.0:
            raise ConfigError(f"bootstrap needs C1 * epsilon <= 1 (got {self.C1 * self.epsilon:.3g})")
        if not 0.0 < self.delta <= 0.1:
            raise ConfigError("delta must lie in (0, 1/10]")

    def bound(self, s):
        return self.C1 * self.epsilon * np.asarray(s, dtype=float) ** self.delta


@dataclass
class DecaySeries:
    s: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.s.shape != self.values.shape or self.s.ndim != 1:
            raise ValueError("s and values must be 1D arrays of equal length")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("values must be nonnegative")

    def restrict(self, lo, hi):
        keep = (self.s >= lo - 1e-12) & (self.s <= hi + 1e-12)
        return DecaySeries(self.s[keep], self.values[keep], self.label)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    prefactor: float
    residual: float
    n: int


def fit_decay_exponent(series: DecaySeries) -> DecayFit:
    """Least-squares fit of log(value) = log(c) + p log(s); residual is the RMS misfit in log space."""
    if series.s.size < 4:
        raise ValueError("need at least 4 points to fit an exponent")
    if np.any(series.values <= 0):
        raise ValueError(f"cannot fit a power law to nonpositive values ({series.label or 'series'})")
    ls = np.log(series.s)
    lv = np.log(series.values)
    p, c = np.polyfit(ls, lv, 1)
    res = lv - (p * ls + c)
    return DecayFit(float(p), float(math.exp(c)), float(np.sqrt(np.mean(res * res))), int(ls.size))


# ---------------------------------------------------------------- slice functionals

def source_f(slc: HyperboloidSlice, coeffs: SystemCoefficients):
    """f = v (A^a d_a v + R v) + Q^{ab} d_a v d_b v, the wave equation source."""
    jv = slc.jets["v"]
    return coeffs.rhs_u(jv[(0, 0, 0)], jv[(1, 0, 0)], jv[(0, 1, 0)], jv[(0, 0, 1)])


def source_p(slc: HyperboloidSlice, coeffs: SystemCoefficients):
    """P^{ab} d_a u d_b u, the Klein-Gordon source."""
    ju = slc.jets["u"]
    return coeffs.rhs_v(ju[(1, 0, 0)], ju[(0, 1, 0)], ju[(0, 0, 1)])


_FIRST = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def _hessian(jet):
    """3x3 list of second derivatives d_a d_b from a jet."""
    H = [[None] * 3 for _ in range(3)]
    for a in range(3):
        for b in range(3):
            k = [0, 0, 0]
            k[a] += 1
            k[b] += 1
            H[a][b] = jet[tuple(k)]
    return H


@dataclass
class KatayamaFields:
    """w = v - P^{ab} d_a u d_b u with the bilinear term B and the trilinear term T."""

    w: np.ndarray
    B: np.ndarray
    T: np.ndarray
    v: np.ndarray
    Pdudu: np.ndarray

    def residual(self):
        """w + P du du - v, zero up to rounding."""
        return self.w + self.Pdudu - self.v


def katayama_fields(ju, jv, coeffs: SystemCoefficients) -> KatayamaFields:
    """Katayama fields from jets of u and v (second order).

    B = P^{ab} m^{a'b'} d_a' d_a u d_b' d_b u and
    T = P^{ab} d_a u d_b f with f = v (A^c d_c v + R v) + Q^{cd} d_c v d_d v.
    With Box = m^{ab} d_a d_b, m = diag(1, -1, -1), these satisfy
    Box w + w = -2 P^{ab} d_a Box u d_b u - 2 B, i.e. -2 T - 2 B on solutions.
    """
    P = coeffs.P.coeffs
    m = MINKOWSKI.coeffs
    du = [ju[k] for k in _FIRST]
    Hu = _hessian(ju)
    Pdudu = sum(P[a, b] * du[a] * du[b] for a in range(3) for b in range(3) if P[a, b] != 0.0)
    B = 0.0
    for a in range(3):
        for b in range(3):
            if P[a, b] == 0.0:
                continue
            for a2 in range(3):
                for b2 in range(3):
                    if m[a2, b2] != 0.0:
                        B = B + P[a, b] * m[a2, b2] * Hu[a2][a] * Hu[b2][b]
    # d_b f by the product rule on jets of v
    v = jv[(0, 0, 0)]
    dv = [jv[k] for k in _FIRST]
    Hv = _hessian(jv)
    A = coeffs.A
    R = coeffs.R
    Q = coeffs.Q.coeffs
    T = 0.0
    for b in range(3):
        lin = sum(A[c] * dv[c] for c in range(3)) + R * v
        dlin = sum(A[c] * Hv[c][b] for c in range(3)) + R * dv[b]
        dq = sum(2.0 * Q[c, d] * Hv[c][b] * dv[d] for c in range(3) for d in range(3) if Q[c, d] != 0.0)
        dfb = dv[b] * lin + v * dlin + dq
        Pb = sum(P[a, b] * du[a] for a in range(3) if P[a, b] != 0.0)
        T = T + Pb * dfb
    zero = np.zeros(np.shape(v))
    return KatayamaFields(v - Pdudu + zero, B + zero, T + zero, v + zero, Pdudu + zero)


def katayama_substitution(source, coeffs: SystemCoefficients) -> KatayamaFields:
    """Katayama fields on a hyperboloid slice, or on the lattice of an evolution state.

    For a :class:`SlabState` the jets are taken at the time of the
    second-newest level over the active region.
    """
    if isinstance(source, HyperboloidSlice):
        if source.order < 2:
            raise CoverageError("Katayama fields need second-order jets")
        return katayama_fields(source.jets["u"], source.jets["v"], coeffs)
    from .slab import lattice_jets

    state = source
    nl = 4
    if len(state.levels) < nl:
        raise CoverageError("state holds fewer than four levels")
    times = state.times[-nl:]
    reg = state.region
    rows, cols = [], []
    for i in range(reg.i0, reg.i1):
        lo, hi = int(reg.jlo[i]), int(reg.jhi[i])
        if hi > lo:
            rows.append(np.full(hi - lo, i))
            cols.append(np.arange(lo, hi))
    I = np.concatenate(rows) if rows else np.zeros(0, dtype=np.intp)
    J = np.concatenate(cols) if cols else np.zeros(0, dtype=np.intp)
    n = state.grid.n
    keep = (I >= 2) & (J >= 2) & (I <= n - 3) & (J <= n - 3)
    I, J = I[keep], J[keep]
    tstar = np.full(I.shape, times[-2])
    ju = lattice_jets(state.u[-nl:], times, I, J, tstar, state.grid.dx, 2)
    jv = lattice_jets(state.v[-nl:], times, I, J, tstar, state.grid.dx, 2)
    return katayama_fields(ju, jv, coeffs)


# ---------------------------------------------------------------- metric sets

SUP_DTU = "sup|dt u|"
SUP_V = "sup|v|t/s"
L2_F = "L2:f"
L2_PDUDU = "L2:Pdudu"
SUP_B = "sup|B|t/s"
SUP_T = "sup|T|(t/s)^2"


def energy_words(max_order=2):
    return operators.vector_field_words(max_order)


def energy_label(field_name, word):
    c2 = 0 if field_name == "u" else 1
    return energy_metric(field_name, c2, word).name


def canonical_metrics(coeffs: SystemCoefficients, max_order=2, energies=True, sources=True, katayama=True):
    """Slice metrics for the decay, bootstrap, source-norm and Katayama reports."""
    ms = [
        Metric(SUP_DTU, lambda f: np.abs(f.jets["u"][(1, 0, 0)]), "max"),
        Metric(SUP_V, lambda f: np.abs(f.jets["v"][(0, 0, 0)]) * f.t / f.s, "max"),
    ]
    if energies:
        for w in energy_words(max_order):
            ms.append(energy_metric("u", 0, w))
            ms.append(energy_metric("v", 1, w))
    if sources:
        ms.append(Metric(L2_F, lambda f: source_f(f, coeffs), "l2"))
        ms.append(Metric(L2_PDUDU, lambda f: source_p(f, coeffs), "l2"))
    if katayama:
        def kB(f):
            k = katayama_fields(f.jets["u"], f.jets["v"], coeffs)
            return np.abs(k.B) * f.t / f.s

        def kT(f):
            k = katayama_fields(f.jets["u"], f.jets["v"], coeffs)
            return np.abs(k.T) * (f.t / f.s) ** 2

        ms.append(Metric(SUP_B, kB, "max"))
        ms.append(Metric(SUP_T, kT, "max"))
    return ms


def jet_order_for(max_order=2, energies=True, katayama=True):
    order = 1
    if energies:
        order = max(order, max_order + 1)
    if katayama:
        order = max(order, 2)
    return min(order, 3)


# ---------------------------------------------------------------- planning and running

def support_offset_for(data: CauchyData, t_start=2.0):
    """Offset c with fields vanishing where t - r < c (matches :func:`evolve`)."""
    return t_start - data.support_radius - 0.1


def plan_run(s_list, data: CauchyData, dx=0.02, cfl_factor=0.45, margin_cells=4):
    """Grid and end time whose slab covers every H_s in ``s_list`` up to the support cone."""
    c = support_offset_for(data)
    s_max = max(s_list)
    reach = cone_reach(s_max, c)
    t_end = math.sqrt(s_max * s_max + reach * reach) + 2 * cfl_factor * dx
    extent = max(reach + margin_cells * dx, t_end - 1.0)
    extent = math.ceil(extent / dx) * dx
    return GridSpec(dx=dx, extent=extent, cfl_factor=cfl_factor), t_end


def run_with_diagnostics(data: CauchyData, coeffs: SystemCoefficients, s_list, dx=0.02, cfl_factor=0.45,
                         max_order=2, energies=True, sources=True, katayama=True, backend=None, threads=1,
                         extra_metrics=(), grid: GridSpec | None = None, t_end=None):
    """Evolve and record the canonical slice metrics on every H_s of ``s_list``.

    ``grid`` and ``t_end`` default to :func:`plan_run`; explicit values must
    cover what it asks for.
    """
    need_grid, need_t = plan_run(s_list, data, dx, cfl_factor)
    if grid is not None and grid.extent < need_grid.extent - 1e-9:
        raise CoverageError(f"grid extent {grid.extent} does not reach H_s for s = {max(s_list)} "
                            f"(needs {need_grid.extent:.4g})")
    if t_end is not None and t_end < need_t - 1e-9:
        raise CoverageError(f"t_end = {t_end} ends before H_s for s = {max(s_list)} (needs {need_t:.4g})")
    grid = grid or need_grid
    t_end = need_t if t_end is None else t_end
    ms = canonical_metrics(coeffs, max_order, energies, sources, katayama) + list(extra_metrics)
    order = jet_order_for(max_order, energies, katayama)
    ob = SliceObserver(s_list, order=order, metrics=ms)
    return evolve(data, coeffs, t_end, observers=[ob], grid=grid, backend=backend, threads=threads)


def series(traj: Trajectory, name, label=None) -> DecaySeries:
    s, vals = traj.metric(name)
    return DecaySeries(s, vals, label or name)


# ---------------------------------------------------------------- bootstrap

def measure_C0(traj: Trajectory, epsilon, max_order=2, s0=None):
    """max over |I|+|J| <= max_order of E(s0, d^I L^J)^{1/2} / eps for u and v (s0: first slice)."""
    if epsilon <= 0:
        raise ConfigError("C0 is defined relative to a positive epsilon")
    vals = []
    for fname in ("u", "v"):
        for w in energy_words(max_order):
            s, E = traj.metric(energy_label(fname, w))
            k = 0 if s0 is None else int(np.argmin(np.abs(s - s0)))
            vals.append(math.sqrt(max(E[k], 0.0)) / epsilon)
    return max(vals)


@dataclass
class BootstrapReport:
    params: BootstrapParams
    rows: list = field(default_factory=list)  # (field, word label, s, E^{1/2}, bound, ok)
    first_violation: float | None = None

    @property
    def passed(self):
        return self.first_violation is None

    def worst_ratio(self):
        return max((r[3] / r[4] for r in self.rows if r[4] > 0), default=0.0)


def bootstrap_check(traj: Trajectory, params: BootstrapParams, max_order=2, s_range=None) -> BootstrapReport:
    """Check E(s, d^I L^J u)^{1/2} <= C1 eps s^delta and the same for E_1 of v at every recorded s."""
    if max_order > 2:
        raise ValueError("vector fields are applied up to total order 2")
    rep = BootstrapReport(params)
    for fname in ("u", "v"):
        for w in energy_words(max_order):
            label = energy_label(fname, w)
            if traj.metrics:
                s, E = traj.metric(label)
            elif traj.slab is not None and s_range is not None:
                s = np.asarray(s_range, dtype=float)
                E = []
                for sv in s:
                    slc = sample_hyperboloid(traj.slab, sv, order=max_order + 1,
                                             support_offset=traj.support_offset, fields=(fname,))
                    from .foliation import energy
                    E.append(energy(slc, 0 if fname == "u" else 1, "A", fname, w).value)
                E = np.array(E)
            else:
                raise CoverageError("trajectory has no energy metrics")
            if s_range is not None:
                keep = (s >= min(s_range) - 1e-12) & (s <= max(s_range) + 1e-12)
                s, E = s[keep], E[keep]
            root = np.sqrt(np.maximum(E, 0.0))
            bound = params.bound(s)
            for sv, e, b in zip(s, root, bound):
                ok = bool(e <= b)
                rep.rows.append((fname, operators.word_label(w), float(sv), float(e), float(b), ok))
                if not ok and (rep.first_violation is None or sv < rep.first_violation):
                    rep.first_violation = float(sv)
    return rep


# ---------------------------------------------------------------- reports

@dataclass
class SourceReport:
    s: np.ndarray
    f_norm: np.ndarray
    p_norm: np.ndarray
    f_fit: DecayFit | None
    p_fit: DecayFit | None


def _safe_fit(s, v, label):
    try:
        return fit_decay_exponent(DecaySeries(s, v, label))
    except ValueError:
        return None


def source_l2_report(traj: Trajectory, coeffs: SystemCoefficients | None = None, s_list=None) -> SourceReport:
    """||f||_{L2(H_s)} and ||P du du||_{L2(H_s)} with fitted decay exponents.

    Uses recorded metrics when available, otherwise samples the recorded slab.
    """
    coeffs = coeffs or traj.coeffs
    if traj.metrics and any(L2_F in d for d in traj.metrics.values()):
        s, F = traj.metric(L2_F)
        _, Pn = traj.metric(L2_PDUDU)
    elif traj.slab is not None and s_list is not None:
        s = np.asarray(sorted(s_list), dtype=float)
        F, Pn = [], []
        for sv in s:
            slc = sample_hyperboloid(traj.slab, sv, order=1, support_offset=traj.support_offset)
            F.append(slc.l2_norm(source_f(slc, coeffs)))
            Pn.append(slc.l2_norm(source_p(slc, coeffs)))
        F, Pn = np.array(F), np.array(Pn)
    else:
        raise CoverageError("trajectory has neither source metrics nor a recorded slab")
    if s_list is not None:
        keep = np.isin(np.round(s, 9), np.round(np.asarray(s_list, dtype=float), 9))
        s, F, Pn = s[keep], F[keep], Pn[keep]
    return SourceReport(s, F, Pn, _safe_fit(s, F, L2_F), _safe_fit(s, Pn, L2_PDUDU))


@dataclass
class KatayamaReport:
    s: np.ndarray
    B_normalized: np.ndarray
    T_normalized: np.ndarray


def katayama_report(traj: Trajectory, delta=DEFAULT_DELTA) -> KatayamaReport:
    """sup |B| (t/s) s^{4-4 delta} and sup |T| (t/s)^2 s^{3-3 delta} on each recorded slice."""
    s, B = traj.metric(SUP_B)
    _, T = traj.metric(SUP_T)
    return KatayamaReport(s, B * s ** (4 - 4 * delta), T * s ** (3 - 3 * delta))


@dataclass
class DecayReport:
    dtu: DecaySeries
    v: DecaySeries
    dtu_fit: DecayFit | None
    v_fit: DecayFit | None


def decay_report(traj: Trajectory, s_lo=3.0, s_hi=8.0) -> DecayReport:
    """Fits of sup_{H_s}|d_t u| and sup_{H_s}|v| t/s over [s_lo, s_hi]."""
    a = series(traj, SUP_DTU).restrict(s_lo, s_hi)
    b = series(traj, SUP_V).restrict(s_lo, s_hi)
    return DecayReport(a, b, _safe_fit(a.s, a.values, SUP_DTU), _safe_fit(b.s, b.values, SUP_V))


# ---------------------------------------------------------------- CSV

def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in row])


def write_metrics_csv(path, traj: Trajectory):
    names = sorted({n for d in traj.metrics.values() for n in d})
    rows = [[float(s)] + [float(traj.metrics[s].get(n, float("nan"))) for n in names] for s in sorted(traj.metrics)]
    write_csv(path, ["s"] + names, rows)


def write_bootstrap_csv(path, rep: BootstrapReport):
    write_csv(path, ["field", "word", "s", "sqrtE", "bound", "ok"], [list(r[:5]) + [int(r[5])] for r in rep.rows])


def write_source_csv(path, rep: SourceReport):
    write_csv(path, ["s", "L2_f", "L2_Pdudu"], [[float(a), float(b), float(c)] for a, b, c in zip(rep.s, rep.f_norm, rep.p_norm)])


def write_decay_csv(path, rep: DecayReport):
    rows = [[float(s), float(a), float(b)] for s, a, b in zip(rep.dtu.s, rep.dtu.values, rep.v.values)]
    write_csv(path, ["s", SUP_DTU, SUP_V], rows)


def write_katayama_csv(path, rep: KatayamaReport):
    write_csv(path, ["s", "sup|B|(t/s)s^(4-4d)", "sup|T|(t/s)^2 s^(3-3d)"],
              [[float(a), float(b), float(c)] for a, b, c in zip(rep.s, rep.B_normalized, rep.T_normalized)])
