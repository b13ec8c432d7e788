import csv

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperlab import diagnostics as dg
from hyperlab.errors import ConfigError, CoverageError
from hyperlab.evolution import SystemCoefficients, bump_data, evolve, initial_state, step
from hyperlab.fields import T, X1, X2
from hyperlab.foliation import energy, sample_hyperboloid
from hyperlab.frame import MINKOWSKI, QuadraticForm
from hyperlab.slab import GridSpec, jet_keys

COEFFS = [SystemCoefficients.canonical(),
          SystemCoefficients((0.3, -0.5, 0.2), 0.7, QuadraticForm(2.0 * MINKOWSKI.coeffs),
                             QuadraticForm(-1.5 * MINKOWSKI.coeffs))]


def _box(e):
    return sp.diff(e, T, 2) - sp.diff(e, X1, 2) - sp.diff(e, X2, 2)


def _jet(expr, pts, order=2):
    return {k: np.broadcast_to(sp.lambdify((T, X1, X2), sp.diff(expr, T, k[0], X1, k[1], X2, k[2]), "numpy")(*pts),
                               pts[0].shape).astype(float)
            for k in jet_keys(order)}


@pytest.mark.parametrize("co", COEFFS)
def test_katayama_identity_symbolic(co):
    # Box w + w = (Box v + v - P du du) - 2 P^{ab} d_a Box u d_b u - 2 B for any smooth u, v
    u = sp.sin(T - 0.3 * X1) * sp.exp(-X2 ** 2 / 4) + T * X1 * X2 / 5
    v = sp.cos(T + X2) * sp.exp(-(X1 ** 2) / 3) + T ** 2 * X1 / 7
    P = sp.Matrix(co.P.coeffs)
    X = (T, X1, X2)
    du = [sp.diff(u, x) for x in X]
    Pdudu = sum(P[a, b] * du[a] * du[b] for a in range(3) for b in range(3))
    w = v - Pdudu
    lhs = _box(w) + w - (_box(v) + v - Pdudu)
    PboxU = sum(P[a, b] * sp.diff(_box(u), X[a]) * du[b] for a in range(3) for b in range(3))
    rng = np.random.default_rng(3)
    pts = (rng.uniform(2, 6, 50), rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50))
    kf = dg.katayama_fields(_jet(u, pts), _jet(v, pts), co)
    got = -2 * sp.lambdify(X, PboxU, "numpy")(*pts) - 2 * kf.B
    want = sp.lambdify(X, lhs, "numpy")(*pts)
    assert np.allclose(got, want, rtol=1e-10, atol=1e-10)
    # T = P^{ab} d_a u d_b f with f the wave source built from v
    A = co.A
    Q = sp.Matrix(co.Q.coeffs)
    dv = [sp.diff(v, x) for x in X]
    f = v * (sum(A[c] * dv[c] for c in range(3)) + co.R * v) + sum(Q[c, d] * dv[c] * dv[d]
                                                                   for c in range(3) for d in range(3))
    Texpr = sum(P[a, b] * du[a] * sp.diff(f, X[b]) for a in range(3) for b in range(3))
    assert np.allclose(kf.T, sp.lambdify(X, Texpr, "numpy")(*pts), rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(kf.residual())) < 1e-14


@settings(max_examples=60)
@given(st.floats(-3.0, 1.0), st.floats(1e-3, 1e3), st.integers(4, 30), st.floats(1.5, 4.0))
def test_fit_recovers_exact_power_laws(p, c, n, span):
    s = np.linspace(2.0, 2.0 * span, n)
    fit = dg.fit_decay_exponent(dg.DecaySeries(s, c * s ** p))
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.prefactor == pytest.approx(c, rel=1e-8)
    assert fit.residual < 1e-9 and fit.n == n


def test_series_and_fit_validation():
    with pytest.raises(ValueError):
        dg.DecaySeries([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        dg.DecaySeries([1, 3, 2], [1, 1, 1])
    with pytest.raises(ValueError):
        dg.DecaySeries([1, 2], [1, -1])
    with pytest.raises(ValueError):
        dg.fit_decay_exponent(dg.DecaySeries([1, 2, 3], [1, 1, 1]))
    with pytest.raises(ValueError):
        dg.fit_decay_exponent(dg.DecaySeries([1, 2, 3, 4], [1, 0, 1, 1]))
    sub = dg.DecaySeries(np.arange(2.0, 9.0), np.ones(7)).restrict(3.0, 8.0)
    assert sub.s[0] == 3.0 and sub.s[-1] == 8.0


def test_bootstrap_params_validation():
    p = dg.BootstrapParams(0.2, 2.0, 0.01)
    assert p.bound(4.0) == pytest.approx(2.0 * 0.01 * 4.0 ** 0.1)
    for bad in [(0.0, 1.0, 0.01), (1.0, 0.5, 0.01), (0.2, 2.0, -1.0), (0.2, 2.0, 0.9), (0.2, 2.0, 0.01, 0.2),
                (0.2, 2.0, 0.01, 0.0)]:
        with pytest.raises(ConfigError):
            dg.BootstrapParams(*bad)


@pytest.fixture(scope="module")
def small_run():
    S = [2.0, 2.25, 2.5, 2.75, 3.0]
    data = bump_data(0.01)
    co = SystemCoefficients.canonical()
    g, t_end = dg.plan_run(S, data, 0.05)
    ob_run = dg.run_with_diagnostics(data, co, S, dx=0.05)
    rec = evolve(data, co, t_end, grid=g, record=True)
    return S, data, ob_run, rec


def test_plan_run_covers_slices(small_run):
    S, data, run, rec = small_run
    assert run.support_offset == pytest.approx(dg.support_offset_for(data))
    sample_hyperboloid(rec.slab, max(S), order=3, support_offset=rec.support_offset)


def test_measure_C0_matches_direct_energies(small_run):
    S, data, run, rec = small_run
    C0 = dg.measure_C0(run, 0.01)
    slc = sample_hyperboloid(rec.slab, S[0], order=3, support_offset=rec.support_offset)
    direct = max(energy(slc, c2, "A", f, w).value for f, c2 in (("u", 0), ("v", 1)) for w in dg.energy_words(2))
    assert C0 == pytest.approx(np.sqrt(direct) / 0.01, rel=1e-9)
    with pytest.raises(ConfigError):
        dg.measure_C0(run, 0.0)


def test_bootstrap_check_pass_and_violation(small_run):
    S, _, run, rec = small_run
    C0 = dg.measure_C0(run, 0.01)
    ok = dg.bootstrap_check(run, dg.BootstrapParams(C0, 10 * C0, 0.01))
    assert ok.passed and 0 < ok.worst_ratio() <= 0.2
    assert len(ok.rows) == 2 * len(dg.energy_words(2)) * len(S)
    bad = dg.bootstrap_check(run, dg.BootstrapParams(C0 / 4, C0 / 2, 0.01))
    assert not bad.passed and bad.first_violation == S[0]
    # the slab route gives the same rows (near the end of the run the two routes use different level windows)
    slab = dg.bootstrap_check(type(rec)(**{**rec.__dict__, "metrics": {}}), dg.BootstrapParams(C0, 10 * C0, 0.01),
                              s_range=S)
    for a, b in zip(sorted(ok.rows), sorted(slab.rows)):
        assert a[:3] == b[:3] and a[3] == pytest.approx(b[3], rel=1e-6)
    with pytest.raises(ValueError):
        dg.bootstrap_check(run, dg.BootstrapParams(C0, 10 * C0, 0.01), max_order=3)


def test_source_report_routes_agree(small_run):
    S, _, run, rec = small_run
    a = dg.source_l2_report(run)
    b = dg.source_l2_report(rec, s_list=S)
    assert np.allclose(a.f_norm, b.f_norm, rtol=1e-9) and np.allclose(a.p_norm, b.p_norm, rtol=1e-9)
    assert a.f_fit is not None and a.p_fit is not None
    with pytest.raises(CoverageError):
        dg.source_l2_report(type(rec)(**{**rec.__dict__, "slab": None}))


def test_decay_and_katayama_reports(small_run, tmp_path):
    _, _, run, _ = small_run
    d = dg.decay_report(run, 2.0, 3.0)
    assert d.dtu.s.size == 5 and d.dtu_fit is not None
    k = dg.katayama_report(run)
    s, B = run.metric(dg.SUP_B)
    assert np.allclose(k.B_normalized, B * s ** 3.6)
    for writer, rep, head in ((dg.write_decay_csv, d, "s"), (dg.write_katayama_csv, k, "s"),
                              (dg.write_source_csv, dg.source_l2_report(run), "s"),
                              (dg.write_bootstrap_csv, dg.bootstrap_check(
                                  run, dg.BootstrapParams(1.0, 10.0, 0.01)), "field")):
        path = tmp_path / "out.csv"
        writer(path, rep)
        rows = list(csv.reader(open(path)))
        assert rows[0][0] == head and len(rows) > 1
    dg.write_metrics_csv(tmp_path / "m.csv", run)
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0][0] == "s" and len(rows) == 6 and dg.SUP_DTU in rows[0]


def test_katayama_on_lattice_state():
    co = SystemCoefficients.canonical()
    st_ = initial_state(bump_data(0.05), co, GridSpec(dx=0.05, extent=3.0))
    if len(st_.levels) < 4:
        with pytest.raises(CoverageError):
            dg.katayama_substitution(st_, co)
    for _ in range(4):
        step(st_, co)
    kf = dg.katayama_substitution(st_, co)
    assert kf.w.size > 0 and np.max(np.abs(kf.residual())) < 1e-15


def test_run_with_diagnostics_checks_coverage():
    data = bump_data(0.01)
    with pytest.raises(CoverageError):
        dg.run_with_diagnostics(data, SystemCoefficients.canonical(), [2.0, 3.0], dx=0.05,
                                grid=GridSpec(dx=0.05, extent=2.0))
    with pytest.raises(CoverageError):
        dg.run_with_diagnostics(data, SystemCoefficients.canonical(), [2.0, 3.0], dx=0.05, t_end=2.5)


_MONO = {}


@settings(max_examples=30, deadline=None)
@given(st.floats(1.01, 20.0), st.floats(1.0, 5.0))
def test_bootstrap_monotone_in_C1(ratio, grow):
    if "run" not in _MONO:
        _MONO["run"] = dg.run_with_diagnostics(bump_data(0.01), SystemCoefficients.canonical(), [2.0, 2.5, 3.0],
                                               dx=0.05)
    run = _MONO["run"]
    C0 = dg.measure_C0(run, 0.01) / 3.0
    lo = dg.bootstrap_check(run, dg.BootstrapParams(C0, ratio * C0, 0.01))
    hi = dg.bootstrap_check(run, dg.BootstrapParams(C0, grow * ratio * C0, 0.01))
    if lo.passed:
        assert hi.passed
    assert sum(r[5] for r in hi.rows) >= sum(r[5] for r in lo.rows)


def test_source_norms_scale_quadratically():
    S = [2.0, 2.5, 3.0]
    reps = [dg.source_l2_report(dg.run_with_diagnostics(bump_data(eps), SystemCoefficients.canonical(), S, dx=0.05,
                                                        energies=False, katayama=False))
            for eps in (0.01, 0.02)]
    assert np.all(np.abs(reps[1].f_norm / reps[0].f_norm / 4.0 - 1.0) <= 0.2)
    assert np.all(np.abs(reps[1].p_norm / reps[0].p_norm / 4.0 - 1.0) <= 0.2)
