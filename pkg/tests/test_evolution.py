import numpy as np
import pytest
import sympy as sp

from hyperlab import kernels
from hyperlab.diagnostics import SUP_DTU, SUP_V, canonical_metrics, plan_run
from hyperlab.errors import InstabilityError, NullConditionError
from hyperlab.evolution import (CauchyData, SystemCoefficients, bump_data, evolve, hessian_identity_residual,
                                initial_state, load_checkpoint, manufactured_data, manufactured_forcing,
                                save_checkpoint, step)
from hyperlab.fields import T, X1, X2, bump, bump_data_norm, windowed_bump_field
from hyperlab.foliation import SliceObserver
from hyperlab.frame import QuadraticForm, SpacetimePoint
from hyperlab.slab import GridSpec, Slab

from oracles import RadialLinearSolution


def test_zero_data_stays_zero():
    tr = evolve(CauchyData.zero(), SystemCoefficients.canonical(), 3.0, grid=GridSpec(dx=0.05, extent=3.0))
    assert np.all(tr.final_state.u[-1] == 0.0) and np.all(tr.final_state.v[-1] == 0.0)
    assert np.all(tr.sup_norm == 0.0)


def test_linear_radial_run_matches_hankel_solution():
    S = [3.0, 3.5, 4.0]
    data = bump_data(1.0, centers=((0.0, 0.0),) * 4, weights=(1.0, 1.0, 1.0, 1.0))
    amp = 1.0 / bump_data_norm(0.8, 3, "gauss-bump", 5.0)
    g, t_end = plan_run(S, data, 0.04)
    ms = canonical_metrics(SystemCoefficients.zero(), energies=False, sources=False, katayama=False)
    tr = evolve(data, SystemCoefficients.zero(), t_end, observers=[SliceObserver(S, order=1, metrics=ms)], grid=g)
    exact = RadialLinearSolution(amp, amp, amp, amp)
    for s in S:
        dtu, v = exact.slice_sups(s, tr.support_offset)
        assert tr.metrics[s][SUP_DTU] == pytest.approx(dtu, rel=1e-2)
        assert tr.metrics[s][SUP_V] == pytest.approx(v, rel=1e-2)


def _mms(dx):
    co = SystemCoefficients.canonical()
    u = windowed_bump_field(0.5, (0.1, 0.0), 0.8, time_factor="cos(t)", profile="gauss-bump", sharpness=2.0)
    v = windowed_bump_field(0.5, (-0.1, 0.05), 0.7, time_factor="sin(2*t)+0.5", name="v",
                            profile="gauss-bump", sharpness=2.0)
    g = GridSpec(dx=dx, extent=3.0)
    tr = evolve(manufactured_data(u, v, support_radius=0.85), co, 3.0, grid=g, forcing=manufactured_forcing(u, v, co))
    st = tr.final_state
    XA, XB = g.mesh()
    return max(np.max(np.abs(st.u[-1] - u(st.t, XA, XB))), np.max(np.abs(st.v[-1] - v(st.t, XA, XB))))


def test_manufactured_second_order():
    e1, e2 = _mms(0.04), _mms(0.02)
    assert 1.8 <= np.log2(e1 / e2) <= 2.2


def test_manufactured_forcing_against_symbolic_residual():
    co = SystemCoefficients.canonical()
    u = windowed_bump_field(0.5, (0.1, 0.0), 0.8, time_factor="cos(t)", profile="gauss-bump", sharpness=2.0)
    v = windowed_bump_field(0.3, (0.0, 0.1), 0.7, time_factor="t", name="v", profile="gauss-bump")
    box = lambda e: sp.diff(e, T, 2) - sp.diff(e, X1, 2) - sp.diff(e, X2, 2)  # noqa: E731
    ue, ve = u.expr, v.expr
    dv = [sp.diff(ve, x) for x in (T, X1, X2)]
    du = [sp.diff(ue, x) for x in (T, X1, X2)]
    F = manufactured_forcing(u, v, co)
    rng = np.random.default_rng(0)
    t = rng.uniform(2.0, 4.0, 40)
    a, b = rng.uniform(-0.6, 0.6, (2, 40))
    got_u, got_v = F(t, a, b)
    for k in range(40):
        sub = {T: t[k], X1: a[k], X2: b[k]}
        inside_u = float(u.mask.subs(sub)) > 0
        inside_v = float(v.mask.subs(sub)) > 0
        want_u = float(box(ue).subs(sub)) * inside_u - float((ve * (dv[0] + ve)
                                                               + dv[0] ** 2 - dv[1] ** 2 - dv[2] ** 2).subs(sub)) * inside_v
        want_v = float((box(ve) + ve).subs(sub)) * inside_v - float((du[0] ** 2 - du[1] ** 2 - du[2] ** 2).subs(sub)) * inside_u
        assert got_u[k] == pytest.approx(want_u, rel=1e-9, abs=1e-12)
        assert got_v[k] == pytest.approx(want_v, rel=1e-9, abs=1e-12)
    # far from both supports the forcing vanishes
    zu, zv = F(np.full(5, 3.0), np.full(5, 2.0), np.linspace(-1, 1, 5))
    assert np.all(zu == 0.0) and np.all(zv == 0.0)


def test_finite_propagation_in_cone_mode():
    data = bump_data(0.01)
    g = GridSpec(dx=0.05, extent=5.0)
    tr = evolve(data, SystemCoefficients.canonical(), 5.0, grid=g)
    st = tr.final_state
    XA, XB = g.mesh()
    outside = np.hypot(XA, XB) > data.support_radius + (st.t - 2.0) + 0.5 + 2 * g.dx
    assert np.all(st.u[-1][outside] == 0.0) and np.all(st.v[-1][outside] == 0.0)
    assert np.max(np.abs(st.u[-1])) > 0


@pytest.mark.skipif(len(kernels.BACKENDS) < 2, reason="compiled kernel not built")
def test_backends_agree():
    data = bump_data(0.05)
    g = GridSpec(dx=0.04, extent=4.0)
    runs = [evolve(data, SystemCoefficients.canonical(), 4.0, grid=g, backend=b) for b in sorted(kernels.BACKENDS)]
    a, b = runs
    assert np.max(np.abs(a.final_state.u[-1] - b.final_state.u[-1])) <= 1e-13 * np.max(np.abs(a.final_state.u[-1]))
    assert np.max(np.abs(a.final_state.v[-1] - b.final_state.v[-1])) <= 1e-13 * np.max(np.abs(a.final_state.v[-1]))


def test_checkpoint_roundtrip_and_restart(tmp_path):
    data = bump_data(0.02)
    co = SystemCoefficients.canonical()
    g = GridSpec(dx=0.05, extent=3.0)
    st = initial_state(data, co, g)
    for _ in range(10):
        step(st, co)
    path = tmp_path / "state.bin"
    save_checkpoint(path, st)
    st2 = load_checkpoint(path)
    assert st2.levels == st.levels and st2.step_index == st.step_index
    for a, b in zip(st.u + st.v, st2.u + st2.v):
        assert np.array_equal(a, b)
    for _ in range(5):
        step(st, co)
        step(st2, co)
    assert np.array_equal(st.u[-1], st2.u[-1]) and np.array_equal(st.v[-1], st2.v[-1])
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTASLAB" + b"\0" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(bad)


def test_instability_detected():
    g = GridSpec(dx=0.05, extent=3.0)
    one = lambda a, b: bump(a, b, (0.0, 0.0), 0.8)  # noqa: E731
    zero = lambda a, b: 0.0 * a  # noqa: E731
    data = CauchyData(one, zero, zero, zero, epsilon=1e-9, support_radius=0.8)
    with pytest.raises(InstabilityError):
        evolve(data, SystemCoefficients.zero(), 2.5, grid=g)


def test_validation_errors():
    with pytest.raises(ValueError):
        GridSpec(dx=0.05, cfl_factor=0.8)
    with pytest.raises(NullConditionError):
        SystemCoefficients(P=QuadraticForm(np.diag([1.0, 0.0, 0.0])))
    with pytest.raises(ValueError):
        bump_data(0.01, radius=0.95)
    with pytest.raises(ValueError):
        z = CauchyData.zero().u0
        CauchyData(z, z, z, z, epsilon=0.0, support_radius=1.5)


def test_small_data_is_nearly_linear():
    # the nonlinear correction is quadratic in the amplitude
    g = GridSpec(dx=0.05, extent=4.0)
    diffs = []
    for eps in (0.02, 0.04):
        data = bump_data(eps)
        nl = evolve(data, SystemCoefficients.canonical(), 4.0, grid=g).final_state
        lin = evolve(data, SystemCoefficients.zero(), 4.0, grid=g).final_state
        diffs.append(np.max(np.abs(nl.u[-1] - lin.u[-1])) + np.max(np.abs(nl.v[-1] - lin.v[-1])))
    assert diffs[1] / diffs[0] == pytest.approx(4.0, rel=0.05)


def test_hessian_identity_holds_on_any_jet():
    # the identity is algebraic in the 2-jet: exact on analytic jets and to rounding on lattice jets
    from hyperlab.evolution import hessian_identity_terms

    u = windowed_bump_field(1.0, (0.1, 0.0), 0.8, time_factor="cos(t)", profile="gauss-bump", sharpness=2.0)
    t = np.array([3.0, 3.0, 4.0])
    a, b = np.array([0.0, 0.3, 0.6]), np.array([0.2, -0.1, 0.4])
    lhs, rhs = hessian_identity_terms(u.jet(t, a, b, 2), t, a, b)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    slab = Slab.uniform(GridSpec(dx=0.04, extent=3.0), 3.5, u)
    assert max(abs(hessian_identity_residual(slab, SpacetimePoint(3.0, x, 0.2))) for x in (0.0, 0.3, 0.6)) < 1e-10
