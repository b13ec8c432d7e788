import os
import subprocess
import sys

import numpy as np
import pytest

from hyperlab import kernels

compiled = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled kernel not built")


def _problem(rng, n=40, forced=True):
    lev = [np.ascontiguousarray(rng.normal(size=(n, n))) for _ in range(6)]
    c = rng.normal(size=16)
    i0, i1, j0, j1 = 3, n - 4, 2, n - 3
    jlo = np.full(n, j0, dtype=np.intp)
    jhi = np.full(n, j0, dtype=np.intp)
    for i in range(i0, i1):
        a = rng.integers(j0, j1)
        jlo[i], jhi[i] = a, rng.integers(a, j1 + 1)
    fu = np.ascontiguousarray(rng.normal(size=(i1 - i0, j1 - j0)))
    fv = np.ascontiguousarray(rng.normal(size=(i1 - i0, j1 - j0)))
    return lev, fu, fv, c, (i0, i1, j0, j1), jlo, jhi, forced


def _step(mod, prob, threads=1):
    lev, fu, fv, c, (i0, i1, j0, j1), jlo, jhi, forced = prob
    u_new, v_new = np.zeros_like(lev[0]), np.zeros_like(lev[0])
    sup = mod.leapfrog_step(u_new, lev[0], lev[1], lev[2], v_new, lev[3], lev[4], lev[5], fu, fv, c, 0.05, 0.02,
                            i0, i1, j0, j1, jlo, jhi, forced, num_threads=threads)
    return u_new, v_new, sup


def test_numpy_kernel_against_pointwise_formula():
    rng = np.random.default_rng(0)
    prob = _problem(rng)
    u_new, v_new, sup = _step(kernels.get_kernel("python"), prob)
    lev, fu, fv, c, (i0, i1, j0, j1), jlo, jhi, _ = prob
    u0, u1, u2, v0, v1, v2 = lev
    dx, dt = 0.05, 0.02
    Q = np.array([[c[4], c[5], c[6]], [c[5], c[7], c[8]], [c[6], c[8], c[9]]])
    P = np.array([[c[10], c[11], c[12]], [c[11], c[13], c[14]], [c[12], c[14], c[15]]])
    seen = 0
    for i in range(i0, i1):
        for j in range(jlo[i], jhi[i]):
            du = np.array([(3 * u0[i, j] - 4 * u1[i, j] + u2[i, j]) / (2 * dt), (u0[i + 1, j] - u0[i - 1, j]) / (2 * dx),
                           (u0[i, j + 1] - u0[i, j - 1]) / (2 * dx)])
            dv = np.array([(3 * v0[i, j] - 4 * v1[i, j] + v2[i, j]) / (2 * dt), (v0[i + 1, j] - v0[i - 1, j]) / (2 * dx),
                           (v0[i, j + 1] - v0[i, j - 1]) / (2 * dx)])
            lap = lambda w: (w[i + 1, j] + w[i - 1, j] + w[i, j + 1] + w[i, j - 1] - 4 * w[i, j]) / dx ** 2  # noqa
            su = v0[i, j] * (c[:3] @ dv + c[3] * v0[i, j]) + dv @ Q @ dv
            sv = du @ P @ du
            ue = 2 * u0[i, j] - u1[i, j] + dt ** 2 * (lap(u0) + su + fu[i - i0, j - j0])
            ve = 2 * v0[i, j] - v1[i, j] + dt ** 2 * (lap(v0) - v0[i, j] + sv + fv[i - i0, j - j0])
            assert u_new[i, j] == pytest.approx(ue, rel=1e-12, abs=1e-12)
            assert v_new[i, j] == pytest.approx(ve, rel=1e-12, abs=1e-12)
            seen += 1
    assert seen > 0
    mask = np.zeros_like(u_new, dtype=bool)
    for i in range(i0, i1):
        mask[i, jlo[i]:jhi[i]] = True
    assert np.all(u_new[~mask] == 0.0) and np.all(v_new[~mask] == 0.0)
    assert sup == pytest.approx(max(np.max(np.abs(u_new[mask])), np.max(np.abs(v_new[mask]))))


@compiled
@pytest.mark.parametrize("forced", [True, False])
@pytest.mark.parametrize("threads", [1, 2])
def test_leapfrog_backends_agree(forced, threads):
    rng = np.random.default_rng(1)
    prob = _problem(rng, forced=forced)
    a = _step(kernels.get_kernel("python"), prob)
    b = _step(kernels.get_kernel("cython"), prob, threads)
    assert np.allclose(a[0], b[0], rtol=1e-13, atol=1e-13)
    assert np.allclose(a[1], b[1], rtol=1e-13, atol=1e-13)
    assert a[2] == pytest.approx(b[2], rel=1e-13)


def _jet_problem(rng, n=30, npts=50, nlev=4):
    levels = [np.ascontiguousarray(rng.normal(size=(n, n))) for _ in range(nlev)]
    ii = rng.integers(2, n - 2, npts).astype(np.intp)
    jj = rng.integers(2, n - 2, npts).astype(np.intp)
    W = np.ascontiguousarray(rng.normal(size=(npts, 3, nlev)))
    keys = [(a, b, c) for a in range(3) for b in range(4) for c in range(4) if a + b + c <= 3 and b + c <= 3]
    kt, k1, k2 = (np.array(k, dtype=np.intc) for k in zip(*keys))
    return levels, ii, jj, W, kt, k1, k2


@compiled
def test_stencil_jets_backends_agree():
    rng = np.random.default_rng(2)
    levels, ii, jj, W, kt, k1, k2 = _jet_problem(rng)
    a = kernels.get_kernel("python").stencil_jets(levels, ii, jj, W, 0.05, kt, k1, k2)
    b = kernels.get_kernel("cython").stencil_jets(levels, ii, jj, W, 0.05, kt, k1, k2)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9 * np.max(np.abs(a)))


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_stencil_jets_exact_on_low_degree(backend):
    # second-order stencils: exact on quadratics up to order 2, third derivatives exact on cubics
    dx, n = 0.1, 20
    x = dx * (np.arange(n) - n // 2)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    quad = 0.7 * X1 ** 2 + X1 * X2 - 1.5 * X2 ** 2 - X2 + 1.0
    cub = 0.3 * X1 ** 3 - X1 ** 2 * X2 + 2.0 * X1 * X2 ** 2 + 0.5 * X2 ** 3
    ii = np.array([5, 10, 14], dtype=np.intp)
    jj = np.array([7, 10, 4], dtype=np.intp)
    W = np.zeros((3, 1, 1))
    W[:, 0, 0] = 1.0
    a, b = X1[ii, jj], X2[ii, jj]
    cases = [(quad, [(0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)],
              [quad[ii, jj], 1.4 * a + b, a - 3 * b - 1, np.full(3, 1.4), np.full(3, 1.0), np.full(3, -3.0)]),
             (cub, [(0, 3, 0), (0, 2, 1), (0, 1, 2), (0, 0, 3)],
              [np.full(3, 1.8), np.full(3, -2.0), np.full(3, 4.0), np.full(3, 3.0)])]
    for f, keys, exact in cases:
        kt, k1, k2 = (np.array(k, dtype=np.intc) for k in zip(*keys))
        out = kernels.get_kernel(backend).stencil_jets([np.ascontiguousarray(f)], ii, jj, W, dx, kt, k1, k2)
        for q in range(len(keys)):
            assert np.allclose(out[q], exact[q], atol=1e-9)


def test_backend_selection():
    assert kernels.BACKEND in kernels.BACKENDS
    assert kernels.get_kernel() is kernels.BACKENDS[kernels.BACKEND]
    with pytest.raises(ValueError):
        kernels.get_kernel("fortran")
    env = dict(os.environ, HYPERLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from hyperlab import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_stencil_jets_rejects_mismatched_weights(backend):
    levels = [np.zeros((10, 10))] * 3
    ii = np.array([4, 5], dtype=np.intp)
    k0 = np.array([0], dtype=np.intc)
    mod = kernels.get_kernel(backend)
    with pytest.raises(ValueError):
        mod.stencil_jets(levels, ii, ii.copy(), np.zeros((1, 2, 3)), 0.1, k0, k0, k0)
    with pytest.raises(ValueError):
        mod.stencil_jets(levels, ii, ii.copy(), np.zeros((2, 1, 3)), 0.1, k0 + 1, k0, k0)
