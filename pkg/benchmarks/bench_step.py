"""Compiled vs numpy kernels: one leapfrog step and a batch of lattice jets.

Run ``python benchmarks/bench_step.py [--n 801] [--repeat 5] [--points 100000]``.
Both backends are fed identical inputs; the script also reports the largest
difference between their outputs.
"""
import argparse
import time

import numpy as np

from hyperlab import kernels
from hyperlab.evolution import SystemCoefficients
from hyperlab.slab import jet_keys, time_weights


def smooth_fields(n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    out = []
    for _ in range(8):
        a, b, c = rng.normal(size=3)
        out.append(np.ascontiguousarray(1e-2 * np.exp(-4.0 * (X - 0.1 * a) ** 2 - 4.0 * (Y - 0.1 * b) ** 2) * (1 + 0.1 * c)))
    return out


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_step(n, repeat):
    u0, u1, u2, v0, v1, v2, _, _ = smooth_fields(n)
    c = SystemCoefficients.canonical().packed()
    dx, dt = 2.0 / (n - 1), 0.45 * 2.0 / (n - 1)
    empty = np.zeros((1, 1))
    jlo = np.full(n, 1, dtype=np.intp)
    jhi = np.full(n, n - 1, dtype=np.intp)
    res = {}
    for name, mod in sorted(kernels.BACKENDS.items()):
        un, vn = np.zeros((n, n)), np.zeros((n, n))

        def run():
            mod.leapfrog_step(un, u0, u1, u2, vn, v0, v1, v2, empty, empty, c, dx, dt,
                              1, n - 1, 1, n - 1, jlo, jhi, False, 1)
        res[name] = (best_of(run, repeat), un.copy(), vn.copy())
    return res


def bench_jets(n, points, repeat):
    levels = smooth_fields(n)[:5]
    times = np.arange(5) * 0.009
    rng = np.random.default_rng(1)
    ii = rng.integers(2, n - 3, points).astype(np.intp)
    jj = rng.integers(2, n - 3, points).astype(np.intp)
    keys = jet_keys(2)
    W = np.ascontiguousarray(time_weights(times, np.full(points, times[2]), 2))
    kt, k1, k2 = (np.ascontiguousarray([k[i] for k in keys], dtype=np.intc) for i in range(3))
    res = {}
    for name, mod in sorted(kernels.BACKENDS.items()):
        out = {}

        def run():
            out["v"] = mod.stencil_jets(levels, ii, jj, W, 0.01, kt, k1, k2)
        res[name] = (best_of(run, repeat), out["v"])
    return res


def report(title, res, pick):
    print(title)
    names = sorted(res)
    for name in names:
        print(f"  {name:<8} {res[name][0] * 1e3:10.2f} ms")
    if len(names) == 2:
        a, b = (res[k] for k in names)
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(pick(a), pick(b)))
        print(f"  speedup  {res['python'][0] / res['cython'][0]:10.1f} x   max |difference| {diff:.2e}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--n", type=int, default=801, help="grid points per side")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--points", type=int, default=100_000, help="lattice points for the jet kernel")
    a = p.parse_args(argv)
    print(f"backends: {sorted(kernels.BACKENDS)} (active: {kernels.BACKEND})")
    report(f"leapfrog step, {a.n}x{a.n} grid", bench_step(a.n, a.repeat), lambda r: r[1:])
    report(f"stencil jets, {a.points} points, order 2", bench_jets(a.n, a.points, a.repeat), lambda r: r[1:])


if __name__ == "__main__":
    main()
