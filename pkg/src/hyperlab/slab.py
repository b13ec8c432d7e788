"""Cartesian grid, stored time levels, and derivative jets from stencils.

A *jet* is a dict ``{(kt, k1, k2): values}`` holding derivatives of one field
at a set of points. Spatial derivatives use second-order central stencils on
a 5x5 patch; time derivatives come from Lagrange interpolation through the
stored levels, evaluated at each point's own time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, StencilError

CFL_MAX = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the box [-L, L]^2 with time step dt = cfl_factor * dx."""

    dx: float = 0.02
    extent: float = 12.0
    cfl_factor: float = 0.45
    t_start: float = 2.0

    def __post_init__(self):
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not self.extent > 2 * self.dx:
            raise ValueError("extent must exceed two grid cells")
        if not 0 < self.cfl_factor <= CFL_MAX:
            raise ValueError(f"CFL violated: cfl_factor={self.cfl_factor} must lie in (0, 1/sqrt(2)]")

    @property
    def half(self) -> int:
        return int(round(self.extent / self.dx))

    @property
    def n(self) -> int:
        return 2 * self.half + 1

    @property
    def dt(self) -> float:
        return self.cfl_factor * self.dx

    @property
    def coords(self):
        return (np.arange(self.n) - self.half) * self.dx

    def mesh(self):
        x = self.coords
        return np.meshgrid(x, x, indexing="ij")

    def time(self, k) -> float:
        """Time of level k (level 0 is t_start)."""
        return self.t_start + k * self.dt

    def index(self, x):
        return np.asarray(x) / self.dx + self.half


def jet_keys(order: int):
    return [(a, b, c) for n in range(order + 1) for a in range(n + 1) for b in range(n - a + 1) for c in [n - a - b]]


def time_weights(nodes, tstar, nderiv):
    """Lagrange weights for derivatives 0..nderiv at times ``tstar``.

    Returns an array (npts, nderiv + 1, nlev) such that
    d^k f(tstar) ~ sum_l W[:, k, l] f(nodes[l]).
    """
    nodes = np.asarray(nodes, dtype=float)
    tstar = np.atleast_1d(np.asarray(tstar, dtype=float))
    nlev = nodes.size
    if nderiv >= nlev:
        raise ValueError("need more time levels than the derivative order")
    # basis polynomials l_j(z) = sum_m C[m, j] z^m in the scaled variable z = (t - t0) / h
    t0 = nodes[0]
    h = float(np.max(np.abs(np.diff(nodes)))) if nlev > 1 else 1.0
    zn = (nodes - t0) / h
    C = np.linalg.inv(zn[:, None] ** np.arange(nlev)[None, :])
    z = (tstar - t0) / h
    m = np.arange(nlev)
    W = np.empty((tstar.size, nderiv + 1, nlev))
    for k in range(nderiv + 1):
        # d^k/dz^k z^m = m!/(m-k)! z^(m-k)
        fall = np.array([math.perm(mm, k) for mm in m], dtype=float)
        pw = np.where(m >= k, z[:, None] ** np.maximum(m - k, 0), 0.0) * fall
        W[:, k, :] = (pw @ C) / h ** k
    return W


def lattice_jets(levels, times, ii, jj, tstar, dx, order, backend=None):
    """Jets of a stored field at lattice columns (ii, jj) and times ``tstar``.

    ``levels`` is an array (nlev, n, n) or a sequence of nlev (n, n) arrays,
    ``times`` has shape (nlev,).
    """
    from .kernels import get_kernel

    n, m = levels[0].shape
    ii = np.ascontiguousarray(ii, dtype=np.intp)
    jj = np.ascontiguousarray(jj, dtype=np.intp)
    if ii.size and (ii.min() < 2 or jj.min() < 2 or ii.max() > n - 3 or jj.max() > m - 3):
        raise StencilError("5x5 stencil leaves the grid")
    if order > 3:
        raise ValueError("jets are available up to order 3")
    keys = jet_keys(order)
    W = np.ascontiguousarray(time_weights(times, tstar, order))
    kt, k1, k2 = (np.ascontiguousarray([k[i] for k in keys], dtype=np.intc) for i in range(3))
    levs = [np.ascontiguousarray(lev, dtype=float) for lev in levels]
    out = get_kernel(backend).stencil_jets(levs, ii, jj, W, float(dx), kt, k1, k2)
    return {k: out[q] for q, k in enumerate(keys)}


@dataclass
class Slab:
    """A stack of stored time levels of u (and optionally v) on a grid."""

    grid: GridSpec
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.u.shape != (self.times.size, self.grid.n, self.grid.n):
            raise ValueError("slab array shape does not match grid and times")

    @classmethod
    def from_function(cls, grid: GridSpec, times, u_func, v_func=None):
        """Sample analytic fields ``f(t, X1, X2)`` on the lattice at ``times``."""
        X1, X2 = grid.mesh()
        times = np.asarray(times, dtype=float)
        u = np.stack([np.broadcast_to(u_func(t, X1, X2), X1.shape) for t in times]).astype(float)
        v = None
        if v_func is not None:
            v = np.stack([np.broadcast_to(v_func(t, X1, X2), X1.shape) for t in times]).astype(float)
        return cls(grid, times, u, v)

    @classmethod
    def uniform(cls, grid: GridSpec, t_end, u_func, v_func=None):
        nsteps = int(math.ceil((t_end - grid.t_start) / grid.dt)) + 2
        times = grid.time(np.arange(-1, nsteps))
        return cls.from_function(grid, times, u_func, v_func)

    @property
    def t_range(self):
        return float(self.times[0]), float(self.times[-1])

    def field(self, name):
        arr = self.u if name == "u" else self.v
        if arr is None:
            raise CoverageError(f"slab does not store field {name!r}")
        return arr

    def windows(self, tstar, nlev):
        """Start index of the ``nlev``-level window used for each time in ``tstar``."""
        tstar = np.asarray(tstar, dtype=float)
        nt = self.times.size
        if nt < nlev:
            raise CoverageError("slab has fewer levels than the interpolation needs")
        lo, hi = self.t_range
        if np.any(tstar < lo - 1e-12) or np.any(tstar > hi + 1e-12):
            raise CoverageError(f"requested times outside the slab range [{lo}, {hi}]")
        k = np.searchsorted(self.times, tstar, side="left")
        # same placement as the streaming observer: t* between levels nlev-3 and nlev-2
        start = k - nlev + 2
        return np.clip(start, 0, nt - nlev)

    def jets(self, name, ii, jj, tstar, order):
        """Jets at lattice columns, grouping points by their time window."""
        arr = self.field(name)
        nlev = max(4, order + 2)
        tstar = np.atleast_1d(np.asarray(tstar, dtype=float))
        ii = np.atleast_1d(ii)
        jj = np.atleast_1d(jj)
        start = self.windows(tstar, nlev)
        out = {k: np.empty(tstar.shape) for k in jet_keys(order)}
        for st in np.unique(start):
            sel = start == st
            j = lattice_jets(arr[st: st + nlev], self.times[st: st + nlev], ii[sel], jj[sel], tstar[sel], self.grid.dx, order)
            for key, val in j.items():
                out[key][sel] = val
        return out

    def jets_at(self, name, t, x1, x2, order):
        """Jets at arbitrary points: bilinear combination of the four surrounding lattice jets."""
        t, x1, x2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (t, x1, x2))
        g = self.grid
        fi = g.index(x1)
        fj = g.index(x2)
        i0 = np.floor(fi).astype(np.intp)
        j0 = np.floor(fj).astype(np.intp)
        a = fi - i0
        b = fj - j0
        out = {k: np.zeros(t.shape) for k in jet_keys(order)}
        for di, dj, w in ((0, 0, (1 - a) * (1 - b)), (1, 0, a * (1 - b)), (0, 1, (1 - a) * b), (1, 1, a * b)):
            j = self.jets(name, i0 + di, j0 + dj, t, order)
            for key in out:
                out[key] += w * j[key]
        return out
