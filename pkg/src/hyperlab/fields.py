"""Analytic test fields: smooth bumps and sympy-backed fields with exact jets."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .slab import jet_keys

T, X1, X2 = sp.symbols("t x1 x2", real=True)


PROFILES = ("bump", "gauss-bump")


def bump(x1, x2, center=(0.0, 0.0), radius=1.0, profile="bump", sharpness=5.0):
    """Compactly supported C-infinity profile, equal to 1 at the center.

    With q = |x - center| / radius:
    ``bump``       exp(1 - 1/(1 - q^2));
    ``gauss-bump`` exp(-a q^2/(1 - q^2)) with a = ``sharpness``, a Gaussian core of
    width about radius/sqrt(2a) whose high derivatives stay small near the edge.
    """
    q2 = ((np.asarray(x1, dtype=float) - center[0]) ** 2 + (np.asarray(x2, dtype=float) - center[1]) ** 2) / radius ** 2
    out = np.zeros(np.shape(q2))
    inside = q2 < 1.0
    qi = q2[inside]
    if profile == "bump":
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - qi))
    elif profile == "gauss-bump":
        out[inside] = np.exp(-sharpness * qi / (1.0 - qi))
    else:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    return out


def bump_expr(center=(0.0, 0.0), radius=1.0, x=X1, y=X2, profile="bump", sharpness=5.0):
    """Sympy version of :func:`bump` and the mask expression (positive inside the support)."""
    q2 = ((x - center[0]) ** 2 + (y - center[1]) ** 2) / sp.Float(radius) ** 2
    if profile == "bump":
        return sp.exp(1 - 1 / (1 - q2)), 1 - q2
    if profile == "gauss-bump":
        return sp.exp(-sp.Float(sharpness) * q2 / (1 - q2)), 1 - q2
    raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")


_LOCALS = {"t": T, "x1": X1, "x2": X2}


def _sym(e):
    """Sympify with the package's real symbols t, x1, x2."""
    return sp.sympify(e, locals=_LOCALS) if isinstance(e, str) else sp.sympify(e)


class AnalyticField:
    """A scalar field f(t, x1, x2) given symbolically, with exact derivative jets.

    ``mask`` is a sympy expression; the field is set to zero where it is <= 0,
    which is how compactly supported bumps are represented.
    """

    def __init__(self, expr, mask=None, name="f"):
        self.expr = _sym(expr)
        self.mask = None if mask is None else _sym(mask)
        self.name = name
        self._cache = {}
        self._mask_fn = None if self.mask is None else sp.lambdify((T, X1, X2), self.mask, "numpy")

    def derivative_fn(self, kt=0, k1=0, k2=0):
        key = (kt, k1, k2)
        if key not in self._cache:
            e = self.expr
            for sym, k in ((T, kt), (X1, k1), (X2, k2)):
                if k:
                    e = sp.diff(e, sym, k)
            self._cache[key] = sp.lambdify((T, X1, X2), e, "numpy")
        return self._cache[key]

    def _eval(self, key, t, x1, x2):
        t, x1, x2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x1, x2)))
        with np.errstate(all="ignore"):
            val = np.broadcast_to(np.asarray(self.derivative_fn(*key)(t, x1, x2), dtype=float), t.shape)
            if self._mask_fn is not None:
                m = np.broadcast_to(self._mask_fn(t, x1, x2), t.shape)
                val = np.where(m > 0, val, 0.0)
        return np.array(val)

    def __call__(self, t, x1, x2):
        return self._eval((0, 0, 0), t, x1, x2)

    def derivative(self, kt, k1, k2, t, x1, x2):
        return self._eval((kt, k1, k2), t, x1, x2)

    def gradient(self, t, x1, x2):
        return [self._eval(k, t, x1, x2) for k in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]

    def jet(self, t, x1, x2, order=2):
        return {k: self._eval(k, t, x1, x2) for k in jet_keys(order)}

    def at(self, t0):
        """Spatial function x -> f(t0, x), e.g. for Cauchy data."""
        return lambda x1, x2: self(t0, x1, x2)

    def dt_at(self, t0):
        return lambda x1, x2: self.derivative(1, 0, 0, t0, x1, x2)


def windowed_bump_field(amplitude, center=(0.0, 0.0), radius=0.8, time_factor=None, name="u",
                        profile="bump", sharpness=5.0):
    """amplitude * g(t) * bump(x), with g a sympy expression in t (default 1)."""
    b, mask = bump_expr(center, radius, profile=profile, sharpness=sharpness)
    g = sp.Integer(1) if time_factor is None else _sym(time_factor)
    return AnalyticField(sp.Float(amplitude) * g * b, mask, name=name)


def _lattice_norm(radius, order, profile, sharpness, n=400):
    # sum over multi-indices |I| <= order of ||d^I bump||_{L^2}, by a fine midpoint rule
    b, mask = bump_expr((0.0, 0.0), radius, profile=profile, sharpness=sharpness)
    h = 2.0 * radius / n
    x = -radius + h * (np.arange(n) + 0.5)
    Xa, Xb = np.meshgrid(x, x, indexing="ij")
    m = sp.lambdify((X1, X2), mask, "numpy")(Xa, Xb) > 0
    total = 0.0
    for k in range(order + 1):
        for k1 in range(k + 1):
            e = sp.diff(b, X1, k1, X2, k - k1) if k else b
            f = sp.lambdify((X1, X2), e, "numpy")
            with np.errstate(all="ignore"):
                vals = np.where(m, f(Xa, Xb), 0.0)
            total += float(np.sqrt(np.sum(vals ** 2) * h * h))
    return total


@lru_cache(maxsize=None)
def bump_data_norm(radius: float, order: int = 3, profile: str = "bump", sharpness: float = 5.0) -> float:
    """Sobolev-type size sum_{|I|<=order} ||d^I bump||_{L^2} of a bump of the given radius."""
    return _lattice_norm(float(radius), int(order), profile, float(sharpness))
