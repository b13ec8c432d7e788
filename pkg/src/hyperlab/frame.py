"""Semi-hyperboloidal frame algebra.

Coordinates are (t, x1, x2) with index 0 for time and the Minkowski form
m = diag(1, -1, -1), so the wave operator reads d_t^2 - Laplacian.
The frame is d_t together with db_a = (x^a/t) d_t + d_a, the hyperboloids are
H_s = {t = sqrt(s^2 + r^2)} and the cone region is K = {t > r + 1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StencilError

# Vector-field tags. "rot" is the rotation x1 d_2 - x2 d_1 produced by [L1, L2].
VECTOR_FIELDS = ("dt", "d1", "d2", "L1", "L2", "db1", "db2", "rot")


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x1: float = 0.0
    x2: float = 0.0

    @property
    def r(self) -> float:
        return float(np.hypot(self.x1, self.x2))

    @property
    def s(self) -> float:
        return hyperbolic_radius(self)

    @property
    def in_cone(self) -> bool:
        """Membership in K = {t > r + 1}."""
        return self.t > self.r + 1.0

    def as_array(self):
        return np.array([self.t, self.x1, self.x2], dtype=float)

    @classmethod
    def on_hyperboloid(cls, s, x1, x2=0.0):
        return cls(float(np.sqrt(s * s + x1 * x1 + x2 * x2)), x1, x2)


def hyperbolic_radius(p: SpacetimePoint) -> float:
    """Return s = sqrt(t^2 - r^2); raises DomainError unless t > r."""
    r = p.r
    if not p.t > r:
        raise DomainError(f"hyperbolic radius needs t > r, got t={p.t}, r={r}")
    return float(np.sqrt((p.t - r) * (p.t + r)))


@dataclass(frozen=True)
class FrameMatrix:
    """Transition matrix between the natural and the semi-hyperboloidal frame.

    ``entries[alpha, beta]`` is the coefficient of the natural field d_beta
    (kind Phi) or of the frame field db_beta (kind Psi) in the expansion of the
    alpha-th field, so db_alpha = Phi[alpha, beta] d_beta and
    d_alpha = Psi[alpha, beta] db_beta.
    """

    entries: np.ndarray
    kind: str

    def __matmul__(self, other):
        other = other.entries if isinstance(other, FrameMatrix) else other
        return self.entries @ other


def transition_arrays(t, x1, x2, kind="Phi"):
    """Vectorized transition matrices, shape ``t.shape + (3, 3)``."""
    t = np.asarray(t, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(t == 0):
        raise DomainError("transition matrices need t != 0")
    if kind not in ("Phi", "Psi"):
        raise ValueError(f"kind must be 'Phi' or 'Psi', got {kind!r}")
    sign = 1.0 if kind == "Phi" else -1.0
    shape = np.broadcast(t, x1, x2).shape
    M = np.zeros(shape + (3, 3))
    M[..., 0, 0] = 1.0
    M[..., 1, 1] = 1.0
    M[..., 2, 2] = 1.0
    M[..., 1, 0] = sign * x1 / t
    M[..., 2, 0] = sign * x2 / t
    return M


def transition(p: SpacetimePoint, kind: str = "Phi") -> FrameMatrix:
    return FrameMatrix(transition_arrays(p.t, p.x1, p.x2, kind), kind)


def _sym(a):
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"quadratic form needs a 3x3 array, got shape {a.shape}")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class QuadraticForm:
    """Symmetric form T^{ab} acting on covectors; antisymmetric input parts are dropped."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _sym(self.coeffs))

    @classmethod
    def minkowski(cls):
        return cls(np.diag([1.0, -1.0, -1.0]))

    @classmethod
    def zero(cls):
        return cls(np.zeros((3, 3)))

    @classmethod
    def from_entries(cls, p00, p01, p02, p11, p12, p22):
        return cls(np.array([[p00, p01, p02], [p01, p11, p12], [p02, p12, p22]], dtype=float))

    def entries(self):
        """The six independent entries in the order 00 01 02 11 12 22."""
        c = self.coeffs
        return np.array([c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2]])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __call__(self, xi, eta=None):
        """Evaluate T^{ab} xi_a eta_b; the last axis of ``xi``/``eta`` holds the index."""
        xi = np.asarray(xi, dtype=float)
        eta = xi if eta is None else np.asarray(eta, dtype=float)
        return np.einsum("...a,ab,...b->...", xi, self.coeffs, eta)

    def __add__(self, other):
        return QuadraticForm(self.coeffs + other.coeffs)

    def __mul__(self, c):
        return QuadraticForm(float(c) * self.coeffs)

    __rmul__ = __mul__


MINKOWSKI = QuadraticForm.minkowski()


def to_frame(T: QuadraticForm, p: SpacetimePoint) -> QuadraticForm:
    """Frame components Tb^{ab} = Psi^a_{a'} Psi^b_{b'} T^{a'b'}."""
    Psi = transition(p, "Psi").entries
    return QuadraticForm(Psi.T @ T.coeffs @ Psi)


def from_frame(Tb: QuadraticForm, p: SpacetimePoint) -> QuadraticForm:
    """Inverse of :func:`to_frame`."""
    Phi = transition(p, "Phi").entries
    return QuadraticForm(Phi.T @ Tb.coeffs @ Phi)


def frame00_arrays(T: QuadraticForm, t, x1, x2):
    """Vectorized Tb^{00} = T(xi, xi) with xi = (1, -x1/t, -x2/t)."""
    t = np.asarray(t, dtype=float)
    xi = np.stack(np.broadcast_arrays(np.ones_like(t), -np.asarray(x1) / t, -np.asarray(x2) / t), axis=-1)
    return T(xi)


def is_null_form(P: QuadraticForm, n_samples: int = 64) -> bool:
    """Sampled test of P(xi, xi) = 0 on the null circle xi = (1, cos th, sin th)."""
    if n_samples < 8:
        raise ValueError("is_null_form needs n_samples >= 8")
    scale = P.norm
    if scale == 0.0:
        return True
    th = 2.0 * np.pi * np.arange(n_samples) / n_samples
    xi = np.stack([np.ones_like(th), np.cos(th), np.sin(th)], axis=-1)
    return bool(np.max(np.abs(P(xi))) <= 1e-12 * scale)


def null00_bound_ratio(P: QuadraticForm, p: SpacetimePoint) -> float:
    """|Pb^{00}(p)| / (s/t)^2 for p in K."""
    if not p.in_cone:
        raise DomainError(f"null00_bound_ratio needs p in K (t > r + 1), got t={p.t}, r={p.r}")
    s = p.s
    val = to_frame(P, p).coeffs[0, 0]
    return float(abs(val) / (s / p.t) ** 2)


# ---------------------------------------------------------------- vector fields

def field_coefficients(V: str, t, x1, x2):
    """Components (c_t, c_1, c_2) of the vector field ``V`` at the given points."""
    t, x1, x2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x1, x2)))
    one, zero = np.ones_like(t), np.zeros_like(t)
    if V in ("dt", "d0"):
        return one, zero, zero
    if V == "d1":
        return zero, one, zero
    if V == "d2":
        return zero, zero, one
    if V == "L1":
        return x1, t, zero
    if V == "L2":
        return x2, zero, t
    if V == "rot":
        return zero, -x2, x1
    if V in ("db1", "db2"):
        if np.any(t == 0):
            raise DomainError("the frame fields db_a need t != 0")
        return (x1 / t, one, zero) if V == "db1" else (x2 / t, zero, one)
    raise ValueError(f"unknown vector field {V!r}; expected one of {VECTOR_FIELDS}")


_FD4 = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))


def _fd_gradient(f, t, x1, x2, h, domain=None):
    """Fourth-order centered gradient of a vectorized callable at arrays of points.

    The twelve shifted copies of the points go to ``f`` in a single call.
    """
    base = np.stack([np.asarray(a, dtype=float) for a in np.broadcast_arrays(t, x1, x2)])
    tail = base.shape[1:]
    shifts = h * np.array([k for k, _ in _FD4], dtype=float).reshape((-1,) + (1,) * len(tail))
    weights = np.array([w for _, w in _FD4])
    pts = np.broadcast_to(base, (3, len(_FD4)) + base.shape).copy()
    for axis in range(3):
        pts[axis, :, axis] += shifts
    coords = (pts[:, :, 0], pts[:, :, 1], pts[:, :, 2])
    if domain is not None and not np.all(domain(*coords)):
        raise StencilError(f"finite-difference stencil leaves the field domain (h={h})")
    vals = np.broadcast_to(np.asarray(f(*coords), dtype=float), (3, len(_FD4)) + tail)
    return [np.tensordot(weights, vals[axis], axes=(0, 0)) / h for axis in range(3)]


def gradient(field, t, x1, x2, h=1e-3, domain=None):
    """Gradient (d_t, d_1, d_2) of ``field``; uses ``field.gradient`` when provided."""
    domain = domain if domain is not None else getattr(field, "domain", None)
    if hasattr(field, "gradient"):
        if domain is not None and not np.all(domain(t, x1, x2)):
            raise StencilError("evaluation point outside the field domain")
        return [np.asarray(g, dtype=float) for g in field.gradient(t, x1, x2)]
    return _fd_gradient(field, t, x1, x2, h, domain)


def apply_vector_field_arrays(field, V, t, x1, x2, h=1e-3, domain=None):
    ct, c1, c2 = field_coefficients(V, t, x1, x2)
    gt, g1, g2 = gradient(field, t, x1, x2, h, domain)
    return ct * gt + c1 * g1 + c2 * g2


def apply_vector_field(field, V: str, p: SpacetimePoint, h: float = 1e-3, domain=None) -> float:
    """Apply a first-order vector field to a scalar field at ``p``.

    Parameters
    ----------
    field : callable
        Vectorized ``f(t, x1, x2)``. If it has a ``gradient`` method that
        is used instead of finite differences, and an optional ``domain``
        predicate restricts where it may be sampled.
    V : str
        One of ``dt, d1, d2, L1, L2, db1, db2, rot``.
    h : float
        Spacing of the centered fourth-order stencil.
    """
    return float(apply_vector_field_arrays(field, V, p.t, p.x1, p.x2, h, domain))


# closed-form brackets [V1, V2] among the commuting family, as coefficient maps
_BRACKETS = {
    ("dt", "L1"): {"d1": 1.0},
    ("dt", "L2"): {"d2": 1.0},
    ("d1", "L1"): {"dt": 1.0},
    ("d2", "L2"): {"dt": 1.0},
    ("L1", "L2"): {"rot": 1.0},
}
_COMMUTING = ("dt", "d1", "d2", "L1", "L2")


def bracket(V1: str, V2: str) -> dict:
    """Closed-form commutator [V1, V2] as {field tag: coefficient}."""
    V1 = "dt" if V1 == "d0" else V1
    V2 = "dt" if V2 == "d0" else V2
    if V1 not in _COMMUTING or V2 not in _COMMUTING:
        raise ValueError(f"closed-form brackets are tabulated for {_COMMUTING}")
    if (V1, V2) in _BRACKETS:
        return dict(_BRACKETS[(V1, V2)])
    if (V2, V1) in _BRACKETS:
        return {k: -c for k, c in _BRACKETS[(V2, V1)].items()}
    return {}


def commutator_residual(V1: str, V2: str, f, p: SpacetimePoint, h: float = 0.05, domain=None) -> float:
    """V1(V2 f)(p) - V2(V1 f)(p) - [V1, V2] f(p), all derivatives by finite differences.

    The stencil is exact on polynomials of degree <= 4, and both L_a and d_alpha
    map such polynomials to polynomials of the same degree, so on that corpus
    the residual is pure rounding; hence the fairly large default spacing.
    """
    def V2f(t, x1, x2):
        return apply_vector_field_arrays(f, V2, t, x1, x2, h, domain)

    def V1f(t, x1, x2):
        return apply_vector_field_arrays(f, V1, t, x1, x2, h, domain)

    lhs = apply_vector_field_arrays(V2f, V1, p.t, p.x1, p.x2, h) - apply_vector_field_arrays(V1f, V2, p.t, p.x1, p.x2, h)
    rhs = 0.0
    for tag, c in bracket(V1, V2).items():
        rhs = rhs + c * apply_vector_field_arrays(f, tag, p.t, p.x1, p.x2, h, domain)
    return float(lhs - rhs)


def s_over_t(t, x1, x2):
    t = np.asarray(t, dtype=float)
    r2 = np.asarray(x1) ** 2 + np.asarray(x2) ** 2
    return np.sqrt(t * t - r2) / t


def homogeneity_ratios(t, x1, x2, h=1e-4):
    """Measured ratios for the s/t homogeneity bounds at sample points in K.

    Returns max over points of |L_a(s/t)| / (s/t) and of s |d_alpha(s/t)|.
    The first is at most 1 (it equals |x^a|/t); the second is bounded.
    """
    t, x1, x2 = (np.asarray(a, dtype=float) for a in (t, x1, x2))
    if np.any(t <= np.hypot(x1, x2) + 1.0):
        raise DomainError("homogeneity check samples must lie in K")
    q = s_over_t(t, x1, x2)
    s = q * t
    boost = max(float(np.max(np.abs(apply_vector_field_arrays(s_over_t, V, t, x1, x2, h)) / q)) for V in ("L1", "L2"))
    partial = max(float(np.max(np.abs(apply_vector_field_arrays(s_over_t, V, t, x1, x2, h)) * s)) for V in ("dt", "d1", "d2"))
    return {"boost": boost, "partial": partial}
