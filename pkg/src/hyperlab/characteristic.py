"""Integral curves of the transport field L = d_t + 2rt/(t^2+r^2) d_r and the ODEs along them.

Along a curve gamma of L the quantity w = (t-r)^{1/2} t^{1/2} d_t u obeys

    w' + P w = (1 + (r/t)^2)^{-1} (t-r)^{1/2} t^{1/2} (sum_a dbar_a dbar_a u + Box u),

with the positive potential P(t, r) = (t-r)/(2t^2) (2 + 3r/t)/(1 + (r/t)^2).
L is radial, so curves are solved as the scalar ODE dr/dt = 2rt/(t^2+r^2).

Klein-Gordon components are transported instead along rays from the origin,
where s v solves a forced harmonic oscillator in s.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DomainError

CONE = "cone"
INITIAL = "initial"
FORWARD = "forward"
BACKWARD = "backward"


def curve_speed(t, r):
    """dr/dt along L."""
    return 2.0 * r * t / (t * t + r * r)


def potential_value(t, r):
    """P(t, r) = (t-r)/(2 t^2) * (2 + 3r/t) / (1 + (r/t)^2).

    Satisfies P >= (t-r)/t^2; at r = 0 it equals 1/t.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(~(r >= 0)) or np.any(~(t > r)):
        raise DomainError("potential_value needs t > r >= 0")
    q = r / t
    out = (t - r) / (2.0 * t * t) * (2.0 + 3.0 * q) / (1.0 + q * q)
    return out if out.ndim else float(out)


def _rk4(t, r, h):
    k1 = curve_speed(t, r)
    k2 = curve_speed(t + 0.5 * h, r + 0.5 * h * k1)
    k3 = curve_speed(t + 0.5 * h, r + 0.5 * h * k2)
    k4 = curve_speed(t + h, r + h * k3)
    return r + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _events(t, r):
    # both positive strictly inside K_[2, inf)
    return t - r - 1.0, math.sqrt(max(t * t - r * r, 0.0)) - 2.0


@dataclass
class CharCurve:
    """Samples (t, r) of an integral curve of L through ``origin``.

    ``direction`` is ``x0/|x0|`` (any unit vector when x0 = 0). Samples are
    ordered in the integration direction; for backward curves ``exit`` is
    ``"cone"`` (t = r + 1) or ``"initial"`` (s = 2).
    """

    origin: tuple
    t: np.ndarray
    r: np.ndarray
    sense: str = BACKWARD
    exit: str | None = None
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))

    @property
    def s(self):
        return np.sqrt(self.t ** 2 - self.r ** 2)

    @property
    def P(self):
        return potential_value(self.t, self.r)

    @property
    def x(self):
        """Cartesian positions (n, 2) along the curve."""
        return self.r[:, None] * self.direction[None, :]

    @property
    def end(self):
        return float(self.t[-1]), float(self.r[-1])

    def exit_residual(self) -> float:
        """Distance of the end point from its exit surface, in the event function."""
        if self.exit is None:
            return float("nan")
        g_cone, g_init = _events(*self.end)
        return abs(g_cone if self.exit == CONE else g_init)

    def ascending(self):
        """The same samples ordered by increasing t."""
        if self.sense == FORWARD:
            return self.t, self.r
        return self.t[::-1], self.r[::-1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "s", "P"])
            for row in zip(self.t, self.r, self.s, self.P):
                w.writerow([f"{v:.17g}" for v in row])


def integrate_curve(t0, x0, direction=BACKWARD, dt=0.01, t_stop=None, tol=1e-12, max_steps=10_000_000):
    """RK4 integration of the curve of L through (t0, x0).

    Backward curves stop where they leave K_[2, inf): the last step is
    shortened by bisection on the events t - r - 1 = 0 and s - 2 = 0 so the
    end point lies on the exit surface to ``tol``. Forward curves stop at
    ``t_stop`` (required).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size == 1:
        x0 = np.array([x0[0], 0.0])
    r0 = float(np.hypot(*x0))
    t0 = float(t0)
    g = _events(t0, r0)
    if not (g[0] > -1e-14 and g[1] > -1e-14):
        raise DomainError(f"({t0}, r={r0}) is not in K_[2, inf)")
    if not dt > 0:
        raise ValueError("dt must be positive")
    unit = x0 / r0 if r0 > 0 else np.array([1.0, 0.0])
    ts = [t0]
    rs = [r0]
    t, r = t0, r0
    exit_kind = None
    if direction == FORWARD:
        if t_stop is None or t_stop < t0:
            raise ValueError("forward integration needs t_stop >= t0")
        n = int(math.ceil((t_stop - t0) / dt - 1e-12))
        for k in range(n):
            h = min(dt, t_stop - t)
            r = _rk4(t, r, h)
            t = t0 + (k + 1) * dt if k < n - 1 else float(t_stop)
            ts.append(t)
            rs.append(r)
    elif direction == BACKWARD:
        if min(g) <= tol:
            exit_kind = CONE if g[0] <= g[1] else INITIAL
        steps = 0
        while exit_kind is None:
            steps += 1
            if steps > max_steps:
                raise RuntimeError("curve did not exit; step too small")
            h = dt
            r1 = _rk4(t, r, -h)
            g1 = _events(t - h, r1)
            if g1[0] > 0 and g1[1] > 0:
                t, r = t - h, r1
                ts.append(t)
                rs.append(r)
                continue
            # the exit lies inside this step: bisect on the step length
            lo, hi = 0.0, h
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                gm = _events(t - mid, _rk4(t, r, -mid))
                if gm[0] > 0 and gm[1] > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < tol:
                    break
            h = hi
            r1 = _rk4(t, r, -h)
            ge = _events(t - h, r1)
            exit_kind = CONE if ge[0] <= ge[1] else INITIAL
            t, r = t - h, r1
            ts.append(t)
            rs.append(r)
    else:
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    return CharCurve((t0, tuple(x0)), np.array(ts), np.array(rs), direction, exit_kind, unit)


# ---------------------------------------------------------------- transport ODE

@dataclass
class TransportProblem:
    """y' + A(t) y = B(t) sampled on an increasing grid ``t``, with y(t[0]) = y0."""

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    y0: float = 0.0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.A = np.broadcast_to(np.asarray(self.A, dtype=float), self.t.shape).copy()
        self.B = np.broadcast_to(np.asarray(self.B, dtype=float), self.t.shape).copy()
        if self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("need at least two samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must increase")


def solve_transport(prob: TransportProblem):
    """Variation of constants y(t) = y0 e^{-int A} + int B(tau) e^{-int_tau^t A} dtau.

    Evaluated step by step with trapezoid rules: over each interval the decay
    factor exp(-int A) multiplies the running value and the left source sample.
    This never forms exp(+int A), so large potentials cannot overflow.
    """
    t, A, B = prob.t, prob.A, prob.B
    h = np.diff(t)
    decay = np.exp(-0.5 * h * (A[1:] + A[:-1]))
    y = np.empty_like(t)
    y[0] = prob.y0
    for k in range(1, t.size):
        y[k] = decay[k - 1] * (y[k - 1] + 0.5 * h[k - 1] * B[k - 1]) + 0.5 * h[k - 1] * B[k]
    return y


def transport_weights(t, A):
    """exp(-int_{t_k}^{t_end} A) for each sample, by the trapezoid rule."""
    t = np.asarray(t, dtype=float)
    A = np.asarray(A, dtype=float)
    seg = 0.5 * np.diff(t) * (A[1:] + A[:-1])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return np.exp(-tail)


# ---------------------------------------------------------------- d_t u along a curve

def _jets(source, t, x1, x2, order=2):
    """Derivative jets of ``u`` from a trajectory, slab or analytic field."""
    slab = getattr(source, "slab", source)
    if hasattr(slab, "jets_at"):
        if slab is None:
            raise CoverageError("trajectory has no recorded slab")
        lo, hi = slab.t_range
        if np.min(t) < lo or np.max(t) > hi:
            raise CoverageError(f"curve times [{np.min(t):.4g}, {np.max(t):.4g}] leave the slab [{lo:.4g}, {hi:.4g}]")
        return slab.jets_at("u", t, x1, x2, order)
    if hasattr(source, "jet"):
        return source.jet(t, x1, x2, order)
    raise TypeError("source must provide jets (Trajectory, Slab or AnalyticField)")


def transport_source(jet, t, x1, x2):
    """R_w = (1+(r/t)^2)^{-1} (t-r)^{1/2} t^{1/2} (sum_a dbar_a dbar_a u + Box u) from a 2-jet.

    sum_a dbar_a dbar_a u + Box u = (1 + r^2/t^2) u_tt + 2 (x^a/t) u_ta + (2/t - r^2/t^3) u_t;
    the Laplacians cancel.
    """
    t = np.asarray(t, dtype=float)
    r2 = np.asarray(x1) ** 2 + np.asarray(x2) ** 2
    r = np.sqrt(r2)
    core = ((1.0 + r2 / t ** 2) * jet[(2, 0, 0)]
            + 2.0 * (x1 * jet[(1, 1, 0)] + x2 * jet[(1, 0, 1)]) / t
            + (2.0 / t - r2 / t ** 3) * jet[(1, 0, 0)])
    return np.sqrt((t - r) * t) / (1.0 + r2 / t ** 2) * core


@dataclass
class GradientBoundReport:
    point: tuple
    measured: float
    value: float
    bound: float
    reconstructed: float
    exit: str
    w_entry: float
    curve: CharCurve

    @property
    def ratio(self):
        return self.measured / self.bound if self.bound > 0 else (0.0 if self.measured == 0 else math.inf)


def sharp_gradient_bound(source, t, x, dt=0.01):
    """Both sides of |d_t u(t,x)| <= (t-r)^{-1/2} t^{-1/2} (|w(tau0)| + int e^{-int P} |R_w|).

    The backward curve of L from (t, x) is integrated to its exit tau0; the
    jets of u along it give R_w and w(tau0). ``reconstructed`` is the signed
    transport solution, which should reproduce d_t u(t, x) itself.
    """
    x = np.asarray(x, dtype=float)
    curve = integrate_curve(t, x, BACKWARD, dt=dt)
    ta, ra = curve.ascending()
    x1 = ra * curve.direction[0]
    x2 = ra * curve.direction[1]
    jet = _jets(source, ta, x1, x2, 2)
    Rw = transport_source(jet, ta, x1, x2)
    P = potential_value(ta, ra)
    weight = np.sqrt((ta - ra) * ta)
    w_entry = float(weight[0] * jet[(1, 0, 0)][0])
    signed = solve_transport(TransportProblem(ta, P, Rw, w_entry))[-1]
    absolute = solve_transport(TransportProblem(ta, P, np.abs(Rw), abs(w_entry)))[-1]
    jp = _jets(source, np.array([float(t)]), np.array([x[0]]), np.array([x[1]]), 1)
    value = float(jp[(1, 0, 0)][0])
    return GradientBoundReport((float(t), float(x[0]), float(x[1])), abs(value), value, float(absolute / weight[-1]),
                               float(signed / weight[-1]), curve.exit, w_entry, curve)


# ---------------------------------------------------------------- Klein-Gordon rays

def ray_entry(t, r):
    """Hyperbolic time where the segment from the origin to (t, r) enters K_[2, inf).

    The ray meets t - r = 1 at s = sqrt((t+r)/(t-r)); for r/t <= 3/5 this is
    at most 2 and the ray starts on H_2 instead.
    """
    if not t > r + 1.0 - 1e-12:
        raise DomainError("point outside K")
    if r / t > 0.6:
        return math.sqrt((t + r) / (t - r))
    return 2.0


@dataclass
class RaySolution:
    s: np.ndarray
    W: np.ndarray
    dW: np.ndarray

    def bound_ratio(self, F, constant=2.0):
        """(|W|+|W'|)(s) / (C(|W0|+|W0'|) + C int |F|), maximised over s."""
        s = self.s
        intF = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(s) * (np.abs(F[1:]) + np.abs(F[:-1])))])
        rhs = constant * (abs(self.W[0]) + abs(self.dW[0])) + constant * intF
        lhs = np.abs(self.W) + np.abs(self.dW)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        return float(np.max(q))


def kg_ray_transport(W0, dW0, s0, s1, F=None, n=2001):
    """Solve W'' + W = F on [s0, s1] with W(s0) = W0, W'(s0) = dW0.

    ``F`` is a callable of s or an array of samples on ``np.linspace(s0, s1, n)``.
    Uses variation of constants
    W(s) = W0 cos(s-s0) + W0' sin(s-s0) + int_{s0}^s sin(s-sigma) F(sigma) dsigma
    with trapezoid quadrature of F cos and F sin.
    """
    if not s1 >= s0:
        raise ValueError("need s1 >= s0")
    if F is not None and not callable(F):
        F = np.asarray(F, dtype=float)
        n = F.size
    s = np.linspace(s0, s1, n)
    if F is None:
        Fs = np.zeros(n)
    elif callable(F):
        Fs = np.broadcast_to(np.asarray(F(s), dtype=float), s.shape)
    else:
        Fs = F
    c, sn = np.cos(s), np.sin(s)
    h = np.diff(s)

    def cumtrap(y):
        return np.concatenate([[0.0], np.cumsum(0.5 * h * (y[1:] + y[:-1]))])

    Ic = cumtrap(Fs * c)
    Is = cumtrap(Fs * sn)
    ds = s - s0
    W = W0 * np.cos(ds) + dW0 * np.sin(ds) + sn * Ic - c * Is
    dW = -W0 * np.sin(ds) + dW0 * np.cos(ds) + c * Ic + sn * Is
    return RaySolution(s, W, dW)
