"""Retarded Kirchhoff integrals in 2+1 dimensions and the disc-intersection integral I(lambda).

With lambda = tau/t and x = (r, 0), the source bound |F| <= C_F t^-2 reduces the
Kirchhoff integral to C_F times

    J(t, r) = int_{t0/t}^1 lambda^-2 I(lambda) dlambda,
    I(lambda) = int_{D0 cap D1} ((1-lambda)^2 - |y|^2)^{-1/2} dy,

where D0 is the disc |y| <= 1 - lambda and D1 the disc of radius
lambda - 1/t centered at X = (-r/t, 0). Near the light cone J ~ sqrt((t-r)/t),
the s/t decay of the retarded part.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError

CASES = ("IA", "IB", "IIA", "IIB", "IIIB")
TWO_PI = 2.0 * math.pi


def _check(lam, t, r):
    if not (0.0 < lam <= 1.0):
        raise DomainError(f"lambda={lam} outside (0, 1]")
    if not (r >= 0.0 and t >= r + 1.0 - 1e-12):
        raise DomainError(f"(t, r) = ({t}, {r}) is not in the closed cone t >= r + 1")


def thresholds(t, r):
    """Case boundaries (t-r+1)/2t, (r+1)/t and (t+r+1)/2t."""
    return (t - r + 1.0) / (2.0 * t), (r + 1.0) / t, (t + r + 1.0) / (2.0 * t)


def classify_case(lam, t, r) -> str:
    """Relative position of D0 and D1.

    I: D1 inside D0, II: partial overlap, III: D0 inside D1; A: the center O
    of D0 lies outside D1, B: inside. A value exactly on a threshold is
    assigned to the later case.
    """
    _check(lam, t, r)
    a, b, c = thresholds(t, r)
    contain = "I" if lam < a else ("III" if lam >= c else "II")
    center = "B" if lam >= b else "A"
    return contain + center


def lambda_minus(t, r) -> float:
    """Root of (lambda - 1/t)^2 + (1 - lambda)^2 = (r/t)^2 (the right angle at P_+).

    Computed in the cancellation-free form
    (1 - (r/t)^2 + t^-2) / ((1 + 1/t) + sqrt(disc)).
    """
    d = r / t
    it = 1.0 / t
    disc = (1.0 + it) ** 2 - 2.0 * (1.0 - d * d + it * it)
    if disc < 0.0:
        raise DomainError(f"lambda_minus undefined at (t, r) = ({t}, {r}): negative discriminant")
    return (1.0 - d * d + it * it) / ((1.0 + it) + math.sqrt(disc))


@dataclass(frozen=True)
class DiscGeometry:
    lam: float
    t: float
    r: float
    case: str
    rho0: float
    rho1: float
    lambda_minus: float | None

    @property
    def R0(self):
        return 1.0 - self.lam

    @property
    def R1(self):
        return self.lam - 1.0 / self.t

    @property
    def d(self):
        return self.r / self.t

    @property
    def empty(self):
        return self.R1 <= 0.0 or self.rho1 <= self.rho0


def disc_geometry(lam, t, r) -> DiscGeometry:
    case = classify_case(lam, t, r)
    R0, R1, d = 1.0 - lam, lam - 1.0 / t, r / t
    if R1 <= 0.0:
        rho0 = rho1 = 0.0
    else:
        rho0 = max(d - R1, 0.0)
        rho1 = min(R0, d + R1)
    try:
        lm = lambda_minus(t, r)
    except DomainError:
        lm = None
    return DiscGeometry(float(lam), float(t), float(r), case, rho0, max(rho1, rho0), lm)


def angular_measure(rho, d, R1):
    """Length of {theta : rho e^{i theta} in D1}, D1 = disc(center at distance d, radius R1)."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (rho * rho + d * d - R1 * R1) / (2.0 * rho * d)
    if d == 0.0:
        return np.where(rho <= R1, TWO_PI, 0.0)
    c = np.where(rho > 0, c, np.where(d <= R1, -1.0, 1.0))
    return 2.0 * np.arccos(np.clip(c, -1.0, 1.0))


def _phi(rho, R0):
    return math.asin(min(max(rho / R0, 0.0), 1.0))


def I_lambda(lam, t, r, epsrel=1e-11) -> float:
    """I(lambda) in polar coordinates about O.

    With rho = (1-lambda) sin(phi) the weight rho drho / sqrt(R0^2 - rho^2)
    becomes R0 sin(phi) dphi. The angular measure is 2 pi for rho < R1 - d,
    zero for rho < d - R1 or rho > d + R1, and an arccos in between; the
    full-angle part is integrated in closed form and the arccos part by
    adaptive quadrature after a cosine change of variable that smooths the
    square-root behaviour at both ends.
    """
    g = disc_geometry(lam, t, r)
    if g.empty or g.R0 <= 0.0:
        return 0.0
    R0, R1, d = g.R0, g.R1, g.d
    total = 0.0
    full_hi = min(max(R1 - d, 0.0), R0)
    if full_hi > 0.0:
        # 2 pi * int_0^{phi_a} R0 sin(phi) dphi
        total += TWO_PI * R0 * (1.0 - math.sqrt(max(1.0 - (full_hi / R0) ** 2, 0.0)))
    lo = max(abs(d - R1), 0.0)
    hi = min(d + R1, R0)
    if hi > lo and d > 0.0:
        pa, pb = _phi(lo, R0), _phi(hi, R0)
        half = 0.5 * (pb - pa)

        def f(beta):
            phi = pa + half * (1.0 - math.cos(beta))
            rho = R0 * math.sin(phi)
            return R0 * math.sin(phi) * float(angular_measure(rho, d, R1)) * half * math.sin(beta)

        val, _ = integrate.quad(f, 0.0, math.pi, epsabs=0.0, epsrel=epsrel, limit=200)
        total += val
    return total


def I_full_disc(lam) -> float:
    """The case III value 2 pi (1 - lambda)."""
    return TWO_PI * (1.0 - lam)


# ---------------------------------------------------------------- Monte-Carlo oracle

MC_SEED = 20171209


def I_lambda_monte_carlo(lam, t, r, n=10_000_000, seed=MC_SEED, chunk=1_000_000, rng=None,
                        target_rel=None, max_n=40_000_000):
    """Independent estimate of I(lambda) by importance sampling.

    Points are drawn on the annulus rho0 <= |y| <= rho1 with radial density
    proportional to the weight rho / sqrt(R0^2 - rho^2) (exactly invertible),
    and uniformly in the angular wedge that contains D1 as seen from O (folded
    onto one side by symmetry). The estimate is the sampled mass times the hit
    fraction. With ``target_rel`` sampling continues past ``n`` (up to
    ``max_n``) until the relative standard error drops below it. Returns (value, stderr).
    """
    _check(lam, t, r)
    R0, R1, d = 1.0 - lam, lam - 1.0 / t, r / t
    if R1 <= 0.0 or R0 <= 0.0:
        return 0.0, 0.0
    rho0 = max(d - R1, 0.0)
    rho1 = min(R0, d + R1)
    if rho1 <= rho0:
        return 0.0, 0.0
    # weight mass on the annulus: R0 (cos phi0 - cos phi1), cos phi = sqrt(1 - (rho/R0)^2)
    c0 = math.sqrt(max(1.0 - (rho0 / R0) ** 2, 0.0))
    c1 = math.sqrt(max(1.0 - (rho1 / R0) ** 2, 0.0))
    half = math.pi if d <= R1 else math.asin(min(R1 / d, 1.0))
    mass = R0 * (c0 - c1) * 2.0 * half
    rng = rng or np.random.default_rng(seed)
    hits = 0
    done = 0
    while True:
        if done >= n:
            p = hits / done
            rel = math.sqrt(max(1.0 - p, 0.0) / max(hits, 1))
            if target_rel is None or rel <= target_rel or done >= max_n:
                break
        m = min(chunk, max(n, max_n) - done) if done >= n else min(chunk, n - done)
        c = c1 + (c0 - c1) * rng.random(m)
        rho2 = R0 * R0 * (1.0 - c * c)
        # angle measured from the direction of the D1 center, folded onto [0, half]
        cphi = np.cos(half * rng.random(m))
        hits += int(np.count_nonzero(2.0 * d * np.sqrt(rho2) * cphi >= rho2 + (d * d - R1 * R1)))
        done += m
    p = hits / done
    return mass * p, mass * math.sqrt(max(p * (1.0 - p), 0.0) / done)


# ---------------------------------------------------------------- J and its sweep

@dataclass
class JResult:
    t: float
    r: float
    value: float
    pieces: dict
    breakpoints: tuple

    @property
    def q(self):
        return (self.t - self.r) / self.t


def integral_J(t, r, t0=2.0, epsrel=1e-8) -> JResult:
    """J = int_{t0/t}^1 lambda^-2 I(lambda) dlambda, split at the case thresholds and lambda_minus.

    Each piece is integrated adaptively; I(lambda) has an inverse square-root
    peak where D1 becomes internally tangent to D0, which sits on a breakpoint.
    Outside the open cone (t - r <= 1) the intersection is empty and J = 0.
    """
    if not (t > 0 and r >= 0):
        raise DomainError("need t > 0, r >= 0")
    if t - r <= 1.0:
        return JResult(float(t), float(r), 0.0, {}, ())
    a = t0 / t
    pts = [a, 1.0]
    for p in thresholds(t, r) + (1.0 / t,):
        if a < p < 1.0:
            pts.append(p)
    try:
        lm = lambda_minus(t, r)
        if a < lm < 1.0:
            pts.append(lm)
    except DomainError:
        pass
    pts = sorted(set(pts))
    f = lambda lam: I_lambda(lam, t, r) / (lam * lam)  # noqa: E731
    pieces = {}
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 1e-15:
            continue
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
        pieces[(lo, hi)] = val
        total += val
    return JResult(float(t), float(r), total, pieces, tuple(pts))


def J_sweep(t, qs, t0=2.0):
    """J at r = t(1 - q) for each q = (t-r)/t."""
    return [integral_J(t, t * (1.0 - q), t0) for q in qs]


def write_sweep_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "(t-r)/t", "J", "J/sqrt((t-r)/t)"])
        for res in results:
            q = res.q
            w.writerow([f"{res.t:.17g}", f"{res.r:.17g}", f"{q:.17g}", f"{res.value:.17g}",
                        f"{res.value / math.sqrt(q):.17g}" if q > 0 else "nan"])


def scaling_fit(results):
    """Least-squares slope of log J against log((t-r)/t) and the ratios J/sqrt(q)."""
    q = np.array([r.q for r in results])
    J = np.array([r.value for r in results])
    ratio = J / np.sqrt(q)
    if np.any(J <= 0):
        return float("nan"), ratio
    slope = float(np.polyfit(np.log(q), np.log(J), 1)[0])
    return slope, ratio


# ---------------------------------------------------------------- Kirchhoff quadrature

def _gauss_panels(a, b, panels, order):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * xg[None, :] + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wg[None, :]
    return x.ravel(), w.ravel()


@dataclass(frozen=True)
class KirchhoffGrid:
    """Quadrature resolution: Gauss panels per unit time, in phi, and theta nodes."""

    tau_panels_per_unit: float = 2.0
    phi_panels: int = 2
    order: int = 8
    n_theta: int = 64

    def refined(self, factor=2):
        return KirchhoffGrid(self.tau_panels_per_unit * factor, self.phi_panels * factor, self.order,
                             self.n_theta * factor)


def _disc_average_nodes(grid: KirchhoffGrid):
    phi, wphi = _gauss_panels(0.0, 0.5 * math.pi, grid.phi_panels, grid.order)
    th = TWO_PI * np.arange(grid.n_theta) / grid.n_theta
    wth = TWO_PI / grid.n_theta
    # rho / R = sin(phi); weight sin(phi) dphi dtheta, to be scaled by R
    sphi = np.sin(phi)
    e1 = (sphi[:, None] * np.cos(th)[None, :]).ravel()
    e2 = (sphi[:, None] * np.sin(th)[None, :]).ravel()
    w = (wphi * sphi)[:, None] * np.full(th.shape, wth)[None, :]
    return e1, e2, w.ravel()


def kirchhoff_solve(f, t, x, t0=2.0, grid: KirchhoffGrid | None = None):
    """u(t, x) = (1/2pi) int_{t0}^t int_{|y|<t-tau} f(tau, x+y) / sqrt((t-tau)^2 - |y|^2) dy dtau.

    The retarded solution of Box u = f with zero data at t0. With
    |y| = (t-tau) sin(phi) the kernel is bounded; tau and phi use composite
    Gauss-Legendre panels and theta the periodic trapezoid rule.
    ``f(tau, x1, x2)`` must accept arrays.
    """
    grid = grid or KirchhoffGrid()
    x = np.asarray(x, dtype=float)
    if t <= t0:
        return 0.0
    panels = max(1, int(math.ceil((t - t0) * grid.tau_panels_per_unit)))
    tau, wtau = _gauss_panels(t0, t, panels, grid.order)
    e1, e2, w = _disc_average_nodes(grid)
    total = 0.0
    for tk, wk in zip(tau, wtau):
        R = t - tk
        vals = np.asarray(f(tk, x[0] + R * e1, x[1] + R * e2), dtype=float)
        total += wk * R * float(np.dot(w, vals))
    return total / TWO_PI


def kirchhoff_homogeneous(u0, u1, t, x, t0=2.0, grid: KirchhoffGrid | None = None, grad_u0=None, h=1e-4):
    """Poisson formula for Box u = 0 with u = u0, d_t u = u1 at t0:

    u(t, x) = (1/2pi) int_{|y|<R} (u0(x+y) + grad u0(x+y).y + R u1(x+y)) / (R sqrt(R^2 - |y|^2)) dy,
    R = t - t0. ``grad_u0`` defaults to central differences with step ``h``.
    """
    grid = grid or KirchhoffGrid()
    x = np.asarray(x, dtype=float)
    R = t - t0
    if R <= 0:
        return float(u0(x[0], x[1]))
    if grad_u0 is None:
        def grad_u0(a, b):
            return ((u0(a + h, b) - u0(a - h, b)) / (2 * h), (u0(a, b + h) - u0(a, b - h)) / (2 * h))
    e1, e2, w = _disc_average_nodes(grid)
    y1, y2 = R * e1, R * e2
    g1, g2 = grad_u0(x[0] + y1, x[1] + y2)
    vals = u0(x[0] + y1, x[1] + y2) + g1 * y1 + g2 * y2 + R * u1(x[0] + y1, x[1] + y2)
    # dy / (R sqrt(R^2 - rho^2)) = sin(phi) dphi dtheta
    return float(np.dot(w, vals)) / TWO_PI


def smooth_step(z):
    """C-infinity step: 0 for z <= 0, 1 for z >= 1."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    inside = (z > 0) & (z < 1)
    zi = z[inside]
    a = np.exp(-1.0 / zi)
    b = np.exp(-1.0 / (1.0 - zi))
    out[inside] = a / (a + b)
    out[z >= 1] = 1.0
    return out


def cutoff_source(C_F=1.0, inner=1.25, width=0.5):
    """F = C_F chi(t - r) t^-2 with chi a smooth step from t - r = inner to inner + width.

    F vanishes near the cone t = r + 1 and satisfies |F| <= C_F t^-2.
    """
    def F(t, x1, x2):
        r = np.hypot(x1, x2)
        return C_F * smooth_step((t - r - inner) / width) / (np.asarray(t, dtype=float) ** 2)
    return F


@dataclass
class DecayConstants:
    C: float
    C0: float
    n_points: int
    max_violation: float


def prop_decay_constants(points, F, data=None, t0=2.0, grid: KirchhoffGrid | None = None, C_F=1.0):
    """Measure the constants in |u| <= C C_F (s/t) + C0 / s on sample points of K.

    u = w1 + w2 with w1 the retarded part (zero data) and w2 the free
    wave from ``data = (u0, u1)``; C = max |w1| t / (C_F s) and C0 = max |w2| s.
    ``max_violation`` is max(|u| - (C C_F s/t + C0/s)), which is <= 0 by
    construction up to rounding.
    """
    grid = grid or KirchhoffGrid()
    C = 0.0
    C0 = 0.0
    vals = []
    for (t, x1, x2) in points:
        s = math.sqrt(t * t - x1 * x1 - x2 * x2)
        w1 = kirchhoff_solve(F, t, (x1, x2), t0, grid)
        w2 = kirchhoff_homogeneous(data[0], data[1], t, (x1, x2), t0, grid) if data is not None else 0.0
        C = max(C, abs(w1) * t / (C_F * s))
        C0 = max(C0, abs(w2) * s)
        vals.append((t, s, w1 + w2))
    viol = max(abs(u) - (C * C_F * s / t + C0 / s) for t, s, u in vals) if vals else 0.0
    return DecayConstants(float(C), float(C0), len(vals), float(viol))


# ---------------------------------------------------------------- angle inequality

def alpha_gap(alpha):
    """g(alpha) = 2 sqrt(1 - cos(alpha)) - alpha; the inequality holds where g >= 0."""
    alpha = np.asarray(alpha, dtype=float)
    return 2.0 * np.sqrt(1.0 - np.cos(alpha)) - alpha


def alpha_inequality_root(xtol=1e-14) -> float:
    """Largest alpha0 in (0, pi) with alpha <= 2 sqrt(1 - cos alpha) on [0, alpha0].

    g is positive on (0, pi/2] and negative at pi, with one sign change in
    between; it is found by bisection.
    """
    return float(optimize.bisect(lambda a: float(alpha_gap(a)), 0.5 * math.pi, math.pi, xtol=xtol))
