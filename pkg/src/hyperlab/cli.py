"""Command line front end: INI configuration, verification suites and report files.

Subcommands ``evolve``, ``verify-kirchhoff``, ``verify-characteristics``,
``verify-frame`` and ``report``. Each run writes ``<out>/<run-id>/*.csv`` and a
``summary.json``; the run id is derived from the command and the resolved
configuration, so identical inputs land in the same directory with identical
CSV bytes.

Exit codes: 0 success, 1 invalid configuration, 2 numerical instability,
3 a verification tolerance was missed.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import characteristic as ch
from . import diagnostics as dg
from . import frame as fr
from . import kirchhoff as kh
from .errors import ConfigError, CoverageError, HyperlabError, InstabilityError, NullConditionError
from .evolution import DEFAULT_WEIGHTS, SystemCoefficients, bump_data
from .fields import PROFILES
from .frame import QuadraticForm
from .slab import CFL_MAX, GridSpec

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_TOLERANCE = 3

DEFAULT_SEED = 20171209


# ---------------------------------------------------------------- configuration

@dataclass
class KirchhoffSettings:
    n_configs: int = 100
    mc_samples: int = 10_000_000
    mc_max_samples: int = 40_000_000
    mc_target_rel: float = 2e-4
    mc_rtol: float = 1e-3
    closed_form_tol: float = 1e-6
    n_closed_form: int = 100
    lambda_minus_tol: float = 1e-12
    n_case_samples: int = 10_000
    sweep_t: float = 1000.0
    sweep_q: tuple = (0.1, 0.05, 0.02, 0.01, 0.005)
    slope: float = 0.5
    slope_tol: float = 0.1
    ratio_factor: float = 2.0
    alpha_points: int = 10_000
    alpha_max: float = 2.7
    alpha_window: tuple = (2.7, 2.9)


@dataclass
class CharacteristicSettings:
    n_curves: int = 100
    n_samples: int = 10_000
    exit_tol: float = 1e-8
    dt: float = 0.01
    forward_span: float = 20.0
    t_max: float = 40.0
    transport_tol: float = 1e-6
    curves_file: str | None = None


@dataclass
class FrameSettings:
    n_points: int = 10_000
    tol: float = 1e-12
    commutator_tol: float = 1e-8
    n_polynomials: int = 20
    null_ratio_tol: float = 1e-12


@dataclass
class RunConfig:
    """Resolved configuration; every section of the INI file maps to a group of fields."""

    A: tuple = (1.0, 0.0, 0.0)
    R: float = 1.0
    Q: QuadraticForm = field(default_factory=QuadraticForm.minkowski)
    P: QuadraticForm = field(default_factory=QuadraticForm.minkowski)
    dx: float = 0.02
    cfl_factor: float = 0.45
    extent: float | None = None
    t_end: float | None = None
    profile: str = "gauss-bump"
    epsilon: float = 0.01
    radius: float = 0.8
    sharpness: float = 5.0
    weights: tuple = DEFAULT_WEIGHTS
    s_list: tuple = tuple(2.0 + 0.5 * k for k in range(13))
    max_order: int = 2
    delta: float = dg.DEFAULT_DELTA
    c1_over_c0: float = 10.0
    decay_window: tuple = (3.0, 8.0)
    backend: str | None = None
    seed: int = DEFAULT_SEED
    kirchhoff: KirchhoffSettings = field(default_factory=KirchhoffSettings)
    characteristics: CharacteristicSettings = field(default_factory=CharacteristicSettings)
    frame: FrameSettings = field(default_factory=FrameSettings)

    def coefficients(self) -> SystemCoefficients:
        return SystemCoefficients(self.A, self.R, self.Q, self.P)

    def data(self):
        return bump_data(self.epsilon, self.radius, weights=self.weights, profile=self.profile,
                         sharpness=self.sharpness)

    def as_dict(self):
        d = asdict(self)
        d["Q"] = self.Q.coeffs.tolist()
        d["P"] = self.P.coeffs.tolist()
        return d


def _floats(text, n=None, key=""):
    try:
        vals = tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _s_list(text, key="diagnostics.s_list"):
    """``a:b:h`` (inclusive range) or a comma separated list."""
    if ":" in text:
        parts = _floats(text.replace(":", ","), 3, key)
        a, b, h = parts
        if not h > 0 or b < a:
            raise ConfigError(f"{key}: range {text!r} needs start <= stop and a positive step")
        n = int(math.floor((b - a) / h + 1e-9))
        return tuple(round(a + k * h, 12) for k in range(n + 1))
    return _floats(text, key=key)


def _form(text, key):
    t = text.strip().lower()
    if t in ("minkowski", "m"):
        return QuadraticForm.minkowski()
    if t in ("zero", "0"):
        return QuadraticForm.zero()
    vals = _floats(text, 9, key)
    try:
        return QuadraticForm(np.array(vals).reshape(3, 3))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _auto(text):
    return None if text.strip().lower() in ("", "auto", "none") else text


def load_config(path=None, text=None) -> RunConfig:
    """Parse an INI file (or string) over the defaults and validate it.

    Unknown sections or keys are rejected so that typos do not pass silently.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"config file {path!r} not found")
            cp.read(path)
        if text is not None:
            cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    cfg = RunConfig()
    known = {
        "coefficients": {"A", "R", "Q", "P"},
        "grid": {"dx", "cfl_factor", "extent", "t_end"},
        "data": {"profile", "epsilon", "radius", "sharpness", "weights"},
        "diagnostics": {"s_list", "max_order", "delta", "c1_over_c0", "decay_s_min", "decay_s_max", "backend"},
        "seeds": {"seed"},
        "kirchhoff": set(KirchhoffSettings.__dataclass_fields__),
        "characteristics": set(CharacteristicSettings.__dataclass_fields__),
        "frame": set(FrameSettings.__dataclass_fields__),
    }
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown config section [{sec}]; expected one of {sorted(known)}")
        for key in cp[sec]:
            if key not in known[sec]:
                raise ConfigError(f"unknown key {sec}.{key}; expected one of {sorted(known[sec])}")

    def get(sec, key, conv, default):
        if cp.has_option(sec, key):
            raw = cp.get(sec, key)
            try:
                return conv(raw)
            except ConfigError:
                raise
            except (TypeError, ValueError):
                raise ConfigError(f"{sec}.{key}: cannot parse {raw!r}") from None
        return default

    opt_float = lambda x: None if _auto(x) is None else float(x)  # noqa: E731
    cfg.A = get("coefficients", "A", lambda x: _floats(x, 3, "coefficients.A"), cfg.A)
    cfg.R = get("coefficients", "R", float, cfg.R)
    cfg.Q = get("coefficients", "Q", lambda x: _form(x, "coefficients.Q"), cfg.Q)
    cfg.P = get("coefficients", "P", lambda x: _form(x, "coefficients.P"), cfg.P)
    cfg.dx = get("grid", "dx", float, cfg.dx)
    cfg.cfl_factor = get("grid", "cfl_factor", float, cfg.cfl_factor)
    cfg.extent = get("grid", "extent", opt_float, cfg.extent)
    cfg.t_end = get("grid", "t_end", opt_float, cfg.t_end)
    cfg.profile = get("data", "profile", str.strip, cfg.profile)
    cfg.epsilon = get("data", "epsilon", float, cfg.epsilon)
    cfg.radius = get("data", "radius", float, cfg.radius)
    cfg.sharpness = get("data", "sharpness", float, cfg.sharpness)
    cfg.weights = get("data", "weights", lambda x: _floats(x, 4, "data.weights"), cfg.weights)
    cfg.s_list = get("diagnostics", "s_list", _s_list, cfg.s_list)
    cfg.max_order = get("diagnostics", "max_order", int, cfg.max_order)
    cfg.delta = get("diagnostics", "delta", float, cfg.delta)
    cfg.c1_over_c0 = get("diagnostics", "c1_over_c0", float, cfg.c1_over_c0)
    cfg.decay_window = (get("diagnostics", "decay_s_min", float, cfg.decay_window[0]),
                        get("diagnostics", "decay_s_max", float, cfg.decay_window[1]))
    cfg.backend = get("diagnostics", "backend", lambda x: _auto(x) and x.strip(), cfg.backend)
    cfg.seed = get("seeds", "seed", int, cfg.seed)

    for name, obj in (("kirchhoff", cfg.kirchhoff), ("characteristics", cfg.characteristics),
                      ("frame", cfg.frame)):
        for key, f in obj.__dataclass_fields__.items():
            if not cp.has_option(name, key):
                continue
            cur = getattr(obj, key)
            raw = cp.get(name, key)
            if isinstance(cur, tuple):
                val = _floats(raw, key=f"{name}.{key}")
            elif isinstance(cur, bool):
                val = cp.getboolean(name, key)
            elif isinstance(cur, int):
                val = get(name, key, lambda x: int(float(x)), cur)
            elif isinstance(cur, float):
                val = get(name, key, float, cur)
            else:
                val = _auto(raw)
            setattr(obj, key, val)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Module-level invariants: null P, CFL, C1 > C0, unit-disc support, sane ranges."""
    try:
        cfg.coefficients()
    except NullConditionError as exc:
        raise ConfigError(f"coefficients.P: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"coefficients: {exc}") from None
    if not 0 < cfg.cfl_factor <= CFL_MAX:
        raise ConfigError(f"grid.cfl_factor = {cfg.cfl_factor}: CFL condition dt <= dx/sqrt(2) needs "
                          f"0 < cfl_factor <= {CFL_MAX:.6f}")
    if not cfg.dx > 0:
        raise ConfigError("grid.dx must be positive")
    if cfg.profile not in PROFILES:
        raise ConfigError(f"data.profile {cfg.profile!r} unknown; expected one of {PROFILES}")
    if cfg.epsilon < 0:
        raise ConfigError("data.epsilon must be nonnegative")
    if not (cfg.radius > 0 and cfg.sharpness > 0):
        raise ConfigError("data.radius and data.sharpness must be positive")
    try:
        cfg.data()
    except ValueError as exc:
        raise ConfigError(f"data: support must lie in the unit disc: {exc}") from None
    if not cfg.c1_over_c0 > 1.0:
        raise ConfigError(f"diagnostics.c1_over_c0 = {cfg.c1_over_c0}: bootstrap needs C1 > C0")
    if not 0.0 < cfg.delta <= 0.1:
        raise ConfigError(f"diagnostics.delta = {cfg.delta} must lie in (0, 1/10]")
    if not 0 <= cfg.max_order <= 2:
        raise ConfigError("diagnostics.max_order must be 0, 1 or 2 (vector fields up to total order 2)")
    s = np.asarray(cfg.s_list, dtype=float)
    if s.size == 0 or np.any(s < 2.0) or np.any(np.diff(s) <= 0):
        raise ConfigError("diagnostics.s_list must be increasing with every s >= 2 (slices inside K_[2, inf))")
    if cfg.decay_window[0] >= cfg.decay_window[1]:
        raise ConfigError("diagnostics.decay_s_min must be below decay_s_max")
    if cfg.backend not in (None, "cython", "python"):
        raise ConfigError("diagnostics.backend must be auto, cython or python")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seeds.seed must be an unsigned 64-bit integer")
    k = cfg.kirchhoff
    if k.n_configs < 0 or k.mc_samples <= 0 or k.mc_rtol <= 0:
        raise ConfigError("kirchhoff: n_configs >= 0, mc_samples > 0 and mc_rtol > 0 required")
    if not k.sweep_t > 2 or any(not 0 < q < 1 for q in k.sweep_q) or len(k.sweep_q) < 2:
        raise ConfigError("kirchhoff: sweep_t > 2 and at least two sweep_q values in (0, 1) required")
    c = cfg.characteristics
    if c.n_curves < 0 or c.n_samples < 0 or not c.dt > 0 or not c.exit_tol > 0:
        raise ConfigError("characteristics: counts must be >= 0, dt and exit_tol positive")
    if cfg.frame.n_points < 0:
        raise ConfigError("frame.n_points must be >= 0")


# ---------------------------------------------------------------- checks and output

@dataclass
class Check:
    """One verified condition: ``value`` compared with ``tolerance`` as described by ``condition``."""

    name: str
    condition: str
    value: float | None
    tolerance: str
    passed: bool

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        val = "n/a" if self.value is None else f"{self.value:.6g}"
        return f"[{mark}] {self.name}: {self.condition}; value {val}, required {self.tolerance}"


def run_id(command, cfg: RunConfig):
    blob = json.dumps({"command": command, "config": cfg.as_dict()}, sort_keys=True, default=str)
    return f"{command}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"


def write_rows(path, header, rows):
    dg.write_csv(path, header, rows)


def finish(command, cfg, out_dir, checks, t0, extra=None, strict=True, stream=None):
    passed = all(c.passed for c in checks)
    code = EXIT_OK if passed or not strict else EXIT_TOLERANCE
    summary = {
        "command": command,
        "run_id": os.path.basename(out_dir),
        "status": "pass" if passed else "fail",
        "exit_code": code,
        "elapsed_s": round(time.time() - t0, 3),
        "checks": [asdict(c) for c in checks],
        "config": cfg.as_dict(),
    }
    if extra:
        summary.update(extra)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    for c in checks:
        print(c.line(), file=stream)
    print(f"{command}: {'all checks passed' if passed else 'some checks failed'} -> {out_dir}", file=stream)
    return code


def _window(name, condition, value, lo, hi):
    ok = value is not None and math.isfinite(value) and lo <= value <= hi
    return Check(name, condition, value, f"[{lo:g}, {hi:g}]", bool(ok))


def _at_most(name, condition, value, bound):
    ok = value is not None and math.isfinite(value) and value <= bound
    return Check(name, condition, value, f"<= {bound:g}", bool(ok))


def _at_least(name, condition, value, bound):
    ok = value is not None and math.isfinite(value) and value >= bound
    return Check(name, condition, value, f">= {bound:g}", bool(ok))


# ---------------------------------------------------------------- evolve

def cmd_evolve(cfg: RunConfig, out_dir, threads=1, strict=False, stream=None):
    """Evolve the canonical system with diagnostics and write the reports."""
    t0 = time.time()
    coeffs = cfg.coefficients()
    data = cfg.data()
    grid = None
    if cfg.extent is not None:
        grid = GridSpec(dx=cfg.dx, extent=cfg.extent, cfl_factor=cfg.cfl_factor)
    try:
        traj = dg.run_with_diagnostics(data, coeffs, list(cfg.s_list), dx=cfg.dx, cfl_factor=cfg.cfl_factor,
                                       max_order=cfg.max_order, backend=cfg.backend, threads=threads,
                                       grid=grid, t_end=cfg.t_end)
    except CoverageError as exc:
        raise ConfigError(f"grid: {exc}") from None
    os.makedirs(out_dir, exist_ok=True)
    dg.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), traj)

    checks = []
    eps = cfg.epsilon
    C0 = dg.measure_C0(traj, eps, cfg.max_order) if eps > 0 else 1.0
    C0 = C0 if C0 > 0 else 1.0
    C1 = cfg.c1_over_c0 * C0
    if eps > 0 and C1 * eps > 1.0:
        raise ConfigError(f"bootstrap needs C1 * epsilon <= 1; measured C0 = {C0:.4g} gives {C1 * eps:.3g}")
    params = dg.BootstrapParams(C0, C1, eps, cfg.delta)
    boot = dg.bootstrap_check(traj, params, cfg.max_order)
    dg.write_bootstrap_csv(os.path.join(out_dir, "bootstrap.csv"), boot)
    worst = max((r[3] / r[4] for r in boot.rows if r[4] > 0), default=0.0)
    checks.append(Check("bootstrap", f"E^(1/2) <= C1 eps s^delta at orders <= {cfg.max_order} "
                        f"(C0 = {C0:.4g}, C1 = {C1:.4g}, delta = {cfg.delta:g})",
                        worst, "<= 1", boot.passed))

    lo, hi = cfg.decay_window
    fit_s = [s for s in cfg.s_list if lo - 1e-12 <= s <= hi + 1e-12]
    src = dg.source_l2_report(traj, coeffs)
    dg.write_source_csv(os.path.join(out_dir, "sources.csv"), src)
    kat = dg.katayama_report(traj, cfg.delta)
    dg.write_katayama_csv(os.path.join(out_dir, "katayama.csv"), kat)
    extra = {"C0": C0, "C1": C1, "t_end": traj.t_end, "grid": asdict(traj.grid), "backend": traj.backend}
    if eps > 0 and len(fit_s) >= 4:
        dec = dg.decay_report(traj, lo, hi)
        dg.write_decay_csv(os.path.join(out_dir, "decay.csv"), dec)
        src_w = dg.source_l2_report(traj, coeffs, fit_s)
        exp = lambda f: None if f is None else f.exponent  # noqa: E731
        checks.append(_window("decay dt u", "fitted exponent of sup_Hs |d_t u| (wave gradient decay s^-1)",
                              exp(dec.dtu_fit), -1.3, -0.7))
        checks.append(_at_most("decay v", "fitted exponent of sup_Hs |v| t/s (Klein-Gordon decay (s/t) s^-1)",
                               exp(dec.v_fit), -0.7))
        checks.append(_window("source f", "fitted exponent of ||f||_L2(Hs) (source bound s^(-1+delta))",
                              exp(src_w.f_fit), -1.4, -0.7))
        checks.append(_at_most("source P du du", "fitted exponent of ||P du du||_L2(Hs) (source bound s^(-1+delta))",
                               exp(src_w.p_fit), -0.7))
        extra["exponents"] = {"dtu": exp(dec.dtu_fit), "v": exp(dec.v_fit), "f": exp(src_w.f_fit),
                              "Pdudu": exp(src_w.p_fit)}
    else:
        # zero data: every report is identically zero and there is nothing to fit
        zero = all(v == 0.0 for d in traj.metrics.values() for v in d.values())
        checks.append(Check("zero solution", "all recorded metrics vanish for zero data", None,
                            "== 0", bool(zero) if eps == 0 else True))
    return finish("evolve", cfg, out_dir, checks, t0, extra, strict=strict, stream=stream)


# ---------------------------------------------------------------- Kirchhoff suite

def random_disc_configs(rng, n, t_range=(3.0, 60.0)):
    """(lambda, t, r) with a nonempty intersection D0 n D1, away from degenerate slivers."""
    out = []
    while len(out) < n:
        t = rng.uniform(*t_range)
        r = rng.uniform(0.0, t - 1.05)
        lam = rng.uniform(1.0 / t, 1.0)
        g = kh.disc_geometry(lam, t, r)
        if g.empty or g.R0 < 1e-3 or g.R1 < 1e-3 or g.rho1 - g.rho0 < 1e-3:
            continue
        out.append((lam, t, r))
    return out


def geometric_case(lam, t, r):
    """Case label from disc containment, independent of the threshold formulas."""
    R0, R1, d = 1.0 - lam, lam - 1.0 / t, r / t
    if d + R1 < R0:
        contain = "I"
    elif d + R0 <= R1:
        contain = "III"
    else:
        contain = "II"
    return contain + ("B" if d <= R1 else "A")


def lambda_minus_bisection(t, r):
    """Smaller root of (lambda - 1/t)^2 + (1 - lambda)^2 - (r/t)^2 by plain bisection."""
    from scipy import optimize

    d = r / t
    g = lambda lam: (lam - 1.0 / t) ** 2 + (1.0 - lam) ** 2 - d * d  # noqa: E731
    return float(optimize.bisect(g, 1.0 / t, 0.5 * (1.0 + 1.0 / t), xtol=1e-18, rtol=1e-15, maxiter=500))


def cmd_verify_kirchhoff(cfg: RunConfig, out_dir, stream=None):
    t0 = time.time()
    k = cfg.kirchhoff
    os.makedirs(out_dir, exist_ok=True)
    s_cfg, s_case, mc_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    cfg_rng, case_rng = np.random.default_rng(s_cfg), np.random.default_rng(s_case)
    checks = []

    # case table against disc containment
    bad = 0
    rows = []
    for _ in range(k.n_case_samples):
        t = case_rng.uniform(2.5, 200.0)
        r = case_rng.uniform(0.0, t - 1.0)
        lam = case_rng.uniform(2.0 / t, 1.0)
        if min(abs(lam - a) for a in kh.thresholds(t, r)) < 1e-9:
            continue
        got, want = kh.classify_case(lam, t, r), geometric_case(lam, t, r)
        bad += got != want
    checks.append(Check("case table", "threshold classification agrees with disc containment",
                        float(bad), "== 0 mismatches", bad == 0))

    # I(lambda) against the Monte-Carlo oracle
    worst = 0.0
    for i, (lam, t, r) in enumerate(random_disc_configs(cfg_rng, k.n_configs)):
        val = kh.I_lambda(lam, t, r)
        rng = np.random.default_rng(mc_seq.spawn(1)[0])
        mc, err = kh.I_lambda_monte_carlo(lam, t, r, n=k.mc_samples, rng=rng, target_rel=k.mc_target_rel,
                                          max_n=k.mc_max_samples)
        rel = abs(val - mc) / abs(mc) if mc else float("inf")
        worst = max(worst, rel)
        rows.append([i, lam, t, r, kh.classify_case(lam, t, r), val, mc, err, rel])
    write_rows(os.path.join(out_dir, "kirchhoff_mc.csv"),
               ["k", "lambda", "t", "r", "case", "I", "I_mc", "mc_stderr", "rel_err"], rows)
    if k.n_configs:
        checks.append(_at_most("I(lambda) vs Monte-Carlo", f"relative error on {k.n_configs} random configurations",
                               worst, k.mc_rtol))

    # case IIIB closed form 2 pi (1 - lambda)
    worst = 0.0
    for _ in range(k.n_closed_form):
        t = cfg_rng.uniform(2.5, 200.0)
        r = cfg_rng.uniform(0.0, t - 1.0)
        lo = max(kh.thresholds(t, r)[1:])
        lam = cfg_rng.uniform(lo, 1.0)
        if kh.classify_case(lam, t, r) != "IIIB" or lam >= 1.0:
            continue
        worst = max(worst, abs(kh.I_lambda(lam, t, r) / kh.I_full_disc(lam) - 1.0))
    checks.append(_at_most("IIIB closed form", "I(lambda) = 2 pi (1 - lambda) when D0 lies inside D1",
                           worst, k.closed_form_tol))

    # lambda_minus against bisection
    worst = 0.0
    for _ in range(200):
        t = cfg_rng.uniform(2.5, 2000.0)
        r = cfg_rng.uniform(0.0, t - 1.0)
        try:
            lm = kh.lambda_minus(t, r)
        except HyperlabError:
            continue
        worst = max(worst, abs(lm - lambda_minus_bisection(t, r)) / lm)
    checks.append(_at_most("lambda_minus", "closed form agrees with bisection (relative)", worst,
                           k.lambda_minus_tol))

    # J scaling
    res = kh.J_sweep(k.sweep_t, k.sweep_q)
    kh.write_sweep_csv(os.path.join(out_dir, "j_sweep.csv"), res)
    slope, ratio = kh.scaling_fit(res)
    checks.append(_window("J scaling slope", f"slope of log J vs log((t-r)/t) at t = {k.sweep_t:g}",
                          slope, k.slope - k.slope_tol, k.slope + k.slope_tol))
    med = float(np.median(ratio))
    spread = float(max(np.max(ratio) / med, med / np.min(ratio))) if med > 0 and np.min(ratio) > 0 else float("inf")
    checks.append(_at_most("J / sqrt((t-r)/t)", "max ratio to the median", spread, k.ratio_factor))

    # alpha inequality
    a = np.linspace(0.0, k.alpha_max, k.alpha_points)
    gap = float(np.min(kh.alpha_gap(a)))
    checks.append(_at_least("alpha inequality", f"min of 2 sqrt(1 - cos a) - a on [0, {k.alpha_max:g}]", gap, -1e-15))
    root = kh.alpha_inequality_root()
    checks.append(_window("alpha0", "root of a = 2 sqrt(1 - cos a) by bisection", root, *k.alpha_window))
    return finish("verify-kirchhoff", cfg, out_dir, checks, t0, {"J_slope": slope, "alpha0": root}, stream=stream)


# ---------------------------------------------------------------- characteristic suite

def sample_cone_points(rng, n, t_range=(2.5, 40.0)):
    """(t, x1, x2) uniformly in t, r in [0, t - 1) and angle, inside K_[2, inf)."""
    pts = []
    while len(pts) < n:
        t = rng.uniform(*t_range)
        r = rng.uniform(0.0, t - 1.0)
        if t * t - r * r <= 4.0:
            continue
        th = rng.uniform(0.0, 2.0 * math.pi)
        pts.append((t, r * math.cos(th), r * math.sin(th)))
    return pts


def read_curve_file(path):
    """Start points (t, x1, x2) from a CSV file with that header; raises ConfigError if malformed."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"characteristics.curves_file: {exc}") from None
    if not rows or [c.strip() for c in rows[0]] != ["t", "x1", "x2"]:
        raise ConfigError(f"characteristics.curves_file {path!r}: header must be 't,x1,x2'")
    pts = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            t, x1, x2 = (float(v) for v in row)
        except ValueError:
            raise ConfigError(f"characteristics.curves_file {path!r} line {i}: expected three numbers") from None
        r = math.hypot(x1, x2)
        if not (t - r > 1.0 and t * t - r * r > 4.0):
            raise ConfigError(f"characteristics.curves_file {path!r} line {i}: point outside K_[2, inf)")
        pts.append((t, x1, x2))
    return pts


def cmd_verify_characteristics(cfg: RunConfig, out_dir, stream=None):
    t0 = time.time()
    c = cfg.characteristics
    starts = read_curve_file(c.curves_file) if c.curves_file else None
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])
    checks = []
    n = len(starts) if starts is not None else c.n_curves

    fwd = starts if starts is not None else sample_cone_points(rng, n, (2.5, c.t_max - c.forward_span))
    worst_ds = math.inf
    for (t, x1, x2) in fwd:
        cur = ch.integrate_curve(t, (x1, x2), ch.FORWARD, dt=c.dt, t_stop=t + c.forward_span)
        worst_ds = min(worst_ds, float(np.min(np.diff(cur.s))))
    checks.append(Check("forward monotonicity", f"s strictly increasing along {len(fwd)} forward curves",
                        None if not fwd else worst_ds, "> 0", (not fwd) or worst_ds > 0))

    bwd = starts if starts is not None else sample_cone_points(rng, n, (2.5, c.t_max))
    rows = []
    worst, bad = 0.0, 0
    for (t, x1, x2) in bwd:
        cur = ch.integrate_curve(t, (x1, x2), ch.BACKWARD, dt=c.dt)
        res = cur.exit_residual()
        bad += cur.exit not in (ch.CONE, ch.INITIAL)
        worst = max(worst, res)
        te, re = cur.end
        rows.append([t, x1, x2, cur.exit, te, re, res])
    write_rows(os.path.join(out_dir, "curves.csv"), ["t0", "x1", "x2", "exit", "t_exit", "r_exit", "residual"], rows)
    checks.append(Check("backward exit", f"{len(bwd)} backward curves end on t = r + 1 or s = 2 (dichotomy)",
                        worst if bwd else None, f"<= {c.exit_tol:g}", bad == 0 and worst <= c.exit_tol))

    pts = np.array(sample_cone_points(rng, c.n_samples, (2.0 + 1e-9, c.t_max)) or np.zeros((0, 3)))
    if len(pts):
        t, r = pts[:, 0], np.hypot(pts[:, 1], pts[:, 2])
        ratio = float(np.min(ch.potential_value(t, r) * t * t / (t - r)))
    else:
        ratio = 1.0
    checks.append(_at_least("potential lower bound", "P t^2 / (t - r) on sampled points of K", ratio, 1.0))

    # transport oracle: y' + (2/t) y = 1 has y = t/3 + (y0 t0^2 - t0^3/3)/t^2
    tt = np.linspace(2.0, 40.0, 40001)
    y = ch.solve_transport(ch.TransportProblem(tt, 2.0 / tt, 1.0, 1.0))
    exact = tt / 3.0 + (4.0 - 8.0 / 3.0) / tt ** 2
    err = float(np.max(np.abs(y - exact) / np.abs(exact)))
    checks.append(_at_most("transport oracle", "trapezoid variation of constants vs closed form", err, c.transport_tol))
    return finish("verify-characteristics", cfg, out_dir, checks, t0, stream=stream)


# ---------------------------------------------------------------- frame suite

def _polynomial(rng, degree=4):
    """Random polynomial in (t, x1, x2) of total degree <= ``degree`` as a vectorized callable."""
    exps = [(a, b, c) for a in range(degree + 1) for b in range(degree + 1 - a) for c in range(degree + 1 - a - b)]
    coef = rng.normal(size=len(exps))

    def f(t, x1, x2):
        return sum(cf * t ** a * x1 ** b * x2 ** c for cf, (a, b, c) in zip(coef, exps))
    return f


def cmd_verify_frame(cfg: RunConfig, out_dir, stream=None):
    t0 = time.time()
    fc = cfg.frame
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[3])
    checks = []
    pts = np.array(sample_cone_points(rng, fc.n_points, (2.0 + 1e-9, 100.0)) or np.zeros((0, 3)))
    t, x1, x2 = (pts[:, i] for i in range(3)) if len(pts) else (np.zeros(0),) * 3
    if len(pts):
        prod = fr.transition_arrays(t, x1, x2, "Phi") @ fr.transition_arrays(t, x1, x2, "Psi")
        inv = float(np.max(np.abs(prod - np.eye(3))))
        res = 0.0
        for a in (1, 2):
            db = np.stack(fr.field_coefficients(f"db{a}", t, x1, x2))
            L = np.stack(fr.field_coefficients(f"L{a}", t, x1, x2)) / t
            res = max(res, float(np.max(np.abs(db - L))))
        ratios = np.array([fr.null00_bound_ratio(cfg.P, fr.SpacetimePoint(*p)) for p in pts[:2000]])
    else:
        inv = res = 0.0
        ratios = np.ones(1)
    checks.append(_at_most("Phi Psi = I", f"max entry of Phi Psi - I over {len(pts)} points of K", inv, fc.tol))
    checks.append(_at_most("db_a = L_a / t", "max coefficient difference", res, fc.tol))
    if np.allclose(cfg.P.coeffs, QuadraticForm.minkowski().coeffs):
        checks.append(_at_most("null form P00", "|Pb00 / (s/t)^2 - 1| for P = m", float(np.max(np.abs(ratios - 1.0))),
                               fc.null_ratio_tol))
    else:
        checks.append(Check("null form P00", "Pb00 / (s/t)^2 bounded on sampled points", float(np.max(ratios)),
                            "finite", bool(np.all(np.isfinite(ratios)))))

    worst = 0.0
    rows = []
    fields = ("dt", "d1", "d2", "L1", "L2")
    for i in range(fc.n_polynomials):
        f = _polynomial(rng)
        p = fr.SpacetimePoint(*sample_cone_points(rng, 1, (3.0, 10.0))[0])
        scale = 1.0 + abs(float(f(p.t, p.x1, p.x2)))
        for a in range(len(fields)):
            for b in range(a + 1, len(fields)):
                r = abs(fr.commutator_residual(fields[a], fields[b], f, p)) / scale
                worst = max(worst, r)
                rows.append([i, fields[a], fields[b], r])
    write_rows(os.path.join(out_dir, "commutators.csv"), ["poly", "V1", "V2", "relative_residual"], rows)
    checks.append(_at_most("commutators", "[V1, V2] f residual on degree-4 polynomials (relative)", worst,
                           fc.commutator_tol))
    return finish("verify-frame", cfg, out_dir, checks, t0, stream=stream)


# ---------------------------------------------------------------- report

def cmd_report(out_root, stream=None):
    """Collect every summary.json under ``out_root`` into report.csv and print a table."""
    rows = []
    if os.path.isdir(out_root):
        for name in sorted(os.listdir(out_root)):
            path = os.path.join(out_root, name, "summary.json")
            if not os.path.isfile(path):
                continue
            with open(path) as fh:
                try:
                    s = json.load(fh)
                except json.JSONDecodeError:
                    raise ConfigError(f"report: {path} is not valid JSON") from None
            for c in s.get("checks", []):
                rows.append([name, s.get("command", ""), c["name"], c["value"], c["tolerance"], int(c["passed"])])
    os.makedirs(out_root, exist_ok=True)
    write_rows(os.path.join(out_root, "report.csv"), ["run_id", "command", "check", "value", "required", "passed"], rows)
    for r in rows:
        val = "n/a" if r[3] is None else f"{r[3]:.6g}"
        print(f"{'PASS' if r[5] else 'FAIL'}  {r[0]:<40} {r[2]:<28} {val:>14}  {r[4]}", file=stream)
    print(f"{len(rows)} checks from {len({r[0] for r in rows})} runs -> {os.path.join(out_root, 'report.csv')}",
          file=stream)
    return EXIT_OK if all(r[5] for r in rows) else EXIT_TOLERANCE


# ---------------------------------------------------------------- entry point

COMMANDS = ("evolve", "verify-kirchhoff", "verify-characteristics", "verify-frame", "report")


def build_parser():
    p = argparse.ArgumentParser(prog="hyperlab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="INI configuration file (defaults are used when omitted)")
    p.add_argument("--out", metavar="DIR", default="out", help="output root; runs go to DIR/<run-id>/")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="threads for the compiled kernels")
    p.add_argument("--seed", type=int, default=None, metavar="U64", help="overrides seeds.seed")
    p.add_argument("--strict", action="store_true", help="evolve: exit 3 when a diagnostic check fails")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.out)
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = os.path.join(args.out, run_id(args.command, cfg))
        if args.command == "evolve":
            return cmd_evolve(cfg, out_dir, threads=args.threads, strict=args.strict)
        if args.command == "verify-kirchhoff":
            return cmd_verify_kirchhoff(cfg, out_dir)
        if args.command == "verify-characteristics":
            return cmd_verify_characteristics(cfg, out_dir)
        return cmd_verify_frame(cfg, out_dir)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"numerical instability: {exc} (instability detector: sup norm > 1e6 * epsilon)", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
