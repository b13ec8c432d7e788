"""Shared fixtures: session-cached canonical runs and the acceptance summary."""
import re
import time

import numpy as np
import pytest

from hyperlab.diagnostics import run_with_diagnostics
from hyperlab.evolution import SystemCoefficients, bump_data

CANONICAL_S = tuple(float(s) for s in np.arange(2.0, 8.0 + 1e-9, 0.5))
CANONICAL_DX = 0.02

_RUNS = {}


def canonical_run(epsilon):
    """Canonical coefficients, default bump data, dx = 0.02, H_s for s = 2, 2.5, ..., 8.

    Returns (trajectory, wall seconds); each epsilon is evolved once per session.
    """
    if epsilon not in _RUNS:
        t0 = time.perf_counter()
        traj = run_with_diagnostics(bump_data(epsilon), SystemCoefficients.canonical(), list(CANONICAL_S),
                                    dx=CANONICAL_DX)
        _RUNS[epsilon] = (traj, time.perf_counter() - t0)
    return _RUNS[epsilon]


@pytest.fixture(scope="session")
def canonical():
    return canonical_run(0.01)


@pytest.fixture(scope="session")
def canonical_double():
    return canonical_run(0.02)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20171209)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running (evolves the canonical system or runs Monte-Carlo)")
    config.addinivalue_line("markers", "acceptance: one of the numbered acceptance criteria")


_CRITERION = re.compile(r"test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for kind in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(kind, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not m or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and rep.passed:
                continue
            detail = dict(rep.user_properties).get("detail", "")
            lines[int(m.group(1))] = ("PASS" if rep.passed else "FAIL", rep.nodeid.split("::")[-1], detail)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        status, name, detail = lines[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {name}  {detail}")
