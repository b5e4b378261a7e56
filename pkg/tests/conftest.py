import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import fpacs.analysis.sweeps
import fpacs.cli
import fpacs.recon

settings.register_profile("fpacs", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fpacs")

# every solve in the suite is checked for a non-increasing objective
SOLVE_AUDIT = {"runs": 0, "violations": 0}
_solve = fpacs.recon.solve


@functools.wraps(_solve)
def audited_solve(*args, **kwargs):
    result = _solve(*args, **kwargs)
    SOLVE_AUDIT["runs"] += 1
    if np.any(np.diff(result.objective_trace) > 0):
        SOLVE_AUDIT["violations"] += 1
        raise AssertionError("objective_trace increased")
    return result


for module in (fpacs.recon, fpacs.analysis.sweeps, fpacs.cli):
    module.solve = audited_solve

# acceptance lines, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
    ok = SOLVE_AUDIT["violations"] == 0
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'}  7 (whole suite): {SOLVE_AUDIT['runs']} solver runs audited, "
        f"{SOLVE_AUDIT['violations']} with an increasing objective")
