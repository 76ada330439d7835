"""Shared solutions for the solver, harness and acceptance tests.

Solves are expensive, so each reference problem is computed once per
session.  Acceptance results are collected and printed as one line per
criterion at the end of the run.
"""
import math
import time

import pytest

from slagneumann.assembly import BoundaryCondition
from slagneumann.coefficients import Const, Quadratic
from slagneumann.geometry import make_domain
from slagneumann.solver import ProblemSpec, classical_solve, homotopy_solve

DISK = make_domain({"kind": "ball", "dim": 2})
BALL3 = make_domain({"kind": "ball", "dim": 3})
ELLIPSE = make_domain({"kind": "ellipsoid", "axes": [1.2, 0.8]})

_ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    """Store an acceptance outcome; the last record per criterion wins."""
    prev = _ACCEPTANCE.get(criterion)
    if prev is not None and not prev[0]:
        passed = False
        detail = f"{prev[1]}; {detail}"
    _ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def problem1_spec(h=1 / 64):
    return ProblemSpec(DISK, math.pi / 2, Const(1.0), Const(1.5), BoundaryCondition.robin(), h)


def problem3_spec(h=1 / 64):
    return ProblemSpec(DISK, math.pi / 2, Quadratic(1.0, 0.5), Const(0.0),
                       BoundaryCondition.classical(0.0), h)


def ellipse_spec(h=1 / 64):
    return ProblemSpec(ELLIPSE, math.pi / 2, Const(1.0), Const(1.5), BoundaryCondition.robin(), h)


@pytest.fixture(scope="session")
def problem1():
    """Manufactured quadratic, perturbed start; ``(solution, report, seconds)``."""
    (sol, rep), dt = _timed(lambda: homotopy_solve(problem1_spec(), perturb=(0.1, 1)))
    return sol, rep, dt


@pytest.fixture(scope="session")
def problem2_disk():
    spec = ProblemSpec(DISK, math.pi / 2, Const(1.0), Const(0.0),
                       BoundaryCondition.classical(0.0), 1 / 64)
    (out, dt) = _timed(lambda: classical_solve(spec))
    return (*out, dt)


@pytest.fixture(scope="session")
def problem2_ball():
    spec = ProblemSpec(BALL3, 3 * math.pi / 4, Const(1.0), Const(0.0),
                       BoundaryCondition.classical(0.0), 1 / 24)
    (out, dt) = _timed(lambda: classical_solve(spec))
    return (*out, dt)


@pytest.fixture(scope="session")
def problem3():
    """``f = 1 + |x|^2/2`` classical problem at h = 1/64 with epsilon snapshots."""
    (out, dt) = _timed(lambda: classical_solve(problem3_spec(), perturb=(0.05, 11),
                                               keep_eps=(0.25, 0.125)))
    return (*out, dt)


@pytest.fixture(scope="session")
def problem3_coarse():
    return classical_solve(problem3_spec(1 / 32))


@pytest.fixture(scope="session")
def ellipse():
    (sol, rep), dt = _timed(lambda: homotopy_solve(ellipse_spec()))
    return sol, rep, dt


@pytest.fixture(scope="session")
def ellipse_coarse():
    return homotopy_solve(ellipse_spec(1 / 32))
