import math

import numpy as np
import pytest

from slagneumann import specops
from slagneumann.errors import BranchExit, DomainMismatch
from slagneumann.geometry import make_domain
from slagneumann.grid import build_grid
from slagneumann.oracle import RadialProblem, compare, from_spec, radial_solve
from slagneumann.solver import ProblemSpec
from slagneumann.assembly import BoundaryCondition
from slagneumann.coefficients import Const, Quadratic

DISK = make_domain({"kind": "ball", "dim": 2})


def test_linear_profile_in_3d():
    rs = radial_solve(RadialProblem(3, 3 * math.pi / 4))
    assert np.allclose(rs.psi, rs.r, atol=1e-12)
    assert rs.lam == pytest.approx(1.0, abs=1e-12)
    assert rs.residual <= 1e-10


def test_closed_form_with_radial_coefficient():
    # psi psi' = r f^2 for n = 2, Theta = pi/2, so psi^2 = (2/3)((1 + r^2/2)^3 - 1)
    rs = radial_solve(RadialProblem(2, math.pi / 2, f_r=lambda r: 1 + 0.5 * np.asarray(r) ** 2))
    exact = np.sqrt(2 / 3 * ((1 + rs.r**2 / 2) ** 3 - 1))
    assert np.abs(rs.psi - exact).max() <= 1e-9
    assert rs.lam == pytest.approx(math.sqrt(2 / 3 * (1.5**3 - 1)), abs=1e-9)
    assert math.sqrt(2 / 3 * (1.5**3 - 1)) == pytest.approx(1.2583057392117916)  # frozen
    assert rs.residual <= 1e-10


def test_robin_profile():
    rs = radial_solve(RadialProblem(2, math.pi / 2, bc_mode="robin", phi_R=1.5))
    assert rs.lam is None
    assert np.allclose(rs.u, 0.5 * rs.r**2, atol=1e-12)
    assert rs(0.5) == pytest.approx(0.125, abs=1e-12)


def test_rk4_order():
    fr = lambda r: 1 + 0.5 * np.asarray(r) ** 2
    exact = math.sqrt(2 / 3 * (1.5**3 - 1))
    errs = [abs(radial_solve(RadialProblem(2, math.pi / 2, f_r=fr, steps=s)).lam - exact)
            for s in (20, 40)]
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.25)


def test_eigenvalues_match_specops():
    rs = radial_solve(RadialProblem(3, 3 * math.pi / 4 + 0.3, f_r=lambda r: 1 + 0.5 * np.asarray(r) ** 2))
    r = np.array([0.3, 0.6, 0.9])
    lr, lt = rs.eigenvalues(r)
    lam = np.stack([lr, lt, lt], axis=1)
    f = 1 + 0.5 * r**2
    F = np.arctan(lam / f[:, None]).sum(axis=1)
    assert np.allclose(F, 3 * math.pi / 4 + 0.3, atol=1e-8)
    sp = specops.Spectrum(lam, np.broadcast_to(np.eye(3), (3, 3, 3)))
    assert np.allclose(specops.theta_value(sp, f), F, atol=1e-12)


def test_compare_self_is_zero():
    rs = radial_solve(RadialProblem(2, math.pi / 2))
    g = build_grid(DISK, 1 / 16)
    rep = compare(rs, rs(np.linalg.norm(g.coords, axis=1)), g, lam_grid=rs.lam)
    assert rep.max_error <= 1e-14 and rep.lambda_error == 0.0


def test_domain_mismatch():
    rs = radial_solve(RadialProblem(2, math.pi / 2))
    g = build_grid(make_domain({"kind": "ellipsoid", "axes": [1.2, 0.8]}), 1 / 16)
    with pytest.raises(DomainMismatch):
        compare(rs, np.zeros(g.n_unknowns), g)
    spec = ProblemSpec(make_domain({"kind": "ellipsoid", "axes": [1.2, 0.8]}), math.pi / 2)
    with pytest.raises(DomainMismatch):
        from_spec(spec)


def test_from_spec():
    spec = ProblemSpec(DISK, math.pi / 2, Quadratic(1.0, 0.5), Const(0.25),
                       BoundaryCondition.classical(0.0))
    rp = from_spec(spec)
    assert rp.bc_mode == "classical" and rp.phi_R == 0.25
    assert rp.f_r(1.0) == pytest.approx(1.5)


def test_branch_exit_on_coarse_steps():
    with pytest.raises(BranchExit):
        radial_solve(RadialProblem(3, 3.0, f_r=lambda r: 1 + 300 * np.asarray(r) ** 2, steps=3))


def test_inadmissible_phase():
    with pytest.raises(ValueError):
        RadialProblem(3, 1.0)
