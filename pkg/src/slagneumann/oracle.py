"""Radial reference solutions on balls.

For ``u(x) = U(|x|)`` the Hessian eigenvalues are ``U''`` (once) and
``U'/r`` (``n-1`` times), so with ``psi = U'`` the equation becomes the
first-order ODE

    psi' = f(r) * tan(Theta - (n-1) * arctan(psi / (r f(r)))),

regular at ``r = 0`` where ``psi ~ c0 r`` with ``n*arctan(c0/f(0)) = Theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import BranchExit, DomainMismatch, NonpositiveF
from .specops import phase_classify

BRANCH_MARGIN = 1e-6
N_STEPS = 10_000


@dataclass
class RadialProblem:
    n: int
    theta: float
    R: float = 1.0
    f_r: Callable = lambda r: np.ones_like(np.asarray(r, dtype=float))
    bc_mode: str = "classical"  # or "robin"
    phi_R: float = 0.0
    steps: int = N_STEPS

    def __post_init__(self):
        if not phase_classify(self.theta, self.n).admissible:
            raise ValueError(f"phase {self.theta} is not admissible for n = {self.n}")
        if self.bc_mode not in ("classical", "robin"):
            raise ValueError("bc_mode must be 'classical' or 'robin'")


@dataclass
class RadialSolution:
    r: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    u: np.ndarray
    lam: float | None
    branch_ok: bool
    residual: float  # max ODE residual at interval midpoints
    problem: RadialProblem

    def __call__(self, r):
        """``u`` at radii ``r`` (cubic Hermite in ``r``, using ``u' = psi``)."""
        return CubicHermiteSpline(self.r, self.u, self.psi)(np.asarray(r, dtype=float))

    def eigenvalues(self, r):
        """Radial eigenvalue ``psi'`` and tangential ``psi/r`` at ``r > 0``."""
        spl = CubicHermiteSpline(self.r, self.psi, self.dpsi)
        r = np.asarray(r, dtype=float)
        return spl(r, 1), spl(r) / r


def _rhs(p: RadialProblem, f0, c0):
    def F(r, psi):
        if r == 0.0:
            return c0, p.theta / p.n
        f = float(p.f_r(r))
        arg = p.theta - (p.n - 1) * math.atan(psi / (r * f))
        return f * math.tan(arg), arg
    return F


def radial_solve(p: RadialProblem) -> RadialSolution:
    """Integrate from the centre with classical fourth-order Runge-Kutta.

    Raises
    ------
    BranchExit
        If the tangent argument leaves ``(-pi/2, pi/2)`` by less than the
        guard margin.
    NonpositiveF
        If ``f`` is not positive on ``[0, R]``.
    """
    r = np.linspace(0.0, p.R, p.steps + 1)
    fr = np.asarray(p.f_r(r), dtype=float) * np.ones_like(r)
    if np.any(~(fr > 0)):
        raise NonpositiveF("f must be positive on [0, R]")
    f0 = float(fr[0])
    c0 = f0 * math.tan(p.theta / p.n)
    F = _rhs(p, f0, c0)
    lim = math.pi / 2 - BRANCH_MARGIN
    h = r[1] - r[0]
    psi = np.zeros_like(r)
    dpsi = np.zeros_like(r)
    dpsi[0] = c0

    def stage(rr, y):
        val, arg = F(rr, y)
        if not -lim < arg < lim:
            raise BranchExit(f"tan argument {arg:.6g} left the branch at r = {rr:.6g}")
        return val

    for k in range(p.steps):
        rk, y = r[k], psi[k]
        k1 = dpsi[k]
        k2 = stage(rk + h / 2, y + h / 2 * k1)
        k3 = stage(rk + h / 2, y + h / 2 * k2)
        k4 = stage(rk + h, y + h * k3)
        psi[k + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        dpsi[k + 1] = stage(r[k + 1], psi[k + 1])

    # midpoint residual of the cubic Hermite interpolant of psi
    rm = 0.5 * (r[1:] + r[:-1])
    psi_m = 0.5 * (psi[1:] + psi[:-1]) + h / 8 * (dpsi[:-1] - dpsi[1:])
    dpsi_m = 1.5 / h * (psi[1:] - psi[:-1]) - 0.25 * (dpsi[:-1] + dpsi[1:])
    fm = np.asarray(p.f_r(rm), dtype=float) * np.ones_like(rm)
    res = dpsi_m - fm * np.tan(p.theta - (p.n - 1) * np.arctan(psi_m / (rm * fm)))

    # u(r) = u(R) - int_r^R psi, by the fourth-order Hermite rule
    seg = h / 2 * (psi[1:] + psi[:-1]) + h**2 / 12 * (dpsi[:-1] - dpsi[1:])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    if p.bc_mode == "classical":
        lam = float(psi[-1] - p.phi_R)
        uR = 0.0
    else:
        lam = None
        uR = p.phi_R - psi[-1]
    u = uR - tail
    return RadialSolution(r, psi, dpsi, u, lam, True, float(np.abs(res).max()), p)


@dataclass
class CompareReport:
    max_error: float
    l2_error: float
    scale: float  # max |reference| on the compared nodes
    lambda_error: float | None

    @property
    def relative_max_error(self):
        return self.max_error / self.scale if self.scale > 0 else float("nan")

    def as_dict(self):
        return {"max_error": self.max_error, "l2_error": self.l2_error, "scale": self.scale,
                "relative_max_error": self.relative_max_error, "lambda_error": self.lambda_error}


def compare(rs: RadialSolution, u, grid, lam_grid=None, centre=None) -> CompareReport:
    """Errors of a grid field against the radial profile at interior nodes.

    In classical mode (or with ``centre=True``) both sides are mean-centred
    over the compared nodes first.
    """
    body = grid.body
    if body.kind != "ball" or abs(body.radius - rs.problem.R) > 1e-12 or body.dim != rs.problem.n:
        raise DomainMismatch("grid domain is not the oracle's ball")
    u = np.asarray(getattr(u, "values", u), dtype=float)[: grid.n_interior]
    rr = np.linalg.norm(grid.interior_coords, axis=1)
    ref = rs(rr)
    if centre is None:
        centre = rs.problem.bc_mode == "classical"
    if centre:
        ref = ref - ref.mean()
        u = u - u.mean()
    err = u - ref
    lam_err = None if lam_grid is None or rs.lam is None else float(abs(lam_grid - rs.lam))
    return CompareReport(float(np.abs(err).max()), float(np.sqrt(np.mean(err**2))),
                         float(np.abs(ref).max()), lam_err)


def from_spec(spec, bc_mode=None, steps=N_STEPS) -> RadialProblem:
    """Radial problem matching a ball-shaped target with radial data."""
    body = spec.body
    if body.kind != "ball":
        raise DomainMismatch("the oracle needs a ball")
    if not (spec.f.radial and spec.phi.radial):
        raise DomainMismatch("the oracle needs radial f and phi")
    mode = bc_mode or ("classical" if spec.bc.mode == "classical" else "robin")
    if mode == "robin" and spec.bc.coef != 1.0:
        raise DomainMismatch("the oracle supports the robin closure with unit coefficient")
    return RadialProblem(body.dim, spec.theta, body.radius, spec.f.profile, mode,
                         float(spec.phi.profile(body.radius)), steps)
