"""Damped Newton iteration, domain homotopy and the epsilon path.

The continuity path deforms the unit ball with ``f = 1`` and ``phi = 0``
into the target: at parameter ``t`` the domain is ``t*Omega + (1-t)*B_1``,
the coefficient ``t*f + 1 - t`` and the boundary data ``t*phi``.  The
classical Neumann problem (unknown constant ``lambda`` in the boundary
condition) is reached as the limit ``eps -> 0`` of the condition
``u_nu + eps*u = phi``, with ``lambda = lim -eps*u``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import BoundaryCondition, DiscreteProblem, jacobian, residual
from .coefficients import Coefficient, Const
from .errors import (LinearSolveFailed, LineSearchStalled, MaxIterExceeded, NonFiniteField,
                     NotBall, PathDiverged, PhaseGuardViolated, SolverError, StepUnderflow,
                     TooCoarse)
from .geometry import ConvexBody, homotopy_domain
from .grid import Field, Grid, build_grid, gradients, transfer
from .linsolve import LinearSolver
from .specops import PhaseSpec, phase_classify

log = logging.getLogger(__name__)


@dataclass
class NewtonConfig:
    tol_residual: float = 1e-10
    max_iter: int = 50
    backtrack: float = 0.5
    min_step: float = 2.0**-10
    phase_guard: float = math.pi / 2
    armijo: float = 1e-4

    def __post_init__(self):
        if not (self.tol_residual > 0 and self.max_iter > 0 and 0 < self.backtrack < 1
                and 0 < self.min_step <= 1 and self.phase_guard > 0):
            raise ValueError("Newton tolerances must be positive")


@dataclass
class HomotopySchedule:
    step: float = 0.1
    min_step: float = 1.0 / 256
    max_step: float = 0.1


@dataclass
class EpsilonPath:
    eps_values: tuple = tuple(2.0**-k for k in range(11))

    def __post_init__(self):
        e = np.asarray(self.eps_values, dtype=float)
        if e.size < 3 or np.any(e <= 0) or np.any(np.diff(e) >= 0):
            raise ValueError("eps_values must be a decreasing positive sequence of length >= 3")


@dataclass
class NewtonReport:
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)  # max-norm, one per iterate
    steps: list = field(default_factory=list)  # accepted damping factors
    max_bc: float = float("nan")

    def tail_ratios(self, window=1e-2, floor=1e-11):
        """``r_{k+1} / r_k^2`` over iterates with ``r_k < window``.

        Pairs whose second residual is below ``floor`` (round-off level)
        are skipped.
        """
        r = self.residuals
        return [r[k + 1] / r[k] ** 2 for k in range(len(r) - 1)
                if 0 < r[k] < window and r[k + 1] > floor]

    def as_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "residuals": list(self.residuals), "steps": list(self.steps)}


def newton_solve(p: DiscreteProblem, w0, cfg: NewtonConfig | None = None,
                 linsolver: LinearSolver | None = None):
    """Damped Newton on the discrete system; returns ``(w, report)``.

    The merit function is the Euclidean norm of the residual; a damped step
    is accepted when it passes the Armijo test (or already meets the
    tolerance) and keeps ``|F - Theta| < phase_guard`` at every node.
    """
    cfg = cfg or NewtonConfig()
    linsolver = linsolver or LinearSolver()
    rep = NewtonReport()
    w = np.array(getattr(w0, "values", w0), dtype=float)
    coords = p.grid.nodes
    m = p.grid.n_interior
    rj = jacobian(p, w)
    while True:
        rmax = float(np.abs(rj.residual).max())
        rep.residuals.append(rmax)
        rep.max_bc = rj.max_bc
        if rmax <= cfg.tol_residual:
            rep.converged = True
            return w, rep
        if rep.iterations >= cfg.max_iter:
            err = MaxIterExceeded(f"no convergence in {cfg.max_iter} iterations (residual {rmax:.3e})")
            err.report = rep
            raise err
        delta = linsolver.solve(rj.jacobian, -rj.residual, coords=coords)
        if not np.all(np.isfinite(delta)):
            raise LinearSolveFailed("Newton direction is not finite")
        merit = float(rj.residual @ rj.residual)
        alpha, guard_hit = 1.0, False
        while True:
            trial = w + alpha * delta
            try:
                rt = residual(p, trial)
            except NonFiniteField:
                rt = None
            if rt is not None:
                if np.abs(rt.residual[:m]).max() >= cfg.phase_guard:
                    guard_hit = True
                else:
                    mt = float(rt.residual @ rt.residual)
                    if (mt <= (1 - 2 * cfg.armijo * alpha) * merit
                            or np.abs(rt.residual).max() <= cfg.tol_residual):
                        break
            alpha *= cfg.backtrack
            if alpha < cfg.min_step:
                cls = PhaseGuardViolated if guard_hit else LineSearchStalled
                err = cls(f"no acceptable step at iteration {rep.iterations} (residual {rmax:.3e})")
                err.report = rep
                raise err
        w = trial
        rep.iterations += 1
        rep.steps.append(alpha)
        rj = jacobian(p, w)


# --------------------------------------------------------------------------
# problem descriptors and drivers


@dataclass
class ProblemSpec:
    """Target problem: domain, phase, coefficients, closure and grid spacing."""

    body: ConvexBody
    theta: float
    f: Coefficient = field(default_factory=lambda: Const(1.0))
    phi: Coefficient = field(default_factory=lambda: Const(0.0))
    bc: BoundaryCondition = field(default_factory=BoundaryCondition.robin)
    h: float = 1.0 / 32

    @property
    def phase(self) -> PhaseSpec:
        return phase_classify(self.theta, self.body.dim)


def _is_unit_ball(body):
    return body.kind == "ball" and abs(body.radius - 1.0) <= 1e-14


def initial_guess_ball(grid: Grid, phase: PhaseSpec, bc: BoundaryCondition, phi0=0.0):
    """Radial solution ``c|x|^2/2 + k`` on the unit ball with ``f = 1``.

    ``c = tan(Theta/n)``; the constant ``k`` makes the closure hold for
    constant boundary data ``phi0``.
    """
    if not _is_unit_ball(grid.body):
        raise NotBall("initial guess needs the unit ball")
    c = math.tan(phase.theta / phase.n)
    if bc.mode == "classical":
        k = 0.0
    else:
        k = (phi0 - c) / bc.coef - c / 2
    return c * 0.5 * np.sum(grid.coords**2, axis=1) + k


def smooth_perturbation(coords, amplitude, seed, modes=3):
    """Random smooth field: low-frequency trigonometric modes, max-norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    n = coords.shape[1]
    out = np.zeros(coords.shape[0])
    for _ in range(modes * n):
        k = rng.normal(size=n) * 2.0
        out += rng.normal() * np.cos(coords @ k + rng.uniform(0, 2 * np.pi))
    scale = np.abs(out).max()
    return amplitude * out / scale if scale > 0 else out


@dataclass
class Solution:
    """A converged discrete solution ``u = problem.shift + w``."""

    problem: DiscreteProblem
    w: np.ndarray

    @property
    def grid(self):
        return self.problem.grid

    @property
    def u(self):
        return self.problem.field(self.w)

    def field(self):
        return Field(self.grid, self.u)


@dataclass
class HomotopyReport:
    steps: list = field(default_factory=list)
    halvings: int = 0
    newton_iterations: int = 0
    factorizations: int = 0

    def as_dict(self):
        return {"steps": self.steps, "halvings": self.halvings,
                "newton_iterations": self.newton_iterations,
                "factorizations": self.factorizations}


def _problem_at(target: ProblemSpec, t, bc, grid_cache):
    body_t = homotopy_domain(target.body, t)
    key = repr(body_t.describe())
    if grid_cache.get("key") != key:
        grid_cache["grid"] = build_grid(body_t, target.h)
        grid_cache["key"] = key
    grid = grid_cache["grid"]
    f_t = target.f.scaled(t, 1.0 - t)
    phi_t = target.phi.scaled(t)
    return grid, f_t, phi_t


def homotopy_solve(target: ProblemSpec, sched: HomotopySchedule | None = None,
                   cfg: NewtonConfig | None = None, bc: BoundaryCondition | None = None,
                   perturb: tuple | None = None, linsolver: LinearSolver | None = None):
    """Continuation from the unit ball to ``target``.

    Parameters
    ----------
    bc : BoundaryCondition, optional
        Closure used along the path; defaults to ``target.bc`` (robin or
        epsilon).
    perturb : (amplitude, seed), optional
        Smooth random perturbation added to the initial guess.

    Returns
    -------
    (Solution, HomotopyReport)
    """
    sched = sched or HomotopySchedule()
    cfg = cfg or NewtonConfig()
    bc = bc or target.bc
    if bc.mode == "classical":
        raise ValueError("the homotopy runs with a robin or epsilon closure")
    phase = target.phase
    if not phase.admissible:
        raise SolverError(f"phase {target.theta} is not admissible for n = {target.body.dim}")
    linsolver = linsolver or LinearSolver()
    rep = HomotopyReport()
    cache = {}

    grid, f_t, phi_t = _problem_at(target, 0.0, bc, cache)
    w0 = initial_guess_ball(grid, phase, bc)
    if perturb is not None:
        w0 = w0 + smooth_perturbation(grid.coords, *perturb)
    shift = float(np.mean(w0))
    p = DiscreteProblem(grid, f_t, phase, bc, phi_t, shift)
    w, nrep = newton_solve(p, w0 - shift, cfg, linsolver)
    rep.steps.append({"t": 0.0, "accepted": True, "newton": nrep.as_dict()})
    rep.newton_iterations += nrep.iterations

    t, step = 0.0, sched.step
    while t < 1.0:
        t_new = min(1.0, t + step)
        try:
            grid_new, f_new, phi_new = _problem_at(target, t_new, bc, cache)
            w_start = w if grid_new is p.grid else transfer(p.grid, w, grid_new)
            p_new = DiscreteProblem(grid_new, f_new, phase, bc, phi_new, p.shift)
            w_new, nrep = newton_solve(p_new, w_start, cfg, linsolver)
        except (SolverError, TooCoarse) as exc:
            rep.steps.append({"t": t_new, "accepted": False, "error": type(exc).__name__})
            rep.halvings += 1
            step *= 0.5
            log.info("homotopy step to t=%.6g failed (%s); step -> %.6g", t_new, exc, step)
            if step < sched.min_step:
                raise StepUnderflow(f"homotopy step fell below {sched.min_step} at t = {t}") from exc
            continue
        rep.steps.append({"t": t_new, "accepted": True, "newton": nrep.as_dict()})
        rep.newton_iterations += nrep.iterations
        t, p, w = t_new, p_new, w_new
        step = min(2 * step, sched.max_step)
    rep.factorizations = linsolver.stats.factorizations
    return Solution(p, w), rep


@dataclass
class EpsilonPathReport:
    eps: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    spreads: list = field(default_factory=list)
    max_grad: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    lambda_extrapolated: float = float("nan")
    homotopy: HomotopyReport | None = None
    snapshots: dict = field(default_factory=dict, repr=False)  # eps -> Solution

    def as_dict(self):
        return {"eps": self.eps, "lambda_eps": self.lambdas, "spread": self.spreads,
                "max_grad": self.max_grad, "newton_iterations": self.newton_iterations,
                "lambda": self.lambda_extrapolated,
                "homotopy": self.homotopy.as_dict() if self.homotopy else None}


def richardson(eps, lam):
    """Value at ``eps = 0`` of the quadratic through the last three points."""
    e = np.asarray(eps[-3:], dtype=float)
    y = np.asarray(lam[-3:], dtype=float)
    total = 0.0
    for k in range(3):
        o = [j for j in range(3) if j != k]
        total += y[k] * (e[o[0]] * e[o[1]]) / ((e[k] - e[o[0]]) * (e[k] - e[o[1]]))
    return float(total)


def classical_solve(target: ProblemSpec, path: EpsilonPath | None = None,
                    cfg: NewtonConfig | None = None, sched: HomotopySchedule | None = None,
                    perturb: tuple | None = None, linsolver: LinearSolver | None = None,
                    keep_eps=()):
    """Solve ``u_nu = lambda + phi`` through the epsilon path.

    Solutions at the path values listed in ``keep_eps`` are kept in
    ``report.snapshots``.

    Returns
    -------
    (Solution, lambda, EpsilonPathReport)
        The solution is recentred so that its interior mean vanishes and
        carries the closure ``classical(lambda)``.
    """
    path = path or EpsilonPath()
    cfg = cfg or NewtonConfig()
    linsolver = linsolver or LinearSolver()
    eps = [float(e) for e in path.eps_values]
    sol, hrep = homotopy_solve(target, sched, cfg, BoundaryCondition.epsilon(eps[0]),
                               perturb=perturb, linsolver=linsolver)
    rep = EpsilonPathReport(homotopy=hrep)
    p, w = sol.problem, sol.w
    m = p.grid.n_interior

    def record(e, p, w, iters):
        mean_w = float(np.mean(w[:m]))
        lam = -e * (p.shift + mean_w)
        rep.eps.append(e)
        rep.lambdas.append(lam)
        rep.spreads.append(e * float(np.abs(w[:m] - mean_w).max()))
        rep.max_grad.append(float(np.linalg.norm(gradients(p.grid, w), axis=1).max()))
        rep.newton_iterations.append(iters)
        if any(abs(e - k) <= 1e-12 * k for k in keep_eps):
            rep.snapshots[e] = Solution(p, w.copy())
        return lam

    lam = record(eps[0], p, w, hrep.steps[-1]["newton"]["iterations"])
    growth = 0
    for e_old, e_new in zip(eps[:-1], eps[1:]):
        # u^eps ~ -lambda/eps + O(1): move the constant, keep the shape
        shift = p.shift - lam * (1.0 / e_new - 1.0 / e_old)
        p = p.with_bc(BoundaryCondition.epsilon(e_new), shift=shift)
        w, nrep = newton_solve(p, w, cfg, linsolver)
        lam = record(e_new, p, w, nrep.iterations)
        if len(rep.lambdas) >= 3:
            d_prev = abs(rep.lambdas[-2] - rep.lambdas[-3])
            d_now = abs(rep.lambdas[-1] - rep.lambdas[-2])
            growth = growth + 1 if d_now > d_prev else 0
            if growth >= 3:
                raise PathDiverged(f"lambda_eps not settling at eps = {e_new:g}")
    lam_star = richardson(rep.eps, rep.lambdas)
    rep.lambda_extrapolated = lam_star
    mean_w = float(np.mean(w[:m]))
    final = DiscreteProblem(p.grid, p.f, p.phase, BoundaryCondition.classical(lam_star), p.phi, 0.0)
    return Solution(final, w - mean_w), lam_star, rep
