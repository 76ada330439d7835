"""Discrete residual and Jacobian of the boundary value problem.

Interior rows carry ``sum_i arctan(lambda_i(D^2 u)/f) - Theta``.  Each ghost
row imposes ``u_nu + c*u = rhs`` at the ghost's foot point ``b``.  The
boundary trace is read off the quadratic through the ghost value and the
values at the inward probes ``b - h*nu`` and ``b - 2h*nu``; with the ghost on
the boundary this is the usual one-sided formula
``u_nu = (3u(b) - 4u(p1) + u(p2)) / (2h)``.

Fields are stored relative to a constant ``shift`` (``u = shift + w``) so
that the large offsets met along the epsilon path do not pollute the
second differences with round-off.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import specops
from .coefficients import Coefficient, Const
from .errors import NonFiniteField, NonpositiveF, PhaseViolated
from .grid import Grid, hessians, patch_weights, stencil
from .specops import PhaseSpec


@dataclass(frozen=True)
class BoundaryCondition:
    """``u_nu + coef*u = phi + lam_fixed`` on the boundary."""

    mode: str  # robin | epsilon | classical
    coef: float
    lam_fixed: float = 0.0

    @classmethod
    def robin(cls, c_r=1.0):
        return cls("robin", float(c_r))

    @classmethod
    def epsilon(cls, eps):
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        return cls("epsilon", float(eps))

    @classmethod
    def classical(cls, lam):
        return cls("classical", 0.0, float(lam))

    def describe(self):
        out = {"mode": self.mode, "coef": self.coef}
        if self.mode == "classical":
            out["lambda_fixed"] = self.lam_fixed
        return out


@dataclass
class ResidualJacobian:
    residual: np.ndarray
    jacobian: sp.csr_matrix | None
    max_interior: float
    max_bc: float


def _lagrange_at_zero(s0, h):
    """Value and slope at 0 of the quadratic through nodes ``s0, h, 2h``.

    Returns two ``(m, 3)`` arrays of weights for the node values.
    """
    s = np.stack([s0, np.full_like(s0, h), np.full_like(s0, 2 * h)], axis=1)
    val = np.empty_like(s)
    der = np.empty_like(s)
    for k in range(3):
        o = [j for j in range(3) if j != k]
        a, b = s[:, o[0]], s[:, o[1]]
        den = (s[:, k] - a) * (s[:, k] - b)
        val[:, k] = a * b / den
        der[:, k] = -(a + b) / den
    return val, der


@dataclass
class DiscreteProblem:
    """Grid, coefficient fields, phase and boundary closure.

    ``phi`` and ``f`` are evaluated at interior nodes and foot points once,
    at construction.
    """

    grid: Grid
    f: Coefficient
    phase: PhaseSpec
    bc: BoundaryCondition
    phi: Coefficient = field(default_factory=lambda: Const(0.0))
    shift: float = 0.0

    def __post_init__(self):
        if not self.phase.admissible:
            raise PhaseViolated(f"phase {self.phase.theta} is not admissible for n = {self.phase.n}")
        if self.phase.n != self.grid.dim:
            raise ValueError("phase dimension differs from the grid dimension")
        g = self.grid
        self.f_int = np.asarray(self.f(g.interior_coords), dtype=float)
        foot = g.ghosts.dist.foot
        self.f_foot = np.asarray(self.f(foot), dtype=float)
        if np.any(~(self.f_int > 0)) or np.any(~(self.f_foot > 0)):
            raise NonpositiveF("f must be positive on the closed domain")
        self.phi_foot = np.asarray(self.phi(foot), dtype=float)
        self._build_closure()

    # boundary closure ------------------------------------------------------
    def _build_closure(self):
        g = self.grid
        m, N, n = g.n_ghost, g.n_unknowns, g.dim
        P1 = patch_weights(g, g.ghosts.probes[0])
        P2 = patch_weights(g, g.ghosts.probes[1])
        val, der = _lagrange_at_zero(g.ghosts.depth, g.h)
        own = sp.csr_matrix((np.ones(m), (np.arange(m), g.n_interior + np.arange(m))), shape=(m, N))
        # value and outward derivative at the foot as linear maps of the field
        self.B_val = (sp.diags(val[:, 0]) @ own + sp.diags(val[:, 1]) @ P1
                      + sp.diags(val[:, 2]) @ P2).tocsr()
        self.B_der = (-(sp.diags(der[:, 0]) @ own + sp.diags(der[:, 1]) @ P1
                        + sp.diags(der[:, 2]) @ P2)).tocsr()
        self.B = (self.B_der + self.bc.coef * self.B_val).tocsr()
        self.rhs = self.phi_foot + self.bc.lam_fixed

    def with_bc(self, bc: BoundaryCondition, shift=None):
        """Same grid and data with another boundary closure."""
        return DiscreteProblem(self.grid, self.f, self.phase, bc, self.phi,
                               self.shift if shift is None else shift)

    def boundary_trace(self, w):
        """``(u(b), u_nu(b))`` at every foot point."""
        w = _values(self, w)
        return self.B_val @ w + self.shift, self.B_der @ w

    def field(self, w):
        """Absolute field values ``shift + w``."""
        return self.shift + _values(self, w)


def _values(p, w):
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.shape != (p.grid.n_unknowns,):
        raise ValueError(f"field has shape {w.shape}, expected ({p.grid.n_unknowns},)")
    if not np.all(np.isfinite(w)):
        raise NonFiniteField("field contains NaN or Inf")
    return w


def _interior(p, w):
    H = hessians(p.grid, w)
    spec = specops.eig_sym(H)
    F = specops.theta_value(spec, p.f_int)
    return spec, F


def residual(p: DiscreteProblem, w) -> ResidualJacobian:
    """Residual at ``u = shift + w``; interior rows first, then ghost rows."""
    w = _values(p, w)
    _, F = _interior(p, w)
    r_int = F - p.phase.theta
    r_bc = p.B @ w + p.bc.coef * p.shift - p.rhs
    R = np.concatenate([r_int, r_bc])
    if not np.all(np.isfinite(R)):
        raise NonFiniteField("residual is not finite")
    return ResidualJacobian(R, None, _maxabs(r_int), _maxabs(r_bc))


def _maxabs(a):
    return float(np.abs(a).max()) if a.size else 0.0


def _pattern(grid: Grid):
    """Row/column pattern of the interior block, cached on the grid."""
    cached = getattr(grid, "_jac_pattern", None)
    if cached is not None:
        return cached
    st = stencil(grid)
    m = grid.n_interior
    centre = np.arange(m)
    cols = [centre]
    for a in range(grid.dim):
        cols += list(st.axis[a])
    for ab in itertools.combinations(range(grid.dim), 2):
        cols += list(st.cross[ab])
    cols = np.stack(cols, axis=1)
    rows = np.repeat(centre[:, None], cols.shape[1], axis=1)
    grid._jac_pattern = (rows, cols)
    return grid._jac_pattern


def jacobian(p: DiscreteProblem, w) -> ResidualJacobian:
    """Residual and exact Jacobian at ``u = shift + w``."""
    w = _values(p, w)
    spec, F = _interior(p, w)
    G = specops.gradient_ambient(spec, p.f_int)
    g = p.grid
    n, h2 = g.dim, g.h**2
    rows, cols = _pattern(g)
    vals = [-2.0 * np.trace(G, axis1=1, axis2=2) / h2]
    for a in range(n):
        vals += [G[:, a, a] / h2] * 2
    for a, b in itertools.combinations(range(n), 2):
        c = G[:, a, b] / (2.0 * h2)
        vals += [c, -c, -c, c]  # ++, +-, -+, --
    vals = np.stack(vals, axis=1)
    J_int = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                          shape=(g.n_interior, g.n_unknowns))
    J = sp.vstack([J_int, p.B], format="csr")
    r_int = F - p.phase.theta
    r_bc = p.B @ w + p.bc.coef * p.shift - p.rhs
    R = np.concatenate([r_int, r_bc])
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(J.data))):
        raise NonFiniteField("residual or Jacobian is not finite")
    return ResidualJacobian(R, J, _maxabs(r_int), _maxabs(r_bc))


def interior_operator(p: DiscreteProblem, w):
    """Per-node spectrum and ``F`` value, for diagnostics."""
    return _interior(p, _values(p, w))
