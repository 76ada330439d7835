"""Diagnostics on discrete solutions and property suites on spectra.

The functionals follow the maximum-principle arguments behind the a priori
estimates: each one is evaluated on grid nodes and the report says where
its extremum sits, in particular whether it lands in the boundary band
(nodes within ``1.5 h`` of the boundary, plus the foot points).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import specops
from .assembly import DiscreteProblem, interior_operator
from .errors import (AdmissibilityExhausted, CollarTooThin, NonPositiveLogArgument, NotASolution,
                     WrongBCMode)
from .geometry import default_mu
from .grid import gradients, hessians, patch_weights, stencil
from .specops import Spectrum, phase_classify

BAND = 1.5  # boundary band width in units of h
SWEEP = (1.0, 10.0, 1e2, 1e3, 1e4)
MIN_COLLAR_LAYERS = 3


# --------------------------------------------------------------------------
# a priori norms


@dataclass
class EstimateReport:
    c0: float
    c1: float
    c1_boundary: float
    dnn: float
    d2: float
    min_laplacian: float
    phase_residual: float

    def as_dict(self):
        return dict(self.__dict__)


def _phi_xu(p: DiscreteProblem, X, u):
    """Boundary data in the form ``u_nu = phi(x, u)`` and its partial ``phi_u``."""
    return p.phi(X) + p.bc.lam_fixed - p.bc.coef * u, -p.bc.coef


def double_normal(p: DiscreteProblem, w):
    """``u_nu_nu`` at every foot point from values at depths 0, h, 2h, 3h."""
    g = p.grid
    ub, _ = p.boundary_trace(w)
    vals = [ub] + [patch_weights(g, g.ghosts.probes[k]) @ w + p.shift for k in range(3)]
    return (2 * vals[0] - 5 * vals[1] + 4 * vals[2] - vals[3]) / g.h**2


def estimate_report(p: DiscreteProblem, w, tol=1e-10, mu=None) -> EstimateReport:
    """Discrete C^0, C^1, boundary and interior second-derivative norms.

    Raises
    ------
    NotASolution
        If the phase residual exceeds ``100*tol``.
    """
    g = p.grid
    w = np.asarray(getattr(w, "values", w), dtype=float)
    spec, F = interior_operator(p, w)
    phase_res = float(np.abs(F - p.phase.theta).max())
    if phase_res > 100 * tol:
        raise NotASolution(f"phase residual {phase_res:.3e} exceeds {100 * tol:.1e}")
    u = p.field(w)[: g.n_interior]
    Du = np.linalg.norm(gradients(g, w), axis=1)
    mu = default_mu(g.body) if mu is None else mu
    collar = g.interior_dist.d <= mu
    lam = spec.lam
    return EstimateReport(
        c0=float(np.abs(u).max()),
        c1=float(Du.max()),
        c1_boundary=float(Du[collar].max()) if collar.any() else float("nan"),
        dnn=float(np.abs(double_normal(p, w)).max()),
        d2=float(np.abs(lam).max()),
        min_laplacian=float(lam.sum(axis=1).min()),
        phase_residual=phase_res,
    )


# --------------------------------------------------------------------------
# functionals


@dataclass
class DiagnosticSpec:
    B0_values: tuple = SWEEP
    B_values: tuple = SWEEP
    a0: float = 10.0
    b: float = 0.1
    mu: float | None = None
    M0: float | None = None
    n_directions: int | None = None

    def directions(self, n):
        k = self.n_directions or (64 if n == 2 else 128)
        if n == 2:
            t = 2 * np.pi * np.arange(k) / k
            return np.stack([np.cos(t), np.sin(t)], axis=1)
        # Fibonacci sphere: deterministic and nearly uniform
        i = np.arange(k) + 0.5
        z = 1 - 2 * i / k
        phi = np.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z**2)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


@dataclass
class Extremum:
    value: float
    location: list
    on_band: bool


@dataclass
class _Nodes:
    """Collar nodes (interior, ``d <= mu``) followed by the foot points."""

    X: np.ndarray
    d: np.ndarray
    u: np.ndarray
    u_nu: np.ndarray
    Du: np.ndarray | None
    band: np.ndarray


def _mu_checked(p, spec):
    mu = spec.mu if spec.mu is not None else default_mu(p.grid.body)
    if mu / p.grid.h < MIN_COLLAR_LAYERS:
        raise CollarTooThin(f"collar width {mu:g} holds fewer than {MIN_COLLAR_LAYERS} node layers")
    return mu


def _extremum(vals, X, band, kind):
    i = int(np.argmin(vals) if kind == "min" else np.argmax(vals))
    return Extremum(float(vals[i]), [float(v) for v in X[i]], bool(band[i]))


def _collar_nodes(p, w, mu):
    g = p.grid
    dist = g.interior_dist
    sel = (dist.d <= mu) & dist.valid
    Du = gradients(g, w)[sel]
    d = dist.d[sel]
    Dh = (-1 + 2 * d)[:, None] * dist.grad_d[sel]
    u_int = p.field(w)[: g.n_interior][sel]
    ub, unu_b = p.boundary_trace(w)
    X = np.concatenate([g.interior_coords[sel], g.ghosts.dist.foot])
    dd = np.concatenate([d, np.zeros(g.n_ghost)])
    return _Nodes(X, dd, np.concatenate([u_int, ub]),
                  np.concatenate([np.sum(Du * Dh, axis=1), unu_b]), Du,
                  dd <= BAND * g.h)


@dataclass
class BarrierReport:
    mu: float
    per_B0: list = field(default_factory=list)
    smallest_B0: float | None = None

    def as_dict(self):
        return {"mu": self.mu, "per_B0": self.per_B0, "smallest_B0": self.smallest_B0}


def barrier_diag(p: DiscreteProblem, w, spec: DiagnosticSpec | None = None) -> BarrierReport:
    """Upper/lower barriers ``(u_nu - phi) -/+ (u_nu - phi)^2/2 -/+ B0*h`` on the collar.

    ``u_nu`` is ``<Du, Dh>`` at collar nodes and the discrete normal
    derivative at foot points; ``phi`` is evaluated along the solution.
    """
    spec = spec or DiagnosticSpec()
    mu = _mu_checked(p, spec)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    nd = _collar_nodes(p, w, mu)
    phi, _ = _phi_xu(p, nd.X, nd.u)
    q = nd.u_nu - phi
    h = -nd.d + nd.d**2
    rep = BarrierReport(mu)
    for B0 in spec.B0_values:
        upper = q - 0.5 * q**2 - B0 * h
        lower = q + 0.5 * q**2 + B0 * h
        lo = _extremum(upper, nd.X, nd.band, "min")
        hi = _extremum(lower, nd.X, nd.band, "max")
        ok = lo.on_band and hi.on_band
        rep.per_B0.append({"B0": B0, "min_upper": lo.__dict__, "max_lower": hi.__dict__, "ok": ok})
        if ok and rep.smallest_B0 is None:
            rep.smallest_B0 = B0
    return rep


def barrier_values(p: DiscreteProblem, w, B0, mu=None):
    """``(X, upper, lower)`` on collar nodes and foot points, for inspection."""
    w = np.asarray(getattr(w, "values", w), dtype=float)
    mu = mu if mu is not None else default_mu(p.grid.body)
    nd = _collar_nodes(p, w, mu)
    phi, _ = _phi_xu(p, nd.X, nd.u)
    q = nd.u_nu - phi
    h = -nd.d + nd.d**2
    return nd.X, q - 0.5 * q**2 - B0 * h, q + 0.5 * q**2 + B0 * h


@dataclass
class LTUReport:
    mu: float
    per_B: list = field(default_factory=list)
    smallest_B: float | None = None
    partial_variant: list = field(default_factory=list)

    def as_dict(self):
        return {"mu": self.mu, "per_B": self.per_B, "smallest_B": self.smallest_B,
                "partial_variant": self.partial_variant}


def _ltu_parts(p, w, mu, total=True):
    """Node data for ``V(x, xi) = u_xixi - v + |Du|^2/2 + B|x|^2/2`` without the ``B`` term."""
    g = p.grid
    dist = g.interior_dist
    X = g.interior_coords
    u = p.field(w)[: g.n_interior]
    H = hessians(g, w)
    Du = gradients(g, w)
    collar = (dist.d <= mu) & dist.valid
    nu = np.zeros_like(X)
    Z = np.zeros_like(X)
    nu[collar] = -dist.grad_d[collar]
    # D nu = -D^2 d, so u_k D nu^k = -D^2 d . Du
    Dphi = p.phi.grad(X[collar])
    if total:
        Dphi = Dphi - p.bc.coef * Du[collar]
    Z[collar] = Dphi - Du[collar] + np.einsum("mij,mj->mi", dist.hess_d[collar], Du[collar])
    return X, u, H, Du, nu, Z, dist.d <= BAND * g.h


def ltu_diag(p: DiscreteProblem, w, spec: DiagnosticSpec | None = None) -> LTUReport:
    """Maximum location of ``V`` per direction, for each ``B`` in the sweep.

    ``v(x, xi) = 2<xi, nu><xi', Dphi - Du - u_k D nu^k>`` with ``nu`` the
    extended normal in the collar and ``v = 0`` outside it.  ``Dphi`` is the
    total derivative along the solution; the partial-derivative variant is
    reported alongside.
    """
    spec = spec or DiagnosticSpec()
    mu = _mu_checked(p, spec)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    xi = spec.directions(p.grid.dim)
    rep = LTUReport(mu)
    for total in (True, False):
        X, u, H, Du, nu, Z, band = _ltu_parts(p, w, mu, total)
        uxx = np.einsum("ka,mab,kb->mk", xi, H, xi)
        xn = nu @ xi.T  # <xi, nu>, (m, k)
        # <xi', Z> = <xi, Z> - <xi, nu><nu, Z>
        xz = Z @ xi.T - xn * np.sum(nu * Z, axis=1)[:, None]
        base = uxx - 2 * xn * xz + 0.5 * np.sum(Du**2, axis=1)[:, None]
        r2 = 0.5 * np.sum(X**2, axis=1)[:, None]
        for B in spec.B_values:
            V = base + B * r2
            idx = np.argmax(V, axis=0)
            on_band = band[idx]
            entry = {"B": B, "all_on_band": bool(on_band.all()),
                     "fraction_on_band": float(on_band.mean()),
                     "max_value": float(V.max()),
                     "max_location": [float(v) for v in X[np.unravel_index(np.argmax(V), V.shape)[0]]]}
            if total:
                rep.per_B.append(entry)
                if entry["all_on_band"] and rep.smallest_B is None:
                    rep.smallest_B = B
            else:
                rep.partial_variant.append(entry)
    return rep


@dataclass
class GradientAuxReport:
    functional: str
    max_value: float
    location: list
    on_band: bool

    def as_dict(self):
        return dict(self.__dict__)


def gradient_aux_diag(p: DiscreteProblem, w, spec: DiagnosticSpec | None = None,
                      which="G") -> GradientAuxReport:
    """Near-boundary (``G``) or global (``P``) gradient functional.

    ``G = log|Dw|^2 - log(M0 - u) + a0*d`` with ``w = u + phi(x, u)*d`` on the
    collar; ``P = log|Dw|^2 + b|x|^2/2`` with ``w = (1 + eps*h)u - phi*h`` on
    all nodes, defined along the epsilon path only.
    """
    spec = spec or DiagnosticSpec()
    w = np.asarray(getattr(w, "values", w), dtype=float)
    g = p.grid
    dist = g.interior_dist
    X = g.interior_coords
    u = p.field(w)[: g.n_interior]
    Du = gradients(g, w)
    band = dist.d <= BAND * g.h
    if which == "G":
        mu = _mu_checked(p, spec)
        M0 = spec.M0 if spec.M0 is not None else float(np.abs(u).max()) + 1.0
        sel = (dist.d <= mu) & dist.valid
        d = dist.d[sel]
        phi, phi_u = _phi_xu(p, X[sel], u[sel])
        Dphi = p.phi.grad(X[sel]) + phi_u * Du[sel]
        Dw = Du[sel] + d[:, None] * Dphi + phi[:, None] * dist.grad_d[sel]
        arg = M0 - u[sel]
        a0 = spec.a0
        extra = a0 * d
    elif which == "P":
        if p.bc.mode != "epsilon":
            raise WrongBCMode("the global gradient functional is defined along the epsilon path")
        sel = dist.valid
        d = dist.d[sel]
        h = -d + d**2
        Dh = (-1 + 2 * d)[:, None] * dist.grad_d[sel]
        eps = p.bc.coef
        phi = p.phi(X[sel])
        Dw = ((1 + eps * h)[:, None] * Du[sel] + (eps * u[sel])[:, None] * Dh
              - h[:, None] * p.phi.grad(X[sel]) - phi[:, None] * Dh)
        arg = None
        extra = 0.5 * spec.b * np.sum(X[sel] ** 2, axis=1)
    else:
        raise ValueError("which must be 'G' or 'P'")
    Dw2 = np.sum(Dw**2, axis=1)
    if np.any(Dw2 <= 0) or (arg is not None and np.any(arg <= 0)):
        raise NonPositiveLogArgument(f"log argument is not positive in {which}")
    vals = np.log(Dw2) + extra - (np.log(arg) if arg is not None else 0.0)
    ex = _extremum(vals, X[sel], band[sel], "max")
    return GradientAuxReport(which, ex.value, ex.location, ex.on_band)


def identity_residual(p: DiscreteProblem, w, min_depth=None):
    """Max over nodes and directions of the x-derivative of the equation.

    At each interior node whose axis neighbours are interior and whose depth
    is at least ``min_depth`` (default: the collar width), the eigenvalue
    derivatives ``d_p lambda_i`` come from centred differences of the
    discrete Hessian; the residual is
    ``sum_i (f d_p lambda_i - lambda_i f_p) / (f^2 + lambda_i^2)``.
    A fixed depth keeps the node set independent of ``h``; next to the
    boundary the closure error is only first order.
    """
    g = p.grid
    w = np.asarray(getattr(w, "values", w), dtype=float)
    min_depth = default_mu(g.body) if min_depth is None else min_depth
    H = hessians(g, w)
    spec = specops.eig_sym(H)
    st = stencil(g)
    m = g.n_interior
    f = p.f_int
    fgrad = p.f.grad(g.interior_coords)
    ok = g.interior_dist.d >= min_depth
    for a in range(g.dim):
        mi, pl = st.axis[a]
        ok &= (mi < m) & (pl < m)
    sel = np.flatnonzero(ok)
    if sel.size == 0:
        return float("nan")
    Q = spec.frame[sel]
    lam = spec.lam[sel]
    ff = f[sel][:, None]
    worst = 0.0
    for a in range(g.dim):
        mi, pl = st.axis[a]
        dH = (H[pl[sel]] - H[mi[sel]]) / (2 * g.h)
        dlam = np.einsum("mai,mab,mbi->mi", Q, dH, Q)
        r = np.sum((ff * dlam - lam * fgrad[sel, a][:, None]) / (ff**2 + lam**2), axis=1)
        worst = max(worst, float(np.abs(r).max()))
    return worst


# --------------------------------------------------------------------------
# level-set sampling and spectral suites


def sample_level_set(n, theta, f=1.0, count=1, seed=0, batch=None) -> Spectrum:
    """Spectra on ``{sum arctan(lambda_i/f) = theta}``, batched.

    Angles ``theta_1..theta_{n-1}`` are uniform in ``(-pi/2, pi/2)`` and
    ``theta_n`` closes the sum; draws with ``theta_n`` outside the interval
    are rejected.  The result is a single :class:`Spectrum` whose ``lam``
    has shape ``(count, n)`` (sorted descending) with identity frames.
    """
    rng = np.random.default_rng(seed)
    half = math.pi / 2
    out = []
    have = drawn = 0
    batch = batch or max(1024, 2 * count)
    while have < count:
        th = rng.uniform(-half, half, size=(batch, n - 1))
        last = theta - th.sum(axis=1)
        ok = (last > -half) & (last < half)
        drawn += batch
        if ok.any():
            ang = np.concatenate([th[ok], last[ok, None]], axis=1)
            out.append(ang)
            have += ang.shape[0]
        if drawn >= 10_000 and have < 1e-4 * drawn:
            raise AdmissibilityExhausted(f"rejection rate above 0.9999 for theta = {theta}")
    ang = np.concatenate(out, axis=0)[:count] if out else np.zeros((0, n))
    lam = -np.sort(-f * np.tan(ang), axis=1)
    return Spectrum(lam, np.broadcast_to(np.eye(n), (lam.shape[0], n, n)))


@dataclass
class SuiteReport:
    n: int
    theta: float
    f: float
    count: int
    pass_prop1: int = 0
    pass_prop2: int = 0
    pass_prop3: int | None = None
    pass_mean_zero: int = 0
    pass_wy: int | None = None
    worst_margin1: float | None = None
    worst_margin2: float | None = None
    worst_margin3: float | None = None
    worst_mean_zero: float | None = None
    worst_wy: float | None = None
    max_sum_inv: float | None = None
    trace_ratio_max: float | None = None  # max of sum F^ii lam_i / sum F^ii
    trace_violations: int | None = None

    @property
    def asserted_pass(self):
        ok = (self.pass_prop1 == self.count and self.pass_prop2 == self.count
              and self.pass_mean_zero == self.count)
        if self.pass_prop3 is not None:
            ok = ok and self.pass_prop3 == self.count
        if self.pass_wy is not None:
            ok = ok and self.pass_wy == self.count
        return ok

    def as_dict(self):
        out = dict(self.__dict__)
        out["asserted_pass"] = self.asserted_pass
        return out


def run_lemma_suites(n, theta, f=1.0, count=100_000, seed=0, tol=1e-12) -> SuiteReport:
    """Eigenvalue-structure, mean-zero quadratic and trace suites on level-set samples.

    Margins are scale-relative (see :class:`specops.SpectrumProps`); the
    mean-zero quadratic uses ``sum lam_i x_i^2 / sum |lam_i| x_i^2``.  The
    inequality ``sum F^ii >= sum F^ii lam_i`` is measured, never asserted.
    """
    rep = SuiteReport(n, theta, f, count)
    if count == 0:
        return rep
    ph = phase_classify(theta, n)
    sp = sample_level_set(n, theta, f, count, seed)
    props = specops.lemma_spectrum_props(sp, f, ph, tol)
    rep.pass_prop1 = int(props.prop1.sum())
    rep.pass_prop2 = int(props.prop2.sum())
    rep.worst_margin1 = float(props.margin1.min())
    rep.worst_margin2 = float(props.margin2.min())
    with np.errstate(divide="ignore"):
        s_inv = np.sum(1.0 / sp.lam, axis=1)
    neg = sp.lam[:, -1] < 0
    rep.max_sum_inv = float(s_inv[neg].max()) if neg.any() else None
    if props.prop3 is not None:
        rep.pass_prop3 = int(props.prop3.sum())
        rep.worst_margin3 = float(props.margin3.min())

    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(count, n))
    x -= x.mean(axis=1, keepdims=True)
    q = specops.mean_zero_quadratic(sp, x)
    scale = np.sum(np.abs(sp.lam) * x**2, axis=1)
    margin = np.where(scale > 0, q / np.where(scale > 0, scale, 1.0), 0.0)
    rep.pass_mean_zero = int((margin >= -tol).sum())
    rep.worst_mean_zero = float(margin.min())

    g, trace = specops.gradient_eig(sp, f)
    wy = np.sum(g * sp.lam, axis=1)
    if ph.cls == "critical":
        rep.pass_wy = int((wy >= -tol).sum())
        rep.worst_wy = float(wy.min())
    ratio = wy / trace
    rep.trace_ratio_max = float(ratio.max())
    rep.trace_violations = int((ratio > 1).sum())
    return rep
