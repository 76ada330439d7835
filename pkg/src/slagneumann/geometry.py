"""Strictly convex, origin-centred domains and their distance geometry.

Bodies are immutable.  Every query is vectorised over a batch of points
``x`` of shape ``(m, dim)``; a single point of shape ``(dim,)`` is also
accepted and the leading axis is then dropped from the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadDimension, NonConvex, OutsideCollar, ProjectionDiverged

KAPPA_CHECK = 1e-6  # lower bound for s + s'' on support2d bodies
S_MIN = 1e-9  # lower bound for the support function (origin interior)
N_CHECK = 720  # angles sampled for convexity checks
PROJ_MAXITER = 100


@dataclass(frozen=True)
class FourierSupport:
    """Truncated Fourier series ``s(t) = a0 + sum_k a_k cos kt + b_k sin kt``."""

    a0: float
    cos: tuple = ()
    sin: tuple = ()

    def __call__(self, theta, deriv=0):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.a0 if deriv == 0 else 0.0)
        shift = deriv * math.pi / 2
        for k, a in enumerate(self.cos, start=1):
            out = out + a * k**deriv * np.cos(k * theta + shift)
        for k, b in enumerate(self.sin, start=1):
            out = out + b * k**deriv * np.sin(k * theta + shift)
        return out

    def blend(self, t):
        """Support function of ``t*K + (1-t)*B_1``."""
        return FourierSupport(
            t * self.a0 + (1 - t),
            tuple(t * a for a in self.cos),
            tuple(t * b for b in self.sin),
        )


@dataclass(frozen=True)
class ConvexBody:
    """A strictly convex domain containing the origin.

    ``kind`` is one of ``ball``, ``ellipsoid``, ``support2d`` or ``blend``.
    The last one is produced only by :func:`homotopy_domain` and stands
    for ``t*base + (1-t)*B_1``.
    """

    dim: int
    kind: str
    radius: float = 1.0
    axes: tuple = ()
    fourier: FourierSupport | None = None
    base: ConvexBody | None = None
    t: float = 1.0

    def support(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "ball":
            return self.radius * np.linalg.norm(u, axis=-1)
        if self.kind == "ellipsoid":
            return np.sqrt(np.sum((np.asarray(self.axes) * u) ** 2, axis=-1))
        if self.kind == "support2d":
            nrm = np.linalg.norm(u, axis=-1)
            return nrm * self.fourier(np.arctan2(u[..., 1], u[..., 0]))
        return self.t * self.base.support(u) + (1 - self.t) * np.linalg.norm(u, axis=-1)

    def extent(self):
        """Half-width of the bounding box along each coordinate axis."""
        eye = np.eye(self.dim)
        return np.maximum(self.support(eye), self.support(-eye))

    def inradius(self):
        """Distance from the origin to the boundary."""
        return float(signed_distance(self, np.zeros(self.dim)).d)

    def curvature_range(self, samples=N_CHECK):
        """Smallest and largest principal curvature over the boundary."""
        if self.kind == "ball":
            return 1.0 / self.radius, 1.0 / self.radius
        if self.kind == "ellipsoid":
            a = np.asarray(self.axes, dtype=float)
            if self.dim == 2:
                t = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
                k = a[0] * a[1] / (a[0] ** 2 * np.sin(t) ** 2 + a[1] ** 2 * np.cos(t) ** 2) ** 1.5
                return float(k.min()), float(k.max())
            # extremes of ellipsoid principal curvatures sit at the vertices
            ks = [a[i] / a[j] ** 2 for i in range(3) for j in range(3) if i != j]
            return float(min(ks)), float(max(ks))
        if self.kind == "support2d":
            th = np.linspace(0.0, 2 * np.pi, max(samples, N_CHECK), endpoint=False)
            rho = self.fourier(th) + self.fourier(th, 2)
            return float(1.0 / rho.max()), float(1.0 / rho.min())
        lo, hi = self.base.curvature_range(samples)
        t = self.t
        return lo / (t + (1 - t) * lo), hi / (t + (1 - t) * hi)

    def describe(self):
        if self.kind == "ball":
            return {"kind": "ball", "dim": self.dim, "radius": self.radius}
        if self.kind == "ellipsoid":
            return {"kind": "ellipsoid", "dim": self.dim, "axes": list(self.axes)}
        if self.kind == "support2d":
            f = self.fourier
            return {"kind": "support2d", "dim": 2,
                    "fourier": {"a0": f.a0, "cos": list(f.cos), "sin": list(f.sin)}}
        return {"kind": "blend", "dim": self.dim, "t": self.t, "base": self.base.describe()}


@dataclass
class DistanceData:
    """Signed distance (positive inside) and the boundary frame at the foot point."""

    d: np.ndarray
    foot: np.ndarray
    nu: np.ndarray
    curvatures: np.ndarray
    grad_d: np.ndarray
    hess_d: np.ndarray
    valid: np.ndarray = field(default=None)

    def _squeeze(self):
        return DistanceData(*(getattr(self, k)[0] for k in
                              ("d", "foot", "nu", "curvatures", "grad_d", "hess_d", "valid")))


@dataclass
class BarrierH:
    h: np.ndarray
    grad_h: np.ndarray
    hess_h: np.ndarray
    mu: float
    eig_min: np.ndarray
    eig_max: np.ndarray


def make_domain(desc) -> ConvexBody:
    """Build and validate a body from a descriptor mapping.

    Accepted keys: ``kind`` (ball | ellipsoid | support2d), ``dim``,
    ``radius``, ``axes`` and ``fourier`` (mapping with ``a0``, ``cos``, ``sin``).
    """
    kind = desc.get("kind", "ball")
    if kind == "ball":
        dim = int(desc.get("dim", 2))
        _check_dim(dim)
        radius = float(desc.get("radius", 1.0))
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        return ConvexBody(dim, "ball", radius=radius)
    if kind == "ellipsoid":
        axes = tuple(float(a) for a in desc["axes"])
        dim = int(desc.get("dim", len(axes)))
        _check_dim(dim)
        if len(axes) != dim:
            raise BadDimension(f"ellipsoid needs {dim} semi-axes, got {len(axes)}")
        if min(axes) <= 0:
            raise ValueError("semi-axes must be positive")
        return ConvexBody(dim, "ellipsoid", axes=axes)
    if kind == "support2d":
        dim = int(desc.get("dim", 2))
        if dim != 2:
            raise BadDimension("support2d bodies are planar")
        four = desc["fourier"]
        fs = FourierSupport(float(four.get("a0", 1.0)),
                            tuple(float(c) for c in four.get("cos", ())),
                            tuple(float(c) for c in four.get("sin", ())))
        th = np.linspace(0.0, 2 * np.pi, N_CHECK, endpoint=False)
        if fs(th).min() < S_MIN:
            raise NonConvex("support function is not positive: origin is not interior")
        if (fs(th) + fs(th, 2)).min() < KAPPA_CHECK:
            raise NonConvex("s + s'' is not positive: boundary is not strictly convex")
        return ConvexBody(2, "support2d", fourier=fs)
    raise ValueError(f"unknown domain kind {kind!r}")


def _check_dim(dim):
    if dim not in (2, 3):
        raise BadDimension(f"dimension must be 2 or 3, got {dim}")


def homotopy_domain(body: ConvexBody, t: float) -> ConvexBody:
    """Minkowski combination ``t*body + (1-t)*B_1``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 1.0:
        return body
    if t == 0.0:
        return ConvexBody(body.dim, "ball", radius=1.0)
    if body.kind == "ball":
        return ConvexBody(body.dim, "ball", radius=t * body.radius + 1 - t)
    if body.kind == "support2d":
        return ConvexBody(2, "support2d", fourier=body.fourier.blend(t))
    if body.kind == "blend":
        return ConvexBody(body.dim, "blend", base=body.base, t=t * body.t)
    return ConvexBody(body.dim, "blend", base=body, t=t)


def default_mu(body: ConvexBody) -> float:
    """Collar width: 0.2 of the smallest inradius along the homotopy, capped
    so that the distance stays smooth and ``|Dh| >= 1/2`` in the collar."""
    kmax = max(body.curvature_range()[1], 1.0)
    return min(0.2 * min(body.inradius(), 1.0), 0.5 / kmax, 0.25)


# --------------------------------------------------------------------------
# signed distance


def signed_distance(body: ConvexBody, x) -> DistanceData:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != body.dim:
        raise BadDimension(f"point dimension {X.shape[1]} does not match body dimension {body.dim}")
    if body.kind == "ball":
        out = _dist_ball(body.radius, X)
    elif body.kind == "ellipsoid":
        out = _dist_ellipsoid(np.asarray(body.axes, dtype=float), X)
    elif body.kind == "support2d":
        out = _dist_support2d(body.fourier, X)
    else:
        out = _dist_blend(body, X)
    return out._squeeze() if single else out


def _dist_ball(R, X):
    m, n = X.shape
    r = np.linalg.norm(X, axis=1)
    valid = r > 1e-14 * R
    rhat = np.zeros_like(X)
    rhat[:, 0] = 1.0
    rhat[valid] = X[valid] / r[valid, None]
    hess = -(np.eye(n)[None] - rhat[:, :, None] * rhat[:, None, :]) / np.where(valid, r, 1.0)[:, None, None]
    grad = -rhat.copy()
    grad[~valid] = np.nan
    hess[~valid] = np.nan
    return DistanceData(R - r, R * rhat, rhat, np.full((m, n - 1), 1.0 / R), grad, hess, valid)


def _principal_frame(nu, shape_op):
    """Principal curvatures and directions from a tangential shape operator."""
    m, n = nu.shape
    if n == 2:
        tau = np.stack([-nu[:, 1], nu[:, 0]], axis=1)
        k = np.einsum("mi,mij,mj->m", tau, shape_op, tau)
        return k[:, None], tau[:, None, :]
    w, v = np.linalg.eigh(shape_op)
    align = np.abs(np.einsum("mi,mij->mj", nu, v))
    drop = np.argmax(align, axis=1)
    keep = np.array([[j for j in range(3) if j != dj] for dj in range(3)])[drop]
    k = np.take_along_axis(w, keep, axis=1)
    dirs = np.take_along_axis(v, keep[:, None, :], axis=2).transpose(0, 2, 1)
    return k, dirs


def _hess_from_frame(k, dirs, d):
    denom = 1.0 - k * d[:, None]
    coef = -k / np.where(np.abs(denom) > 0, denom, np.nan)
    return np.einsum("mk,mki,mkj->mij", coef, dirs, dirs), denom


def _dist_ellipsoid(a, X):
    m, n = X.shape
    a2 = a**2
    amin2 = a2.min()
    ax = a * X
    inside = np.sum((X / a) ** 2, axis=1) < 1.0
    is_min = np.isclose(a2, amin2, rtol=1e-14, atol=0.0)
    scale = a.max()
    zero_min = np.all(np.abs(X[:, is_min]) <= 1e-14 * scale, axis=1)
    others = ~is_min
    if others.any():
        fstar = np.sum((ax[:, others] / (a2[others] - amin2)) ** 2, axis=1) - 1.0
    else:
        fstar = np.full(m, -1.0)
    degenerate = zero_min & (fstar <= 0.0)

    lo = np.full(m, -amin2)
    tau = np.where(inside, 0.0, np.linalg.norm(ax, axis=1))
    done = degenerate.copy()
    for _ in range(PROJ_MAXITER):
        act = ~done
        if not act.any():
            break
        den = a2[None, :] + tau[act, None]
        q = ax[act] / den
        F = np.sum(q**2, axis=1) - 1.0
        dF = -2.0 * np.sum(q**2 / den, axis=1)
        step = -F / dF
        new = tau[act] + step
        bad = ~(new > lo[act])
        new[bad] = 0.5 * (lo[act][bad] + tau[act][bad])
        conv = (np.abs(F) <= 1e-15) | (np.abs(new - tau[act]) <= 1e-16 * (1.0 + np.abs(tau[act])))
        tau[act] = new
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    if not done.all():
        raise ProjectionDiverged("ellipsoid projection did not converge")

    Y = a2 * X / (a2 + tau[:, None])
    if degenerate.any():
        dg = degenerate
        Yd = np.zeros((dg.sum(), n))
        Yd[:, others] = a2[others] * X[dg][:, others] / (a2[others] - amin2)
        j = int(np.flatnonzero(is_min)[0])
        rest = 1.0 - np.sum((Yd / a) ** 2, axis=1)
        Yd[:, j] = a[j] * np.sqrt(np.maximum(rest, 0.0))
        Y[dg] = Yd
    resid = np.abs(np.sum((Y / a) ** 2, axis=1) - 1.0)
    if resid.max() > 1e-10:
        raise ProjectionDiverged(f"foot-point residual {resid.max():.2e} exceeds 1e-10")
    # near the medial set the last Newton step can leave O(1e-12) drift; snap back
    Y = Y / np.sqrt(np.sum((Y / a) ** 2, axis=1))[:, None]

    diff = X - Y
    dist = np.linalg.norm(diff, axis=1)
    d = np.where(inside, dist, -dist)
    gg = Y / a2
    nu = gg / np.linalg.norm(gg, axis=1, keepdims=True)
    P = np.eye(n)[None] - nu[:, :, None] * nu[:, None, :]
    shape_op = P @ (np.diag(1.0 / a2)[None] / np.linalg.norm(gg, axis=1)[:, None, None]) @ P
    k, dirs = _principal_frame(nu, shape_op)
    hess, denom = _hess_from_frame(k, dirs, d)
    valid = ~degenerate & np.all(denom > 1e-12, axis=1)
    grad = -nu.copy()
    grad[~valid] = np.nan
    hess[~valid] = np.nan
    return DistanceData(d, Y, nu, k, grad, hess, valid)


def _dist_support2d(fs, X, nsample=256):
    m = X.shape[0]
    th = np.linspace(0.0, 2 * np.pi, nsample, endpoint=False)
    s, s1 = fs(th), fs(th, 1)
    P = np.stack([s * np.cos(th) - s1 * np.sin(th), s * np.sin(th) + s1 * np.cos(th)], axis=1)
    theta = np.empty(m)
    for lo in range(0, m, 4096):
        chunk = X[lo:lo + 4096]
        d2 = np.sum((chunk[:, None, :] - P[None]) ** 2, axis=2)
        theta[lo:lo + 4096] = th[np.argmin(d2, axis=1)]
    scale = float(np.max(np.abs(P)))
    cap = 4 * np.pi / nsample
    done = np.zeros(m, dtype=bool)
    for _ in range(PROJ_MAXITER):
        act = ~done
        if not act.any():
            break
        t = theta[act]
        x = X[act]
        c, sn = np.cos(t), np.sin(t)
        g = fs(t, 1) - (-x[:, 0] * sn + x[:, 1] * c)
        dg = fs(t, 2) + (x[:, 0] * c + x[:, 1] * sn)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dg > 0, -g / dg, -np.sign(g) * cap)
        step = np.clip(step, -cap, cap)
        theta[act] = t + step
        conv = (np.abs(g) <= 1e-14 * scale) | (np.abs(step) <= 1e-15)
        done[np.flatnonzero(act)[conv]] = True
    if not done.all():
        raise ProjectionDiverged("support-function projection did not converge")

    c, sn = np.cos(theta), np.sin(theta)
    s, s1, s2 = fs(theta), fs(theta, 1), fs(theta, 2)
    nu = np.stack([c, sn], axis=1)
    tau = np.stack([-sn, c], axis=1)
    foot = s[:, None] * nu + s1[:, None] * tau
    d = s - np.sum(X * nu, axis=1)
    k = (1.0 / (s + s2))[:, None]
    hess, denom = _hess_from_frame(k, tau[:, None, :], d)
    valid = denom[:, 0] > 1e-12
    grad = -nu.copy()
    grad[~valid] = np.nan
    hess[~valid] = np.nan
    return DistanceData(d, foot, nu, k, grad, hess, valid)


def _dist_blend(body, X):
    t = body.t
    dd = signed_distance(body.base, X / t)
    k = dd.curvatures / (t + (1 - t) * dd.curvatures)
    return DistanceData(
        t * dd.d + (1 - t),
        t * dd.foot + (1 - t) * dd.nu,
        dd.nu,
        k,
        dd.grad_d,
        dd.hess_d / t,
        dd.valid,
    )


# --------------------------------------------------------------------------
# the barrier h = -d + d^2


def barrier_h(body: ConvexBody, x, mu: float, dist: DistanceData | None = None) -> BarrierH:
    """Evaluate ``h = -d + d^2`` with its first two derivatives in the collar."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    dd = dist if dist is not None else signed_distance(body, np.atleast_2d(x))
    d = np.atleast_1d(dd.d)
    if np.any(d < -1e-12) or np.any(d > mu + 1e-12):
        raise OutsideCollar(f"distance outside [0, {mu}]")
    grad = np.atleast_2d(dd.grad_d)
    hess = dd.hess_d if np.ndim(dd.hess_d) == 3 else dd.hess_d[None]
    h = -d + d**2
    a = (-1.0 + 2.0 * d)
    grad_h = a[:, None] * grad
    hess_h = a[:, None, None] * hess + 2.0 * grad[:, :, None] * grad[:, None, :]
    w = np.linalg.eigvalsh(hess_h)
    out = BarrierH(h, grad_h, hess_h, mu, w[:, 0], w[:, -1])
    if single:
        return BarrierH(h[0], grad_h[0], hess_h[0], mu, w[0, 0], w[0, -1])
    return out


def collar_bounds(body: ConvexBody, mu: float):
    """Bounds ``(kappa0, K0)`` on the eigenvalues of ``D^2 h`` over the collar.

    Tangential eigenvalues equal ``k(1-2d)/(1-kd)``, which is monotone in
    both the curvature and the depth, so the extremes sit at the corners.
    """
    kmin, kmax = body.curvature_range()

    def tang(k, d):
        den = 1.0 - k * d
        return k * (1 - 2 * d) / den if den > 0 else math.inf

    kappa0 = min(2.0, tang(kmin, 0.0), tang(kmin, mu))
    K0 = max(2.0, tang(kmax, 0.0), tang(kmax, mu))
    return kappa0, K0
