"""Pointwise spectral algebra for ``F(M) = sum_i arctan(lambda_i(M) / f)``.

All functions broadcast over leading batch axes: a matrix argument has
shape ``(..., n, n)``, a spectrum carries ``lam`` of shape ``(..., n)``,
and ``f`` is a scalar or an array matching the batch shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveF, NotMeanZero, NotSymmetric, PhaseViolated

SYM_TOL = 1e-12
DEGENERATE_GAP = 1e-7
JACOBI_SWEEPS = 12


@dataclass
class Spectrum:
    """Eigenvalues sorted descending and the matching orthonormal frame."""

    lam: np.ndarray
    frame: np.ndarray

    @property
    def n(self):
        return self.lam.shape[-1]

    def matrix(self):
        return np.einsum("...ik,...k,...jk->...ij", self.frame, self.lam, self.frame)


@dataclass
class PhaseSpec:
    theta: float
    n: int
    delta: float
    cls: str  # "critical" | "supercritical" | "invalid"

    @property
    def admissible(self):
        return self.cls != "invalid"


@dataclass
class OperatorEval:
    value: np.ndarray
    grad_eig: np.ndarray
    grad_ambient: np.ndarray
    trace_F: np.ndarray
    hess_pairs: "PairHessian"


@dataclass
class PairHessian:
    """Second derivative of ``F`` in the eigenframe.

    ``diag[..., i]`` holds the coefficient for ``i=j=k=l`` and
    ``pair[..., i, j]`` (``i != j``) the coefficient for ``i=l, k=j``.
    The diagonal of ``pair`` repeats ``diag`` (the divided-difference limit).
    """

    diag: np.ndarray
    pair: np.ndarray


# --------------------------------------------------------------------------
# eigensolver


def eig_sym(M) -> Spectrum:
    """Sorted eigendecomposition of symmetric 2x2 or 3x3 matrices.

    Closed form in 2-D, cyclic Jacobi in 3-D.  Columns of ``frame`` follow
    ``lam`` and have their first non-negligible component positive.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if M.shape[-2] != n or n not in (2, 3):
        raise ValueError("expected square 2x2 or 3x3 matrices")
    asym = np.abs(M - np.swapaxes(M, -1, -2)).max(axis=(-2, -1))
    scale = 1.0 + np.abs(M).max(axis=(-2, -1))
    if np.any(asym > SYM_TOL * scale):
        raise NotSymmetric(f"asymmetry {asym.max():.3e} exceeds tolerance")
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    lam, Q = _eig2(M) if n == 2 else _jacobi3(M)
    order = np.argsort(-lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    Q = np.take_along_axis(Q, order[..., None, :], axis=-1)
    return Spectrum(lam, _fix_signs(Q))


def _eig2(M):
    a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
    mean = 0.5 * (a + c)
    r = np.hypot(0.5 * (a - c), b)
    phi = 0.5 * np.arctan2(2.0 * b, a - c)
    cs, sn = np.cos(phi), np.sin(phi)
    lam = np.stack([mean + r, mean - r], axis=-1)
    Q = np.stack([np.stack([cs, -sn], axis=-1), np.stack([sn, cs], axis=-1)], axis=-2)
    return lam, Q


def _jacobi3(M):
    A = M.reshape(-1, 3, 3).copy()
    V = np.broadcast_to(np.eye(3), A.shape).copy()
    norm = np.sqrt(np.sum(A**2, axis=(1, 2))) + 1e-300
    for _ in range(JACOBI_SWEEPS):
        off = np.sqrt(2.0 * (A[:, 0, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 2] ** 2))
        if np.all(off <= 1e-17 * norm):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = A[:, p, q]
            rot = np.abs(apq) > 1e-300
            if not rot.any():
                continue
            app, aqq = A[:, p, p], A[:, q, q]
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = np.where(rot, (aqq - app) / (2.0 * apq), 0.0)
                t = np.where(rot, np.sign(tau) / (np.abs(tau) + np.hypot(tau, 1.0)), 0.0)
            t = np.where(rot & (tau == 0), 1.0, t)
            c = 1.0 / np.sqrt(t**2 + 1.0)
            s = t * c
            J = np.broadcast_to(np.eye(3), A.shape).copy()
            J[:, p, p] = c
            J[:, q, q] = c
            J[:, p, q] = s
            J[:, q, p] = -s
            A = np.swapaxes(J, 1, 2) @ A @ J
            A[:, p, q] = 0.0
            A[:, q, p] = 0.0
            V = V @ J
    lam = np.diagonal(A, axis1=1, axis2=2).copy()
    return lam.reshape(M.shape[:-1]), V.reshape(M.shape)


def _fix_signs(Q):
    n = Q.shape[-1]
    big = np.abs(Q) > 1e-10
    first = np.argmax(big, axis=-2)  # first row index with a sizeable entry, per column
    lead = np.take_along_axis(Q, first[..., None, :], axis=-2)[..., 0, :]
    sign = np.where(lead < 0, -1.0, 1.0)
    return Q * sign[..., None, :]


# --------------------------------------------------------------------------
# the operator and its derivatives


def _check_f(f):
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise NonpositiveF("f must be positive")
    return f


def theta_value(sp: Spectrum, f):
    f = _check_f(f)
    return np.sum(np.arctan(sp.lam / f[..., None]), axis=-1)


def gradient_eig(sp: Spectrum, f):
    """Eigenframe gradient ``F^ii = f/(f^2+lam_i^2)`` and its trace."""
    f = _check_f(f)[..., None]
    g = f / (f**2 + sp.lam**2)
    return g, g.sum(axis=-1)


def gradient_ambient(sp: Spectrum, f):
    g, _ = gradient_eig(sp, f)
    return np.einsum("...ik,...k,...jk->...ij", sp.frame, g, sp.frame)


def hessian_pairs(sp: Spectrum, f) -> PairHessian:
    f = _check_f(f)[..., None]
    lam = sp.lam
    q = f**2 + lam**2
    diag = -2.0 * f * lam / q**2
    li, lj = lam[..., :, None], lam[..., None, :]
    fi = f[..., None]
    pair = -fi * (li + lj) / (q[..., :, None] * q[..., None, :])
    near = np.abs(li - lj) < DEGENERATE_GAP * (1.0 + np.abs(li) + np.abs(lj))
    limit = np.broadcast_to(diag[..., :, None], pair.shape)
    pair = np.where(near, limit, pair)
    return PairHessian(diag, pair)


def second_directional(sp: Spectrum, f, S):
    """``S : D^2F : S`` for a symmetric direction ``S``."""
    H = hessian_pairs(sp, f)
    St = np.einsum("...ki,...kl,...lj->...ij", sp.frame, np.asarray(S, dtype=float), sp.frame)
    return np.sum(H.pair * St**2, axis=(-2, -1))


def evaluate(M, f) -> OperatorEval:
    sp = eig_sym(M)
    g, tr = gradient_eig(sp, f)
    return OperatorEval(theta_value(sp, f), g, gradient_ambient(sp, f), tr, hessian_pairs(sp, f))


# --------------------------------------------------------------------------
# phase and the structural lemmas


def phase_classify(theta: float, n: int) -> PhaseSpec:
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    crit = (n - 2) * math.pi / 2
    delta = theta - crit
    if abs(delta) <= 1e-12 * max(1.0, abs(crit)):
        return PhaseSpec(theta, n, 0.0, "critical")
    if delta < 0 or theta >= n * math.pi / 2:
        return PhaseSpec(theta, n, delta, "invalid")
    return PhaseSpec(theta, n, delta, "supercritical")


@dataclass
class SpectrumProps:
    """Outcome of the eigenvalue-structure checks.

    Margins are scale-relative; a property holds when its margin is
    at least ``-tol``.  ``prop3`` is ``None`` at the critical phase.
    """

    prop1: np.ndarray
    prop2: np.ndarray
    prop3: np.ndarray | None
    margin1: np.ndarray
    margin2: np.ndarray
    margin3: np.ndarray | None

    @property
    def all_true(self):
        ok = bool(np.all(self.prop1) and np.all(self.prop2))
        return ok and (self.prop3 is None or bool(np.all(self.prop3)))


def lemma_spectrum_props(sp: Spectrum, f, ph: PhaseSpec, tol=1e-12) -> SpectrumProps:
    """Check, for spectra on or above the critical level set:

    1. ``lam_{n-1} > 0`` and ``|lam_n| <= lam_{n-1}``;
    2. ``sum 1/lam_i <= 0`` whenever ``lam_n < 0``;
    3. ``lam_n >= -f cot(delta)`` when ``delta > 0``.
    """
    f = _check_f(f)
    n = sp.n
    crit = (n - 2) * math.pi / 2
    if np.any(theta_value(sp, f) < crit - 1e-12):
        raise PhaseViolated("spectrum lies below the critical level set")
    lam = sp.lam
    ln1, ln = lam[..., n - 2], lam[..., n - 1]
    margin1 = np.minimum(ln1, ln1 - np.abs(ln)) / (1.0 + np.abs(ln1))
    prop1 = (ln1 > 0) & (margin1 >= -tol)
    neg = ln < 0
    with np.errstate(divide="ignore"):
        inv = 1.0 / lam
    s_inv = np.sum(inv, axis=-1)
    a_inv = np.sum(np.abs(inv), axis=-1)
    margin2 = np.where(neg, -s_inv / np.where(neg, a_inv, 1.0), 0.0)
    prop2 = margin2 >= -tol
    if ph.delta > 0:
        bound = -f / math.tan(ph.delta) if ph.delta < math.pi / 2 else np.zeros_like(f)
        margin3 = (ln - bound) / (1.0 + np.abs(bound) + np.abs(ln))
        prop3 = margin3 >= -tol
    else:
        margin3 = prop3 = None
    return SpectrumProps(prop1, prop2, prop3, margin1, margin2, margin3)


def wy_value(sp: Spectrum, f):
    """``sum_i F^ii lam_i = sum_i f lam_i / (f^2 + lam_i^2)``."""
    f = _check_f(f)[..., None]
    return np.sum(f * sp.lam / (f**2 + sp.lam**2), axis=-1)


def mean_zero_quadratic(sp: Spectrum, x, f=None):
    """``sum_i lam_i x_i^2`` for mean-zero ``x``.

    The spectrum must have the structure enforced on the critical level
    set (``lam_{n-1} > 0`` and ``sum 1/lam_i <= 0`` when ``lam_n < 0``);
    when ``f`` is given the phase itself is checked instead.
    """
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    if np.any(np.abs(x.sum(axis=-1)) > 1e-12 * np.maximum(nx, 1e-300)):
        raise NotMeanZero("x must sum to zero")
    n = sp.n
    lam = sp.lam
    if f is not None:
        below = theta_value(sp, f) < (n - 2) * math.pi / 2 - 1e-12
    else:
        with np.errstate(divide="ignore"):
            s_inv = np.sum(1.0 / lam, axis=-1)
        below = ~(lam[..., n - 2] > 0) | ((lam[..., n - 1] < 0) & (s_inv > 1e-12 * np.sum(np.abs(1.0 / lam), axis=-1)))
    if np.any(below):
        raise PhaseViolated("spectrum lies below the critical level set")
    return np.sum(lam * x**2, axis=-1)
