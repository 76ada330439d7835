"""Sparse direct solves for the Newton systems.

Small and planar systems are factorized afresh at every call.  Large ones (3-D) are
ordered by geometric nested dissection and factorized without pivoting;
the factors are then kept and reused as a preconditioner for GMRES on
later systems, and rebuilt whenever GMRES fails to reach the tolerance
within a few dozen iterations.  The accepted solution always satisfies
the requested relative residual.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveFailed

log = logging.getLogger(__name__)

DIRECT_LIMIT = 30000
ND_LEAF = 64


def nested_dissection(coords, leaf=ND_LEAF):
    """Fill-reducing ordering from recursive coordinate bisection.

    Each block is split at the median lattice plane of its widest axis;
    the two halves come first and the separator plane last.
    """
    coords = np.asarray(coords)
    order = []
    stack = [(np.arange(coords.shape[0]), False)]
    # iterative post-order: (ids, expanded)
    while stack:
        ids, expanded = stack.pop()
        if expanded or len(ids) <= leaf:
            order.append(ids)
            continue
        c = coords[ids]
        ax = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        vals = np.unique(c[:, ax])
        mid = vals[len(vals) // 2]
        left, sep, right = ids[c[:, ax] < mid], ids[c[:, ax] == mid], ids[c[:, ax] > mid]
        # pushed in reverse so that left, right, separator come out in order
        stack.append((sep, True))
        stack.append((right, False))
        stack.append((left, False))
    return np.concatenate(order)


@dataclass
class SolveStats:
    factorizations: int = 0
    krylov_solves: int = 0
    krylov_iterations: int = 0


class LinearSolver:
    """Solve ``A x = b`` for a sequence of related sparse systems.

    Parameters
    ----------
    direct_limit : int
        Systems up to this size, and all planar systems, are factorized
        afresh with partial pivoting.
    rtol : float
        Relative residual required of every solution.
    krylov_maxiter : int
        GMRES restart length.
    krylov_restarts : int
        GMRES cycles allowed before the stored factors are refreshed.
    """

    def __init__(self, direct_limit=DIRECT_LIMIT, rtol=1e-8, krylov_maxiter=40, krylov_restarts=4):
        self.direct_limit = direct_limit
        self.rtol = rtol
        self.krylov_maxiter = krylov_maxiter
        self.krylov_restarts = krylov_restarts
        self.stats = SolveStats()
        self._lu = None
        self._perm = None
        self._perm_key = None

    def reset(self):
        self._lu = None

    def _ordering(self, A, coords):
        key = (A.shape[0], None if coords is None else coords.shape)
        if self._perm is None or self._perm_key != key:
            if coords is None:
                self._perm = np.arange(A.shape[0])
            else:
                self._perm = nested_dissection(coords)
            self._perm_key = key
            self._lu = None
        return self._perm

    def _factor(self, A, perm):
        Ap = A[perm][:, perm].tocsc()
        try:
            lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise LinearSolveFailed(f"factorization failed: {exc}") from exc
        self.stats.factorizations += 1
        return lu

    def solve(self, A, b, coords=None):
        A = sp.csr_matrix(A)
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return np.zeros_like(b)
        # planar systems factor cheaply with pivoting at any size we meet
        if A.shape[0] <= self.direct_limit or coords is None or coords.shape[1] < 3:
            try:
                lu = spla.splu(A.tocsc())
            except RuntimeError as exc:
                raise LinearSolveFailed(f"factorization failed: {exc}") from exc
            self.stats.factorizations += 1
            x = lu.solve(b)
            return self._check(A, x, b, bnorm)

        perm = self._ordering(A, coords)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)

        def apply(lu, r):
            return lu.solve(r[perm])[inv]

        if self._lu is not None and self._lu[1] == A.shape:
            x = self._krylov(A, b, bnorm, lambda r: apply(self._lu[0], r))
            if x is not None:
                return x
        lu = self._factor(A, perm)
        self._lu = (lu, A.shape)
        x = apply(lu, b)
        log.debug("direct solve relative residual %.3e", np.linalg.norm(A @ x - b) / bnorm)
        if np.linalg.norm(A @ x - b) <= self.rtol * bnorm:
            return x
        # unpivoted factors can lose accuracy; polish with GMRES on them
        x = self._krylov(A, b, bnorm, lambda r: apply(lu, r), x0=x)
        if x is None:
            raise LinearSolveFailed("direct solve did not reach the requested residual")
        return x

    def _krylov(self, A, b, bnorm, precond, x0=None):
        M = spla.LinearOperator(A.shape, matvec=precond, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, b, x0=x0, rtol=0.01 * self.rtol, atol=0.0, restart=self.krylov_maxiter,
                             maxiter=self.krylov_restarts, M=M, callback=cb, callback_type="pr_norm")
        self.stats.krylov_solves += 1
        self.stats.krylov_iterations += count[0]
        log.debug("gmres: %d iterations, info %d, relative residual %.3e", count[0], info,
                  np.linalg.norm(A @ x - b) / bnorm)
        if not np.all(np.isfinite(x)) or np.linalg.norm(A @ x - b) > self.rtol * bnorm:
            return None
        return x

    def _check(self, A, x, b, bnorm):
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailed("linear solve produced non-finite values")
        return x
