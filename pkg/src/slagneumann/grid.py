"""Uniform Cartesian lattice clipped to a convex body.

Lattice node ``k`` (a multi-index in ``[0, 2K]^n``) sits at ``(k - K) * h``.
Unknowns are the interior nodes (``d > 0``) in lexicographic order followed
by the ghost nodes: exterior nodes reached by some interior stencil.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteField, OutsideInterpolationDomain, TooCoarse
from .geometry import ConvexBody, DistanceData, signed_distance

EXTERIOR, INTERIOR, GHOST = 0, 1, 2
GHOST_BAND = 1.5  # in units of h
MIN_NODES_PER_AXIS = 8


def stencil_offsets(n):
    """Offsets used by the Hessian stencil: faces and in-plane diagonals."""
    offs = []
    for o in itertools.product((-1, 0, 1), repeat=n):
        nz = sum(1 for v in o if v)
        if nz in (1, 2):
            offs.append(o)
    return np.array(offs, dtype=int)


@dataclass
class GhostData:
    """Ghost nodes with their foot points and inward probes.

    ``probes[k]`` is the point ``foot - (k+1)*h*nu`` for ``k = 0, 1, 2``.
    ``depth`` is the signed distance of the ghost node itself (``<= 0``).
    """

    dist: DistanceData
    depth: np.ndarray
    probes: np.ndarray  # (3, m, n)


@dataclass
class Grid:
    body: ConvexBody
    h: float
    dim: int
    K: int
    tag: np.ndarray  # lattice-shaped, EXTERIOR/INTERIOR/GHOST
    index: np.ndarray  # lattice-shaped unknown index, -1 where unused
    nodes: np.ndarray  # (N, n) lattice multi-indices of the unknowns
    n_interior: int
    interior_dist: DistanceData
    ghosts: GhostData
    _stencil: object = field(default=None, repr=False, compare=False)
    _jac_pattern: object = field(default=None, repr=False, compare=False)

    @property
    def n_ghost(self):
        return self.nodes.shape[0] - self.n_interior

    @property
    def n_unknowns(self):
        return self.nodes.shape[0]

    @property
    def coords(self):
        return (self.nodes - self.K) * self.h

    @property
    def interior_coords(self):
        return self.coords[: self.n_interior]

    @property
    def ghost_coords(self):
        return self.coords[self.n_interior:]

    def tags(self):
        """Per-unknown tag string, ``interior`` or ``ghost``."""
        out = np.full(self.n_unknowns, "ghost", dtype=object)
        out[: self.n_interior] = "interior"
        return out

    def available(self, k):
        """True where lattice multi-indices ``k`` (shape ``(..., n)``) carry an unknown."""
        k = np.asarray(k)
        inside = np.all((k >= 0) & (k <= 2 * self.K), axis=-1)
        kc = np.clip(k, 0, 2 * self.K)
        res = self.index[tuple(np.moveaxis(kc, -1, 0))] >= 0
        return inside & res

    def lookup(self, k):
        k = np.asarray(k)
        kc = np.clip(k, 0, 2 * self.K)
        idx = self.index[tuple(np.moveaxis(kc, -1, 0))]
        inside = np.all((k >= 0) & (k <= 2 * self.K), axis=-1)
        return np.where(inside, idx, -1)


def build_grid(body: ConvexBody, h: float) -> Grid:
    """Classify lattice nodes and precompute ghost metadata.

    Raises
    ------
    TooCoarse
        If ``h`` exceeds a eighth of the inradius, an axis holds fewer than
        eight interior nodes, or a probe point or its interpolation patch
        leaves the domain.
    """
    n = body.dim
    r_in = body.inradius()
    if h > r_in / 8 * (1 + 1e-12):
        raise TooCoarse(f"h = {h:g} exceeds inradius/8 = {r_in / 8:g}")
    K = int(math.ceil(float(body.extent().max()) / h)) + 3
    side = 2 * K + 1
    lat = np.stack(np.meshgrid(*([np.arange(side)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    X = (lat - K) * h
    d_all = signed_distance(body, X).d
    shape = (side,) * n
    inner = (d_all > 0).reshape(shape)

    offs = stencil_offsets(n)
    near = np.zeros(shape, dtype=bool)
    pad = np.pad(inner, 1)
    for o in offs:
        sl = tuple(slice(1 + c, 1 + c + side) for c in o)
        near |= pad[sl]
    ghost = near & ~inner

    tag = np.zeros(shape, dtype=np.int8)
    tag[inner] = INTERIOR
    tag[ghost] = GHOST
    int_nodes = np.argwhere(inner)
    gh_nodes = np.argwhere(ghost)
    nodes = np.concatenate([int_nodes, gh_nodes], axis=0)
    index = np.full(shape, -1, dtype=np.int64)
    index[tuple(nodes.T)] = np.arange(nodes.shape[0])

    for ax in range(n):
        if np.unique(int_nodes[:, ax]).size < MIN_NODES_PER_AXIS:
            raise TooCoarse(f"fewer than {MIN_NODES_PER_AXIS} interior nodes along axis {ax}")

    X_int = (int_nodes - K) * h
    X_gh = (gh_nodes - K) * h
    dist_int = signed_distance(body, X_int)
    dist_gh = signed_distance(body, X_gh)
    if np.any(-dist_gh.d > GHOST_BAND * h * (1 + 1e-12)):
        raise TooCoarse("ghost node farther than 1.5 h from the boundary")
    probes = np.stack([dist_gh.foot - (k + 1) * h * dist_gh.nu for k in range(3)])
    d_probe = signed_distance(body, probes.reshape(-1, n)).d
    if np.any(d_probe <= 0):
        raise TooCoarse("a probe point lies outside the domain")

    grid = Grid(body, h, n, K, tag, index, nodes, int_nodes.shape[0], dist_int,
                GhostData(dist_gh, dist_gh.d, probes))
    # fails with TooCoarse if some probe has no admissible quadratic patch
    patch_weights(grid, probes.reshape(-1, n))
    return grid


def _as_values(grid, u):
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if u.shape != (grid.n_unknowns,):
        raise ValueError(f"field has shape {u.shape}, expected ({grid.n_unknowns},)")
    if not np.all(np.isfinite(u)):
        raise NonFiniteField("field contains NaN or Inf")
    return u


@dataclass
class Field:
    """Values at the unknowns of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.grid, self.values)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray(fn(grid.coords), dtype=float))


# --------------------------------------------------------------------------
# finite differences


@dataclass
class Stencil:
    """Neighbour table of the interior nodes.

    ``axis[a]`` holds the ``(minus, plus)`` neighbours along axis ``a``;
    ``cross[(a, b)]`` the ``(++, +-, -+, --)`` corners in the ``a,b`` plane.
    """

    axis: dict
    cross: dict


def stencil(grid: Grid) -> Stencil:
    if getattr(grid, "_stencil", None) is not None:
        return grid._stencil
    n = grid.dim
    k = grid.nodes[: grid.n_interior]
    eye = np.eye(n, dtype=int)
    axis = {a: (grid.lookup(k - eye[a]), grid.lookup(k + eye[a])) for a in range(n)}
    cross = {}
    for a, b in itertools.combinations(range(n), 2):
        ea, eb = eye[a], eye[b]
        cross[(a, b)] = tuple(grid.lookup(k + sa * ea + sb * eb)
                              for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)))
    for arr in list(axis.values()) + list(cross.values()):
        for v in arr:
            if np.any(v < 0):
                raise TooCoarse("interior stencil reaches an exterior node")
    grid._stencil = Stencil(axis, cross)
    return grid._stencil


def hessians(grid: Grid, u) -> np.ndarray:
    """Central-difference Hessians at all interior nodes, shape ``(m, n, n)``."""
    u = _as_values(grid, u)
    st = stencil(grid)
    h2 = grid.h**2
    m = grid.n_interior
    c = u[:m]
    H = np.empty((m, grid.dim, grid.dim))
    for a, (mi, pl) in st.axis.items():
        H[:, a, a] = (u[pl] - 2.0 * c + u[mi]) / h2
    for (a, b), (pp, pm, mp, mm) in st.cross.items():
        H[:, a, b] = H[:, b, a] = (u[pp] - u[pm] - u[mp] + u[mm]) / (4.0 * h2)
    return H


def hessian_at(grid: Grid, u, node: int) -> np.ndarray:
    """Hessian at interior unknown ``node``."""
    if not 0 <= node < grid.n_interior:
        raise ValueError("node must be an interior unknown")
    return hessians(grid, u)[node]


def gradients(grid: Grid, u) -> np.ndarray:
    u = _as_values(grid, u)
    st = stencil(grid)
    G = np.empty((grid.n_interior, grid.dim))
    for a, (mi, pl) in st.axis.items():
        G[:, a] = (u[pl] - u[mi]) / (2.0 * grid.h)
    return G


def gradient_at(grid: Grid, u, node: int) -> np.ndarray:
    if not 0 <= node < grid.n_interior:
        raise ValueError("node must be an interior unknown")
    return gradients(grid, u)[node]


# --------------------------------------------------------------------------
# interpolation


def _corner_table(n, width):
    return np.array(list(itertools.product(range(width), repeat=n)), dtype=int)


def linear_weights(grid: Grid, X, strict=True):
    """Multilinear interpolation operator, a sparse ``(m, N)`` matrix.

    With ``strict=False`` points whose cell is incomplete get an empty row
    and are flagged in the returned mask instead of raising.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = grid.dim
    s = X / grid.h + grid.K
    base = np.floor(s).astype(int)
    frac = s - base
    corners = _corner_table(n, 2)
    rows, cols, vals = [], [], []
    ok = np.ones(X.shape[0], dtype=bool)
    idx_all = []
    w_all = []
    for c in corners:
        idx = grid.lookup(base + c)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        # corners with zero weight need not exist (points on cell faces)
        ok &= (idx >= 0) | (w == 0.0)
        idx_all.append(idx)
        w_all.append(w)
    if strict and not ok.all():
        raise OutsideInterpolationDomain("point outside the interpolation domain")
    for idx, w in zip(idx_all, w_all):
        keep = ok & (idx >= 0) & (w != 0.0)
        rows.append(np.flatnonzero(keep))
        cols.append(idx[keep])
        vals.append(w[keep])
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(X.shape[0], grid.n_unknowns))
    return W, ok


def interpolate(grid: Grid, u, x):
    """Multilinear interpolation of ``u`` at point(s) ``x``."""
    u = _as_values(grid, u)
    x = np.asarray(x, dtype=float)
    W, _ = linear_weights(grid, x.reshape(-1, grid.dim))
    out = W @ u
    return out[0] if x.ndim == 1 else out


def _lagrange3(t):
    """Quadratic Lagrange weights on nodes 0, 1, 2 at local coordinate ``t``."""
    return np.stack([(t - 1) * (t - 2) / 2, -t * (t - 2), t * (t - 1) / 2], axis=-1)


def patch_weights(grid: Grid, X):
    """Tensor-product quadratic interpolation on a ``3^n`` node patch.

    The patch is centred on the nearest node and shifted by at most one
    cell per axis when needed so that every patch node carries an unknown.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    s = X / grid.h + grid.K
    centre = np.rint(s).astype(int)
    corners = _corner_table(n, 3)
    shifts = sorted(itertools.product((0, -1, 1), repeat=n), key=lambda o: sum(map(abs, o)))
    start = np.full((m, n), -1)
    found = np.zeros(m, dtype=bool)
    for o in shifts:
        todo = ~found
        if not todo.any():
            break
        st = centre[todo] - 1 + np.array(o)
        ok = np.all(grid.available(st[:, None, :] + corners[None]), axis=1)
        ids = np.flatnonzero(todo)[ok]
        start[ids] = st[ok]
        found[ids] = True
    if not found.all():
        raise TooCoarse("no complete quadratic patch around a probe point")
    local = s - start
    w1 = _lagrange3(local)  # (m, n, 3)
    rows = np.repeat(np.arange(m), corners.shape[0])
    nodes = (start[:, None, :] + corners[None]).reshape(-1, n)
    cols = grid.lookup(nodes)
    w = np.ones((m, corners.shape[0]))
    for a in range(n):
        w = w * w1[:, a, :][:, corners[:, a]]
    return sp.csr_matrix((w.ravel(), (rows, cols)), shape=(m, grid.n_unknowns))


def extend_lattice(grid: Grid, u, layers=4):
    """Lattice array of ``u`` extended outward by quadratic extrapolation.

    Each pass fills the unset nodes that have three set predecessors along
    some axis direction with ``3u_1 - 3u_2 + u_3`` (exact for quadratics),
    averaging over directions.  Nodes still unset are NaN.
    """
    u = _as_values(grid, u)
    n, side = grid.dim, 2 * grid.K + 1
    A = np.full((side,) * n, np.nan)
    A[tuple(grid.nodes.T)] = u
    for _ in range(layers):
        acc = np.zeros_like(A)
        cnt = np.zeros(A.shape)
        for ax in range(n):
            for sgn in (1, -1):
                s1, s2, s3 = (np.roll(A, sgn * k, axis=ax) for k in (1, 2, 3))
                est = 3 * s1 - 3 * s2 + s3
                # np.roll wraps around; discard the wrapped slabs
                edge = [slice(None)] * n
                edge[ax] = slice(0, 3) if sgn == 1 else slice(side - 3, side)
                est[tuple(edge)] = np.nan
                ok = np.isnan(A) & np.isfinite(est)
                acc[ok] += est[ok]
                cnt[ok] += 1
        new = cnt > 0
        if not new.any():
            break
        A[new] = acc[new] / cnt[new]
    return A


def transfer(old: Grid, u_old, new: Grid) -> np.ndarray:
    """Carry a field to another grid with the same spacing.

    Nodes of the new grid outside the old one take values extrapolated
    quadratically from the old field; any node beyond reach of the
    extrapolation falls back to the nearest old node.
    """
    from scipy.spatial import cKDTree

    u_old = _as_values(old, u_old)
    if abs(old.h - new.h) > 1e-14 * old.h:
        W, ok = linear_weights(old, new.coords, strict=False)
        out = W @ u_old
    else:
        A = extend_lattice(old, u_old)
        k = new.nodes - new.K + old.K
        side = 2 * old.K + 1
        inside = np.all((k >= 0) & (k < side), axis=1)
        out = np.full(new.n_unknowns, np.nan)
        out[inside] = A[tuple(k[inside].T)]
        ok = np.isfinite(out)
    if not ok.all():
        tree = cKDTree(old.coords)
        _, j = tree.query(new.coords[~ok])
        out[~ok] = u_old[j]
    return out
