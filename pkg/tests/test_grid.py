import math

import numpy as np
import pytest

from slagneumann.errors import NonFiniteField, OutsideInterpolationDomain, TooCoarse
from slagneumann.geometry import make_domain, signed_distance
from slagneumann.grid import (GHOST, GHOST_BAND, INTERIOR, Field, build_grid, gradient_at,
                              gradients, hessian_at, hessians, interpolate, patch_weights,
                              stencil, transfer)

DISK = make_domain({"kind": "ball", "dim": 2})
ELLIPSE = make_domain({"kind": "ellipsoid", "axes": [1.2, 0.8]})


@pytest.fixture(scope="module")
def disk32():
    return build_grid(DISK, 1 / 32)


def node_of(grid, x):
    k = np.rint(np.asarray(x) / grid.h).astype(int) + grid.K
    return int(grid.lookup(k[None])[0])


def test_area_consistency(disk32):
    expected = math.pi * 32**2
    assert expected == pytest.approx(3216.99, abs=0.01)  # frozen: pi / h^2
    assert abs(disk32.n_interior - expected) <= 0.03 * expected


def test_too_coarse():
    with pytest.raises(TooCoarse):
        build_grid(DISK, 0.4)


def test_classification_examples(disk32):
    i0 = node_of(disk32, [0.0, 0.0])
    assert 0 <= i0 < disk32.n_interior
    # (1, 0) lies on the circle, is not interior, and neighbours an interior node
    ig = node_of(disk32, [1.0, 0.0])
    assert ig >= disk32.n_interior
    foot = disk32.ghosts.dist.foot[ig - disk32.n_interior]
    assert np.allclose(foot, [1.0, 0.0], atol=1e-12)
    assert node_of(disk32, [1.03125 + 1 / 32, 0.0]) == -1


def test_grid_invariants(disk32):
    g = disk32
    st = stencil(g)
    m = g.n_interior
    for a in range(g.dim):
        for side in st.axis[a]:
            assert np.all((side >= 0) & (side < g.n_unknowns))
    for corners in st.cross.values():
        for c in corners:
            assert np.all((c >= 0) & (c < g.n_unknowns))
    assert np.all(-g.ghosts.dist.d <= GHOST_BAND * g.h + 1e-12)
    probes = g.ghosts.probes[:2].reshape(-1, 2)
    assert np.all(signed_distance(DISK, probes).d > 0)
    assert np.allclose(g.ghosts.probes[0], g.ghosts.dist.foot - g.h * g.ghosts.dist.nu)
    tags = g.tag[tuple(g.nodes.T)]
    assert np.all(tags[:m] == INTERIOR) and np.all(tags[m:] == GHOST)


def test_hessian_exact_on_quadratics(disk32):
    u = Field.from_function(disk32, lambda X: X[:, 0] ** 2)
    i = node_of(disk32, [0.25, -0.5])
    assert np.allclose(hessian_at(disk32, u, i), [[2, 0], [0, 0]], atol=1e-10)
    u = Field.from_function(disk32, lambda X: X[:, 0] * X[:, 1])
    assert hessian_at(disk32, u, i)[0, 1] == pytest.approx(1.0, abs=1e-10)
    q = lambda X: 0.3 * X[:, 0] ** 2 - 1.1 * X[:, 0] * X[:, 1] + 0.7 * X[:, 1] ** 2 + X[:, 0] - 2
    H = hessians(disk32, Field.from_function(disk32, q))
    assert np.allclose(H, [[0.6, -1.1], [-1.1, 1.4]], atol=1e-9)


def test_hessian_quartic_example():
    g = build_grid(DISK, 1 / 64)
    u = Field.from_function(g, lambda X: X[:, 0] ** 4)
    i = node_of(g, [0.5, 0.0])
    assert abs(hessian_at(g, u, i)[0, 0] - 3.0) <= 1e-2


def test_gradient_examples(disk32):
    i = node_of(disk32, [0.25, 0.125])
    u = Field.from_function(disk32, lambda X: X[:, 0])
    assert np.allclose(gradient_at(disk32, u, i), [1, 0], atol=1e-12)
    q = lambda X: X[:, 0] ** 2 + 3 * X[:, 0] * X[:, 1]
    G = gradients(disk32, Field.from_function(disk32, q))
    X = disk32.interior_coords
    assert np.allclose(G, np.stack([2 * X[:, 0] + 3 * X[:, 1], 3 * X[:, 0]], axis=1), atol=1e-10)


def test_interpolation_examples(disk32):
    h = disk32.h
    c = np.array([0.25 + h / 2, 0.5 + h / 2])
    u = Field.from_function(disk32, lambda X: X[:, 0] + 2 * X[:, 1])
    assert interpolate(disk32, u, c) == pytest.approx(c[0] + 2 * c[1], abs=1e-13)
    u = Field.from_function(disk32, lambda X: X[:, 0] ** 2)
    mid = np.array([0.25 + h / 2, 0.5])
    err = abs(interpolate(disk32, u, mid) - mid[0] ** 2)
    assert err <= h**2 / 4 + 1e-15
    assert h**2 / 4 == pytest.approx(2.44140625e-4)  # frozen


def test_interpolation_outside(disk32):
    u = Field.from_function(disk32, lambda X: X[:, 0])
    with pytest.raises(OutsideInterpolationDomain):
        interpolate(disk32, u, np.array([1.2, 0.0]))


def test_patch_weights_exact_on_quadratics(disk32):
    u = Field.from_function(disk32, lambda X: 1 + X[:, 0] - X[:, 1] ** 2 + 0.5 * X[:, 0] * X[:, 1])
    P = disk32.ghosts.probes.reshape(-1, 2)
    W = patch_weights(disk32, P)
    exact = 1 + P[:, 0] - P[:, 1] ** 2 + 0.5 * P[:, 0] * P[:, 1]
    assert np.allclose(W @ u.values, exact, atol=1e-12)


def test_field_rejects_nan(disk32):
    vals = np.zeros(disk32.n_unknowns)
    vals[3] = np.nan
    with pytest.raises(NonFiniteField):
        Field(disk32, vals)


def test_hessian_refinement_order():
    fn = lambda X: np.sin(X[:, 0]) * np.cos(X[:, 1])
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = build_grid(DISK, h)
        H = hessians(g, Field.from_function(g, fn))
        X = g.interior_coords
        s, c = np.sin(X[:, 0]), np.cos(X[:, 1])
        ex = np.empty_like(H)
        ex[:, 0, 0] = -s * c
        ex[:, 1, 1] = -s * c
        ex[:, 0, 1] = ex[:, 1, 0] = -np.cos(X[:, 0]) * np.sin(X[:, 1])
        errs.append(np.abs(H - ex).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.3), orders


def test_transfer_between_nested_grids():
    inner = build_grid(make_domain({"kind": "ball", "dim": 2, "radius": 0.95}), 1 / 32)
    outer = build_grid(DISK, 1 / 32)
    q = lambda X: 0.5 * X[:, 0] ** 2 - X[:, 0] * X[:, 1] + 0.25
    moved = transfer(inner, q(inner.coords), outer)
    assert np.all(np.isfinite(moved))
    # quadratic extrapolation reproduces quadratics wherever it reaches
    assert np.allclose(moved, q(outer.coords), atol=1e-12)


def test_grid_3d_counts():
    g = build_grid(make_domain({"kind": "ball", "dim": 3}), 1 / 12)
    expected = 4 / 3 * math.pi * 12**3
    assert abs(g.n_interior - expected) <= 0.03 * expected
    assert g.n_ghost > 0


def test_ellipse_grid_builds():
    g = build_grid(ELLIPSE, 1 / 32)
    assert g.n_interior > 0 and g.n_ghost > 0
