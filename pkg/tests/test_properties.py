"""Property tests for the invariants of the spectral layer, grid and sampler."""
import math

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from slagneumann import specops
from slagneumann.geometry import make_domain
from slagneumann.grid import Field, build_grid, hessians, patch_weights
from slagneumann.harness import sample_level_set

GRID = build_grid(make_domain({"kind": "ball", "dim": 2}), 1 / 16)
coef = st.floats(-3, 3, allow_nan=False)


def sym(n):
    return arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False)).map(
        lambda A: 0.5 * (A + A.T))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([2, 3]).flatmap(sym))
def test_eig_round_trip(M):
    sp = specops.eig_sym(M)
    scale = 1.0 + np.abs(M).max()
    assert np.allclose(sp.matrix(), M, atol=1e-10 * scale)
    assert np.allclose(sp.frame.T @ sp.frame, np.eye(M.shape[0]), atol=1e-10)
    assert np.all(np.diff(sp.lam) <= 1e-12 * scale)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([2, 3]).flatmap(lambda n: st.tuples(sym(n), sym(n))), st.floats(0.2, 5.0))
def test_gradient_matches_finite_differences(MS, f):
    M, S = MS
    t = 1e-6
    fd = (specops.evaluate(M + t * S, f).value - specops.evaluate(M - t * S, f).value) / (2 * t)
    g = specops.gradient_ambient(specops.eig_sym(M), f)
    assert abs(fd - np.sum(g * S)) <= 1e-6 * (1 + np.abs(S).max())


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([2, 3]).flatmap(sym), st.floats(0.1, 10.0))
def test_theta_in_open_range(M, f):
    n = M.shape[0]
    v = specops.evaluate(M, f).value
    assert -n * math.pi / 2 < v < n * math.pi / 2


@given(st.sampled_from([2, 3]), st.floats(-5, 5, allow_nan=False))
def test_phase_classification(n, theta):
    ph = specops.phase_classify(theta, n)
    lo, hi = (n - 2) * math.pi / 2, n * math.pi / 2
    if ph.cls == "supercritical":
        assert lo < theta < hi
    elif ph.cls == "critical":
        assert abs(theta - lo) <= 1e-12
    else:
        assert theta < lo or theta >= hi


@settings(max_examples=50, deadline=None)
@given(coef, coef, coef, coef, coef, coef)
def test_grid_derivatives_exact_on_quadratics(a, b, c, d, e, k):
    u = Field.from_function(GRID, lambda X: a * X[:, 0] ** 2 + b * X[:, 0] * X[:, 1]
                            + c * X[:, 1] ** 2 + d * X[:, 0] + e * X[:, 1] + k)
    H = hessians(GRID, u)
    assert np.allclose(H, [[2 * a, b], [b, 2 * c]], atol=1e-8)
    P = GRID.ghosts.probes[1]
    exact = (a * P[:, 0] ** 2 + b * P[:, 0] * P[:, 1] + c * P[:, 1] ** 2 + d * P[:, 0]
             + e * P[:, 1] + k)
    assert np.allclose(patch_weights(GRID, P) @ u.values, exact, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([2, 3]), st.floats(0.05, 0.95), st.floats(0.2, 5.0),
       st.integers(0, 2**32 - 1))
def test_sampler_lands_on_level_set(n, frac, f, seed):
    lo, hi = (n - 2) * math.pi / 2, n * math.pi / 2
    theta = lo + frac * (hi - lo)
    sp = sample_level_set(n, theta, f, count=20, seed=seed)
    assert sp.lam.shape == (20, n)
    assert np.allclose(specops.theta_value(sp, f), theta, atol=1e-10)
    props = specops.lemma_spectrum_props(sp, f, specops.phase_classify(theta, n))
    assert props.all_true
