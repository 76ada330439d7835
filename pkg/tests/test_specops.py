import math

import numpy as np
import pytest

from slagneumann import specops
from slagneumann.errors import NonpositiveF, NotMeanZero, NotSymmetric, PhaseViolated
from slagneumann.specops import Spectrum, eig_sym, phase_classify

LEVEL = np.array([2.0, 1.0, -1.0 / 3.0])  # sum of arctans is pi/2


def spec(lam):
    lam = np.asarray(lam, dtype=float)
    return Spectrum(lam, np.eye(lam.size))


def rotation(seed, n=3):
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, n)))
    return q * np.sign(np.diag(r))


# eig_sym -------------------------------------------------------------------


def test_eig_diagonal():
    sp = eig_sym(np.diag(LEVEL))
    assert np.allclose(sp.lam, LEVEL)
    assert np.allclose(sp.frame, np.eye(3))


def test_eig_swap_matrix():
    sp = eig_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(sp.lam, [1, -1])
    s = 1 / math.sqrt(2)
    assert np.allclose(sp.frame, [[s, s], [s, -s]])


def test_eig_round_trip():
    Q = rotation(0)
    M = Q @ np.diag([3.0, 0.5, -0.2]) @ Q.T
    sp = eig_sym(M)
    assert np.allclose(sp.lam, [3.0, 0.5, -0.2], atol=1e-10)
    assert np.allclose(sp.frame.T @ sp.frame, np.eye(3), atol=1e-12)
    assert np.allclose(sp.matrix(), M, atol=1e-10)


def test_eig_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eig_sign_convention():
    sp = eig_sym(-np.eye(3) + 0.1 * np.ones((3, 3)))
    Q = sp.frame
    for j in range(3):
        col = Q[:, j]
        first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        assert first > 0


# theta_value and gradients ---------------------------------------------------


def test_theta_examples():
    assert specops.theta_value(spec([1, 1]), 1.0) == pytest.approx(math.pi / 2)
    assert specops.theta_value(spec(LEVEL), 1.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert specops.theta_value(spec([0, 0, 0]), 1.0) == 0.0


def test_nonpositive_f():
    with pytest.raises(NonpositiveF):
        specops.theta_value(spec([1, 1]), 0.0)
    with pytest.raises(NonpositiveF):
        specops.gradient_eig(spec([1, 1]), -1.0)


def test_gradient_eig_examples():
    g, tr = specops.gradient_eig(spec(LEVEL), 1.0)
    assert np.allclose(g, [0.2, 0.5, 0.9])
    assert tr == pytest.approx(1.6)
    g, tr = specops.gradient_eig(spec([0, 0, 0]), 2.0)
    assert np.allclose(g, 0.5) and tr == pytest.approx(1.5)


def test_gradient_eig_matches_finite_differences():
    rng = np.random.default_rng(1)
    A = rng.uniform(-3, 3, (3, 3))
    M = (A + A.T) / 2
    sp = eig_sym(M)
    G = specops.gradient_ambient(sp, 1.0)
    h = 1e-5
    for i in range(3):
        E = np.zeros((3, 3))
        E[i, i] = 1
        fd = (specops.theta_value(eig_sym(M + h * E), 1.0)
              - specops.theta_value(eig_sym(M - h * E), 1.0)) / (2 * h)
        assert fd == pytest.approx(G[i, i], abs=1e-6)


def test_gradient_ambient_examples():
    assert np.allclose(specops.gradient_ambient(spec(LEVEL), 1.0), np.diag([0.2, 0.5, 0.9]))
    sp = eig_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(specops.gradient_ambient(sp, 1.0), np.eye(2) / 2)


def test_gradient_ambient_repeated_eigenvalues():
    sp = eig_sym(np.eye(3))
    assert np.allclose(specops.gradient_ambient(sp, 1.0), np.eye(3) / 2)


# hessian_pairs ----------------------------------------------------------------


def test_hessian_pair_examples():
    H = specops.hessian_pairs(spec(LEVEL), 1.0)
    assert H.diag[0] == pytest.approx(-0.16)
    assert H.pair[0, 1] == pytest.approx(-0.3)
    H = specops.hessian_pairs(spec([1.0, 1.0]), 1.0)
    assert H.pair[0, 1] == pytest.approx(-0.5)
    assert H.pair[0, 1] == pytest.approx(H.diag[0])


def test_hessian_near_degenerate_uses_limit():
    lam = np.array([1.0 + 1e-9, 1.0])
    H = specops.hessian_pairs(spec(lam), 1.0)
    assert H.pair[0, 1] == H.diag[0]


def test_second_directional_matches_second_differences():
    rng = np.random.default_rng(2)
    A = rng.uniform(-3, 3, (3, 3))
    M = (A + A.T) / 2
    B = rng.uniform(-3, 3, (3, 3))
    S = (B + B.T) / 2
    sp = eig_sym(M)
    F = lambda t: float(specops.theta_value(eig_sym(M + t * S), 1.0))
    h = 1e-3
    fd = (F(h) - 2 * F(0) + F(-h)) / h**2
    exact = float(specops.second_directional(sp, 1.0, S))
    assert fd == pytest.approx(exact, rel=1e-3, abs=1e-5)


def test_evaluate_bundle():
    ev = specops.evaluate(np.diag(LEVEL), 1.0)
    assert ev.value == pytest.approx(math.pi / 2)
    assert np.all(ev.grad_eig > 0) and np.all(ev.grad_eig <= 1.0)
    assert ev.trace_F == pytest.approx(1.6)


# phase -------------------------------------------------------------------------


def test_phase_examples():
    ph = phase_classify(math.pi / 2, 3)
    assert ph.cls == "critical" and ph.delta == 0.0
    ph = phase_classify(math.pi / 2, 2)
    assert ph.cls == "supercritical" and ph.delta == pytest.approx(math.pi / 2)
    assert phase_classify(3 * math.pi / 2, 3).cls == "invalid"
    assert phase_classify(-0.1, 2).cls == "invalid"


# structural lemmas -------------------------------------------------------------


def test_lemma_props_level_point():
    props = specops.lemma_spectrum_props(spec(LEVEL), 1.0, phase_classify(math.pi / 2, 3))
    assert props.prop1 and props.prop2 and props.prop3 is None
    assert np.sum(1 / LEVEL) == pytest.approx(-1.5)


def test_lemma_props_positive_pair():
    props = specops.lemma_spectrum_props(spec([1.0, 1.0]), 1.0, phase_classify(math.pi / 2, 2))
    assert props.all_true


def test_lemma_props_rejects_subcritical():
    with pytest.raises(PhaseViolated):
        specops.lemma_spectrum_props(spec([-1.0, -1.0, -1.0]), 1.0, phase_classify(math.pi / 2, 3))


def test_lemma_prop3_bound():
    delta = 0.2
    bound = -1.0 / math.tan(delta)
    assert bound == pytest.approx(-4.933154875586894)  # frozen: -cot(0.2)
    # a level-set point with theta_3 at its lowest: theta_1 = theta_2 = pi/2 - small
    th = np.array([math.pi / 2 - 1e-3, math.pi / 2 - 1e-3])
    th3 = math.pi / 2 + delta - th.sum()
    lam = np.sort(np.tan(np.append(th, th3)))[::-1]
    props = specops.lemma_spectrum_props(spec(lam), 1.0, phase_classify(math.pi / 2 + delta, 3))
    assert props.prop3 and lam[-1] >= bound


def test_wy_examples():
    assert specops.wy_value(spec(LEVEL), 1.0) == pytest.approx(0.6)
    assert specops.wy_value(spec([1.0, 1.0]), 1.0) == pytest.approx(1.0)
    for t in (0.3, 2.0, 17.0):
        assert specops.wy_value(spec([t, -t]), 1.0) == pytest.approx(0.0, abs=1e-15)


def test_mean_zero_quadratic_examples():
    sp = spec(LEVEL)
    assert specops.mean_zero_quadratic(sp, np.array([1.0, 1.0, -2.0])) == pytest.approx(5 / 3)
    assert specops.mean_zero_quadratic(sp, np.array([1.0, -1.0, 0.0])) == pytest.approx(3.0)
    assert specops.mean_zero_quadratic(sp, np.zeros(3)) == 0.0


def test_mean_zero_quadratic_errors():
    with pytest.raises(NotMeanZero):
        specops.mean_zero_quadratic(spec(LEVEL), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(PhaseViolated):
        specops.mean_zero_quadratic(spec([1.0, -2.0, -2.0]), np.array([1.0, -1.0, 0.0]))
    with pytest.raises(PhaseViolated):
        specops.mean_zero_quadratic(spec([1.0, 1.0, -3.0]), np.array([1.0, -1.0, 0.0]), f=1.0)
