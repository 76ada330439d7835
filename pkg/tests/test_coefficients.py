import numpy as np
import pytest

from slagneumann.coefficients import Const, Quadratic, Sampled, parse_coefficient
from slagneumann.errors import ConfigError


def test_parse_forms(tmp_path):
    assert isinstance(parse_coefficient("const 1.5"), Const)
    q = parse_coefficient("quadratic 1 + 0.5*r2")
    assert isinstance(q, Quadratic)
    X = np.array([[1.0, 0.0], [0.3, 0.4]])
    assert np.allclose(q(X), [1.5, 1.125])
    assert parse_coefficient(2)(X[:1])[0] == 2.0
    neg = parse_coefficient("quadratic 2 - 0.25*r2")
    assert np.allclose(neg(X), [1.75, 1.9375])


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_coefficient("cubic 1")
    with pytest.raises(ConfigError):
        parse_coefficient("csv missing.csv")
    with pytest.raises(ConfigError):
        parse_coefficient([1, 2])


def test_quadratic_gradient_and_profile():
    q = Quadratic(1.0, 0.5)
    X = np.array([[0.2, -0.6]])
    assert np.allclose(q.grad(X), [[0.2, -0.6]])
    assert q.profile(1.0) == pytest.approx(1.5)
    assert q.radial and Const(3.0).radial


def test_scaled_homotopy_coefficient():
    q = Quadratic(1.0, 0.5)
    X = np.array([[1.0, 0.0]])
    at = q.scaled(0.25, 0.75)
    assert at(X)[0] == pytest.approx(0.25 * 1.5 + 0.75)
    assert at.profile(1.0) == pytest.approx(0.25 * 1.5 + 0.75)


def test_csv_sampled_is_multilinear(tmp_path):
    xs = np.linspace(-1.5, 1.5, 13)
    rows = ["x,y,value"]
    for x in xs:
        for y in xs:
            rows.append(f"{x},{y},{1 + 2 * x - y}")
    path = tmp_path / "f.csv"
    path.write_text("\n".join(rows) + "\n")
    c = parse_coefficient(f"csv {path.name}", base_dir=tmp_path)
    assert isinstance(c, Sampled)
    X = np.array([[0.1, 0.37], [-0.9, 0.8]])
    assert np.allclose(c(X), 1 + 2 * X[:, 0] - X[:, 1])
    assert np.allclose(c.grad(X), [[2, -1], [2, -1]], atol=1e-6)
