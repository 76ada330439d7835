"""Scalar coefficient fields ``f(x)`` and ``phi(x)``.

Three forms are supported: a constant, ``a + b*|x|^2``, and samples on a
regular lattice read from CSV (interpolated multilinearly).  Each field
evaluates values and gradients on batches of points of shape ``(m, n)``.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError


class Coefficient:
    radial = False

    def __call__(self, X):
        raise NotImplementedError

    def grad(self, X):
        raise NotImplementedError

    def profile(self, r):
        """Value as a function of ``|x|`` (radial fields only)."""
        raise TypeError(f"{type(self).__name__} is not radial")

    def scaled(self, t, offset=0.0):
        """The field ``t*self + offset``."""
        return Affine(self, t, offset)

    def is_constant(self):
        return False


@dataclass(frozen=True)
class Const(Coefficient):
    c: float
    radial = True

    def __call__(self, X):
        X = np.atleast_2d(X)
        return np.full(X.shape[0], float(self.c))

    def grad(self, X):
        return np.zeros_like(np.atleast_2d(np.asarray(X, dtype=float)))

    def profile(self, r):
        return np.full(np.shape(r), float(self.c))

    def scaled(self, t, offset=0.0):
        return Const(t * self.c + offset)

    def is_constant(self):
        return True

    def describe(self):
        return f"const {self.c!r}"


@dataclass(frozen=True)
class Quadratic(Coefficient):
    """``a + b*|x|^2``."""

    a: float
    b: float
    radial = True

    def __call__(self, X):
        X = np.atleast_2d(X)
        return self.a + self.b * np.sum(X**2, axis=1)

    def grad(self, X):
        return 2.0 * self.b * np.atleast_2d(np.asarray(X, dtype=float))

    def profile(self, r):
        return self.a + self.b * np.asarray(r, dtype=float) ** 2

    def scaled(self, t, offset=0.0):
        return Quadratic(t * self.a + offset, t * self.b)

    def is_constant(self):
        return self.b == 0

    def describe(self):
        return f"quadratic {self.a!r} + {self.b!r}*r2"


class Sampled(Coefficient):
    """Values on a regular lattice, interpolated multilinearly.

    Parameters
    ----------
    axes : sequence of 1-D arrays
        Sorted lattice coordinates per dimension.
    values : ndarray
        Samples of shape ``tuple(len(a) for a in axes)``.
    """

    def __init__(self, axes, values, source=None):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=float)
        self.source = source
        self._val = RegularGridInterpolator(self.axes, self.values, method="linear")
        grads = np.gradient(self.values, *self.axes) if self.values.ndim > 1 else [
            np.gradient(self.values, self.axes[0])]
        self._grad = [RegularGridInterpolator(self.axes, g, method="linear") for g in grads]

    @classmethod
    def from_csv(cls, path):
        """Read rows ``x, y[, z], value``; the points must fill a lattice."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array([[float(v) for v in r] for r in rows])
        pts, vals = data[:, :-1], data[:, -1]
        axes = [np.unique(pts[:, k]) for k in range(pts.shape[1])]
        shape = tuple(len(a) for a in axes)
        if int(np.prod(shape)) != len(vals):
            raise ConfigError(f"CSV samples in {path} do not form a full lattice")
        grid = np.full(shape, np.nan)
        idx = tuple(np.searchsorted(a, pts[:, k]) for k, a in enumerate(axes))
        grid[idx] = vals
        if np.isnan(grid).any():
            raise ConfigError(f"CSV samples in {path} do not form a full lattice")
        return cls(axes, grid, source=str(path))

    def __call__(self, X):
        return self._val(np.atleast_2d(X))

    def grad(self, X):
        X = np.atleast_2d(X)
        return np.stack([g(X) for g in self._grad], axis=1)

    def describe(self):
        return f"csv {self.source}" if self.source else "sampled"


@dataclass(frozen=True)
class Affine(Coefficient):
    """``t*base + offset``; used along the homotopy."""

    base: Coefficient
    t: float
    offset: float = 0.0

    def __call__(self, X):
        return self.t * self.base(X) + self.offset

    def grad(self, X):
        return self.t * self.base.grad(X)

    @property
    def radial(self):
        return self.base.radial

    def profile(self, r):
        return self.t * self.base.profile(r) + self.offset

    def is_constant(self):
        return self.t == 0 or self.base.is_constant()

    def describe(self):
        return f"{self.t!r}*({self.base.describe()}) + {self.offset!r}"


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUAD = re.compile(rf"^\s*quadratic\s+({_NUM})\s*([-+])\s*({_NUM})\s*\*\s*r2\s*$")
_CONST = re.compile(rf"^\s*const\s+({_NUM})\s*$")
_CSV = re.compile(r"^\s*csv\s+(.+?)\s*$")


def parse_coefficient(spec, key="coefficient", base_dir=None):
    """Build a field from ``const c``, ``quadratic a + b*r2``, ``csv path`` or a number."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Const(float(spec))
    if isinstance(spec, Coefficient):
        return spec
    if not isinstance(spec, str):
        raise ConfigError(f"cannot parse coefficient {spec!r}", key=key)
    m = _CONST.match(spec)
    if m:
        return Const(float(m.group(1)))
    m = _QUAD.match(spec)
    if m:
        b = float(m.group(3)) * (-1.0 if m.group(2) == "-" else 1.0)
        return Quadratic(float(m.group(1)), b)
    m = _CSV.match(spec)
    if m:
        from pathlib import Path

        path = Path(m.group(1))
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"CSV file {path} not found", key=key)
        return Sampled.from_csv(path)
    raise ConfigError(f"cannot parse coefficient {spec!r}", key=key)
