"""Shared oracles and fixtures.

The oracles here are deliberately independent of the package's closed-form
paths: adaptive quadrature (scipy QUADPACK, abs tol 1e-13) for integrals and
averages, and bisection for grid-line/circle intersections.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad


QUAD_TOL = 1e-13


def oracle_integral(fn, a: float, b: float) -> float:
    """Adaptive (Gauss-Kronrod) integral of fn over [a, b]."""
    val, _err = quad(fn, a, b, epsabs=QUAD_TOL, epsrel=1e-13, limit=400)
    return val


def oracle_average(fn, a: float, b: float) -> float:
    return oracle_integral(fn, a, b) / (b - a)


def bisect_root(fn, a: float, b: float, tol: float = 1e-14) -> float:
    """Bisection root of fn on [a, b]; fn(a) and fn(b) must bracket."""
    fa, fb = fn(a), fn(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    assert fa * fb < 0.0, "root not bracketed"
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0:
            return m
        if fa * fm < 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


# Manufactured fields: phi(x, y), dphi/dx, dphi/dy, and an x-antiderivative
# (for exact inner integrals of cell averages).
class Field:
    def __init__(self, name, f, fx, fy, ix):
        self.name = name
        self.f = f
        self.fx = fx
        self.fy = fy
        self.ix = ix  # Ix(x, y) with d(Ix)/dx = f

    def __repr__(self):
        return f"Field({self.name})"


MANUFACTURED = [
    Field("one", lambda x, y: np.ones_like(np.asarray(x, float) + np.asarray(y, float)),
          lambda x, y: 0.0 * np.asarray(x, float), lambda x, y: 0.0 * np.asarray(x, float),
          lambda x, y: np.asarray(x, float)),
    Field("x", lambda x, y: np.asarray(x, float) + 0.0 * np.asarray(y, float),
          lambda x, y: np.ones_like(np.asarray(x, float)), lambda x, y: 0.0 * np.asarray(x, float),
          lambda x, y: 0.5 * np.asarray(x, float) ** 2),
    Field("y", lambda x, y: np.asarray(y, float) + 0.0 * np.asarray(x, float),
          lambda x, y: 0.0 * np.asarray(x, float), lambda x, y: np.ones_like(np.asarray(x, float)),
          lambda x, y: np.asarray(x, float) * np.asarray(y, float)),
    Field("x2", lambda x, y: np.asarray(x, float) ** 2 + 0.0 * np.asarray(y, float),
          lambda x, y: 2.0 * np.asarray(x, float), lambda x, y: 0.0 * np.asarray(x, float),
          lambda x, y: np.asarray(x, float) ** 3 / 3.0),
    Field("xy", lambda x, y: np.asarray(x, float) * np.asarray(y, float),
          lambda x, y: np.asarray(y, float) + 0.0 * np.asarray(x, float),
          lambda x, y: np.asarray(x, float) + 0.0 * np.asarray(y, float),
          lambda x, y: 0.5 * np.asarray(x, float) ** 2 * np.asarray(y, float)),
    Field("y2", lambda x, y: np.asarray(y, float) ** 2 + 0.0 * np.asarray(x, float),
          lambda x, y: 0.0 * np.asarray(x, float), lambda x, y: 2.0 * np.asarray(y, float),
          lambda x, y: np.asarray(x, float) * np.asarray(y, float) ** 2),
    Field("sincos", lambda x, y: np.sin(np.asarray(x, float)) * np.cos(np.asarray(y, float)),
          lambda x, y: np.cos(np.asarray(x, float)) * np.cos(np.asarray(y, float)),
          lambda x, y: -np.sin(np.asarray(x, float)) * np.sin(np.asarray(y, float)),
          lambda x, y: -np.cos(np.asarray(x, float)) * np.cos(np.asarray(y, float))),
]


@pytest.fixture(scope="session")
def mesh20():
    from cutcavity.mesh import build_semicircle_mesh

    return build_semicircle_mesh(1.0, 20)


@pytest.fixture(scope="session")
def mesh40():
    from cutcavity.mesh import build_semicircle_mesh

    return build_semicircle_mesh(1.0, 40)
