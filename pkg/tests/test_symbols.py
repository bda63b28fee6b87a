"""Moyal calculus against closed forms: plane waves, polynomials, associativity."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diracsc.errors import InsufficientDerivativeOrder
from diracsc.jets import Jet
from diracsc.model import ALPHA, BETA, I4, SIGMA
from diracsc.symbols import (MatrixSymbol, constant_symbol, matrix_poisson_bracket, moyal_commutator,
                             star_product)

xs = MatrixSymbol(lambda X, P: X[0], name="x")
ps = MatrixSymbol(lambda X, P: P[0], name="p")


def wave(k, q, axis=0):
    return MatrixSymbol(lambda X, P: np.exp(1j * (k * X[axis] + q * P[axis])), name="wave")


def test_canonical_pair():
    x, p, h = np.array([0.3, 0.0, 0.0]), np.array([-1.1, 0.0, 0.0]), 0.07
    xp = star_product(xs, ps).evaluate(x, p, h)
    px = star_product(ps, xs).evaluate(x, p, h)
    assert xp == pytest.approx(0.3 * -1.1 + 0.5j * h, abs=1e-15)
    assert px == pytest.approx(0.3 * -1.1 - 0.5j * h, abs=1e-15)
    # (i/hbar)[p, x]_# = 1 exactly
    c = moyal_commutator(ps, xs, order=1)
    assert c.coefficient(0).evaluate(x, p) == pytest.approx(1.0, abs=1e-15)
    assert abs(c.coefficient(-1).evaluate(x, p)) < 1e-15


@given(k=st.floats(-2, 2), q=st.floats(-2, 2), x=st.floats(-3, 3), p=st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_plane_wave_product(k, q, x, p):
    # e^{ikx} # e^{iqp} = e^{i(kx+qp)} e^{-i hbar k q / 2}; compare each hbar power
    a = MatrixSymbol(lambda X, P: np.exp(1j * k * X[0]))
    b = MatrixSymbol(lambda X, P: np.exp(1j * q * P[0]))
    ab = star_product(a, b, order=4)
    x3, p3 = np.array([x, 0, 0]), np.array([p, 0, 0])
    base = np.exp(1j * (k * x + q * p))
    for n in range(5):
        expect = base * (-0.5j * k * q) ** n / np.prod(range(1, n + 1))
        assert ab.coefficient(n).evaluate(x3, p3) == pytest.approx(expect, abs=1e-12)


def test_associativity_matrix_symbols():
    a = MatrixSymbol(lambda X, P: np.cos(X[0]) * ALPHA[0] + P[1] * P[0] * BETA)
    b = MatrixSymbol(lambda X, P: np.sin(X[1] + P[0]) * ALPHA[1] + X[2] * I4)
    c = MatrixSymbol(lambda X, P: np.exp(0.3 * P[2]) * ALPHA[2] + X[0] * P[1] * ALPHA[0])
    x, p = np.array([0.2, -0.4, 0.9]), np.array([0.5, 0.1, -0.3])
    left = star_product(star_product(a, b, 3), c, 3)
    right = star_product(a, star_product(b, c, 3), 3)
    for n in range(4):
        assert np.abs(left.coefficient(n).evaluate(x, p) - right.coefficient(n).evaluate(x, p)).max() < 1e-12


def test_matrix_poisson_bracket():
    a = MatrixSymbol(lambda X, P: X[0] * ALPHA[0])
    b = MatrixSymbol(lambda X, P: P[0] * BETA)
    x, p = np.zeros(3), np.zeros(3)
    # {B,C} = d_p B d_x C - d_x B d_p C
    assert np.allclose(matrix_poisson_bracket(a, b).evaluate(x, p), -ALPHA[0] @ BETA)
    assert np.allclose(matrix_poisson_bracket(b, a).evaluate(x, p), BETA @ ALPHA[0])


def test_derivative_oracle():
    s = MatrixSymbol(lambda X, P: np.sin(X[0]) * P[1] ** 2)
    x, p = np.array([0.4, 0, 0]), np.array([0, 1.5, 0])
    assert s.derivative(x, p, (1, 0, 0), (0, 2, 0)) == pytest.approx(2 * np.cos(0.4))
    assert s.derivative(x, p, (3, 0, 0)) == pytest.approx(-np.cos(0.4) * 1.5 ** 2)


def test_insufficient_order():
    s = MatrixSymbol(lambda X, P: X[0] * P[0], max_order=1)
    with pytest.raises(InsufficientDerivativeOrder):
        star_product(s, s, order=2)
    with pytest.raises(InsufficientDerivativeOrder):
        star_product(xs, ps, order=9)


def test_constant_symbol_is_central():
    c = constant_symbol(SIGMA[0].real + 0j)
    x, p = np.array([1.0, 2.0, 3.0]), np.array([0.1, 0.2, 0.3])
    cx = star_product(c, xs, 2)
    assert np.abs(cx.coefficient(1).evaluate(x, p)).max() == 0


def test_jet_algebra():
    X = Jet.variable(0.7, 0, 2, 4)
    Y = Jet.variable(-0.2, 1, 2, 4)
    f = np.exp(X) * np.sin(Y) / (1 + X * X)
    # d/dx at (0.7, -0.2)
    e = np.exp(0.7) * np.sin(-0.2)
    dfdx = e / (1 + 0.49) - e * 1.4 / (1 + 0.49) ** 2
    assert f.partial((1, 0)) == pytest.approx(dfdx, rel=1e-13)
    assert f.partial((0, 3)) == pytest.approx(np.exp(0.7) * -np.cos(-0.2) / 1.49, rel=1e-13)
