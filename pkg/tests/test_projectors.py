import numpy as np
import pytest

from diracsc.egorov import periodic_grid
from diracsc.errors import ClusterOverlap, EInSpectrum, OrderUnavailable
from diracsc.grid import dirac_operator
from diracsc.model import I4, build_model, free_preset, periodic_preset
from diracsc.projectors import (correct_projector_symbol, measure_defects, op_norm, quantize_and_riesz,
                                riesz_flatten, spectral_projector)
from diracsc.symbols import star_product

PER = build_model(periodic_preset())
X0, P0 = np.array([0.4, 0.0, 0.0]), np.array([0.7, 0.0, 0.0])


@pytest.mark.parametrize("order", [1, 2])
def test_symbol_level_defects_vanish(order):
    """hbar^k coefficients of Pi#Pi - Pi and H#Pi - Pi#H vanish for k <= order."""
    Pi = correct_projector_symbol(PER, 1, order).expansion
    sq = star_product(Pi, Pi, order)
    HP = star_product(PER.H, Pi, order)
    PH = star_product(Pi, PER.H, order)
    for k in range(order + 1):
        d = sq.coefficient(k).evaluate(X0, P0) - Pi.coefficient(k).evaluate(X0, P0)
        assert np.abs(d).max() < 1e-12
        c = HP.coefficient(k).evaluate(X0, P0) - PH.coefficient(k).evaluate(X0, P0)
        assert np.abs(c).max() < 1e-12


def test_complement_exact_at_symbol_level():
    for order in (1, 2):
        plus = correct_projector_symbol(PER, 1, order).expansion
        minus = correct_projector_symbol(PER, -1, order).expansion
        tot = plus.evaluate(X0, P0, 0.1) + minus.evaluate(X0, P0, 0.1)
        assert np.abs(tot - I4).max() < 1e-14


def test_free_preset_has_no_corrections():
    m = build_model(free_preset())
    Pi = correct_projector_symbol(m, 1, 2).expansion
    assert np.abs(Pi.coefficient(1).evaluate(X0, P0)).max() < 1e-15
    assert np.abs(Pi.coefficient(2).evaluate(X0, P0)).max() < 1e-15


def test_order_limit():
    with pytest.raises(OrderUnavailable):
        correct_projector_symbol(PER, 1, 5)


def test_defects_improve_with_order():
    g = periodic_grid(0.1)
    d0 = measure_defects(PER, 0, g)
    d1 = measure_defects(PER, 1, g)
    assert d1.idem < 0.1 * d0.idem and d1.comm < 0.2 * d0.comm
    assert d1.complement < 1e-12
    assert d1.distance < d0.distance


def test_riesz_and_spectral_projector():
    g = periodic_grid(0.2)
    P = quantize_and_riesz(correct_projector_symbol(PER, 1, 1), g)
    assert np.abs(P.matrix @ P.matrix - P.matrix).max() < 1e-12
    assert P.rank == g.dim // 2
    H = dirac_operator(PER, g, dense=True).matrix
    PE = spectral_projector(H, 0.0, 1)
    assert op_norm(PE - P.matrix) < 0.1
    with pytest.raises(EInSpectrum):
        spectral_projector(H, np.linalg.eigvalsh(H)[0], 1)
    with pytest.raises(ClusterOverlap):
        riesz_flatten(np.diag([0.0, 0.5, 1.0]))


def test_power_iteration_norm():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
    assert op_norm(A, "power", iters=2000) == pytest.approx(op_norm(A), rel=1e-6)
