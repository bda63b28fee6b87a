import numpy as np
import pytest

from diracsc.errors import BoundaryMarginViolation, NotFreePreset, NyquistViolation
from diracsc.grid import (QuantumGrid, dirac_operator, evolve_series, free_projectors, gaussian_packet,
                          interference_term, position_operator, propagate, projected_position, weyl_expectation,
                          weyl_matrix, weyl_quantize, wigner_measure, wigner_transform, zitterbewegung_trace)
from diracsc.model import I4, build_model, free_preset, periodic_preset
from diracsc.symbols import MatrixSymbol

FREE = build_model(free_preset())
PER = build_model(periodic_preset())


def test_free_lattice_spectrum():
    g = QuantumGrid(32, 8.0, 0.5)
    w = np.linalg.eigvalsh(weyl_quantize(FREE.H, g).matrix)
    e = np.sqrt(g.momenta()[:, 0] ** 2 + 1)
    assert np.abs(np.sort(w) - np.sort(np.r_[e, e, -e, -e])).max() < 1e-12


def test_split_operator_matches_dense_weyl_free():
    g = QuantumGrid(32, 8.0, 0.5)
    assert np.abs(dirac_operator(FREE, g).dense() - weyl_quantize(FREE.H, g).matrix).max() < 1e-12


def test_fft_round_trip_and_norm():
    rng = np.random.default_rng(0)
    g = QuantumGrid(64, 2 * np.pi, 0.2)
    c = rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim)
    psi = g.to_position(c)
    assert np.abs(g.to_momentum(psi) - c).max() < 1e-12
    assert np.sum(np.abs(psi) ** 2) * g.cell == pytest.approx(np.vdot(c, c).real)


def test_apply_matches_dense():
    rng = np.random.default_rng(1)
    g = QuantumGrid(64, 2 * np.pi, 0.2)
    H = dirac_operator(PER, g)
    c = rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim)
    assert np.abs(H.apply(c) - H.dense() @ c).max() < 1e-12
    Hw = dirac_operator(PER, g, dense=True).matrix
    assert np.abs(Hw - Hw.conj().T).max() < 1e-13


def test_canonical_commutator():
    g = QuantumGrid(256, 20.0, 0.1)
    ps = MatrixSymbol(lambda X, P: P[0] * I4)
    c0 = gaussian_packet(g, [0, 0, 0], [0.3, 0, 0], np.array([1, 0, 0, 0]))
    X, Pm = position_operator(g), weyl_quantize(ps, g)
    comm = X.apply(Pm.apply(c0)) - Pm.apply(X.apply(c0))
    assert np.abs(comm - 1j * g.hbar * c0).max() < 1e-12


def test_wigner_normalization_and_duality():
    rng = np.random.default_rng(2)
    g = QuantumGrid(64, 2 * np.pi, 0.2)
    c = rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim)
    c /= np.linalg.norm(c)
    x, p, W = wigner_transform(c, g)
    assert np.real(np.einsum("jkss->", W)) * wigner_measure(g) == pytest.approx(1.0, abs=1e-12)
    X, P = np.meshgrid(x, p, indexing="ij")
    Pi = PER.Pi0_plus
    B = Pi.evaluate(g.embed([X], g.transverse_x), g.embed([P], g.transverse_p))
    lhs = np.einsum("jkab,jkba->", B, W) * wigner_measure(g)
    rhs = np.vdot(c, weyl_matrix(Pi, g) @ c)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert weyl_expectation(Pi, g, c) == pytest.approx(rhs, abs=1e-12)


def test_guards():
    g = QuantumGrid(8, 8.0, 0.5)
    with pytest.raises(NyquistViolation):
        weyl_quantize(FREE.H, g)
    g = QuantumGrid(64, 8.0, 0.5)
    with pytest.raises(BoundaryMarginViolation):
        gaussian_packet(g, [3.5, 0, 0], [0, 0, 0], np.array([1, 0, 0, 0]))
    with pytest.raises(NotFreePreset):
        zitterbewegung_trace(PER, QuantumGrid(64, 2 * np.pi, 0.2), np.zeros(256, complex), [0.0])
    with pytest.raises(ValueError):
        QuantumGrid(48, 8.0, 0.5)


@pytest.mark.parametrize("method", ["strang", "yoshida"])
def test_split_step_converges_to_exact(method):
    g = QuantumGrid(64, 2 * np.pi, 0.2)
    H = dirac_operator(PER, g)
    c0 = gaussian_packet(g, [0, 0, 0], [0.5, 0, 0], np.array([1, 0, 0, 0]), width=0.5)
    ref = propagate(H, c0, 0.5, "exact")
    e1 = np.linalg.norm(propagate(H, c0, 0.5, method, 0.01) - ref)
    e2 = np.linalg.norm(propagate(H, c0, 0.5, method, 0.005) - ref)
    rate = np.log2(e1 / e2)
    assert rate > (1.8 if method == "strang" else 3.6)
    assert np.linalg.norm(propagate(H, c0, 0.5, method, 0.01)) == pytest.approx(1.0, abs=1e-12)


def test_free_projectors_commute_with_h():
    g = QuantumGrid(64, 16.0, 0.5)
    Pp, Pm, H0, eps = free_projectors(FREE, g)
    assert np.abs(np.einsum("aij,ajk->aik", Pp, H0) - np.einsum("aij,ajk->aik", H0, Pp)).max() < 1e-13
    assert np.abs(Pp + Pm - I4).max() < 1e-14


def test_interference_identity():
    g = QuantumGrid(128, 64.0, 1.0)
    c = gaussian_packet(g, [0, 0, 0], [0.8, 0, 0], np.array([1, 0, 0.3, 0]), width=4.0)
    lhs, rhs = interference_term(FREE, g, c)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_zitterbewegung_small():
    g = QuantumGrid(128, 64.0, 1.0)
    c0 = gaussian_packet(g, [0, 0, 0], [1.0, 0, 0], np.array([1, 0, 0, 0]), width=3.0)
    t = np.linspace(0, 5, 26)
    d, c, parts = zitterbewegung_trace(FREE, g, c0, t)
    assert np.abs(d - c).max() < 1e-10
    assert np.ptp(parts["oscillation"]) > 0.05
    X = projected_position(FREE, g, 1)
    xs = [np.vdot(s, X.apply(s)).real for s in evolve_series(dirac_operator(FREE, g), c0, t, "exact")]
    assert np.abs(np.diff(xs, 2)).max() < 1e-10
