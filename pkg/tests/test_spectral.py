import numpy as np
import pytest

from diracsc.egorov import periodic_grid
from diracsc.errors import EmptyRetainedSet, WindowEmpty
from diracsc.grid import QuantumGrid, dirac_operator, free_projectors, weyl_matrix
from diracsc.model import I4, build_model, free_preset, periodic_preset
from diracsc.projectors import correct_projector_symbol, quantize_and_riesz
from diracsc.spectral import (compressed_spectrum, diagonalize, nearest_distance, project_eigens, qe_diagnostic,
                              window_census, window_count, weyl_prediction)
from diracsc.symbols import MatrixSymbol, constant_symbol

FREE = build_model(free_preset())
PER = build_model(periodic_preset())


def _dense_blocks(blocks, grid):
    M = np.zeros((grid.dim, grid.dim), dtype=complex)
    for s in range(4):
        for r in range(4):
            M[s::4, r::4] = np.diag(blocks[:, s, r])
    return M


@pytest.fixture(scope="module")
def free_setup():
    g = QuantumGrid(64, 16.0, 0.5)
    H = dirac_operator(FREE, g, dense=True)
    Pp, Pm, _, _ = free_projectors(FREE, g)
    return g, H, diagonalize(H), _dense_blocks(Pp, g), _dense_blocks(Pm, g)


@pytest.fixture(scope="module")
def periodic_setup():
    g = periodic_grid(0.2)
    H = dirac_operator(PER, g, dense=True)
    spec = diagonalize(H)
    Pp = quantize_and_riesz(correct_projector_symbol(PER, 1, 1), g).matrix
    return g, H, spec, Pp, np.eye(g.dim) - Pp


def test_free_spectrum(free_setup):
    g, H, spec, _, _ = free_setup
    e = np.sqrt(g.momenta()[:, 0] ** 2 + 1)
    assert np.abs(spec.values - np.sort(np.r_[e, e, -e, -e])).max() < 1e-12
    assert np.abs(spec.values + spec.values[::-1]).max() < 1e-12
    assert spec.residuals.max() < 1e-10 * spec.norm


def test_second_order_shifts():
    """cos(x) couples p to p +/- hbar only, so first-order shifts vanish and shifts scale as phi0^2.

    Near the gap edge the level spacing is O(hbar^2) and the expansion breaks
    down, so only levels with |E| > 2 are compared.
    """
    g = periodic_grid(0.2)
    base = diagonalize(dirac_operator(build_model(periodic_preset(phi0=0.0, a0=0.0)), g, dense=True)).values
    shifts = []
    for phi0 in (0.01, 0.02):
        m = build_model(periodic_preset(phi0=phi0, a0=0.0))
        d = np.abs(diagonalize(dirac_operator(m, g, dense=True)).values - base)
        shifts.append(d[np.abs(base) > 2].max())
    assert shifts[0] < 5e-4
    assert shifts[1] / shifts[0] == pytest.approx(4.0, rel=0.05)


def test_shift_invert_matches_dense(periodic_setup):
    g, H, spec, _, _ = periodic_setup
    part = diagonalize(H.matrix, window=(2.0, 0.3), dense_threshold=0)
    ref = spec.values[spec.window(2.0, 0.3)]
    assert np.abs(part.values - ref).max() < 1e-10
    with pytest.raises(WindowEmpty):
        diagonalize(H, window=(0.0, 0.1))


def test_free_projections_exact(free_setup):
    g, H, spec, Pp, Pm = free_setup
    d = project_eigens(spec, H, Pp, Pm)
    n2 = d.norms ** 2
    assert np.all((np.abs(n2[:, 0] - 1) < 1e-12) ^ (np.abs(n2[:, 1] - 1) < 1e-12))
    assert np.nanmax(d.r) < 1e-12
    assert np.all(d.present.sum(axis=1) == 1)


def test_residual_identities(periodic_setup):
    g, H, spec, Pp, Pm = periodic_setup
    idx = spec.window(2.0, 0.5)
    d = project_eigens(spec, H, Pp, Pm, idx=idx)
    ok = d.present[:, 0]
    assert np.abs(d.quasimode[ok, 0] - d.r[ok, 0]).max() < 1e-10
    # recompute r and s from their quotients
    Hm = H.matrix
    psi = spec.vectors[:, idx[0]]
    nrm = np.linalg.norm(Pp @ psi)
    r = np.linalg.norm(Hm @ Pp @ psi - Pp @ Hm @ psi) / nrm
    HP = Hm @ Pp
    s = np.linalg.norm(HP @ Pp @ psi - Pp @ HP @ psi) / nrm
    assert d.r[0, 0] == pytest.approx(r, rel=1e-10)
    assert d.s[0, 0] == pytest.approx(s, rel=1e-10, abs=1e-15)
    comp = compressed_spectrum(H, Pp)
    assert np.all(nearest_distance(comp, d.E[ok]) <= d.r[ok, 0] + 1e-12)


def test_trace_identity(periodic_setup):
    g, H, spec, Pp, Pm = periodic_setup
    d = project_eigens(spec, H, Pp, Pm)
    assert np.sum(d.norms[:, 0] ** 2) == pytest.approx(np.trace(Pp).real, abs=1e-8)


def test_free_census_window_above_gap(free_setup):
    g, H, spec, Pp, Pm = free_setup
    c = window_census(spec, H, Pp, Pm, g, FREE, 2.0, 0.5)
    assert c.N_pm[1] == 0 and c.szego[1] == pytest.approx(0.0, abs=1e-20)
    assert c.szego_ok()
    assert c.N_delta[0] <= c.N


def test_window_count_clusters():
    vals = np.array([0.0, 1.0, 1.0 + 1e-12, 2.0, 3.0])
    n, amb = window_count(vals, 1.5, 0.5)
    assert (n, amb) == (3, 3)   # the 1.0 pair and 2.0 sit on the edges
    n, amb = window_count(vals, 1.5, 0.6)
    assert (n, amb) == (3, 0)


def test_weyl_prediction_dimensions():
    assert weyl_prediction(1.0, 2.0, 0.1, 1) == pytest.approx(2 * 2.0 / np.pi * 1.0)
    assert weyl_prediction(1.0, 2.0, 0.1, 3) == pytest.approx(2 * 2.0 / np.pi / (2 * np.pi * 0.1) ** 2)


def test_qe_identity_and_odd(periodic_setup):
    g, H, spec, Pp, Pm = periodic_setup
    idx = spec.window(2.0, 0.5)
    d = project_eigens(spec, H, Pp, Pm, idx=idx)
    ident = constant_symbol(I4)
    r = qe_diagnostic(d, weyl_matrix(ident, g), ident, PER, g, 2.0)
    assert np.abs(r.expectations - 1).max() < 1e-12 and r.M_E == pytest.approx(1.0, abs=1e-12)
    odd = MatrixSymbol(lambda X, P: P[0] * I4, hermitian=True)
    r = qe_diagnostic(d, weyl_matrix(odd, g), odd, PER, g, 2.0, rng=np.random.default_rng(4))
    assert abs(r.M_E) <= 3 * r.M_E_se
    with pytest.raises(EmptyRetainedSet):
        qe_diagnostic(d, weyl_matrix(ident, g), ident, PER, g, 2.0, branch=-1)
