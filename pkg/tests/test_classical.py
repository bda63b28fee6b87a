import numpy as np
import pytest
from scipy import linalg

from diracsc.classical import (PhasePoint, hamiltonian_flow, intertwining_defect, measure_invariance_check,
                               precess_spin, sample_shell, shell_volume, skew_product_batch, skew_product_flow,
                               spin_transport_2x2, spin_transport_4x4, trajectory)
from diracsc.errors import EmptyShell
from diracsc.model import (SIGMA, build_model, constant_b_preset, constant_e_preset, effective_spin_field, free_preset,
                           kinetic_momentum, periodic_preset)

CB = build_model(constant_b_preset())
CE = build_model(constant_e_preset())


def _period(m, z):
    K = kinetic_momentum(m, z.x, z.p)
    return 2 * np.pi * np.sqrt(K @ K + 1)


def test_rest_frame_transport_closed_form():
    z0 = PhasePoint([0, 0, 0], [0, 0, 0])
    t = 2.0
    st = spin_transport_2x2(CB, 1, z0, t)
    C = effective_spin_field(CB, 1, z0.x, z0.p)
    assert np.abs(st.D - linalg.expm(-0.5j * t * np.einsum("k,kij->ij", C, SIGMA))).max() < 1e-9
    assert abs(np.linalg.det(st.D) - 1) < 1e-12


def test_cyclotron_orbit_closes():
    z = PhasePoint([0.3, -0.2, 0.0], [0.5, 0.4, 0.0])
    T = _period(CB, z)
    zt = hamiltonian_flow(CB, 1, z, T)
    assert np.abs(zt.x - z.x).max() < 1e-8 and np.abs(zt.p - z.p).max() < 1e-8


def test_4x4_matches_2x2():
    z = PhasePoint([0.3, -0.2, 0.0], [0.5, 0.4, 0.1])
    T = _period(CB, z)
    s4, s2 = spin_transport_4x4(CB, 1, z, T), spin_transport_2x2(CB, 1, z, T)
    assert np.abs(s4.D - s2.D).max() < 1e-8
    assert intertwining_defect(CB, z, s4) < 1e-8
    a = spin_transport_4x4(CE, -1, PhasePoint([0.5, 0.1, 0], [0.2, 0.7, -0.3]), 3.0)
    b = spin_transport_2x2(CE, -1, PhasePoint([0.5, 0.1, 0], [0.2, 0.7, -0.3]), 3.0)
    assert np.abs(a.D - b.D).max() < 1e-8


def test_helicity_and_energy():
    z = PhasePoint([0, 0, 0], [0.5, 0.4, 0.1])
    fs = trajectory(CB, 1, z, np.linspace(0, _period(CB, z), 50), n0=np.array([0.6, 0.0, 0.8]))
    assert np.ptp(fs.helicity) < 1e-8
    assert fs.energy_drift < 1e-9


def test_skew_product_consistency():
    z = PhasePoint([0.3, -0.2, 0.0], [0.5, 0.4, 0.1])
    n0 = np.array([0.6, 0.0, 0.8])
    zt, n = skew_product_flow(CB, 1, z, n0, 1.3)
    assert np.abs(n - precess_spin(CB, 1, z, n0, 1.3)).max() < 1e-8
    x, p, nn = skew_product_batch(CB, 1, z.x[None], z.p[None], n0[None], 1.3, tol=1e-10)
    assert np.abs(nn[0] - n).max() < 1e-7


def test_shell_volume_free_1d():
    m = build_model(free_preset())
    L, E = 8.0, 2.0
    # 1D: 2 momentum roots, each with weight E / sqrt(E^2 - 1)
    exact = L * 2 * E / np.sqrt(E ** 2 - 1)
    assert shell_volume(m, 1, E, (L, L, L), (0,), 256) == pytest.approx(exact, rel=1e-12)
    assert shell_volume(m, -1, E, (L, L, L), (0,), 256) == 0.0


def test_shell_volume_transverse_potential():
    m = build_model(periodic_preset(phi0=0.0, a0=0.3))
    E, L = 2.0, 2 * np.pi
    x = (np.arange(4096) + 0.5) / 4096 * L - L / 2
    M2 = 1 + (0.3 * np.sin(x)) ** 2
    exact = L * np.mean(2 * E / np.sqrt(E ** 2 - M2))
    assert shell_volume(m, 1, E, (L, L, L), (0,), 4096) == pytest.approx(exact, rel=1e-12)


def test_sample_shell_on_surface():
    m = build_model(periodic_preset())
    rng = np.random.default_rng(0)
    L = 2 * np.pi
    x, p = sample_shell(m, 1, 2.0, 200, rng, (L, L, L), (0,))
    assert np.abs(m.h_plus.evaluate(x, p) - 2.0).max() < 1e-12
    assert np.all(p[:, 1:] == 0)
    with pytest.raises(EmptyShell):
        sample_shell(m, -1, 2.0, 10, rng, (L, L, L), (0,))


def test_liouville_invariance_of_shell_measure():
    m = build_model(periodic_preset())
    rng = np.random.default_rng(5)
    L = 2 * np.pi
    b0 = lambda x, p, n: np.cos(x[:, 0]) + n[:, 2] * p[:, 0]
    before, after, se = measure_invariance_check(m, 1, 2.0, b0, 400, 1.0, rng, (L, L, L), (0,))
    assert abs(before - after) <= 4 * se
