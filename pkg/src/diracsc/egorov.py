"""Quantum-vs-classical comparisons: Egorov transport of spin observables and
the invariant-algebra (block-diagonality) probe."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .classical import PhasePoint, spin_transport_2x2
from .errors import BlockDiagonalityViolated
from .grid import (QuantumGrid, coherent_state, dirac_operator, evolve_series, free_projectors,
                   position_operator, weyl_expectation, weyl_matrix)
from .model import I4, SPIN, Constants, DiracSymbolSet, build_model, constant_b_preset, kinetic_momentum
from .projectors import correct_projector_symbol, op_norm, quantize_symbol, restricted, riesz_flatten
from .report import ScalingReport
from .sphere import quantizer, sphere_average
from .grid import spin_up
from .symbols import MatrixSymbol


def spin_observable(model: DiracSymbolSet, k: int = 0, branch: int = 1) -> MatrixSymbol:
    """Pi0 Sigma_k Pi0: the (2/hbar-rescaled) spin component on one branch."""
    Pi = model.Pi0(branch)

    def fn(X, P):
        p = Pi.fn(X, P)
        return p @ SPIN[k] @ p

    return MatrixSymbol(fn, hermitian=True, name=f"Pi0 S{k + 1} Pi0", axes=Pi.axes)


def off_diagonal_norm(model: DiracSymbolSet, sym: MatrixSymbol, x, p, branch: int = 1) -> float:
    P = model.Pi0(branch).evaluate(x, p)
    Q = model.Pi0(-branch).evaluate(x, p)
    B = sym.evaluate(x, p)
    return float(max(np.abs(Q @ B @ P).max(), np.abs(P @ B @ Q).max()))


def grid_size_for(hbar: float, L: float, pmin: float = 4.0) -> int:
    """Smallest power of two whose momentum grid reaches pmin."""
    need = pmin * L / (np.pi * hbar)
    return int(2 ** np.ceil(np.log2(need)))


@dataclass
class EgorovExperiment:
    B: float = 1.0
    branch: int = 1
    spin_axis: int = 0
    x0: tuple = (0.0, 0.0, 0.0)
    p0: tuple = (0.5, 0.0, 0.0)
    n0: tuple = (1.0, 0.0, 0.0)
    hbar_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    L: float = 8.0
    t_fraction: float = 0.5     # of the cyclotron period
    dt: float = 0.005
    method: str = "yoshida"
    constants: Constants = field(default_factory=Constants)
    clean: bool = True

    def model(self) -> DiracSymbolSet:
        return build_model(constant_b_preset(B=(0.0, 0.0, self.B), gauge="landau", L=self.L), self.constants)

    def period(self, model=None) -> float:
        model = model or self.model()
        K = kinetic_momentum(model, np.array(self.x0), np.array(self.p0))
        cst = self.constants
        eps = np.sqrt(cst.c ** 2 * K @ K + cst.rest_energy ** 2)
        return 2 * np.pi * eps / (cst.e * cst.c ** 2 * abs(self.B))


def classical_value(model: DiracSymbolSet, branch: int, sym: MatrixSymbol, x0, p0, n0, t: float, tol=1e-11):
    """chi* D* (V* B V)(Phi^t z0) D chi: the spin-state weighted transport of b0."""
    st = spin_transport_2x2(model, branch, PhasePoint(x0, p0), t, tol)
    V = model.V(branch).evaluate(st.z.x, st.z.p)
    Mt = V.conj().T @ sym.evaluate(st.z.x, st.z.p) @ V
    chi = spin_up(n0)
    return float(np.real(np.vdot(chi, st.D.conj().T @ Mt @ st.D @ chi))), st


def classical_value_sphere(model, branch, sym, x0, p0, n0, t, tol=1e-11, rule="lebedev14"):
    """Same value as 2 * mean_n[w(n) b0(Y^t(z0, n))] with w(n) = tr(Delta(n) chi chi*)."""
    from .sphere import matrix_to_sphere, rotation_of

    st = spin_transport_2x2(model, branch, PhasePoint(x0, p0), t, tol)
    V = model.V(branch).evaluate(st.z.x, st.z.p)
    b = matrix_to_sphere(V.conj().T @ sym.evaluate(st.z.x, st.z.p) @ V)
    R = rotation_of(st.D)
    chi = spin_up(n0)
    rho = np.outer(chi, chi.conj())
    w = lambda n: np.real(np.trace(quantizer(n) @ rho))
    return 2 * sphere_average(lambda n: w(n) * b(R @ n), rule)


def egorov_point(exp: EgorovExperiment, hbar: float, model=None, sym=None, times=None):
    """Quantum and classical values at the requested times for one hbar."""
    model = model or exp.model()
    sym = sym or spin_observable(model, exp.spin_axis, exp.branch)
    N = grid_size_for(hbar, exp.L)
    grid = QuantumGrid(N, exp.L, hbar, transverse_p=(0.0, exp.p0[1], exp.p0[2]),
                       transverse_x=(0.0, exp.x0[1], exp.x0[2]), constants=exp.constants)
    H = dirac_operator(model, grid)
    c0 = coherent_state(model, grid, exp.x0, exp.p0, exp.n0, exp.branch)
    times = [exp.t_fraction * exp.period(model)] if times is None else list(times)
    states = evolve_series(H, c0, times, exp.method, exp.dt)
    rows = []
    for t, c in zip(times, states):
        q = weyl_expectation(sym, grid, c)
        cl, _ = classical_value(model, exp.branch, sym, exp.x0, exp.p0, exp.n0, t)
        rows.append((t, hbar, q.real, cl, abs(q.real - cl), q.imag))
    return rows


def egorov_compare(exp: EgorovExperiment, sym: MatrixSymbol | None = None, pool=None):
    model = exp.model()
    sym = sym or spin_observable(model, exp.spin_axis, exp.branch)
    if exp.clean:
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(50, 3))
        p = rng.uniform(-2, 2, size=(50, 3))
        off = off_diagonal_norm(model, sym, x, p, exp.branch)
        if off > 1e-10:
            raise BlockDiagonalityViolated(f"observable has off-diagonal symbol blocks of size {off:.3g}")
    if pool is None:
        out = [egorov_point(exp, h) for h in exp.hbar_list]
    else:
        out = list(pool.map(_egorov_job, [(exp, h) for h in exp.hbar_list]))
    rows = [r for block in out for r in block]
    errs = [block[-1][4] for block in out]
    report = ScalingReport("egorov", list(exp.hbar_list), {"abs_err": errs}, expected_slope=1.0, threshold=0.8)
    return report, rows


def _egorov_job(args):
    exp, h = args
    return egorov_point(exp, h)


# --------------------------------------------------------- invariant algebra
def periodic_grid(hbar: float, L: float = 2 * np.pi, constants: Constants | None = None) -> QuantumGrid:
    return QuantumGrid(grid_size_for(hbar, L, 6.0), L, hbar, constants=constants or Constants())


def block_offdiag_point(model: DiracSymbolSet, order: int, grid: QuantumGrid, times, p_band: float = 2.0,
                        observable=None):
    """max_t ||P+ B(t) P-|| (band-restricted) for B = P+ O P+ + P- O P-."""
    Hm = dirac_operator(model, grid, dense=True).matrix
    w, V = linalg.eigh(Hm)
    A = quantize_symbol(correct_projector_symbol(model, 1, order), grid)
    Pp, _ = riesz_flatten(A)
    Pm = np.eye(grid.dim) - Pp
    if observable is None:
        L = grid.L[0]
        observable = MatrixSymbol(lambda X, P: np.cos(2 * np.pi * X[0] / L) * I4, hermitian=True, name="cos")
    O = weyl_matrix(observable, grid)
    B = Pp @ O @ Pp + Pm @ O @ Pm
    rows = grid.band(p_band)
    Bt_ = V.conj().T @ B @ V
    vals = []
    for t in times:
        ph = np.exp(-1j * w * t / grid.hbar)
        Bt = V @ (np.conj(ph)[:, None] * Bt_ * ph[None, :]) @ V.conj().T
        vals.append(op_norm(restricted(Pp @ Bt @ Pm, rows)))
    return vals


def invariant_algebra_probe(model: DiracSymbolSet, order: int, hbar_list, times, p_band: float = 2.0):
    """(a): block-diagonal observable; returns a ScalingReport on the largest off-diagonal norm."""
    series = []
    for h in hbar_list:
        series.append(block_offdiag_point(model, order, periodic_grid(h, model.preset.periodic_box[0], model.constants),
                                          times, p_band))
    peak = [max(s) for s in series]
    rep = ScalingReport("invariant-algebra", list(hbar_list), {"offdiag": peak},
                        expected_slope=order + 1, threshold=order + 0.7)
    return rep, series


def free_offdiag_series(model: DiracSymbolSet, grid: QuantumGrid, c0, times, axis: int = 0):
    """<P+ x(t) P- + P- x(t) P+> along the free evolution, and ||P+ x P-|| on the band."""
    Pp, Pm, H0, eps = free_projectors(model, grid)
    H = dirac_operator(model, grid)
    X = position_operator(grid, axis)
    states = evolve_series(H, c0, times, "exact")
    vals = []
    for c in states:
        v = c.reshape(grid.size, 4)
        cp = np.einsum("aij,aj->ai", Pp, v).ravel()
        cm = np.einsum("aij,aj->ai", Pm, v).ravel()
        vals.append(2 * np.real(np.vdot(cp, X.apply(cm))))
    return np.array(vals)


def free_offdiag_norms(model: DiracSymbolSet, grid: QuantumGrid, times, axis: int = 0, p_band: float = 2.0):
    """||P+ x(t) P-|| on the momentum band for the free evolution."""
    Pp, Pm, H0, eps = free_projectors(model, grid)
    X = position_operator(grid, axis).dense()
    rows = grid.band(p_band)
    out = []
    for t in times:
        U = np.zeros((grid.dim, grid.dim), dtype=complex)
        blocks = np.array([linalg.expm(-1j * H0[a] * t / grid.hbar) for a in range(grid.size)])
        for s in range(4):
            for r in range(4):
                U[s::4, r::4] = np.diag(blocks[:, s, r])
        P1 = np.zeros_like(U)
        P2 = np.zeros_like(U)
        for s in range(4):
            for r in range(4):
                P1[s::4, r::4] = np.diag(Pp[:, s, r])
                P2[s::4, r::4] = np.diag(Pm[:, s, r])
        Xt = U.conj().T @ X @ U
        out.append(op_norm(restricted(P1 @ Xt @ P2, rows)))
    return out


def dominant_frequency(t, y, zero_pad: int = 16) -> float:
    """Angular frequency of the largest periodogram peak (mean and trend removed)."""
    t = np.asarray(t)
    y = np.asarray(y) - np.polyval(np.polyfit(t, y, 1), t)
    dt = t[1] - t[0]
    n = zero_pad * len(y)
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y)), n))
    k = int(np.argmax(spec[1:])) + 1
    # parabolic refinement on the log spectrum
    if 1 <= k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        k = k + 0.5 * (a - c) / (a - 2 * b + c)
    return float(2 * np.pi * k / (n * dt))


def fit_oscillation(t, y, omega0: float):
    """Least-squares fit of a + b t + exp(-g t^2)(c cos wt + d sin wt); returns omega."""
    from scipy.optimize import least_squares

    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)

    def model(th):
        a, b, g, c, d, w = th
        env = np.exp(-g * t ** 2)
        return a + b * t + env * (c * np.cos(w * t) + d * np.sin(w * t))

    # linear parameters seeded by a fit at the periodogram frequency
    Amat = np.stack([np.ones_like(t), t, np.cos(omega0 * t), np.sin(omega0 * t)], axis=1)
    a, b, c, d = np.linalg.lstsq(Amat, y, rcond=None)[0]
    res = least_squares(lambda th: model(th) - y, [a, b, 0.0, c, d, omega0], x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(res.x[5]), res
