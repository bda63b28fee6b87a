"""Hamiltonian flows of h_(+/-), spin transport (2x2 and 4x4), Thomas precession
and the skew-product flow, plus energy-shell sampling.

All flows are integrated with scipy's DOP853 on one combined real system;
transport matrices are restored to SU(2) / U(4) by polar projection on
output, and the size of that correction is returned as a diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy.integrate import solve_ivp

from .errors import EmptyShell, GapViolation, StepFailure
from .model import I2, I4, SIGMA, DiracSymbolSet, effective_spin_field, effective_spin_hamiltonian_symbol, kinetic_momentum
from .sphere import rotation_of
from .symbols import phase_jets

DEFAULT_TOL = 1e-10


@dataclass
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point has non-finite components")

    def array(self) -> np.ndarray:
        return np.concatenate([self.x, self.p], axis=-1)


@dataclass
class TransportState:
    z: PhasePoint
    D: np.ndarray | None
    d: np.ndarray | None
    t: float
    branch: int
    projection: float = 0.0  # size of the polar correction applied on output
    raw: np.ndarray | None = None   # integrator output before the correction


@dataclass
class FlowSample:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    n: np.ndarray | None
    energy: np.ndarray
    energy_drift: float
    helicity: np.ndarray | None = None


# ------------------------------------------------------------- gradients
def grad_h(model: DiracSymbolSet, branch: int, x, p):
    """(h, grad_x h, grad_p h) at a batch of points."""
    X, P = phase_jets(x, p, 1, (0, 1, 2))
    hj = model.h(branch).fn(X, P)
    shape = np.broadcast(np.asarray(x)[..., 0], np.asarray(p)[..., 0]).shape

    def part(i):
        e = [0] * 6
        e[i] = 1
        return np.broadcast_to(np.real(hj.partial(e)), shape)

    gx = np.stack([part(i) for i in range(3)], axis=-1)
    gp = np.stack([part(3 + i) for i in range(3)], axis=-1)
    return np.broadcast_to(np.real(hj.value), shape), gx, gp


def _su2_project(D):
    U, s, Vh = np.linalg.svd(D)
    W = U @ Vh
    det = np.linalg.det(W)
    W = W / np.sqrt(det)[..., None, None]
    return W, float(np.max(np.abs(W - D))) if np.size(D) else 0.0


def _unitary_project(d):
    U, s, Vh = np.linalg.svd(d)
    W = U @ Vh
    return W, float(np.max(np.abs(W - d)))


# ------------------------------------------------------------ integrator
class _System:
    """Packs (x, p, D, d, n) for a batch of trajectories into one real vector."""

    def __init__(self, model, branch, batch, with_D=False, with_d=False, with_n=False):
        self.model, self.branch, self.batch = model, branch, batch
        self.with_D, self.with_d, self.with_n = with_D, with_d, with_n
        self.slices = {}
        k = 0
        for name, size, on in (("z", 6, True), ("D", 8, with_D), ("d", 32, with_d), ("n", 3, with_n)):
            if on:
                self.slices[name] = slice(k, k + size)
                k += size
        self.width = k
        self.heff = effective_spin_hamiltonian_symbol(model, branch) if with_d else None

    def pack(self, x, p, D=None, d=None, n=None):
        y = np.zeros((self.batch, self.width))
        y[:, self.slices["z"]] = np.concatenate([np.reshape(x, (-1, 3)), np.reshape(p, (-1, 3))], axis=1)
        if self.with_D:
            Dc = np.broadcast_to(D, (self.batch, 2, 2)).reshape(self.batch, 4)
            y[:, self.slices["D"]] = np.concatenate([Dc.real, Dc.imag], axis=1)
        if self.with_d:
            dc = np.broadcast_to(d, (self.batch, 4, 4)).reshape(self.batch, 16)
            y[:, self.slices["d"]] = np.concatenate([dc.real, dc.imag], axis=1)
        if self.with_n:
            y[:, self.slices["n"]] = np.reshape(n, (-1, 3))
        return y.ravel()

    def unpack(self, y):
        y = np.reshape(y, (self.batch, self.width) + np.shape(y)[1:])
        out = {"x": y[:, 0:3], "p": y[:, 3:6]}
        if self.with_D:
            s = y[:, self.slices["D"]]
            out["D"] = np.moveaxis((s[:, :4] + 1j * s[:, 4:]).reshape((self.batch, 2, 2) + s.shape[2:]), (1, 2), (-2, -1)) \
                if s.ndim == 3 else (s[:, :4] + 1j * s[:, 4:]).reshape(self.batch, 2, 2)
        if self.with_d:
            s = y[:, self.slices["d"]]
            out["d"] = np.moveaxis((s[:, :16] + 1j * s[:, 16:]).reshape((self.batch, 4, 4) + s.shape[2:]), (1, 2), (-2, -1)) \
                if s.ndim == 3 else (s[:, :16] + 1j * s[:, 16:]).reshape(self.batch, 4, 4)
        if self.with_n:
            out["n"] = y[:, self.slices["n"]]
        return out

    def rhs(self, t, y):
        st = self.unpack(y)
        x, p = st["x"], st["p"]
        _, gx, gp = grad_h(self.model, self.branch, x, p)
        dy = np.zeros((self.batch, self.width))
        dy[:, 0:3] = gp
        dy[:, 3:6] = -gx
        if self.with_D or self.with_n:
            C = effective_spin_field(self.model, self.branch, x, p)
        if self.with_D:
            gen = -0.5j * np.einsum("bk,kij->bij", C, SIGMA) @ st["D"]
            g = gen.reshape(self.batch, 4)
            dy[:, self.slices["D"]] = np.concatenate([g.real, g.imag], axis=1)
        if self.with_d:
            Hd = self.heff.evaluate(x, p)
            g = (-1j * Hd @ st["d"]).reshape(self.batch, 16)
            dy[:, self.slices["d"]] = np.concatenate([g.real, g.imag], axis=1)
        if self.with_n:
            dy[:, self.slices["n"]] = np.cross(C, st["n"])
        return dy.ravel()


def _integrate(system: _System, y0, t, tol, t_eval=None):
    if t == 0 and t_eval is None:
        return y0[:, None], np.array([0.0])
    sol = solve_ivp(system.rhs, (0.0, t), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                    t_eval=t_eval, dense_output=False)
    if sol.status < 0:
        raise StepFailure(f"integration failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise StepFailure("integration produced non-finite values")
    return sol.y, sol.t


def _gap_guard(model, branch, x, p):
    # shell contact would need e*phi variation >= 2mc^2 along the path
    h, _, _ = grad_h(model, branch, x, p)
    other, _, _ = grad_h(model, -branch, x, p)
    if np.any(branch * (h - other) <= 0):
        raise GapViolation("trajectory reached a point where h+ <= h-", point=np.concatenate([x, p], -1))


# ------------------------------------------------------------ operations
def hamiltonian_flow(model: DiracSymbolSet, branch: int, z0: PhasePoint, t: float, tol: float = DEFAULT_TOL) -> PhasePoint:
    sysm = _System(model, branch, 1)
    y, _ = _integrate(sysm, sysm.pack(z0.x, z0.p), t, tol)
    st = sysm.unpack(y[:, -1])
    _gap_guard(model, branch, st["x"], st["p"])
    return PhasePoint(st["x"][0], st["p"][0])


def trajectory(model: DiracSymbolSet, branch: int, z0: PhasePoint, times, n0=None, tol: float = DEFAULT_TOL) -> FlowSample:
    """Trajectory (and spin direction, if n0 given) sampled at ``times``."""
    times = np.asarray(times, dtype=float)
    sysm = _System(model, branch, 1, with_n=n0 is not None)
    y0 = sysm.pack(z0.x, z0.p, n=n0)
    y, tt = _integrate(sysm, y0, float(times[-1]), tol, t_eval=times)
    st = sysm.unpack(y)
    x, p = st["x"][0].T, st["p"][0].T
    h, _, _ = grad_h(model, branch, x, p)
    n = None
    hel = None
    if n0 is not None:
        n = st["n"][0].T
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        K = kinetic_momentum(model, x, p)
        hel = np.sum(n * K, axis=1) / np.linalg.norm(K, axis=1)
    drift = float(np.max(np.abs(h - h[0])))
    return FlowSample(tt, x, p, n, h, drift, hel)


def spin_transport_2x2(model: DiracSymbolSet, branch: int, z0: PhasePoint, t: float,
                       tol: float = DEFAULT_TOL) -> TransportState:
    sysm = _System(model, branch, 1, with_D=True)
    y, _ = _integrate(sysm, sysm.pack(z0.x, z0.p, D=I2), t, tol)
    st = sysm.unpack(y[:, -1])
    D, corr = _su2_project(st["D"][0])
    return TransportState(PhasePoint(st["x"][0], st["p"][0]), D, None, t, branch, corr, st["D"][0])


def spin_transport_4x4(model: DiracSymbolSet, branch: int, z0: PhasePoint, t: float,
                       tol: float = DEFAULT_TOL) -> TransportState:
    """Integrates d' = -i H_eff d and reports D = V*(Phi^t z0) d V(z0) alongside."""
    sysm = _System(model, branch, 1, with_d=True)
    y, _ = _integrate(sysm, sysm.pack(z0.x, z0.p, d=I4), t, tol)
    st = sysm.unpack(y[:, -1])
    d, corr = _unitary_project(st["d"][0])
    z = PhasePoint(st["x"][0], st["p"][0])
    V0 = model.V(branch).evaluate(z0.x, z0.p)
    Vt = model.V(branch).evaluate(z.x, z.p)
    D = Vt.conj().T @ d @ V0
    return TransportState(z, D, d, t, branch, corr)


def intertwining_defect(model: DiracSymbolSet, z0: PhasePoint, state: TransportState) -> float:
    P0 = model.Pi0(state.branch).evaluate(z0.x, z0.p)
    Pt = model.Pi0(state.branch).evaluate(state.z.x, state.z.p)
    return float(np.linalg.norm(state.d @ P0 - Pt @ state.d, 2))


def precess_spin(model: DiracSymbolSet, branch: int, z0: PhasePoint, n0, t: float,
                 tol: float = DEFAULT_TOL) -> np.ndarray:
    n0 = np.asarray(n0, dtype=float)
    if abs(np.linalg.norm(n0) - 1) > 1e-10:
        raise ValueError("n0 must be a unit vector")
    sysm = _System(model, branch, 1, with_n=True)
    y, _ = _integrate(sysm, sysm.pack(z0.x, z0.p, n=n0), t, tol)
    n = sysm.unpack(y[:, -1])["n"][0]
    return n / np.linalg.norm(n)


def skew_product_flow(model: DiracSymbolSet, branch: int, z0: PhasePoint, n0, t: float, tol: float = DEFAULT_TOL):
    """Y^t(x, p, n) = (Phi^t(x, p), R(D(x, p, t)) n)."""
    st = spin_transport_2x2(model, branch, z0, t, tol)
    return st.z, rotation_of(st.D) @ np.asarray(n0, dtype=float)


def skew_product_batch(model: DiracSymbolSet, branch: int, x, p, n, t: float, tol: float = 1e-8):
    """Vectorized Y^t over many initial points (one stacked ODE)."""
    x = np.atleast_2d(x)
    sysm = _System(model, branch, len(x), with_n=True)
    y, _ = _integrate(sysm, sysm.pack(x, p, n=n), t, tol)
    st = sysm.unpack(y[:, -1])
    nn = st["n"] / np.linalg.norm(st["n"], axis=1, keepdims=True)
    return st["x"], st["p"], nn


# ------------------------------------------------------------ shells
def _transverse_mass2(model, x, axes, transverse_p):
    """m^2c^4 plus the squared kinetic momentum along the frozen (inactive) axes."""
    cst = model.constants
    M2 = np.full(np.shape(x)[:-1], cst.rest_energy ** 2)
    if axes is None:
        return M2
    A = model.preset.vector_potential(x)
    tp = np.zeros(3) if transverse_p is None else np.asarray(transverse_p, dtype=float)
    for a in range(3):
        if a not in axes:
            M2 = M2 + (cst.c * tp[a] - cst.e * A[..., a]) ** 2
    return M2


def shell_weight(model: DiracSymbolSet, branch: int, E: float, x, dim: int = 3, axes=None, transverse_p=None):
    """Co-area density of {h = E} over position x, and the kinetic radius |K|.

    Integrating delta(h - E) over the ``dim`` active momenta at fixed x gives
    S_(dim-1) |K|^(dim-2) eps / c^dim on the sphere |K| = sqrt(eps^2 - M^2)/c,
    where M^2 = m^2c^4 + |K_frozen|^2 when ``axes`` lists the active axes.
    """
    cst = model.constants
    ephi = cst.e * model.preset.potential(x)
    eps = branch * (E - ephi)
    M2 = _transverse_mass2(model, x, axes, transverse_p)
    k2 = eps ** 2 - M2
    ok = (eps > 0) & (k2 > 0)
    k = np.sqrt(np.where(ok, k2, 0.0)) / cst.c
    area = 2 * pi ** (dim / 2) / gamma(dim / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(ok, area * k ** (dim - 2) * eps / cst.c ** dim, 0.0)
    return w, k


def _box_points(box, axes, u):
    box = np.asarray(box, dtype=float)
    x = np.zeros(u.shape[:-1] + (3,))
    for i, a in enumerate(axes):
        x[..., a] = -box[a] / 2 + box[a] * u[..., i]
    return x


def shell_volume(model: DiracSymbolSet, branch: int, E: float, box, axes=(0,), samples: int = 4096,
                 rng: np.random.Generator | None = None, transverse_p=None) -> float:
    """Measure of {h = E} (delta(h-E) dx dp) over the box; midpoint quadrature, or
    Monte Carlo when ``rng`` is given."""
    d = len(axes)
    if rng is None:
        m = int(round(samples ** (1 / d)))
        g = (np.arange(m) + 0.5) / m
        u = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
    else:
        u = rng.random((samples, d))
    x = _box_points(box, axes, u)
    w, _ = shell_weight(model, branch, E, x, d, axes, transverse_p)
    return float(np.prod([box[a] for a in axes]) * np.mean(w))


def sample_shell(model: DiracSymbolSet, branch: int, E: float, M: int, rng: np.random.Generator,
                 box, axes=(0, 1, 2), max_rounds: int = 200, transverse_p=None):
    """Rejection sampler for the normalized measure delta(h - E) dx dp on the box."""
    d = len(axes)
    cst = model.constants
    probe = _box_points(box, axes, rng.random((4096, d)))
    wp, _ = shell_weight(model, branch, E, probe, d, axes, transverse_p)
    if not np.any(wp > 0):
        raise EmptyShell(f"no points with h = {E} in the box")
    wmax = 1.2 * wp.max()
    xs, ps = [], []
    have = 0
    for _ in range(max_rounds):
        x = _box_points(box, axes, rng.random((2 * M, d)))
        w, k = shell_weight(model, branch, E, x, d, axes, transverse_p)
        keep = rng.random(2 * M) * wmax < w
        x, k = x[keep], k[keep]
        u = rng.normal(size=(len(x), d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        K = np.zeros((len(x), 3))
        K[:, list(axes)] = u * k[:, None]
        A = model.preset.vector_potential(x)
        p = (K + cst.e * A) / cst.c
        tp = np.zeros(3) if transverse_p is None else np.asarray(transverse_p, dtype=float)
        for a in range(3):
            if a not in axes:
                p[:, a] = tp[a]
        ps.append(p)
        xs.append(x)
        have += len(x)
        if have >= M:
            break
    if have < M:
        raise EmptyShell("rejection sampler could not collect enough points")
    return np.concatenate(xs)[:M], np.concatenate(ps)[:M]


def measure_invariance_check(model: DiracSymbolSet, branch: int, E: float, b0, M: int, t: float,
                             rng: np.random.Generator, box, axes=(0, 1, 2), tol: float = 1e-8):
    """Means (and standard errors) of b0 and b0 o Y^t over delta(h-E) dx dp x dn."""
    x, p = sample_shell(model, branch, E, M, rng, box, axes)
    n = rng.normal(size=(M, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    before = np.asarray(b0(x, p, n), dtype=float)
    xt, pt, nt = skew_product_batch(model, branch, x, p, n, t, tol)
    after = np.asarray(b0(xt, pt, nt), dtype=float)
    se = np.sqrt(np.var(before, ddof=1) / M + np.var(after, ddof=1) / M)
    return float(before.mean()), float(after.mean()), float(se)
