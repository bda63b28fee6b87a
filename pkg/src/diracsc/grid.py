"""Periodic spinor grids, torus Weyl quantization, propagation and Wigner functions.

State vectors live in the plane-wave basis of the torus.  Basis index
``4*a + s`` pairs a momentum label ``a`` (row-major over the grid axes, each
axis in ascending order n = -N/2, ..., N/2-1, p = 2 pi hbar n / L) with a
spinor component ``s``.  Position-space fields of shape ``(*N, 4)`` carry the
L^2 norm sum |psi|^2 dx.

Weyl quantization uses the exact torus matrix elements

    <a|B|b> = (1/L) int exp(-i (p_a - p_b) x / hbar) B(x, (p_a + p_b)/2) dx

with the x-integral done by an oversampled FFT; x-only symbols become
Fourier multiplication and p-only symbols become diagonal multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import BoundaryMarginViolation, NotFreePreset, NyquistViolation
from .model import ALPHA, BETA, I4, Constants, DiracSymbolSet
from .symbols import MatrixSymbol


@dataclass
class QuantumGrid:
    N: tuple
    L: tuple
    hbar: float
    transverse_p: tuple = (0.0, 0.0, 0.0)
    transverse_x: tuple = (0.0, 0.0, 0.0)
    x_min: tuple | None = None
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        self.N = tuple(int(n) for n in np.atleast_1d(self.N))
        self.L = tuple(float(v) for v in np.broadcast_to(np.atleast_1d(self.L), (len(self.N),)))
        if self.x_min is None:
            self.x_min = tuple(-v / 2 for v in self.L)
        for n in self.N:
            if n & (n - 1) or n < 2:
                raise ValueError(f"grid size {n} is not a power of two")

    # geometry
    @property
    def dims(self) -> int:
        return len(self.N)

    @property
    def shape(self) -> tuple:
        return self.N

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    @property
    def dim(self) -> int:
        return 4 * self.size

    @property
    def dx(self) -> np.ndarray:
        return np.array(self.L) / np.array(self.N)

    @property
    def cell(self) -> float:
        return float(np.prod(self.dx))

    def axis_x(self, j: int) -> np.ndarray:
        return self.x_min[j] + self.dx[j] * np.arange(self.N[j])

    def axis_n(self, j: int) -> np.ndarray:
        return np.arange(-self.N[j] // 2, self.N[j] // 2)

    def axis_p(self, j: int) -> np.ndarray:
        return 2 * np.pi * self.hbar * self.axis_n(j) / self.L[j]

    @property
    def p_max(self) -> float:
        return float(min(np.pi * self.hbar / d for d in self.dx))

    def embed(self, coords: Sequence[np.ndarray], transverse) -> np.ndarray:
        """Lift grid-axis coordinates to points of R^3."""
        shape = np.broadcast(*coords).shape if coords else ()
        out = np.empty(shape + (3,))
        for i in range(3):
            out[..., i] = coords[i] if i < self.dims else transverse[i]
        return out

    def positions(self) -> np.ndarray:
        mesh = np.meshgrid(*[self.axis_x(j) for j in range(self.dims)], indexing="ij")
        return self.embed(mesh, self.transverse_x)

    def momenta(self) -> np.ndarray:
        """Momentum of every basis label, shape (size, 3)."""
        mesh = np.meshgrid(*[self.axis_p(j) for j in range(self.dims)], indexing="ij")
        return self.embed([m.ravel() for m in mesh], self.transverse_p)

    def labels(self) -> np.ndarray:
        mesh = np.meshgrid(*[self.axis_n(j) for j in range(self.dims)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def check_nyquist(self, factor: float = 4.0):
        need = factor * self.constants.m * self.constants.c
        if self.p_max < need:
            raise NyquistViolation(f"momentum grid reaches {self.p_max:.4g} < {need:.4g} (hbar pi / dx)")

    def band(self, p_band: float) -> np.ndarray:
        """Basis indices whose momenta satisfy |p| <= p_band on the grid axes."""
        p = self.momenta()[:, : self.dims]
        keep = np.linalg.norm(p, axis=1) <= p_band + 1e-12
        return (4 * np.flatnonzero(keep)[:, None] + np.arange(4)).ravel()

    # transforms between position fields and plane-wave coefficients
    def _phase(self) -> np.ndarray:
        ph = np.zeros(self.N)
        for j in range(self.dims):
            sh = [1] * self.dims
            sh[j] = -1
            ph = ph + (2 * np.pi * self.axis_n(j) * self.x_min[j] / self.L[j]).reshape(sh)
        return np.exp(-1j * ph)

    def to_momentum(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        axes = tuple(range(self.dims))
        c = np.fft.fftshift(np.fft.fftn(psi * np.sqrt(self.cell), axes=axes, norm="ortho"), axes=axes)
        c = c * self._phase()[..., None]
        return c.reshape(-1)

    def to_position(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=complex).reshape(self.N + (4,))
        axes = tuple(range(self.dims))
        c = c * np.conj(self._phase())[..., None]
        psi = np.fft.ifftn(np.fft.ifftshift(c, axes=axes), axes=axes, norm="ortho")
        return psi / np.sqrt(self.cell)


@dataclass
class SpinorField:
    """A four-component field on the grid (position representation)."""

    values: np.ndarray
    grid: QuantumGrid

    @classmethod
    def from_coefficients(cls, c, grid: QuantumGrid) -> "SpinorField":
        return cls(grid.to_position(c), grid)

    def coefficients(self) -> np.ndarray:
        return self.grid.to_momentum(self.values)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell))

    def density(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=-1)


# --------------------------------------------------------------- operators
class GridOperator:
    """Linear operator on plane-wave coefficient vectors.

    Either dense (``matrix``) or split into a momentum multiplier
    ``kinetic`` (size, 4, 4) plus a position multiplication ``potential``
    (*N, 4, 4).
    """

    def __init__(self, grid: QuantumGrid, matrix=None, kinetic=None, potential=None,
                 hermitian: bool = False, name: str = ""):
        self.grid = grid
        self.matrix = matrix
        self.kinetic = kinetic
        self.potential = potential
        self.hermitian_flag = hermitian
        self.name = name
        self._eig = None

    @property
    def free(self) -> bool:
        return self.matrix is None and self.potential is None

    def apply(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        if self.matrix is not None:
            return self.matrix @ c
        cols = c.reshape(self.grid.dim, -1)
        out = np.empty_like(cols)
        for k in range(cols.shape[1]):
            v = cols[:, k].reshape(self.grid.size, 4)
            w = np.zeros_like(v)
            if self.kinetic is not None:
                w += np.einsum("aij,aj->ai", self.kinetic, v)
            if self.potential is not None:
                pos = self.grid.to_position(v)
                w += self.grid.to_momentum(np.einsum("...ij,...j->...i", self.potential, pos)).reshape(-1, 4)
            out[:, k] = w.ravel()
        return out.reshape(c.shape)

    __matmul__ = apply

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        g = self.grid
        M = np.zeros((g.dim, g.dim), dtype=complex)
        if self.kinetic is not None:
            for s in range(4):
                for r in range(4):
                    M[s::4, r::4] += np.diag(self.kinetic[:, s, r])
        if self.potential is not None:
            M += _multiplication_matrix(g, self.potential)
        return M

    def eigh(self):
        if self._eig is None:
            self._eig = linalg.eigh(self.dense())
        return self._eig

    def norm_estimate(self) -> float:
        if self.matrix is not None or self._eig is not None:
            w = self.eigh()[0]
            return float(np.max(np.abs(w)))
        out = 0.0
        if self.kinetic is not None:
            out += np.max(np.linalg.norm(self.kinetic, ord=2, axis=(-2, -1)))
        if self.potential is not None:
            out += np.max(np.linalg.norm(self.potential, ord=2, axis=(-2, -1)))
        return float(out)


def _multiplication_matrix(grid: QuantumGrid, values: np.ndarray) -> np.ndarray:
    """Momentum-basis matrix of pointwise multiplication on the N-point grid."""
    axes = tuple(range(grid.dims))
    vt = np.fft.fftn(values, axes=axes) / grid.size
    lab = grid.labels()
    d = lab[:, None, :] - lab[None, :, :]
    idx = tuple(np.mod(d[..., j], grid.N[j]) for j in range(grid.dims))
    phase = np.exp(-2j * np.pi * sum(d[..., j] * grid.x_min[j] / grid.L[j] for j in range(grid.dims)))
    blocks = vt[idx] * phase[..., None, None]  # (a, b, 4, 4)
    return blocks.transpose(0, 2, 1, 3).reshape(grid.dim, grid.dim)


def weyl_matrix(sym: MatrixSymbol | Callable, grid: QuantumGrid, index=None, oversample: int = 2,
                chunk_points: int = 1 << 15, x_samples: int | None = None, tail_tol: float = 1e-14) -> np.ndarray:
    """Dense Weyl quantization restricted to momentum labels ``index`` (default all).

    The x-integral of each matrix element is an FFT over ``x_samples`` points
    per axis.  By default sampling starts coarse and doubles (up to
    ``oversample * N``) until the Fourier tail of the symbol drops below
    ``tail_tol``; frequencies beyond the sampled band are set to zero.
    """
    g = grid
    labels = g.labels()
    if index is None:
        index = np.arange(g.size)
    index = np.asarray(index)
    lab = labels[index]
    full = tuple(oversample * n for n in g.N)
    s = lab[:, None, :] + lab[None, :, :]
    d = lab[:, None, :] - lab[None, :, :]
    svals, inv = np.unique(s.reshape(-1, g.dims), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(svals) + 1))
    dflat = d.reshape(-1, g.dims)
    evaluate = sym.evaluate if isinstance(sym, MatrixSymbol) else sym

    if x_samples is not None:
        M = tuple(min(int(x_samples), f) for f in full)
        Bt = _symbol_fft(evaluate, g, svals, M, chunk_points)
    else:
        M = tuple(min(64, f) for f in full)
        while True:
            Bt = _symbol_fft(evaluate, g, svals, M, chunk_points)
            if all(m >= f for m, f in zip(M, full)) or _tail(Bt, M) <= tail_tol:
                break
            M = tuple(min(2 * m, f) for m, f in zip(M, full))

    out = np.zeros((len(index) ** 2, 4, 4), dtype=complex)
    inband = np.all([np.abs(dflat[:, j]) < (M[j] + 1) // 2 if M[j] < full[j] else np.ones(len(dflat), bool)
                     for j in range(g.dims)], axis=0)
    for k in range(len(svals)):
        sel = order[bounds[k]:bounds[k + 1]]
        sel = sel[inband[sel]]
        key = tuple(np.mod(dflat[sel, j], M[j]) for j in range(g.dims))
        out[sel] = Bt[(k,) + key]
    out = out.reshape(len(index), len(index), 4, 4)
    phase = np.exp(-2j * np.pi * sum(d[..., j] * g.x_min[j] / g.L[j] for j in range(g.dims)))
    out *= phase[..., None, None]
    return out.transpose(0, 2, 1, 3).reshape(4 * len(index), 4 * len(index))


def _symbol_fft(evaluate, g: QuantumGrid, svals, M, chunk_points):
    """Normalized FFT over x of B(x, pi hbar s / L) for every midpoint label s."""
    mesh = np.meshgrid(*[g.x_min[j] + g.L[j] / M[j] * np.arange(M[j]) for j in range(g.dims)], indexing="ij")
    npts = int(np.prod(M))
    step = max(1, chunk_points // npts)
    fft_axes = tuple(range(1, g.dims + 1))
    Bt = np.empty((len(svals),) + tuple(M) + (4, 4), dtype=complex)
    for start in range(0, len(svals), step):
        sv = svals[start:start + step]
        pbar = [np.pi * g.hbar * sv[:, j] / g.L[j] for j in range(g.dims)]
        X = g.embed([np.broadcast_to(m, (len(sv),) + m.shape) for m in mesh], g.transverse_x)
        P = g.embed([np.broadcast_to(pb.reshape((-1,) + (1,) * g.dims), (len(sv),) + tuple(M)) for pb in pbar],
                    g.transverse_p)
        B = np.asarray(evaluate(X, P))
        if B.ndim == 1 + g.dims:  # scalar symbol
            B = B[..., None, None] * np.eye(4)
        Bt[start:start + step] = np.fft.fftn(B, axes=fft_axes) / npts
    return Bt


def _tail(Bt, M) -> float:
    """Largest Fourier coefficient in the outer quarter of the sampled band, relative to the peak."""
    top = np.abs(Bt).max()
    if top == 0:
        return 0.0
    t = 0.0
    for j, m in enumerate(M):
        f = np.abs(np.fft.fftfreq(m) * m)
        sl = [slice(None)] * Bt.ndim
        sl[1 + j] = f >= m / 4
        t = max(t, np.abs(Bt[tuple(sl)]).max() if np.any(f >= m / 4) else 0.0)
    return t / top


def weyl_quantize(sym: MatrixSymbol, grid: QuantumGrid, check_nyquist: bool = True, **kw) -> GridOperator:
    if check_nyquist:
        grid.check_nyquist()
    mat = weyl_matrix(sym, grid, **kw)
    herm = bool(getattr(sym, "hermitian_flag", False))
    if herm:
        mat = 0.5 * (mat + mat.conj().T)
    return GridOperator(grid, matrix=mat, hermitian=herm, name=getattr(sym, "name", ""))


def dirac_operator(model: DiracSymbolSet, grid: QuantumGrid, dense: bool = False,
                   check_nyquist: bool = True) -> GridOperator:
    """The quantized Dirac Hamiltonian.

    The symbol is linear in p, so its Weyl quantization splits exactly into
    the multiplier c alpha.p + beta mc^2 and the multiplication operator
    e phi - e alpha.A(x).  ``dense=True`` returns the oversampled Weyl matrix
    instead, which is consistent with :func:`weyl_matrix` for other symbols.
    """
    if check_nyquist:
        grid.check_nyquist()
    if dense:
        return weyl_quantize(model.H, grid, check_nyquist=False)
    cst = model.constants
    p = grid.momenta()
    kin = cst.c * np.einsum("ak,kij->aij", p, ALPHA) + BETA * cst.rest_energy
    x = grid.positions()
    A = model.preset.vector_potential(x)
    phi = model.preset.potential(x)
    pot = cst.e * (phi[..., None, None] * I4 - np.einsum("...k,kij->...ij", A, ALPHA))
    if model.preset.name == "free" or not np.any(pot):
        pot = None
    return GridOperator(grid, kinetic=kin, potential=pot, hermitian=True, name="H")


def position_operator(grid: QuantumGrid, axis: int = 0) -> GridOperator:
    x = grid.positions()[..., axis]
    return GridOperator(grid, potential=x[..., None, None] * I4, hermitian=True, name=f"x{axis}")


def free_projectors(model: DiracSymbolSet, grid: QuantumGrid):
    """Momentum-space spectral projectors of the free Dirac operator, as (size, 4, 4) blocks."""
    if model.preset.name != "free":
        raise NotFreePreset("free projectors need the free preset")
    cst = model.constants
    p = grid.momenta()
    H0 = cst.c * np.einsum("ak,kij->aij", p, ALPHA) + BETA * cst.rest_energy
    eps = np.sqrt(cst.c ** 2 * np.sum(p * p, axis=1) + cst.rest_energy ** 2)[:, None, None]
    return 0.5 * (I4 + H0 / eps), 0.5 * (I4 - H0 / eps), H0, eps[:, 0, 0]


# -------------------------------------------------------------- propagation
def _block_exp(blocks: np.ndarray, tau: float, hbar: float) -> np.ndarray:
    w, v = np.linalg.eigh(blocks)
    return np.einsum("...ij,...j,...kj->...ik", v, np.exp(-1j * w * tau / hbar), v.conj())


_YOSHIDA = (1 / (2 - 2 ** (1 / 3)), -(2 ** (1 / 3)) / (2 - 2 ** (1 / 3)))


def propagate(H: GridOperator, c0: np.ndarray, t: float, method: str = "auto", dt: float | None = None) -> np.ndarray:
    """exp(-i H t / hbar) applied to coefficient vector(s) ``c0``.

    methods: ``exact`` (momentum blocks for free operators, otherwise a
    dense eigendecomposition), ``strang`` (order 2) and ``yoshida`` (order 4)
    splittings of kinetic and potential parts.
    """
    g = H.grid
    hbar = g.hbar
    c0 = np.asarray(c0, dtype=complex)
    if t == 0:
        return c0.copy()
    if method == "auto":
        method = "exact" if (H.free or H.matrix is not None or g.dim <= 2048) else "yoshida"
    if method == "exact":
        if H.free:
            U = _block_exp(H.kinetic, t, hbar)
            v = c0.reshape(g.size, 4, -1)
            return np.einsum("aij,ajk->aik", U, v).reshape(c0.shape)
        w, V = H.eigh()
        return V @ (np.exp(-1j * w * t / hbar)[:, None] * (V.conj().T @ c0.reshape(g.dim, -1))).reshape(c0.shape) \
            if c0.ndim > 1 else V @ (np.exp(-1j * w * t / hbar) * (V.conj().T @ c0))
    if H.matrix is not None:
        raise ValueError(f"method {method!r} needs a split operator")
    if dt is None:
        raise ValueError("splitting methods need dt")
    nsteps = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    tau = t / nsteps
    if method == "strang":
        weights = [(0.5, 1.0, 0.5)]
    elif method == "yoshida":
        w1, w0 = _YOSHIDA
        weights = [(w1 / 2, w1, w1 / 2), (w0 / 2, w0, w0 / 2), (w1 / 2, w1, w1 / 2)]
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    kin_cache, pot_cache = {}, {}

    def kin(f):
        if f not in kin_cache:
            kin_cache[f] = _block_exp(H.kinetic, f * tau, hbar) if H.kinetic is not None else None
        return kin_cache[f]

    def pot(f):
        if f not in pot_cache:
            pot_cache[f] = _block_exp(H.potential, f * tau, hbar) if H.potential is not None else None
        return pot_cache[f]

    v = c0.reshape(g.size, 4)
    for _ in range(nsteps):
        for a, b, cc in weights:
            if pot(a) is not None:
                psi = g.to_position(v)
                v = g.to_momentum(np.einsum("...ij,...j->...i", pot(a), psi)).reshape(g.size, 4)
            if kin(b) is not None:
                v = np.einsum("aij,aj->ai", kin(b), v)
            if pot(cc) is not None:
                psi = g.to_position(v)
                v = g.to_momentum(np.einsum("...ij,...j->...i", pot(cc), psi)).reshape(g.size, 4)
    return v.reshape(c0.shape)


def evolve_series(H: GridOperator, c0, times, method="auto", dt=None):
    """States at increasing ``times`` (restarting from the previous state)."""
    out = []
    c, t_prev = np.asarray(c0, dtype=complex), 0.0
    for t in times:
        c = propagate(H, c, t - t_prev, method, dt)
        t_prev = t
        out.append(c)
    return np.array(out)


# ------------------------------------------------------------- wavepackets
def spin_up(n0) -> np.ndarray:
    """Unit spinor with n0.sigma chi = chi."""
    n0 = np.asarray(n0, dtype=float)
    n0 = n0 / np.linalg.norm(n0)
    theta, ph = np.arccos(np.clip(n0[2], -1, 1)), np.arctan2(n0[1], n0[0])
    return np.array([np.cos(theta / 2), np.exp(1j * ph) * np.sin(theta / 2)])


def check_margin(grid: QuantumGrid, x0, width: float, widths: float = 5.0):
    for j in range(grid.dims):
        lo, hi = grid.x_min[j], grid.x_min[j] + grid.L[j]
        if min(x0[j] - lo, hi - x0[j]) < widths * width:
            raise BoundaryMarginViolation(
                f"packet at x{j}={x0[j]:.4g} lies within {widths} widths ({width:.3g}) of the box edge")


def gaussian_packet(grid: QuantumGrid, x0, p0, spinor, width: float | None = None,
                    check: bool = True) -> np.ndarray:
    """Normalized Gaussian spinor packet; default width sqrt(hbar/2) in |psi|^2."""
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    width = np.sqrt(grid.hbar / 2) if width is None else width
    if check:
        check_margin(grid, x0, width)
    x = grid.positions()
    env = np.ones(grid.N)
    phase = np.zeros(grid.N)
    for j in range(grid.dims):
        dxj = x[..., j] - x0[j]
        env = env * np.exp(-dxj ** 2 / (4 * width ** 2))
        phase = phase + p0[j] * dxj / grid.hbar
    psi = (env * np.exp(1j * phase))[..., None] * np.asarray(spinor, dtype=complex)
    c = grid.to_momentum(psi)
    return c / np.linalg.norm(c)


def coherent_state(model: DiracSymbolSet, grid: QuantumGrid, x0, p0, n0, branch: int = 1,
                   check: bool = True) -> np.ndarray:
    """Gaussian of width sqrt(hbar/2) carrying the spinor V(x0,p0) chi(n0)."""
    x3 = grid.embed([np.asarray(x0[j]) for j in range(grid.dims)], grid.transverse_x)
    p3 = grid.embed([np.asarray(p0[j]) for j in range(grid.dims)], grid.transverse_p)
    V = model.V(branch).evaluate(x3, p3)
    return gaussian_packet(grid, x0, p0, V @ spin_up(n0), check=check)


def expectation(op: GridOperator, c: np.ndarray) -> complex:
    return complex(np.vdot(c, op.apply(c)))


def momentum_window(c: np.ndarray, grid: QuantumGrid, tol: float = 1e-13) -> np.ndarray:
    """Momentum labels carrying all but ``tol`` of the weight."""
    w = np.sum(np.abs(c.reshape(grid.size, 4)) ** 2, axis=1)
    order = np.argsort(w)
    tail = np.cumsum(w[order])
    drop = order[tail <= tol * tail[-1]]
    keep = np.setdiff1d(np.arange(grid.size), drop)
    return keep


def weyl_expectation(sym: MatrixSymbol, grid: QuantumGrid, c: np.ndarray, tol: float = 1e-13) -> complex:
    """<psi, Op(B) psi> using only the momentum labels where psi lives."""
    idx = momentum_window(c, grid, tol)
    rows = (4 * idx[:, None] + np.arange(4)).ravel()
    B = weyl_matrix(sym, grid, index=idx)
    v = c[rows]
    return complex(np.vdot(v, B @ v))


# ------------------------------------------------------ Zitterbewegung (free)
def zitterbewegung_trace(model: DiracSymbolSet, grid: QuantumGrid, c0: np.ndarray, times, axis: int = 0,
                         method: str = "exact", dt: float | None = None):
    """Propagated <x(t)> next to the closed-form momentum-space expression.

    Returns (direct, closed_form, parts) where parts holds the three terms
    x(0), velocity term and oscillating interference term separately.
    """
    if model.preset.name != "free":
        raise NotFreePreset("Zitterbewegung closed form holds for the free preset only")
    H = dirac_operator(model, grid)
    X = position_operator(grid, axis)
    cst, hbar = model.constants, grid.hbar
    times = np.asarray(times, dtype=float)
    states = evolve_series(H, c0, times, method, dt)
    direct = np.array([np.real(expectation(X, s)) for s in states])

    _, _, H0, eps = free_projectors(model, grid)
    Hinv = np.linalg.inv(H0)
    pk = grid.momenta()[:, axis]
    v = c0.reshape(grid.size, 4)
    F = cst.c * ALPHA[axis] - cst.c ** 2 * pk[:, None, None] * Hinv
    Fv = np.einsum("aij,aj->ai", F, v)
    x0 = np.real(expectation(X, c0))
    vel = np.real(np.sum(np.conj(v) * (cst.c ** 2 * pk / eps ** 2)[:, None] * np.einsum("aij,aj->ai", H0, v)))
    # H0^-1 (exp(2 i H0 t / hbar) - 1) F psi via the spectral decomposition of each block
    Pp, Pm, _, _ = free_projectors(model, grid)
    osc = []
    for t in times:
        ph = np.exp(2j * eps * t / hbar)[:, None, None]
        E = (Pp * ph + Pm * np.conj(ph)) - I4
        term = np.einsum("aij,ajk,ak->ai", Hinv, E, Fv)
        osc.append(np.real(hbar / 2j * np.sum(np.conj(v) * term)))
    osc = np.array(osc)
    closed = x0 + times * vel + osc
    return direct, closed, {"x0": x0, "velocity": vel, "oscillation": osc}


def interference_term(model: DiracSymbolSet, grid: QuantumGrid, c: np.ndarray, axis: int = 0):
    """<P+ x P- + P- x P+> and <(i hbar / 2) H0^-1 F> for the same state."""
    Pp, Pm, H0, eps = free_projectors(model, grid)
    X = position_operator(grid, axis)
    v = c.reshape(grid.size, 4)
    cp = np.einsum("aij,aj->ai", Pp, v).ravel()
    cm = np.einsum("aij,aj->ai", Pm, v).ravel()
    lhs = np.vdot(cp, X.apply(cm)) + np.vdot(cm, X.apply(cp))
    cst = model.constants
    pk = grid.momenta()[:, axis]
    Hinv = np.linalg.inv(H0)
    F = cst.c * ALPHA[axis] - cst.c ** 2 * pk[:, None, None] * Hinv
    rhs = 0.5j * grid.hbar * np.sum(np.conj(v) * np.einsum("aij,ajk,ak->ai", Hinv, F, v))
    return complex(lhs), complex(rhs)


def projected_position(model: DiracSymbolSet, grid: QuantumGrid, branch: int = 1, axis: int = 0,
                       projector=None) -> GridOperator:
    """P x P with the exact free projector (or a supplied projector matrix)."""
    X = position_operator(grid, axis)
    if projector is None:
        Pp, Pm, _, _ = free_projectors(model, grid)
        blocks = Pp if branch > 0 else Pm

        def apply(c):
            v = np.asarray(c).reshape(grid.size, 4, -1)
            u = np.einsum("aij,ajk->aik", blocks, v).reshape(np.shape(c))
            w = X.apply(u).reshape(grid.size, 4, -1)
            return np.einsum("aij,ajk->aik", blocks, w).reshape(np.shape(c))

        op = GridOperator(grid, hermitian=True, name=f"x0{'+' if branch > 0 else '-'}")
        op.apply = apply
        op.__matmul__ = apply
        return op
    P = np.asarray(projector)
    return GridOperator(grid, matrix=P @ X.dense() @ P, hermitian=True, name="PxP")


# ------------------------------------------------------------------ Wigner
def wigner_transform(c: np.ndarray, grid: QuantumGrid, index=None):
    """Matrix Wigner function of a 1D grid state.

    Returns (x, p, W) with W of shape (2N, 2N, 4, 4) on the half-spaced
    phase-space lattice x_j = x_min + j L / 2N, p_k = pi hbar k / L; it
    satisfies sum tr W dx dp / (2 pi hbar) = ||psi||^2 and is dual to
    :func:`weyl_matrix`: sum tr(B W) dx dp / (2 pi hbar) = <psi, Op(B) psi>.
    """
    if grid.dims != 1:
        raise ValueError("wigner_transform is implemented for 1D grids")
    N, L, hbar = grid.N[0], grid.L[0], grid.hbar
    M = 2 * N
    v = c.reshape(N, 4)
    n = grid.axis_n(0)
    ks = np.arange(-N, N)
    W = np.zeros((M, len(ks), 4, 4), dtype=complex)
    x = grid.x_min[0] + L / M * np.arange(M)
    for ik, s in enumerate(ks):
        a = np.arange(N)
        b = s - n  # n_b = s - n_a
        ok = (b >= -N // 2) & (b < N // 2)
        a, nb = a[ok], b[ok]
        if not len(a):
            continue
        ib = nb + N // 2
        d = n[a] - nb
        outer = v[ib][:, :, None] * np.conj(v[a])[:, None, :]  # c_b c_a^dagger
        ph = np.exp(-2j * np.pi * np.outer(x, d) / L)
        W[:, ik] = np.einsum("jd,dst->jst", ph, outer) / M * (2 * M)
    p = np.pi * hbar * ks / L
    return x, p, W


def wigner_measure(grid: QuantumGrid) -> float:
    """dx dp / (2 pi hbar) of one cell of the Wigner lattice."""
    L, N, hbar = grid.L[0], grid.N[0], grid.hbar
    return (L / (2 * N)) * (np.pi * hbar / L) / (2 * np.pi * hbar)


def scalar_wigner(model: DiracSymbolSet, x, p, W, grid: QuantumGrid, n, branch: int = 1):
    """w(x,p,n) = tr(Delta(n) V* W V) on the Wigner lattice."""
    from .sphere import quantizer

    X, P = np.meshgrid(x, p, indexing="ij")
    x3 = grid.embed([X], grid.transverse_x)
    p3 = grid.embed([P], grid.transverse_p)
    V = model.V(branch).evaluate(x3, p3)
    w2 = np.swapaxes(V.conj(), -1, -2) @ W @ V
    return np.real(np.einsum("ij,...ji->...", quantizer(n), w2))
