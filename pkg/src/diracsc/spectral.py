"""Discrete-spectrum experiments: eigenpairs in energy windows, projected
eigenspinors with their quasimode residuals, Weyl/Szego window counts and a
quantum-ergodicity measurement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, gmres

from .classical import sample_shell, shell_volume
from .errors import ConvergenceFailure, EmptyRetainedSet, EmptyShell, WindowEmpty
from .grid import GridOperator, QuantumGrid
from .model import DiracSymbolSet
from .sphere import random_unit_vectors, sphere_values

DENSE_THRESHOLD = 16384
CLUSTER_TOL = 1e-9
NORM_FLOOR = 1e-8
SUM_FLOOR = 1e-9      # roundoff allowance on sums of ~N squared norms


@dataclass
class EigenPair:
    E: float
    psi: np.ndarray        # normalized plane-wave coefficients
    residual: float = 0.0  # ||H psi - E psi||


@dataclass
class Spectrum:
    """All computed eigenpairs packed as arrays (columns of ``vectors``)."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    norm: float

    def pairs(self):
        return [EigenPair(float(e), self.vectors[:, i], float(r))
                for i, (e, r) in enumerate(zip(self.values, self.residuals))]

    def window(self, E: float, half_width: float) -> np.ndarray:
        return np.flatnonzero(np.abs(self.values - E) <= half_width)


def _as_matrix(H):
    return H.dense() if isinstance(H, GridOperator) else np.asarray(H)


def _residuals(H, w, V):
    apply = H.apply if isinstance(H, GridOperator) else (lambda v: H @ v)
    return np.linalg.norm(apply(V) - V * w[None, :], axis=0)


def diagonalize(H, window=None, dense_threshold: int = DENSE_THRESHOLD, tol: float = 1e-10,
                k0: int = 32, max_k: int = 2048) -> Spectrum:
    """Eigenpairs of H, all of them or those with E - w <= E_n <= E + w for window = (E, w).

    Dense eigh up to ``dense_threshold``; beyond it shift-invert Lanczos at the
    window center, growing k until the window is bracketed.
    """
    dim = H.grid.dim if isinstance(H, GridOperator) else H.shape[0]
    if dim <= dense_threshold:
        if isinstance(H, GridOperator):
            w, V = H.eigh()
        else:
            w, V = linalg.eigh(H)
        nrm = float(np.max(np.abs(w)))
        if window is not None:
            sel = np.abs(w - window[0]) <= window[1]
            w, V = w[sel], V[:, sel]
    else:
        if window is None:
            raise ValueError("the iterative eigensolver needs a window")
        w, V, nrm = _shift_invert(H, window, k0, max_k, tol)
    if window is not None and len(w) == 0:
        raise WindowEmpty(f"no eigenvalues in [{window[0] - window[1]}, {window[0] + window[1]}]")
    res = _residuals(H, w, V) if len(w) else np.zeros(0)
    if len(res) and res.max() > tol * max(nrm, 1.0):
        raise ConvergenceFailure(f"eigen-residual {res.max():.3g} exceeds {tol:g} * ||H||")
    return Spectrum(w, V, res, nrm)


def _shift_invert(H, window, k0, max_k, tol):
    E, hw = window
    dim = H.grid.dim if isinstance(H, GridOperator) else H.shape[0]
    apply = H.apply if isinstance(H, GridOperator) else (lambda v: H @ v)
    Hop = LinearOperator((dim, dim), matvec=apply, dtype=complex)
    shifted = LinearOperator((dim, dim), matvec=lambda v: apply(v) - E * v, dtype=complex)

    def solve(b):
        x, info = gmres(shifted, b, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
        if info != 0:
            raise ConvergenceFailure(f"inner shift-invert solve failed (info={info})")
        return x

    OPinv = LinearOperator((dim, dim), matvec=solve, dtype=complex)
    nrm = float(abs(eigsh(Hop, k=1, which="LM", return_eigenvectors=False, tol=1e-6)[0]))
    k = k0
    while True:
        try:
            w, V = eigsh(Hop, k=min(k, dim - 2), sigma=E, OPinv=OPinv, which="LM", tol=tol * 1e-2)
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        if (w[0] < E - hw and w[-1] > E + hw) or k >= max_k or k >= dim - 2:
            break
        k *= 2
    if not (w[0] < E - hw and w[-1] > E + hw):
        raise ConvergenceFailure(f"window not bracketed with k = {k} eigenpairs")
    sel = np.abs(w - E) <= hw
    return w[sel], V[:, sel], nrm


# ------------------------------------------------------------ projections
@dataclass
class ProjectedEigenData:
    """Per-eigenpair projections onto the + and - ranges (column 0 = +, 1 = -)."""

    E: np.ndarray
    norms: np.ndarray          # ||P psi_n||, shape (n, 2)
    phi: list                  # [phi_plus (dim, n), phi_minus (dim, n)], NaN columns when absent
    present: np.ndarray        # norm above the floor
    r: np.ndarray              # ||[H,P] psi|| / ||P psi||
    s: np.ndarray              # ||[HP,P] psi|| / ||P psi||
    compression: np.ndarray    # ||(PHP - E) phi||, the residual that bounds the compressed spectrum
    quasimode: np.ndarray      # ||(H - E) phi|| recomputed directly
    floor: float = NORM_FLOOR

    def rows(self):
        header = ["E", "norm_plus", "norm_minus", "r_plus", "r_minus", "s_plus", "s_minus"]
        data = [[self.E[i], self.norms[i, 0], self.norms[i, 1], self.r[i, 0], self.r[i, 1],
                 self.s[i, 0], self.s[i, 1]] for i in range(len(self.E))]
        return header, data


def project_eigens(spec: Spectrum, H, Pplus: np.ndarray, Pminus: np.ndarray, floor: float = NORM_FLOOR,
                   idx=None) -> ProjectedEigenData:
    Hm = _as_matrix(H)
    idx = np.arange(len(spec.values)) if idx is None else np.asarray(idx)
    Psi = spec.vectors[:, idx]
    E = spec.values[idx]
    n = len(idx)
    norms = np.zeros((n, 2))
    r = np.full((n, 2), np.nan)
    s = np.full((n, 2), np.nan)
    comp = np.full((n, 2), np.nan)
    qm = np.full((n, 2), np.nan)
    present = np.zeros((n, 2), bool)
    phis = []
    HPsi = Hm @ Psi
    for b, P in enumerate((Pplus, Pminus)):
        PPsi = P @ Psi
        nrm = np.linalg.norm(PPsi, axis=0)
        norms[:, b] = nrm
        ok = nrm >= floor
        present[:, b] = ok
        phi = np.full_like(PPsi, np.nan)
        phi[:, ok] = PPsi[:, ok] / nrm[ok]
        phis.append(phi)
        if not ok.any():
            continue
        HP = Hm @ PPsi                       # H P psi
        PH = P @ HPsi                        # P H psi
        comm = HP - PH                       # [H, P] psi
        HPP = Hm @ (P @ PPsi)                # HP P psi
        PHP = P @ HP                         # P HP psi
        r[ok, b] = np.linalg.norm(comm[:, ok], axis=0) / nrm[ok]
        s[ok, b] = np.linalg.norm((HPP - PHP)[:, ok], axis=0) / nrm[ok]
        ph = phi[:, ok]
        qm[ok, b] = np.linalg.norm(Hm @ ph - ph * E[ok][None, :], axis=0)
        comp[ok, b] = np.linalg.norm(P @ (Hm @ ph) - ph * E[ok][None, :], axis=0)
    return ProjectedEigenData(E, norms, phis, present, r, s, comp, qm, floor)


def compressed_spectrum(H, P: np.ndarray, rank_tol: float = 0.5) -> np.ndarray:
    """Eigenvalues of P H P restricted to the range of the orthogonal projector P."""
    Hm = _as_matrix(H)
    w, U = linalg.eigh(P)
    B = U[:, w > rank_tol]
    return linalg.eigvalsh(B.conj().T @ Hm @ B)


def nearest_distance(values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Distance from each target to the closest entry of ``values``."""
    values = np.sort(values)
    i = np.clip(np.searchsorted(values, targets), 1, len(values) - 1)
    return np.minimum(np.abs(values[i] - targets), np.abs(values[i - 1] - targets))


# ------------------------------------------------------------ census
def clusters(values: np.ndarray, tol: float = CLUSTER_TOL):
    """Index blocks of sorted eigenvalues whose neighbours lie within tol."""
    order = np.argsort(values)
    v = values[order]
    cuts = np.flatnonzero(np.diff(v) > tol) + 1
    return [order[b] for b in np.split(np.arange(len(v)), cuts)]


def window_count(values: np.ndarray, E: float, half_width: float, tol: float = CLUSTER_TOL,
                 edge_tol: float = 0.0):
    """Cluster-aware count in [E - w, E + w] plus the ambiguity count.

    Clusters are assigned as a block by their mean; a cluster that straddles
    an edge or sits within ``edge_tol`` of one contributes its size to the
    ambiguity.
    """
    lo, hi = E - half_width, E + half_width
    n = 0
    amb = 0
    for blk in clusters(np.asarray(values), tol):
        vals = values[blk]
        mean = vals.mean()
        if lo <= mean <= hi:
            n += len(blk)
        near = min(abs(vals.min() - lo), abs(vals.max() - lo), abs(vals.min() - hi), abs(vals.max() - hi))
        straddle = (vals.min() < lo <= vals.max()) or (vals.min() <= hi < vals.max())
        if straddle or near <= edge_tol:
            amb += len(blk)
    return n, amb


@dataclass
class WindowCensus:
    E: float
    omega: float
    hbar: float
    N: int
    N_pm: tuple
    szego: tuple
    N_delta: tuple
    delta: float
    volumes: tuple
    prediction: float
    prediction_pm: tuple
    ambiguity: int
    ambiguity_pm: tuple
    ranks: tuple
    trace_sums: tuple
    dim_eff: int = 1
    mixing: float = 0.0     # sum over the window of min(||P+ psi||^2, ||P- psi||^2)
    extra: dict = field(default_factory=dict)

    @property
    def relative_error(self) -> float:
        return abs(self.N - self.prediction) / self.prediction if self.prediction > 0 else float("inf")

    def szego_ok(self) -> bool:
        """|S - N| within the ambiguity count plus the fractional minority-branch mass."""
        return all(abs(S - n) <= a + self.mixing + SUM_FLOOR for S, n, a in zip(self.szego, self.N_pm, self.ambiguity_pm))

    def trace_defect(self) -> float:
        return max(abs(t - r) for t, r in zip(self.trace_sums, self.ranks))

    def fraction_bound(self):
        """(Ndelta/N, vol fraction - delta) per branch."""
        tot = sum(self.volumes)
        return [(nd / self.N if self.N else 0.0, (v / tot if tot else 0.0) - self.delta)
                for nd, v in zip(self.N_delta, self.volumes)]

    def row(self):
        return [self.hbar, self.N, self.prediction, self.N_pm[0], self.N_pm[1], self.szego[0], self.szego[1],
                self.N_delta[0], self.N_delta[1], self.ambiguity, self.ambiguity_pm[0], self.ambiguity_pm[1],
                self.volumes[0], self.volumes[1]]

    HEADER = ["hbar", "N", "prediction", "N_plus", "N_minus", "szego_plus", "szego_minus", "Ndelta_plus",
              "Ndelta_minus", "ambiguity", "ambiguity_plus", "ambiguity_minus", "vol_plus", "vol_minus"]


def weyl_prediction(volume: float, omega: float, hbar: float, dim_eff: int, multiplicity: int = 2) -> float:
    """Expected count in a window of width 2 hbar omega: 2 hbar omega g vol / (2 pi hbar)^d."""
    return 2 * hbar * omega * multiplicity * volume / (2 * np.pi * hbar) ** dim_eff


def shell_volumes(model: DiracSymbolSet, grid: QuantumGrid, E: float, samples: int = 4096, rng=None):
    axes = tuple(range(grid.dims))
    box = np.full(3, 1.0)
    box[list(axes)] = grid.L
    tp = np.asarray(grid.transverse_p, dtype=float)
    return tuple(shell_volume(model, b, E, box, axes, samples, rng, transverse_p=tp) for b in (1, -1))


def window_census(spec: Spectrum, H, Pplus: np.ndarray, Pminus: np.ndarray, grid: QuantumGrid,
                  model: DiracSymbolSet, E: float, omega: float, delta: float = 0.1,
                  volumes=None, samples: int = 4096) -> WindowCensus:
    """Counts of H, of the compressions P H P, Szego sums and Ndelta in [E - hbar w, E + hbar w]."""
    hbar = grid.hbar
    hw = hbar * omega
    idx = spec.window(E, hw)
    data = project_eigens(spec, H, Pplus, Pminus, idx=idx)
    N, amb = window_count(spec.values, E, hw)
    N_pm, amb_pm, ranks, traces = [], [], [], []
    for b, P in enumerate((Pplus, Pminus)):
        ranks.append(int(round(np.real(np.trace(P)))))
        if len(spec.values) == grid.dim:
            traces.append(float(np.sum(np.linalg.norm(P @ spec.vectors, axis=0) ** 2)))
        else:
            traces.append(float("nan"))
        # eigenvalues closer to an edge than the quasimode residual of a retained
        # state may sit on either side of it
        kept = data.norms[:, b] ** 2 >= delta
        edge = float(np.max(data.r[kept, b])) if kept.any() else 0.0
        comp = compressed_spectrum(H, P)
        n, a = window_count(comp, E, hw, edge_tol=edge)
        # the H-side edge clusters move the window sum as well
        _, aH = window_count(spec.values, E, hw, edge_tol=edge)
        N_pm.append(n)
        amb_pm.append(a + aH)
    szego = tuple(float(np.sum(data.norms[:, b] ** 2)) for b in range(2))
    Nd = tuple(int(np.sum(data.norms[:, b] ** 2 >= delta)) for b in range(2))
    if volumes is None:
        volumes = shell_volumes(model, grid, E, samples)
    d = grid.dims
    pred_pm = tuple(weyl_prediction(v, omega, hbar, d) for v in volumes)
    return WindowCensus(E, omega, hbar, N, tuple(N_pm), szego, Nd, delta, tuple(volumes), sum(pred_pm), pred_pm,
                        amb, tuple(amb_pm), tuple(ranks), tuple(traces), d,
                        float(np.sum(np.min(data.norms ** 2, axis=1))), extra={"data": data})


# ------------------------------------------------------------ quantum ergodicity
@dataclass
class QEResult:
    branch: int
    E: np.ndarray
    expectations: np.ndarray
    M_E: float
    M_E_se: float
    mean_deviation: float
    variance: float
    density_fraction: float
    eps: float
    histogram: tuple
    single_shell: np.ndarray | None = None

    def rows(self):
        return ["E", "expectation"], [[e, x] for e, x in zip(self.E, self.expectations)]


def microcanonical_average(model: DiracSymbolSet, branch: int, B_symbol, E: float, grid: QuantumGrid,
                           samples: int, rng: np.random.Generator):
    """M_E(b0) over delta(h - E) dx dp x dn by Monte Carlo; returns (mean, standard error)."""
    axes = tuple(range(grid.dims))
    box = np.full(3, 1.0)
    box[list(axes)] = grid.L
    x, p = sample_shell(model, branch, E, samples, rng, box, axes,
                        transverse_p=np.asarray(grid.transverse_p, dtype=float))
    n = random_unit_vectors(rng, samples)
    V = model.V(branch).evaluate(x, p)
    M = np.swapaxes(V.conj(), -1, -2) @ B_symbol.evaluate(x, p) @ V
    b = sphere_values(M, n)
    return float(np.mean(b)), float(np.std(b, ddof=1) / np.sqrt(len(b)))


def qe_diagnostic(data: ProjectedEigenData, B: np.ndarray, B_symbol, model: DiracSymbolSet, grid: QuantumGrid,
                  E: float, branch: int = 1, delta: float = 0.1, eps: float = 0.1, samples: int = 4000,
                  rng: np.random.Generator | None = None, bins: int = 20, psi: np.ndarray | None = None) -> QEResult:
    """Expectations of B in the retained normalized projected eigenspinors against M_E(b0)."""
    rng = np.random.default_rng(0) if rng is None else rng
    b = 0 if branch > 0 else 1
    keep = data.present[:, b] & (data.norms[:, b] ** 2 >= delta)
    if not keep.any():
        raise EmptyRetainedSet(f"no eigenspinor with ||P psi||^2 >= {delta} on branch {branch:+d}")
    phi = data.phi[b][:, keep]
    vals = np.real(np.einsum("ij,ij->j", phi.conj(), B @ phi))
    M, se = microcanonical_average(model, branch, B_symbol, E, grid, samples, rng)
    hist = np.histogram(data.norms[:, 0] ** 2, bins=bins, range=(0.0, 1.0))
    single = None
    if psi is not None:
        # one shell empty: genuine eigenspinors instead of projections
        try:
            microcanonical_average(model, -branch, B_symbol, E, grid, 64, np.random.default_rng(1))
        except EmptyShell:
            single = np.real(np.einsum("ij,ij->j", psi.conj(), B @ psi))
    return QEResult(branch, data.E[keep], vals, M, se, float(np.mean(vals - M)), float(np.var(vals)),
                    float(np.mean(np.abs(vals - M) <= eps)), eps, (hist[0].tolist(), hist[1].tolist()), single)
