"""Almost-projector symbols Pi = Pi_0 + hbar Pi_1 + ... and grid projectors.

At order k the idempotency defect G_k (hbar^k coefficient of Pi#Pi - Pi) and
the commutation defect F_k (hbar^k coefficient of H#Pi - Pi#H) of the
order-(k-1) symbol fix Pi_k block by block with P = Pi_0, Q = 1 - P:

    P Pi_k P = -P G_k P,    Q Pi_k Q = Q G_k Q,
    P Pi_k Q = -P F_k Q / (h_P - h_Q),    Q Pi_k P = Q F_k P / (h_P - h_Q).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ClusterOverlap, EInSpectrum, OrderUnavailable
from .grid import GridOperator, QuantumGrid, weyl_matrix
from .model import I4, DiracSymbolSet
from .symbols import MAX_TRUNCATION, MatrixSymbol, SymbolExpansion, moyal_term


def hierarchy_jets(model: DiracSymbolSet, branch: int, order: int, X, P) -> list:
    """Jets of Pi_0..Pi_order; Pi_k comes out at degree (input degree - k)."""
    Pi0 = model.Pi0(branch).fn(X, P)
    Hj = model.H.fn(X, P)
    hP = model.h(branch).fn(X, P)
    hQ = model.h(-branch).fn(X, P)
    gap = hP - hQ
    out = [Pi0]
    for k in range(1, order + 1):
        G = None
        for a in range(k):
            for b in range(k):
                j = k - a - b
                if j < 0:
                    continue
                t = moyal_term(out[a], out[b], j)
                G = t if G is None else G + t
        F = None
        for b in range(k):
            j = k - b
            t = moyal_term(Hj, out[b], j) - moyal_term(out[b], Hj, j)
            F = t if F is None else F + t
        d = min(G.degree, F.degree)
        G, F = G.truncate(d), F.truncate(d)
        Pk = Pi0.truncate(d)
        Qk = I4 - Pk
        inv_gap = 1.0 / gap.truncate(d)
        Pik = (-1.0) * (Pk @ G @ Pk) + Qk @ G @ Qk \
            - inv_gap * (Pk @ F @ Qk) + inv_gap * (Qk @ F @ Pk)
        out.append(Pik)
    return out


@dataclass
class AlmostProjectorSymbol:
    expansion: SymbolExpansion
    branch: int
    order: int
    _source: tuple = None  # (model, branch, order) for one-pass evaluation

    def evaluate(self, x, p, hbar: float) -> np.ndarray:
        return self.expansion.evaluate(x, p, hbar)

    def symbol(self, hbar: float) -> MatrixSymbol:
        """The truncated sum as a single symbol at fixed hbar."""
        coeffs = self.expansion.coefficients
        model, branch, order = self._source

        def fn(X, P):
            jets = hierarchy_jets(model, branch, order, X, P)
            d = jets[-1].degree
            out = jets[0].truncate(d)
            for k in range(1, len(jets)):
                out = out + jets[k].truncate(d) * hbar ** k
            return out

        return MatrixSymbol(fn, max_order=min(c.max_order for c in coeffs), hermitian=True,
                            name=f"Pi{'+' if self.branch > 0 else '-'}[{self.order}]",
                            loss=order, axes=coeffs[0].axes)


def correct_projector_symbol(model: DiracSymbolSet, branch: int, order: int) -> AlmostProjectorSymbol:
    if order > MAX_TRUNCATION:
        raise OrderUnavailable(f"projector order {order} exceeds the supported {MAX_TRUNCATION}")
    base = model.Pi0(branch)
    coeffs = []
    for k in range(order + 1):
        fn = (lambda X, P, k=k: hierarchy_jets(model, branch, k, X, P)[k])
        coeffs.append(MatrixSymbol(fn, max_order=base.max_order - k, hermitian=True,
                                   name=f"Pi{k}{'+' if branch > 0 else '-'}", loss=k, axes=base.axes))
    return AlmostProjectorSymbol(SymbolExpansion(coeffs), branch, order, (model, branch, order))


# ------------------------------------------------------------ grid level
@dataclass
class GridProjector:
    matrix: np.ndarray
    branch: int
    source_order: int
    raw: np.ndarray | None = None      # quantized almost-projector before flattening
    raw_spectrum: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return int(round(np.real(np.trace(self.matrix))))


def quantize_symbol(sym: AlmostProjectorSymbol, grid: QuantumGrid) -> np.ndarray:
    grid.check_nyquist()
    A = weyl_matrix(sym.symbol(grid.hbar), grid)
    return 0.5 * (A + A.conj().T)


def riesz_flatten(A: np.ndarray, strict: bool = True):
    """Spectral flattening: eigenvalues above 1/2 go to 1, the rest to 0."""
    w, V = linalg.eigh(A)
    if strict and np.any((w > 0.25) & (w < 0.75)):
        bad = w[(w > 0.25) & (w < 0.75)]
        raise ClusterOverlap(f"{len(bad)} eigenvalues of the almost-projector lie in (1/4, 3/4), e.g. {bad[0]:.4g}")
    Vs = V[:, w > 0.5]
    return Vs @ Vs.conj().T, w


def quantize_and_riesz(sym: AlmostProjectorSymbol, grid: QuantumGrid, strict: bool = True) -> GridProjector:
    A = quantize_symbol(sym, grid)
    P, w = riesz_flatten(A, strict)
    return GridProjector(P, sym.branch, sym.order, raw=A, raw_spectrum=w)


def spectral_projector(H: np.ndarray | GridOperator, E: float, branch: int = 1, gap_tol: float = 1e-9):
    """Spectral projector of H above (branch +) or below (branch -) the energy E."""
    if isinstance(H, GridOperator):
        w, V = H.eigh()
    else:
        w, V = linalg.eigh(H)
    if np.min(np.abs(w - E)) < gap_tol:
        raise EInSpectrum(f"E = {E} lies within {gap_tol} of an eigenvalue")
    sel = w > E if branch > 0 else w < E
    Vs = V[:, sel]
    return Vs @ Vs.conj().T


# -------------------------------------------------------------- norms
def restricted(A: np.ndarray, rows) -> np.ndarray:
    if rows is None:
        return A
    return A[np.ix_(rows, rows)]


def op_norm(A: np.ndarray, method: str = "svd", iters: int = 200, rng=None) -> float:
    """Operator 2-norm: exact SVD, or power iteration on A* A."""
    if method == "svd":
        return float(linalg.svdvals(A)[0]) if A.size else 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.normal(size=A.shape[1]) + 1j * rng.normal(size=A.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        u = A.conj().T @ (A @ v)
        s_new = np.linalg.norm(u)
        if s_new == 0:
            return 0.0
        v = u / s_new
        if abs(s_new - s) <= 1e-12 * s_new:
            break
        s = s_new
    return float(np.sqrt(s_new))


@dataclass
class ProjectorDefects:
    hbar: float
    idem: float
    comm: float
    complement: float
    distance: float | None = None


def measure_defects(model: DiracSymbolSet, order: int, grid: QuantumGrid, p_band: float | None = 2.0,
                    E: float | None = 0.0, norm: str = "svd", H_dense: np.ndarray | None = None,
                    strict: bool = True) -> ProjectorDefects:
    """Band-restricted defects of the quantized order-N almost-projectors at one hbar."""
    from .grid import dirac_operator

    if H_dense is None:
        H_dense = dirac_operator(model, grid, dense=True).matrix
    rows = grid.band(p_band) if p_band is not None else None
    plus = quantize_symbol(correct_projector_symbol(model, 1, order), grid)
    minus = quantize_symbol(correct_projector_symbol(model, -1, order), grid)
    idem = op_norm(restricted(plus @ plus - plus, rows), norm)
    comm = op_norm(restricted(H_dense @ plus - plus @ H_dense, rows), norm)
    comp = op_norm(restricted(plus + minus - np.eye(grid.dim), rows), norm)
    dist = None
    if E is not None:
        Pf, _ = riesz_flatten(plus, strict)
        PE = spectral_projector(H_dense, E, 1)
        dist = op_norm(restricted(Pf - PE, rows), norm)
    return ProjectorDefects(grid.hbar, idem, comm, comp, dist)


def spectral_projector_distance(P: GridProjector, H, E: float, rows=None, norm: str = "svd") -> float:
    PE = spectral_projector(H, E, P.branch)
    return op_norm(restricted(P.matrix - PE, rows), norm)
