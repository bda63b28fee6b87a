"""Spin-1/2 Stratonovich-Weyl quantizer and the matrix <-> sphere-function map.

Convention: b(n) = tr(Delta(n) B) and B = 2 * mean_n[b(n) Delta(n)] with the
normalized area measure.  This reproduces b = sqrt(3/4) hbar n_k for
B = (hbar/2) sigma_k and makes the round trip exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonHermitian, QuadratureDegreeTooLow
from .model import I2, SIGMA

SQRT3 = np.sqrt(3.0)


def quantizer(n) -> np.ndarray:
    """Delta(n) = (I + sqrt(3) n.sigma) / 2, broadcasting over leading axes of n."""
    n = np.asarray(n, dtype=float)
    return 0.5 * (I2 + SQRT3 * np.einsum("...k,kij->...ij", n, SIGMA))


@dataclass
class SphereFunction:
    """Affine function b(n) = a0 + a.n."""

    a0: float
    a: np.ndarray
    band_limit: int = 1

    def evaluate(self, n) -> np.ndarray:
        return self.a0 + np.asarray(n, dtype=float) @ np.asarray(self.a)

    __call__ = evaluate


def octahedral_rule():
    pts = np.vstack([np.eye(3), -np.eye(3)])
    return pts, np.full(6, 1 / 6), 3


def lebedev14_rule():
    """14-point Lebedev rule, exact to degree 5."""
    ax = np.vstack([np.eye(3), -np.eye(3)])
    cube = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)]) / SQRT3
    pts = np.vstack([ax, cube])
    w = np.concatenate([np.full(6, 1 / 15), np.full(8, 3 / 40)])
    return pts, w, 5


RULES = {"octahedral": octahedral_rule, "lebedev14": lebedev14_rule}


def _is_hermitian(B, tol=1e-12) -> bool:
    B = np.asarray(B)
    return np.allclose(B, np.swapaxes(B.conj(), -1, -2), atol=tol * max(1.0, np.abs(B).max()))


def matrix_to_sphere(B) -> SphereFunction:
    """b(n) = tr(Delta(n) B) = tr(B)/2 + (sqrt(3)/2) tr(B sigma).n."""
    B = np.asarray(B, dtype=complex)
    if not _is_hermitian(B):
        raise NonHermitian("matrix_to_sphere needs a hermitian 2x2 matrix")
    a0 = 0.5 * np.real(np.trace(B))
    a = 0.5 * SQRT3 * np.real(np.einsum("ij,kji->k", B, SIGMA))
    return SphereFunction(float(a0), a)


def sphere_to_matrix(b, rule: str = "lebedev14", min_degree: int = 2) -> np.ndarray:
    """B = 2 * sum_i w_i b(n_i) Delta(n_i)."""
    pts, w, degree = RULES[rule]()
    if degree < min_degree:
        raise QuadratureDegreeTooLow(f"rule {rule} is exact to degree {degree} < {min_degree}")
    f = b.evaluate if hasattr(b, "evaluate") else b
    vals = np.asarray([f(n) for n in pts], dtype=float)
    return 2 * np.einsum("i,i,ijk->jk", w, vals, quantizer(pts))


def sphere_average(f, rule: str = "lebedev14") -> float:
    pts, w, _ = RULES[rule]()
    return float(np.sum(w * np.asarray([f(n) for n in pts])))


def rotation_of(g) -> np.ndarray:
    """R(g)_ij = tr(sigma_i g sigma_j g*) / 2, for g in SU(2) (batched)."""
    g = np.asarray(g, dtype=complex)
    gh = np.swapaxes(g.conj(), -1, -2)
    return 0.5 * np.real(np.einsum("iab,...bc,jcd,...da->...ij", SIGMA, g, SIGMA, gh))


def covariance_check(g, n) -> float:
    """|| g Delta(n) g* - Delta(R(g) n) ||."""
    g = np.asarray(g, dtype=complex)
    lhs = g @ quantizer(n) @ np.swapaxes(g.conj(), -1, -2)
    rhs = quantizer(np.einsum("...ij,...j->...i", rotation_of(g), n))
    return float(np.max(np.linalg.norm(lhs - rhs, ord=2, axis=(-2, -1))))


def random_su2(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random SU(2) elements from uniform unit quaternions."""
    q = rng.normal(size=(1 if size is None else size, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    a = q[:, 0] + 1j * q[:, 3]
    b = q[:, 2] + 1j * q[:, 1]
    g = np.stack([np.stack([a, -np.conj(b)], -1), np.stack([b, np.conj(a)], -1)], -2)
    return g[0] if size is None else g


def random_unit_vectors(rng: np.random.Generator, size: int) -> np.ndarray:
    v = rng.normal(size=(size, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sphere_values(B, n) -> np.ndarray:
    """Vectorized tr(Delta(n) B) for stacks of 2x2 matrices B (..., 2, 2) and unit vectors n (..., 3)."""
    B = np.asarray(B, dtype=complex)
    a0 = 0.5 * np.real(np.trace(B, axis1=-2, axis2=-1))
    a = 0.5 * SQRT3 * np.real(np.einsum("...ij,kji->...k", B, SIGMA))
    return a0 + np.sum(a * np.asarray(n, dtype=float), axis=-1)
