"""Matrix-valued phase-space symbols, truncated Moyal products and Poisson brackets.

Symbols are closures ``fn(X, P) -> Jet`` over the three position and three
momentum jets.  Only the conjugate pairs listed in ``axes`` carry jet
variables; the remaining coordinates enter as constants, which is exact
whenever nothing depends on the corresponding positions (the Moyal terms
pair ``d/dx_i`` with ``d/dp_i``).

A derived symbol (a Moyal coefficient, a bracket) consumes derivatives of
its operands; ``loss`` records how many jet degrees it eats so that
``MatrixSymbol.jet`` can request enough input degree.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientDerivativeOrder
from .jets import Jet

ALL_AXES = (0, 1, 2)
DEFAULT_TRUNCATION = 2
MAX_TRUNCATION = 4
# analytic symbols can supply any jet degree; this caps runaway requests
BASE_MAX_ORDER = 8


def phase_jets(x, p, degree: int, axes: Sequence[int] = ALL_AXES):
    """Position and momentum jets at a batch of points ``x, p`` of shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    nvar = 2 * len(axes)
    X, P = [], []
    for i in range(3):
        if i in axes:
            k = axes.index(i)
            X.append(Jet.variable(x[..., i], k, nvar, degree))
            P.append(Jet.variable(p[..., i], len(axes) + k, nvar, degree))
        else:
            X.append(Jet.constant(x[..., i], nvar, degree))
            P.append(Jet.constant(p[..., i], nvar, degree))
    return X, P


def _prod(a: Jet, b: Jet) -> Jet:
    if a.vdim and b.vdim:
        return a @ b
    return a * b


def _multi_indices(n: int, total: int):
    for m in product(range(total + 1), repeat=n):
        if sum(m) == total:
            yield m


def moyal_term(a: Jet, b: Jet, j: int) -> Jet:
    """The j-th Moyal bidifferential term (without the power of hbar).

    ``(1/j!) ((i/2)(d_x^a d_p^b - d_p^a d_x^b))^j A B`` expanded by the
    multinomial theorem; the result has degree ``min(deg) - j``.
    """
    if j == 0:
        return _prod(a, b)
    n = a.nvar // 2
    out = None
    pref = (0.5j) ** j
    for s in range(j + 1):
        for ma in _multi_indices(n, j - s):
            for mb in _multi_indices(n, s):
                w = pref * (-1) ** s / (np.prod([factorial(v) for v in ma + mb]))
                da = a.diff(tuple(ma) + tuple(mb))   # d_x^ma d_p^mb A
                db = b.diff(tuple(mb) + tuple(ma))   # d_x^mb d_p^ma B
                term = _prod(da, db) * w
                out = term if out is None else out + term
    return out


def poisson(a: Jet, b: Jet) -> Jet:
    """Matrix Poisson bracket grad_p A . grad_x B - grad_x A . grad_p B."""
    n = a.nvar // 2
    out = None
    for i in range(n):
        t = _prod(a.deriv(n + i), b.deriv(i)) - _prod(a.deriv(i), b.deriv(n + i))
        out = t if out is None else out + t
    return out


class MatrixSymbol:
    """A smooth map (x, p) -> matrix (or scalar) with exact derivative oracles."""

    def __init__(
        self,
        fn: Callable[[list, list], Jet],
        max_order: int = BASE_MAX_ORDER,
        hermitian: bool = False,
        name: str = "",
        loss: int = 0,
        axes: Sequence[int] = ALL_AXES,
    ):
        self.fn = fn
        self.max_order = max_order
        self.hermitian_flag = hermitian
        self.name = name
        self.loss = loss
        self.axes = tuple(axes)

    def jet(self, x, p, degree: int = 0, axes: Sequence[int] | None = None) -> Jet:
        if degree > self.max_order:
            raise InsufficientDerivativeOrder(
                f"{self.name or 'symbol'} supplies derivatives up to order {self.max_order}, {degree} requested"
            )
        axes = self.axes if axes is None else tuple(axes)
        X, P = phase_jets(x, p, degree + self.loss, axes)
        out = self.fn(X, P)
        return out.truncate(degree) if not isinstance(out, np.ndarray) else out

    def evaluate(self, x, p) -> np.ndarray:
        return self.jet(x, p, 0).value

    __call__ = evaluate

    def derivative(self, x, p, alpha=(0, 0, 0), beta=(0, 0, 0)) -> np.ndarray:
        """d_x^alpha d_p^beta of the symbol at (x, p)."""
        alpha, beta = tuple(alpha), tuple(beta)
        order = sum(alpha) + sum(beta)
        jet = self.jet(x, p, order, ALL_AXES)
        return jet.partial(alpha + beta)

    def __repr__(self) -> str:
        return f"MatrixSymbol({self.name!r}, max_order={self.max_order})"


def constant_symbol(matrix, name: str = "") -> MatrixSymbol:
    matrix = np.asarray(matrix)
    herm = matrix.ndim == 2 and np.allclose(matrix, matrix.conj().T)

    def fn(X, P):
        return Jet.constant(np.broadcast_to(matrix, X[0].value.shape + matrix.shape), X[0].nvar, X[0].degree, matrix.ndim)

    return MatrixSymbol(fn, max_order=10**6, hermitian=herm, name=name or "const")


def _derived(fn, operands: Sequence[MatrixSymbol], extra_loss: int, name: str, hermitian=False) -> MatrixSymbol:
    loss = max(s.loss for s in operands) + extra_loss
    max_order = min(s.max_order for s in operands) - extra_loss
    axes = tuple(sorted(set().union(*[set(s.axes) for s in operands])))
    return MatrixSymbol(fn, max_order=max_order, hermitian=hermitian, name=name, loss=loss, axes=axes)


def matrix_poisson_bracket(a: MatrixSymbol, b: MatrixSymbol) -> MatrixSymbol:
    if min(a.max_order, b.max_order) < 1:
        raise InsufficientDerivativeOrder("Poisson bracket needs first derivatives")
    return _derived(lambda X, P: poisson(a.fn(X, P), b.fn(X, P)), (a, b), 1, f"{{{a.name},{b.name}}}")


@dataclass
class SymbolExpansion:
    """B(x,p;hbar) ~ sum_k hbar^(k + offset) B_k(x,p)."""

    coefficients: list
    offset: int = 0

    @property
    def truncation_order(self) -> int:
        return len(self.coefficients)

    def evaluate(self, x, p, hbar: float) -> np.ndarray:
        out = 0
        for k, c in enumerate(self.coefficients):
            out = out + hbar ** (k + self.offset) * c.evaluate(x, p)
        return out

    def coefficient(self, power: int) -> MatrixSymbol | None:
        k = power - self.offset
        if 0 <= k < len(self.coefficients):
            return self.coefficients[k]
        return None

    @classmethod
    def of(cls, *symbols: MatrixSymbol) -> "SymbolExpansion":
        return cls(list(symbols))


def _as_expansion(s) -> SymbolExpansion:
    return s if isinstance(s, SymbolExpansion) else SymbolExpansion([s])


def star_product(a, b, order: int = DEFAULT_TRUNCATION) -> SymbolExpansion:
    """Truncated Moyal product a # b with coefficients up to hbar^order."""
    a, b = _as_expansion(a), _as_expansion(b)
    if order > MAX_TRUNCATION:
        raise InsufficientDerivativeOrder(f"truncation order {order} exceeds {MAX_TRUNCATION}")
    coeffs = []
    for n in range(order + 1):
        terms = []
        for k, A in enumerate(a.coefficients):
            for l, B in enumerate(b.coefficients):
                j = n - k - l
                if j < 0:
                    continue
                if j > min(A.max_order, B.max_order):
                    raise InsufficientDerivativeOrder(
                        f"Moyal term of order {j} needs derivatives beyond {min(A.max_order, B.max_order)}"
                    )
                terms.append((j, A, B))
        coeffs.append(_sum_of_terms(terms, f"(a#b)_{n}"))
    return SymbolExpansion(coeffs, a.offset + b.offset)


def _sum_of_terms(terms, name: str) -> MatrixSymbol:
    if not terms:
        return _zero_like()
    ops = [s for _, A, B in terms for s in (A, B)]
    jmax = max(j for j, _, _ in terms)
    # each term needs its own j derivatives on top of its operands' loss
    loss = max(max(A.loss, B.loss) + j for j, A, B in terms)

    def fn(X, P):
        out = None
        for j, A, B in terms:
            t = moyal_term(A.fn(X, P), B.fn(X, P), j)
            out = t if out is None else out + t
        return out

    s = _derived(fn, ops, jmax, name)
    s.loss = loss
    s.max_order = min(o.max_order for o in ops) - jmax
    return s


def _zero_like() -> MatrixSymbol:
    return constant_symbol(np.zeros((4, 4), dtype=complex), "0")


def moyal_commutator(a, b, order: int = DEFAULT_TRUNCATION) -> SymbolExpansion:
    """(i/hbar)(a#b - b#a); the first coefficient multiplies hbar^-1 (offset -1)."""
    ab = star_product(a, b, order + 1)
    ba = star_product(b, a, order + 1)
    coeffs = []
    for n in range(order + 2):
        A, B = ab.coefficients[n], ba.coefficients[n]
        coeffs.append(_derived(lambda X, P, A=A, B=B: (A.fn(X, P) - B.fn(X, P)) * 1j, (A, B), 0, f"[a,b]_{n}"))
    return SymbolExpansion(coeffs, ab.offset - 1)


@dataclass
class OrderFunction:
    """Positive weight controlling symbol growth, bounded below by ``lower_bound``."""

    symbol: MatrixSymbol
    lower_bound: float

    def evaluate(self, x, p) -> np.ndarray:
        return np.real(self.symbol.evaluate(x, p))

    __call__ = evaluate
