"""Truncated multivariate Taylor arithmetic ("jets") with array-valued coefficients.

A :class:`Jet` stores the Taylor coefficients ``f^(alpha)(z0) / alpha!`` of a
function of ``nvar`` variables up to total degree ``degree``, evaluated at a
whole batch of base points at once.  Values are either scalars or matrices;
matrix jets multiply with ``@`` and scalar jets broadcast against them.

Numpy ufuncs (``np.cos``, ``np.sqrt``, ...) dispatch to jets, so field
definitions written for plain arrays differentiate exactly when fed jets.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np


class JetSpace:
    """Monomial bookkeeping for ``nvar`` variables and total degree ``degree``."""

    def __init__(self, nvar: int, degree: int):
        self.nvar = nvar
        self.degree = degree
        monos = [m for m in product(range(degree + 1), repeat=nvar) if sum(m) <= degree]
        monos.sort(key=lambda m: (sum(m), tuple(-e for e in m)))
        self.monos = monos
        self.index = {m: i for i, m in enumerate(monos)}
        self.size = len(monos)
        self.pairs = []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                s = tuple(x + y for x, y in zip(a, b))
                if sum(s) <= degree:
                    self.pairs.append((i, j, self.index[s]))
        # size of the space truncated to each lower degree (monos sorted by degree)
        self.cut = [sum(1 for m in monos if sum(m) <= d) for d in range(degree + 1)]

    def deriv_map(self, v: int):
        """Index map and weights for d/dz_v, landing in the degree-1 space."""
        lower = space(self.nvar, self.degree - 1)
        src = np.empty(lower.size, dtype=int)
        w = np.empty(lower.size)
        for i, m in enumerate(lower.monos):
            up = list(m)
            up[v] += 1
            src[i] = self.index[tuple(up)]
            w[i] = up[v]
        return lower, src, w


@lru_cache(maxsize=None)
def space(nvar: int, degree: int) -> JetSpace:
    if degree < 0:
        raise ValueError("jet degree must be non-negative")
    return JetSpace(nvar, degree)


@lru_cache(maxsize=None)
def _deriv_map(nvar: int, degree: int, v: int):
    return space(nvar, degree).deriv_map(v)


def _tanh_derivs(t: np.ndarray, n: int) -> list[np.ndarray]:
    # d/dx P(T) = P'(T) (1 - T^2) with T = tanh(x)
    poly = np.polynomial.Polynomial([0.0, 1.0])
    sech2 = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    out = []
    for _ in range(n + 1):
        out.append(poly(t))
        poly = poly.deriv() * sech2
    return out


class Jet:
    """Batch of truncated Taylor polynomials.

    ``coeffs`` has shape ``(n_monomials, *batch, *value_shape)`` with
    ``vdim`` trailing value axes (0 for scalars, 2 for matrices).
    """

    __array_priority__ = 1000

    def __init__(self, coeffs: np.ndarray, nvar: int, degree: int, vdim: int = 0, const: bool = False):
        self.c = coeffs
        self.nvar = nvar
        self.degree = degree
        self.vdim = vdim
        self.const = const

    # ----------------------------------------------------------------- builders
    @classmethod
    def constant(cls, value, nvar: int, degree: int, vdim: int = 0) -> "Jet":
        value = np.asarray(value)
        sp = space(nvar, degree)
        c = np.zeros((sp.size,) + value.shape, dtype=np.result_type(value, float))
        c[0] = value
        return cls(c, nvar, degree, vdim, const=True)

    @classmethod
    def variable(cls, value, v: int, nvar: int, degree: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        sp = space(nvar, degree)
        c = np.zeros((sp.size,) + value.shape)
        c[0] = value
        if degree >= 1:
            e = [0] * nvar
            e[v] = 1
            c[sp.index[tuple(e)]] = 1.0
        return cls(c, nvar, degree, 0)

    # ---------------------------------------------------------------- accessors
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def space(self) -> JetSpace:
        return space(self.nvar, self.degree)

    def partial(self, alpha) -> np.ndarray:
        """The mixed partial derivative with multi-index ``alpha`` at the base points."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.degree:
            raise ValueError(f"partial of order {sum(alpha)} exceeds jet degree {self.degree}")
        k = self.space.index[alpha]
        return self.c[k] * float(np.prod([factorial(a) for a in alpha]))

    def truncate(self, degree: int) -> "Jet":
        if degree == self.degree:
            return self
        if degree > self.degree:
            raise ValueError("cannot raise jet degree")
        n = self.space.cut[degree]
        return Jet(self.c[:n], self.nvar, degree, self.vdim, self.const)

    def deriv(self, v: int, times: int = 1) -> "Jet":
        out = self
        for _ in range(times):
            if out.degree == 0:
                raise ValueError("derivative of a degree-0 jet is not available")
            lower, src, w = _deriv_map(out.nvar, out.degree, v)
            shape = (lower.size,) + (1,) * (out.c.ndim - 1)
            out = Jet(out.c[src] * w.reshape(shape), out.nvar, out.degree - 1, out.vdim, out.const)
        return out

    def diff(self, alpha) -> "Jet":
        out = self
        for v, a in enumerate(alpha):
            if a:
                out = out.deriv(v, a)
        return out

    def H(self) -> "Jet":
        """Conjugate transpose of a matrix jet."""
        return Jet(np.conj(np.swapaxes(self.c, -1, -2)), self.nvar, self.degree, self.vdim, self.const)

    def trace(self) -> "Jet":
        return Jet(np.trace(self.c, axis1=-2, axis2=-1), self.nvar, self.degree, 0, self.const)

    def real(self) -> "Jet":
        return Jet(self.c.real.copy(), self.nvar, self.degree, self.vdim, self.const)

    # -------------------------------------------------------------- arithmetic
    @property
    def bdim(self) -> int:
        return self.c.ndim - 1 - self.vdim

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.nvar != self.nvar:
                raise ValueError("jets over different variable sets")
            return other
        other = np.asarray(other)
        return Jet.constant(other, self.nvar, self.degree, vdim=other.ndim)

    @staticmethod
    def _prep(a: "Jet", b: "Jet", lift_values: bool):
        """Truncate to a common degree and align batch (and optionally value) axes."""
        d = min(a.degree, b.degree)
        a, b = a.truncate(d), b.truncate(d)
        nb = max(a.bdim, b.bdim)
        vd = max(a.vdim, b.vdim)

        def shape(j):
            c = j.c
            c = c.reshape(c.shape[:1] + (1,) * (nb - j.bdim) + c.shape[1:])
            if lift_values and j.vdim < vd:
                c = c.reshape(c.shape + (1,) * (vd - j.vdim))
            return c

        return shape(a), shape(b), d, vd, a.const, b.const

    def __add__(self, other):
        o = self._coerce(other)
        if self.vdim != o.vdim:
            mat, sca = (self, o) if self.vdim else (o, self)
            sca = sca * np.eye(mat.c.shape[-1])
            return mat + sca
        ca, cb, d, vd, ka, kb = self._prep(self, o, False)
        return Jet(ca + cb, self.nvar, d, vd, ka and kb)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.nvar, self.degree, self.vdim, self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def _conv(self, other: "Jet", op, lift: bool) -> "Jet":
        ca, cb, d, vd, ka, kb = self._prep(self, other, lift)
        if ka or kb:
            # a factor with only a constant term scales coefficientwise
            c = op(ca[:1], cb) if ka else op(ca, cb[:1])
            return Jet(c, self.nvar, d, vd, ka and kb)
        sp = space(self.nvar, d)
        first = op(ca[0], cb[0])
        out = np.zeros((sp.size,) + first.shape, dtype=first.dtype)
        for i, j, k in sp.pairs:
            out[k] += op(ca[i], cb[j])
        return Jet(out, self.nvar, d, vd)

    def __mul__(self, other):
        if not isinstance(other, Jet) and np.ndim(other) == 0:
            return Jet(self.c * other, self.nvar, self.degree, self.vdim, self.const)
        o = self._coerce(other)
        if self.vdim and o.vdim:
            raise TypeError("use @ for matrix-matrix jet products")
        return self._conv(o, np.multiply, True)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self._conv(self._coerce(other), np.matmul, False)

    def __rmatmul__(self, other):
        return self._coerce(other).__matmul__(self)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, r):
        if isinstance(r, int) and r >= 0:
            out = Jet.constant(np.ones_like(self.value), self.nvar, self.degree)
            for _ in range(r):
                out = out * self
            return out
        return self.power(float(r))

    # --------------------------------------------------- univariate composition
    def compose(self, derivs: list[np.ndarray]) -> "Jet":
        """f(self) from the derivatives ``[f(a0), f'(a0), ...]`` at the constant term."""
        if self.vdim:
            raise TypeError("elementary functions act on scalar jets only")
        K = self.degree
        out = np.zeros_like(self.c, dtype=np.result_type(self.c, *derivs))
        out[0] = derivs[0]
        if K == 0 or self.const:
            return Jet(out, self.nvar, K, 0, self.const)
        u = Jet(self.c.copy(), self.nvar, K, 0)
        u.c[0] = 0.0
        un = u
        for n in range(1, K + 1):
            out = out + (derivs[n] / factorial(n)) * un.c
            if n < K:
                un = un * u
        return Jet(out, self.nvar, K, 0)

    def power(self, r: float) -> "Jet":
        a = self.value
        ds = []
        coef = 1.0
        for n in range(self.degree + 1):
            ds.append(coef * a ** (r - n))
            coef *= r - n
        return self.compose(ds)

    def reciprocal(self) -> "Jet":
        return self.power(-1.0)

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self.compose([e] * (self.degree + 1))

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [s, c, -s, -c]
        return self.compose([cyc[n % 4] for n in range(self.degree + 1)])

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [c, -s, -c, s]
        return self.compose([cyc[n % 4] for n in range(self.degree + 1)])

    def tanh(self) -> "Jet":
        return self.compose(_tanh_derivs(np.tanh(self.value), self.degree))

    _UNARY = {
        np.sin: "sin",
        np.cos: "cos",
        np.exp: "exp",
        np.sqrt: "sqrt",
        np.tanh: "tanh",
        np.reciprocal: "reciprocal",
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            return NotImplemented
        if len(inputs) == 1 and ufunc in self._UNARY:
            return getattr(inputs[0], self._UNARY[ufunc])()
        if ufunc is np.negative:
            return -inputs[0]
        if len(inputs) == 2:
            a, b = inputs
            if ufunc is np.add:
                return b + a if isinstance(b, Jet) else a + b
            if ufunc is np.subtract:
                return b.__rsub__(a) if not isinstance(a, Jet) else a - b
            if ufunc is np.multiply:
                return b * a if isinstance(b, Jet) else a * b
            if ufunc is np.true_divide:
                return a / b if isinstance(a, Jet) else b.__rtruediv__(a)
            if ufunc is np.matmul:
                return a @ b if isinstance(a, Jet) else b.__rmatmul__(a)
            if ufunc is np.power and isinstance(a, Jet):
                return a ** b
        return NotImplemented

    def __repr__(self) -> str:
        return f"Jet(nvar={self.nvar}, degree={self.degree}, batch={self.c.shape[1:self.c.ndim - self.vdim]}, vdim={self.vdim})"
