"""The Dirac symbol, its eigenprojections, field presets and the spin isometries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GapViolation
from .jets import Jet
from .symbols import MatrixSymbol, OrderFunction, matrix_poisson_bracket, phase_jets, poisson

# Pauli and Dirac matrices (Dirac representation)
SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)
ALPHA = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in SIGMA])
BETA = np.block([[I2, _Z2], [_Z2, -I2]])
SPIN = np.array([np.block([[s, _Z2], [_Z2, s]]) for s in SIGMA])  # Sigma_k


@dataclass(frozen=True)
class Constants:
    m: float = 1.0
    c: float = 1.0
    e: float = 1.0

    @property
    def rest_energy(self) -> float:
        return self.m * self.c ** 2


@dataclass
class FieldPreset:
    """Analytic potentials.  ``phi(x)`` and ``A(x)`` take a list of three
    coordinates (arrays or jets) and must be written with numpy functions."""

    name: str
    phi: Callable
    A: Callable
    periodic_box: tuple = (2 * np.pi, 2 * np.pi, 2 * np.pi)
    axes: tuple = (0,)
    params: dict = field(default_factory=dict)

    def _derivs(self, x, fn):
        x = np.asarray(x, dtype=float)
        X, _ = phase_jets(x, np.zeros_like(x), 1, (0, 1, 2))
        return fn(X)

    def potential(self, x) -> np.ndarray:
        return _value(self.phi(_coords(x)), np.asarray(x).shape[:-1])

    def vector_potential(self, x) -> np.ndarray:
        shape = np.asarray(x).shape[:-1]
        return np.stack([_value(a, shape) for a in self.A(_coords(x))], axis=-1)

    def E_field(self, x) -> np.ndarray:
        phi = self._derivs(x, self.phi)
        shape = np.asarray(x).shape[:-1]
        return -np.stack([_grad(phi, i, shape) for i in range(3)], axis=-1)

    def B_field(self, x) -> np.ndarray:
        A = self._derivs(x, self.A)
        shape = np.asarray(x).shape[:-1]
        d = lambda k, i: _grad(A[k], i, shape)  # dA_k/dx_i
        return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], axis=-1)


def _coords(x):
    x = np.asarray(x, dtype=float)
    return [x[..., i] for i in range(3)]


def _value(v, shape):
    if isinstance(v, Jet):
        v = v.value
    return np.broadcast_to(np.asarray(v, dtype=float), shape).copy()


def _grad(j, i, shape):
    if not isinstance(j, Jet):
        return np.zeros(shape)
    # jets from phase_jets order variables as (x0, x1, x2, p0, p1, p2)
    e = [0] * j.nvar
    e[i] = 1
    return np.broadcast_to(np.real(j.partial(e)), shape).copy()


def _zero(x):
    return 0.0 * x[0]


# ----------------------------------------------------------------- presets
def free_preset(**_) -> FieldPreset:
    return FieldPreset("free", lambda x: _zero(x), lambda x: [_zero(x)] * 3, periodic_box=(8.0, 8.0, 8.0), axes=(0,))


def constant_b_preset(B=(0.0, 0.0, 1.0), gauge: str = "symmetric", L: float = 8.0, **_) -> FieldPreset:
    B = np.asarray(B, dtype=float)
    if gauge == "landau":
        if np.any(B[:2]):
            raise ValueError("Landau gauge supports B along x3 only")
        b3 = B[2]
        A = lambda x: [_zero(x), b3 * x[0], _zero(x)]
        axes = (0,)
    else:
        # A = B x x / 2
        def A(x):
            return [
                0.5 * (B[1] * x[2] - B[2] * x[1]),
                0.5 * (B[2] * x[0] - B[0] * x[2]),
                0.5 * (B[0] * x[1] - B[1] * x[0]),
            ]

        axes = tuple(i for i in range(3) if np.any(np.delete(B, i))) or (0,)
    return FieldPreset("constant-b", lambda x: _zero(x), A, periodic_box=(L, L, L), axes=axes,
                       params={"B": B.tolist(), "gauge": gauge})


def constant_e_preset(E0: float = 0.2, width: float = 2.0, L: float = 16.0, **_) -> FieldPreset:
    # linear potential -E0 x1 capped by a tanh profile of the given width
    phi = lambda x: -E0 * width * np.tanh(x[0] / width)
    return FieldPreset("constant-e", phi, lambda x: [_zero(x)] * 3, periodic_box=(L, L, L), axes=(0,),
                       params={"E0": E0, "width": width})


def periodic_preset(phi0: float = 0.3, a0: float = 0.3, L: float = 2 * np.pi, dims: int = 1, **_) -> FieldPreset:
    """phi0 prod cos(2 pi x_j / L) plus a transverse periodic vector potential.

    With A = 0 the eigenprojections would not depend on x at all; the
    vector potential a0 sin(2 pi x_j / L) makes the projector corrections
    non-trivial.
    """
    k = 2 * np.pi / L

    def phi(x):
        out = phi0
        for j in range(dims):
            out = out * np.cos(k * x[j])
        return out + _zero(x)

    def A(x):
        a2 = a0 * np.sin(k * x[0])
        a3 = a0 * np.sin(k * x[1]) if dims >= 2 else _zero(x)
        return [_zero(x), a2, a3]

    return FieldPreset("periodic", phi, A, periodic_box=(L, L, L), axes=tuple(range(dims)),
                       params={"phi0": phi0, "a0": a0, "L": L, "dims": dims})


_SAFE = {k: getattr(np, k) for k in ("sin", "cos", "exp", "tanh", "sqrt")}
_SAFE["pi"] = np.pi


def custom_preset(phi: str = "0", A: Sequence[str] = ("0", "0", "0"), L: float = 8.0,
                  axes: Sequence[int] = (0, 1, 2), params: dict | None = None, **_) -> FieldPreset:
    """Potentials from expression strings in x, y, z and the given parameters."""
    params = dict(params or {})
    code_phi = compile(phi, "<phi>", "eval")
    code_A = [compile(a, "<A>", "eval") for a in A]

    def ns(x):
        return {"__builtins__": {}, **_SAFE, **params, "x": x[0], "y": x[1], "z": x[2]}

    return FieldPreset(
        "custom",
        lambda x: eval(code_phi, ns(x)) + _zero(x),
        lambda x: [eval(c, ns(x)) + _zero(x) for c in code_A],
        periodic_box=(L, L, L),
        axes=tuple(axes),
        params={"phi": phi, "A": list(A), **params},
    )


PRESETS = {
    "free": free_preset,
    "constant-b": constant_b_preset,
    "constant-e": constant_e_preset,
    "periodic": periodic_preset,
    "custom": custom_preset,
}


def make_preset(name: str, **params) -> FieldPreset:
    try:
        return PRESETS[name](**params)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ------------------------------------------------------------- symbol set
@dataclass
class DiracSymbolSet:
    preset: FieldPreset
    constants: Constants
    H: MatrixSymbol
    h_plus: MatrixSymbol
    h_minus: MatrixSymbol
    eps: OrderFunction
    Pi0_plus: MatrixSymbol
    Pi0_minus: MatrixSymbol
    V_plus: MatrixSymbol
    V_minus: MatrixSymbol
    kinetic: Callable = None

    def h(self, branch: int) -> MatrixSymbol:
        return self.h_plus if branch > 0 else self.h_minus

    def Pi0(self, branch: int) -> MatrixSymbol:
        return self.Pi0_plus if branch > 0 else self.Pi0_minus

    def V(self, branch: int) -> MatrixSymbol:
        return self.V_plus if branch > 0 else self.V_minus


def check_gap(preset: FieldPreset, constants: Constants, samples: int = 64):
    """sup h_- < inf h_+, i.e. the variation of e phi stays below 2 m c^2."""
    L = np.asarray(preset.periodic_box, dtype=float)
    axes = preset.axes or (0,)
    g = [np.linspace(-L[i] / 2, L[i] / 2, samples) if i in axes else np.zeros(1) for i in range(3)]
    pts = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1).reshape(-1, 3)
    ephi = constants.e * preset.potential(pts)
    span = ephi.max() - ephi.min()
    if span >= 2 * constants.rest_energy:
        raise GapViolation(
            f"variation of e*phi = {span:.6g} >= 2mc^2 = {2 * constants.rest_energy:.6g}",
            point=pts[np.argmax(ephi)],
        )
    return span


def build_model(preset: FieldPreset, constants: Constants | None = None, check: bool = True) -> DiracSymbolSet:
    cst = constants or Constants()
    c, e = cst.c, cst.e
    mc2 = cst.rest_energy
    if check:
        check_gap(preset, cst)
    axes = preset.axes or (0,)

    def K(X, P):
        A = preset.A(X)
        return [c * P[i] - e * A[i] for i in range(3)]

    def eps(X, P):
        k = K(X, P)
        return np.sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + mc2 ** 2)

    def phi(X):
        return e * preset.phi(X)

    def Hfree(X, P):
        k = K(X, P)
        return k[0] * ALPHA[0] + k[1] * ALPHA[1] + k[2] * ALPHA[2] + BETA * mc2

    def H(X, P):
        return Hfree(X, P) + phi(X) * I4

    def Pi0(sign):
        def fn(X, P):
            return 0.5 * (I4 + (sign * 1.0 / eps(X, P)) * Hfree(X, P))
        return fn

    top = np.vstack([I2, _Z2])
    bottom = np.vstack([_Z2, I2])
    Sk = [np.vstack([_Z2, s]) for s in SIGMA]   # K.sigma in the lower block
    Tk = [np.vstack([s, _Z2]) for s in SIGMA]   # K.sigma in the upper block

    def V_plus(X, P):
        k, ep = K(X, P), eps(X, P)
        norm = 1.0 / np.sqrt(2 * ep * (ep + mc2))
        return norm * ((ep + mc2) * top + k[0] * Sk[0] + k[1] * Sk[1] + k[2] * Sk[2])

    def V_minus(X, P):
        k, ep = K(X, P), eps(X, P)
        norm = 1.0 / np.sqrt(2 * ep * (ep + mc2))
        return norm * (k[0] * Tk[0] + k[1] * Tk[1] + k[2] * Tk[2] - (ep + mc2) * bottom)

    sym = lambda f, name, herm=True: MatrixSymbol(f, hermitian=herm, name=name, axes=axes)
    eps_sym = sym(eps, "eps")
    return DiracSymbolSet(
        preset=preset,
        constants=cst,
        H=sym(H, "H"),
        h_plus=sym(lambda X, P: phi(X) + eps(X, P), "h+"),
        h_minus=sym(lambda X, P: phi(X) - eps(X, P), "h-"),
        eps=OrderFunction(eps_sym, mc2),
        Pi0_plus=sym(Pi0(1), "Pi0+"),
        Pi0_minus=sym(Pi0(-1), "Pi0-"),
        V_plus=sym(V_plus, "V+", False),
        V_minus=sym(V_minus, "V-", False),
        kinetic=K,
    )


# ------------------------------------------------------------ spin fields
def kinetic_momentum(model: DiracSymbolSet, x, p) -> np.ndarray:
    c, e = model.constants.c, model.constants.e
    return c * np.asarray(p, dtype=float) - e * model.preset.vector_potential(x)


def effective_spin_field(model: DiracSymbolSet, branch: int, x, p) -> np.ndarray:
    """C_(+/-) = -/+ (ec/eps)(B +/- cE x K/(eps + mc^2))."""
    cst = model.constants
    c, e, mc2 = cst.c, cst.e, cst.rest_energy
    x = np.asarray(x, dtype=float)
    K = kinetic_momentum(model, x, p)
    ep = np.sqrt(np.sum(K * K, axis=-1) + mc2 ** 2)[..., None]
    B = model.preset.B_field(x)
    E = model.preset.E_field(x)
    s = 1.0 if branch > 0 else -1.0
    return -s * (e * c / ep) * (B + s * np.cross(c * E, K) / (ep + mc2))


def effective_spin_hamiltonian_symbol(model: DiracSymbolSet, branch: int) -> MatrixSymbol:
    """H_(+/-) = -i[Pi, {h,Pi}] - (i/2)(h Pi{Pi,Pi}Pi + Pi{Pi, H - h Pi}Pi) as a symbol.

    The sign of the block-diagonal part is the one consistent with the
    bracket convention {B,C} = grad_p B . grad_x C - grad_x B . grad_p C;
    with it, V* H V + i{h, V*} V = C.sigma / 2 holds identically.
    """
    Pi, h, H = model.Pi0(branch), model.h(branch), model.H

    def fn(X, P):
        Pj, hj, Hj = Pi.fn(X, P), h.fn(X, P), H.fn(X, P)
        hPi = poisson(hj * I4, Pj)
        PiPi = poisson(Pj, Pj)
        rest = poisson(Pj, Hj - hj * Pj)
        P0, h0 = Pj.truncate(hPi.degree), hj.truncate(hPi.degree)
        comm = P0 @ hPi - hPi @ P0
        return comm * (-1j) - (h0 * (P0 @ PiPi @ P0) + P0 @ rest @ P0) * 0.5j

    return MatrixSymbol(fn, max_order=Pi.max_order - 1, hermitian=False, name=f"Heff{'+' if branch > 0 else '-'}",
                        loss=1, axes=Pi.axes)


def effective_spin_hamiltonian_4x4(model: DiracSymbolSet, branch: int, x, p) -> np.ndarray:
    return effective_spin_hamiltonian_symbol(model, branch).evaluate(x, p)


def berry_term(model: DiracSymbolSet, branch: int, x, p) -> np.ndarray:
    """i {h, V*} V, the connection term relating V* H V to C.sigma / 2."""
    h, V = model.h(branch), model.V(branch)
    s = matrix_poisson_bracket(h, MatrixSymbol(lambda X, P: V.fn(X, P).H(), axes=V.axes))
    return 1j * (s.evaluate(x, p) @ V.evaluate(x, p))
