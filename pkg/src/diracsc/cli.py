"""Command-line experiment runner.

    diracsc <command> [--config PATH] [--jobs N] [--seed U64] [--out DIR]
                      [--hbar LIST] [--order N] [--tol FLOAT] [--profile full|quick]

Each command writes <command>-<hash>.csv (plus named side tables), a JSON
summary and PNG figures into --out.  Exit codes: 0 all checks passed, 1 some
check failed, 2 invalid configuration, 3 physical-guard violation, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import plotting
from .errors import DiracLabError, NumericalError, PhysicalGuardError
from .model import I4, Constants, build_model, make_preset

log = logging.getLogger("diracsc")

COMMANDS = ("zitter", "projector-scaling", "egorov", "flow", "precession", "sphere-check",
            "spectrum", "census", "qe", "invariant-algebra")

DEFAULTS = {
    "version": 1,
    "profile": "full",
    "constants": {"m": 1.0, "c": 1.0, "e": 1.0},
    "tol": 1e-10,
    "window": {"E": 2.0, "omega": 5.0, "delta": 0.1},
    "out": "results",
    "rng_seed": 0,
    "plots": True,
    "order": None,
}

# per-command preset and sweep defaults; "quick" shrinks sizes for smoke runs
COMMAND_DEFAULTS = {
    "zitter": {"preset": {"name": "free"}, "hbar_list": [1.0], "grid": {"N": 1024, "L": 512.0}},
    "projector-scaling": {"preset": {"name": "periodic"}, "hbar_list": [0.2, 0.1, 0.05, 0.025]},
    "egorov": {"preset": {"name": "constant-b", "params": {"gauge": "landau"}},
               "hbar_list": [0.1, 0.05, 0.025, 0.0125]},
    "flow": {"preset": {"name": "constant-b"}},
    "precession": {"preset": {"name": "constant-b"}},
    "sphere-check": {},
    "spectrum": {"preset": {"name": "periodic"}, "hbar_list": [0.05]},
    "census": {"preset": {"name": "periodic"}, "hbar_list": [0.1, 0.05, 0.025]},
    "qe": {"preset": {"name": "periodic"}, "hbar_list": [0.05]},
    "invariant-algebra": {"preset": {"name": "periodic"}, "hbar_list": [0.2, 0.1, 0.05, 0.025]},
}

QUICK = {
    "zitter": {"grid": {"N": 512, "L": 256.0}},
    "projector-scaling": {"hbar_list": [0.2, 0.1, 0.05]},
    "egorov": {"hbar_list": [0.1, 0.05]},
    "spectrum": {"hbar_list": [0.1]},
    "census": {"hbar_list": [0.2, 0.1]},
    "qe": {"hbar_list": [0.1]},
    "invariant-algebra": {"hbar_list": [0.2, 0.1]},
}


class ConfigError(Exception):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_schema() -> dict:
    return json.loads(resources.files("diracsc").joinpath("config_schema.json").read_text())


def validate(cfg: dict):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {'/'.join(map(str, exc.absolute_path)) or '<root>'}: {exc.message}")


def resolve(command: str, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    """defaults < command defaults < profile < config file < flags."""
    file_cfg = dict(file_cfg or {})
    overrides = dict(overrides or {})
    profile = overrides.get("profile") or file_cfg.get("profile") or DEFAULTS["profile"]
    cfg = _merge(DEFAULTS, COMMAND_DEFAULTS.get(command, {}))
    if profile == "quick":
        cfg = _merge(cfg, QUICK.get(command, {}))
    cfg = _merge(cfg, {k: v for k, v in file_cfg.items() if k != "command"})
    cfg = _merge(cfg, overrides)
    cfg["command"] = command
    cfg["profile"] = profile
    validate(cfg)
    return cfg


def hashed_config(cfg: dict) -> dict:
    """The part of the config that determines the numbers (output location excluded)."""
    return {k: v for k, v in cfg.items() if k not in ("out", "plots")}


def command_rng(cfg: dict) -> np.random.Generator:
    return np.random.default_rng([cfg["rng_seed"], zlib.crc32(cfg["command"].encode())])


def _model(cfg):
    pre = cfg.get("preset", {"name": "free"})
    cst = Constants(**cfg["constants"])
    return build_model(make_preset(pre["name"], **pre.get("params", {})), cst)


def _orders(cfg, default=(0, 1, 2)):
    return [cfg["order"]] if cfg.get("order") is not None else list(default)


@dataclass
class CommandResult:
    tables: dict = field(default_factory=dict)          # name -> (header, rows)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)          # name -> bool
    figures: list = field(default_factory=list)         # (suffix, callable(path))


# ------------------------------------------------------------------ commands
def cmd_zitter(cfg, pool=None) -> CommandResult:
    from .egorov import dominant_frequency, fit_oscillation
    from .grid import (QuantumGrid, dirac_operator, evolve_series, gaussian_packet, projected_position,
                       zitterbewegung_trace)

    model = _model(cfg)
    g = cfg["grid"]
    hbar = cfg["hbar_list"][0]
    L = float(g.get("L", 512.0))
    grid = QuantumGrid(int(g.get("N", 1024)), L, hbar, constants=model.constants)
    q = 1.0
    width = L / 20
    spinor = np.array([1.0, 0.0, 0.0, 0.0])      # upper component: both energy signs
    c0 = gaussian_packet(grid, [0.0, 0.0, 0.0], [q, 0.0, 0.0], spinor, width=width)
    steps = 200
    times = np.linspace(0.0, 20.0, steps + 1)
    direct, closed, parts = zitterbewegung_trace(model, grid, c0, times)
    rel = float(np.max(np.abs(direct - closed)) / np.max(np.abs(closed)))
    cst = model.constants
    omega_exact = 2 * np.sqrt(cst.c ** 2 * q ** 2 + cst.rest_energy ** 2) / hbar
    omega, _ = fit_oscillation(times, direct, dominant_frequency(times, direct))
    freq_err = abs(omega / omega_exact - 1)

    X = projected_position(model, grid, 1)
    states = evolve_series(dirac_operator(model, grid), c0, times, "exact")
    xp = np.array([np.real(np.vdot(s, X.apply(s))) for s in states])
    A = np.stack([np.ones_like(times), times], axis=1)
    fit = A @ np.linalg.lstsq(A, xp, rcond=None)[0]
    lin = float(np.max(np.abs(xp - fit)))

    rows = [[t, d, c, abs(d - c), x] for t, d, c, x in zip(times, direct, closed, xp)]
    res = CommandResult()
    res.tables[""] = (["t", "x_direct", "x_closed", "abs_diff", "x_projected_plus"], rows)
    res.summary = {"relative_error": rel, "omega_fit": omega, "omega_exact": omega_exact,
                   "frequency_error": freq_err, "linearity_residual": lin, "box_length": L}
    res.checks = {"zitter_closed_form": rel <= 1e-8, "zitter_frequency": freq_err <= 1e-3,
                  "projected_position_linear": lin <= 1e-9 * L}
    res.figures.append(("x", lambda p: plotting.series_figure(
        times, {"<x(t)> propagated": direct, "closed form": closed, "<P+ x P+>": xp}, p, ylabel="<x>",
        title="free Zitterbewegung")))
    return res


def _defects_job(args):
    from .egorov import periodic_grid
    from .projectors import measure_defects

    cfg, order, hbar = args
    model = _model(cfg)
    grid = periodic_grid(hbar, model.preset.periodic_box[0], model.constants)
    d = measure_defects(model, order, grid)
    return d.idem, d.comm, d.complement, d.distance


def cmd_projector_scaling(cfg, pool=None) -> CommandResult:
    from .report import ScalingReport

    hs = cfg["hbar_list"]
    res = CommandResult()
    rows = []
    reports = {}
    for order in _orders(cfg):
        jobs = [(cfg, order, h) for h in hs]
        vals = list(pool.map(_defects_job, jobs)) if pool else [_defects_job(j) for j in jobs]
        names = ("idempotency", "commutator", "complement", "spectral_distance")
        defects = {n: [v[i] for v in vals] for i, n in enumerate(names)}
        rep = ScalingReport(f"projector-order-{order}", hs, defects, expected_slope=order + 1,
                            threshold=order + 0.7)
        reports[order] = rep
        rows += [[order, h] + [defects[n][i] for n in names] for i, h in enumerate(hs)]
        res.summary[f"order_{order}"] = rep.summary()
        res.checks[f"order_{order}_defects"] = rep.passed(["idempotency", "commutator"])
        res.checks[f"order_{order}_spectral_distance"] = rep.passed(["spectral_distance"])
        res.checks[f"order_{order}_complement"] = bool(rep.exact["complement"] or rep.passed(["complement"]))
        res.figures.append((f"order{order}", lambda p, r=rep: plotting.scaling_figure(r, p)))
    res.tables[""] = (["order", "hbar", "idempotency", "commutator", "complement", "spectral_distance"], rows)
    return res


def _egorov_job(args):
    from .egorov import egorov_point

    cfg, hbar = args
    exp = _egorov_experiment(cfg)
    return egorov_point(exp, hbar)


def _egorov_experiment(cfg):
    from .egorov import EgorovExperiment

    params = cfg["preset"].get("params", {})
    B = params.get("B", (0.0, 0.0, 1.0))
    L = params.get("L", 8.0)
    return EgorovExperiment(B=float(B[2]) if np.ndim(B) else float(B), L=float(L),
                            hbar_list=tuple(cfg["hbar_list"]), constants=Constants(**cfg["constants"]))


def cmd_egorov(cfg, pool=None) -> CommandResult:
    from .egorov import off_diagonal_norm, spin_observable
    from .errors import BlockDiagonalityViolated
    from .report import ScalingReport

    if cfg["preset"]["name"] != "constant-b":
        raise ConfigError("egorov runs on the constant-b preset")
    exp = _egorov_experiment(cfg)
    model = exp.model()
    sym = spin_observable(model, exp.spin_axis, exp.branch)
    rng = command_rng(cfg)
    off = off_diagonal_norm(model, sym, rng.uniform(-1, 1, (50, 3)), rng.uniform(-2, 2, (50, 3)), exp.branch)
    if off > 1e-10:
        raise BlockDiagonalityViolated(f"observable has off-diagonal symbol blocks of size {off:.3g}")
    jobs = [(cfg, h) for h in exp.hbar_list]
    out = list(pool.map(_egorov_job, jobs)) if pool else [_egorov_job(j) for j in jobs]
    rows = [r for block in out for r in block]
    errs = [block[-1][4] for block in out]
    rep = ScalingReport("egorov", list(exp.hbar_list), {"abs_err": errs}, expected_slope=1.0, threshold=0.8)
    res = CommandResult()
    res.tables[""] = (["t", "hbar", "q", "c", "abs_err", "imag_q"], rows)
    res.summary = {"report": rep.summary(), "t_star": rows[0][0], "classical": rows[0][3],
                   "max_imag": float(max(abs(r[5]) for r in rows))}
    res.checks = {"egorov_slope": rep.passed(), "egorov_real": res.summary["max_imag"] <= 1e-12}
    res.figures.append(("scaling", lambda p: plotting.scaling_figure(rep, p)))
    return res


def cmd_flow(cfg, pool=None) -> CommandResult:
    from .classical import PhasePoint, spin_transport_2x2, spin_transport_4x4, trajectory, intertwining_defect
    from .model import kinetic_momentum

    model = _model(cfg)
    rng = command_rng(cfg)
    tol = cfg["tol"]
    rows = []
    worst_det = worst_unit = worst_conj = worst_int = 0.0
    res = CommandResult()
    tracks = {}
    for i in range(4 if cfg["profile"] == "full" else 2):
        z0 = PhasePoint(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.8, 0.8, 3))
        K = kinetic_momentum(model, z0.x, z0.p)
        eps = np.sqrt(K @ K + model.constants.rest_energy ** 2)
        Bz = np.linalg.norm(model.preset.B_field(z0.x)) or 1.0
        T = 2 * np.pi * eps / (model.constants.e * model.constants.c ** 2 * Bz)
        s2 = spin_transport_2x2(model, 1, z0, T, tol)
        s4 = spin_transport_4x4(model, 1, z0, T, tol)
        # structure is measured on the raw integrator output, not the re-projected matrix
        det = abs(np.linalg.det(s2.raw) - 1)
        unit = np.linalg.norm(s2.raw.conj().T @ s2.raw - np.eye(2), 2)
        conj = np.linalg.norm(s4.D - s2.D, 2)
        inter = intertwining_defect(model, z0, s4)
        worst_det, worst_unit = max(worst_det, det), max(worst_unit, unit)
        worst_conj, worst_int = max(worst_conj, conj), max(worst_int, inter)
        fs = trajectory(model, 1, z0, np.linspace(0, T, 101), tol=tol)
        tracks[f"orbit {i}"] = fs
        rows.append([i, T, det, unit, conj, inter, fs.energy_drift, s2.projection])
    res.tables[""] = (["trajectory", "period", "det_defect", "unitarity_defect", "conjugation_defect",
                       "intertwining_defect", "energy_drift", "polar_correction"], rows)
    res.summary = {"det_defect": worst_det, "unitarity_defect": worst_unit, "conjugation_defect": worst_conj,
                   "intertwining_defect": worst_int}
    res.checks = {"transport_det": worst_det <= 1e-10, "transport_unitary": worst_unit <= 1e-10,
                  "transport_conjugation": worst_conj <= 1e-7}
    res.figures.append(("orbits", lambda p: plotting.series_figure(
        tracks["orbit 0"].t, {k: v.x[:, 0] for k, v in tracks.items()}, p, ylabel="x1", title="orbits")))
    return res


def cmd_precession(cfg, pool=None) -> CommandResult:
    from .classical import PhasePoint, precess_spin, trajectory
    from .model import effective_spin_field, kinetic_momentum

    model = _model(cfg)
    tol = cfg["tol"]
    z_rest = PhasePoint([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    C = effective_spin_field(model, 1, z_rest.x, z_rest.p)
    ts = np.linspace(0.0, 3.0, 31)
    n0 = np.array([1.0, 0.0, 0.0])
    angles = []
    for t in ts[1:]:
        n = precess_spin(model, 1, z_rest, n0, t, tol)
        angles.append(np.arctan2(n[1], n[0]))
    angles = np.unwrap(np.r_[0.0, angles])
    expect = np.sign(C[2]) * np.linalg.norm(C) * ts   # n' = C x n turns about C
    ang_err = float(np.max(np.abs(angles - expect)))

    z1 = PhasePoint([0.0, 0.0, 0.0], [0.6, 0.2, 0.3])
    K = kinetic_momentum(model, z1.x, z1.p)
    eps = np.sqrt(K @ K + model.constants.rest_energy ** 2)
    Bz = np.linalg.norm(model.preset.B_field(z1.x))
    T = 2 * np.pi * eps / (model.constants.e * model.constants.c ** 2 * Bz)
    nh = np.array([0.6, 0.0, 0.8])
    fs = trajectory(model, 1, z1, np.linspace(0, T, 201), n0=nh, tol=tol)
    hel = float(np.ptp(fs.helicity))
    res = CommandResult()
    res.tables[""] = (["t", "angle", "expected"], [[t, a, e] for t, a, e in zip(ts, angles, expect)])
    res.tables["helicity"] = (["t", "helicity", "n1", "n2", "n3"],
                              [[t, h, *n] for t, h, n in zip(fs.t, fs.helicity, fs.n)])
    res.summary = {"C_rest": C.tolist(), "angle_error": ang_err, "helicity_variation": hel, "period": T}
    res.checks = {"precession_angle": ang_err <= 1e-8, "helicity_conserved": hel <= 1e-8}
    res.figures.append(("sphere", lambda p: plotting.sphere_figure({"moving, B only": fs.n}, p)))
    return res


def cmd_sphere_check(cfg, pool=None) -> CommandResult:
    from .model import SIGMA
    from .sphere import (covariance_check, matrix_to_sphere, random_su2, random_unit_vectors, sphere_to_matrix)

    rng = command_rng(cfg)
    M = 1000
    g = random_su2(rng, M)
    n = random_unit_vectors(rng, M)
    cov = max(covariance_check(g[i], n[i]) for i in range(M))
    rt = 0.0
    for _ in range(50):
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        B = A + A.conj().T
        rt = max(rt, float(np.max(np.abs(sphere_to_matrix(matrix_to_sphere(B)) - B))))
    hbar = cfg.get("hbar_list", [1.0])[0]
    spin = 0.0
    for k in range(3):
        b = matrix_to_sphere(0.5 * hbar * SIGMA[k])
        spin = max(spin, float(np.max(np.abs(b(n) - np.sqrt(0.75) * hbar * n[:, k]))))
    res = CommandResult()
    res.tables[""] = (["quantity", "value"], [["covariance", cov], ["round_trip", rt], ["spin_example", spin]])
    res.summary = {"covariance_defect": cov, "round_trip": rt, "spin_example": spin}
    res.checks = {"sphere_round_trip": rt <= 1e-13, "sphere_covariance": cov <= 1e-11,
                  "sphere_spin_example": spin <= 1e-13}
    return res


def _projected_setup(cfg, hbar, order):
    from .egorov import periodic_grid
    from .grid import dirac_operator
    from .projectors import correct_projector_symbol, quantize_and_riesz
    from .spectral import diagonalize

    model = _model(cfg)
    grid = periodic_grid(hbar, model.preset.periodic_box[0], model.constants)
    H = dirac_operator(model, grid, dense=True)
    spec = diagonalize(H)
    Pp = quantize_and_riesz(correct_projector_symbol(model, 1, order), grid).matrix
    return model, grid, H, spec, Pp, np.eye(grid.dim) - Pp


def cmd_spectrum(cfg, pool=None) -> CommandResult:
    from .errors import WindowEmpty
    from .spectral import compressed_spectrum, nearest_distance, project_eigens

    order = _orders(cfg, (2,))[0]
    hbar = cfg["hbar_list"][-1]
    w = cfg["window"]
    model, grid, H, spec, Pp, Pm = _projected_setup(cfg, hbar, order)
    idx = spec.window(w["E"], hbar * w["omega"])
    if len(idx) == 0:
        raise WindowEmpty(f"no eigenvalue in [{w['E'] - hbar * w['omega']:g}, {w['E'] + hbar * w['omega']:g}]")
    data = project_eigens(spec, H, Pp, Pm, idx=idx)
    comp = compressed_spectrum(H, Pp)
    keep = data.present[:, 0]
    dist = nearest_distance(comp, data.E[keep])
    qm = float(np.nanmax(np.abs(data.quasimode - data.r)))
    inside = bool(np.all(dist <= data.r[keep, 0] + 1e-12))
    inside_s = float(np.mean(dist <= data.s[keep, 0] + 1e-12)) if keep.any() else float("nan")
    gaps = np.diff(spec.values[idx]) if len(idx) > 1 else np.zeros(0)
    cdist = np.full(len(data.E), np.nan)
    cdist[keep] = dist
    header, rows = data.rows()
    res = CommandResult()
    res.tables[""] = (header + ["compression_distance"], [r + [d] for r, d in zip(rows, cdist)])
    res.summary = {"hbar": hbar, "order": order, "count": len(idx), "max_eigen_residual": float(spec.residuals.max()),
                   "quasimode_identity": qm, "compression_within_r": inside, "compression_within_s_fraction": inside_s,
                   "min_gap": float(gaps.min()) if len(gaps) else None}
    res.checks = {"eigen_residual": float(spec.residuals.max()) <= 1e-10 * max(spec.norm, 1.0),
                  "quasimode_identity": qm <= 1e-8, "compression_interval": inside}
    res.figures.append(("norms", lambda p: plotting.spectrum_figure(
        data.E, data.norms[:, 0], p, window=(w["E"] - hbar * w["omega"], w["E"] + hbar * w["omega"]))))
    if len(gaps):
        res.figures.append(("gaps", lambda p: plotting.scatter_figure(
            gaps, np.maximum(data.r[:-1, 0], 1e-18), p, xlabel="gap to next level", ylabel="r_n+", logy=True,
            title="level gaps and quasimode residuals")))
    return res


def _census_job(args):
    from .spectral import window_census

    cfg, hbar, order = args
    w = cfg["window"]
    model, grid, H, spec, Pp, Pm = _projected_setup(cfg, hbar, order)
    c = window_census(spec, H, Pp, Pm, grid, model, w["E"], w["omega"], w["delta"])
    c.extra = {}
    return c


def cmd_census(cfg, pool=None) -> CommandResult:
    from .spectral import WindowCensus

    order = _orders(cfg, (2,))[0]
    jobs = [(cfg, h, order) for h in cfg["hbar_list"]]
    out = list(pool.map(_census_job, jobs)) if pool else [_census_job(j) for j in jobs]
    last = out[int(np.argmin(cfg["hbar_list"]))]
    fb = last.fraction_bound()
    res = CommandResult()
    res.tables[""] = (WindowCensus.HEADER + ["trace_defect", "mixing"],
                      [c.row() + [c.trace_defect(), c.mixing] for c in out])
    res.summary = {"relative_error": last.relative_error, "prediction": last.prediction, "N": last.N,
                   "N_pm": list(last.N_pm), "szego": list(last.szego), "ambiguity_pm": list(last.ambiguity_pm),
                   "mixing": last.mixing, "trace_defect": last.trace_defect(), "fraction_bound": fb,
                   "dim_eff": last.dim_eff, "order": order}
    res.checks = {"census_weyl": last.relative_error <= 0.15, "census_szego": last.szego_ok(),
                  "census_trace": last.trace_defect() <= 1e-8,
                  "census_fraction_bound": all(a >= b for a, b in fb)}
    return res


def cmd_qe(cfg, pool=None) -> CommandResult:
    from .grid import weyl_matrix
    from .spectral import project_eigens, qe_diagnostic
    from .symbols import MatrixSymbol, constant_symbol

    order = _orders(cfg, (2,))[0]
    hbar = cfg["hbar_list"][-1]
    w = cfg["window"]
    model, grid, H, spec, Pp, Pm = _projected_setup(cfg, hbar, order)
    idx = spec.window(w["E"], hbar * w["omega"])
    data = project_eigens(spec, H, Pp, Pm, idx=idx)
    rng = command_rng(cfg)
    ident = constant_symbol(I4)
    odd = MatrixSymbol(lambda X, P: P[0] * I4, hermitian=True, name="p1")
    r1 = qe_diagnostic(data, weyl_matrix(ident, grid), ident, model, grid, w["E"], 1, w["delta"], rng=rng,
                       psi=spec.vectors[:, idx])
    r2 = qe_diagnostic(data, weyl_matrix(odd, grid), odd, model, grid, w["E"], 1, w["delta"], rng=rng)
    res = CommandResult()
    res.tables[""] = (["E", "identity", "p1"], [[e, a, b] for e, a, b in zip(r1.E, r1.expectations, r2.expectations)])
    counts, edges = r1.histogram
    res.tables["histogram"] = (["lo", "hi", "count"], [[a, b, c] for a, b, c in zip(edges[:-1], edges[1:], counts)])
    res.summary = {"identity": {"M_E": r1.M_E, "max_dev": float(np.max(np.abs(r1.expectations - 1)))},
                   "odd": {"M_E": r2.M_E, "se": r2.M_E_se, "mean_deviation": r2.mean_deviation,
                           "variance": r2.variance, "density_fraction": r2.density_fraction},
                   "retained": int(len(r1.E))}
    res.checks = {"qe_identity": bool(np.max(np.abs(r1.expectations - 1)) <= 1e-12 and abs(r1.M_E - 1) <= 1e-12),
                  "qe_odd_average": abs(r2.M_E) <= 3 * r2.M_E_se}
    res.figures.append(("histogram", lambda p: plotting.histogram_figure(counts, edges, p)))
    return res


def _offdiag_job(args):
    from .egorov import block_offdiag_point, periodic_grid

    cfg, order, hbar, times = args
    model = _model(cfg)
    return block_offdiag_point(model, order, periodic_grid(hbar, model.preset.periodic_box[0], model.constants), times)


def cmd_invariant_algebra(cfg, pool=None) -> CommandResult:
    from .egorov import dominant_frequency, fit_oscillation, free_offdiag_norms, free_offdiag_series
    from .grid import QuantumGrid, gaussian_packet
    from .report import ScalingReport

    hs = cfg["hbar_list"]
    times = np.linspace(0.0, 2.0, 9)
    res = CommandResult()
    rows = []
    for order in _orders(cfg, (0, 1)):
        jobs = [(cfg, order, h, times) for h in hs]
        series = list(pool.map(_offdiag_job, jobs)) if pool else [_offdiag_job(j) for j in jobs]
        peak = [max(s) for s in series]
        rep = ScalingReport(f"invariant-algebra-{order}", hs, {"offdiag": peak}, expected_slope=order + 1,
                            threshold=order + 0.7)
        rows += [[order, h, t, v] for h, s in zip(hs, series) for t, v in zip(times, s)]
        res.summary[f"order_{order}"] = rep.summary()
        res.checks[f"block_diagonal_order_{order}"] = rep.passed()
        res.figures.append((f"order{order}", lambda p, r=rep: plotting.scaling_figure(r, p)))
    # bare position on the free preset
    free = build_model(make_preset("free"), Constants(**cfg["constants"]))
    hbar, q = 1.0, 1.0
    grid = QuantumGrid(256, 128.0, hbar, constants=free.constants)
    c0 = gaussian_packet(grid, [0.0, 0.0, 0.0], [q, 0.0, 0.0], np.array([1.0, 0.0, 0.0, 0.0]), width=6.4)
    ts = np.linspace(0.0, 20.0, 201)
    off = free_offdiag_series(free, grid, c0, ts)
    cst = free.constants
    omega_exact = 2 * np.sqrt(cst.c ** 2 * q ** 2 + cst.rest_energy ** 2) / hbar
    omega, _ = fit_oscillation(ts, off, dominant_frequency(ts, off))
    res.tables[""] = (["order", "hbar", "t", "offdiag"], rows)
    res.tables["free"] = (["t", "offdiag_expectation"], [[t, v] for t, v in zip(ts, off)])
    res.summary["free"] = {"omega": omega, "omega_exact": omega_exact, "amplitude": float(np.ptp(off))}
    res.checks["free_offdiag_frequency"] = abs(omega / omega_exact - 1) <= 0.01
    # the off-diagonal operator norm is carried along unchanged: no suppression in time
    norms = free_offdiag_norms(free, grid, ts[::50])
    res.summary["free"]["norms"] = norms
    res.checks["free_offdiag_order_one"] = bool(min(norms) >= 0.99 * norms[0] > 0.1 * hbar)
    res.figures.append(("free", lambda p: plotting.series_figure(ts, {"<P+xP- + P-xP+>": off}, p,
                                                                 title="bare position, free")))
    return res


RUNNERS = {
    "zitter": cmd_zitter,
    "projector-scaling": cmd_projector_scaling,
    "egorov": cmd_egorov,
    "flow": cmd_flow,
    "precession": cmd_precession,
    "sphere-check": cmd_sphere_check,
    "spectrum": cmd_spectrum,
    "census": cmd_census,
    "qe": cmd_qe,
    "invariant-algebra": cmd_invariant_algebra,
}


# ------------------------------------------------------------------ driver
def run_command(cfg: dict, pool=None) -> tuple[int, dict]:
    """Run one command, write its artifacts, return (exit code, JSON summary)."""
    from .report import config_hash, write_artifacts

    t0 = time.perf_counter()
    res = RUNNERS[cfg["command"]](cfg, pool)
    wall = time.perf_counter() - t0
    checks = {k: bool(v) for k, v in res.checks.items()}
    summary = {"command": cfg["command"], "config": cfg, "config_hash": config_hash(hashed_config(cfg)),
               "wall_time": wall, "checks": checks, "passed": all(checks.values()), "results": res.summary}
    tag, paths = write_artifacts(cfg["out"], cfg["command"], hashed_config(cfg), res.tables, summary)
    if cfg.get("plots", True):
        for suffix, fn in res.figures:
            fn(Path(cfg["out"]) / f"{tag}-{suffix}.png")
    for name, ok in checks.items():
        log.info("%-40s %s", name, "PASS" if ok else "FAIL")
    return (0 if summary["passed"] else 1), summary


def run(cfg: dict, jobs: int | None = None) -> int:
    jobs = jobs or 1
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        if cfg["command"] == "all":
            codes, overall = [], {}
            t0 = time.perf_counter()
            for name in COMMANDS:
                sub = resolve(name, {k: v for k, v in cfg.items() if k not in ("command", "preset", "hbar_list",
                                                                                "grid")})
                code, summ = run_command(sub, pool)
                codes.append(code)
                overall[name] = summ["checks"]
            from .report import write_artifacts

            summary = {"command": "all", "config": cfg, "wall_time": time.perf_counter() - t0,
                       "checks": overall, "passed": all(c == 0 for c in codes)}
            write_artifacts(cfg["out"], "all", hashed_config(cfg), {}, summary)
            return 0 if summary["passed"] else 1
        return run_command(cfg, pool)[0]
    finally:
        if pool is not None:
            pool.shutdown()


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diracsc", description="Semiclassical Dirac experiments.")
    ap.add_argument("command", choices=COMMANDS + ("all",))
    ap.add_argument("--config", type=Path, help="JSON config file (flags override its keys)")
    ap.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--hbar", type=_float_list, default=None, help="comma-separated hbar values")
    ap.add_argument("--order", type=int, default=None)
    ap.add_argument("--tol", type=float, default=None)
    ap.add_argument("--profile", choices=("full", "quick"), default=None)
    ap.add_argument("--no-plots", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        file_cfg = json.loads(args.config.read_text()) if args.config else {}
        over = {}
        if args.seed is not None:
            over["rng_seed"] = args.seed
        if args.out is not None:
            over["out"] = args.out
        if args.hbar is not None:
            over["hbar_list"] = args.hbar
        if args.order is not None:
            over["order"] = args.order
        if args.tol is not None:
            over["tol"] = args.tol
        if args.profile is not None:
            over["profile"] = args.profile
        if args.no_plots:
            over["plots"] = False
        cfg = resolve(args.command, file_cfg, over)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    jobs = args.jobs or os.cpu_count() or 1
    try:
        code = run(cfg, jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PhysicalGuardError as exc:
        print(f"physical guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except DiracLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    print(f"{args.command}: {'PASS' if code == 0 else 'FAIL'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
