"""Figures for the report path: PNGs written next to the CSV/JSON artifacts.

Everything goes through the Agg backend so the CLI works without a display.
PNG metadata is stripped of the software/date stamps, which keeps repeated runs
byte-stable where matplotlib allows it.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 3.6),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
    return path


def scaling_figure(report, path, title: str | None = None):
    """log-log defects against hbar with the fitted slopes in the legend."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        h = np.asarray(report.hbar, dtype=float)
        for name, vals in report.defects.items():
            v = np.maximum(np.asarray(vals, dtype=float), 1e-300)
            lab = f"{name} (exact)" if report.exact.get(name) else f"{name}, slope {report.slopes[name]:.2f}"
            ax.loglog(h, v, "o-", label=lab)
        if report.expected_slope is not None and len(h) > 1:
            ref = next(iter(report.defects.values()))
            v0 = max(float(ref[0]), 1e-300)
            ax.loglog(h, v0 * (h / h[0]) ** report.expected_slope, "k--", lw=0.8,
                      label=f"hbar^{report.expected_slope:g}")
        ax.set_xlabel("hbar")
        ax.set_ylabel("defect")
        ax.set_title(title or report.claim)
        ax.legend(fontsize=7)
        return _save(fig, path)


def series_figure(t, curves: dict, path, xlabel="t", ylabel="", title=""):
    """Several time series on one axis; curves maps label -> values."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for lab, y in curves.items():
            ax.plot(t, np.real(y), label=lab, lw=1.0)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        return _save(fig, path)


def sphere_figure(n_paths, path, title="spin direction"):
    """Polar-angle/azimuth tracks of precessing unit vectors."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for lab, n in n_paths.items():
            n = np.asarray(n)
            theta = np.arccos(np.clip(n[:, 2], -1, 1))
            phi = np.unwrap(np.arctan2(n[:, 1], n[:, 0]))
            ax.plot(phi, theta, lw=1.0, label=lab)
        ax.set_xlabel("azimuth")
        ax.set_ylabel("polar angle")
        ax.set_title(title)
        ax.legend(fontsize=7)
        return _save(fig, path)


def spectrum_figure(E, norms_plus, path, window=None, title="projected norms"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(E, norms_plus ** 2, ".", ms=3)
        if window is not None:
            for e in window:
                ax.axvline(e, color="k", lw=0.6, ls=":")
        ax.set_xlabel("E_n")
        ax.set_ylabel("||P+ psi_n||^2")
        ax.set_title(title)
        return _save(fig, path)


def histogram_figure(counts, edges, path, xlabel="||P+ psi_n||^2", title="scenario statistic"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        edges = np.asarray(edges)
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="k", lw=0.4)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.set_title(title)
        return _save(fig, path)


def scatter_figure(x, y, path, xlabel="", ylabel="", title="", logy=False):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, y, ".", ms=3)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, path)
