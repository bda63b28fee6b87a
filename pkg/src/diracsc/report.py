"""Scaling reports, log-log slope fits and delimited/JSON artifact writers."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

EXACT_FLOOR = 1e-12


def fit_slope(hbar, values) -> float:
    """Least-squares slope of log(values) against log(hbar)."""
    h = np.log(np.asarray(hbar, dtype=float))
    v = np.log(np.maximum(np.asarray(values, dtype=float), 1e-300))
    return float(np.polyfit(h, v, 1)[0])


@dataclass
class ScalingReport:
    """Measured defects per hbar for one asymptotic claim."""

    claim: str
    hbar: list
    defects: dict
    expected_slope: float | None = None
    threshold: float | None = None
    slopes: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fit()

    def fit(self):
        for name, vals in self.defects.items():
            vals = [v for v in vals]
            if np.all(np.asarray(vals, dtype=float) < EXACT_FLOOR):
                self.exact[name] = True
                self.slopes[name] = float("nan")
            else:
                self.exact[name] = False
                self.slopes[name] = fit_slope(self.hbar, vals) if len(vals) >= 2 else float("nan")
        return self.slopes

    def passed(self, names=None) -> bool:
        if self.threshold is None:
            return True
        names = list(self.defects) if names is None else names
        return all(self.exact[n] or self.slopes[n] >= self.threshold for n in names)

    def rows(self):
        keys = list(self.defects)
        return ["hbar"] + keys, [[h] + [self.defects[k][i] for k in keys] for i, h in enumerate(self.hbar)]

    def summary(self) -> dict:
        return {
            "claim": self.claim,
            "hbar": list(map(float, self.hbar)),
            "slopes": {k: _num(v) for k, v in self.slopes.items()},
            "exact": dict(self.exact),
            "expected_slope": self.expected_slope,
            "threshold": self.threshold,
        }


def _num(v):
    v = float(v)
    return None if np.isnan(v) else v


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (complex, np.complexfloating)):
        return "%.17g" % v.real
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_artifacts(out_dir, command: str, config: dict, tables: dict, summary: dict):
    """Write <command>-<hash>[-<table>].csv and <command>-<hash>.json; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{command}-{config_hash(config)}"
    paths = []
    for name, (header, rows) in tables.items():
        p = out / (f"{tag}.csv" if name == "" else f"{tag}-{name}.csv")
        p.write_text(csv_text(header, rows))
        paths.append(p)
    j = out / f"{tag}.json"
    j.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    paths.append(j)
    return tag, paths


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    return str(o)
