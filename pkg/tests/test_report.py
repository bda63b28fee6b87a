import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diracsc.report import ScalingReport, config_hash, csv_text, fit_slope, write_artifacts


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 4.0), st.floats(1e-3, 10.0))
def test_fit_slope_power_law(k, a):
    h = np.array([0.2, 0.1, 0.05, 0.025])
    assert fit_slope(h, a * h ** k) == pytest.approx(k, abs=1e-10)


def test_report_exact_and_threshold():
    h = [0.2, 0.1, 0.05]
    rep = ScalingReport("demo", h, {"a": [4e-2, 1e-2, 2.5e-3], "b": [1e-16, 2e-16, 1e-16]},
                        expected_slope=2, threshold=1.7)
    assert rep.slopes["a"] == pytest.approx(2.0)
    assert rep.exact["b"] and np.isnan(rep.slopes["b"])
    assert rep.passed()
    assert rep.summary()["slopes"]["b"] is None
    bad = ScalingReport("demo", h, {"a": [1e-2, 0.7e-2, 0.5e-2]}, threshold=1.7)
    assert not bad.passed()


def test_csv_format():
    text = csv_text(["x", "y"], [[0.1, 1], [1 / 3, "a,b"]])
    assert text.endswith("\r\n") and text.count("\r\n") == 3
    rows = list(csv.reader(io.StringIO(text, newline="")))
    assert rows[1] == ["0.10000000000000001", "1"]
    assert float(rows[2][0]) == 1 / 3       # %.17g round-trips
    assert rows[2][1] == "a,b"


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_write_artifacts(tmp_path):
    tag, paths = write_artifacts(tmp_path, "demo", {"k": 1}, {"": (["h"], [[0.5]]), "extra": (["z"], [[1]])},
                                 {"value": np.float64(2.5), "arr": np.arange(3), "ok": np.bool_(True)})
    names = sorted(p.name for p in paths)
    assert names == sorted([f"{tag}.csv", f"{tag}-extra.csv", f"{tag}.json"])
    data = json.loads((tmp_path / f"{tag}.json").read_text())
    assert data == {"value": 2.5, "arr": [0, 1, 2], "ok": True}
    assert (tmp_path / f"{tag}.csv").read_bytes() == b"h\r\n0.5\r\n"
