import json

import pytest

from diracsc import cli


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_resolve_layering():
    cfg = cli.resolve("census", {"window": {"omega": 3.0}, "rng_seed": 5}, {"rng_seed": 9, "hbar_list": [0.2]})
    assert cfg["window"] == {"E": 2.0, "omega": 3.0, "delta": 0.1}
    assert cfg["rng_seed"] == 9 and cfg["hbar_list"] == [0.2]
    assert cli.resolve("census", {"profile": "quick"})["hbar_list"] == cli.QUICK["census"]["hbar_list"]


@pytest.mark.parametrize("bad", [{"bogus": 1}, {"order": 7}, {"window": {"omega": -1}}, {"rng_seed": -1},
                                 {"version": 2}, {"preset": {"name": "nope"}}])
def test_invalid_config_exit_2(tmp_path, bad, capsys):
    assert cli.main(["flow", "--config", _write(tmp_path, bad), "--out", str(tmp_path)]) == 2
    assert "config invalid" in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path):
    assert cli.main(["flow", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "x.json").write_text("{not json")
    assert cli.main(["flow", "--config", str(tmp_path / "x.json")]) == 2


def test_gap_violation_exit_3(tmp_path):
    cfg = {"preset": {"name": "periodic", "params": {"phi0": 1.2}}}
    assert cli.main(["spectrum", "--config", _write(tmp_path, cfg), "--out", str(tmp_path), "--no-plots"]) == 3


def test_empty_window_exit_4(tmp_path):
    cfg = {"window": {"E": 0.0, "omega": 1.0}}
    argv = ["spectrum", "--config", _write(tmp_path, cfg), "--hbar", "0.2", "--out", str(tmp_path), "--no-plots"]
    assert cli.main(argv) == 4


def test_sphere_check_artifacts(tmp_path):
    assert cli.main(["sphere-check", "--out", str(tmp_path), "--jobs", "1"]) == 0
    js = list(tmp_path.glob("sphere-check-*.json"))
    assert len(js) == 1 and js[0].with_suffix(".csv").exists()
    summary = json.loads(js[0].read_text())
    assert summary["passed"] and summary["config"]["command"] == "sphere-check"
    assert summary["wall_time"] > 0 and all(summary["checks"].values())
    assert js[0].stem == f"sphere-check-{summary['config_hash']}"


def test_hash_ignores_output_location(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["precession", "--out", str(d), "--jobs", "1", "--no-plots"]) == 0
    assert sorted(p.name for p in a.iterdir()) == sorted(p.name for p in b.iterdir())
    assert not list(a.glob("*.png"))


def test_flow_writes_png(tmp_path):
    assert cli.main(["flow", "--out", str(tmp_path), "--jobs", "1"]) == 0
    pngs = list(tmp_path.glob("flow-*.png"))
    assert pngs and pngs[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_command_rng_streams_differ():
    a = cli.command_rng({"rng_seed": 1, "command": "qe"}).random()
    b = cli.command_rng({"rng_seed": 1, "command": "census"}).random()
    assert a != b and a == cli.command_rng({"rng_seed": 1, "command": "qe"}).random()


def test_bad_hbar_list():
    with pytest.raises(SystemExit):
        cli.main(["flow", "--hbar", "0.1,abc"])
