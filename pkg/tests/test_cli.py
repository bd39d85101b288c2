import json

import pytest

from cavmux import cli
from cavmux.analysis import FitConvergenceError
from cavmux.config import dump_config, paper_defaults
from cavmux.io import read_json


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_derive_cavity_table(capsys):
    assert cli.run(["derive-cavity"]) == 0
    out = capsys.readouterr().out
    rows = dict(line.split()[:2] for line in out.strip().splitlines())
    assert float(rows["finesse"]) == pytest.approx(91061, rel=1e-4)
    assert float(rows["purcell"]) == pytest.approx(73.848)
    assert float(rows["eta_total"]) == pytest.approx(0.0225, rel=0.01)


def test_g2_outputs_are_byte_identical(tmp_path):
    args = ["g2", "--pulses", "30000", "--seed", "3"]
    assert cli.run(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.run(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    assert {"manifest.json", "config.toml", "g2.csv", "g2_fit.json", "clicks.csv", "plot_g2.json"} <= set(a)
    man = read_json(tmp_path / "a" / "manifest.json")
    assert man["seed"] == 3 and man["subcommand"] == "g2"
    assert sorted(man["files"]) == man["files"]


def test_strip_origin_and_seed_change_output(tmp_path):
    assert cli.run(["g2", "--pulses", "30000", "--strip-origin", "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "clicks.csv").read_text().splitlines()[0] == "timestamp_ns"
    assert cli.run(["g2", "--pulses", "30000", "--seed", "9", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "g2.csv").read_bytes() != (tmp_path / "b" / "g2.csv").read_bytes()


def test_written_config_reloads(tmp_path):
    assert cli.run(["rabi", "--shots-scale", "0.05", "--seed", "7", "--out", str(tmp_path / "r")]) == 0
    assert cli.run(["rabi", "--config", str(tmp_path / "r" / "config.toml"), "--shots-scale", "0.05",
                    "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "r" / "rabi.csv").read_bytes() == (tmp_path / "s" / "rabi.csv").read_bytes()
    fit = read_json(tmp_path / "r" / "rabi_fit.json")
    assert fit["model"] == "rabi-damped"


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(dump_config(paper_defaults()).replace("b_field = 6.8", "b_field = 3.0"))
    assert cli.run(["g2", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError" and "6.8" in err["message"]


def test_runtime_error_exit_code(tmp_path, capsys, monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("detector offline")

    monkeypatch.setattr(cli, "run_g2_experiment", broken)
    code = cli.run(["g2", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_RUNTIME
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 3


def test_fit_failure_exit_code(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise FitConvergenceError("no convergence", initial=[0.1, 0.08])

    monkeypatch.setattr(cli, "fit_bunching", boom)
    assert cli.run(["g2", "--pulses", "30000", "--out", str(tmp_path / "o")]) == cli.EXIT_FIT
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "0.08" in err["message"]


def test_invalid_shots_scale():
    assert cli.run(["g2", "--shots-scale", "0"]) == cli.EXIT_CONFIG


def test_scan_and_echo_smoke(tmp_path):
    assert cli.run(["scan", "--shots-scale", "0.05", "--out", str(tmp_path / "s")]) == 0
    assert {"spectrum.csv", "ensemble.json", "plot_spectrum.json"} <= set(_files(tmp_path / "s"))
    assert cli.run(["echo", "--shots-scale", "0.1", "--out", str(tmp_path / "e")]) == 0
    fit = read_json(tmp_path / "e" / "echo_fit.json")
    assert 0.05e-3 < fit["params"]["tau"]["value"] < 0.3e-3


@pytest.mark.slow
def test_interrogate_smoke(tmp_path):
    assert cli.run(["interrogate", "--feed-forward", "off", "--out", str(tmp_path / "i")]) == 0
    files = _files(tmp_path / "i")
    assert {"intervals.csv", "aggregate.csv", "aggregate_fit.json", "plot_interrogation.json"} <= set(files)
    assert read_json(tmp_path / "i" / "aggregate_fit.json")["feed_forward"] == "off"
