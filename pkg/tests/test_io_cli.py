import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmeshrink import __version__, acceptance, cli, io
from pmeshrink.config import (
    OUTPUT_ROOT_ENV,
    Task,
    load_preset,
    parse_config,
    preset_names,
)
from pmeshrink.errors import ConfigError
from pmeshrink.params import Params, exponents

FAST_SHOOT = ["--bracket-tol", "1e-6", "--set", "shoot.tail_stages=0",
              "--set", "shoot.backward_tail=false"]


# ---------------------------------------------------------------------------
# io
# ---------------------------------------------------------------------------


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=20))
def test_csv_roundtrip_exact(values):
    p = Params(2.0, 0.5, 2.0, 1)
    text = io.csv_text({"x": values, "y": values[::-1]}, io.header(p, {"tol": 1e-10}))
    path_hdr = json.loads(text.splitlines()[0][2:])
    assert path_hdr["params"] == p.as_dict() and path_hdr["version"] == __version__
    assert path_hdr["tolerances"] == {"tol": 1e-10}


def test_csv_file_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=50) * 10.0 ** np.arange(-25, 25)
    hdr = io.header(Params(2.0, 0.5, 2.0, 1), {"a": 1.0})
    path = io.write_csv(tmp_path / "a.csv", {"x": x, "label": ["k"] * 50}, hdr)
    hdr2, cols = io.read_csv(path)
    assert hdr2 == hdr
    np.testing.assert_array_equal(cols["x"], x)
    assert cols["label"] == ["k"] * 50
    with pytest.raises(ValueError):
        io.csv_text({"a": [1.0], "b": [1.0, 2.0]})


def test_json_roundtrip_and_determinism(tmp_path):
    payload = {"b": np.arange(3), "a": {"elapsed": 1.23, "x": np.float64(0.1), "inf": math.inf},
               "flag": np.bool_(True)}
    hdr = io.header(Params(2.0, 0.5, 2.0, 1), {"t": 1e-3})
    p = io.write_json(tmp_path / "r.json", payload, hdr)
    h, data = io.read_json(p)
    assert h == hdr
    assert data == {"b": [0, 1, 2], "a": {"x": 0.1, "inf": "inf"}, "flag": True}
    assert io.dumps(payload, hdr) == p.read_text()
    kept = json.loads(io.dumps(payload, hdr, keep_timings=True))
    assert kept["data"]["a"]["elapsed"] == 1.23


def test_acceptance_report_roundtrip(tmp_path):
    res = acceptance.CriterionResult(3, "x", True, {"v": np.array([1.0, 2.0]), "w": 0.5}, 1.0)
    hdr = io.header(Params(2.0, 0.5, 2.0, 1))
    report = {"criteria": [res.as_dict()], "passed": True}
    path = io.write_json(tmp_path / "acc.json", report, hdr)
    _, back = io.read_json(path)
    expected = json.loads(io.dumps(report, hdr))["data"]
    assert back == expected
    io.write_json(tmp_path / "acc2.json", back, hdr)
    assert (tmp_path / "acc2.json").read_text() == path.read_text()


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_minimal_config_defaults():
    cfg = parse_config({"m": 2, "q": 0.5, "sigma": 2, "dim": 1, "task": "shoot"})
    assert cfg.params == Params(2.0, 0.5, 2.0, 1)
    assert cfg.task is Task.SHOOT
    assert cfg.section("shoot")["bracket_tol"] == 1e-10
    assert cfg.section("simulate")["initial"]["kind"] == "bump"
    eff = cfg.effective()
    assert eff["params"] == {"m": 2.0, "q": 0.5, "sigma": 2.0, "N": 1}


def test_sigma_below_threshold():
    with pytest.raises(ConfigError) as exc:
        parse_config({"m": 2, "q": 0.5, "sigma": 0.5, "task": "shoot"})
    assert exc.value.field == "params.sigma"
    assert "2(1-q)/(m-1)" in str(exc.value)


@pytest.mark.parametrize("raw, field", [
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "shoot", "colour": 1}, "colour"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "shoot", "shoot": {"tol": 1}}, "shoot.tol"),
    ({"params": {"m": 2, "q": 0.5, "sigma": 2, "d": 1}, "task": "shoot"}, "params.d"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "simulate",
      "simulate": {"initial": {"kind": "gauss"}}}, "simulate.initial.kind"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "simulate",
      "simulate": {"initial": {"width": 1}}}, "simulate.initial.width"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "nope"}, "task"),
    ({"m": 2, "q": 0.5, "task": "shoot"}, "params"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "shoot", "shoot": {"a_seed": "big"}}, "shoot.a_seed"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "shoot", "shoot": {"a_seed": -1.0}}, "shoot.a_seed"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "sweep",
      "sweep": {"parameter": "sigma", "values": [2.0, 0.1]}}, "sweep.values[1]"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "simulate", "simulate": {"t_end": 0.0}},
     "simulate.t_end"),
    ({"m": 2, "q": 0.5, "sigma": 2, "task": "acceptance", "acceptance": {"criteria": [14]}},
     "acceptance.criteria"),
    ({"preset": "no-such", "task": "shoot"}, "preset"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    assert exc.value.field == field


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "low-sum", "task": "simulate",
                                "simulate": {"t_end": 2.0, "initial": {"kind": "constant"}}}))
    cfg = parse_config(path, overrides={"simulate": {"n_cells": 64}, "dim": 2})
    assert cfg.params == Params(1.2, 0.5, 6.0, 2)
    sim = cfg.section("simulate")
    assert (sim["t_end"], sim["n_cells"], sim["initial"]["kind"]) == (2.0, 64, "constant")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_presets_cover_regimes():
    names = preset_names()
    regimes = set()
    seeds = []
    for name in names:
        cfg = parse_config({"preset": name}, task="shoot")
        regimes.add(cfg.params.regime)
        seeds.append(cfg.section("shoot")["a_seed"])
        assert "description" in load_preset(name)
    assert regimes == {"low", "critical", "high"}
    assert min(seeds) < 1.0 < max(seeds)


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = parse_config({"preset": "high-sum", "output": "run1"}, task="shoot")
    assert cfg.output == tmp_path / "run1"
    cfg = parse_config({"preset": "high-sum"}, task="shoot")
    assert cfg.output == tmp_path / "out" / "shoot"
    cfg = parse_config({"preset": "high-sum", "output": str(tmp_path / "abs")}, task="shoot")
    assert cfg.output == tmp_path / "abs"


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def test_cli_shoot_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"s{k}"
        code = cli.main(["shoot", "--preset", "high-sum", "--out", str(out), *FAST_SHOOT])
        assert code == cli.EXIT_OK
        outs.append(out)
    for name in ("shoot.json", "profile.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    echoes = [io.read_json(o / "config.json")[1] for o in outs]
    for e in echoes:
        e.pop("output")
    assert echoes[0] == echoes[1]
    hdr, data = io.read_json(outs[0] / "shoot.json")
    assert hdr["params"] == Params(2.0, 0.5, 2.0, 1).as_dict()
    assert hdr["tolerances"]["bracket_tol"] == 1e-6
    assert "elapsed" not in data and data["relative_width"] <= 1e-6
    hdr_csv, cols = io.read_csv(outs[0] / "profile.csv")
    assert hdr_csv == hdr
    assert list(cols) == ["xi", "F", "dF", "f"]
    _, echo = io.read_json(outs[0] / "config.json")
    assert echo["shoot"]["tail_stages"] == 0
    assert "a* =" in capsys.readouterr().out


def test_cli_verify_from_saved_profile(tmp_path, ctx):
    shoot_dir = tmp_path / "shoot"
    assert cli.main(["shoot", "--m", "2", "--q", "0.5", "--sigma", "2", "--dim", "1",
                     "--out", str(shoot_dir)]) == 0
    out = tmp_path / "verify"
    code = cli.main(["verify-profile", "--preset", "high-sum", "--out", str(out),
                     "--set", f'verify.profile="{shoot_dir}"', "--set", "verify.ordering_pairs=5"])
    _, rep = io.read_json(out / "verify.json")
    failed = [k for k, v in rep["checks"].items() if not v["ok"]]
    assert code == cli.EXIT_OK, failed
    assert set(rep["checks"]) == {"interface_fit", "interface_bounds", "phase", "series", "pme",
                                  "ordering"}
    _, phase = io.read_csv(out / "phase.csv")
    assert list(phase) == ["xi", "eta", "X", "Y", "Z"]


def test_cli_simulate(tmp_path):
    out = tmp_path / "sim"
    code = cli.main(["simulate", "--preset", "high-sum", "--out", str(out),
                     "--set", "simulate.n_cells=128", "--set", "simulate.t_end=0.2",
                     "--set", "simulate.n_log=4", "--set", "simulate.snapshots=true"])
    assert code == cli.EXIT_OK
    hdr, cols = io.read_csv(out / "timeseries.csv")
    assert list(cols) == ["t", "sup_norm", "origin_value", "support_radius"]
    np.testing.assert_allclose(cols["t"], [0.0, 0.05, 0.1, 0.15, 0.2])
    assert np.all(np.diff(cols["sup_norm"]) <= 1e-12)
    _, snaps = io.read_csv(out / "snapshots.csv")
    assert len(snaps) == 1 + 5
    _, summary = io.read_json(out / "simulate.json")
    assert summary["dr"] == pytest.approx(2.0 / 128)


def test_cli_simulate_selfsimilar_with_error(tmp_path, ctx):
    out = tmp_path / "ss"
    code = cli.main(["simulate", "--preset", "high-sum", "--out", str(out), *FAST_SHOOT,
                     "--set", "simulate.initial.kind=\"selfsimilar\"", "--set", "simulate.t0=1.0",
                     "--set", "simulate.t_end=1.2", "--set", "simulate.r_max=21.0",
                     "--set", "simulate.n_cells=512", "--set", "simulate.n_log=2",
                     "--set", "simulate.rescaled_error=true"])
    assert code == cli.EXIT_OK
    _, cols = io.read_csv(out / "timeseries.csv")
    assert cols["rescaled_error"][0] < 1e-6 * 204.0
    assert np.all(np.isfinite(cols["rescaled_error"]))


def test_cli_sweep(tmp_path):
    out = tmp_path / "sweep"
    code = cli.main(["sweep", "--preset", "high-sum", "--out", str(out), *FAST_SHOOT,
                     "--set", "sweep.parameter=\"sigma\"", "--set", "sweep.values=[2.0, 3.0]"])
    assert code == cli.EXIT_OK
    _, cols = io.read_csv(out / "sweep.csv")
    np.testing.assert_array_equal(cols["sigma"], [2.0, 3.0])
    assert cols["status"] == ["ok", "ok"]
    assert np.all(cols["a_star"] > 0)


def test_cli_acceptance_subset(tmp_path, capsys):
    out = tmp_path / "acc"
    code = cli.main(["acceptance", "--out", str(out), "--criteria", "10"])
    assert code == cli.EXIT_OK
    _, rep = io.read_json(out / "acceptance.json")
    assert rep["passed"] is True and rep["criteria"][0]["number"] == 10
    assert "[PASS] criterion 10" in capsys.readouterr().out


def test_cli_acceptance_failure_exit_code(tmp_path, monkeypatch):
    def failing(ctx):
        return acceptance.CriterionResult(99, "always fails", False)
    failing.number = 99
    monkeypatch.setattr(acceptance, "CRITERIA", (failing,))
    assert cli.main(["acceptance", "--out", str(tmp_path / "f")]) == cli.EXIT_FAIL


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["shoot", "--m", "2", "--q", "0.5", "--sigma", "0.1",
                     "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "params.sigma" in capsys.readouterr().err
    assert cli.main(["shoot", "--preset", "high-sum", "--out", str(tmp_path / "y"),
                     "--set", "shoot.max_doublings=1", *FAST_SHOOT]) == cli.EXIT_NUMERICAL
    assert cli.main(["shoot", "--preset", "high-sum", "--set", "oops"]) == cli.EXIT_CONFIG
    assert cli.main([]) == cli.EXIT_CONFIG
    assert cli.main(["--list-presets"]) == cli.EXIT_OK
    assert "high-sum" in capsys.readouterr().out
