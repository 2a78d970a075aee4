import csv
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoepi.cli import main
from infoepi.errors import ConfigError
from infoepi.integrate import EventSpec, IntegratorConfig, WatchKind
from infoepi.model import PARAM_NAMES, Params
from infoepi.presets import PRESETS
from infoepi.slow import BranchId
from infoepi.scenario import (CSV_HEADER, ScenarioConfig, config_from_dict, dumps_json, load, loads, preset_config,
                              read_trajectory_csv, run, to_jsonable, write_outputs)

HERE = os.path.dirname(__file__)
CONFIGS = os.path.join(HERE, "..", "configs")


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return str(path)


def fig3_dict(**changes):
    d = json.loads(preset_config("fig3").dumps())
    for key, value in changes.items():
        d[key] = value
    return d


# ---- config parsing


positive = st.floats(0.05, 10.0)


@st.composite
def scenario_configs(draw):
    prm = Params(b1=draw(positive), b2=draw(positive), K=draw(st.floats(0, 0.95)), beta=draw(positive),
                 gamma=draw(positive), eta=draw(positive), mu1=draw(positive), mu2=draw(positive),
                 epsilon=draw(st.floats(0.001, 1.0)))
    integ = IntegratorConfig(rtol=draw(st.floats(1e-12, 1e-3)), atol=draw(st.floats(1e-14, 1e-6)))
    if draw(st.booleans()):
        init = tuple(draw(st.lists(st.floats(0, 1), min_size=6, max_size=6)))
        events = (EventSpec(WatchKind.BRANCH, draw(st.sampled_from(["C01", "C02"])), draw(st.floats(1e-4, 0.5)),
                            draw(st.booleans())),
                  EventSpec(WatchKind.INFECTION_EXTREMUM))
        return ScenarioConfig(prm, "full", init, t_end=draw(st.floats(1, 1e4)), integrator=integ, events=events,
                              name=draw(st.one_of(st.none(), st.text(min_size=1, max_size=8))))
    init = (0.7, 0.2, 0.1)
    return ScenarioConfig(prm, "reduced", init, tau_end=draw(st.floats(1, 500)), branch=draw(
        st.sampled_from([BranchId.C00, BranchId.C01])), integrator=integ,
        events=(EventSpec(WatchKind.LAMBDA3, "C01"),))


@settings(max_examples=100, deadline=None)
@given(scenario_configs())
def test_round_trip(cfg):
    try:
        parsed = loads(cfg.dumps())
    except ConfigError as exc:
        # the reduced C01 branch may be infeasible for the drawn rates
        assert "infeasible" in str(exc)
        return
    assert parsed.to_dict() == cfg.to_dict()
    assert parsed.dumps() == cfg.dumps()


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_checked_in_configs_load(name):
    cfg = load(os.path.join(CONFIGS, name))
    assert cfg.name == name[:-5]


def test_line_anchored_errors():
    text = json.dumps(fig3_dict(), indent=2).replace('"K": 0.9', '"K": 1.2')
    with pytest.raises(ConfigError) as info:
        loads(text, "bad.json")
    line = next(i for i, s in enumerate(text.splitlines(), 1) if '"K": 1.2' in s)
    assert info.value.line == line
    assert str(info.value).startswith(f"bad.json:{line}: K must lie in [0, 1)")


@pytest.mark.parametrize("mutate,fragment", [
    (lambda d: d.update(bogus=1), "unknown key 'bogus'"),
    (lambda d: d["integrator"].update(rtoll=1e-8), "unknown key 'rtoll'"),
    (lambda d: d["params"].update(epsilon=0.0), "epsilon must be > 0"),
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(mode="both"), "mode"),
    (lambda d: d["params"].pop("mu2"), "params.mu2 is required"),
    (lambda d: d["initial"].update(U=-0.1), "initial.U"),
    (lambda d: d.update(tau_end=4.0), "only valid in reduced mode"),
])
def test_validation_errors(mutate, fragment):
    d = fig3_dict()
    mutate(d)
    with pytest.raises(ConfigError, match=fragment.replace("(", r"\(").replace(".", r"\.")):
        config_from_dict(d, json.dumps(d, indent=2), "x.json")


def test_reduced_branch_feasibility_checked():
    d = json.loads(preset_config("fig6", "C00").dumps())
    d["branch"] = "C02"
    d["params"]["b2"] = 1.0  # below mu1 (1 - K I): C02 absent at I = 0.2
    with pytest.raises(ConfigError, match="infeasible"):
        config_from_dict(d)


def test_preset_fidelity():
    with open(os.path.join(HERE, "data", "captions.json")) as fh:
        captions = json.load(fh)
    for name, row in captions.items():
        if name.startswith("_"):
            continue
        pr = PRESETS[name]
        for key in PARAM_NAMES:
            assert getattr(pr.params, key) == pytest.approx(row[key], rel=1e-12), (name, key)
        vars_ = ("U", "M", "Z", "S", "I", "R") if pr.mode == "full" else ("S", "I", "R")
        assert pr.initial == tuple(float(row["initial"][v]) for v in vars_)
        if "t_end" in row:
            assert pr.t_end == row["t_end"]


# ---- outputs


def test_json_serialization_of_special_values():
    assert to_jsonable({"a": float("inf"), "b": [float("nan"), 1j]}) == {"a": "inf", "b": ["nan", [0.0, 1.0]]}
    assert dumps_json({"b": 1, "a": 2}).index('"a"') < dumps_json({"b": 1, "a": 2}).index('"b"')


def test_outputs_are_deterministic_and_lossless(tmp_path):
    cfg = ScenarioConfig(PRESETS["fig3"].params, "full", PRESETS["fig3"].initial, t_end=300.0,
                         events=(EventSpec(WatchKind.BRANCH, "C01"),), outputs=("trajectory_csv", "events_json",
                                                                               "summary_json", "gnuplot"))
    first = write_outputs(run(cfg), tmp_path / "a", "run")
    second = write_outputs(run(cfg), tmp_path / "b", "run")
    assert sorted(first) == sorted(second)
    for kind in first:
        assert open(first[kind], "rb").read() == open(second[kind], "rb").read(), kind
    with open(first["trajectory_csv"]) as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == CSV_HEADER
    rows = read_trajectory_csv(first["trajectory_csv"])
    result = run(cfg)
    assert np.array_equal(rows[:, 0], result.trajectory.t)
    assert np.array_equal(rows[:, 2:8], result.trajectory.y)
    assert np.allclose(rows[:, 1], rows[:, 0] * cfg.params.epsilon, rtol=1e-15, atol=0)
    summary = json.load(open(first["summary_json"]))
    assert {"final_state", "nearest_equilibrium", "episodes"} <= set(summary)


# ---- CLI


def test_cli_simulate_fig3(tmp_path, capsys):
    rc = main(["simulate", "--config", os.path.join(CONFIGS, "fig3.json"), "--out-dir", str(tmp_path)])
    assert rc == 0
    summary = json.load(open(tmp_path / "fig3_summary.json"))
    near = summary["nearest_equilibrium"]
    assert near["distance"] < 1e-3
    # the orbit settles on the coexistence point, a hair away from E3
    assert near["label"] == "Estar"
    assert "nearest equilibrium" in capsys.readouterr().out


def test_cli_simulate_reduced(tmp_path):
    rc = main(["simulate", "--config", os.path.join(CONFIGS, "fig6_C01.json"), "--out-dir", str(tmp_path)])
    assert rc == 0
    summary = json.load(open(tmp_path / "fig6_C01_summary.json"))
    assert summary["nearest_equilibrium"]["kind"] == "EE"


def test_cli_config_errors(tmp_path, capsys):
    text = json.dumps(fig3_dict(), indent=2).replace('"K": 0.9', '"K": 1.2')
    assert main(["simulate", "--config", write(tmp_path, "bad.json", text)]) == 2
    assert "K must lie in [0, 1)" in capsys.readouterr().err
    d = fig3_dict()
    d["params"]["epsilon"] = 0.0
    assert main(["simulate", "--config", write(tmp_path, "eps.json", d)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["simulate", "--config", write(tmp_path, "broken.json", "{")]) == 2


def test_cli_integrator_failure(tmp_path, capsys):
    d = fig3_dict()
    d["integrator"]["max_steps"] = 5
    assert main(["simulate", "--config", write(tmp_path, "tiny.json", d), "--out-dir", str(tmp_path)]) == 3
    assert "step budget" in capsys.readouterr().err


def test_cli_equilibria(tmp_path, capsys):
    path = write(tmp_path, "p5.json", PRESETS["fig5"].params.as_dict())
    assert main(["equilibria", "--params", path]) == 0
    first = capsys.readouterr().out
    out = json.loads(first)
    star = next(e for e in out["full"] if e["label"] == "Estar")
    assert star["feasible"] and star["stability"] == "stable"
    assert all(re < 0 for re, _ in star["eigenvalues"])
    assert main(["equilibria", "--params", path]) == 0
    assert capsys.readouterr().out == first
    low = write(tmp_path, "low.json", dict(PRESETS["fig5"].params.as_dict(), b1=0.5, b2=0.5, K=0.0, beta=1.0))
    assert main(["equilibria", "--params", low, "--at-I", "0.3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [e["kind"] for e in out["fast"] if e["feasible"]] == ["MSFE"]
    assert [e["label"] for e in out["full"] if e["feasible"]] == ["E0"]


def test_cli_bifurcation(tmp_path, capsys):
    path = write(tmp_path, "p.json", PRESETS["fig3"].params.as_dict())
    assert main(["bifurcation", "--params", path, "--vary", "b1", "--range", "0.5:1.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["sotomayor"]["critical_value"] - 1.0) < 1e-8
    assert out["sotomayor"]["condition_ii"] == pytest.approx(-1.0, abs=1e-4)
    assert out["sotomayor"]["condition_iii_single"] == pytest.approx(-1.0, abs=1e-4)
    assert main(["bifurcation", "--params", path, "--vary", "b2", "--range", "0.3:0.8", "--at-I", "0.5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["sotomayor"]["critical_value"] - 0.55) < 1e-8
    assert out["closed_form_critical_value"] == pytest.approx(0.55)
    assert len(out["table"]) == 11
    assert main(["bifurcation", "--params", path, "--vary", "b1", "--range", "1.2:2.0"]) == 4


def test_cli_entry_exit(tmp_path, capsys):
    fig3 = os.path.join(CONFIGS, "fig3.json")
    assert main(["entry-exit", "--config", fig3, "--branch", "c02"]) == 0
    out = json.loads(capsys.readouterr().out)
    done = [r for r in out["records"] if r["exit_time"] is not None]
    assert len(done) == 1 and done[0]["prediction_relative_error"] <= 0.2
    assert main(["entry-exit", "--config", fig3, "--branch", "c01", "--delta", "2.0"]) == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    out = json.loads(captured.out)
    assert out["warnings"] and len(out["records"]) == 1 and out["records"][0]["entry_time"] == 0.0


def test_cli_entry_exit_fig4_c02(capsys):
    # the caption start has no skeptics, so the orbit never enters the C02 tube
    assert main(["entry-exit", "--config", os.path.join(CONFIGS, "fig4.json"), "--branch", "c02"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["records"] == []


def test_cli_reproduce_passing_figure(tmp_path, capsys):
    assert main(["reproduce", "fig6", "--out-dir", str(tmp_path)]) == 0
    assert "fig6: PASS" in capsys.readouterr().out
    assert (tmp_path / "fig6_checks.json").exists()
    assert (tmp_path / "fig6_C00_trajectory.csv").exists()


def test_cli_help_for_every_command(capsys):
    for cmd in ("simulate", "reproduce", "equilibria", "bifurcation", "entry-exit"):
        with pytest.raises(SystemExit) as info:
            main([cmd, "--help"])
        assert info.value.code == 0
        assert "usage" in capsys.readouterr().out
