"""Scenario configuration files, running a scenario, and writing its outputs.

A scenario is a JSON object with a fixed schema (see ``docs/formats.md``).
Unknown keys are rejected. Validation errors carry the line of the
offending key in the source text when it can be found.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .entry_exit import attach_predictions, measure_entry_exit
from .errors import ConfigError, ParameterError
from .integrate import (
    EventSpec,
    IntegratorConfig,
    Trajectory,
    WatchKind,
    branch_distances,
    branch_points,
    integrate_full,
    integrate_reduced,
    lambda3_values,
)
from .model import PARAM_NAMES, Params
from .presets import Preset, get_preset
from .slow import BranchId, disease_free, endemic_equilibrium, nearest_equilibrium, r0_slow

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "name", "params", "mode", "initial", "branch", "t_end", "tau_end",
            "integrator", "events", "outputs"}
FULL_VARS = ("U", "M", "Z", "S", "I", "R")
SLOW_VARS = ("S", "I", "R")
OUTPUT_KINDS = ("trajectory_csv", "events_json", "summary_json", "gnuplot")
DEFAULT_OUTPUTS = ("trajectory_csv", "events_json", "summary_json")
CSV_HEADER = ("t", "tau", "U", "M", "Z", "S", "I", "R", "dist_C00", "dist_C01", "dist_C02",
              "lambda3_C01", "lambda3_C02")


@dataclass(frozen=True)
class ScenarioConfig:
    params: Params
    mode: str
    initial: tuple
    t_end: float | None = None
    tau_end: float | None = None
    branch: BranchId | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    events: tuple = ()
    outputs: tuple = DEFAULT_OUTPUTS
    name: str | None = None

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "params": self.params.as_dict(),
            "mode": self.mode,
            "initial": dict(zip(FULL_VARS if self.mode == "full" else SLOW_VARS, self.initial)),
            "integrator": self.integrator.as_dict(),
            "events": [e.as_dict() for e in self.events],
            "outputs": list(self.outputs),
        }
        if self.name is not None:
            out["name"] = self.name
        if self.mode == "full":
            out["t_end"] = self.t_end
        else:
            out["tau_end"] = self.tau_end
            out["branch"] = self.branch.value
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# parsing and validation


def _line_of(text: str | None, path) -> int | None:
    """1-based line of the last key in ``path``, searching keys in sequence."""
    if not text:
        return None
    pos = 0
    found = None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos, found = m.end(), m.start()
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


class _Validator:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def fail(self, message, *path):
        raise ConfigError(message, _line_of(self.text, path) if path else None, self.source)

    def number(self, value, *path, positive=False, allow_zero=True):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(f"{'.'.join(map(str, path))} must be a finite number, got {value!r}", *path)
        if positive and (value < 0 or (value == 0 and not allow_zero)):
            self.fail(f"{'.'.join(map(str, path))} must be {'> 0' if not allow_zero else '>= 0'}, got {value!r}", *path)
        return float(value)

    def unknown(self, obj, allowed, *path):
        if not isinstance(obj, dict):
            self.fail(f"{'.'.join(map(str, path)) or 'config'} must be a JSON object", *path)
        for key in obj:
            if key not in allowed:
                self.fail(f"unknown key {key!r} in {'.'.join(map(str, path)) or 'config'}; "
                          f"allowed: {', '.join(sorted(allowed))}", *path, key)


def config_from_dict(data: dict, text: str | None = None, source: str | None = None) -> ScenarioConfig:
    v = _Validator(text, source)
    v.unknown(data, TOP_KEYS)
    if data.get("schema_version") != SCHEMA_VERSION:
        v.fail(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}", "schema_version")
    name = data.get("name")
    if name is not None and not isinstance(name, str):
        v.fail("name must be a string", "name")

    raw_params = data.get("params")
    if raw_params is None:
        v.fail("missing required key 'params'")
    v.unknown(raw_params, set(PARAM_NAMES), "params")
    for key in PARAM_NAMES:
        if key not in raw_params:
            v.fail(f"params.{key} is required", "params")
        v.number(raw_params[key], "params", key)
    try:
        params = Params(**{k: raw_params[k] for k in PARAM_NAMES})
    except ParameterError as exc:
        key = str(exc).split()[0]
        v.fail(str(exc), "params", key if key in PARAM_NAMES else "params")

    mode = data.get("mode")
    if mode not in ("full", "reduced"):
        v.fail(f"mode must be 'full' or 'reduced', got {mode!r}", "mode")
    names = FULL_VARS if mode == "full" else SLOW_VARS
    raw_init = data.get("initial")
    if raw_init is None:
        v.fail("missing required key 'initial'")
    v.unknown(raw_init, set(names), "initial")
    initial = []
    for key in names:
        if key not in raw_init:
            v.fail(f"initial.{key} is required in {mode} mode", "initial")
        initial.append(v.number(raw_init[key], "initial", key, positive=True))

    branch = None
    t_end = tau_end = None
    if mode == "full":
        for key in ("branch", "tau_end"):
            if key in data:
                v.fail(f"{key} is only valid in reduced mode", key)
        if "t_end" not in data:
            v.fail("full mode needs t_end")
        t_end = v.number(data["t_end"], "t_end", positive=True, allow_zero=False)
        if not params.epsilon > 0:
            v.fail("epsilon must be > 0 for a full simulation; epsilon = 0 is the layer problem "
                   "(use the equilibria or bifurcation commands)", "params", "epsilon")
    else:
        if "t_end" in data:
            v.fail("t_end is only valid in full mode; use tau_end", "t_end")
        if "tau_end" not in data:
            v.fail("reduced mode needs tau_end")
        tau_end = v.number(data["tau_end"], "tau_end", positive=True, allow_zero=False)
        try:
            branch = BranchId.parse(data.get("branch"))
        except ValueError as exc:
            v.fail(str(exc), "branch")
        I0 = initial[1]
        if np.isnan(branch_points(params, branch, I0)).any():
            v.fail(f"branch {branch.value} is infeasible at the initial infection level I = {I0}", "branch")

    raw_int = data.get("integrator", {})
    v.unknown(raw_int, set(IntegratorConfig().as_dict()), "integrator")
    try:
        integrator = IntegratorConfig(**raw_int)
    except ParameterError as exc:
        key = str(exc).split()[0].split(".")[-1]
        v.fail(str(exc), "integrator", key)

    events = []
    raw_events = data.get("events", [])
    if not isinstance(raw_events, list):
        v.fail("events must be a list", "events")
    for i, ev in enumerate(raw_events):
        v.unknown(ev, {"kind", "branch", "delta", "terminal"}, "events")
        try:
            kind = WatchKind(ev.get("kind"))
            if mode == "reduced" and kind is WatchKind.BRANCH:
                raise ParameterError("branch proximity events need full mode")
            spec = EventSpec(kind, ev.get("branch"), float(ev.get("delta", 1e-2)), bool(ev.get("terminal", False)))
        except (ValueError, TypeError) as exc:
            v.fail(f"events[{i}]: {exc}", "events")
        events.append(spec)

    outputs = data.get("outputs", list(DEFAULT_OUTPUTS))
    if not isinstance(outputs, list) or any(o not in OUTPUT_KINDS for o in outputs):
        v.fail(f"outputs must be a list drawn from {', '.join(OUTPUT_KINDS)}", "outputs")

    return ScenarioConfig(params, mode, tuple(initial), t_end, tau_end, branch, integrator,
                          tuple(events), tuple(outputs), name)


def loads(text: str, source: str | None = None) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    return config_from_dict(data, text, source)


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), str(path))


def load_params(path) -> Params:
    """Read a bare parameter object, or the ``params`` of a scenario file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    v = _Validator(text, str(path))
    prefix = ()
    if isinstance(data, dict) and "params" in data:
        data = data["params"]
        prefix = ("params",)
    v.unknown(data, set(PARAM_NAMES), *prefix)
    for key in PARAM_NAMES:
        if key not in data:
            v.fail(f"{key} is required", *prefix)
        v.number(data[key], *prefix, key)
    try:
        return Params(**{k: data[k] for k in PARAM_NAMES})
    except ParameterError as exc:
        key = str(exc).split()[0]
        v.fail(str(exc), *prefix, key)


def preset_config(preset: Preset | str, branch=None, events=None) -> ScenarioConfig:
    """ScenarioConfig for a preset; reduced presets need ``branch`` to pick one system."""
    if isinstance(preset, str):
        preset = get_preset(preset)
    if preset.mode == "full":
        events = tuple(events) if events is not None else (EventSpec(WatchKind.BRANCH, "C01"),
                                                           EventSpec(WatchKind.BRANCH, "C02"))
        return ScenarioConfig(preset.params, "full", preset.initial, t_end=preset.t_end, events=events,
                              name=preset.name)
    branch = BranchId.parse(branch or preset.branches[-1])
    return ScenarioConfig(preset.params, "reduced", preset.initial, tau_end=preset.tau_end, branch=branch,
                          events=tuple(events or ()), name=f"{preset.name}_{branch.value}")


# --------------------------------------------------------------------------
# running


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trajectory: Trajectory
    records: list = field(default_factory=list)

    def summary(self) -> dict:
        cfg, traj = self.config, self.trajectory
        p = cfg.params
        final = [float(v) for v in traj.y[-1]]
        out = {
            "name": cfg.name,
            "mode": cfg.mode,
            "final_time": float(traj.t[-1]),
            "n_accepted": traj.n_accepted,
            "n_rejected": traj.n_rejected,
            "max_drift": traj.max_drift,
            "initial_defect": list(traj.initial_defect),
            "terminated_by": None if traj.terminated_by is None else traj.terminated_by.to_dict(),
        }
        if cfg.mode == "full":
            out["final_state"] = dict(zip(FULL_VARS, final))
            eq, dist = nearest_equilibrium(p, final)
            out["nearest_equilibrium"] = None if eq is None else {
                "label": eq.label.value, "distance": dist, "state": dict(zip(FULL_VARS, eq.state)),
                "stability": eq.stability.value}
            out["episodes"] = [r.to_dict() for r in self.records]
        else:
            out["branch"] = cfg.branch.value
            out["final_state"] = dict(zip(SLOW_VARS, final))
            out["r0"] = r0_slow(p, cfg.branch)
            candidates = [disease_free(p, cfg.branch)]
            ee = endemic_equilibrium(p, cfg.branch)
            if ee is not None:
                candidates.append(ee)
            best = min(candidates, key=lambda e: max(abs(a - b) for a, b in zip(e.state, final)))
            out["nearest_equilibrium"] = {**best.to_dict(),
                                          "distance": max(abs(a - b) for a, b in zip(best.state, final))}
        return out


def run(config: ScenarioConfig, backend: str | None = None) -> ScenarioResult:
    if config.mode == "full":
        traj = integrate_full(config.params, config.initial, config.t_end, config.integrator, config.events,
                              backend=backend)
        records = []
        for spec in config.events:
            if spec.kind is WatchKind.BRANCH:
                records.extend(measure_entry_exit(traj, config.params, spec.branch, spec.delta, config.integrator))
        records.sort(key=lambda r: (r.entry_time, r.branch.value))
        attach_predictions(records, config.params, config.integrator)
        return ScenarioResult(config, traj, records)
    traj = integrate_reduced(config.params, config.branch, config.initial, config.tau_end, config.integrator,
                             config.events, backend=backend)
    return ScenarioResult(config, traj)


# --------------------------------------------------------------------------
# serialization


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if obj is None or isinstance(obj, str):
        return obj
    return to_jsonable(list(obj))


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_rows(traj: Trajectory, params: Params) -> np.ndarray:
    """The CSV columns as an (n, 13) array."""
    eps = params.epsilon
    if traj.kind == "full":
        t = traj.t
        tau = eps * t
        fast, slow = traj.y[:, :3], traj.y[:, 3:]
    else:
        tau = traj.t
        t = tau / eps if eps > 0 else np.full_like(tau, np.nan)
        slow = traj.y
        fast = branch_points(params, traj.branch, slow[:, 1])
    I = slow[:, 1]
    cols = [t, tau, fast[:, 0], fast[:, 1], fast[:, 2], slow[:, 0], slow[:, 1], slow[:, 2]]
    cols += [branch_distances(params, b, fast, I) for b in ("C00", "C01", "C02")]
    cols += [lambda3_values(params, b, I) for b in ("C01", "C02")]
    return np.column_stack(cols)


def trajectory_csv(traj: Trajectory, params: Params) -> str:
    lines = [",".join(CSV_HEADER)]
    for row in trajectory_rows(traj, params):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])


GNUPLOT_TEMPLATE = """# gnuplot script: plots the fast and slow components against fast time
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set multiplot layout 2,1
plot '{csv}' using 1:3 with lines, '' using 1:4 with lines, '' using 1:5 with lines
plot '{csv}' using 1:6 with lines, '' using 1:7 with lines, '' using 1:8 with lines
unset multiplot
"""


def write_outputs(result: ScenarioResult, out_dir, stem: str | None = None) -> dict:
    """Write the configured sinks into ``out_dir``; returns {kind: path}."""
    cfg = result.config
    stem = stem or cfg.name or "scenario"
    paths = {}
    for kind in cfg.outputs:
        if kind == "trajectory_csv":
            path = os.path.join(out_dir, f"{stem}_trajectory.csv")
            write_atomic(path, trajectory_csv(result.trajectory, cfg.params))
        elif kind == "events_json":
            path = os.path.join(out_dir, f"{stem}_events.json")
            write_atomic(path, dumps_json([e.to_dict() for e in result.trajectory.events]))
        elif kind == "summary_json":
            path = os.path.join(out_dir, f"{stem}_summary.json")
            write_atomic(path, dumps_json(result.summary()))
        else:
            path = os.path.join(out_dir, f"{stem}_plot.gp")
            write_atomic(path, GNUPLOT_TEMPLATE.format(csv=f"{stem}_trajectory.csv"))
        paths[kind] = path
    return paths
