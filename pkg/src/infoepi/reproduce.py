"""Figure-by-figure reproduction checks for the built-in presets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .entry_exit import alternations, completed_sequence
from .presets import FULL_T_END, get_preset
from .scenario import ScenarioResult, preset_config, run, write_outputs
from .slow import FullLabel, c02_infection, endemic_equilibrium, full_equilibria, r0_slow

PREDICTOR_REL_TOL = 0.20


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    target: object = None
    tolerance: object = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: value={_short(self.value)} target={_short(self.target)} tol={self.tolerance}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "target": self.target,
                "tolerance": self.tolerance}


@dataclass
class FigureReport:
    figure: str
    checks: list = field(default_factory=list)
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, target=None, tolerance=None):
        self.checks.append(Check(name, bool(passed), value, target, tolerance))

    def to_dict(self) -> dict:
        return {"figure": self.figure, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _short(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, (list, tuple)) and x and all(isinstance(v, float) for v in x):
        return "[" + ", ".join(f"{v:.6g}" for v in x) + "]"
    return x


def _inf_norm(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def _state_at(result: ScenarioResult, t: float) -> np.ndarray:
    traj = result.trajectory
    return traj.sol(min(t, traj.t[-1]))


def _episode_checks(report: FigureReport, result: ScenarioResult, expected: list[str], trailing: str | None):
    seq = completed_sequence(result.records)
    report.add("completed episodes (delta=1e-2)", seq == expected, seq, expected)
    if trailing is not None:
        tail = [r.branch.value for r in result.records if not r.completed]
        report.add("trailing unpaired entry", tail == [trailing], tail, [trailing])


def fig3(out_dir=None) -> FigureReport:
    rep = FigureReport("fig3")
    res = run(preset_config("fig3"))
    rep.results.append(res)
    p = res.config.params
    _episode_checks(rep, res, ["C01", "C02"], "C01")
    y = _state_at(res, FULL_T_END)
    sfe_fast = (p.mu1 / p.b1, (p.b1 - p.mu1) / p.b1, 0.0)
    ee = endemic_equilibrium(p, "C01").state
    rep.add("fast state at t=1.5e4 near SFE", _inf_norm(y[:3], sfe_fast) < 1e-3, _inf_norm(y[:3], sfe_fast), 0.0, 1e-3)
    rep.add("slow state at t=1.5e4 near EE_C01", _inf_norm(y[3:], list(ee)) < 1e-3, _inf_norm(y[3:], list(ee)),
            0.0, 1e-3)
    c02 = [r for r in res.records if r.branch.value == "C02" and r.completed]
    err = c02[0].prediction_error() if c02 and c02[0].prediction is not None else None
    rep.add("C02 predicted exit within 20% (relative to episode duration)",
            err is not None and err <= PREDICTOR_REL_TOL, err, 0.0, PREDICTOR_REL_TOL)
    _finish(rep, out_dir)
    return rep


def fig4(out_dir=None) -> FigureReport:
    rep = FigureReport("fig4")
    res = run(preset_config("fig4"))
    rep.results.append(res)
    p = res.config.params
    _episode_checks(rep, res, ["C01"], "C02")
    y = res.trajectory.y[-1]
    I2 = c02_infection(p)
    rep.add("M(t_end) < 1e-3", y[1] < 1e-3, float(y[1]), 0.0, 1e-3)
    rep.add("|I(t_end) - I*_C02| < 1e-3", abs(y[4] - I2) < 1e-3, float(y[4]), I2, 1e-3)
    damp = 1 - p.K * I2
    mfe_fast = (p.mu1 * damp / p.b2, 0.0, (p.b2 - p.mu1 * damp) / p.b2)
    rep.add("fast state near MFE at I*_C02", _inf_norm(y[:3], mfe_fast) < 1e-3, _inf_norm(y[:3], mfe_fast), 0.0,
            1e-3)
    _finish(rep, out_dir)
    return rep


def fig5(out_dir=None) -> FigureReport:
    rep = FigureReport("fig5")
    res = run(preset_config("fig5"))
    rep.results.append(res)
    p = res.config.params
    y = res.trajectory.y[-1]
    target = (p.b1 - p.b2) / (p.K * p.b1)
    rep.add("|I(t_end) - I*| < 1e-3 (coexistence)", abs(y[4] - target) < 1e-3, float(y[4]), target, 1e-3)
    star = next(e for e in full_equilibria(p) if e.label is FullLabel.ESTAR)
    rep.add("coexistence equilibrium feasible and stable", star.feasible and star.stability.value == "stable",
            star.stability.value, "stable")
    _finish(rep, out_dir)
    return rep


def _reduced_figure(name, targets) -> FigureReport:
    rep = FigureReport(name)
    preset = get_preset(name)
    p = preset.params
    for branch, r0_target in zip(preset.branches, targets):
        r0 = r0_slow(p, branch)
        rep.add(f"R0 on {branch}", abs(r0 - r0_target) < 1e-3, r0, r0_target, 1e-3)
        res = run(preset_config(preset, branch))
        rep.results.append(res)
        final = res.trajectory.y[-1]
        if r0 < 1:
            rep.add(f"{branch} run reaches the DFE (I < 1e-6 at tau=500)", final[1] < 1e-6, float(final[1]), 0.0,
                    1e-6)
        else:
            ee = list(endemic_equilibrium(p, branch).state)
            d = _inf_norm(final, ee)
            rep.add(f"{branch} run reaches its EE (inf-norm < 1e-4)", d < 1e-4, d, 0.0, 1e-4)
    return rep


def fig6(out_dir=None) -> FigureReport:
    rep = _reduced_figure("fig6", (0.9, 1.1))
    _finish(rep, out_dir)
    return rep


def fig7(out_dir=None) -> FigureReport:
    rep = _reduced_figure("fig7", (1.1, 0.9))
    _finish(rep, out_dir)
    return rep


def fig8(out_dir=None) -> FigureReport:
    rep = FigureReport("fig8")
    res = run(preset_config("fig8"))
    rep.results.append(res)
    p = res.config.params
    n_alt = alternations(res.records)
    rep.add("alternating C01/C02 episodes before t=20000", n_alt >= 3, n_alt, ">= 3")
    star = next(e for e in full_equilibria(p) if e.label is FullLabel.ESTAR)
    d = _inf_norm(res.trajectory.y[-1], star.state.as_array())
    rep.add("final state within 1e-2 of the coexistence equilibrium", d < 1e-2, d, 0.0, 1e-2)
    _finish(rep, out_dir)
    return rep


def _finish(rep: FigureReport, out_dir):
    if out_dir is None:
        return
    from .scenario import dumps_json, write_atomic

    for res in rep.results:
        write_outputs(res, out_dir)
    write_atomic(os.path.join(out_dir, f"{rep.figure}_checks.json"), dumps_json(rep.to_dict()))


FIGURES = {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}


def reproduce(name: str, out_dir=None) -> FigureReport:
    try:
        fn = FIGURES[name.lower()]
    except KeyError:
        raise KeyError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}") from None
    return fn(out_dir)

