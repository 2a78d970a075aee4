"""Adaptive integration of the full, fast and reduced systems.

The stepping itself happens in ``kernels.dopri_run`` (compiled or pure
Python). This module drives it in chunks, stitches the chunks into a
``Trajectory`` with a quartic dense output, and locates events on that
dense output by bisection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import IntegrationError, ParameterError, PreconditionError, StepBudgetExceeded, StepSizeUnderflow
from .model import FastState, FullState, Params, SlowState
from .slow import BranchId

CHUNK_STEPS = 50_000
BISECTION_MAX_ITER = 60
DEFAULT_DELTA = 1e-2


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    h0: float = 1e-3
    hmax: float = 10.0
    max_steps: int = 1_000_000
    event_tol: float = 1e-10

    def __post_init__(self):
        for name in ("rtol", "atol", "h0", "hmax", "event_tol"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ParameterError(f"integrator.{name} must be a positive number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if isinstance(self.max_steps, bool) or not isinstance(self.max_steps, int) or self.max_steps <= 0:
            raise ParameterError(f"integrator.max_steps must be a positive integer, got {self.max_steps!r}")
        if self.rtol < 1e-14:
            raise ParameterError(f"integrator.rtol must be >= 1e-14, got {self.rtol!r}")

    def as_dict(self) -> dict:
        return {"rtol": self.rtol, "atol": self.atol, "h0": self.h0, "hmax": self.hmax,
                "max_steps": self.max_steps, "event_tol": self.event_tol}


class EventKind(str, enum.Enum):
    BRANCH_ENTER = "BranchEnter"
    BRANCH_EXIT = "BranchExit"
    LAMBDA3_ZERO = "Lambda3ZeroCrossing"
    INFECTION_EXTREMUM = "InfectionExtremum"


class WatchKind(str, enum.Enum):
    BRANCH = "branch"
    LAMBDA3 = "lambda3"
    INFECTION_EXTREMUM = "infection_extremum"


@dataclass(frozen=True)
class EventSpec:
    """What to watch. A ``branch`` watch yields both Enter and Exit events."""

    kind: WatchKind
    branch: BranchId | None = None
    delta: float = DEFAULT_DELTA
    terminal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", WatchKind(self.kind))
        if self.branch is not None:
            object.__setattr__(self, "branch", BranchId.parse(self.branch))
        if self.kind in (WatchKind.BRANCH, WatchKind.LAMBDA3) and self.branch is None:
            raise ParameterError(f"{self.kind.value} watch needs a branch")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ParameterError(f"delta must be positive, got {self.delta!r}")

    def as_dict(self) -> dict:
        out = {"kind": self.kind.value, "terminal": self.terminal, "delta": self.delta}
        if self.branch is not None:
            out["branch"] = self.branch.value
        return out


def branch_watches(delta: float = DEFAULT_DELTA, branches=("C01", "C02")) -> list[EventSpec]:
    return [EventSpec(WatchKind.BRANCH, b, delta) for b in branches]


@dataclass(frozen=True)
class Event:
    kind: EventKind
    time: float
    state: object
    branch: BranchId | None = None
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "time": self.time, "state": list(self.state), "payload": self.payload}
        out["branch"] = self.branch.value if self.branch is not None else None
        return out


# --------------------------------------------------------------------------
# branch geometry, vectorised over samples


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def branch_points(params: Params, branch, I) -> np.ndarray:
    """Branch point(s) in (U, M, Z) at infection level(s) I; NaN rows where infeasible."""
    branch = BranchId.parse(branch)
    I = np.atleast_1d(_as_float_array(I))
    out = np.empty((I.size, 3))
    mu1 = params.mu1
    if branch is BranchId.C00:
        out[:] = (1.0, 0.0, 0.0)
    elif branch is BranchId.C01:
        if params.b1 > mu1:
            out[:] = (mu1 / params.b1, (params.b1 - mu1) / params.b1, 0.0)
        else:
            out[:] = np.nan
    else:
        damp = 1.0 - params.K * I
        out[:, 0] = mu1 * damp / params.b2 if params.b2 > 0 else np.nan
        out[:, 1] = 0.0
        out[:, 2] = (params.b2 - mu1 * damp) / params.b2 if params.b2 > 0 else np.nan
        out[~(params.b2 > mu1 * damp)] = np.nan
    return out


def branch_distances(params: Params, branch, fast, I) -> np.ndarray:
    """Euclidean distances from fast states to the branch; +inf where infeasible."""
    fast = np.atleast_2d(_as_float_array(fast))
    pts = branch_points(params, branch, I)
    d = np.sqrt(np.sum((fast - pts) ** 2, axis=1))
    d[np.isnan(d)] = np.inf
    return d


def distance_to_branch(params: Params, state: FullState, branch) -> float:
    """Distance from ``state.fast`` to the branch point at ``state.slow.I``."""
    return float(branch_distances(params, branch, [list(state.fast)], [state.slow.I])[0])


def lambda3_values(params: Params, branch, I) -> np.ndarray:
    """Vectorised ``branch_lambda3``."""
    branch = BranchId.parse(branch)
    I = _as_float_array(I)
    mu1, b1 = params.mu1, params.b1
    c = params.b2 / (1.0 - params.K * I)
    if branch is BranchId.C00:
        return np.maximum(b1 - mu1, c - mu1)
    if branch is BranchId.C01:
        return mu1 * (c / b1 - 1.0)
    return mu1 * (b1 / c - 1.0)


# --------------------------------------------------------------------------
# trajectory


def _dense_eval(coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    th = theta[:, None]
    th1 = 1.0 - th
    c0, c1, c2, c3, c4 = (coeffs[:, k, :] for k in range(5))
    return c0 + th * (c1 + th1 * (c2 + th * (c3 + th1 * c4)))


@dataclass
class Trajectory:
    """Accepted steps plus the quartic dense output between them.

    ``t`` includes the initial time, so there are ``len(t) - 1`` segments.
    Segment ``i`` is valid on ``[t[i], t[i+1]]`` and evaluated with
    ``theta = (x - seg_t0[i]) / seg_h[i]``; a terminal event can end the last
    segment before its natural end.
    """

    kind: str  # "full", "fast" or "reduced"
    params: Params
    t: np.ndarray
    y: np.ndarray
    seg_t0: np.ndarray
    seg_h: np.ndarray
    dense: np.ndarray
    n_accepted: int
    n_rejected: int
    branch: BranchId | None = None
    frozen_I: float | None = None
    events: list = field(default_factory=list)
    terminated_by: Event | None = None
    initial_defect: tuple = ()
    max_drift: float = 0.0
    backend: str = kernels.BACKEND

    @property
    def times(self) -> np.ndarray:
        return self.t

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]

    @property
    def states(self) -> list:
        if self.kind == "full":
            return [FullState.from_array(row) for row in self.y]
        cls = FastState if self.kind == "fast" else SlowState
        return [cls(*row) for row in self.y]

    def sol(self, x) -> np.ndarray:
        """Dense-output state(s) at time(s) x; shape ``(dim,)`` for scalar x."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(_as_float_array(x))
        if np.any(x < self.t[0] - 1e-12) or np.any(x > self.t[-1] + 1e-12):
            raise ValueError(f"dense output requested outside [{self.t[0]}, {self.t[-1]}]")
        if self.seg_t0.size == 0:
            out = np.repeat(self.y[:1], x.size, axis=0)
        else:
            idx = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, self.seg_t0.size - 1)
            theta = (x - self.seg_t0[idx]) / self.seg_h[idx]
            out = _dense_eval(self.dense[idx], theta)
        return out[0] if scalar else out

    def events_of(self, kind=None, branch=None) -> list:
        out = self.events
        if kind is not None:
            out = [e for e in out if e.kind is EventKind(kind)]
        if branch is not None:
            out = [e for e in out if e.branch is BranchId.parse(branch)]
        return out


# --------------------------------------------------------------------------
# event functions


def _event_function(params: Params, spec: EventSpec, kind: str, branch=None):
    """g(t, y) evaluated row-wise on (m, dim) arrays."""
    if kind == "full":
        col_I = 4
    elif kind == "reduced":
        col_I = 1
    else:
        raise PreconditionError("events are only supported on full and reduced trajectories")
    if spec.kind is WatchKind.BRANCH:
        if kind != "full":
            raise PreconditionError("branch proximity events need a full trajectory")
        return lambda y: branch_distances(params, spec.branch, y[:, :3], y[:, 4]) - spec.delta
    if spec.kind is WatchKind.LAMBDA3:
        return lambda y: lambda3_values(params, spec.branch, y[:, col_I])
    if kind == "full":
        def dI(y):
            M, Z, S, I = y[:, 1], y[:, 2], y[:, 3], y[:, 4]
            rate = params.beta * (1 + M) / (1 + Z)
            return params.epsilon * (rate * S * I - (params.gamma + params.mu2) * I)
        return dI
    from .slow import branch_beta

    def dI_reduced(y):
        S, I = y[:, 0], y[:, 1]
        rate = np.array([branch_beta(params, branch, v) for v in I])
        return rate * S * I - (params.gamma + params.mu2) * I

    return dI_reduced


def _state_obj(kind, y):
    if kind == "full":
        return FullState.from_array(y)
    if kind == "reduced":
        return SlowState(*map(float, y))
    return FastState(*map(float, y))


def _bisect(traj_sol, g, a, b, ga_pos, tol):
    """Shrink [a, b] around the sign change of g; returns the final bracket."""
    for _ in range(BISECTION_MAX_ITER):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        gm = g(traj_sol(np.array([m])))[0]
        if (gm > 0) == ga_pos:
            a = m
        else:
            b = m
    return a, b


def locate_events(traj: Trajectory, specs: Sequence[EventSpec], config: IntegratorConfig,
                  first_segment: int = 0, include_initial: bool = True) -> list[Event]:
    """Events of ``specs`` on segments ``first_segment`` onwards, in time order."""
    events = []
    ys = traj.y[first_segment:]
    if ys.shape[0] < 1:
        return events
    for spec in specs:
        g = _event_function(traj.params, spec, traj.kind, traj.branch)
        vals = g(ys)
        pos = vals > 0
        if include_initial and first_segment == 0 and spec.kind is WatchKind.BRANCH and not pos[0]:
            events.append(_make_event(traj, spec, EventKind.BRANCH_ENTER, traj.t[0], traj.y[0],
                                      vals[0], (traj.t[0], traj.t[0]), initial=True))
        for j in np.nonzero(pos[:-1] != pos[1:])[0]:
            i = first_segment + int(j)
            a, b = _bisect(traj.sol, g, traj.t[i], traj.t[i + 1], bool(pos[j]), config.event_tol)
            y_b = traj.sol(b)
            g_b = g(y_b[None, :])[0]
            if spec.kind is WatchKind.BRANCH:
                kind = EventKind.BRANCH_EXIT if not pos[j] else EventKind.BRANCH_ENTER
            elif spec.kind is WatchKind.LAMBDA3:
                kind = EventKind.LAMBDA3_ZERO
            else:
                kind = EventKind.INFECTION_EXTREMUM
            events.append(_make_event(traj, spec, kind, b, y_b, g_b, (a, b), rising=not pos[j]))
    events.sort(key=lambda e: e.time)
    return events


def _make_event(traj, spec, kind, time, y, gval, bracket, rising=False, initial=False):
    payload = {"bracket": [float(bracket[0]), float(bracket[1])]}
    col_I = 4 if traj.kind == "full" else 1
    I = float(y[col_I])
    if spec.kind is WatchKind.BRANCH:
        payload["delta"] = spec.delta
        payload["distance"] = float(gval + spec.delta)
        payload["lambda3"] = float(lambda3_values(traj.params, spec.branch, I))
        if initial:
            payload["initial"] = True
    elif spec.kind is WatchKind.LAMBDA3:
        payload["lambda3"] = float(gval)
        payload["direction"] = "up" if rising else "down"
    else:
        payload["type"] = "min" if rising else "max"
        payload["I"] = I
    return Event(kind, float(time), _state_obj(traj.kind, y), spec.branch, payload)


# --------------------------------------------------------------------------
# drivers


def _drift(kind, params, t, y, frozen_I=None):
    """Max deviation of the simplex sums from their exact relaxation laws.

    Off the simplex the sums are not conserved but relax exponentially
    (rate mu1 for the fast layer, epsilon*mu2 for the slow one in fast
    time); on the simplex both laws reduce to a constant 1.
    """
    drift = 0.0
    if kind in ("full", "fast"):
        n0 = math.fsum(y[0, :3])
        law = 1.0 + (n0 - 1.0) * np.exp(-params.mu1 * (t - t[0]))
        drift = max(drift, float(np.max(np.abs(y[:, :3].sum(axis=1) - law))))
    if kind in ("full", "reduced"):
        cols = slice(3, 6) if kind == "full" else slice(0, 3)
        rate = params.epsilon * params.mu2 if kind == "full" else params.mu2
        n0 = math.fsum(y[0, cols])
        law = 1.0 + (n0 - 1.0) * np.exp(-rate * (t - t[0]))
        drift = max(drift, float(np.max(np.abs(y[:, cols].sum(axis=1) - law))))
    return drift


def _run(kind, system, params, y0, t0, t_end, config, specs=(), branch=None, frozen_I=None,
         clamp=True, backend=None):
    kernel = kernels.get(backend)
    p = params.as_vector(frozen_I if frozen_I is not None else 0.0)
    y0 = np.asarray(y0, dtype=float)
    ts = [np.array([t0])]
    ys = [y0[None, :]]
    seg_t0 = []
    seg_h = []
    dense = []
    n_acc = n_rej = 0
    h = config.h0
    errold = 1e-4
    t, y = float(t0), y0
    traj = None
    events = []
    terminated = None
    while True:
        budget = min(CHUNK_STEPS, config.max_steps - n_acc)
        status, cts, cys, cdense, na, nr, h, errold = kernel(
            system, p, t, y, float(t_end), config.rtol, config.atol, h, config.hmax, budget, errold, clamp)
        if na:
            starts = np.concatenate(([t], cts[:-1]))
            seg_t0.append(starts)
            seg_h.append(cts - starts)
            ts.append(cts)
            ys.append(cys)
            dense.append(cdense)
            t, y = float(cts[-1]), cys[-1]
        n_acc += na
        n_rej += nr
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t}", t, y)
        traj = Trajectory(kind, params, np.concatenate(ts), np.concatenate(ys),
                          np.concatenate(seg_t0) if seg_t0 else np.empty(0),
                          np.concatenate(seg_h) if seg_h else np.empty(0),
                          np.concatenate(dense) if dense else np.empty((0, 5, y0.size)),
                          n_acc, n_rej, branch, frozen_I, backend=backend or kernels.BACKEND)
        if specs:
            first = traj.t.size - 1 - na
            new = locate_events(traj, specs, config, first_segment=first, include_initial=(first == 0))
            for ev in new:
                events.append(ev)
                spec_terminal = any(s.terminal and s.branch is ev.branch and _matches(s, ev) for s in specs)
                if spec_terminal:
                    terminated = ev
                    break
            if terminated is not None:
                traj = _truncate(traj, terminated.time)
                events = [e for e in events if e.time <= terminated.time]
                break
        if status == 0:
            break
        if status == 2:
            raise StepSizeUnderflow(f"step size underflow at t={t}", t, y)
        if n_acc >= config.max_steps:
            raise StepBudgetExceeded(f"step budget of {config.max_steps} exhausted at t={t}", t, y)
    traj.events = events
    traj.terminated_by = terminated
    traj.max_drift = _drift(kind, params, traj.t, traj.y, frozen_I)
    return traj


def _matches(spec: EventSpec, ev: Event) -> bool:
    if spec.kind is WatchKind.BRANCH:
        return ev.kind in (EventKind.BRANCH_ENTER, EventKind.BRANCH_EXIT) and not ev.payload.get("initial")
    if spec.kind is WatchKind.LAMBDA3:
        return ev.kind is EventKind.LAMBDA3_ZERO
    return ev.kind is EventKind.INFECTION_EXTREMUM


def _truncate(traj: Trajectory, t_stop: float) -> Trajectory:
    keep = int(np.searchsorted(traj.t, t_stop, side="left"))
    y_stop = traj.sol(t_stop)
    t = np.concatenate((traj.t[:keep], [t_stop]))
    y = np.vstack((traj.y[:keep], y_stop[None, :]))
    nseg = keep
    return Trajectory(traj.kind, traj.params, t, y, traj.seg_t0[:nseg], traj.seg_h[:nseg], traj.dense[:nseg],
                      traj.n_accepted, traj.n_rejected, traj.branch, traj.frozen_I, backend=traj.backend)


def _check_nonnegative(values, what):
    if any((not math.isfinite(v)) or v < 0 for v in values):
        raise ParameterError(f"{what} must have finite nonnegative components, got {tuple(values)}")


def integrate_full(params: Params, state0, t_end: float, config: IntegratorConfig | None = None,
                   watch: Sequence[EventSpec] = (), t0: float = 0.0, backend: str | None = None) -> Trajectory:
    """Integrate the coupled system in fast time from ``t0`` to ``t_end``.

    ``state0`` must be nonnegative. Its distance from the simplices is
    recorded in ``Trajectory.initial_defect`` rather than rejected, since
    some published initial conditions sit slightly off it.
    """
    config = config or IntegratorConfig()
    if not params.epsilon > 0:
        raise PreconditionError("integrate_full needs epsilon > 0; use the fast layer for epsilon = 0")
    y0 = list(state0.as_array() if isinstance(state0, FullState) else state0)
    if len(y0) != 6:
        raise ParameterError("full state needs six components")
    _check_nonnegative(y0, "initial state")
    if not t_end > t0:
        raise PreconditionError(f"t_end must exceed t0 ({t_end} <= {t0})")
    traj = _run("full", kernels.SYSTEM_FULL, params, y0, t0, t_end, config, tuple(watch), backend=backend)
    traj.initial_defect = (abs(math.fsum(y0[:3]) - 1.0), abs(math.fsum(y0[3:]) - 1.0))
    return traj


def integrate_reduced(params: Params, branch, state0, tau_end: float, config: IntegratorConfig | None = None,
                      watch: Sequence[EventSpec] = (), tau0: float = 0.0, backend: str | None = None) -> Trajectory:
    """Integrate the reduced slow flow on a branch in slow time."""
    config = config or IntegratorConfig()
    branch = BranchId.parse(branch)
    y0 = list(state0)
    if len(y0) != 3:
        raise ParameterError("slow state needs three components")
    _check_nonnegative(y0, "initial state")
    if not tau_end > tau0:
        raise PreconditionError(f"tau_end must exceed tau0 ({tau_end} <= {tau0})")
    specs = tuple(watch)
    traj = _run("reduced", kernels.SYSTEM_REDUCED[branch.value], params, y0, tau0, tau_end, config, specs,
                branch=branch, backend=backend)
    traj.initial_defect = (abs(math.fsum(y0) - 1.0),)
    return traj


def integrate_fast(params: Params, state0, I: float, t_end: float, config: IntegratorConfig | None = None,
                   backend: str | None = None) -> Trajectory:
    """Integrate the fast layer with the infection level frozen at I."""
    config = config or IntegratorConfig()
    y0 = list(state0)
    _check_nonnegative(y0, "initial state")
    if not 0.0 <= I <= 1.0:
        raise PreconditionError(f"I must lie in [0, 1], got {I}")
    traj = _run("fast", kernels.SYSTEM_FAST, params, y0, 0.0, t_end, config, frozen_I=float(I), backend=backend)
    traj.initial_defect = (abs(math.fsum(y0) - 1.0),)
    return traj


def integrate_linear(rate: float, y0: float, t_end: float, config: IntegratorConfig,
                     backend: str | None = None) -> Trajectory:
    """Scalar test problem ``y' = rate * y`` (used for order checks)."""
    dummy = Params(1, 1, 0, 1, 1, 1, 1, 1, 1)
    return _run("linear", kernels.SYSTEM_LINEAR, dummy, [float(y0)], 0.0, t_end, config,
                frozen_I=float(rate), clamp=False, backend=backend)


def fixed_step_solution(params, state0, t_end: float, h: float, system: str = "full",
                        backend: str | None = None) -> Trajectory:
    """Uniform steps of size h (no error control, no clamping).

    For ``system="linear"`` pass the rate as ``params`` and y(0) as ``state0``.
    """
    cfg = IntegratorConfig(rtol=1.0, atol=1.0, h0=h, hmax=h, max_steps=10_000_000)
    if system == "linear":
        traj = integrate_linear(float(params), float(state0), t_end, cfg, backend)
    else:
        y0 = np.asarray(list(state0), dtype=float)
        traj = _run("full", kernels.SYSTEM_FULL, params, y0, 0.0, t_end, cfg, clamp=False, backend=backend)
    if traj.n_rejected:
        raise IntegrationError("fixed-step run rejected a step; h is too large for this problem", traj.t[-1],
                               traj.y[-1])
    return traj


def fixed_step_endpoint(params, state0, t_end: float, h: float, system: str = "full",
                        backend: str | None = None):
    y = fixed_step_solution(params, state0, t_end, h, system, backend).y[-1]
    return float(y[0]) if system == "linear" else y


def simplex_drift(traj: Trajectory) -> float:
    """Max deviation of the simplex sums from their exact relaxation laws."""
    return _drift(traj.kind, traj.params, traj.t, traj.y, traj.frozen_I)
