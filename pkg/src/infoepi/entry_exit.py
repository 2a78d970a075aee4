"""Entry-exit analysis: the planar map, an exit predictor and episode measurement.

An *episode* is a stretch of a full trajectory during which the fast
state stays within ``delta`` of a branch of the critical manifold. The
predictor integrates the reduced flow on the branch from the entry point
and accumulates ``A(tau) = integral of lambda3(I(tau)) dtau``; the
predicted exit is where ``A`` climbs back to zero.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize

from .errors import BracketError, HorizonExceeded, PreconditionError
from .integrate import (
    DEFAULT_DELTA,
    EventKind,
    EventSpec,
    IntegratorConfig,
    Trajectory,
    WatchKind,
    branch_distances,
    integrate_full,
    integrate_reduced,
    lambda3_values,
    locate_events,
)
from .model import FullState, Params, SlowState
from .slow import BranchId, endemic_equilibrium, reduced_slow_rhs

log = logging.getLogger(__name__)

A_ZERO_TOL = 1e-8
NON_MONOTONE_TOL = 1e-6
SETTLED_TOL = 1e-8
DEFAULT_HORIZON = 200.0
SEPARATION_CAVEAT = "predictor uses lambda3 only; eigenvalue separation along the orbit is not verified"

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


# --------------------------------------------------------------------------
# planar map


def planar_exit_point(f_on_axis: Callable[[float], float], g_on_axis: Callable[[float], float],
                      y0: float, search_bound: float, tol: float = 1e-10, check_points: int = 64) -> float:
    """Exit point p0(y0) > 0 solving ``integral_{y0}^{p0} f/g dy = 0``.

    ``f`` must be negative on (y0, 0) and positive on (0, search_bound),
    ``g`` positive on [y0, search_bound]; both are spot-checked on a grid.
    """
    if not y0 < 0:
        raise PreconditionError(f"y0 must be negative, got {y0}")
    if not search_bound > 0:
        raise PreconditionError(f"search_bound must be positive, got {search_bound}")
    for y in np.linspace(y0, search_bound, check_points):
        if not g_on_axis(y) > 0:
            raise PreconditionError(f"g must be positive on [y0, search_bound]; g({y}) = {g_on_axis(y)}")
        fy = f_on_axis(y)
        if (y < 0 and fy > 0) or (y > 0 and fy < 0):
            raise PreconditionError(f"sign(f) must equal sign(y); f({y}) = {fy}")

    def ratio(y):
        return f_on_axis(y) / g_on_axis(y)

    quad_opts = dict(epsabs=min(tol, 1e-12) * 1e-2, epsrel=1e-13, limit=200)
    phi0, _ = sp_integrate.quad(ratio, y0, 0.0, **quad_opts)

    def phi(p):
        return phi0 + sp_integrate.quad(ratio, 0.0, p, **quad_opts)[0]

    top = phi(search_bound)
    if top < 0:
        raise BracketError(f"exit lies beyond search_bound={search_bound} (Phi = {top})")
    if top == 0:
        return float(search_bound)
    return float(optimize.brentq(phi, 0.0, search_bound, xtol=tol * 1e-2, rtol=4 * np.finfo(float).eps))


# --------------------------------------------------------------------------
# predictor


class PredictionStatus(str, enum.Enum):
    EXIT = "exit"
    NO_EXIT = "no_exit"
    NON_MONOTONE = "non_monotone"


@dataclass
class Prediction:
    status: PredictionStatus
    branch: BranchId
    entry_time: float
    exit_time: float | None = None
    exit_tau: float | None = None
    exit_I: float | None = None
    A_min: float | None = None
    notes: list = field(default_factory=lambda: [SEPARATION_CAVEAT])

    def to_dict(self) -> dict:
        return {"status": self.status.value, "branch": self.branch.value, "entry_time": self.entry_time,
                "exit_time": self.exit_time, "exit_tau": self.exit_tau, "exit_I": self.exit_I,
                "A_min": self.A_min, "notes": list(self.notes)}


def _segment_integrals(traj: Trajectory, params: Params, branch, col_I: int) -> np.ndarray:
    """Gauss-Legendre integral of lambda3 over every dense-output segment."""
    a, b = traj.t[:-1], traj.t[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    I = traj.sol(nodes.ravel())[:, col_I].reshape(nodes.shape)
    return half * (lambda3_values(params, branch, I) @ _GL_W)


def _partial_integral(traj: Trajectory, params: Params, branch, col_I: int, a: float, x: float) -> float:
    half = 0.5 * (x - a)
    nodes = 0.5 * (a + x) + half * _GL_X
    return float(half * (lambda3_values(params, branch, traj.sol(nodes)[:, col_I]) @ _GL_W))


def accumulated_exponent(traj: Trajectory, params: Params, branch, scale: float = 1.0):
    """Cumulative ``scale * integral of lambda3`` at the sample times of ``traj``."""
    col_I = 4 if traj.kind == "full" else 1
    seg = _segment_integrals(traj, params, BranchId.parse(branch), col_I) * scale
    return np.concatenate(([0.0], np.cumsum(seg)))


def predict_exit(params: Params, branch, entry, entry_time: float = 0.0,
                 config: IntegratorConfig | None = None, horizon: float = DEFAULT_HORIZON) -> Prediction:
    """Predict where an orbit entering ``branch`` at ``entry`` leaves it.

    ``entry`` is the slow state at entry (a SlowState, a FullState or an
    (S, I, R) sequence). ``horizon`` is in slow time. Returned times are
    fast times, ``entry_time + tau / epsilon``.
    """
    branch = BranchId.parse(branch)
    config = config or IntegratorConfig()
    if isinstance(entry, FullState):
        entry = entry.slow
    slow0 = SlowState(*map(float, entry))
    lam0 = float(lambda3_values(params, branch, slow0.I))
    if not lam0 < 0:
        raise PreconditionError(f"entry must be on the attracting part of {branch.value} (lambda3 = {lam0})")
    if not params.epsilon > 0:
        raise PreconditionError("predict_exit needs epsilon > 0 to convert slow time to fast time")
    ee = endemic_equilibrium(params, branch)
    if ee is not None and abs(float(lambda3_values(params, branch, ee.state.I))) < NON_MONOTONE_TOL:
        log.info("predictor declined on %s: endemic equilibrium sits at lambda3 = 0", branch.value)
        return Prediction(PredictionStatus.NON_MONOTONE, branch, entry_time)

    traj = integrate_reduced(params, branch, slow0, horizon, config)
    A = accumulated_exponent(traj, params, branch)
    went_negative = np.cumsum(A < 0) > 0
    up = np.nonzero(went_negative[:-1] & (A[:-1] < 0) & (A[1:] >= 0))[0]
    A_min = float(A.min())
    log.info(SEPARATION_CAVEAT)
    if up.size:
        i = int(up[0])
        a, b = traj.t[i], traj.t[i + 1]
        root = optimize.brentq(lambda x: A[i] + _partial_integral(traj, params, branch, 1, a, x), a, b,
                               xtol=1e-14, rtol=4 * np.finfo(float).eps)
        residual = A[i] + _partial_integral(traj, params, branch, 1, a, root)
        if abs(residual) > A_ZERO_TOL:
            log.warning("accumulated exponent at predicted exit is %.3g", residual)
        I_exit = float(traj.sol(root)[1])
        return Prediction(PredictionStatus.EXIT, branch, entry_time, entry_time + root / params.epsilon,
                          float(root), I_exit, A_min)
    final = traj.y[-1]
    speed = max(abs(v) for v in reduced_slow_rhs(params, branch, final))
    if speed < SETTLED_TOL and float(lambda3_values(params, branch, final[1])) < 0:
        return Prediction(PredictionStatus.NO_EXIT, branch, entry_time, A_min=A_min)
    raise HorizonExceeded(f"accumulated exponent still negative at tau={horizon} and the orbit has not settled")


# --------------------------------------------------------------------------
# measurement


@dataclass
class EntryExitRecord:
    branch: BranchId
    delta: float
    entry_time: float
    entry_state: FullState
    exit_time: float | None = None
    exit_state: FullState | None = None
    lambda3_entry: float | None = None
    lambda3_exit: float | None = None
    accumulated_exponent_at_exit: float | None = None
    min_spectral_gap: float | None = None
    prediction: Prediction | None = None

    @property
    def entry_I(self) -> float:
        return self.entry_state.slow.I

    @property
    def exit_I(self) -> float | None:
        return None if self.exit_state is None else self.exit_state.slow.I

    @property
    def completed(self) -> bool:
        return self.exit_time is not None

    @property
    def predicted_exit_time(self) -> float | None:
        if self.prediction is None:
            return None
        return self.prediction.exit_time

    @property
    def duration(self) -> float | None:
        return None if self.exit_time is None else self.exit_time - self.entry_time

    def prediction_error(self) -> float | None:
        """Relative error of the predicted exit, measured on the episode duration."""
        if self.exit_time is None or self.predicted_exit_time is None:
            return None
        return abs(self.predicted_exit_time - self.exit_time) / (self.exit_time - self.entry_time)

    def to_dict(self) -> dict:
        return {
            "branch": self.branch.value,
            "delta": self.delta,
            "entry_time": self.entry_time,
            "exit_time": self.exit_time,
            "entry_state": list(self.entry_state),
            "exit_state": None if self.exit_state is None else list(self.exit_state),
            "entry_I": self.entry_I,
            "exit_I": self.exit_I,
            "lambda3_entry": self.lambda3_entry,
            "lambda3_exit": self.lambda3_exit,
            "accumulated_exponent_at_exit": self.accumulated_exponent_at_exit,
            "min_spectral_gap": self.min_spectral_gap,
            "predicted_exit_time": self.predicted_exit_time,
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "prediction_relative_error": self.prediction_error(),
        }


def _fast_spectrum(params: Params, branch: BranchId, I: np.ndarray) -> np.ndarray:
    """Fast eigenvalues at the branch point, shape (m, 3), lambda3 in the last column."""
    mu1, b1 = params.mu1, params.b1
    c = params.b2 / (1.0 - params.K * I)
    lam3 = lambda3_values(params, branch, I)
    if branch is BranchId.C00:
        other = np.minimum(b1 - mu1, c - mu1)
    elif branch is BranchId.C01:
        other = np.full_like(I, mu1 - b1)
    else:
        other = mu1 - c
    return np.stack([np.full_like(I, -mu1), other, lam3], axis=1)


def _min_gap(params, branch, I):
    spec = _fast_spectrum(params, branch, I)
    gaps = np.minimum(np.abs(spec[:, 2] - spec[:, 0]), np.abs(spec[:, 2] - spec[:, 1]))
    return float(gaps.min()) if gaps.size else None


def measure_entry_exit(trajectory: Trajectory, params: Params, branch, delta: float = DEFAULT_DELTA,
                       config: IntegratorConfig | None = None) -> list[EntryExitRecord]:
    """Pair BranchEnter/BranchExit events for ``branch`` into episode records.

    Uses the trajectory's own events when it was run with a matching
    watch; otherwise the events are located now on its dense output.
    """
    branch = BranchId.parse(branch)
    if trajectory.kind != "full":
        raise PreconditionError("episodes are measured on full trajectories")
    events = [e for e in trajectory.events
              if e.branch is branch and e.kind in (EventKind.BRANCH_ENTER, EventKind.BRANCH_EXIT)
              and e.payload.get("delta") == delta]
    if not events:
        spec = EventSpec(WatchKind.BRANCH, branch, delta)
        events = locate_events(trajectory, [spec], config or IntegratorConfig())
    records = []
    current = None
    for ev in events:
        if ev.kind is EventKind.BRANCH_ENTER:
            current = EntryExitRecord(branch, delta, ev.time, ev.state,
                                      lambda3_entry=float(lambda3_values(params, branch, ev.state.slow.I)))
        elif current is not None:
            current.exit_time = ev.time
            current.exit_state = ev.state
            current.lambda3_exit = float(lambda3_values(params, branch, ev.state.slow.I))
            records.append(current)
            current = None
    if current is not None:
        records.append(current)
    for rec in records:
        end = rec.exit_time if rec.exit_time is not None else trajectory.t[-1]
        mask = (trajectory.t >= rec.entry_time) & (trajectory.t <= end)
        ts = np.concatenate(([rec.entry_time], trajectory.t[mask], [end]))
        I = trajectory.sol(ts)[:, 4]
        rec.min_spectral_gap = _min_gap(params, branch, I)
        if rec.exit_time is not None:
            rec.accumulated_exponent_at_exit = _episode_exponent(trajectory, params, branch, rec.entry_time,
                                                                 rec.exit_time)
    return records


def _episode_exponent(traj: Trajectory, params: Params, branch, t0: float, t1: float) -> float:
    """Slow-time integral of lambda3 along the measured orbit between t0 and t1."""
    inner = traj.t[(traj.t > t0) & (traj.t < t1)]
    knots = np.concatenate(([t0], inner, [t1]))
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += _partial_integral(traj, params, branch, 4, a, b)
    return params.epsilon * total


def attach_predictions(records, params: Params, config: IntegratorConfig | None = None,
                       horizon: float = DEFAULT_HORIZON) -> None:
    """Run the predictor for every record whose entry is on the attracting part."""
    for rec in records:
        if rec.lambda3_entry is None or not rec.lambda3_entry < 0:
            continue
        try:
            rec.prediction = predict_exit(params, rec.branch, rec.entry_state.slow, rec.entry_time, config, horizon)
        except HorizonExceeded as exc:
            log.warning("no prediction for %s episode at t=%g: %s", rec.branch.value, rec.entry_time, exc)


def measure_all(params: Params, state0, t_end: float, delta: float = DEFAULT_DELTA,
                config: IntegratorConfig | None = None, branches=("C01", "C02"), predict: bool = True):
    """Integrate, measure episodes on ``branches`` and attach predictions.

    Returns ``(trajectory, records)`` with the records of all branches in
    entry-time order.
    """
    config = config or IntegratorConfig()
    watch = [EventSpec(WatchKind.BRANCH, b, delta) for b in branches]
    traj = integrate_full(params, state0, t_end, config, watch)
    records = []
    for b in branches:
        records.extend(measure_entry_exit(traj, params, b, delta, config))
    records.sort(key=lambda r: r.entry_time)
    if predict:
        attach_predictions(records, params, config)
    return traj, records


def completed_sequence(records) -> list[str]:
    """Branch labels of completed episodes in time order."""
    return [r.branch.value for r in records if r.completed]


def alternations(records) -> int:
    """Number of completed episodes in the longest alternating C01/C02 run."""
    seq = completed_sequence(records)
    best = run = 0
    prev = None
    for label in seq:
        run = run + 1 if prev is not None and label != prev else 1
        best = max(best, run)
        prev = label
    return best


def tube_violations(trajectory: Trajectory, params: Params, record: EntryExitRecord) -> int:
    """Samples strictly inside an episode that lie outside the delta tube."""
    end = record.exit_time if record.exit_time is not None else trajectory.t[-1]
    mask = (trajectory.t > record.entry_time) & (trajectory.t < end)
    y = trajectory.y[mask]
    d = branch_distances(params, record.branch, y[:, :3], y[:, 4])
    return int(np.sum(d >= record.delta))

