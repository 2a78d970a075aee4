"""Slow flow on the critical-manifold branches and full-system equilibria.

The critical manifold of the layer problem has three branches, one per
fast equilibrium:

* ``C00``: the MSFE (1, 0, 0);
* ``C01``: the SFE, where the information layer raises the infection rate;
* ``C02``: the MFE, where the rate depends on I through b2/(1-KI).

On each branch the slow dynamics is an SIRS model with the infection
rate frozen at the branch value ``beta_bar``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _numdiff
from .fast import FastEquilibrium, Stability, classify_eigenvalues, mfe, msfe, sfe
from .model import FullState, FastState, Params, SlowState, full_rhs, sirs_rhs

EE_RESIDUAL_TOL = 1e-10


class BranchId(str, enum.Enum):
    C00 = "C00"
    C01 = "C01"
    C02 = "C02"

    @classmethod
    def parse(cls, value) -> "BranchId":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown branch {value!r}; expected one of C00, C01, C02") from None


class SlowKind(str, enum.Enum):
    DFE = "DFE"
    EE = "EE"


@dataclass(frozen=True)
class SlowEquilibrium:
    branch: BranchId
    kind: SlowKind
    state: SlowState
    r0: float

    def to_dict(self) -> dict:
        return {"branch": self.branch.value, "kind": self.kind.value,
                "state": dict(zip("SIR", self.state)), "r0": self.r0}


def branch_beta(params: Params, branch, I: float = 0.0) -> float:
    """Infection rate on a branch; only C02 depends on I."""
    branch = BranchId.parse(branch)
    beta, b1, b2, mu1 = params.beta, params.b1, params.b2, params.mu1
    if branch is BranchId.C00:
        return beta
    if branch is BranchId.C01:
        if b1 == 0:
            raise ZeroDivisionError("C01 rate needs b1 > 0")
        return beta * (2.0 * b1 - mu1) / b1
    denom = 2.0 * b2 - mu1 * (1.0 - params.K * I)
    if denom == 0:
        raise ZeroDivisionError("C02 rate has a zero denominator")
    return beta * b2 / denom


def r0_slow(params: Params, branch) -> float:
    """Branch reproduction number; for C02 the rate is taken at I = 0."""
    branch = BranchId.parse(branch)
    removal = params.gamma + params.mu2
    if removal == 0:
        raise ZeroDivisionError("r0_slow needs gamma + mu2 > 0")
    if branch is BranchId.C02 and not 2.0 * params.b2 - params.mu1 > 0:
        raise ZeroDivisionError("r0_slow on C02 needs 2*b2 - mu1 > 0")
    return branch_beta(params, branch, 0.0) / removal


def reduced_slow_rhs(params: Params, branch, state) -> tuple[float, float, float]:
    """Slow-time SIRS right-hand side with the branch infection rate."""
    S, I, R = state
    return sirs_rhs(params, (S, I, R), branch_beta(params, branch, I))


def _sirs_ee(params: Params, rate: float) -> SlowState:
    g, e, m = params.gamma, params.eta, params.mu2
    S = (g + m) / rate
    I = (rate - g - m) * (e + m) / (rate * (g + e + m))
    return SlowState(S, I, g * I / (e + m))


def c02_infection_printed(params: Params) -> float:
    """C02 endemic infection level as the printed rational expression reads."""
    b2, mu1, K, beta = params.b2, params.mu1, params.K, params.beta
    g, e, m = params.gamma, params.eta, params.mu2
    num = (g + m) * (beta * b2 - (g + m) * (2 * b2 - mu1))
    den = beta * b2 * (e + m + g) + mu1 * K * (e + m) * (g + m)
    return num / den


def _c02_condition(params: Params, I: float) -> float:
    """Zero at the C02 endemic level once R and S are eliminated (linear in I)."""
    b2, mu1, K, beta = params.b2, params.mu1, params.K, params.beta
    g, e, m = params.gamma, params.eta, params.mu2
    S = 1.0 - I * (e + m + g) / (e + m)
    return beta * b2 * S - (g + m) * (2 * b2 - mu1 * (1 - K * I))


def c02_infection(params: Params) -> float:
    """C02 endemic infection level: printed expression polished by one Newton step."""
    seed = c02_infection_printed(params)
    g, e, m = params.gamma, params.eta, params.mu2
    # the condition is linear in I, so one step with the exact slope lands on the root
    slope = -params.beta * params.b2 * (e + m + g) / (e + m) - (g + m) * params.mu1 * params.K
    return seed - _c02_condition(params, seed) / slope


def endemic_equilibrium(params: Params, branch) -> SlowEquilibrium | None:
    """Endemic equilibrium on a branch, or None when r0 <= 1."""
    branch = BranchId.parse(branch)
    r0 = r0_slow(params, branch)
    if not r0 > 1.0:
        return None
    if branch is BranchId.C02:
        I = c02_infection(params)
        g, e, m = params.gamma, params.eta, params.mu2
        R = g * I / (e + m)
        S = (g + m) / branch_beta(params, branch, I)
        state = SlowState(S, I, R)
    else:
        state = _sirs_ee(params, branch_beta(params, branch))
    return SlowEquilibrium(branch, SlowKind.EE, state, r0)


def disease_free(params: Params, branch) -> SlowEquilibrium:
    branch = BranchId.parse(branch)
    return SlowEquilibrium(branch, SlowKind.DFE, SlowState(1.0, 0.0, 0.0), r0_slow(params, branch))


def branch_point(params: Params, branch, I: float) -> FastEquilibrium:
    """Fast equilibrium that defines the branch at infection level I."""
    branch = BranchId.parse(branch)
    return {BranchId.C00: msfe, BranchId.C01: sfe, BranchId.C02: mfe}[branch](params, I)


class Lambda3(float):
    """Normal eigenvalue; on C00 ``argmax`` names the attaining rate."""

    argmax: str | None = None


def branch_lambda3(params: Params, branch, I: float) -> Lambda3:
    """The normal eigenvalue of the layer problem on a branch at level I."""
    branch = BranchId.parse(branch)
    mu1, b1 = params.mu1, params.b1
    c = params.b2 / (1.0 - params.K * I)
    if branch is BranchId.C00:
        a, b = b1 - mu1, c - mu1
        out = Lambda3(b if b > a else a)
        out.argmax = "b2" if b > a else "b1"
        return out
    if branch is BranchId.C01:
        return Lambda3(mu1 * (c / b1 - 1.0))
    return Lambda3(mu1 * (b1 / c - 1.0))


# --------------------------------------------------------------------------
# full-system equilibria


class FullLabel(str, enum.Enum):
    E0 = "E0"
    E1 = "E1"
    E2 = "E2"
    E3 = "E3"
    E4 = "E4"
    E5 = "E5"
    ESTAR = "Estar"


@dataclass
class FullEquilibrium:
    label: FullLabel
    state: FullState
    eigenvalues: tuple
    feasible: bool
    stability: Stability
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "state": dict(zip(("U", "M", "Z", "S", "I", "R"), self.state)),
            "feasible": self.feasible,
            "stability": self.stability.value,
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "notes": self.notes,
        }


def full_jacobian(params: Params, y, h: float = 1e-6) -> np.ndarray:
    return _numdiff.jacobian(lambda x: full_rhs(params, x), np.asarray(y, dtype=float), h)


def _sorted_eigenvalues(J: np.ndarray) -> tuple:
    ev = np.linalg.eigvals(J)
    order = np.lexsort((ev.imag, ev.real))
    return tuple(complex(v) for v in ev[order])


def numeric_eigenvalues(params: Params, y) -> tuple:
    return _sorted_eigenvalues(full_jacobian(params, y))


def _nonneg(values, tol=1e-12) -> bool:
    return all(math.isfinite(v) and v >= -tol for v in values)


def coexistence_state(params: Params):
    """Coexistence point from the threshold level I* and the two constraints.

    Returns ``(state, printed)`` where ``printed`` holds M* and Z* as the
    printed closed forms give them, for comparison.
    """
    b1, b2, K, beta = params.b1, params.b2, params.K, params.beta
    g, e, m, mu1 = params.gamma, params.eta, params.mu2, params.mu1
    if K * b1 == 0 or e + m == 0:
        return None, {}
    I = (b1 - b2) / (K * b1)
    S = ((e + m) - (e + m + g) * I) / (e + m)
    R = g * I / (e + m)
    U = mu1 / b1
    L = 1.0 - U
    printed = {}
    if S > 0 and beta * S > 0:
        r = (g + m) / (beta * S)
        Z = (1.0 + L - r) / (1.0 + r)
        denom = b1 * (g + m - beta * S)
        if denom != 0:
            z_p = (b1 * (g + m) + beta * S) / denom
            printed = {"Z": z_p, "M": ((g + m) * (1 + z_p) - beta * S) / (beta * S)}
    else:
        Z = float("nan")
    return FullState(FastState(U, L - Z, Z), SlowState(S, I, R)), printed


def full_equilibria(params: Params) -> list[FullEquilibrium]:
    """The seven candidate equilibria of the coupled system, infeasible ones flagged."""
    p = params
    b1, b2, mu1, K = p.b1, p.b2, p.mu1, p.K
    dfe = SlowState(1.0, 0.0, 0.0)
    out = []

    def add(label, fast, slow, exists=True, notes=None):
        state = FullState(FastState(*fast), SlowState(*slow))
        values = list(state)
        feasible = exists and _nonneg(values) and all(v <= 1 + 1e-12 for v in values)
        ev, stab = (), Stability.UNSTABLE
        if all(math.isfinite(v) for v in values):
            # infeasible candidates can sit on a pole of the rate (Z = -1)
            with np.errstate(all="ignore"):
                J = full_jacobian(p, values)
            if np.all(np.isfinite(J)):
                ev = _sorted_eigenvalues(J)
                stab = classify_eigenvalues(ev)
        out.append(FullEquilibrium(label, state, ev, feasible, stab, notes or {}))

    add(FullLabel.E0, (1, 0, 0), dfe)
    ee0 = _sirs_ee(p, p.beta) if p.beta > 0 else SlowState(float("nan"), float("nan"), float("nan"))
    add(FullLabel.E1, (1, 0, 0), ee0, r0_slow(p, "C00") > 1)
    sfe_state = (mu1 / b1, (b1 - mu1) / b1, 0.0) if b1 > 0 else (float("nan"),) * 3
    add(FullLabel.E2, sfe_state, dfe, b1 > mu1)
    ee1 = _sirs_ee(p, branch_beta(p, "C01")) if b1 > 0 and 2 * b1 > mu1 else SlowState(*(float("nan"),) * 3)
    add(FullLabel.E3, sfe_state, ee1, b1 > mu1 and r0_slow(p, "C01") > 1)
    mfe0 = (mu1 / b2, 0.0, (b2 - mu1) / b2) if b2 > 0 else (float("nan"),) * 3
    add(FullLabel.E4, mfe0, dfe, b2 > mu1)
    if b2 > 0 and 2 * b2 > mu1:
        ee2 = endemic_equilibrium(p, "C02")
        I5 = c02_infection(p)
        g, e, m = p.gamma, p.eta, p.mu2
        slow5 = ee2.state if ee2 else SlowState(
            (g + m) / branch_beta(p, "C02", I5), I5, g * I5 / (e + m))
        damp = 1.0 - K * slow5.I
        fast5 = (mu1 * damp / b2, 0.0, (b2 - mu1 * damp) / b2)
        add(FullLabel.E5, fast5, slow5, ee2 is not None,
            {"I_printed": c02_infection_printed(p), "I_polished": I5})
    else:
        add(FullLabel.E5, (float("nan"),) * 3, (float("nan"),) * 3, False)
    star, printed = coexistence_state(p)
    if star is None:
        add(FullLabel.ESTAR, (float("nan"),) * 3, (float("nan"),) * 3, False,
            {"reason": "needs K*b1 > 0 and eta + mu2 > 0"})
    else:
        notes = {}
        if printed:
            mismatch = max(abs(printed["M"] - star.fast.M), abs(printed["Z"] - star.fast.Z))
            notes = {"M_printed": printed["M"], "Z_printed": printed["Z"],
                     "printed_mismatch": mismatch > 1e-9}
        add(FullLabel.ESTAR, tuple(star.fast), tuple(star.slow), b1 > b2, notes)
    return out


def nearest_equilibrium(params: Params, y, feasible_only: bool = True):
    """(equilibrium, infinity-norm distance) closest to the point y."""
    y = np.asarray(list(y), dtype=float)
    best, best_d = None, math.inf
    for eq in full_equilibria(params):
        if feasible_only and not eq.feasible:
            continue
        d = float(np.max(np.abs(eq.state.as_array() - y)))
        if d < best_d:
            best, best_d = eq, d
    return best, best_d
