"""Equilibria, stability and bifurcations of the fast (U, M, Z) layer.

Everything here treats the infection level ``I`` as a frozen parameter
and takes it explicitly; there is no default.

Eigenvalues come from closed forms. ``fast_jacobian`` provides the
finite-difference Jacobian that the test suite uses to check them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _numdiff
from .errors import BracketError, DegeneracyError, HypothesisError, PreconditionError
from .model import FastState, Params, fast_rhs, feedback_b2

MARGINAL_TOL = 1e-8
THRESHOLD_TOL = 1e-9
LYAPUNOV_TOL = 1e-8


class Stability(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


class FastKind(str, enum.Enum):
    MSFE = "MSFE"
    SFE = "SFE"
    MFE = "MFE"
    THRESHOLD_LINE = "ThresholdLine"


def classify_eigenvalues(eigenvalues, tol: float = MARGINAL_TOL) -> Stability:
    re = np.real(np.asarray(eigenvalues, dtype=complex))
    if np.any(re > tol):
        return Stability.UNSTABLE
    if np.any(np.abs(re) <= tol):
        return Stability.MARGINAL
    return Stability.STABLE


@dataclass(frozen=True)
class FastEquilibrium:
    """An equilibrium of the fast layer at a fixed infection level.

    For the threshold line, ``state`` is the midpoint of the segment and
    ``segment`` holds its two endpoints (Z = 0 and M = 0).
    """

    kind: FastKind
    state: FastState
    eigenvalues: tuple
    feasible: bool
    stability: Stability
    I: float
    segment: tuple | None = field(default=None)

    @property
    def locally_stable(self) -> bool:
        return self.stability is Stability.STABLE

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "I": self.I,
            "state": dict(zip("UMZ", self.state)),
            "feasible": self.feasible,
            "stability": self.stability.value,
            "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in self.eigenvalues],
        }
        if self.segment is not None:
            out["segment"] = [dict(zip("UMZ", s)) for s in self.segment]
        return out


class ReproductionNumber(NamedTuple):
    value: float
    argmax: str  # "b1" or "b2"; "b1" on ties


def r0_fast(params: Params, I: float) -> ReproductionNumber:
    """Spectral radius of the fast next-generation matrix."""
    if params.mu1 == 0:
        raise ZeroDivisionError("r0_fast needs mu1 > 0")
    r_m = params.b1 / params.mu1
    r_z = feedback_b2(params, I) / params.mu1
    if r_z > r_m:
        return ReproductionNumber(r_z, "b2")
    return ReproductionNumber(r_m, "b1")


def _in_simplex(values, tol=1e-12) -> bool:
    return all(v >= -tol for v in values)


def msfe(params: Params, I: float) -> FastEquilibrium:
    mu1 = params.mu1
    c = feedback_b2(params, I)
    eig = (complex(-mu1), complex(params.b1 - mu1), complex(c - mu1))
    return FastEquilibrium(FastKind.MSFE, FastState(1.0, 0.0, 0.0), eig, True, classify_eigenvalues(eig), I)


def sfe(params: Params, I: float) -> FastEquilibrium:
    b1, mu1 = params.b1, params.mu1
    if b1 == 0:
        raise ZeroDivisionError("sfe needs b1 > 0")
    c = feedback_b2(params, I)
    state = FastState(mu1 / b1, (b1 - mu1) / b1, 0.0)
    eig = (complex(-mu1), complex(mu1 - b1), complex(mu1 * (c / b1 - 1.0)))
    return FastEquilibrium(FastKind.SFE, state, eig, b1 > mu1, classify_eigenvalues(eig), I)


def mfe(params: Params, I: float) -> FastEquilibrium:
    b2, mu1 = params.b2, params.mu1
    if b2 == 0:
        raise ZeroDivisionError("mfe needs b2 > 0")
    damp = 1.0 - params.K * I
    c = b2 / damp
    state = FastState(mu1 * damp / b2, 0.0, (b2 - mu1 * damp) / b2)
    eig = (complex(-mu1), complex(mu1 - c), complex(mu1 * (params.b1 * damp / b2 - 1.0)))
    return FastEquilibrium(FastKind.MFE, state, eig, b2 > mu1 * damp, classify_eigenvalues(eig), I)


def is_threshold(params: Params, I: float, tol: float = THRESHOLD_TOL) -> bool:
    """True when ``b1 == b2/(1-KI)`` to relative tolerance ``tol``."""
    c = feedback_b2(params, I)
    scale = max(abs(params.b1), abs(c), 1e-300)
    return abs(params.b1 - c) <= tol * scale


def threshold_line(params: Params, I: float, tol: float = THRESHOLD_TOL) -> FastEquilibrium | None:
    """The line of fast equilibria when ``b1 == b2/(1-KI)`` and R0 > 1.

    The eigenvalues reported are those of the Jacobian on the line,
    ``(0, -mu1, mu1 - b)``; they do not depend on the position along it.
    """
    if not is_threshold(params, I, tol):
        return None
    r0 = r0_fast(params, I).value
    if not r0 > 1.0:
        return None
    b, mu1 = params.b1, params.mu1
    u = 1.0 / r0
    rest = 1.0 - u
    eig = (0j, complex(-mu1), complex(mu1 - b))
    ends = (FastState(u, rest, 0.0), FastState(u, 0.0, rest))
    mid = FastState(u, rest / 2.0, rest / 2.0)
    return FastEquilibrium(FastKind.THRESHOLD_LINE, mid, eig, True, Stability.MARGINAL, I, ends)


def classify_fast(params: Params, I: float) -> list[FastEquilibrium]:
    """All fast equilibria at infection level I, feasible or not."""
    if not 0.0 <= I <= 1.0:
        raise PreconditionError(f"I must lie in [0, 1], got {I}")
    out = [msfe(params, I), sfe(params, I), mfe(params, I)]
    line = threshold_line(params, I)
    if line is not None:
        out.append(line)
    return out


def fast_jacobian(params: Params, state: Sequence[float], I: float, h: float = 1e-6) -> np.ndarray:
    """Finite-difference Jacobian of the fast layer (the eigenvalue oracle)."""
    return _numdiff.jacobian(lambda x: fast_rhs(params, x, I), np.asarray(list(state), dtype=float), h)


# --------------------------------------------------------------------------
# global stability / Lyapunov descent


class Regime(str, enum.Enum):
    MSFE = "msfe_exponential"
    SFE_ONLY = "sfe_only"
    MFE_ONLY = "mfe_only"
    SFE_DOMINANT = "sfe_dominant"
    MFE_DOMINANT = "mfe_dominant"
    THRESHOLD = "threshold"


_REGIME_TARGET = {
    Regime.MSFE: FastKind.MSFE,
    Regime.SFE_ONLY: FastKind.SFE,
    Regime.SFE_DOMINANT: FastKind.SFE,
    Regime.MFE_ONLY: FastKind.MFE,
    Regime.MFE_DOMINANT: FastKind.MFE,
    Regime.THRESHOLD: FastKind.THRESHOLD_LINE,
}


def gas_regime(params: Params, I: float, tol: float = THRESHOLD_TOL) -> Regime:
    """Which global-stability result applies at (params, I).

    Raises HypothesisError on the boundaries where none does
    (``b1 == mu1``, ``b2/(1-KI) == mu1``).
    """
    c = feedback_b2(params, I)
    mu1 = params.mu1
    if is_threshold(params, I, tol) and r0_fast(params, I).value > 1.0:
        return Regime.THRESHOLD
    r1, r2 = params.b1 / mu1, c / mu1
    if r1 < 1 and r2 < 1:
        return Regime.MSFE
    if r1 > 1 and r2 < 1:
        return Regime.SFE_ONLY
    if r1 < 1 and r2 > 1:
        return Regime.MFE_ONLY
    if r1 > 1 and r2 > 1:
        return Regime.SFE_DOMINANT if params.b1 > c else Regime.MFE_DOMINANT
    raise HypothesisError(f"no global-stability result covers b1/mu1={r1}, b2/(mu1(1-KI))={r2}")


def gas_equilibrium(params: Params, I: float) -> FastEquilibrium:
    """The globally attracting fast equilibrium for (params, I)."""
    kind = _REGIME_TARGET[gas_regime(params, I)]
    if kind is FastKind.THRESHOLD_LINE:
        return threshold_line(params, I)
    return {FastKind.MSFE: msfe, FastKind.SFE: sfe, FastKind.MFE: mfe}[kind](params, I)


def lyapunov_function(regime: Regime, target: FastEquilibrium):
    """Vectorised Lyapunov function V(U, M, Z) for a regime."""
    u_star, m_star, z_star = target.state
    if regime is Regime.MSFE:
        return lambda U, M, Z: M + Z
    if regime in (Regime.SFE_ONLY, Regime.SFE_DOMINANT):
        # the +Z term covers Z != 0; it vanishes on the invariant plane Z = 0
        return lambda U, M, Z: U - u_star * np.log(U) + M - m_star * np.log(M) + Z
    if regime in (Regime.MFE_ONLY, Regime.MFE_DOMINANT):
        return lambda U, M, Z: U - u_star * np.log(U) + M + Z - z_star * np.log(Z)
    l_star = 1.0 - u_star
    return lambda U, M, Z: 0.5 * (U - u_star) ** 2 + (M + Z) - l_star * np.log(M + Z)


@dataclass
class DescentReport:
    regime: Regime
    values: np.ndarray
    max_increase: float
    tol: float
    passed: bool
    decay_rate: float | None = None
    decay_bound: float | None = None


def fit_decay_rate(times, values, transient: float = 1.0 / 3.0, floor: float = 1e-13) -> float:
    """Least-squares slope of log(values) against time after a transient."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = (t >= t[0] + transient * (t[-1] - t[0])) & (v > floor)
    if mask.sum() < 3:
        raise PreconditionError("not enough samples above the floor to fit a decay rate")
    slope, _ = np.polyfit(t[mask], np.log(v[mask]), 1)
    return float(slope)


def lyapunov_check(params: Params, I: float, target: FastEquilibrium, trajectory,
                   tol: float = LYAPUNOV_TOL) -> DescentReport:
    """Check that the regime's Lyapunov function never increases along a trajectory.

    ``trajectory`` is a fast Trajectory (anything with ``.y`` and ``.t``) or a
    plain sequence of (U, M, Z) points. Only the increase between
    consecutive samples is measured; for the misinformation-free regime the
    exponential decay rate of M + Z is also fitted when times are known.
    """
    regime = gas_regime(params, I)
    if target.kind is not _REGIME_TARGET[regime]:
        raise PreconditionError(f"target {target.kind.value} is not the attracting equilibrium of regime {regime.value}")
    times = getattr(trajectory, "t", None)
    y = np.asarray(trajectory.y if hasattr(trajectory, "y") else [list(s) for s in trajectory], dtype=float)
    V = lyapunov_function(regime, target)(y[:, 0], y[:, 1], y[:, 2])
    increase = float(np.max(np.diff(V), initial=0.0))
    report = DescentReport(regime, V, increase, tol, increase <= tol)
    if regime is Regime.MSFE and times is not None:
        report.decay_bound = -params.mu1 * (1.0 - r0_fast(params, I).value)
        try:
            report.decay_rate = fit_decay_rate(times, V)
        except PreconditionError:
            report.decay_rate = None
    return report


# --------------------------------------------------------------------------
# transcritical bifurcations at the MSFE


@dataclass
class TranscriticalReport:
    """Critical parameter value plus finite-difference Sotomayor checks.

    ``condition_iii`` is the full second directional derivative
    ``w . D2F(v, v)``. ``condition_iii_single`` counts the mixed partial
    once, i.e. half of it, which is the convention the closed-form value
    ``-mu1`` refers to.
    """

    parameter: str
    critical_value: float
    iterations: int
    v: np.ndarray
    w: np.ndarray
    condition_i: float
    condition_ii: float
    condition_iii: float

    @property
    def condition_iii_single(self) -> float:
        return 0.5 * self.condition_iii

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "critical_value": self.critical_value,
            "iterations": self.iterations,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
            "condition_i": self.condition_i,
            "condition_ii": self.condition_ii,
            "condition_iii": self.condition_iii,
            "condition_iii_single": self.condition_iii_single,
        }


def _msfe_critical_eigenvalue(params: Params, which: str, I: float) -> float:
    lam = msfe(params, I).eigenvalues
    return lam[1].real if which == "b1" else lam[2].real


def _null_vectors(J: np.ndarray, index: int):
    """Right/left null vectors of J, scaled so w[index] = 1 and v[index] = -1."""
    _, _, vh = np.linalg.svd(J)
    v = vh[-1]
    _, _, vh_t = np.linalg.svd(J.T)
    w = vh_t[-1]
    if abs(w[index]) < 1e-12 or abs(v[index]) < 1e-12:
        raise DegeneracyError("null vectors have no component along the bifurcating direction")
    return -v / v[index], w / w[index]


def find_transcritical(params: Params, which: str, bracket: tuple[float, float], I: float,
                       tol: float = 1e-12, fd_step: float = 1e-4,
                       degeneracy_tol: float = 1e-8) -> TranscriticalReport:
    """Locate a transcritical bifurcation of the MSFE in ``b1`` or ``b2``.

    Bisection on the critical MSFE eigenvalue, then Sotomayor's three
    conditions by finite differences at the critical point.
    """
    if which not in ("b1", "b2"):
        raise PreconditionError(f"which must be 'b1' or 'b2', got {which!r}")
    lo, hi = sorted(map(float, bracket))

    def lam(p):
        return _msfe_critical_eigenvalue(params.replace(**{which: p}), which, I)

    f_lo, f_hi = lam(lo), lam(hi)
    if f_lo == 0.0:
        hi = lo
    elif f_hi == 0.0:
        lo = hi
    elif f_lo * f_hi > 0:
        raise BracketError(f"critical eigenvalue does not change sign on [{lo}, {hi}] ({f_lo}, {f_hi})")
    iterations = 0
    while hi - lo > tol and iterations < 200:
        mid = 0.5 * (lo + hi)
        f_mid = lam(mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        iterations += 1
    p_star = 0.5 * (lo + hi)

    x0 = np.array([1.0, 0.0, 0.0])

    def F(x, p):
        return np.asarray(fast_rhs(params.replace(**{which: p}), x, I), dtype=float)

    J = _numdiff.jacobian(lambda x: F(x, p_star), x0)
    v, w = _null_vectors(J, 1 if which == "b1" else 2)
    h = k = fd_step
    F_p = (F(x0, p_star + k) - F(x0, p_star - k)) / (2 * k)
    DF_p_v = (F(x0 + h * v, p_star + k) - F(x0 - h * v, p_star + k)
              - F(x0 + h * v, p_star - k) + F(x0 - h * v, p_star - k)) / (4 * h * k)
    D2F_vv = (F(x0 + h * v, p_star) - 2 * F(x0, p_star) + F(x0 - h * v, p_star)) / h**2
    report = TranscriticalReport(which, p_star, iterations, v, w,
                                 float(w @ F_p), float(w @ DF_p_v), float(w @ D2F_vv))
    if abs(report.condition_ii) < degeneracy_tol or abs(report.condition_iii) < degeneracy_tol:
        raise DegeneracyError(f"Sotomayor condition degenerate: {report.to_dict()}")
    return report


def critical_value(params: Params, which: str, I: float) -> float:
    """Closed-form bifurcation point: ``mu1`` for b1, ``mu1 (1 - K I)`` for b2."""
    return params.mu1 if which == "b1" else params.mu1 * (1.0 - params.K * I)


def sample_fast_table(params: Params, which: str, values, I: float) -> list[dict]:
    """Feasibility/stability of each fast equilibrium along a parameter sweep."""
    rows = []
    for value in values:
        p = params.replace(**{which: float(value)})
        row = {which: float(value), "R0f": r0_fast(p, I).value}
        for eq in classify_fast(p, I):
            row[eq.kind.value] = {"feasible": eq.feasible, "stability": eq.stability.value}
        rows.append(row)
    return rows

