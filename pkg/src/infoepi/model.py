"""Parameters, states and right-hand sides of the coupled UMZ/SIRS model.

The fast layer (U, M, Z) describes unaware, misinformed and skeptical
fractions; the slow layer (S, I, R) is an SIRS model with demography.
Both populations are normalised to one, so the constant inflows are
``mu1`` and ``mu2`` rather than ``mu1 * N`` and ``mu2 * N``.

Right-hand sides accept any 3-sequence (or the state dataclasses, which
are iterable) and are deliberately tolerant of points off the simplex:
unit probes need them, and simplex checks happen at trajectory level.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import ParameterError

#: Default slack for the ``U+M+Z = 1`` and ``S+I+R = 1`` invariants.
SIMPLEX_TOL = 1e-9

PARAM_NAMES = ("b1", "b2", "K", "beta", "gamma", "eta", "mu1", "mu2", "epsilon")


@dataclass(frozen=True)
class Params:
    """The nine model constants.

    Rates ``b1``, ``b2`` and ``mu1`` are per fast time unit; ``beta``,
    ``gamma``, ``eta`` and ``mu2`` are per slow time unit. ``epsilon``
    is the ratio of the two time scales.
    """

    b1: float
    b2: float
    K: float
    beta: float
    gamma: float
    eta: float
    mu1: float
    mu2: float
    epsilon: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ParameterError(f"{f.name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{f.name} must be finite, got {value!r}")
            if value < 0:
                raise ParameterError(f"{f.name} must be >= 0, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if not self.K < 1.0:
            raise ParameterError(f"K must lie in [0, 1), got {self.K!r}")
        if self.epsilon > 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")

    def replace(self, **changes) -> "Params":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def as_vector(self, extra: float = 0.0) -> np.ndarray:
        """Pack into the 10-slot layout used by the integration kernels."""
        return np.array([*astuple(self), extra], dtype=float)


class _Triple:
    """Iteration and array conversion shared by the 3-component states."""

    def __iter__(self) -> Iterator[float]:
        return iter(astuple(self))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def total(self) -> float:
        return math.fsum(astuple(self))

    def simplex_defect(self) -> float:
        return abs(self.total() - 1.0)

    def check(self, tol: float = SIMPLEX_TOL) -> None:
        """Raise ParameterError unless the point lies on the closed simplex."""
        values = astuple(self)
        if any(v < 0 for v in values):
            raise ParameterError(f"{type(self).__name__} has a negative component: {values}")
        if self.simplex_defect() > tol:
            raise ParameterError(
                f"{type(self).__name__} components sum to {self.total()!r}, expected 1 within {tol}"
            )


@dataclass(frozen=True)
class FastState(_Triple):
    U: float
    M: float
    Z: float


@dataclass(frozen=True)
class SlowState(_Triple):
    S: float
    I: float
    R: float


@dataclass(frozen=True)
class FullState:
    fast: FastState
    slow: SlowState

    @classmethod
    def from_array(cls, y: Sequence[float]) -> "FullState":
        y = [float(v) for v in y]
        return cls(FastState(*y[:3]), SlowState(*y[3:6]))

    def as_array(self) -> np.ndarray:
        return np.array([*self.fast, *self.slow], dtype=float)

    def __iter__(self) -> Iterator[float]:
        yield from self.fast
        yield from self.slow

    def check(self, tol: float = SIMPLEX_TOL) -> None:
        self.fast.check(tol)
        self.slow.check(tol)


def feedback_b2(params: Params, I: float) -> float:
    """Skepticism-adoption rate ``b2 / (1 - K I)``."""
    denom = 1.0 - params.K * I
    if denom <= 0.0:
        raise ParameterError(f"K*I must be < 1 (K={params.K}, I={I})")
    return params.b2 / denom


def effective_beta(params: Params, M: float, Z: float) -> float:
    """Infection rate modulated by the information layer, ``beta (1+M)/(1+Z)``."""
    return params.beta * (1.0 + M) / (1.0 + Z)


def fast_rhs(params: Params, state: Sequence[float], I: float) -> tuple[float, float, float]:
    """Fast-time derivatives of (U, M, Z) with the infection level frozen at I."""
    U, M, Z = state
    b1, mu1 = params.b1, params.mu1
    c = feedback_b2(params, I)
    to_m = b1 * U * M
    to_z = c * U * Z
    return (mu1 - to_m - to_z - mu1 * U, to_m - mu1 * M, to_z - mu1 * Z)


def slow_rhs(params: Params, state: Sequence[float], M: float, Z: float) -> tuple[float, float, float]:
    """Slow-time derivatives of (S, I, R) given the information layer (M, Z)."""
    return sirs_rhs(params, state, effective_beta(params, M, Z))


def sirs_rhs(params: Params, state: Sequence[float], rate: float) -> tuple[float, float, float]:
    """SIRS-with-demography right-hand side for a given infection rate."""
    S, I, R = state
    mu2, gamma, eta = params.mu2, params.gamma, params.eta
    infections = rate * S * I
    recoveries = gamma * I
    waning = eta * R
    return (
        mu2 - infections + waning - mu2 * S,
        infections - recoveries - mu2 * I,
        recoveries - waning - mu2 * R,
    )


def full_rhs(params: Params, state: Sequence[float]) -> tuple[float, ...]:
    """Six derivatives of the coupled system in fast time."""
    U, M, Z, S, I, R = state
    dfast = fast_rhs(params, (U, M, Z), I)
    eps = params.epsilon
    dslow = slow_rhs(params, (S, I, R), M, Z)
    return (*dfast, eps * dslow[0], eps * dslow[1], eps * dslow[2])


def full_rhs_array(params: Params, y: np.ndarray) -> np.ndarray:
    return np.array(full_rhs(params, y), dtype=float)
