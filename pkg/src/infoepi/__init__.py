"""Slow-fast misinformation/SIRS model: simulation and analysis.

The fast layer (U, M, Z) models unaware, misinformed and skeptical
people; the slow layer (S, I, R) is an SIRS epidemic. The two are
coupled through the infection rate and the skepticism-adoption rate.
"""

from .errors import (
    BracketError,
    ConfigError,
    DegeneracyError,
    HorizonExceeded,
    HypothesisError,
    InfoEpiError,
    IntegrationError,
    ParameterError,
    PreconditionError,
    StepBudgetExceeded,
    StepSizeUnderflow,
)
from .model import (
    FastState,
    FullState,
    Params,
    SlowState,
    effective_beta,
    fast_rhs,
    feedback_b2,
    full_rhs,
    slow_rhs,
)

__version__ = "0.1.0"

__all__ = [
    "BracketError", "ConfigError", "DegeneracyError", "HorizonExceeded", "HypothesisError", "InfoEpiError",
    "IntegrationError", "ParameterError", "PreconditionError", "StepBudgetExceeded", "StepSizeUnderflow",
    "FastState", "FullState", "Params", "SlowState", "effective_beta", "fast_rhs", "feedback_b2", "full_rhs",
    "slow_rhs", "__version__",
]
