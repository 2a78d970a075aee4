"""Exception hierarchy shared by the analysis, integration and CLI layers."""


class InfoEpiError(Exception):
    """Base class for all package errors."""


class ParameterError(InfoEpiError, ValueError):
    """A parameter or state violates a model invariant."""


class PreconditionError(InfoEpiError, ValueError):
    """An operation was called outside its documented domain."""


class BracketError(InfoEpiError):
    """A root-finding bracket contains no sign change."""


class DegeneracyError(InfoEpiError):
    """A nondegeneracy condition (e.g. Sotomayor) is numerically zero."""


class HypothesisError(InfoEpiError):
    """No global-stability result applies to the given parameters."""


class HorizonExceeded(InfoEpiError):
    """A predictor reached its horizon without a decision."""


class IntegrationError(InfoEpiError):
    """The integrator stopped before reaching the requested end time.

    ``t`` and ``state`` hold the last accepted point so callers can
    inspect where the run failed.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class StepBudgetExceeded(IntegrationError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class ConfigError(InfoEpiError):
    """Scenario configuration failed validation.

    ``line`` is the 1-based line in the source file the problem was
    anchored to, when known.
    """

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None:
            prefix = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
