"""Exception types shared across the package."""


class JunctionFlowError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(JunctionFlowError, ValueError):
    """A model parameter violates its precondition."""


class DomainError(JunctionFlowError, ValueError):
    """An argument lies outside the domain of a function."""


class ConsistencyError(JunctionFlowError, RuntimeError):
    """A runtime invariant was violated (usually: time step too large)."""


class ScenarioError(JunctionFlowError, ValueError):
    """A scenario configuration failed validation.

    ``field`` is a dotted path to the offending entry, e.g. ``"light.theta"``.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
