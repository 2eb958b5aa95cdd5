"""Exception hierarchy shared by all qoctl modules."""


class QoctlError(Exception):
    """Base class for every error raised by qoctl."""


class InputDomainError(QoctlError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class SingularRateError(QoctlError, ValueError):
    """A dissipative rate diverges (bosonic bath at zero gap)."""


class DegenerateSpectrumError(QoctlError, ValueError):
    """The instantaneous Hamiltonian gap fell below the configured floor."""


class IntegrationDiverged(QoctlError, RuntimeError):
    """The Bloch vector left the unit ball during integration."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class BranchUndefinedError(QoctlError, ValueError):
    """A closed-form extremal branch has no real value at these parameters."""


class InfeasibleProblem(QoctlError):
    """The requested boundary states cannot be connected.

    ``minimal_time`` carries the shortest achievable duration when it is
    known, so callers can report why the horizon was insufficient.
    """

    def __init__(self, message, minimal_time=None):
        super().__init__(message)
        self.minimal_time = minimal_time
