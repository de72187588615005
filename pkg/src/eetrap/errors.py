"""Exception types raised by the simulator.

Every error carries a short ``code`` used by the command-line front end when it
reports a failed run.
"""


class EETrapError(Exception):
    """Base class for all simulator errors."""

    code = "EETrapError"


class DegenerateCouplings(EETrapError, ValueError):
    code = "DegenerateCouplings"


class ZeroCoupling(EETrapError, ValueError):
    code = "ZeroCoupling"


class SingularDenominator(EETrapError, ValueError):
    code = "SingularDenominator"


class NoRealCoupling(EETrapError, ValueError):
    """The bound-state condition requires an imaginary coupling (g**2 < 0)."""

    code = "NoRealCoupling"


class PulseOutOfDomain(EETrapError, ValueError):
    code = "PulseOutOfDomain"


class SupportViolation(EETrapError, ValueError):
    code = "SupportViolation"


class BoundaryReached(EETrapError, RuntimeError):
    code = "BoundaryReached"


class SymmetryDrift(EETrapError, RuntimeError):
    code = "SymmetryDrift"


class ResidualTooLarge(EETrapError, RuntimeError):
    code = "ResidualTooLarge"


class TruncationBreach(EETrapError, RuntimeError):
    code = "TruncationBreach"


class TraceDrift(EETrapError, RuntimeError):
    code = "TraceDrift"


class NoSteadyState(EETrapError, RuntimeError):
    code = "NoSteadyState"


class PositivityLoss(EETrapError, RuntimeError):
    code = "PositivityLoss"


class TargetNotMet(EETrapError, RuntimeError):
    code = "TargetNotMet"


class ConfigError(EETrapError, ValueError):
    code = "ConfigError"

