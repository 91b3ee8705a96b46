"""Exception hierarchy shared by every module of the package."""


class HestonMDPError(Exception):
    """Base class for all errors raised by heston_mdp."""


class DomainError(HestonMDPError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AccuracyError(HestonMDPError, ArithmeticError):
    """A series or iterative evaluation failed to reach the requested tolerance."""


class DegeneracyError(HestonMDPError, ArithmeticError):
    """The bracket determinant V_T is too small for a stable linear solve."""


class SimulationError(HestonMDPError, RuntimeError):
    """A simulated state became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class PreconditionError(HestonMDPError, ValueError):
    """Required input data (for example retained noise) is missing."""


class RadiusTooSmallError(HestonMDPError, ArithmeticError):
    """A Legendre-transform maximiser sits on the boundary of the search box."""


class GirsanovOverflowError(HestonMDPError, OverflowError):
    """A likelihood-ratio exponent is not finite."""

    def __init__(self, exponent):
        super().__init__(f"non-finite Girsanov log-weight: {exponent!r}")
        self.exponent = exponent


class ConfigError(HestonMDPError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class ExperimentError(HestonMDPError, RuntimeError):
    """A Monte Carlo experiment could not produce a valid result."""
