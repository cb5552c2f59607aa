"""Exception taxonomy.

Solver errors (NoSolution, DegenerateDenominator, NoTerminalLimit) map to CLI
exit code 2; config/parse errors to exit code 1; a FAIL verdict to exit 3.
"""


class MoveTargetError(Exception):
    """Base class for all package errors."""


class ConfigError(MoveTargetError):
    """Unparseable or inconsistent run configuration."""


class GridError(ConfigError):
    """Time grid is empty, non-monotone, or does not span [0, T]."""


class DimensionMismatch(ConfigError):
    """Curve/market dimensions disagree."""


class SingularSigma(MoveTargetError):
    """Volatility matrix not invertible (condition number above bound)."""


class RangeError(MoveTargetError):
    """Time argument outside its admissible range."""


class NoSolution(MoveTargetError):
    """No multiplier curve restores the moving-target constraint."""


class ZeroTheta(MoveTargetError):
    """Market price of risk vanishes where the target demands excess return."""


class DegenerateDenominator(MoveTargetError):
    """Gain-ratio denominator vanished away from the terminal layer."""


class NoTerminalLimit(MoveTargetError):
    """Terminal gain limit could not be resolved from the consistency relation."""


class UtilityMismatch(MoveTargetError):
    """Coefficient curves passed to an operation for a different utility."""


class PreconditionViolated(MoveTargetError):
    """Operation's stated precondition does not hold for the inputs."""


class NonFiniteState(MoveTargetError):
    """Simulation produced NaN or infinite wealth."""


class MissingIncrements(MoveTargetError):
    """Operation needs retained Brownian increments but the ensemble has none."""


class HorizonError(RangeError):
    """Perturbation window [t, t+eps) exceeds the horizon."""


class NonAdmissible(MoveTargetError):
    """Perturbed control leaves the admissible class required by the definition."""
