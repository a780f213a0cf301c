"""
Error types
- One root class so callers can catch every library failure at once
- Each subclass also derives from the matching builtin (ValueError, ...)
"""


class WdiError(Exception):
    """Base class for every error raised by the library"""


class DimensionError(WdiError, ValueError):
    """Shape mismatch, empty index set or index out of range"""


class NotPositiveDefiniteError(WdiError, ValueError):
    """Matrix is asymmetric or has no Cholesky factor"""


class SingularUpdateError(WdiError, ArithmeticError):
    """Rank-one update makes the matrix singular"""


class WeightError(WdiError, ValueError):
    """Weight function returned a negative or malformed value"""


class IntegrandError(WdiError, ArithmeticError):
    """Monte Carlo integrand produced a non-finite value"""


class EnumerationCapError(WdiError, ValueError):
    """Subset or instance enumeration would exceed the configured cap"""


class UnknownIdError(WdiError, KeyError):
    """Condition or inequality id not present in the registry"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown id"


class ScenarioError(WdiError, ValueError):
    """Scenario file or in-memory scenario is missing data or malformed"""


class UsageError(WdiError):
    """Bad command line, grid, environment override or resolved setting"""
