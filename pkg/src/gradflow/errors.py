"""Exception types raised by the solver library.

Every failure mode that a caller may want to catch has its own class so
that drivers (and the CLI) can distinguish bad configuration from
runtime breakdown of a scheme.
"""


class GradflowError(Exception):
    """Base class for all library errors."""


class ConfigurationError(GradflowError):
    """Invalid construction-time parameters (grid sizes, scheme config, C)."""


class UsageError(GradflowError):
    """API misuse: mixing grids, unknown preset names, oversized oracle grids."""


class NonFiniteError(GradflowError):
    """A field or derived quantity contains NaN or Inf, naming the quantity."""


class SymbolSignError(GradflowError):
    """An operator symbol violates its required sign, naming the symbol."""


class AuxiliaryDegeneracyError(GradflowError):
    """A denominator built from the auxiliary variable fell below the guard floor."""


class RadicandNegativeError(GradflowError):
    """The square-root auxiliary update produced a negative radicand."""


class SolverDivergenceError(GradflowError):
    """The iterative inner solver failed to reach the requested residual."""
