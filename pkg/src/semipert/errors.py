"""Exception and warning types shared across the package.

Separate classes are used instead of bare ``ValueError`` so callers can
distinguish bad arguments from computations whose assumptions failed.
"""


class InputError(Exception):
    """Raised when an argument violates a documented precondition."""


class SpectrumError(Exception):
    """Raised when a resolvent is requested too close to the spectrum."""


class ResolutionError(Exception):
    """Raised when a grid or quadrature resolution cannot support the
    requested computation (e.g. a Richardson self-estimate fails, or a
    diffusion time is below the mesh scale)."""


class DivergenceError(Exception):
    """Raised when no exponential weight certifying convergence of a
    series or integral could be found within the search range."""


class NumericalError(Exception):
    """Raised when a dense linear-algebra kernel fails or returns
    non-finite results."""


class CrossCheckWarning(UserWarning):
    """Emitted when an independent cross-check disagrees with the primary
    computation beyond its tolerance.  Diagnostic only."""
