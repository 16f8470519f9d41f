"""Error taxonomy shared by all modules.

Two families: `InvalidParams` covers configuration and argument validation
(CLI exit code 2), `NumericalFailure` covers runtime failures of the
numerics themselves (CLI exit code 3).
"""


class InvalidParams(ValueError):
    """Configuration or argument outside its documented domain."""


class NumericalFailure(RuntimeError):
    """Base class for runtime failures of a numerical procedure."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = dict(context)


class NoConvergence(NumericalFailure):
    """An iteration (Newton solve, refinement loop) failed to converge."""


class NotAnosov(NumericalFailure):
    """Map lacks verified hyperbolic structure (eigenvalues or cones)."""


class ExpansionTooWeak(NumericalFailure):
    """Measured stable-axis expansion fell below the certified bound."""


class SingularFrame(NumericalFailure):
    """Tangent/unstable frame became numerically degenerate."""


class NotTransverse(NumericalFailure):
    """A curve meant to be transverse to the stable cones is not."""


class NotSimple(NumericalFailure):
    """A spectral quantity required a simple, isolated eigenvalue."""


class SolveFailure(NumericalFailure):
    """A linear solve was too ill-conditioned to trust, or an assembly
    self-check failed."""


class ContourHitsSpectrum(NumericalFailure):
    """An integration contour passes too close to computed spectrum."""


class DomainViolation(NumericalFailure):
    """A constructed object left its admissible coordinate domain."""


class StepUnderflow(NumericalFailure):
    """A finite-difference step ladder shrank below its floor without
    stabilizing."""
