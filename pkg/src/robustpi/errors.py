"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class AsymmetricInput(ToolkitError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class BadLength(ToolkitError):
    """Vector length is not a triangular number n(n+1)/2."""


class NotHurwitz(ToolkitError):
    """Matrix has an eigenvalue with nonnegative real part."""


class SolveFailure(ToolkitError):
    """A linear or matrix-equation solve failed or left a large residual."""


class DimensionMismatch(ToolkitError):
    """Operands have incompatible shapes."""


class BadParams(ToolkitError):
    """Physical or configuration parameters out of range."""


class GenerationFailure(ToolkitError):
    """Random plant generation exhausted its retry budget."""


class Infeasible(ToolkitError):
    """No stabilizing solution exists at the requested attenuation level."""


class NoConvergence(ToolkitError):
    """Iterative solver exhausted its budget without meeting tolerance."""


class NotStabilizing(ToolkitError):
    """Gain does not stabilize the closed loop."""


class SearchFailure(ToolkitError):
    """Initial-gain search exhausted its budget."""

    def __init__(self, msg, best_level=None):
        super().__init__(msg)
        self.best_level = best_level


class InnerDivergence(ToolkitError):
    """Inner-loop iterate lost closed-loop stability (constraint violation)."""


class InfeasibleStart(ToolkitError):
    """Initial gains violate the constraint set."""


class Blowup(ToolkitError):
    """Simulated state left the configured norm bound."""


class RankDeficient(ToolkitError):
    """Regression matrix does not satisfy the rank condition."""


class DivergenceDetected(ToolkitError):
    """Learned or iterated gain grew beyond the divergence bound."""


class EvaluationInfeasible(ToolkitError):
    """Policy evaluation at the requested attenuation level failed."""


class IllConditionedWarning(UserWarning):
    """Regression matrix condition number above the warning threshold."""
