"""Exception hierarchy for immersia.

Every error raised by the library derives from ImmersiaError so the CLI can
map failures to a machine-readable JSON object with a stable ``kind`` tag.
"""


class ImmersiaError(Exception):
    """Base class; ``kind`` is the stable machine-readable tag."""

    kind = "error"

    def payload(self) -> dict:
        return {"kind": self.kind, "message": str(self)}


class InvalidShapeError(ImmersiaError):
    kind = "invalid-shape"


class UnsupportedOrderError(ImmersiaError):
    kind = "unsupported-order"


class UnsupportedDimensionError(ImmersiaError):
    kind = "unsupported-dimension"


class UnsupportedError(ImmersiaError):
    kind = "unsupported"


class DegenerateMetricError(ImmersiaError):
    kind = "degenerate-metric"


class InvalidExponentError(ImmersiaError):
    kind = "invalid-exponent"


class PreconditionError(ImmersiaError):
    kind = "precondition"


class TangencyError(ImmersiaError):
    kind = "tangency"


class SingularConfigurationError(ImmersiaError):
    kind = "singular-configuration"


class SearchFailureError(ImmersiaError):
    kind = "search-failure"


class OscillationTooLargeError(ImmersiaError):
    kind = "oscillation-too-large"


class ProjectionSingularError(ImmersiaError):
    kind = "projection-singular"


class InversionSingularError(ImmersiaError):
    kind = "inversion-singular"


class SolverFailureError(ImmersiaError):
    kind = "solver-failure"

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])

    def payload(self) -> dict:
        out = super().payload()
        out["residual_history"] = self.residual_history
        return out


class FoldDetectedError(ImmersiaError):
    kind = "fold-detected"


class InsufficientOverlapError(ImmersiaError):
    kind = "insufficient-overlap"


class UsageError(ImmersiaError):
    kind = "usage"
