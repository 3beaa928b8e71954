"""Exception hierarchy. Every operation that could silently read past a
tree horizon or violate a contract raises loudly instead of returning a
partial answer."""


class HoroprodError(Exception):
    """Base class for all package errors."""


class MalformedEncoding(HoroprodError):
    """Preorder offspring sequence over- or under-runs."""


class DepthViolation(HoroprodError):
    """Invalid generation horizon."""


class UnknownVertex(HoroprodError):
    """Vertex id or address not present in the tree / window."""


class HorizonExceeded(HoroprodError):
    """Operation would need structure beyond the truncation horizon."""


class ParseError(HoroprodError):
    """Document cannot be parsed; carries a position when available."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class ResourceLimit(HoroprodError):
    """Sampled tree exceeded the configured vertex cap."""


class PreconditionViolated(HoroprodError):
    """Caller broke an operation precondition."""


class DeadEnd(HoroprodError):
    """Boundary-ray sampling hit a vertex whose children all carry zero mass."""


class InsufficientSamples(HoroprodError):
    """A chi-square cell count fell below the validity threshold."""


class EmptyWindow(HoroprodError):
    """Horospheric window came out empty (should be impossible for H >= 0)."""


class NonInteriorMember(HoroprodError):
    """Isoperimetric candidate set contains a non-interior vertex."""


class NoConvergence(HoroprodError):
    """Power iteration did not converge within the iteration cap."""


class ConfigError(HoroprodError):
    """Experiment configuration failed validation."""


class PartialFailure(HoroprodError):
    """A sweep finished with some failed cells; carries per-cell status."""

    def __init__(self, message, cell_status=None):
        super().__init__(message)
        self.cell_status = cell_status or []
