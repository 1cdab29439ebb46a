"""Exception types shared across the package."""


class VerisliceError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VerisliceError):
    """Tensor shapes or layer parameters are inconsistent."""


class FixedPointOverflowError(VerisliceError):
    """A fixed-point value or accumulator would reach magnitude 2**62."""


class ModelFormatError(VerisliceError):
    """A model document violates the model JSON format."""


class PlanError(VerisliceError):
    """A slice plan is malformed (gaps, overlaps, out-of-range bounds)."""


class ProofError(VerisliceError):
    """A proving backend was fed inconsistent inputs."""


class PipelineError(VerisliceError):
    """A pipeline run aborted; the message names the failing slice."""
