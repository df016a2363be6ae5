"""
Error Types: One hierarchy for every failure the toolkit raises.
Data and format problems are ValueErrors, runtime failures are RuntimeErrors,
so callers that only know the builtins still catch them.
"""
from typing import Any, Optional, Sequence, Tuple


class LatentKitError(Exception):
    """Base class for all toolkit errors."""


# ===============================================================
#  Container format (.lttk / .lrm)
# ===============================================================

class ContainerFormatError(LatentKitError, ValueError):
    """A byte stream does not follow the container layout."""


class BadMagicError(ContainerFormatError):
    pass


class UnsupportedVersionError(ContainerFormatError):
    pass


class TruncatedPayloadError(ContainerFormatError):
    pass


class DimensionMismatchError(ContainerFormatError):
    """Declared dimensions disagree with the bytes actually present."""


class ModelFormatError(ContainerFormatError):
    pass


# ===============================================================
#  Trajectory data
# ===============================================================

class InvalidTrajectoryError(LatentKitError, ValueError):
    """A set with invariant violations was used where a valid one is required."""

    def __init__(self, message: str, report: Optional[Sequence[Any]] = None):
        super().__init__(message)
        self.report = list(report or [])


# ===============================================================
#  Metrics
# ===============================================================

class DegenerateInputError(LatentKitError, ValueError):
    def __init__(self, message: str, step: Optional[int] = None,
                 sample: Optional[Tuple[int, int]] = None):
        self.detail = message
        if step is not None:
            message = f"step {step}: {message}"
        if sample is not None:
            message = f"problem {sample[0]} sample {sample[1]}, {message}"
        super().__init__(message)
        self.step = step
        self.sample = sample


class DegenerateDistanceError(LatentKitError, ValueError):
    def __init__(self, first: int, second: int):
        super().__init__(f"points {first} and {second} are identical (zero nearest-neighbour distance)")
        self.indices = (first, second)


class InsufficientDataError(LatentKitError, ValueError):
    pass


class OverTrimmedError(LatentKitError, ValueError):
    pass


class RankDeficiencyError(LatentKitError, ValueError):
    pass


# ===============================================================
#  Reward model
# ===============================================================

class ModelConfigError(LatentKitError, ValueError):
    pass


class DimensionError(LatentKitError, ValueError):
    pass


class UnlabeledSampleError(LatentKitError, ValueError):
    pass


class DegenerateTrainingError(LatentKitError, ValueError):
    pass


class NoLabeledSamplesError(LatentKitError, ValueError):
    pass


class SingleClassError(LatentKitError, ValueError):
    pass


# ===============================================================
#  Sampler
# ===============================================================

class InvalidBetaError(LatentKitError, ValueError):
    pass


class LengthMismatchError(LatentKitError, ValueError):
    pass


class SamplerStallError(LatentKitError, RuntimeError):
    pass


class VerificationFailure(LatentKitError, RuntimeError):
    """A verification harness found a violated property."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
