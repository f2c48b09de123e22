from aenum import MultiValueEnum

__all__ = (
    "ExitStatus",
    "BridgePixelCNNError",
    "ValidationError",
    "InvariantError",
    "StaleCacheError",
    "TrainingDivergedError",
    "FormatError",
    "StorageError",
)


class ExitStatus(MultiValueEnum):
    OK = 0, "PASS"
    FAILURE = 1, "FAIL"
    IO_ERROR = 2, "IO"


class BridgePixelCNNError(Exception):
    """Base class for every error raised by the toolkit."""

    status = ExitStatus.FAILURE


class ValidationError(BridgePixelCNNError, ValueError):
    """Invalid shapes, configurations or value ranges."""


class InvariantError(BridgePixelCNNError):
    """A property checked by the invariant suite does not hold."""


class StaleCacheError(BridgePixelCNNError):
    """The fast sampler cache does not match the canvas it is asked about."""


class TrainingDivergedError(BridgePixelCNNError):
    def __init__(self, step: int, last_finite_loss: float):
        self.step = step
        self.last_finite_loss = last_finite_loss
        super().__init__(
            f"non-finite loss at step {step} "
            f"(last finite loss: {last_finite_loss:.6f} bits/dim)"
        )


class FormatError(BridgePixelCNNError):
    """Malformed PGM, checkpoint or manifest content."""

    status = ExitStatus.IO_ERROR


class StorageError(FormatError):
    def __init__(self, path, reason):
        self.path = path
        super().__init__(f"{path}: {reason}")
