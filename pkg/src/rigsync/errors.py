"""Exception types shared across the package."""


class AudioFormatError(ValueError):
    """Raised for unsupported or malformed audio input.

    ``reason`` is a short machine-readable code (e.g. ``mono_required``)
    that the HTTP layer forwards to clients.
    """

    def __init__(self, reason: str, message: str | None = None):
        super().__init__(message or reason)
        self.reason = reason


class CheckpointFormatError(RuntimeError):
    """Checkpoint file is unreadable or has an unsupported format version."""


class FingerprintMismatchError(RuntimeError):
    """Loaded network triple spans more than one dataset fingerprint."""


class TrainingDivergedError(RuntimeError):
    """A network produced a non-finite loss during training."""

    def __init__(self, net: str, epoch: int, message: str):
        super().__init__(message)
        self.net = net
        self.epoch = epoch
