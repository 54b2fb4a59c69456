"""Exception types shared across the package."""


class BatError(Exception):
    pass


class DimensionError(BatError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(BatError, ValueError):
    """Invalid or inconsistent configuration."""


class ContractError(BatError, RuntimeError):
    """A call violated an operation's precondition."""


class TokenLookupError(BatError, LookupError):
    """Token id outside the vocabulary."""


class DegenerateClassError(BatError, ValueError):
    """A class holds every sample, so a negative-side weight divides by zero."""


class GenerationError(BatError, ValueError):
    """Synthetic dataset parameters cannot be satisfied."""


class TrainingAborted(BatError, RuntimeError):
    """Training hit a non-finite loss."""

    def __init__(self, epoch, batch, lrate, family, loss):
        self.epoch = epoch
        self.batch = batch
        self.lrate = lrate
        self.family = family
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch} "
            f"(lrate={lrate:.6g}, loss family={family})"
        )


class SequenceLengthError(BatError, ValueError):
    """Sequence longer than the configured maximum."""
