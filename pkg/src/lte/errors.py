"""Exception types shared across the simulator."""


class LteError(Exception):
    """Base class for all simulator errors."""


class DimensionError(LteError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class ContractError(LteError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericError(LteError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class GenotypeError(LteError, ValueError):
    """A genotype failed validation."""


class ParseError(LteError, ValueError):
    """Malformed serialized input; carries a best-effort position."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position


class ConfigError(LteError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class CheckpointFormatError(LteError, ValueError):
    """A checkpoint file is corrupt or has an unsupported version."""
