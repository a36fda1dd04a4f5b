"""Shared exception types."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """An operation was called outside its stated preconditions."""


class ConfigurationError(ValueError):
    """A config combines options that are mutually inconsistent."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable, incompatible, or corrupt."""
