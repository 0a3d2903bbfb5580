"""Shared exception types for configuration, domain and parsing errors."""

__all__ = [
    "ConfigurationError",
    "DomainError",
    "PacketParseError",
    "ContractViolation",
]


class ConfigurationError(ValueError):
    """A scene, preset or packet configuration is invalid."""


class DomainError(ValueError):
    """An operation was called outside its physical domain."""


class PacketParseError(ValueError):
    """A binary packet failed to decode.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ContractViolation(RuntimeError):
    """A runtime sequencing contract was broken (e.g. late staging)."""
