"""rfemu: bit-accurate, cycle-level simulator of a near-memory RF
channel emulation accelerator.

The simulator models the direct-path compute architecture: per-node
digital RF generators, quantized gain/Doppler/fractional-delay
datapaths, a sub-banked SIMO-FIFO sample store with distributed delay
controllers, and the scenario-programming pipeline that drives them.
A double-precision golden signal model and matched-filter range
estimation harness validate every cycle-level result.

Two interchangeable engine backends exist: a compiled extension
(``rfemu._core``) and a pure-Python reference.  Results are bitwise
identical; selection is automatic at import with an ``RFEMU_BACKEND``
environment override (``compiled`` or ``pure``).
"""

from ._backend import BACKEND, backend_name
from .errors import (
    ConfigurationError,
    ContractViolation,
    DomainError,
    PacketParseError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "backend_name",
    "ConfigurationError",
    "DomainError",
    "PacketParseError",
    "ContractViolation",
    "__version__",
]
