"""Exception taxonomy shared across the package.

Errors are grouped by who can fix them: bad values (InvalidInputError),
bad knobs (InvalidConfigError), degenerate math (DegenerateDenominatorError),
and the three remote-backend failure classes (transport / protocol / identity).
"""

from __future__ import annotations


class AramError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(AramError, ValueError):
    """A value violates an operation's preconditions (NaN, length mismatch, ...)."""


class InvalidConfigError(AramError, ValueError):
    """A configuration object or CLI flag combination is unusable."""


class DegenerateDenominatorError(AramError, ArithmeticError):
    """A ratio's denominator fell below the numerical floor.

    Carries the offending value so callers can decide whether to fall back.
    """

    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value


class TransportError(AramError, ConnectionError):
    """The remote backend could not be reached (after retries)."""


class ProtocolError(AramError, ValueError):
    """The remote backend answered, but the payload violates the wire contract."""


class IdentityError(AramError, ValueError):
    """The remote backend identifies as a different model than expected."""


class TraceError(AramError, ValueError):
    """A decode trace file is malformed or structurally incomplete."""


class PairingError(TraceError):
    """Run sets that must be paired (same seeds/scenarios) do not line up."""
