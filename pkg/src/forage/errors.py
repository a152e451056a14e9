"""Exception hierarchy shared by every layer of the runtime."""

from __future__ import annotations


class ForageError(Exception):
    """Base class for all errors raised by this package."""


# -- document environment ---------------------------------------------------


class DocumentError(ForageError):
    pass


class NotFound(DocumentError, LookupError):
    pass


class InvalidDocument(DocumentError):
    pass


class InvalidPattern(DocumentError, ValueError):
    pass


class AnchorOutOfRange(DocumentError, IndexError):
    pass


class StaleAnchor(AnchorOutOfRange):
    """Anchor was minted against an older revision of a normalized document."""


class UnknownTokenizer(ForageError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


# -- epistemic state --------------------------------------------------------


class InvalidUnit(ForageError, ValueError):
    pass


class UngroundedUnit(ForageError):
    def __init__(self, message: str, unit=None):
        super().__init__(message)
        self.unit = unit


# -- diagnosis / policy -----------------------------------------------------


class SchemaViolation(ForageError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ActionError(ForageError):
    pass


class UnknownTool(ActionError):
    pass


class MissingArgument(ActionError):
    pass


class InvalidArgument(ActionError, ValueError):
    pass


class UnparsableAction(ForageError):
    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


class ScriptExhausted(ForageError):
    pass


# -- gateway ----------------------------------------------------------------


class BackendError(ForageError):
    pass


class TransportError(BackendError):
    pass


class AuthError(BackendError):
    pass


class ProtocolError(BackendError):
    pass


# -- controller / harness ---------------------------------------------------


class EpisodeError(ForageError):
    """Unrecoverable failure inside an episode; keeps whatever trace exists."""

    def __init__(self, message: str, trace=None, ledger=None):
        super().__init__(message)
        self.trace = trace
        self.ledger = ledger


class Unscorable(ForageError):
    pass
