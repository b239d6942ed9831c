"""Exception hierarchy shared across the protocol stack.

Errors are split along the boundaries callers care about: wire-format
problems, transport failures, protocol state violations, policy denials,
and delegate backend failures. Checks that are expected to fail as part
of normal operation (signature verification, schema validation, attack
detection) return values instead of raising.
"""

from __future__ import annotations


class LDPError(Exception):
    """Base class for all protocol errors."""


class SigningError(LDPError):
    """Key material is malformed or unusable for signing."""


class WireFormatError(LDPError):
    """Bytes on the wire do not decode to a valid envelope.

    Carries the offending field name when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ConnectionClosedError(LDPError):
    """Send or receive attempted on a closed connection."""


class MessageTooLargeError(LDPError):
    """Encoded envelope exceeds the configured maximum message size."""


class ProtocolViolationError(LDPError):
    """A message arrived in a session state that does not allow it."""


class NegotiationError(LDPError):
    """Session establishment failed (bad manifest, rejected proposal)."""


class PolicyRejectionError(LDPError):
    """The peer's trust policy rejected the caller.

    ``mechanism`` names the check that fired, when the peer reported one.
    """

    def __init__(self, message: str, mechanism: str | None = None):
        super().__init__(message)
        self.mechanism = mechanism


class BudgetExceededError(LDPError):
    """Submitting the task would exceed the session's token budget."""


class ModeViolationError(LDPError):
    """Payload mode is above what the session negotiated."""


class UnsupportedModeError(LDPError):
    """No encoder exists for the requested payload mode."""


class ValidationError(LDPError):
    """An input object failed invariant validation."""

    def __init__(self, message: str, report: list[str] | None = None):
        super().__init__(message)
        self.report = report or []


class LabelParseError(LDPError):
    """A label map could not be parsed back into an identity card."""


class RoutingError(LDPError):
    """No delegate in the pool can serve the task."""


class TaskFailedError(LDPError):
    """The delegate reported a terminal task failure."""


class BackendError(LDPError):
    """HTTP completion backend returned a non-success status."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code


class BackendTimeoutError(BackendError):
    """HTTP completion backend did not respond within the timeout."""
