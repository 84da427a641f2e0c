"""Protocol error types.

Verification failures that are part of normal protocol flow (bad signature
on a certificate, expired window) are returned as values by the relevant
operations; exceptions here mark caller errors and broken preconditions.
"""

from __future__ import annotations


class AithError(Exception):
    """Base class for all protocol errors."""


class UnsupportedSuite(AithError):
    """Requested signature suite is not available in this build."""


class SigningFailure(AithError):
    pass


class InvalidWindow(AithError):
    """Certificate validity window is empty or inverted (t_issue >= t_expire)."""


class TemporalFailure(AithError):
    """Certificate presented outside its validity window."""


class MalformedConstraint(AithError):
    pass


class DanglingReference(AithError):
    """A THRESHOLD trigger references a constraint_id that does not exist."""


class WrongState(AithError):
    """Operation not admissible in the session's current protocol state."""

    def __init__(self, state, event=None):
        self.state = state
        self.event = event
        suffix = f" on {event}" if event is not None else ""
        super().__init__(f"not admissible in state {state}{suffix}")


class ClockRegression(AithError):
    """Timestamp moved backwards within a session or chain."""


class DuplicateOperation(AithError):
    """op_id was already submitted in this session (replay)."""


class TooEarly(AithError):
    """Baseline reset requested before the reset interval elapsed."""


class MissingCounterSignature(AithError):
    """Tier 2 entry appended without the required counter-signature."""


class BadSignature(AithError):
    pass


class Expired(AithError):
    """Escalation response arrived at or after the ticket deadline."""


class UnknownTicket(AithError):
    pass


class UnknownCert(AithError):
    pass


class DuplicateCert(AithError):
    pass


class AlreadyRevoked(AithError):
    pass


class TighteningViolation(AithError):
    """Partial revocation replacement certificate loosens the original."""


class TamperedChain(AithError):
    def __init__(self, seq: int, detail: str = ""):
        self.seq = seq
        super().__init__(f"chain tampered at seq {seq}" + (f": {detail}" if detail else ""))


class EmptyRange(AithError):
    """Evidence filter matched no entries."""


class IncompleteReport(AithError):
    """Propagation report still has targets with no terminal status."""


class ConfigInvalid(AithError):
    pass
