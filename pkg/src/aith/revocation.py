"""Push-based revocation.

A revocation is a signed message (cert_id, mode, reason, timestamp, and
for PARTIAL a replacement certificate) pushed concurrently to every
target endpoint registered in the certificate, rather than waiting for
the credential to be presented again. Targets apply it idempotently;
acknowledgements feed a propagation report whose observed worst case is
checked against the sub-second bound.

Modes:
  IMMEDIATE  abort in-flight work (pending escalations denied), terminal
  GRACEFUL   let in-flight work complete (pending tickets stay resolvable
             until their deadlines), deny new work, then terminal
  PARTIAL    install a replacement certificate whose policy only tightens
             the original; the old session is revoked

Only the principal's key can revoke: targets verify the message signature
against the installed certificate's pk_H and reject everything else.

Delivery is at-least-once with bounded retries; a target that stays
unreachable is flagged in the report instead of failing silently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Protocol

from . import codec
from .certificate import (
    DelegationCertificate,
    TargetEndpoint,
    from_wire,
    to_wire,
)
from .crypto import CryptoProvider, sha256
from .errors import (
    AlreadyRevoked,
    BadSignature,
    IncompleteReport,
    TighteningViolation,
    UnknownCert,
)
from .policy import Constraint, ConstraintAction, ConstraintKind, EscalationTrigger, TriggerKind

RETRY_DELAYS = (0.1, 0.4)  # after the first attempt: exponential backoff
MAX_ATTEMPTS = 1 + len(RETRY_DELAYS)


class RevocationMode(IntEnum):
    IMMEDIATE = 1
    GRACEFUL = 2
    PARTIAL = 3


@dataclass(frozen=True)
class RevocationMessage:
    cert_id: str
    mode: RevocationMode
    reason: str
    timestamp: int
    replacement: DelegationCertificate | None = None
    suite_id: int = 0
    signature: bytes = b""

    def canonical_bytes(self) -> bytes:
        return (
            codec.enc_str(self.cert_id)
            + codec.enc_u8(int(self.mode))
            + codec.enc_str(self.reason)
            + codec.enc_i64(self.timestamp)
            + codec.enc_opt_bytes(
                to_wire(self.replacement) if self.replacement is not None else None
            )
        )

    def to_wire(self) -> bytes:
        return (
            self.canonical_bytes()
            + codec.enc_u8(self.suite_id)
            + codec.enc_bytes(self.signature)
        )

    @classmethod
    def from_wire(cls, data: bytes) -> "RevocationMessage":
        r = codec.Reader(data)
        cert_id = r.str_()
        mode = RevocationMode(r.u8())
        reason = r.str_()
        timestamp = r.i64()
        repl_bytes = r.opt_bytes()
        suite_id = r.u8()
        signature = r.bytes_()
        if not r.at_end():
            raise ValueError("trailing bytes after revocation message")
        return cls(
            cert_id=cert_id,
            mode=mode,
            reason=reason,
            timestamp=timestamp,
            replacement=from_wire(repl_bytes) if repl_bytes is not None else None,
            suite_id=suite_id,
            signature=signature,
        )


def build_revocation(
    cert: DelegationCertificate,
    mode: RevocationMode,
    reason: str,
    provider: CryptoProvider,
    principal_secret: bytes,
    now: int,
    replacement: DelegationCertificate | None = None,
) -> RevocationMessage:
    """Create and sign a revocation message for one certificate."""
    if mode == RevocationMode.PARTIAL:
        if replacement is None:
            raise TighteningViolation("PARTIAL revocation needs a replacement certificate")
        check_tightening(cert, replacement)
    elif replacement is not None:
        raise ValueError("replacement certificate only applies to PARTIAL mode")
    unsigned = RevocationMessage(
        cert_id=cert.cert_id,
        mode=mode,
        reason=reason,
        timestamp=now,
        replacement=replacement,
        suite_id=cert.suite_id,
    )
    sig = provider.sign(principal_secret, cert.suite_id, sha256(unsigned.canonical_bytes()))
    return RevocationMessage(
        cert_id=unsigned.cert_id,
        mode=unsigned.mode,
        reason=unsigned.reason,
        timestamp=unsigned.timestamp,
        replacement=unsigned.replacement,
        suite_id=unsigned.suite_id,
        signature=sig,
    )


def verify_revocation(
    message: RevocationMessage, cert: DelegationCertificate, provider: CryptoProvider
) -> bool:
    """Valid iff signed by the installed certificate's principal key."""
    if message.cert_id != cert.cert_id or message.suite_id != cert.suite_id:
        return False
    payload = sha256(message.canonical_bytes())
    return provider.verify(cert.principal_pubkey, cert.suite_id, payload, message.signature)


# -- PARTIAL tightening check -----------------------------------------------
#
# Structural subset rules, decidable per constraint kind: limits only
# decrease, allowlists only shrink, denylists only grow, scopes only grow,
# triggers only get more sensitive. Anything the rules cannot prove tighter
# is rejected.


def _require(cond: bool, what: str) -> None:
    if not cond:
        raise TighteningViolation(what)


def _check_constraint_tightens(old: Constraint, new: Constraint) -> None:
    cid = old.constraint_id
    _require(new.kind == old.kind, f"{cid}: kind changed")
    _require(
        new.action == old.action
        or (old.action == ConstraintAction.ESCALATE and new.action == ConstraintAction.BLOCK),
        f"{cid}: action loosened",
    )
    k = old.kind
    if k in (ConstraintKind.AMOUNT_LIMIT_PER_OP, ConstraintKind.AGGREGATE_LIMIT_WINDOWED):
        _require(new.max_amount <= old.max_amount, f"{cid}: limit raised")
        # the set of operations the limit catches may only grow
        if not old.op_types:
            _require(not new.op_types, f"{cid}: scope narrowed from all-ops")
        else:
            _require(
                not new.op_types or old.op_types <= new.op_types,
                f"{cid}: scope narrowed",
            )
    if k == ConstraintKind.AGGREGATE_LIMIT_WINDOWED:
        _require(new.window_seconds >= old.window_seconds, f"{cid}: window shortened")
    if k in (ConstraintKind.ASSET_ALLOWLIST, ConstraintKind.ASSET_DENYLIST):
        if k == ConstraintKind.ASSET_ALLOWLIST:
            _require(new.assets <= old.assets, f"{cid}: allowlist grew")
        else:
            _require(new.assets >= old.assets, f"{cid}: denylist shrank")
    if k == ConstraintKind.OP_TYPE_DENYLIST:
        _require(new.op_types >= old.op_types, f"{cid}: denylist shrank")
    if k == ConstraintKind.DESTINATION_ALLOWLIST:
        _require(new.destinations <= old.destinations, f"{cid}: allowlist grew")
    if k == ConstraintKind.TIME_WINDOW:
        _require(
            _daily_window_subset(
                (new.window_start, new.window_end), (old.window_start, old.window_end)
            ),
            f"{cid}: daily window widened",
        )


def _daily_window_subset(inner: tuple[int, int], outer: tuple[int, int]) -> bool:
    def expand(w):
        s, e = w
        return (s, e) if s < e else (s, e + 86_400)

    si, ei = expand(inner)
    so, eo = expand(outer)
    for shift in (0, 86_400):
        if so <= si + shift and ei + shift <= eo:
            return True
    return False


def _check_trigger_tightens(old: EscalationTrigger, new: EscalationTrigger) -> None:
    tid = old.trigger_id
    _require(new.kind == old.kind, f"trigger {tid}: kind changed")
    if old.kind == TriggerKind.THRESHOLD:
        _require(new.fraction_ppm <= old.fraction_ppm, f"trigger {tid}: fires later")
    elif old.kind == TriggerKind.NOVELTY:
        _require(new.known_op_types <= old.known_op_types, f"trigger {tid}: knows more")
    elif old.kind == TriggerKind.COMPOSITION:
        _require(new.window_seconds >= old.window_seconds, f"trigger {tid}: window shortened")
        for attr in ("max_count", "max_sum"):
            o, n = getattr(old, attr), getattr(new, attr)
            if o is not None:
                _require(n is not None and n <= o, f"trigger {tid}: {attr} loosened")


def check_tightening(
    original: DelegationCertificate, replacement: DelegationCertificate
) -> None:
    """Raise TighteningViolation unless replacement only narrows the original."""
    _require(replacement.principal_id == original.principal_id, "principal changed")
    _require(replacement.principal_pubkey == original.principal_pubkey, "principal key changed")
    _require(replacement.agent_hash == original.agent_hash, "agent identity changed")
    _require(replacement.level <= original.level, "delegation level raised")
    _require(replacement.t_expire <= original.t_expire, "validity extended")
    _require(replacement.t_issue >= original.t_issue, "validity extended backwards")
    old_targets = {t.target_id for t in original.targets}
    _require(
        {t.target_id for t in replacement.targets} <= old_targets, "targets added"
    )
    old_constraints = {c.constraint_id: c for c in original.constraints}
    new_constraints = {c.constraint_id: c for c in replacement.constraints}
    missing = set(old_constraints) - set(new_constraints)
    _require(not missing, f"constraints dropped: {sorted(missing)}")
    for cid, old in old_constraints.items():
        _check_constraint_tightens(old, new_constraints[cid])
    old_triggers = {t.trigger_id: t for t in original.triggers}
    new_triggers = {t.trigger_id: t for t in replacement.triggers}
    missing_t = set(old_triggers) - set(new_triggers)
    _require(not missing_t, f"triggers dropped: {sorted(missing_t)}")
    for tid, old in old_triggers.items():
        _check_trigger_tightens(old, new_triggers[tid])


# -- dispatch and the propagation report --------------------------------------


class TargetStatus:
    PENDING = "PENDING"
    APPLIED = "APPLIED"
    DUPLICATE = "DUPLICATE"
    REJECTED = "REJECTED"
    UNREACHABLE = "UNREACHABLE"

    TERMINAL = frozenset({APPLIED, DUPLICATE, REJECTED, UNREACHABLE})


@dataclass
class TargetReport:
    target_id: str
    address: str
    dispatch_time: float
    ack_time: float | None = None
    applied_time: float | None = None
    status: str = TargetStatus.PENDING
    attempts: int = 0
    detail: str = ""


@dataclass
class PropagationReport:
    cert_id: str
    mode: RevocationMode
    dispatched_at: float
    dispatch_cost_seconds: float = 0.0
    targets: dict[str, TargetReport] = field(default_factory=dict)

    def complete(self) -> bool:
        return all(t.status in TargetStatus.TERMINAL for t in self.targets.values())

    def record(self, target_id: str, status: str, applied_time: float | None,
               ack_time: float | None, detail: str = "") -> None:
        t = self.targets[target_id]
        t.status = status
        t.applied_time = applied_time
        t.ack_time = ack_time
        if detail:
            t.detail = detail
        if applied_time is not None and applied_time < t.dispatch_time:
            raise ValueError("applied before dispatch")

    def delta_t_max_observed(self) -> float:
        """Worst observed dispatch-to-applied latency across targets (seconds)."""
        if not self.complete():
            raise IncompleteReport(
                f"{sum(t.status not in TargetStatus.TERMINAL for t in self.targets.values())}"
                " targets still pending"
            )
        deltas = [
            t.applied_time - t.dispatch_time
            for t in self.targets.values()
            if t.applied_time is not None
        ]
        return max(deltas, default=0.0)

    def unreachable(self) -> list[str]:
        return [t.target_id for t in self.targets.values()
                if t.status == TargetStatus.UNREACHABLE]


class RevocationTransport(Protocol):
    """Delivery fabric for revocation pushes.

    send() must be non-blocking (the simulator schedules an event; the HTTP
    transport hands off to a worker thread) and must eventually invoke
    done(status, applied_time, ack_time, detail) exactly once per call.
    """

    def send(
        self,
        target: TargetEndpoint,
        message: RevocationMessage,
        attempt: int,
        done: Callable[[str, float | None, float | None, str], None],
    ) -> None: ...

    def now(self) -> float: ...

    def schedule_retry(self, delay: float, fn: Callable[[], None]) -> None: ...


def dispatch_revocation(
    message: RevocationMessage,
    targets: list[TargetEndpoint],
    transport: RevocationTransport,
) -> PropagationReport:
    """Fan a signed revocation out to every registered target concurrently.

    Returns immediately after dispatch; per-target completions land in the
    report as acks arrive. At-least-once delivery: failed sends retry with
    exponential backoff, then the target is flagged UNREACHABLE.
    """
    t0 = transport.now()
    report = PropagationReport(cert_id=message.cert_id, mode=message.mode, dispatched_at=t0)
    wall0 = time.perf_counter()
    pending: list[tuple[TargetEndpoint, TargetReport]] = []
    for target in targets:
        tr = TargetReport(target_id=target.target_id, address=target.address,
                          dispatch_time=t0)
        report.targets[target.target_id] = tr
        pending.append((target, tr))
    report.dispatch_cost_seconds = time.perf_counter() - wall0

    def launch(target: TargetEndpoint, tr: TargetReport, attempt: int) -> None:
        tr.attempts = attempt

        def done(status: str, applied: float | None, ack: float | None, detail: str) -> None:
            if status == TargetStatus.UNREACHABLE and attempt < MAX_ATTEMPTS:
                transport.schedule_retry(
                    RETRY_DELAYS[attempt - 1], lambda: launch(target, tr, attempt + 1)
                )
                return
            report.record(target.target_id, status, applied, ack, detail)

        transport.send(target, message, attempt, done)

    for target, tr in pending:
        launch(target, tr, 1)
    return report


def apply_revocation(session, message: RevocationMessage, now: int) -> str:
    """Target-side application. Returns APPLIED / DUPLICATE; raises on bad input.

    Idempotent: a duplicate delivery acks without re-applying. PARTIAL mode
    revokes the old session here; installing the replacement session is the
    caller's job (it owns session creation).
    """
    from .session import ProtocolState

    if message.cert_id != session.cert_id:
        raise UnknownCert(message.cert_id)
    if not verify_revocation(message, session.cert, session.provider):
        raise BadSignature("revocation not signed by the certificate's principal")
    if session.state == ProtocolState.REVOKED:
        return TargetStatus.DUPLICATE
    if message.mode == RevocationMode.GRACEFUL:
        session.expire_escalations(now)
        session.revoke_graceful(now)
    else:  # IMMEDIATE and PARTIAL both terminate the old session now
        session.revoke_immediate(now)
    return TargetStatus.APPLIED
