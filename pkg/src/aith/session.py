"""Protocol state machine and escalation handling.

A session is the verifier-side lifecycle of one installed certificate:
the six protocol states with their guarded transitions, the escalation
ticket queue with its auto-deny timeout, and the chain entries every step
leaves behind.

State machine (events not listed for a state are rejected):

    UNINITIALIZED --cert_installed-->  ACTIVE
    ACTIVE        --trigger_fired-->   ESCALATED
    ESCALATED     --resolved-->        ACTIVE        (queue drained)
    ESCALATED     --timeouts_exhausted--> SUSPENDED  (3 consecutive timeouts)
    ACTIVE        --principal_suspend--> SUSPENDED
    SUSPENDED     --principal_resume--> ACTIVE
    ACTIVE / ESCALATED / SUSPENDED --revocation--> REVOKED
    any non-terminal --integrity_fault--> ERROR

REVOKED and ERROR are terminal: they accept only audit reads. Operations
are evaluated in ACTIVE, and — so that one pending escalation cannot
deadlock all traffic — in ESCALATED, where only the parked operations
wait; everything else keeps flowing through the full pipeline.

A pending ticket never executes its operation. Executions happen on an
ALLOWED verdict or an APPROVE/MODIFY-then-ALLOWED resolution, and each
leaves a Tier 3 entry; human responses are counter-signed into Tier 2,
timeouts are system-signed. A ticket whose deadline passes is denied
(TIMED_OUT) the moment the clock reaches the deadline.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Callable

from . import chain as chainmod
from . import codec
from .certificate import DelegationCertificate
from .chain import ChainSet
from .crypto import CryptoProvider, KeyPair, sha256
from .engine import BoundaryDecision, BoundaryEngine, Verdict
from .errors import (
    BadSignature,
    DuplicateOperation,
    Expired,
    UnknownTicket,
    WrongState,
)
from .policy import AnomalyConfig, Operation

DEFAULT_ESCALATION_TIMEOUT = 300
SUSPEND_AFTER_CONSECUTIVE_TIMEOUTS = 3


class ProtocolState(Enum):
    UNINITIALIZED = "UNINITIALIZED"
    ACTIVE = "ACTIVE"
    ESCALATED = "ESCALATED"
    SUSPENDED = "SUSPENDED"
    REVOKED = "REVOKED"
    ERROR = "ERROR"


class SessionEvent(Enum):
    CERT_INSTALLED = "cert_installed"
    TRIGGER_FIRED = "trigger_fired"
    ESCALATION_RESOLVED = "escalation_resolved"
    TIMEOUTS_EXHAUSTED = "timeouts_exhausted"
    PRINCIPAL_SUSPEND = "principal_suspend"
    PRINCIPAL_RESUME = "principal_resume"
    REVOCATION = "revocation"
    INTEGRITY_FAULT = "integrity_fault"


_S = ProtocolState
_E = SessionEvent

TRANSITIONS: dict[tuple[ProtocolState, SessionEvent], ProtocolState] = {
    (_S.UNINITIALIZED, _E.CERT_INSTALLED): _S.ACTIVE,
    (_S.ACTIVE, _E.TRIGGER_FIRED): _S.ESCALATED,
    (_S.ESCALATED, _E.ESCALATION_RESOLVED): _S.ACTIVE,
    (_S.ESCALATED, _E.TIMEOUTS_EXHAUSTED): _S.SUSPENDED,
    (_S.ACTIVE, _E.PRINCIPAL_SUSPEND): _S.SUSPENDED,
    (_S.SUSPENDED, _E.PRINCIPAL_RESUME): _S.ACTIVE,
    (_S.ACTIVE, _E.REVOCATION): _S.REVOKED,
    (_S.ESCALATED, _E.REVOCATION): _S.REVOKED,
    (_S.SUSPENDED, _E.REVOCATION): _S.REVOKED,
}
for _s in (_S.UNINITIALIZED, _S.ACTIVE, _S.ESCALATED, _S.SUSPENDED):
    TRANSITIONS[(_s, _E.INTEGRITY_FAULT)] = _S.ERROR


def transition(state: ProtocolState, event: SessionEvent) -> ProtocolState:
    """Apply one state-machine event; raises WrongState when rejected."""
    nxt = TRANSITIONS.get((state, event))
    if nxt is None:
        raise WrongState(state, event)
    return nxt


class TicketStatus(Enum):
    PENDING = "PENDING"
    APPROVED = "APPROVED"
    DENIED = "DENIED"
    MODIFIED = "MODIFIED"
    TIMED_OUT = "TIMED_OUT"


class ResponseDecision(IntEnum):
    APPROVE = 1
    DENY = 2
    MODIFY = 3


@dataclass
class EscalationTicket:
    ticket_id: str
    cert_id: str
    op: Operation
    reason_kind: str
    reason_id: str
    raised_at: int
    deadline: int
    status: TicketStatus = TicketStatus.PENDING
    principal_signature: bytes | None = None
    resolved_at: int | None = None

    def decision_payload(
        self, decision: ResponseDecision, modified_op: Operation | None = None
    ) -> bytes:
        """Bytes the principal signs to resolve this ticket (= the T2 body)."""
        payload = (
            codec.enc_str(self.cert_id)
            + codec.enc_str(self.ticket_id)
            + codec.enc_u8(int(decision))
            + sha256(self.op.canonical_bytes())
        )
        if decision == ResponseDecision.MODIFY:
            if modified_op is None:
                raise ValueError("MODIFY needs the replacement operation")
            payload += codec.enc_bytes(modified_op.canonical_bytes())
        return payload


@dataclass(frozen=True)
class SubmitReceipt:
    op_id: str
    decision: BoundaryDecision
    t1_seq: int
    t3_seq: int | None = None
    ticket: EscalationTicket | None = None


@dataclass(frozen=True)
class ResolveOutcome:
    ticket_id: str
    status: TicketStatus
    executed: bool
    t2_seq: int
    t3_seq: int | None = None
    reentry: SubmitReceipt | None = None


def _op_decision_body(cert_id: str, op: Operation, d: BoundaryDecision) -> bytes:
    return (
        codec.enc_str(cert_id)
        + codec.enc_bytes(op.canonical_bytes())
        + codec.enc_u8(int(d.verdict))
        + codec.enc_opt_i64(d.failed_check)
        + codec.enc_i64(d.checks_executed)
        + codec.enc_opt_str(d.reason_kind)
        + codec.enc_opt_str(d.reason_id)
    )


def _execution_body(cert_id: str, op: Operation, source: int, t1_seq: int,
                    t2_seq: int | None) -> bytes:
    # source: 1 = allowed autonomously, 2 = human-approved escalation
    return (
        codec.enc_str(cert_id)
        + codec.enc_bytes(op.canonical_bytes())
        + codec.enc_u8(source)
        + codec.enc_i64(t1_seq)
        + codec.enc_opt_i64(t2_seq)
    )


class Session:
    """Single-certificate verifier session. Single-writer: callers serialize."""

    def __init__(
        self,
        cert: DelegationCertificate,
        provider: CryptoProvider,
        chains: ChainSet,
        system_key: KeyPair,
        now: int,
        level_table=None,
        anomaly: AnomalyConfig | None = None,
        default_timeout: int = DEFAULT_ESCALATION_TIMEOUT,
        on_event: Callable[[dict], None] | None = None,
    ):
        self.cert = cert
        self.cert_id = cert.cert_id
        self.provider = provider
        self.chains = chains
        self.system_key = system_key
        self.default_timeout = default_timeout
        self.on_event = on_event or (lambda e: None)
        self.state = ProtocolState.UNINITIALIZED
        self.engine = BoundaryEngine(
            cert, provider, now,
            level_table=level_table,
            anomaly=anomaly,
            on_baseline_reset=self._log_baseline_reset,
        )
        self.seen_op_ids: set[str] = set()
        self.tickets: dict[str, EscalationTicket] = {}
        self.pending: list[EscalationTicket] = []  # FIFO
        self.consecutive_timeouts = 0
        self.revoke_after_drain = False
        self._ticket_counter = itertools.count()
        self._now_watermark = now

    # -- lifecycle -----------------------------------------------------------

    def install(self, now: int, log_chain: bool = True) -> None:
        self.state = transition(self.state, SessionEvent.CERT_INSTALLED)
        if log_chain:
            from .certificate import to_wire

            body = codec.enc_str(self.cert_id) + codec.enc_bytes(to_wire(self.cert))
            entry = self.chains.t1.append(chainmod.KIND_CERT_INSTALLED, body, now)
            self.on_event(
                {"type": "installed", "cert_id": self.cert_id, "t1_seq": entry.seq,
                 "state": self.state.value, "timestamp": now}
            )

    def integrity_fault(self, now: int, detail: str = "") -> None:
        self.state = transition(self.state, SessionEvent.INTEGRITY_FAULT)
        self.on_event({"type": "state", "cert_id": self.cert_id,
                       "state": self.state.value, "timestamp": now, "detail": detail})

    # -- operation submission ---------------------------------------------------

    def submit(self, op: Operation, presented_agent_hash: bytes, now: int) -> SubmitReceipt:
        if self.state not in (ProtocolState.ACTIVE, ProtocolState.ESCALATED):
            raise WrongState(self.state, "submit")
        if self.revoke_after_drain:
            raise WrongState(ProtocolState.REVOKED, "submit")
        if op.op_id in self.seen_op_ids:
            raise DuplicateOperation(f"op_id {op.op_id!r} already submitted")
        self.expire_escalations(now)
        if self.state not in (ProtocolState.ACTIVE, ProtocolState.ESCALATED):
            raise WrongState(self.state, "submit")

        decision = self.engine.evaluate(op, now, presented_agent_hash)
        self.seen_op_ids.add(op.op_id)
        self._now_watermark = max(self._now_watermark, now)

        t1 = self.chains.t1.append(
            chainmod.KIND_OP_DECISION, _op_decision_body(self.cert_id, op, decision), now
        )
        receipt: SubmitReceipt
        if decision.verdict == Verdict.ALLOWED:
            t3 = self.chains.t3.append(
                chainmod.KIND_EXECUTION,
                _execution_body(self.cert_id, op, 1, t1.seq, None),
                now,
            )
            receipt = SubmitReceipt(op.op_id, decision, t1.seq, t3_seq=t3.seq)
        elif decision.verdict == Verdict.ESCALATED:
            ticket = self._raise_escalation(op, decision, now)
            receipt = SubmitReceipt(op.op_id, decision, t1.seq, ticket=ticket)
        else:
            receipt = SubmitReceipt(op.op_id, decision, t1.seq)
        self.on_event(
            {
                "type": "decision",
                "cert_id": self.cert_id,
                "op_id": op.op_id,
                "verdict": decision.verdict.name,
                "failed_check": decision.failed_check,
                "checks_executed": decision.checks_executed,
                "reason_kind": decision.reason_kind,
                "reason_id": decision.reason_id,
                "t1_seq": t1.seq,
                "t3_seq": receipt.t3_seq,
                "ticket_id": receipt.ticket.ticket_id if receipt.ticket else None,
                "state": self.state.value,
                "timestamp": now,
            }
        )
        return receipt

    def _raise_escalation(
        self, op: Operation, decision: BoundaryDecision, now: int
    ) -> EscalationTicket:
        timeout = decision.timeout_seconds or self.default_timeout
        ticket = EscalationTicket(
            ticket_id=f"tk-{self.cert_id[:8]}-{next(self._ticket_counter):06d}",
            cert_id=self.cert_id,
            op=op,
            reason_kind=decision.reason_kind or "",
            reason_id=decision.reason_id or "",
            raised_at=now,
            deadline=now + timeout,
        )
        self.tickets[ticket.ticket_id] = ticket
        self.pending.append(ticket)
        if self.state == ProtocolState.ACTIVE:
            self.state = transition(self.state, SessionEvent.TRIGGER_FIRED)
        body = (
            codec.enc_str(self.cert_id)
            + codec.enc_str(ticket.ticket_id)
            + codec.enc_bytes(op.canonical_bytes())
            + codec.enc_str(ticket.reason_kind)
            + codec.enc_str(ticket.reason_id)
            + codec.enc_i64(ticket.deadline)
        )
        self.chains.t1.append(chainmod.KIND_ESCALATION_RAISED, body, now)
        self.on_event(
            {
                "type": "ticket",
                "cert_id": self.cert_id,
                "ticket_id": ticket.ticket_id,
                "op_id": op.op_id,
                "status": ticket.status.value,
                "reason_kind": ticket.reason_kind,
                "reason_id": ticket.reason_id,
                "raised_at": ticket.raised_at,
                "deadline": ticket.deadline,
                "state": self.state.value,
                "timestamp": now,
            }
        )
        return ticket

    # -- escalation resolution ----------------------------------------------------

    def resolve_escalation(
        self,
        ticket_id: str,
        decision: ResponseDecision,
        principal_signature: bytes,
        now: int,
        modified_op: Operation | None = None,
        presented_agent_hash: bytes | None = None,
    ) -> ResolveOutcome:
        ticket = self.tickets.get(ticket_id)
        if ticket is None:
            raise UnknownTicket(ticket_id)
        if ticket.status != TicketStatus.PENDING:
            raise Expired(f"ticket {ticket_id} already {ticket.status.value}")
        if now >= ticket.deadline:
            self.expire_escalations(now)
            raise Expired(f"ticket {ticket_id} deadline {ticket.deadline} passed at {now}")
        payload = ticket.decision_payload(decision, modified_op)
        if not self.provider.verify(
            self.cert.principal_pubkey, self.cert.suite_id, payload, principal_signature
        ):
            raise BadSignature(f"decision on {ticket_id} not signed by the principal")

        self._unqueue(ticket)
        ticket.principal_signature = principal_signature
        ticket.resolved_at = now
        self.consecutive_timeouts = 0

        kind = {
            ResponseDecision.APPROVE: chainmod.KIND_APPROVAL,
            ResponseDecision.DENY: chainmod.KIND_DENY,
            ResponseDecision.MODIFY: chainmod.KIND_MODIFY,
        }[decision]
        t2 = self.chains.t2.append(kind, payload, now, counter_signature=principal_signature)

        executed = False
        t3_seq = None
        reentry = None
        if decision == ResponseDecision.APPROVE:
            ticket.status = TicketStatus.APPROVED
            self.engine.commit_approved(ticket.op)
            t3 = self.chains.t3.append(
                chainmod.KIND_EXECUTION,
                _execution_body(self.cert_id, ticket.op, 2, -1, t2.seq),
                now,
            )
            executed, t3_seq = True, t3.seq
        elif decision == ResponseDecision.DENY:
            ticket.status = TicketStatus.DENIED
        else:
            ticket.status = TicketStatus.MODIFIED
        self._drain(now)
        self.on_event(
            {
                "type": "ticket",
                "cert_id": self.cert_id,
                "ticket_id": ticket.ticket_id,
                "op_id": ticket.op.op_id,
                "status": ticket.status.value,
                "t2_seq": t2.seq,
                "t3_seq": t3_seq,
                "state": self.state.value,
                "timestamp": now,
            }
        )
        if decision == ResponseDecision.MODIFY:
            # the replacement re-enters the full pipeline from check 1
            reentry = self.submit(
                modified_op,
                presented_agent_hash if presented_agent_hash is not None
                else self.cert.agent_hash,
                now,
            )
            executed = reentry.decision.verdict == Verdict.ALLOWED
            t3_seq = reentry.t3_seq
        return ResolveOutcome(ticket_id, ticket.status, executed, t2.seq, t3_seq, reentry)

    def expire_escalations(self, now: int) -> list[EscalationTicket]:
        """Auto-deny every pending ticket whose deadline has arrived."""
        timed_out = [t for t in self.pending if now >= t.deadline]
        for ticket in timed_out:
            self._unqueue(ticket)
            ticket.status = TicketStatus.TIMED_OUT
            ticket.resolved_at = now
            body = (
                codec.enc_str(self.cert_id)
                + codec.enc_str(ticket.ticket_id)
                + codec.enc_i64(ticket.deadline)
            )
            sig = self.provider.sign(self.system_key.secret, self.system_key.suite_id, body)
            t2 = self.chains.t2.append(
                chainmod.KIND_TIMEOUT_DENY, body, now, counter_signature=sig
            )
            self.consecutive_timeouts += 1
            self.on_event(
                {
                    "type": "ticket",
                    "cert_id": self.cert_id,
                    "ticket_id": ticket.ticket_id,
                    "op_id": ticket.op.op_id,
                    "status": ticket.status.value,
                    "t2_seq": t2.seq,
                    "state": self.state.value,
                    "timestamp": now,
                }
            )
            if (
                self.consecutive_timeouts >= SUSPEND_AFTER_CONSECUTIVE_TIMEOUTS
                and self.state == ProtocolState.ESCALATED
            ):
                self.state = transition(self.state, SessionEvent.TIMEOUTS_EXHAUSTED)
                self.on_event({"type": "state", "cert_id": self.cert_id,
                               "state": self.state.value, "timestamp": now})
        if timed_out:
            self._drain(now)
        return timed_out

    def _unqueue(self, ticket: EscalationTicket) -> None:
        self.pending = [t for t in self.pending if t.ticket_id != ticket.ticket_id]

    def _drain(self, now: int) -> None:
        if self.pending:
            return
        if self.revoke_after_drain:
            self.revoke_after_drain = False
            if self.state != ProtocolState.REVOKED:
                self.state = transition(self.state, SessionEvent.REVOCATION)
                self.on_event({"type": "state", "cert_id": self.cert_id,
                               "state": self.state.value, "timestamp": now})
            return
        if self.state == ProtocolState.ESCALATED:
            self.state = transition(self.state, SessionEvent.ESCALATION_RESOLVED)
            self.on_event({"type": "state", "cert_id": self.cert_id,
                           "state": self.state.value, "timestamp": now})

    # -- suspend / resume -----------------------------------------------------------

    def _principal_payload(self, action: str, now: int) -> bytes:
        return codec.enc_str(self.cert_id) + codec.enc_str(action) + codec.enc_i64(now)

    def suspend(self, principal_signature: bytes, now: int) -> None:
        payload = self._principal_payload("suspend", now)
        if not self.provider.verify(
            self.cert.principal_pubkey, self.cert.suite_id, payload, principal_signature
        ):
            raise BadSignature("suspend not signed by the principal")
        self.state = transition(self.state, SessionEvent.PRINCIPAL_SUSPEND)
        self.chains.t2.append(chainmod.KIND_SUSPEND, payload, now,
                              counter_signature=principal_signature)
        self.on_event({"type": "state", "cert_id": self.cert_id,
                       "state": self.state.value, "timestamp": now})

    def resume(self, principal_signature: bytes, now: int) -> None:
        payload = self._principal_payload("resume", now)
        if not self.provider.verify(
            self.cert.principal_pubkey, self.cert.suite_id, payload, principal_signature
        ):
            raise BadSignature("resume not signed by the principal")
        self.state = transition(self.state, SessionEvent.PRINCIPAL_RESUME)
        self.chains.t2.append(chainmod.KIND_RESUME, payload, now,
                              counter_signature=principal_signature)
        self.on_event({"type": "state", "cert_id": self.cert_id,
                       "state": self.state.value, "timestamp": now})

    # -- revocation hooks (driven by the revocation module) ---------------------------

    def revoke_immediate(self, now: int) -> None:
        self._deny_pending_by_revocation(now)
        self.revoke_after_drain = False
        if self.state != ProtocolState.REVOKED:
            self.state = transition(self.state, SessionEvent.REVOCATION)
            self.on_event({"type": "state", "cert_id": self.cert_id,
                           "state": self.state.value, "timestamp": now})

    def revoke_graceful(self, now: int) -> None:
        if self.pending:
            self.revoke_after_drain = True
            return
        if self.state != ProtocolState.REVOKED:
            self.state = transition(self.state, SessionEvent.REVOCATION)
            self.on_event({"type": "state", "cert_id": self.cert_id,
                           "state": self.state.value, "timestamp": now})

    def _deny_pending_by_revocation(self, now: int) -> None:
        for ticket in list(self.pending):
            self._unqueue(ticket)
            ticket.status = TicketStatus.DENIED
            ticket.resolved_at = now
            body = codec.enc_str(self.cert_id) + codec.enc_str(ticket.ticket_id)
            sig = self.provider.sign(self.system_key.secret, self.system_key.suite_id, body)
            self.chains.t2.append(
                chainmod.KIND_DENIED_BY_REVOCATION, body, now, counter_signature=sig
            )
            self.on_event(
                {"type": "ticket", "cert_id": self.cert_id, "ticket_id": ticket.ticket_id,
                 "op_id": ticket.op.op_id, "status": "DENIED_BY_REVOCATION",
                 "state": self.state.value, "timestamp": now}
            )

    # -- chain hooks -------------------------------------------------------------------

    def _log_baseline_reset(self, now: int) -> None:
        body = codec.enc_str(self.cert_id) + codec.enc_i64(now)
        self.chains.t1.append(chainmod.KIND_BASELINE_RESET, body, now)
