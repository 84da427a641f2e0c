"""The verifier service core.

Owns the certificate registry, one session per installed certificate, the
three responsibility chains, target registrations for revocation pushes,
the live event journal, and a toy execution ledger standing in for the
real target system. The HTTP layer in webapi.py is a thin shell over the
methods here, so tests can drive the full protocol without a socket.

Persistence: the chains are the source of truth. On startup with a data
directory, the chains are re-verified and every session is rebuilt from
them — certificates from their install entries, aggregates by replaying
committed operations in timestamp order, pending tickets from raises
minus resolutions, states from revocations/suspensions. No separate
snapshot is needed.

Concurrency: one re-entrant service lock serializes mutations. The three
chains are shared across sessions (entries carry cert_id), so chain
appends are the global serialization point anyway; at desk scale this is
the honest design. Event subscribers read their own queues lock-free.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import chain as chainmod
from . import codec
from .certificate import (
    CertCheck,
    DelegationCertificate,
    DelegationLevel,
    from_wire,
    to_text,
    verify_certificate,
)
from .chain import ChainSet, Tier
from .crypto import SUITE_SIMULATED_MAC, CryptoProvider, KeyPair, sha256
from .engine import DEFAULT_LEVEL_TABLE, LEVEL_ALL
from .errors import (
    AithError,
    BadSignature,
    ClockRegression,
    DuplicateCert,
    DuplicateOperation,
    TemporalFailure,
    UnknownCert,
    UnknownTicket,
    WrongState,
)
from .evidence import extract_evidence
from .policy import AnomalyConfig, Operation
from .revocation import (
    PropagationReport,
    RevocationMessage,
    RevocationMode,
    TargetStatus,
    apply_revocation,
    check_tightening,
    dispatch_revocation,
    verify_revocation,
)
from .session import (
    ProtocolState,
    ResolveOutcome,
    ResponseDecision,
    Session,
    SubmitReceipt,
)


@dataclass
class ServiceConfig:
    data_dir: str | None = None
    host: str = "127.0.0.1"
    port: int = 8787
    suite: str = "SIMULATED_MAC"
    default_timeout_seconds: int = 300
    anomaly_min_samples: int = 10
    anomaly_k_sigma: float = 4.0
    baseline_reset_interval_seconds: int = 86_400
    principal_secrets: list[str] = field(default_factory=list)  # hex, shared-MAC suite
    level_table: dict[str, list[str] | str] = field(default_factory=dict)
    console_dir: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def parsed_level_table(self):
        if not self.level_table:
            return None
        table = {}
        for name, types in self.level_table.items():
            level = DelegationLevel[name]
            table[level] = LEVEL_ALL if types == LEVEL_ALL else frozenset(types)
        return table


@dataclass(frozen=True)
class TargetRegistration:
    target_id: str
    cert_id: str
    revocation_listener_address: str
    registered_at: int


class EventBus:
    """Journal + fan-out. Every event carries a global monotonic seq."""

    def __init__(self):
        self.journal: list[dict] = []
        self._subs: list[tuple[str | None, queue.Queue]] = []
        self._lock = threading.Lock()

    def emit(self, event: dict) -> dict:
        with self._lock:
            event = {**event, "seq": len(self.journal)}
            self.journal.append(event)
            for cert_filter, q in self._subs:
                if cert_filter is None or event.get("cert_id") == cert_filter:
                    q.put(event)
        return event

    def subscribe(self, cert_id: str | None = None, from_seq: int = 0) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            for event in self.journal[from_seq:]:
                if cert_id is None or event.get("cert_id") == cert_id:
                    q.put(event)
            self._subs.append((cert_id, q))
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            self._subs = [(c, s) for c, s in self._subs if s is not q]


class LocalLoopTransport:
    """Revocation transport for in-process targets (address 'local:<name>').

    Used by tests and single-node deployments; delivery is synchronous.
    """

    def __init__(self, service: "VerifierService"):
        self.service = service

    def now(self) -> float:
        return time.time()

    def schedule_retry(self, delay: float, fn) -> None:
        fn()  # local delivery cannot transiently fail

    def send(self, target, message, attempt, done) -> None:
        t0 = time.time()
        try:
            ack = self.service.receive_revocation(message)
            done(ack["status"], ack["applied_time"], time.time(), "")
        except AithError as exc:
            done(TargetStatus.REJECTED, None, t0, str(exc))


class HttpPushTransport:
    """Revocation transport over HTTP POST to each listener address."""

    def __init__(self, timeout: float = 5.0, pool_size: int = 16):
        import concurrent.futures

        self.timeout = timeout
        self._pool = concurrent.futures.ThreadPoolExecutor(max_workers=pool_size)

    def now(self) -> float:
        return time.time()

    def schedule_retry(self, delay: float, fn) -> None:
        def later():
            time.sleep(delay)
            fn()

        self._pool.submit(later)

    def send(self, target, message, attempt, done) -> None:
        wire_hex = message.to_wire().hex()

        def work():
            import httpx

            try:
                resp = httpx.post(
                    target.address,
                    json={"message_hex": wire_hex, "target_id": target.target_id},
                    timeout=self.timeout,
                )
                if resp.status_code == 200:
                    body = resp.json()
                    done(body.get("status", TargetStatus.APPLIED),
                         body.get("applied_time"), time.time(), "")
                else:
                    done(TargetStatus.REJECTED, None, time.time(),
                         f"http {resp.status_code}: {resp.text[:200]}")
            except Exception as exc:  # connection errors -> retry path
                done(TargetStatus.UNREACHABLE, None, None, str(exc))

        self._pool.submit(work)


class VerifierService:
    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.provider = CryptoProvider()
        for secret_hex in self.config.principal_secrets:
            self.provider.register_secret(bytes.fromhex(secret_hex))
        self._lock = threading.RLock()
        self.clock = time.time  # injectable for virtual-time tests
        self.events = EventBus()
        self.sessions: dict[str, Session] = {}
        self.certs: dict[str, DelegationCertificate] = {}
        self.registrations: list[TargetRegistration] = []
        self.ledger: dict[str, dict] = {}
        self.started_at = int(time.time())

        data_dir = self.config.data_dir
        self.system_key = self._load_system_key(data_dir)
        self.chains = ChainSet(
            Path(data_dir) / "chains" if data_dir else None,
            signature_check=self._check_counter_signature,
        )
        if len(self.chains.t1) or len(self.chains.t2) or len(self.chains.t3):
            self._restore_from_chains()

    # -- keys -----------------------------------------------------------------

    def _load_system_key(self, data_dir: str | None) -> KeyPair:
        if data_dir:
            path = Path(data_dir) / "system_key.hex"
            if path.exists():
                return self.provider.register_secret(bytes.fromhex(path.read_text().strip()))
            key = self.provider.generate_keypair(SUITE_SIMULATED_MAC)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(key.secret.hex())
            return key
        return self.provider.generate_keypair(SUITE_SIMULATED_MAC)

    def _check_counter_signature(self, kind: str, body: bytes, sig: bytes) -> bool:
        if kind in chainmod.SYSTEM_SIGNED_KINDS:
            return self.provider.verify(
                self.system_key.pubkey, self.system_key.suite_id, body, sig
            )
        cert_id = codec.Reader(body).str_()
        cert = self.certs.get(cert_id)
        if cert is None and kind == chainmod.KIND_CERT_ISSUED:
            r = codec.Reader(body)
            r.str_()
            cert = from_wire(r.bytes_())
        if cert is None:
            return False
        if kind == chainmod.KIND_REVOCATION:
            # body is the revocation message canonical; its own signature is
            # carried as the counter-signature
            return self.provider.verify(
                cert.principal_pubkey, cert.suite_id, sha256(body), sig
            )
        return self.provider.verify(cert.principal_pubkey, cert.suite_id, body, sig)

    # -- install ----------------------------------------------------------------

    def install_certificate(self, wire: bytes, now: int | None = None) -> dict:
        now = int(self.clock()) if now is None else now
        with self._lock:
            cert = from_wire(wire)
            if cert.cert_id in self.certs:
                raise DuplicateCert(cert.cert_id)
            check = verify_certificate(cert, self.provider, now, cert.agent_hash)
            if check == CertCheck.SIGNATURE_FAILURE:
                raise BadSignature("certificate signature does not verify")
            if check == CertCheck.TEMPORAL_FAILURE:
                raise TemporalFailure(
                    f"not valid at {now}: window [{cert.t_issue}, {cert.t_expire})"
                )
            return self._install_verified(cert, now)

    def _install_verified(self, cert: DelegationCertificate, now: int) -> dict:
        session = self._make_session(cert, now)
        self.certs[cert.cert_id] = cert
        self.sessions[cert.cert_id] = session
        session.install(now)
        for target in cert.targets:
            self.registrations.append(
                TargetRegistration(target.target_id, cert.cert_id, target.address, now)
            )
        self.ledger[cert.cert_id] = {"executed": 0, "total_minor_units": 0}
        return self.session_summary(cert.cert_id)

    def _make_session(self, cert: DelegationCertificate, now: int) -> Session:
        return Session(
            cert,
            self.provider,
            self.chains,
            self.system_key,
            now,
            level_table=self.config.parsed_level_table(),
            anomaly=AnomalyConfig(
                min_samples=self.config.anomaly_min_samples,
                k_sigma=self.config.anomaly_k_sigma,
                reset_interval_seconds=self.config.baseline_reset_interval_seconds,
            ),
            default_timeout=self.config.default_timeout_seconds,
            on_event=self.events.emit,
        )

    # -- operations ----------------------------------------------------------------

    def submit_operation(
        self, cert_id: str, op: Operation, presented_agent_hash: bytes,
        now: int | None = None,
    ) -> dict:
        now = int(self.clock()) if now is None else now
        with self._lock:
            session = self._session(cert_id)
            try:
                receipt = session.submit(op, presented_agent_hash, now)
            except WrongState as exc:
                return {
                    "op_id": op.op_id,
                    "status": "DENIED",
                    "state": str(exc.state.value if hasattr(exc.state, "value") else exc.state),
                    "detail": str(exc),
                }
            except (DuplicateOperation, ClockRegression) as exc:
                reason = (
                    "duplicate_op_id" if isinstance(exc, DuplicateOperation)
                    else "clock_regression"
                )
                body = (
                    codec.enc_str(cert_id)
                    + codec.enc_bytes(op.canonical_bytes())
                    + codec.enc_str(reason)
                )
                self.chains.t1.append(chainmod.KIND_PROTOCOL_REJECT, body, now)
                self.events.emit(
                    {"type": "decision", "cert_id": cert_id, "op_id": op.op_id,
                     "verdict": "REJECTED", "reason_kind": "protocol",
                     "reason_id": reason, "state": session.state.value,
                     "timestamp": now}
                )
                return {"op_id": op.op_id, "status": "REJECTED", "reason": reason,
                        "detail": str(exc)}
            if receipt.t3_seq is not None:
                self._record_execution(cert_id, op)
            return self._receipt_dict(session, receipt)

    def _record_execution(self, cert_id: str, op: Operation) -> None:
        row = self.ledger[cert_id]
        row["executed"] += 1
        row["total_minor_units"] += op.amount or 0

    @staticmethod
    def _receipt_dict(session: Session, receipt: SubmitReceipt) -> dict:
        d = receipt.decision
        out = {
            "op_id": receipt.op_id,
            "status": d.verdict.name,
            "checks_executed": d.checks_executed,
            "failed_check": d.failed_check,
            "reason_kind": d.reason_kind,
            "reason_id": d.reason_id,
            "t1_seq": receipt.t1_seq,
            "t3_seq": receipt.t3_seq,
            "state": session.state.value,
        }
        if receipt.ticket is not None:
            out["ticket"] = _ticket_dict(receipt.ticket)
        return out

    # -- escalations ------------------------------------------------------------------

    def list_escalations(self, cert_id: str, now: int | None = None) -> list[dict]:
        now = int(self.clock()) if now is None else now
        with self._lock:
            session = self._session(cert_id)
            session.expire_escalations(now)
            return [_ticket_dict(t) for t in session.pending]

    def respond_escalation(
        self,
        ticket_id: str,
        decision: ResponseDecision,
        signature: bytes,
        modified_op: Operation | None = None,
        now: int | None = None,
    ) -> dict:
        now = int(self.clock()) if now is None else now
        with self._lock:
            cert_id = self.tickets_index_lookup(ticket_id)
            session = self._session(cert_id)
            outcome = session.resolve_escalation(
                ticket_id, decision, signature, now, modified_op
            )
            if outcome.executed:
                op = modified_op if decision == ResponseDecision.MODIFY else \
                    session.tickets[ticket_id].op
                self._record_execution(cert_id, op)
            return _outcome_dict(outcome, session)

    def tickets_index_lookup(self, ticket_id: str) -> str:
        for cert_id, session in self.sessions.items():
            if ticket_id in session.tickets:
                return cert_id
        raise UnknownTicket(ticket_id)

    def expire_due_escalations(self, now: int | None = None) -> int:
        """Sweep every session; returns the number of tickets timed out."""
        now = int(self.clock()) if now is None else now
        with self._lock:
            return sum(
                len(s.expire_escalations(now))
                for s in self.sessions.values()
                if s.state in (ProtocolState.ESCALATED, ProtocolState.ACTIVE,
                               ProtocolState.SUSPENDED)
            )

    # -- revocation --------------------------------------------------------------------

    def revoke(
        self, message: RevocationMessage, transport=None, now: int | None = None
    ) -> tuple[PropagationReport, dict]:
        """Principal-side entry: verify, apply locally, push to every target."""
        now = int(self.clock()) if now is None else now
        with self._lock:
            cert = self.certs.get(message.cert_id)
            if cert is None:
                raise UnknownCert(message.cert_id)
            if not verify_revocation(message, cert, self.provider):
                raise BadSignature("revocation not signed by the certificate's principal")
            if message.mode == RevocationMode.PARTIAL:
                check_tightening(cert, message.replacement)
            ack = self._apply_revocation_locked(message, now)
            targets = [
                t for t in cert.targets
                if not t.address.startswith("local:")
            ]
        transport = transport or HttpPushTransport()
        report = dispatch_revocation(message, targets, transport)
        return report, ack

    def receive_revocation(self, message: RevocationMessage, now: int | None = None) -> dict:
        """Target-side listener: apply and acknowledge."""
        now = int(self.clock()) if now is None else now
        with self._lock:
            if message.cert_id not in self.sessions:
                raise UnknownCert(message.cert_id)
            return self._apply_revocation_locked(message, now)

    def _apply_revocation_locked(self, message: RevocationMessage, now: int) -> dict:
        session = self.sessions[message.cert_id]
        status = apply_revocation(session, message, now)
        if status == TargetStatus.APPLIED:
            body = message.canonical_bytes()
            self.chains.t2.append(
                chainmod.KIND_REVOCATION, body, now, counter_signature=message.signature
            )
            self.events.emit(
                {"type": "revocation", "cert_id": message.cert_id,
                 "mode": message.mode.name, "reason": message.reason,
                 "state": session.state.value, "timestamp": now}
            )
            if message.mode == RevocationMode.PARTIAL:
                replacement = message.replacement
                if replacement.cert_id not in self.certs:
                    self._install_verified(replacement, now)
        return {
            "cert_id": message.cert_id,
            "status": status,
            "applied_time": self.clock(),
            "state": session.state.value,
            "replacement_cert_id": (
                message.replacement.cert_id if message.replacement else None
            ),
        }

    # -- queries -----------------------------------------------------------------------

    def _session(self, cert_id: str) -> Session:
        session = self.sessions.get(cert_id)
        if session is None:
            raise UnknownCert(cert_id)
        return session

    def session_summary(self, cert_id: str) -> dict:
        session = self._session(cert_id)
        cert = session.cert
        return {
            "cert_id": cert_id,
            "principal_id": cert.principal_id,
            "agent_id": cert.agent_id,
            "agent_hash": cert.agent_hash.hex(),
            "level": cert.level.name,
            "t_issue": cert.t_issue,
            "t_expire": cert.t_expire,
            "state": session.state.value,
            "pending_tickets": len(session.pending),
            "ledger": self.ledger.get(cert_id, {}),
            "chain_heads": {
                str(int(t)): c.head_hash.hex() for t, c in self.chains.tiers().items()
            },
            "constraints": len(cert.constraints),
            "triggers": len(cert.triggers),
            "text_export": to_text(cert),
        }

    def query_chain(
        self,
        tier: int,
        cert_id: str | None = None,
        from_ts: int | None = None,
        to_ts: int | None = None,
        from_seq: int = 0,
        limit: int = 1000,
    ) -> list[dict]:
        chain = self.chains.chain(Tier(tier))
        out = []
        for e in chain.entries[from_seq:]:
            if from_ts is not None and e.timestamp < from_ts:
                continue
            if to_ts is not None and e.timestamp > to_ts:
                continue
            if cert_id is not None and e.body_cert_id() != cert_id:
                continue
            out.append(
                {
                    "seq": e.seq,
                    "tier": int(e.tier),
                    "kind": e.kind,
                    "timestamp": e.timestamp,
                    "cert_id": e.body_cert_id(),
                    "entry_hash": e.entry_hash.hex(),
                    "prev_hash": e.prev_hash.hex(),
                    "counter_signed": e.counter_signature is not None,
                    "record": e.record_bytes().hex(),
                }
            )
            if len(out) >= limit:
                break
        return out

    def export_evidence(
        self,
        from_ts: int,
        to_ts: int,
        cert_id: str | None = None,
        tiers: list[int] | None = None,
    ) -> dict:
        with self._lock:
            return extract_evidence(
                self.chains, from_ts, to_ts, cert_id,
                [Tier(t) for t in tiers] if tiers else None,
            )

    def verify_chains(self) -> dict:
        with self._lock:
            return {str(int(t)): v for t, v in self.chains.verify_all().items()}

    def health(self) -> dict:
        return {
            "status": "ok",
            "sessions": len(self.sessions),
            "chains": {
                str(int(t)): len(c) for t, c in self.chains.tiers().items()
            },
            "events": len(self.events.journal),
            "started_at": self.started_at,
        }

    def close(self) -> None:
        self.chains.close()

    # -- recovery ---------------------------------------------------------------------

    def _restore_from_chains(self) -> None:
        """Rebuild every session from the (already verified) chains."""
        bad = {t: v for t, v in self.chains.verify_all().items() if v is not None}
        if bad:
            raise AithError(f"chains failed verification on restore: {bad}")

        install_wire: dict[str, bytes] = {}
        for e in self.chains.t1.entries:
            if e.kind == chainmod.KIND_CERT_INSTALLED:
                r = codec.Reader(e.body)
                cert_id = r.str_()
                install_wire[cert_id] = r.bytes_()

        # per-cert event streams, merged in timestamp order
        per_cert: dict[str, list[tuple[int, int, str, object]]] = {c: [] for c in install_wire}
        tickets_ops: dict[str, Operation] = {}
        tickets_meta: dict[str, tuple[str, str, str, int, int]] = {}
        for e in self.chains.t1.entries:
            if e.kind == chainmod.KIND_OP_DECISION:
                r = codec.Reader(e.body)
                cert_id = r.str_()
                op = Operation.from_reader(codec.Reader(r.bytes_()))
                verdict = r.u8()
                per_cert[cert_id].append((e.timestamp, e.seq, "op", (op, verdict)))
            elif e.kind == chainmod.KIND_ESCALATION_RAISED:
                r = codec.Reader(e.body)
                cert_id = r.str_()
                ticket_id = r.str_()
                op = Operation.from_reader(codec.Reader(r.bytes_()))
                reason_kind = r.str_()
                reason_id = r.str_()
                deadline = r.i64()
                tickets_ops[ticket_id] = op
                tickets_meta[ticket_id] = (cert_id, reason_kind, reason_id,
                                           e.timestamp, deadline)
            elif e.kind == chainmod.KIND_BASELINE_RESET:
                r = codec.Reader(e.body)
                per_cert[r.str_()].append((e.timestamp, e.seq, "reset", None))
            elif e.kind == chainmod.KIND_PROTOCOL_REJECT:
                r = codec.Reader(e.body)
                cert_id = r.str_()
                op = Operation.from_reader(codec.Reader(r.bytes_()))
                per_cert[cert_id].append((e.timestamp, e.seq, "seen", op.op_id))

        resolved: dict[str, str] = {}
        state_events: dict[str, list[tuple[int, int, str]]] = {c: [] for c in install_wire}
        timeout_runs: dict[str, int] = {c: 0 for c in install_wire}
        for e in self.chains.t2.entries:
            r = codec.Reader(e.body)
            cert_id = r.str_()
            if cert_id not in per_cert:
                continue
            if e.kind in (chainmod.KIND_APPROVAL, chainmod.KIND_DENY, chainmod.KIND_MODIFY):
                ticket_id = r.str_()
                resolved[ticket_id] = e.kind
                timeout_runs[cert_id] = 0
                if e.kind == chainmod.KIND_APPROVAL:
                    op = tickets_ops[ticket_id]
                    per_cert[cert_id].append((e.timestamp, e.seq, "approved", op))
            elif e.kind in (chainmod.KIND_TIMEOUT_DENY,):
                resolved[r.str_()] = e.kind
                timeout_runs[cert_id] += 1
            elif e.kind == chainmod.KIND_DENIED_BY_REVOCATION:
                resolved[r.str_()] = e.kind
            elif e.kind == chainmod.KIND_REVOCATION:
                state_events[cert_id].append((e.timestamp, e.seq, "revoked"))
            elif e.kind == chainmod.KIND_SUSPEND:
                state_events[cert_id].append((e.timestamp, e.seq, "suspend"))
            elif e.kind == chainmod.KIND_RESUME:
                state_events[cert_id].append((e.timestamp, e.seq, "resume"))

        from .session import EscalationTicket, TicketStatus

        for cert_id, wire in install_wire.items():
            cert = from_wire(wire)
            self.certs[cert_id] = cert
            install_ts = next(
                e.timestamp for e in self.chains.t1.entries
                if e.kind == chainmod.KIND_CERT_INSTALLED
                and e.body_cert_id() == cert_id
            )
            session = self._make_session(cert, install_ts)
            session.state = ProtocolState.ACTIVE
            self.ledger.setdefault(cert_id, {"executed": 0, "total_minor_units": 0})
            for target in cert.targets:
                self.registrations.append(
                    TargetRegistration(target.target_id, cert_id, target.address,
                                       install_ts)
                )

            last_ts = install_ts
            for ts, _seq, kind, payload in sorted(per_cert[cert_id],
                                                  key=lambda x: (x[0], x[1])):
                last_ts = max(last_ts, ts)
                if kind == "op":
                    op, verdict = payload
                    session.seen_op_ids.add(op.op_id)
                    if verdict == 0:  # ALLOWED
                        session.engine.commit_approved(op)
                        self.ledger[cert_id]["executed"] += 1
                        self.ledger[cert_id]["total_minor_units"] += op.amount or 0
                elif kind == "approved":
                    session.engine.commit_approved(payload)
                    self.ledger[cert_id]["executed"] += 1
                    self.ledger[cert_id]["total_minor_units"] += payload.amount or 0
                elif kind == "reset":
                    session.engine.reset_baseline(ts, force=True)
                elif kind == "seen":
                    session.seen_op_ids.add(payload)
            session.engine.last_op_timestamp = last_ts
            session.consecutive_timeouts = timeout_runs.get(cert_id, 0)

            for ticket_id, (tcid, rk, ri, raised, deadline) in tickets_meta.items():
                if tcid != cert_id:
                    continue
                ticket = EscalationTicket(
                    ticket_id=ticket_id, cert_id=cert_id, op=tickets_ops[ticket_id],
                    reason_kind=rk, reason_id=ri, raised_at=raised, deadline=deadline,
                )
                if ticket_id in resolved:
                    ticket.status = {
                        chainmod.KIND_APPROVAL: TicketStatus.APPROVED,
                        chainmod.KIND_DENY: TicketStatus.DENIED,
                        chainmod.KIND_MODIFY: TicketStatus.MODIFIED,
                        chainmod.KIND_TIMEOUT_DENY: TicketStatus.TIMED_OUT,
                        chainmod.KIND_DENIED_BY_REVOCATION: TicketStatus.DENIED,
                    }[resolved[ticket_id]]
                else:
                    session.pending.append(ticket)
                session.tickets[ticket_id] = ticket
            session.pending.sort(key=lambda t: t.raised_at)
            # advance the ticket counter past every restored ticket id
            for _ in range(len(session.tickets)):
                next(session._ticket_counter)

            latest_admin = None
            for _ts, _seq, k in sorted(state_events[cert_id]):
                if k in ("suspend", "resume"):
                    latest_admin = k
            if any(k == "revoked" for _, _, k in state_events[cert_id]):
                session.state = ProtocolState.REVOKED
                session.pending.clear()
            elif latest_admin == "suspend" or session.consecutive_timeouts >= 3:
                session.state = ProtocolState.SUSPENDED
            elif session.pending:
                session.state = ProtocolState.ESCALATED
            self.sessions[cert_id] = session


def _ticket_dict(t) -> dict:
    return {
        "ticket_id": t.ticket_id,
        "cert_id": t.cert_id,
        "op": _op_dict(t.op),
        "reason_kind": t.reason_kind,
        "reason_id": t.reason_id,
        "raised_at": t.raised_at,
        "deadline": t.deadline,
        "status": t.status.value,
    }


def _op_dict(op: Operation) -> dict:
    return {
        "op_id": op.op_id,
        "op_type": op.op_type,
        "timestamp": op.timestamp,
        "amount": op.amount,
        "asset": op.asset,
        "destination": op.destination,
        "payload_digest": op.payload_digest.hex(),
    }


def _outcome_dict(outcome: ResolveOutcome, session: Session) -> dict:
    out = {
        "ticket_id": outcome.ticket_id,
        "status": outcome.status.value,
        "executed": outcome.executed,
        "t2_seq": outcome.t2_seq,
        "t3_seq": outcome.t3_seq,
        "state": session.state.value,
    }
    if outcome.reentry is not None:
        out["reentry"] = VerifierService._receipt_dict(session, outcome.reentry)
    return out
