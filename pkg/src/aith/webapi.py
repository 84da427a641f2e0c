"""HTTP wire surface over the verifier service.

JSON request/response over REST paths plus a server-sent-events stream;
every binary field travels hex-encoded. Paths and schemas are frozen in
docs/wire.md — the operator console is a separate codebase that talks
only to this surface.

Scope separation is structural: the agent-facing surface is operation
submission and reads. Management actions (escalation responses,
revocations, suspend/resume) each carry a principal signature that the
service verifies; no route mutates a certificate's lifecycle without one.
"""

from __future__ import annotations

import json
import queue

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .errors import (
    AithError,
    BadSignature,
    DuplicateCert,
    DuplicateOperation,
    EmptyRange,
    Expired,
    TemporalFailure,
    TighteningViolation,
    UnknownCert,
    UnknownTicket,
    WrongState,
)
from .evidence import verify_evidence
from .policy import Operation
from .revocation import RevocationMessage
from .service import VerifierService
from .session import ResponseDecision

# agent-facing vs management route split (Thm 5 scope separation); the
# acceptance suite asserts these sets stay disjoint.
AGENT_ROUTES = {
    ("POST", "/api/certificates/{cert_id}/operations"),
}
MANAGEMENT_ROUTES = {
    ("POST", "/api/certificates"),
    ("POST", "/api/escalations/{ticket_id}/response"),
    ("POST", "/api/revocations"),
    ("POST", "/api/certificates/{cert_id}/suspend"),
    ("POST", "/api/certificates/{cert_id}/resume"),
}
READ_ROUTES = {
    ("GET", "/api/health"),
    ("GET", "/api/certificates/{cert_id}"),
    ("GET", "/api/certificates/{cert_id}/escalations"),
    ("GET", "/api/chains/{tier}"),
    ("GET", "/api/evidence"),
    ("GET", "/api/events/{cert_id}"),
    ("POST", "/api/evidence/verify"),
    ("POST", "/api/revocation-listener"),  # push inbox; payload is self-signed
}

_ERROR_CODES = {
    BadSignature: 403,
    Expired: 410,
    UnknownTicket: 404,
    UnknownCert: 404,
    DuplicateCert: 409,
    DuplicateOperation: 409,
    TemporalFailure: 422,
    TighteningViolation: 422,
    WrongState: 409,
    EmptyRange: 404,
}


class OperationBody(BaseModel):
    op_id: str
    op_type: str
    timestamp: int
    amount: int | None = None
    asset: str | None = None
    destination: str | None = None
    payload_digest: str | None = None  # hex, defaults to 32 zero bytes
    presented_agent_hash: str = Field(description="hex h_A the agent presents")


class CertificateBody(BaseModel):
    cert_hex: str


class ResponseBody(BaseModel):
    decision: str  # APPROVE | DENY | MODIFY
    signature_hex: str
    modified_op: dict | None = None


class RevocationBody(BaseModel):
    message_hex: str


class ListenerBody(BaseModel):
    message_hex: str
    target_id: str | None = None


class AdminBody(BaseModel):
    signature_hex: str
    timestamp: int


def _op_from_fields(fields: dict, default_digest: bytes = b"\x00" * 32) -> Operation:
    digest = fields.get("payload_digest")
    return Operation(
        op_id=fields["op_id"],
        op_type=fields["op_type"],
        timestamp=int(fields["timestamp"]),
        amount=fields.get("amount"),
        asset=fields.get("asset"),
        destination=fields.get("destination"),
        payload_digest=bytes.fromhex(digest) if digest else default_digest,
    )


def create_app(service: VerifierService) -> FastAPI:
    app = FastAPI(title="aith verifier", version="5.1")
    app.state.service = service

    @app.exception_handler(AithError)
    async def protocol_error(_request: Request, exc: AithError):
        code = next(
            (c for t, c in _ERROR_CODES.items() if isinstance(exc, t)), 400
        )
        return JSONResponse(status_code=code, content={"detail": str(exc)})

    @app.get("/api/health")
    def health() -> dict:
        return service.health()

    # -- certificates -----------------------------------------------------

    @app.post("/api/certificates")
    def install(body: CertificateBody) -> dict:
        return service.install_certificate(bytes.fromhex(body.cert_hex))

    @app.get("/api/certificates/{cert_id}")
    def summary(cert_id: str) -> dict:
        return service.session_summary(cert_id)

    # -- operations (the agent surface) -------------------------------------

    @app.post("/api/certificates/{cert_id}/operations")
    def submit(cert_id: str, body: OperationBody) -> dict:
        op = _op_from_fields(body.model_dump())
        return service.submit_operation(
            cert_id, op, bytes.fromhex(body.presented_agent_hash)
        )

    # -- escalations ---------------------------------------------------------

    @app.get("/api/certificates/{cert_id}/escalations")
    def escalations(cert_id: str) -> list[dict]:
        return service.list_escalations(cert_id)

    @app.post("/api/escalations/{ticket_id}/response")
    def respond(ticket_id: str, body: ResponseBody) -> dict:
        decision = ResponseDecision[body.decision.upper()]
        modified = _op_from_fields(body.modified_op) if body.modified_op else None
        return service.respond_escalation(
            ticket_id, decision, bytes.fromhex(body.signature_hex), modified
        )

    # -- revocation -------------------------------------------------------------

    @app.post("/api/revocations")
    def revoke(body: RevocationBody) -> dict:
        message = RevocationMessage.from_wire(bytes.fromhex(body.message_hex))
        report, ack = service.revoke(message)
        deadline = 10.0
        import time as _time

        t0 = _time.time()
        while not report.complete() and _time.time() - t0 < deadline:
            _time.sleep(0.01)
        return {
            "ack": ack,
            "report": {
                "cert_id": report.cert_id,
                "mode": report.mode.name,
                "dispatch_cost_seconds": report.dispatch_cost_seconds,
                "complete": report.complete(),
                "delta_t_max_observed": (
                    report.delta_t_max_observed() if report.complete() else None
                ),
                "targets": [
                    {
                        "target_id": t.target_id,
                        "status": t.status,
                        "attempts": t.attempts,
                        "dispatch_time": t.dispatch_time,
                        "applied_time": t.applied_time,
                        "ack_time": t.ack_time,
                        "detail": t.detail,
                    }
                    for t in report.targets.values()
                ],
            },
        }

    @app.post("/api/revocation-listener")
    def listener(body: ListenerBody) -> dict:
        message = RevocationMessage.from_wire(bytes.fromhex(body.message_hex))
        return service.receive_revocation(message)

    # -- suspend / resume ----------------------------------------------------------

    @app.post("/api/certificates/{cert_id}/suspend")
    def suspend(cert_id: str, body: AdminBody) -> dict:
        session = service.sessions.get(cert_id)
        if session is None:
            raise UnknownCert(cert_id)
        session.suspend(bytes.fromhex(body.signature_hex), body.timestamp)
        return service.session_summary(cert_id)

    @app.post("/api/certificates/{cert_id}/resume")
    def resume(cert_id: str, body: AdminBody) -> dict:
        session = service.sessions.get(cert_id)
        if session is None:
            raise UnknownCert(cert_id)
        session.resume(bytes.fromhex(body.signature_hex), body.timestamp)
        return service.session_summary(cert_id)

    # -- chains / evidence -------------------------------------------------------------

    @app.get("/api/chains/{tier}")
    def chain(
        tier: int,
        cert_id: str | None = None,
        from_ts: int | None = None,
        to_ts: int | None = None,
        from_seq: int = 0,
        limit: int = Query(default=1000, le=10_000),
    ) -> dict:
        entries = service.query_chain(tier, cert_id, from_ts, to_ts, from_seq, limit)
        return {"tier": tier, "entries": entries, "verify": service.verify_chains()}

    @app.get("/api/evidence")
    def evidence(
        from_ts: int,
        to_ts: int,
        cert_id: str | None = None,
        tiers: str | None = None,
    ) -> dict:
        tier_list = [int(t) for t in tiers.split(",")] if tiers else None
        return service.export_evidence(from_ts, to_ts, cert_id, tier_list)

    @app.post("/api/evidence/verify")
    def evidence_verify(bundle: dict) -> dict:
        ok, reason = verify_evidence(bundle)
        return {"ok": ok, "reason": reason}

    # -- event stream --------------------------------------------------------------------

    @app.get("/api/events/{cert_id}")
    def events(
        cert_id: str, from_seq: int = 0, max_events: int | None = None
    ) -> StreamingResponse:
        """SSE feed; max_events closes the stream after N events (testing,
        snapshot readers). Browsers reconnect with Last-Event-ID semantics
        using from_seq."""

        def stream():
            q = service.events.subscribe(cert_id, from_seq=from_seq)
            sent = 0
            try:
                yield "retry: 2000\n\n"
                while max_events is None or sent < max_events:
                    try:
                        event = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"id: {event['seq']}\nevent: {event['type']}\n" \
                          f"data: {json.dumps(event)}\n\n"
                    sent += 1
            finally:
                service.events.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def start_expiry_sweeper(service: VerifierService, interval: float = 1.0):
    """Deliver escalation-deadline expiry into each session's event order."""
    import threading

    stop = threading.Event()

    def sweep():
        while not stop.wait(interval):
            try:
                service.expire_due_escalations()
            except Exception:  # a sweep failure must never kill the timer
                pass

    thread = threading.Thread(target=sweep, name="escalation-sweeper", daemon=True)
    thread.start()
    return stop


def serve(service: VerifierService, host: str | None = None, port: int | None = None):
    import uvicorn

    app = create_app(service)
    console_dir = service.config.console_dir
    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")
    sweeper = start_expiry_sweeper(service)
    try:
        uvicorn.run(
            app,
            host=host or service.config.host,
            port=port or service.config.port,
            log_level="warning",
        )
    finally:
        sweeper.set()
