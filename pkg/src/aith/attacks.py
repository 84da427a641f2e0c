"""Adversarial regression scenarios.

Each scenario replays one of the attack classes the protocol's defenses
exist for and asserts the defense actually fires: operation splitting vs
event-time aggregate windows, slow parameter drift vs scheduled baseline
resets plus the aggregate threshold, replay (duplicate ids, rewound
clocks), forged and foreign-key revocations, the post-revocation flood,
escalation-path privilege escalation, and the revocation propagation race.

Scenarios are deterministic; run_attack_suite returns a pass/fail matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

from .certificate import DelegationCertificate, DelegationLevel, TargetEndpoint, issue
from .chain import ChainSet
from .crypto import SUITE_SIMULATED_MAC, CryptoProvider, sha256
from .engine import Verdict
from .errors import BadSignature, ClockRegression, DuplicateOperation, WrongState
from .policy import (
    AnomalyConfig,
    Constraint,
    ConstraintAction,
    ConstraintKind,
    EscalationTrigger,
    Operation,
)
from .revocation import (
    RevocationMessage,
    RevocationMode,
    apply_revocation,
    build_revocation,
    dispatch_revocation,
)
from .session import ProtocolState, ResponseDecision, Session
from .simnet import EventLoop, NetworkConfig, SimNetwork


@dataclass(frozen=True)
class AttackResult:
    name: str
    passed: bool
    expected: str
    observed: str


def _env(constraints=(), triggers=(), anomaly=None, secret_tag="attack"):
    provider = CryptoProvider()
    key = provider.register_secret(sha256(f"principal:{secret_tag}".encode()))
    system = provider.register_secret(sha256(f"system:{secret_tag}".encode()))
    cert = DelegationCertificate(
        principal_id="attack-principal",
        principal_pubkey=key.pubkey,
        suite_id=SUITE_SIMULATED_MAC,
        agent_id="attack-agent",
        agent_hash=sha256(b"attack-agent-weights"),
        level=DelegationLevel.GENERAL,
        constraints=tuple(constraints),
        triggers=tuple(triggers),
        targets=(),
        t_issue=1_000_000,
        t_expire=10**10,
    )
    cert = issue(cert, provider, key.secret)
    chains = ChainSet()
    session = Session(cert, provider, chains, system, 1_000_000, anomaly=anomaly)
    session.install(1_000_000)
    return provider, key, cert, chains, session


def split_attack() -> AttackResult:
    """Ten $2,500 slices against a $20,000/hour aggregate: 8 pass, 2 blocked."""
    constraints = [
        Constraint("agg-hour", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                   ConstraintAction.BLOCK, max_amount=2_000_000, window_seconds=3600),
    ]
    _, _, cert, _, session = _env(constraints)
    verdicts = []
    for i in range(10):
        op = Operation(f"slice-{i}", "trade", 1_000_100 + 30 * i, amount=250_000)
        verdicts.append(session.submit(op, cert.agent_hash, op.timestamp).decision)
    allowed = sum(d.verdict == Verdict.ALLOWED for d in verdicts)
    blocked4 = sum(
        d.verdict == Verdict.BLOCKED and d.failed_check == 4 for d in verdicts
    )
    ok = allowed == 8 and blocked4 == 2
    return AttackResult(
        "operation splitting vs aggregate window", ok,
        "8 allowed, 2 blocked at check 4",
        f"{allowed} allowed, {blocked4} blocked at check 4",
    )


DRIFT_OPS = 500
DRIFT_PER_DAY = 100
DRIFT_SPACING = 86_400 // DRIFT_PER_DAY
DRIFT_START = 100_000  # $1,000
DRIFT_RATE = 1.01
DRIFT_CAP = 30_000_000  # $300,000/day for the defended configuration


def _drift_amount(i: int) -> int:
    return round(DRIFT_START * DRIFT_RATE**i)


def slow_drift_undefended() -> AttackResult:
    """Without resets, +1%/op stays under the 4-sigma anomaly bar for 500 ops."""
    anomaly = AnomalyConfig(min_samples=10, k_sigma=4.0,
                            reset_interval_seconds=10**9)
    _, _, cert, _, session = _env(anomaly=anomaly)
    escalations = 0
    for i in range(DRIFT_OPS):
        op = Operation(f"drift-{i}", "trade", 1_000_100 + DRIFT_SPACING * i,
                       amount=_drift_amount(i))
        r = session.submit(op, cert.agent_hash, op.timestamp)
        if r.decision.verdict == Verdict.ESCALATED:
            escalations += 1
    final_ratio = _drift_amount(DRIFT_OPS - 1) / DRIFT_START
    ok = escalations == 0
    return AttackResult(
        "slow drift, undefended baseline", ok,
        f"0 escalations while amounts drift {final_ratio:.0f}x",
        f"{escalations} escalations",
    )


def slow_drift_defended() -> AttackResult:
    """Daily resets + aggregate threshold catch the drift before it doubles."""
    constraints = [
        Constraint("agg-day", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                   ConstraintAction.BLOCK, max_amount=DRIFT_CAP,
                   window_seconds=86_400),
    ]
    triggers = [EscalationTrigger.threshold("agg-80", "agg-day", 0.8)]
    anomaly = AnomalyConfig(min_samples=10, k_sigma=4.0,
                            reset_interval_seconds=86_400)
    _, _, cert, _, session = _env(constraints, triggers, anomaly)
    fired_at = None
    for i in range(DRIFT_OPS):
        op = Operation(f"drift-{i}", "trade", 1_000_100 + DRIFT_SPACING * i,
                       amount=_drift_amount(i))
        r = session.submit(op, cert.agent_hash, op.timestamp)
        if r.decision.verdict != Verdict.ALLOWED:
            fired_at = (i, r.decision)
            break
    if fired_at is None:
        return AttackResult("slow drift vs baseline resets", False,
                            "escalation before the drift doubles", "never fired")
    i, decision = fired_at
    day_start = (i // DRIFT_PER_DAY) * DRIFT_PER_DAY
    post_reset = [_drift_amount(j) for j in range(day_start, min(day_start + 10, i))]
    baseline_mean = sum(post_reset) / len(post_reset) if post_reset else _drift_amount(i)
    ratio = _drift_amount(i) / baseline_mean
    ok = decision.verdict == Verdict.ESCALATED and ratio < 2.0
    return AttackResult(
        "slow drift vs baseline resets", ok,
        "escalated while amount < 2x the post-reset baseline mean",
        f"{decision.verdict.name} ({decision.reason_kind}:{decision.reason_id}) at "
        f"op {i}, amount/baseline = {ratio:.2f}",
    )


def replay_duplicate_op() -> AttackResult:
    _, _, cert, _, session = _env()
    op = Operation("replay-me", "trade", 1_000_100, amount=1000)
    session.submit(op, cert.agent_hash, op.timestamp)
    try:
        session.submit(op, cert.agent_hash, op.timestamp + 5)
        observed = "accepted"
        ok = False
    except DuplicateOperation:
        observed = "rejected as duplicate"
        ok = True
    return AttackResult("replayed op_id", ok, "rejected as duplicate", observed)


def replay_rewound_clock() -> AttackResult:
    _, _, cert, _, session = _env()
    session.submit(Operation("t1", "trade", 1_000_500, amount=1000),
                   cert.agent_hash, 1_000_500)
    try:
        session.submit(Operation("t2", "trade", 1_000_100, amount=1000),
                       cert.agent_hash, 1_000_500)
        observed = "accepted"
        ok = False
    except ClockRegression:
        observed = "rejected (clock regression)"
        ok = True
    return AttackResult("rewound operation timestamp", ok,
                        "rejected (clock regression)", observed)


def forged_revocation() -> AttackResult:
    provider, _, cert, _, session = _env()
    mallory = provider.register_secret(sha256(b"mallory"))
    unsigned = RevocationMessage(cert.cert_id, RevocationMode.IMMEDIATE,
                                 "forged", 1_000_200, suite_id=cert.suite_id)
    forged = RevocationMessage(
        cert_id=unsigned.cert_id, mode=unsigned.mode, reason=unsigned.reason,
        timestamp=unsigned.timestamp, suite_id=unsigned.suite_id,
        signature=provider.sign(mallory.secret, cert.suite_id,
                                sha256(unsigned.canonical_bytes())),
    )
    try:
        apply_revocation(session, forged, 1_000_200)
        observed = "applied!"
        ok = False
    except BadSignature:
        ok = session.state == ProtocolState.ACTIVE
        observed = f"rejected, state {session.state.value}"
    r = session.submit(Operation("after", "trade", 1_000_300, amount=1000),
                       cert.agent_hash, 1_000_300)
    ok = ok and r.decision.verdict == Verdict.ALLOWED
    return AttackResult("forged revocation (foreign key)", ok,
                        "rejected, session stays ACTIVE", observed)


def post_revocation_flood() -> AttackResult:
    provider, key, cert, _, session = _env()
    message = build_revocation(cert, RevocationMode.IMMEDIATE, "flood-test",
                               provider, key.secret, 1_000_200)
    apply_revocation(session, message, 1_000_200)
    denied = 0
    for i in range(1000):
        try:
            session.submit(Operation(f"flood-{i}", "trade", 1_000_300 + i,
                                     amount=100), cert.agent_hash, 1_000_300 + i)
        except WrongState:
            denied += 1
    ok = denied == 1000 and session.state == ProtocolState.REVOKED
    return AttackResult("post-revocation flood", ok, "1000/1000 denied",
                        f"{denied}/1000 denied, state {session.state.value}")


def trust_escalation_via_response() -> AttackResult:
    """The agent tries to approve its own escalation with a non-principal key."""
    triggers = [EscalationTrigger.novelty("nov", ("query", "trade"))]
    provider, _, cert, _, session = _env(triggers=triggers)
    # 'transfer' is outside GENERAL's default level table: use rebalance
    op = Operation("novel-op", "rebalance", 1_000_100, amount=5_000)
    receipt = session.submit(op, cert.agent_hash, op.timestamp)
    if receipt.decision.verdict != Verdict.ESCALATED:
        return AttackResult("trust escalation via self-approval", False,
                            "op escalates, self-approval rejected",
                            f"op was {receipt.decision.verdict.name}")
    agent_key = provider.register_secret(sha256(b"agent-held-key"))
    ticket = receipt.ticket
    payload = ticket.decision_payload(ResponseDecision.APPROVE)
    forged = provider.sign(agent_key.secret, cert.suite_id, payload)
    try:
        session.resolve_escalation(ticket.ticket_id, ResponseDecision.APPROVE,
                                   forged, 1_000_150)
        observed = "self-approval accepted!"
        ok = False
    except BadSignature:
        ok = ticket.status.value == "PENDING"
        observed = f"rejected, ticket {ticket.status.value}"
    return AttackResult("trust escalation via self-approval", ok,
                        "rejected, ticket stays PENDING", observed)


def revocation_race() -> AttackResult:
    """Operations racing the push: nothing executes after a target applied it."""
    provider = CryptoProvider()
    key = provider.register_secret(sha256(b"race-principal"))
    system = provider.register_secret(sha256(b"race-system"))
    n_targets = 20
    endpoints = [TargetEndpoint(f"t{i}", f"sim://t/{i}") for i in range(n_targets)]
    cert = issue(
        DelegationCertificate(
            principal_id="race", principal_pubkey=key.pubkey,
            suite_id=SUITE_SIMULATED_MAC, agent_id="race-agent",
            agent_hash=sha256(b"race-weights"), level=DelegationLevel.GENERAL,
            constraints=(), triggers=(), targets=tuple(endpoints),
            t_issue=1_000_000, t_expire=10**10,
        ),
        provider, key.secret,
    )
    loop = EventLoop()
    loop.clock.t = 1_000_100.0
    net = SimNetwork(loop, NetworkConfig(), seed=99)

    sessions = {}
    applied_at: dict[str, float] = {}
    exec_log: dict[str, list[float]] = {e.target_id: [] for e in endpoints}
    for e in endpoints:
        s = Session(cert, provider, ChainSet(), system, 1_000_000)
        s.install(1_000_000)
        sessions[e.target_id] = s

        def receive(message, at, tid=e.target_id):
            status = apply_revocation(sessions[tid], message, int(at))
            applied_at[tid] = at
            return status, ""

        net.register(e.address, receive)

    # agent traffic at every target throughout the race window
    counter = [0]

    def traffic(tid: str):
        def fire():
            t = loop.clock.t
            counter[0] += 1
            try:
                r = sessions[tid].submit(
                    Operation(f"race-{tid}-{counter[0]}", "trade", int(t),
                              amount=100), cert.agent_hash, int(t))
                if r.decision.verdict == Verdict.ALLOWED:
                    exec_log[tid].append(t)
            except WrongState:
                pass

        return fire

    for e in endpoints:
        for k in range(40):
            loop.at(1_000_100.0 + 0.005 * k, traffic(e.target_id))

    message = build_revocation(cert, RevocationMode.IMMEDIATE, "race", provider,
                               key.secret, 1_000_100)
    report = dispatch_revocation(message, endpoints, net)
    loop.run()

    delta = report.delta_t_max_observed()
    late_exec = sum(
        1
        for tid, times in exec_log.items()
        for t in times
        if t > applied_at[tid]
    )
    ok = late_exec == 0 and delta < 1.0 and report.complete()
    return AttackResult(
        "revocation propagation race", ok,
        "0 executions after apply; delta_t_max < 1 s",
        f"{late_exec} late executions, delta_t_max {delta * 1000:.1f} ms",
    )


SCENARIOS = (
    split_attack,
    slow_drift_undefended,
    slow_drift_defended,
    replay_duplicate_op,
    replay_rewound_clock,
    forged_revocation,
    post_revocation_flood,
    trust_escalation_via_response,
    revocation_race,
)


def run_attack_suite() -> list[AttackResult]:
    return [scenario() for scenario in SCENARIOS]


def format_results(results: list[AttackResult]) -> str:
    lines = [f"{'scenario':<44}{'result':<8}observed"]
    for r in results:
        lines.append(f"{r.name:<44}{'PASS' if r.passed else 'FAIL':<8}{r.observed}")
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} scenarios passed")
    return "\n".join(lines)
