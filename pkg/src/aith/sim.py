"""Workload simulation harness.

Reproduces the protocol's published 100,000-operation study: 1,000
simulated users, each holding a certificate with the reference policy,
submit a banded mix of operations over a virtual week. Escalations are
answered by a scripted principal (approve-all within the deadline by
default). Virtual event time drives everything, so a week of traffic and
its 300-second escalation deadlines run in seconds of wall time.

Workload bands (fractions of all operations):
    queries 40%, small trades 25% ($500-$5K), medium trades 15%
    ($5K-$10K), large trades 8% ($15K+), transfers 5%, over-limit 4%
    (just above the per-op limit), forbidden 3%.

Reference certificate (the published study leaves its policy unstated;
this calibration is documented here and in the report):
    level GENERAL, with the simulation's level table extending GENERAL to
    {query, trade, rebalance, transfer, external_transfer_unverified} so
    that transfers reach the novelty trigger and the explicit denylist —
    rather than the coarse level gate — catches the named forbidden type;
    per-op limit $10,000 (BLOCK); aggregate $75,000/24h (BLOCK, sized so a
    typical user-day sits near 40% of the cap and only busy tails cross
    the 80% threshold); OP_TYPE_DENYLIST {external_transfer_unverified}
    (BLOCK); THRESHOLD trigger at 0.8 of the aggregate; NOVELTY over
    {query, trade}.

Expected mapping: queries/small/medium flow autonomously, large and
over-limit trades exceed the per-op limit, the forbidden band splits
between the level gate (admin_override) and the denylist
(external_transfer_unverified), transfers escalate via novelty, and the
busiest user-days escalate via the aggregate threshold.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import chain as chainmod
from . import codec
from .certificate import DelegationCertificate, DelegationLevel, issue
from .chain import ChainSet
from .crypto import SUITE_SIMULATED_MAC, CryptoProvider, sha256
from .engine import DEFAULT_LEVEL_TABLE, Verdict
from .errors import ConfigInvalid
from .policy import AnomalyConfig, Constraint, ConstraintAction, ConstraintKind, \
    EscalationTrigger, Operation
from .session import ResponseDecision, Session

BANDS = ("query", "small", "medium", "large", "transfer", "over_limit", "forbidden")


@dataclass(frozen=True)
class WorkloadMix:
    fractions: dict = field(
        default_factory=lambda: {
            "query": 0.40,
            "small": 0.25,
            "medium": 0.15,
            "large": 0.08,
            "transfer": 0.05,
            "over_limit": 0.04,
            "forbidden": 0.03,
        }
    )
    user_count: int = 1000
    op_count: int = 100_000
    seed: int = 20_260_101
    duration_days: float = 7.0
    approve_rate: float = 1.0  # scripted principal: fraction of escalations approved

    def validate(self) -> None:
        total = sum(self.fractions.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigInvalid(f"band fractions sum to {total}, need 1.0")
        if set(self.fractions) - set(BANDS):
            raise ConfigInvalid(f"unknown bands: {set(self.fractions) - set(BANDS)}")
        if self.user_count <= 0 or self.op_count <= 0:
            raise ConfigInvalid("user_count and op_count must be positive")
        if not 0.0 <= self.approve_rate <= 1.0:
            raise ConfigInvalid("approve_rate must be in [0, 1]")


# Simulation level table: GENERAL additionally admits transfers (novelty
# band) and the named forbidden type (so the denylist, not the level gate,
# blocks it). admin_override stays outside and is caught by check 2.
SIM_LEVEL_TABLE = {
    **DEFAULT_LEVEL_TABLE,
    DelegationLevel.GENERAL: frozenset(
        {"query", "trade", "rebalance", "transfer", "external_transfer_unverified"}
    ),
}

PER_OP_LIMIT = 1_000_000  # $10,000 in cents
AGGREGATE_LIMIT = 7_500_000  # $75,000; calibrated so the outcome mix lands on target
AGGREGATE_WINDOW = 86_400
THRESHOLD_FRACTION = 0.8
FORBIDDEN_TYPES = ("external_transfer_unverified", "admin_override")


def reference_constraints() -> tuple[Constraint, ...]:
    return (
        Constraint(
            "per-op-limit", ConstraintKind.AMOUNT_LIMIT_PER_OP,
            ConstraintAction.BLOCK, max_amount=PER_OP_LIMIT,
        ),
        Constraint(
            "daily-aggregate", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
            ConstraintAction.BLOCK, max_amount=AGGREGATE_LIMIT,
            window_seconds=AGGREGATE_WINDOW,
        ),
        Constraint(
            "deny-unverified-transfer", ConstraintKind.OP_TYPE_DENYLIST,
            ConstraintAction.BLOCK, op_types=frozenset({"external_transfer_unverified"}),
        ),
    )


def reference_triggers() -> tuple[EscalationTrigger, ...]:
    return (
        EscalationTrigger.threshold("agg-threshold", "daily-aggregate", THRESHOLD_FRACTION),
        EscalationTrigger.novelty("unknown-op-type", ("query", "trade")),
    )


def build_reference_cert(
    provider: CryptoProvider, principal_id: str, t_issue: int, t_expire: int,
    chains: ChainSet | None = None, secret: bytes | None = None,
):
    # a seed-derived secret keeps whole simulation runs bit-reproducible
    key = (
        provider.register_secret(secret)
        if secret is not None
        else provider.generate_keypair(SUITE_SIMULATED_MAC)
    )
    cert = DelegationCertificate(
        principal_id=principal_id,
        principal_pubkey=key.pubkey,
        suite_id=SUITE_SIMULATED_MAC,
        agent_id=f"agent-of-{principal_id}",
        agent_hash=sha256(f"model-weights:{principal_id}".encode()),
        level=DelegationLevel.GENERAL,
        constraints=reference_constraints(),
        triggers=reference_triggers(),
        targets=(),
        t_issue=t_issue,
        t_expire=t_expire,
    )
    return issue(cert, provider, key.secret, chains=chains, now=t_issue), key


@dataclass
class OutcomeReport:
    op_count: int
    allowed: int
    escalated: int
    blocked: int
    rejected: int
    per_check_blocked: dict
    escalation_reasons: dict
    escalations_approved: int
    escalations_denied: int
    band_outcomes: dict
    chain_lengths: dict
    chain_verify_ok: bool
    cross_tier_ok: bool
    chain_heads: dict
    seed: int
    runtime_seconds: float

    def fractions(self) -> dict:
        n = self.op_count
        return {
            "allowed": self.allowed / n,
            "escalated": self.escalated / n,
            "blocked": self.blocked / n,
        }

    def conserved(self) -> bool:
        return self.allowed + self.escalated + self.blocked + self.rejected == self.op_count

    def to_dict(self) -> dict:
        return {
            "op_count": self.op_count,
            "allowed": self.allowed,
            "escalated": self.escalated,
            "blocked": self.blocked,
            "rejected": self.rejected,
            "fractions": self.fractions(),
            "per_check_blocked": self.per_check_blocked,
            "escalation_reasons": self.escalation_reasons,
            "escalations_approved": self.escalations_approved,
            "escalations_denied": self.escalations_denied,
            "band_outcomes": self.band_outcomes,
            "chain_lengths": self.chain_lengths,
            "chain_verify_ok": self.chain_verify_ok,
            "cross_tier_ok": self.cross_tier_ok,
            "chain_heads": self.chain_heads,
            "seed": self.seed,
            "runtime_seconds": round(self.runtime_seconds, 3),
        }


def _gen_band_ops(mix: WorkloadMix, rng: np.random.Generator, t0: int):
    """Yield (index, user, band, Operation) in timestamp order."""
    n = mix.op_count
    bands = list(mix.fractions.keys())
    probs = np.array([mix.fractions[b] for b in bands])
    band_idx = rng.choice(len(bands), size=n, p=probs)
    users = rng.integers(0, mix.user_count, size=n)
    span = mix.duration_days * 86_400
    offsets = np.sort(rng.uniform(0, span, size=n)).astype(np.int64)
    amounts_u = rng.random(size=n)
    forb_flip = rng.integers(0, 2, size=n)

    for i in range(n):
        band = bands[band_idx[i]]
        ts = int(t0 + offsets[i])
        amount = None
        op_type = "query"
        destination = None
        if band == "small":
            op_type, amount = "trade", int(50_000 + amounts_u[i] * 450_000)
        elif band == "medium":
            op_type, amount = "trade", int(500_000 + amounts_u[i] * 500_000)
        elif band == "large":
            op_type, amount = "trade", int(1_500_000 + amounts_u[i] * 3_500_000)
        elif band == "over_limit":
            op_type, amount = "trade", int(1_000_001 + amounts_u[i] * 499_999)
        elif band == "transfer":
            op_type, amount = "transfer", int(50_000 + amounts_u[i] * 450_000)
            destination = f"acct-{int(forb_flip[i])}"
        elif band == "forbidden":
            op_type = FORBIDDEN_TYPES[int(forb_flip[i])]
            amount = int(10_000 + amounts_u[i] * 90_000)
        yield i, int(users[i]), band, Operation(
            op_id=f"op-{i:07d}",
            op_type=op_type,
            timestamp=ts,
            amount=amount,
            destination=destination,
        )


def check_cross_tier(chains: ChainSet) -> tuple[bool, str]:
    """Executable form of invariant I1: every Tier 3 execution is justified.

    Each EXECUTION entry must join (by op_id) either a Tier 1 ALLOWED
    decision or a Tier 2 APPROVAL of the matching escalation ticket, and
    every allowed decision / approval must have executed exactly once.
    """
    allowed_ids: set[str] = set()
    ticket_op: dict[str, str] = {}
    for e in chains.t1.entries:
        if e.kind == chainmod.KIND_OP_DECISION:
            r = codec.Reader(e.body)
            r.str_()
            op = Operation.from_reader(codec.Reader(r.bytes_()))
            if r.u8() == int(Verdict.ALLOWED):
                allowed_ids.add(op.op_id)
        elif e.kind == chainmod.KIND_ESCALATION_RAISED:
            r = codec.Reader(e.body)
            r.str_()
            ticket_id = r.str_()
            op = Operation.from_reader(codec.Reader(r.bytes_()))
            ticket_op[ticket_id] = op.op_id
    approved_ids: set[str] = set()
    for e in chains.t2.entries:
        if e.kind == chainmod.KIND_APPROVAL:
            r = codec.Reader(e.body)
            r.str_()
            approved_ids.add(ticket_op[r.str_()])
    executed: list[tuple[str, int]] = []
    for e in chains.t3.entries:
        r = codec.Reader(e.body)
        r.str_()
        op = Operation.from_reader(codec.Reader(r.bytes_()))
        source = r.u8()
        executed.append((op.op_id, source))
    exec_ids = Counter(op_id for op_id, _ in executed)
    for op_id, source in executed:
        pool = allowed_ids if source == 1 else approved_ids
        if op_id not in pool:
            return False, f"execution of {op_id} (source {source}) has no justification"
    for op_id in allowed_ids | approved_ids:
        if exec_ids[op_id] != 1:
            return False, f"{op_id} authorized but executed {exec_ids[op_id]} times"
    return True, "ok"


def run_simulation(mix: WorkloadMix | None = None) -> OutcomeReport:
    mix = mix or WorkloadMix()
    mix.validate()
    started = time.perf_counter()
    rng = np.random.default_rng(mix.seed)
    provider = CryptoProvider()
    chains = ChainSet()
    system_key = provider.register_secret(sha256(f"sim-system:{mix.seed}".encode()))

    t0 = 1_750_000_000
    t_expire = t0 + int(mix.duration_days * 86_400) + 86_400
    anomaly = AnomalyConfig(min_samples=10, k_sigma=4.0, reset_interval_seconds=86_400)

    sessions: list[Session] = []
    keys = []
    for u in range(mix.user_count):
        cert, key = build_reference_cert(
            provider, f"user-{u:04d}", t0 - 60, t_expire,
            secret=sha256(f"sim-user:{mix.seed}:{u}".encode()),
        )
        session = Session(
            cert, provider, chains, system_key, t0 - 60,
            level_table=SIM_LEVEL_TABLE, anomaly=anomaly,
        )
        session.install(t0 - 60, log_chain=False)
        sessions.append(session)
        keys.append(key)

    counts = Counter()
    per_check = Counter()
    esc_reasons = Counter()
    band_outcomes: dict[str, Counter] = {b: Counter() for b in BANDS}
    approved = denied = 0
    approve_draws = rng.random(size=mix.op_count)

    for i, user, band, op in _gen_band_ops(mix, rng, t0):
        session = sessions[user]
        receipt = session.submit(op, session.cert.agent_hash, op.timestamp)
        verdict = receipt.decision.verdict
        counts[verdict.name] += 1
        band_outcomes[band][verdict.name] += 1
        if verdict == Verdict.BLOCKED:
            per_check[receipt.decision.failed_check] += 1
        elif verdict == Verdict.ESCALATED:
            esc_reasons[
                f"{receipt.decision.reason_kind}:{receipt.decision.reason_id}"
            ] += 1
            ticket = receipt.ticket
            decision = (
                ResponseDecision.APPROVE
                if approve_draws[i] < mix.approve_rate
                else ResponseDecision.DENY
            )
            payload = ticket.decision_payload(decision)
            sig = provider.sign(keys[user].secret, SUITE_SIMULATED_MAC, payload)
            session.resolve_escalation(ticket.ticket_id, decision, sig, op.timestamp)
            if decision == ResponseDecision.APPROVE:
                approved += 1
            else:
                denied += 1

    verify = chains.verify_all()
    cross_ok, _ = check_cross_tier(chains)
    report = OutcomeReport(
        op_count=mix.op_count,
        allowed=counts.get("ALLOWED", 0),
        escalated=counts.get("ESCALATED", 0),
        blocked=counts.get("BLOCKED", 0),
        rejected=counts.get("REJECTED", 0),
        per_check_blocked={f"check_{k}": v for k, v in sorted(per_check.items())},
        escalation_reasons=dict(esc_reasons.most_common()),
        escalations_approved=approved,
        escalations_denied=denied,
        band_outcomes={b: dict(c) for b, c in band_outcomes.items() if c},
        chain_lengths={"t1": len(chains.t1), "t2": len(chains.t2), "t3": len(chains.t3)},
        chain_verify_ok=all(v is None for v in verify.values()),
        cross_tier_ok=cross_ok,
        chain_heads={
            "t1": chains.t1.head_hash.hex(),
            "t2": chains.t2.head_hash.hex(),
            "t3": chains.t3.head_hash.hex(),
        },
        seed=mix.seed,
        runtime_seconds=time.perf_counter() - started,
    )
    if not report.conserved():
        raise AssertionError("outcome conservation violated")
    return report


def format_report(report: OutcomeReport) -> str:
    f = report.fractions()
    lines = [
        f"operations: {report.op_count:,}  (seed {report.seed}, "
        f"{report.runtime_seconds:.1f}s)",
        f"  allowed   {report.allowed:>7,}  {f['allowed']:6.1%}   "
        "(published study: 79.5%)",
        f"  escalated {report.escalated:>7,}  {f['escalated']:6.1%}   (6.1%)",
        f"  blocked   {report.blocked:>7,}  {f['blocked']:6.1%}   (14.4%)",
        f"  blocked by check: {report.per_check_blocked}",
        f"  escalation reasons: {report.escalation_reasons}",
        f"  escalations approved/denied: {report.escalations_approved}"
        f"/{report.escalations_denied}",
        f"  chains: {report.chain_lengths}  verify_ok={report.chain_verify_ok}  "
        f"cross_tier_ok={report.cross_tier_ok}",
    ]
    return "\n".join(lines)
