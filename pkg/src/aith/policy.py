"""Boundary constraint and escalation trigger language.

Certificates bind a set of constraints (hard limits, each with a BLOCK or
ESCALATE action) and a set of escalation triggers (signals that route an
otherwise-legal operation to a human). The schema is deliberately small:

Constraint kinds
    AMOUNT_LIMIT_PER_OP       op.amount <= max_amount (optional op_type scope)
    AGGREGATE_LIMIT_WINDOWED  sum of amounts over a sliding event-time
                              window <= max_amount (optional op_type scope)
    ASSET_ALLOWLIST           op.asset must be listed (ops without an asset pass)
    ASSET_DENYLIST            op.asset must not be listed
    OP_TYPE_DENYLIST          op.op_type must not be listed
    TIME_WINDOW               op.timestamp's UTC time of day must fall in
                              [window_start, window_end) seconds; start > end
                              wraps past midnight
    DESTINATION_ALLOWLIST     op.destination must be listed (ops without one pass)

Trigger kinds
    THRESHOLD     windowed usage after this op reaches fraction * limit of a
                  referenced AGGREGATE_LIMIT_WINDOWED constraint without
                  violating it
    NOVELTY       op.op_type outside the certificate's known set
    COMPOSITION   count or sum of scoped ops in a sliding window exceeds a cap

All amounts are integer minor units (cents); thresholds use integer
parts-per-million so no comparison ever touches floating point. Windows are
event-time, keyed on operation timestamps, never arrival time: splitting a
large operation into many small ones or replaying with crafted timestamps
cannot slip past an aggregate limit.

eval_constraint / eval_trigger are the reference evaluators: pure functions
that recompute every aggregate naively from the full operation history.
The boundary engine maintains incremental sliding-window state for speed;
these evaluators are the independent route the engine is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

from . import codec
from .crypto import ZERO_DIGEST, is_digest
from .errors import DanglingReference, MalformedConstraint

SECONDS_PER_DAY = 86_400
PPM = 1_000_000


class ConstraintKind(IntEnum):
    AMOUNT_LIMIT_PER_OP = 1
    AGGREGATE_LIMIT_WINDOWED = 2
    ASSET_ALLOWLIST = 3
    ASSET_DENYLIST = 4
    OP_TYPE_DENYLIST = 5
    TIME_WINDOW = 6
    DESTINATION_ALLOWLIST = 7


class ConstraintAction(IntEnum):
    BLOCK = 1
    ESCALATE = 2


class TriggerKind(IntEnum):
    THRESHOLD = 1
    NOVELTY = 2
    COMPOSITION = 3


@dataclass(frozen=True, slots=True)
class Operation:
    """A candidate action submitted by the agent."""

    op_id: str
    op_type: str
    timestamp: int
    amount: int | None = None
    asset: str | None = None
    destination: str | None = None
    payload_digest: bytes = ZERO_DIGEST

    def canonical_bytes(self) -> bytes:
        if not is_digest(self.payload_digest):
            raise ValueError("payload_digest must be 32 bytes")
        return b"".join(
            (
                codec.enc_str(self.op_id),
                codec.enc_str(self.op_type),
                codec.enc_i64(self.timestamp),
                codec.enc_opt_i64(self.amount),
                codec.enc_opt_str(self.asset),
                codec.enc_opt_str(self.destination),
                self.payload_digest,
            )
        )

    @classmethod
    def from_reader(cls, r: codec.Reader) -> "Operation":
        return cls(
            op_id=r.str_(),
            op_type=r.str_(),
            timestamp=r.i64(),
            amount=r.opt_i64(),
            asset=r.opt_str(),
            destination=r.opt_str(),
            payload_digest=r.fixed(32),
        )


@dataclass(frozen=True)
class Constraint:
    constraint_id: str
    kind: ConstraintKind
    action: ConstraintAction = ConstraintAction.BLOCK
    max_amount: int | None = None
    window_seconds: int | None = None
    op_types: frozenset[str] = frozenset()
    assets: frozenset[str] = frozenset()
    destinations: frozenset[str] = frozenset()
    window_start: int | None = None
    window_end: int | None = None

    def validate(self) -> None:
        k = self.kind
        if k in (ConstraintKind.AMOUNT_LIMIT_PER_OP, ConstraintKind.AGGREGATE_LIMIT_WINDOWED):
            if self.max_amount is None or self.max_amount < 0:
                raise MalformedConstraint(f"{self.constraint_id}: max_amount must be >= 0")
        if k == ConstraintKind.AGGREGATE_LIMIT_WINDOWED:
            if self.window_seconds is None or self.window_seconds <= 0:
                raise MalformedConstraint(f"{self.constraint_id}: window_seconds must be > 0")
        if k in (ConstraintKind.ASSET_ALLOWLIST, ConstraintKind.ASSET_DENYLIST):
            if not self.assets:
                raise MalformedConstraint(f"{self.constraint_id}: empty asset set")
        if k == ConstraintKind.OP_TYPE_DENYLIST and not self.op_types:
            raise MalformedConstraint(f"{self.constraint_id}: empty op_type set")
        if k == ConstraintKind.DESTINATION_ALLOWLIST and not self.destinations:
            raise MalformedConstraint(f"{self.constraint_id}: empty destination set")
        if k == ConstraintKind.TIME_WINDOW:
            for v in (self.window_start, self.window_end):
                if v is None or not (0 <= v < SECONDS_PER_DAY):
                    raise MalformedConstraint(
                        f"{self.constraint_id}: daily window bounds must be in [0, 86400)"
                    )
            if self.window_start == self.window_end:
                raise MalformedConstraint(f"{self.constraint_id}: empty daily window")

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                codec.enc_str(self.constraint_id),
                codec.enc_u8(self.kind),
                codec.enc_u8(self.action),
                codec.enc_opt_i64(self.max_amount),
                codec.enc_opt_i64(self.window_seconds),
                codec.enc_str_set(self.op_types),
                codec.enc_str_set(self.assets),
                codec.enc_str_set(self.destinations),
                codec.enc_opt_i64(self.window_start),
                codec.enc_opt_i64(self.window_end),
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Constraint":
        r = codec.Reader(data)
        c = cls(
            constraint_id=r.str_(),
            kind=ConstraintKind(r.u8()),
            action=ConstraintAction(r.u8()),
            max_amount=r.opt_i64(),
            window_seconds=r.opt_i64(),
            op_types=r.str_set(),
            assets=r.str_set(),
            destinations=r.str_set(),
            window_start=r.opt_i64(),
            window_end=r.opt_i64(),
        )
        c.validate()
        return c


@dataclass(frozen=True)
class EscalationTrigger:
    trigger_id: str
    kind: TriggerKind
    constraint_id: str | None = None
    fraction_ppm: int | None = None
    known_op_types: frozenset[str] = frozenset()
    window_seconds: int | None = None
    op_types: frozenset[str] = frozenset()
    max_count: int | None = None
    max_sum: int | None = None
    timeout_seconds: int | None = None

    def validate(self) -> None:
        k = self.kind
        if k == TriggerKind.THRESHOLD:
            if not self.constraint_id:
                raise MalformedConstraint(f"{self.trigger_id}: THRESHOLD needs constraint_id")
            if self.fraction_ppm is None or not (0 < self.fraction_ppm <= PPM):
                raise MalformedConstraint(
                    f"{self.trigger_id}: fraction must be in (0, 1] (ppm units)"
                )
        if k == TriggerKind.COMPOSITION:
            if self.window_seconds is None or self.window_seconds <= 0:
                raise MalformedConstraint(f"{self.trigger_id}: window_seconds must be > 0")
            if self.max_count is None and self.max_sum is None:
                raise MalformedConstraint(f"{self.trigger_id}: need max_count or max_sum")
        if self.timeout_seconds is not None and self.timeout_seconds <= 0:
            raise MalformedConstraint(f"{self.trigger_id}: timeout_seconds must be > 0")

    @classmethod
    def threshold(
        cls,
        trigger_id: str,
        constraint_id: str,
        fraction: float,
        timeout_seconds: int | None = None,
    ) -> "EscalationTrigger":
        return cls(
            trigger_id=trigger_id,
            kind=TriggerKind.THRESHOLD,
            constraint_id=constraint_id,
            fraction_ppm=round(fraction * PPM),
            timeout_seconds=timeout_seconds,
        )

    @classmethod
    def novelty(
        cls,
        trigger_id: str,
        known_op_types: Iterable[str],
        timeout_seconds: int | None = None,
    ) -> "EscalationTrigger":
        return cls(
            trigger_id=trigger_id,
            kind=TriggerKind.NOVELTY,
            known_op_types=frozenset(known_op_types),
            timeout_seconds=timeout_seconds,
        )

    @classmethod
    def composition(
        cls,
        trigger_id: str,
        window_seconds: int,
        op_types: Iterable[str] = (),
        max_count: int | None = None,
        max_sum: int | None = None,
        timeout_seconds: int | None = None,
    ) -> "EscalationTrigger":
        return cls(
            trigger_id=trigger_id,
            kind=TriggerKind.COMPOSITION,
            window_seconds=window_seconds,
            op_types=frozenset(op_types),
            max_count=max_count,
            max_sum=max_sum,
            timeout_seconds=timeout_seconds,
        )

    def canonical_bytes(self) -> bytes:
        return b"".join(
            (
                codec.enc_str(self.trigger_id),
                codec.enc_u8(self.kind),
                codec.enc_opt_str(self.constraint_id),
                codec.enc_opt_i64(self.fraction_ppm),
                codec.enc_str_set(self.known_op_types),
                codec.enc_opt_i64(self.window_seconds),
                codec.enc_str_set(self.op_types),
                codec.enc_opt_i64(self.max_count),
                codec.enc_opt_i64(self.max_sum),
                codec.enc_opt_i64(self.timeout_seconds),
            )
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "EscalationTrigger":
        r = codec.Reader(data)
        t = cls(
            trigger_id=r.str_(),
            kind=TriggerKind(r.u8()),
            constraint_id=r.opt_str(),
            fraction_ppm=r.opt_i64(),
            known_op_types=r.str_set(),
            window_seconds=r.opt_i64(),
            op_types=r.str_set(),
            max_count=r.opt_i64(),
            max_sum=r.opt_i64(),
            timeout_seconds=r.opt_i64(),
        )
        t.validate()
        return t


# -- reference evaluation ------------------------------------------------
#
# history is the sequence of operations that actually consumed budget:
# allowed operations plus approved escalations, in any order. Aggregates
# are recomputed from scratch on every call.


def _in_scope(c_op_types: frozenset[str], op: Operation) -> bool:
    return not c_op_types or op.op_type in c_op_types


def _time_of_day(ts: int) -> int:
    return ts % SECONDS_PER_DAY


def _daily_window_contains(start: int, end: int, tod: int) -> bool:
    if start < end:
        return start <= tod < end
    return tod >= start or tod < end  # wraps midnight


def windowed_usage(
    c: Constraint, op: Operation, history: Sequence[Operation]
) -> int:
    """Sum of scoped amounts in (op.timestamp - window, op.timestamp], op excluded."""
    cutoff = op.timestamp - (c.window_seconds or 0)
    total = 0
    for h in history:
        if h.timestamp <= cutoff or h.timestamp > op.timestamp:
            continue
        if h.amount is not None and _in_scope(c.op_types, h):
            total += h.amount
    return total


def eval_constraint(
    c: Constraint, op: Operation, history: Sequence[Operation], now: int
) -> bool:
    """True when the constraint is satisfied. Pure; raises MalformedConstraint."""
    c.validate()
    k = c.kind
    if k == ConstraintKind.AMOUNT_LIMIT_PER_OP:
        if op.amount is None or not _in_scope(c.op_types, op):
            return True
        return op.amount <= c.max_amount
    if k == ConstraintKind.AGGREGATE_LIMIT_WINDOWED:
        if op.amount is None or not _in_scope(c.op_types, op):
            return True
        return windowed_usage(c, op, history) + op.amount <= c.max_amount
    if k == ConstraintKind.ASSET_ALLOWLIST:
        return op.asset is None or op.asset in c.assets
    if k == ConstraintKind.ASSET_DENYLIST:
        return op.asset is None or op.asset not in c.assets
    if k == ConstraintKind.OP_TYPE_DENYLIST:
        return op.op_type not in c.op_types
    if k == ConstraintKind.TIME_WINDOW:
        return _daily_window_contains(c.window_start, c.window_end, _time_of_day(op.timestamp))
    if k == ConstraintKind.DESTINATION_ALLOWLIST:
        return op.destination is None or op.destination in c.destinations
    raise MalformedConstraint(f"unknown kind {k}")


def eval_trigger(
    e: EscalationTrigger,
    op: Operation,
    history: Sequence[Operation],
    constraints: Sequence[Constraint],
) -> bool:
    """True when the trigger fires. Pure; raises DanglingReference."""
    e.validate()
    k = e.kind
    if k == TriggerKind.THRESHOLD:
        ref = next((c for c in constraints if c.constraint_id == e.constraint_id), None)
        if ref is None or ref.kind != ConstraintKind.AGGREGATE_LIMIT_WINDOWED:
            raise DanglingReference(
                f"{e.trigger_id}: no windowed constraint {e.constraint_id!r}"
            )
        if op.amount is None or not _in_scope(ref.op_types, op):
            return False
        usage_after = windowed_usage(ref, op, history) + op.amount
        if usage_after > ref.max_amount:
            return False  # outright violation, handled by the constraint itself
        return usage_after * PPM >= e.fraction_ppm * ref.max_amount
    if k == TriggerKind.NOVELTY:
        return op.op_type not in e.known_op_types
    if k == TriggerKind.COMPOSITION:
        if not _in_scope(e.op_types, op):
            return False  # only an op that joins the sequence can trip it
        cutoff = op.timestamp - e.window_seconds
        count = 1
        total = op.amount or 0
        for h in history:
            if h.timestamp <= cutoff or h.timestamp > op.timestamp:
                continue
            if _in_scope(e.op_types, h):
                count += 1
                total += h.amount or 0
        if e.max_count is not None and count > e.max_count:
            return True
        if e.max_sum is not None and total > e.max_sum:
            return True
        return False
    raise MalformedConstraint(f"unknown trigger kind {k}")


@dataclass(frozen=True)
class AnomalyConfig:
    """Behavioral-baseline parameters (check 5)."""

    min_samples: int = 10
    k_sigma: float = 4.0
    reset_interval_seconds: int = SECONDS_PER_DAY


def validate_policy(
    constraints: Sequence[Constraint], triggers: Sequence[EscalationTrigger]
) -> None:
    """Validate a full constraint/trigger set, including cross-references."""
    seen: set[str] = set()
    for c in constraints:
        c.validate()
        if c.constraint_id in seen:
            raise MalformedConstraint(f"duplicate constraint_id {c.constraint_id!r}")
        seen.add(c.constraint_id)
    windowed = {
        c.constraint_id
        for c in constraints
        if c.kind == ConstraintKind.AGGREGATE_LIMIT_WINDOWED
    }
    tseen: set[str] = set()
    for t in triggers:
        t.validate()
        if t.trigger_id in tseen:
            raise MalformedConstraint(f"duplicate trigger_id {t.trigger_id!r}")
        tseen.add(t.trigger_id)
        if t.kind == TriggerKind.THRESHOLD and t.constraint_id not in windowed:
            raise DanglingReference(
                f"{t.trigger_id}: no windowed constraint {t.constraint_id!r}"
            )
