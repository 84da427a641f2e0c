"""The six-check boundary engine.

Wraps the decision kernels with everything that has to stay in Python:
certificate compilation (constraint/trigger sets flattened into the packed
kernel arrays, in canonical order), string interning, array growth and
event-log compaction, the cached certificate-signature result, and the
scheduled anomaly-baseline reset.

Check order is fixed: (1) certificate validity, (2) delegation level,
(3) per-operation constraints, (4) windowed aggregate limits, (5) anomaly
against the behavioral baseline, (6) escalation triggers. The signature
is verified once when the engine is built (and again on explicit reload);
after that an evaluation performs zero cryptographic operations — check 1
re-checks only the validity window and agent-hash equality.

A BoundaryEngine instance is single-writer: evaluations for one
certificate must be serialized by the owner (the session). Distinct
engines share nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .certificate import DelegationCertificate, DelegationLevel
from .crypto import CryptoProvider, sha256
from .errors import BadSignature, ClockRegression, TooEarly
from .policy import (
    AnomalyConfig,
    Constraint,
    ConstraintKind,
    EscalationTrigger,
    Operation,
    TriggerKind,
)

AMOUNT_MAX = 1 << 40  # keeps every windowed sum comfortably inside int64

# Which op_types each delegation level permits. FULL admits everything not
# denylisted (check 3 owns denylists). Deployment-configurable.
LEVEL_ALL = "*"
DEFAULT_LEVEL_TABLE: dict[DelegationLevel, frozenset[str] | str] = {
    DelegationLevel.LIMITED: frozenset({"query"}),
    DelegationLevel.GENERAL: frozenset({"query", "trade", "rebalance"}),
    DelegationLevel.FULL: LEVEL_ALL,
}

_EVENT_CAPACITY = 256


class Verdict(IntEnum):
    ALLOWED = 0
    BLOCKED = 1
    ESCALATED = 2


@dataclass(frozen=True, slots=True)
class BoundaryDecision:
    verdict: Verdict
    checks_executed: int
    failed_check: int | None = None
    reason_kind: str | None = None  # certificate | level | constraint | anomaly | trigger
    reason_id: str | None = None
    z: float | None = None
    timeout_seconds: int | None = None  # trigger-specific escalation deadline


_DECISION_ALLOWED = BoundaryDecision(verdict=Verdict.ALLOWED, checks_executed=6)
_CERT_SUBCHECKS = {1: "signature", 2: "temporal", 3: "identity"}


def ordered_constraints(cert: DelegationCertificate) -> list[Constraint]:
    """Constraints in canonical (encoded-bytes) order: the evaluation order."""
    return sorted(cert.constraints, key=lambda c: c.canonical_bytes())


def ordered_triggers(cert: DelegationCertificate) -> list[EscalationTrigger]:
    return sorted(cert.triggers, key=lambda t: t.canonical_bytes())


class CompiledPolicy:
    """A certificate's policy flattened into the packed kernel arrays."""

    def __init__(
        self,
        cert: DelegationCertificate,
        level_table: Mapping[DelegationLevel, frozenset[str] | str] | None = None,
        min_samples: int = 10,
    ):
        self.cert = cert
        table = dict(DEFAULT_LEVEL_TABLE)
        if level_table:
            table.update(level_table)
        level_types = table[cert.level]
        level_all = 1 if level_types == LEVEL_ALL else 0

        all_constraints = ordered_constraints(cert)
        self.per_op = [
            c for c in all_constraints if c.kind != ConstraintKind.AGGREGATE_LIMIT_WINDOWED
        ]
        self.windowed = [
            c for c in all_constraints if c.kind == ConstraintKind.AGGREGATE_LIMIT_WINDOWED
        ]
        self.triggers = ordered_triggers(cert)
        windowed_index = {c.constraint_id: i for i, c in enumerate(self.windowed)}

        # seed vocabulary: every string any certificate set can mention
        vocab: dict[str, int] = {}

        def intern(s: str) -> int:
            if s not in vocab:
                vocab[s] = len(vocab)
            return vocab[s]

        if level_all == 0:
            for s in sorted(level_types):
                intern(s)
        for c in all_constraints:
            for s in sorted(c.op_types) + sorted(c.assets) + sorted(c.destinations):
                intern(s)
        for t in self.triggers:
            for s in sorted(t.known_op_types) + sorted(t.op_types):
                intern(s)
        self.vocab = vocab
        self.vocab_n = len(vocab)

        n3, n4, nt = len(self.per_op), len(self.windowed), len(self.triggers)
        self.n3, self.n4, self.nt = n3, n4, nt

        H = kernels.H_LEN
        pol = np.zeros(H + 6 * n3 + 4 * n4 + 7 * nt, dtype=np.int64)
        pol[kernels.H_T_ISSUE] = cert.t_issue
        pol[kernels.H_T_EXPIRE] = cert.t_expire
        pol[kernels.H_VOCAB] = self.vocab_n
        pol[kernels.H_LEVEL_ALL] = level_all
        pol[kernels.H_N3] = n3
        pol[kernels.H_N4] = n4
        pol[kernels.H_NT] = nt
        pol[kernels.H_MIN_SAMPLES] = min_samples

        width = max(self.vocab_n, 1)
        masks = np.zeros((1 + n3 + n4 + 2 * nt, width), dtype=np.bool_)
        if level_all == 0:
            for s in level_types:
                masks[0, vocab[s]] = True

        def fill(row: int, values: frozenset[str]) -> None:
            for s in values:
                masks[row, vocab[s]] = True

        o3 = H
        for i, c in enumerate(self.per_op):
            pol[o3 + i] = int(c.kind)
            pol[o3 + n3 + i] = int(c.action)
            pol[o3 + 2 * n3 + i] = c.max_amount or 0
            pol[o3 + 3 * n3 + i] = c.window_start if c.window_start is not None else -1
            pol[o3 + 4 * n3 + i] = c.window_end if c.window_end is not None else -1
            if c.kind == ConstraintKind.AMOUNT_LIMIT_PER_OP:
                fill(1 + i, c.op_types)
                pol[o3 + 5 * n3 + i] = 0 if c.op_types else 1
            elif c.kind in (ConstraintKind.ASSET_ALLOWLIST, ConstraintKind.ASSET_DENYLIST):
                fill(1 + i, c.assets)
            elif c.kind == ConstraintKind.OP_TYPE_DENYLIST:
                fill(1 + i, c.op_types)
            elif c.kind == ConstraintKind.DESTINATION_ALLOWLIST:
                fill(1 + i, c.destinations)

        o4 = o3 + 6 * n3
        for i, c in enumerate(self.windowed):
            pol[o4 + i] = c.max_amount
            pol[o4 + n4 + i] = c.window_seconds
            pol[o4 + 2 * n4 + i] = int(c.action)
            fill(1 + n3 + i, c.op_types)
            pol[o4 + 3 * n4 + i] = 0 if c.op_types else 1

        ot = o4 + 4 * n4
        for j, t in enumerate(self.triggers):
            pol[ot + j] = int(t.kind)
            if t.kind == TriggerKind.THRESHOLD:
                pol[ot + nt + j] = windowed_index[t.constraint_id]
                pol[ot + 2 * nt + j] = t.fraction_ppm
            elif t.kind == TriggerKind.NOVELTY:
                fill(1 + n3 + n4 + j, t.known_op_types)
            elif t.kind == TriggerKind.COMPOSITION:
                pol[ot + 3 * nt + j] = t.window_seconds
                pol[ot + 4 * nt + j] = t.max_count if t.max_count is not None else -1
                pol[ot + 5 * nt + j] = t.max_sum if t.max_sum is not None else -1
                fill(1 + n3 + n4 + nt + j, t.op_types)
                pol[ot + 6 * nt + j] = 0 if t.op_types else 1

        self.pol = pol
        self.masks = masks
        self.is_composition = [t.kind == TriggerKind.COMPOSITION for t in self.triggers]
        self.max_window = max(
            [c.window_seconds for c in self.windowed]
            + [t.window_seconds for t in self.triggers
               if t.kind == TriggerKind.COMPOSITION],
            default=0,
        )

    def type_in_c4_scope(self, row: int, type_id: int) -> bool:
        if self.pol[kernels.H_LEN + 6 * self.n3 + 3 * self.n4 + row] == 1:
            return True
        return type_id < self.vocab_n and bool(self.masks[1 + self.n3 + row, type_id])

    def type_in_comp_scope(self, row: int, type_id: int) -> bool:
        ot = kernels.H_LEN + 6 * self.n3 + 4 * self.n4
        if self.pol[ot + 6 * self.nt + row] == 1:
            return True
        return type_id < self.vocab_n and bool(
            self.masks[1 + self.n3 + self.n4 + self.nt + row, type_id]
        )


class BoundaryEngine:
    """Per-session evaluation state for one certificate."""

    def __init__(
        self,
        cert: DelegationCertificate,
        provider: CryptoProvider,
        now: int,
        level_table: Mapping[DelegationLevel, frozenset[str] | str] | None = None,
        anomaly: AnomalyConfig | None = None,
        on_baseline_reset: Callable[[int], None] | None = None,
    ):
        self.cert = cert
        self.provider = provider
        self.anomaly = anomaly or AnomalyConfig()
        self.on_baseline_reset = on_baseline_reset
        self.policy = CompiledPolicy(cert, level_table, self.anomaly.min_samples)
        self._sig_ok = 0
        self.reload_certificate()

        # runtime intern table extends the compile-time vocabulary
        self._intern: dict[str, int] = dict(self.policy.vocab)

        cap = _EVENT_CAPACITY
        self._ev_ts = np.zeros(cap, dtype=np.int64)
        self._ev_type = np.zeros(cap, dtype=np.int64)
        self._ev_amount = np.zeros(cap, dtype=np.int64)
        self._ev_len = np.zeros(1, dtype=np.int64)
        self._wstate = np.zeros(2 * self.policy.n4 + 3 * self.policy.nt, dtype=np.int64)

        tcap = max(len(self._intern), 1) + 8
        self._b_count = np.zeros(tcap, dtype=np.int64)
        self._b_stats = np.zeros((2, tcap), dtype=np.float64)

        self.baseline_established_at = now
        self._baseline_deadline = now + self.anomaly.reset_interval_seconds
        self.last_op_timestamp = -(1 << 62)
        self._k_sigma = float(self.anomaly.k_sigma)
        self._pol = self.policy.pol
        self._masks = self.policy.masks
        self._agent_hash = cert.agent_hash

    # -- certificate cache -------------------------------------------------

    def reload_certificate(self) -> None:
        """Full signature verification; the result is cached for the hot path."""
        payload = sha256(self.cert.canonical)
        ok = self.provider.verify(
            self.cert.principal_pubkey, self.cert.suite_id, payload, self.cert.signature
        )
        if not ok:
            self._sig_ok = 0
            raise BadSignature(f"certificate {self.cert.cert_id} signature invalid")
        self._sig_ok = 1

    # -- interning / capacity ----------------------------------------------

    def _intern_id(self, s: str) -> int:
        table = self._intern
        i = table.get(s)
        if i is None:
            i = len(table)
            table[s] = i
            if i >= self._b_count.shape[0]:
                self._grow_baseline(i + 1)
        return i

    def _grow_baseline(self, need: int) -> None:
        new = max(need, 2 * self._b_count.shape[0])
        fresh_count = np.zeros(new, dtype=np.int64)
        fresh_count[: self._b_count.shape[0]] = self._b_count
        fresh_stats = np.zeros((2, new), dtype=np.float64)
        fresh_stats[:, : self._b_stats.shape[1]] = self._b_stats
        self._b_count = fresh_count
        self._b_stats = fresh_stats

    def _comp_heads(self) -> list[int]:
        n4, nt = self.policy.n4, self.policy.nt
        return [
            int(self._wstate[2 * n4 + 2 * nt + j])
            for j in range(nt)
            if self.policy.is_composition[j]
        ]

    def _ensure_event_room(self) -> None:
        n = int(self._ev_len[0])
        if n + 1 <= self._ev_ts.shape[0]:
            return
        n4, nt = self.policy.n4, self.policy.nt
        heads = self._comp_heads()
        if n4:
            heads.append(int(self._wstate[n4: 2 * n4].min()))
        shift = min(heads) if heads else n
        if shift > 0:
            for name in ("_ev_ts", "_ev_type", "_ev_amount"):
                arr = getattr(self, name)
                arr[: n - shift] = arr[shift:n].copy()
            self._ev_len[0] = n - shift
            self._wstate[n4: 2 * n4] -= shift
            for j in range(nt):
                if self.policy.is_composition[j]:
                    self._wstate[2 * n4 + 2 * nt + j] -= shift
        else:
            new_cap = 2 * self._ev_ts.shape[0]
            for name in ("_ev_ts", "_ev_type", "_ev_amount"):
                old = getattr(self, name)
                fresh = np.zeros(new_cap, dtype=np.int64)
                fresh[:n] = old[:n]
                setattr(self, name, fresh)

    # -- baseline reset ------------------------------------------------------

    def reset_baseline(self, now: int, force: bool = False) -> None:
        if not force and now < self._baseline_deadline:
            raise TooEarly(f"baseline reset due at {self._baseline_deadline}, now {now}")
        self._b_count[:] = 0
        self._b_stats[:] = 0.0
        self.baseline_established_at = now
        self._baseline_deadline = now + self.anomaly.reset_interval_seconds
        if self.on_baseline_reset is not None:
            self.on_baseline_reset(now)

    def baseline_stats(self, op_type: str) -> tuple[int, float, float]:
        """(count, mean, population stddev) for one op_type."""
        i = self._intern.get(op_type)
        if i is None or i >= self._b_count.shape[0] or self._b_count[i] == 0:
            return 0, 0.0, 0.0
        n = int(self._b_count[i])
        var = float(self._b_stats[1, i]) / n
        return n, float(self._b_stats[0, i]), var ** 0.5

    # -- evaluation ----------------------------------------------------------

    def evaluate(
        self,
        op: Operation,
        now: int,
        presented_agent_hash: bytes,
        commit: bool = True,
    ) -> BoundaryDecision:
        ts = op.timestamp
        if ts < self.last_op_timestamp:
            raise ClockRegression(
                f"op timestamp {ts} precedes session watermark {self.last_op_timestamp}"
            )
        amount = op.amount
        if amount is None:
            has_amount = amount = 0
        else:
            if not 0 <= amount <= AMOUNT_MAX:
                raise ValueError(f"amount {amount} outside [0, 2^40]")
            has_amount = 1
        if now >= self._baseline_deadline:
            self.reset_baseline(now, force=True)
        if self._ev_len[0] + 1 > self._ev_ts.shape[0]:
            self._ensure_event_room()
        intern = self._intern_id
        type_id = intern(op.op_type)
        asset_id = intern(op.asset) if op.asset is not None else -1
        dest_id = intern(op.destination) if op.destination is not None else -1
        identity_ok = 1 if presented_agent_hash == self._agent_hash else 0

        verdict, failed, cat, idx, checks, z = kernels.decide(
            now, ts, type_id, has_amount, amount, asset_id, dest_id,
            self._sig_ok, identity_ok, 1 if commit else 0, self._k_sigma,
            self._pol, self._masks,
            self._ev_ts, self._ev_type, self._ev_amount, self._ev_len,
            self._wstate, self._b_count, self._b_stats,
        )
        self.last_op_timestamp = ts
        if cat == kernels.CAT_NONE:
            return _DECISION_ALLOWED
        return self._to_decision(op, verdict, failed, cat, idx, checks, z)

    def _to_decision(self, op, verdict, failed, cat, idx, checks, z) -> BoundaryDecision:
        verdict, failed, cat, idx, checks = (
            int(verdict), int(failed), int(cat), int(idx), int(checks),
        )
        reason_kind = reason_id = None
        timeout = None
        zval = None
        if cat == kernels.CAT_CERT:
            reason_kind, reason_id = "certificate", _CERT_SUBCHECKS[idx]
        elif cat == kernels.CAT_LEVEL:
            reason_kind, reason_id = "level", op.op_type
        elif cat == kernels.CAT_CONSTRAINT:
            reason_kind = "constraint"
            if idx >= kernels.WINDOWED_BASE:
                reason_id = self.policy.windowed[idx - kernels.WINDOWED_BASE].constraint_id
            else:
                reason_id = self.policy.per_op[idx].constraint_id
        elif cat == kernels.CAT_ANOMALY:
            reason_kind, reason_id, zval = "anomaly", op.op_type, float(z)
        elif cat == kernels.CAT_TRIGGER:
            trig = self.policy.triggers[idx]
            reason_kind, reason_id = "trigger", trig.trigger_id
            timeout = trig.timeout_seconds
        return BoundaryDecision(
            verdict=Verdict(verdict),
            checks_executed=checks,
            failed_check=failed if verdict == kernels.BLOCKED else None,
            reason_kind=reason_kind,
            reason_id=reason_id,
            z=zval,
            timeout_seconds=timeout,
        )

    # -- commit of approved escalations ---------------------------------------

    def commit_approved(self, op: Operation) -> None:
        """Fold an approved (previously escalated) operation into the aggregates.

        Approved operations keep their original timestamps; if later traffic
        already committed, the event is spliced into timestamp order.
        """
        amount = op.amount
        has_amount = 0 if amount is None else 1
        amt = amount or 0
        self._ensure_event_room()
        type_id = self._intern_id(op.op_type)
        n = int(self._ev_len[0])
        if n == 0 or op.timestamp >= self._ev_ts[n - 1]:
            kernels.commit(
                op.timestamp, type_id, amt, has_amount, self._pol, self._masks,
                self._ev_ts, self._ev_type, self._ev_amount, self._ev_len,
                self._wstate, self._b_count, self._b_stats,
            )
            return
        self._splice_commit(op.timestamp, type_id, amt, has_amount)

    def _splice_commit(self, ts: int, type_id: int, amt: int, has_amount: int) -> None:
        n = int(self._ev_len[0])
        p = int(np.searchsorted(self._ev_ts[:n], ts, side="right"))
        for name in ("_ev_ts", "_ev_type", "_ev_amount"):
            arr = getattr(self, name)
            arr[p + 1 : n + 1] = arr[p:n].copy()
        self._ev_ts[p] = ts
        self._ev_type[p] = type_id
        self._ev_amount[p] = amt
        self._ev_len[0] = n + 1
        pol = self.policy
        n4, nt = pol.n4, pol.nt
        w = self._wstate
        for i in range(n4):
            if p < w[n4 + i]:
                w[n4 + i] += 1  # splice landed in the already-expired region
            elif pol.type_in_c4_scope(i, type_id):
                w[i] += amt
        for j in range(nt):
            if not pol.is_composition[j]:
                continue
            if p < w[2 * n4 + 2 * nt + j]:
                w[2 * n4 + 2 * nt + j] += 1
            elif pol.type_in_comp_scope(j, type_id):
                w[2 * n4 + j] += 1
                w[2 * n4 + nt + j] += amt
        if has_amount == 1:
            cnt = int(self._b_count[type_id]) + 1
            delta = amt - self._b_stats[0, type_id]
            mean = self._b_stats[0, type_id] + delta / cnt
            self._b_count[type_id] = cnt
            self._b_stats[0, type_id] = mean
            self._b_stats[1, type_id] = self._b_stats[1, type_id] + delta * (amt - mean)

    # -- introspection ----------------------------------------------------------

    def committed_count(self) -> int:
        return int(self._ev_len[0])

    def window_usage(self, constraint_id: str, at_ts: int) -> int:
        """Current windowed sum for one aggregate constraint (test hook)."""
        for i, c in enumerate(self.policy.windowed):
            if c.constraint_id == constraint_id:
                kernels.advance(
                    at_ts, self._pol, self._masks,
                    self._ev_ts, self._ev_type, self._ev_amount, self._ev_len,
                    self._wstate,
                )
                return int(self._wstate[i])
        raise KeyError(constraint_id)
