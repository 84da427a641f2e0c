from __future__ import annotations

import random
import statistics

import pytest

from aith.crypto import sha256
from aith.engine import AMOUNT_MAX, BoundaryEngine, Verdict
from aith.errors import ClockRegression, TooEarly
from aith.policy import (
    AnomalyConfig,
    Constraint,
    ConstraintAction,
    ConstraintKind,
    EscalationTrigger,
    Operation,
)

from .conftest import AGENT_HASH, T_ISSUE
from .reference import RefSession, first_failure_index

WRONG_HASH = sha256(b"some other model")


def op(ts, op_type="trade", amount=None, asset=None, dest=None, op_id=None):
    return Operation(op_id=op_id or f"op-{ts}-{op_type}-{amount}", op_type=op_type,
                     timestamp=ts, amount=amount, asset=asset, destination=dest)


def make_engine(provider, cert, now=T_ISSUE, anomaly=None, level_table=None):
    return BoundaryEngine(
        cert, provider, now, level_table=level_table,
        anomaly=anomaly or AnomalyConfig(reset_interval_seconds=10**9),
    )


@pytest.fixture
def trade_cert(cert_factory):
    return cert_factory(
        constraints=(
            Constraint("per-op", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                       ConstraintAction.BLOCK, max_amount=1_000_000),
            Constraint("agg-hour", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                       ConstraintAction.BLOCK, max_amount=2_000_000,
                       window_seconds=3600),
            Constraint("deny", ConstraintKind.OP_TYPE_DENYLIST,
                       ConstraintAction.BLOCK,
                       op_types=frozenset({"external_transfer_unverified"})),
        ),
        triggers=(
            EscalationTrigger.novelty("nov", ("query", "trade")),
        ),
    )


class TestPipelineExamples:
    def test_in_bounds_trade_allowed_all_checks(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        d = eng.evaluate(op(T_ISSUE + 1, amount=300_000), T_ISSUE + 1, AGENT_HASH)
        assert d.verdict == Verdict.ALLOWED
        assert d.checks_executed == 6
        assert d.failed_check is None

    def test_expired_cert_short_circuits_at_1(self, provider, cert_factory):
        cert = cert_factory(t_expire=T_ISSUE + 100)
        eng = make_engine(provider, cert)
        d = eng.evaluate(op(T_ISSUE + 200, amount=1), T_ISSUE + 200, AGENT_HASH)
        assert (d.verdict, d.failed_check, d.checks_executed) == (Verdict.BLOCKED, 1, 1)
        assert d.reason_id == "temporal"

    def test_identity_mismatch_blocked_at_1(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        d = eng.evaluate(op(T_ISSUE + 1, amount=1), T_ISSUE + 1, WRONG_HASH)
        assert (d.failed_check, d.reason_id) == (1, "identity")

    def test_level_gate_blocks_at_2(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        d = eng.evaluate(op(T_ISSUE + 1, op_type="launch_missiles"),
                         T_ISSUE + 1, AGENT_HASH)
        assert (d.verdict, d.failed_check, d.checks_executed) == (Verdict.BLOCKED, 2, 2)

    def test_denylisted_type_blocked_at_3(self, provider, trade_cert, cert_factory):
        # the denylisted type must pass the level gate to reach check 3
        table = {trade_cert.level: frozenset(
            {"query", "trade", "external_transfer_unverified"})}
        eng = make_engine(provider, trade_cert, level_table=table)
        d = eng.evaluate(op(T_ISSUE + 1, op_type="external_transfer_unverified"),
                         T_ISSUE + 1, AGENT_HASH)
        assert (d.verdict, d.failed_check, d.checks_executed) == (Verdict.BLOCKED, 3, 3)
        assert d.reason_id == "deny"

    def test_aggregate_blocks_fourth_trade_at_4(self, provider, trade_cert):
        """Naive-sum oracle: 3 x $6,000 pass, the 4th breaks $20,000/hr."""
        eng = make_engine(provider, trade_cert)
        ref = RefSession(trade_cert, provider, T_ISSUE)
        verdicts = []
        for i in range(4):
            o = op(T_ISSUE + 10 * (i + 1), amount=600_000, op_id=f"t{i}")
            d = eng.evaluate(o, o.timestamp, AGENT_HASH)
            r = ref.decide(o, o.timestamp, AGENT_HASH)
            assert d.verdict.name == r.verdict
            verdicts.append(d)
        assert [d.verdict for d in verdicts[:3]] == [Verdict.ALLOWED] * 3
        assert verdicts[3].verdict == Verdict.BLOCKED
        assert verdicts[3].failed_check == 4
        assert verdicts[3].reason_id == "agg-hour"

    def test_novel_type_escalates(self, provider, trade_cert, cert_factory):
        table = {trade_cert.level: frozenset({"query", "trade", "options_trade"})}
        eng = make_engine(provider, trade_cert, level_table=table)
        d = eng.evaluate(op(T_ISSUE + 1, op_type="options_trade", amount=100),
                         T_ISSUE + 1, AGENT_HASH)
        assert d.verdict == Verdict.ESCALATED
        assert (d.reason_kind, d.reason_id) == ("trigger", "nov")
        assert d.checks_executed == 6
        assert d.failed_check is None

    def test_escalate_action_constraint(self, provider, cert_factory):
        cert = cert_factory(
            constraints=(
                Constraint("soft-lim", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                           ConstraintAction.ESCALATE, max_amount=1000),
            )
        )
        eng = make_engine(provider, cert)
        d = eng.evaluate(op(T_ISSUE + 1, amount=5000), T_ISSUE + 1, AGENT_HASH)
        assert d.verdict == Verdict.ESCALATED
        assert (d.reason_kind, d.reason_id) == ("constraint", "soft-lim")

    def test_block_dominates_escalate(self, provider, cert_factory):
        """An escalate-signal never outruns a later BLOCK violation."""
        cert = cert_factory(
            constraints=(
                Constraint("soft", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                           ConstraintAction.ESCALATE, max_amount=1),
                Constraint("hard-agg", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                           ConstraintAction.BLOCK, max_amount=10,
                           window_seconds=100),
            )
        )
        eng = make_engine(provider, cert)
        d = eng.evaluate(op(T_ISSUE + 1, amount=50), T_ISSUE + 1, AGENT_HASH)
        assert d.verdict == Verdict.BLOCKED
        assert d.failed_check == 4
        assert d.reason_id == "hard-agg"


class TestAnomaly:
    def _seeded_engine(self, provider, cert_factory, amounts, k_sigma=4.0,
                       min_samples=10):
        cert = cert_factory()
        eng = make_engine(
            provider, cert,
            anomaly=AnomalyConfig(min_samples=min_samples, k_sigma=k_sigma,
                                  reset_interval_seconds=10**9),
        )
        for i, a in enumerate(amounts):
            d = eng.evaluate(op(T_ISSUE + i + 1, amount=a, op_id=f"seed{i}"),
                             T_ISSUE + i + 1, AGENT_HASH)
            assert d.verdict == Verdict.ALLOWED
        return eng

    def test_within_four_sigma_passes(self, provider, cert_factory):
        # alternating 800/1200: mean 1000, population stddev 200
        eng = self._seeded_engine(provider, cert_factory, [800, 1200] * 5)
        d = eng.evaluate(op(T_ISSUE + 100, amount=1100), T_ISSUE + 100, AGENT_HASH)
        assert d.verdict == Verdict.ALLOWED

    def test_flag_z_five(self, provider, cert_factory):
        """Statistics oracle: mean 1000, stddev 200, amount 2000 -> z = 5."""
        samples = [800, 1200] * 5
        assert statistics.fmean(samples) == 1000
        assert statistics.pstdev(samples) == 200
        expected_z = abs(2000 - 1000) / 200
        eng = self._seeded_engine(provider, cert_factory, samples)
        d = eng.evaluate(op(T_ISSUE + 100, amount=2000), T_ISSUE + 100, AGENT_HASH)
        assert d.verdict == Verdict.ESCALATED
        assert d.reason_kind == "anomaly"
        assert d.z == pytest.approx(expected_z, abs=1e-9)
        assert d.z == pytest.approx(5.0)

    def test_cold_start_defers(self, provider, cert_factory):
        eng = self._seeded_engine(provider, cert_factory, [1000, 1001, 999])
        d = eng.evaluate(op(T_ISSUE + 100, amount=10**9), T_ISSUE + 100, AGENT_HASH)
        assert d.verdict == Verdict.ALLOWED  # 3 samples < min_samples 10

    def test_stats_introspection(self, provider, cert_factory):
        eng = self._seeded_engine(provider, cert_factory, [800, 1200] * 5)
        count, mean, std = eng.baseline_stats("trade")
        assert count == 10
        assert mean == pytest.approx(1000)
        assert std == pytest.approx(200)


class TestBaselineReset:
    def test_reset_zeroes_stats(self, provider, cert_factory):
        cert = cert_factory()
        eng = make_engine(provider, cert,
                          anomaly=AnomalyConfig(reset_interval_seconds=1000))
        for i in range(12):
            eng.evaluate(op(T_ISSUE + i, amount=1000, op_id=f"s{i}"),
                         T_ISSUE + i, AGENT_HASH)
        assert eng.baseline_stats("trade")[0] == 12
        eng.reset_baseline(T_ISSUE + 1000)
        assert eng.baseline_stats("trade") == (0, 0.0, 0.0)

    def test_reset_before_interval_too_early(self, provider, cert_factory):
        eng = make_engine(provider, cert_factory(),
                          anomaly=AnomalyConfig(reset_interval_seconds=1000))
        with pytest.raises(TooEarly):
            eng.reset_baseline(T_ISSUE + 999)

    def test_auto_reset_fires_on_schedule(self, provider, cert_factory):
        resets = []
        eng = BoundaryEngine(
            cert_factory(), provider, T_ISSUE,
            anomaly=AnomalyConfig(reset_interval_seconds=100),
            on_baseline_reset=resets.append,
        )
        eng.evaluate(op(T_ISSUE + 1, amount=10), T_ISSUE + 1, AGENT_HASH)
        assert resets == []
        eng.evaluate(op(T_ISSUE + 150, amount=10), T_ISSUE + 150, AGENT_HASH)
        assert resets == [T_ISSUE + 150]


class TestProtocolGuards:
    def test_clock_regression(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        eng.evaluate(op(T_ISSUE + 100, amount=1), T_ISSUE + 100, AGENT_HASH)
        with pytest.raises(ClockRegression):
            eng.evaluate(op(T_ISSUE + 50, amount=1), T_ISSUE + 100, AGENT_HASH)

    def test_equal_timestamps_fine(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        eng.evaluate(op(T_ISSUE + 100, amount=1, op_id="a"), T_ISSUE + 100, AGENT_HASH)
        d = eng.evaluate(op(T_ISSUE + 100, amount=2, op_id="b"), T_ISSUE + 100,
                         AGENT_HASH)
        assert d.verdict == Verdict.ALLOWED

    def test_amount_bound(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        with pytest.raises(ValueError):
            eng.evaluate(op(T_ISSUE + 1, amount=AMOUNT_MAX + 1), T_ISSUE + 1,
                         AGENT_HASH)
        with pytest.raises(ValueError):
            eng.evaluate(op(T_ISSUE + 1, amount=-5), T_ISSUE + 1, AGENT_HASH)

    def test_zero_crypto_on_hot_path(self, provider, trade_cert):
        eng = make_engine(provider, trade_cert)
        provider.reset_counters()
        for i in range(1000):
            eng.evaluate(op(T_ISSUE + 1 + i, amount=100, op_id=f"h{i}"),
                         T_ISSUE + 1 + i, AGENT_HASH)
        assert provider.sign_count == 0
        assert provider.verify_count == 0


# -- randomized differential suite: engine vs independent oracle ------------

OP_TYPES = ("query", "trade", "rebalance", "transfer", "wire", "custody_move")
ASSETS = (None, "usd", "eur", "btc")
DESTS = (None, "acct-1", "acct-2", "acct-x")


def random_policy(rng: random.Random):
    constraints = []
    n_window = rng.randint(0, 2)
    for i in range(n_window):
        constraints.append(Constraint(
            f"agg{i}", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
            rng.choice((ConstraintAction.BLOCK, ConstraintAction.ESCALATE)),
            max_amount=rng.randint(1000, 50_000),
            window_seconds=rng.choice((60, 300, 3600)),
            op_types=frozenset(rng.sample(OP_TYPES, rng.randint(0, 2))),
        ))
    for i in range(rng.randint(0, 3)):
        kind = rng.choice((
            ConstraintKind.AMOUNT_LIMIT_PER_OP,
            ConstraintKind.OP_TYPE_DENYLIST,
            ConstraintKind.ASSET_ALLOWLIST,
            ConstraintKind.ASSET_DENYLIST,
            ConstraintKind.DESTINATION_ALLOWLIST,
            ConstraintKind.TIME_WINDOW,
        ))
        action = rng.choice((ConstraintAction.BLOCK, ConstraintAction.ESCALATE))
        if kind == ConstraintKind.AMOUNT_LIMIT_PER_OP:
            c = Constraint(f"c{i}", kind, action,
                           max_amount=rng.randint(100, 20_000),
                           op_types=frozenset(rng.sample(OP_TYPES, rng.randint(0, 2))))
        elif kind == ConstraintKind.OP_TYPE_DENYLIST:
            c = Constraint(f"c{i}", kind, action,
                           op_types=frozenset(rng.sample(OP_TYPES, rng.randint(1, 3))))
        elif kind in (ConstraintKind.ASSET_ALLOWLIST, ConstraintKind.ASSET_DENYLIST):
            c = Constraint(f"c{i}", kind, action,
                           assets=frozenset(rng.sample(("usd", "eur", "btc"),
                                                       rng.randint(1, 2))))
        elif kind == ConstraintKind.DESTINATION_ALLOWLIST:
            c = Constraint(f"c{i}", kind, action,
                           destinations=frozenset(rng.sample(
                               ("acct-1", "acct-2"), rng.randint(1, 2))))
        else:
            start = rng.randrange(0, 86_400)
            end = rng.randrange(0, 86_400)
            if start == end:
                end = (end + 3600) % 86_400
            c = Constraint(f"c{i}", kind, action, window_start=start,
                           window_end=end)
        constraints.append(c)

    triggers = []
    windowed_ids = [c.constraint_id for c in constraints
                    if c.kind == ConstraintKind.AGGREGATE_LIMIT_WINDOWED]
    if windowed_ids and rng.random() < 0.7:
        triggers.append(EscalationTrigger.threshold(
            "th", rng.choice(windowed_ids), rng.uniform(0.3, 0.95)))
    if rng.random() < 0.7:
        triggers.append(EscalationTrigger.novelty(
            "nv", rng.sample(OP_TYPES, rng.randint(1, 4))))
    if rng.random() < 0.5:
        triggers.append(EscalationTrigger.composition(
            "cp", window_seconds=rng.choice((60, 600)),
            op_types=frozenset(rng.sample(OP_TYPES, rng.randint(0, 2))),
            max_count=rng.choice((None, rng.randint(1, 8))),
            max_sum=rng.choice((None, rng.randint(500, 30_000))),
        ))
    if triggers and triggers[-1].kind.name == "COMPOSITION":
        t = triggers[-1]
        if t.max_count is None and t.max_sum is None:
            triggers[-1] = EscalationTrigger.composition(
                "cp", window_seconds=t.window_seconds, op_types=t.op_types,
                max_count=3)
    return tuple(constraints), tuple(triggers)


def random_op(rng: random.Random, ts: int, i: int) -> Operation:
    return Operation(
        op_id=f"r{i}",
        op_type=rng.choice(OP_TYPES),
        timestamp=ts,
        amount=rng.choice((None, rng.randint(0, 25_000))),
        asset=rng.choice(ASSETS),
        destination=rng.choice(DESTS),
    )


@pytest.mark.parametrize("seed", range(12))
def test_differential_vs_oracle(provider, cert_factory, seed):
    """Engine decisions must match the naive full-history oracle exactly,
    including commits of approved escalations landing out of order."""
    rng = random.Random(1000 + seed)
    constraints, triggers = random_policy(rng)
    cert = cert_factory(constraints=constraints, triggers=triggers)
    level_table = {cert.level: frozenset(OP_TYPES)}
    anomaly = AnomalyConfig(min_samples=8, k_sigma=3.0,
                            reset_interval_seconds=rng.choice((3600, 10**9)))
    eng = BoundaryEngine(cert, provider, T_ISSUE, level_table=level_table,
                         anomaly=anomaly)
    ref = RefSession(cert, provider, T_ISSUE, level_table=level_table,
                     anomaly=anomaly)

    parked: list[Operation] = []
    ts = T_ISSUE
    for i in range(400):
        ts += rng.randint(0, 120)
        o = random_op(rng, ts, i)
        d = eng.evaluate(o, ts, AGENT_HASH)
        r = ref.decide(o, ts, AGENT_HASH, commit=False)
        context = f"seed={seed} i={i} op={o}"
        assert d.verdict.name == r.verdict, (context, d, r)
        assert d.checks_executed == r.checks_executed, (context, d, r)
        assert d.failed_check == r.failed_check, (context, d, r)
        assert (d.reason_kind, d.reason_id) == (r.reason_kind, r.reason_id), \
            (context, d, r)
        assert d.checks_executed == first_failure_index(r), (context, d, r)
        if d.verdict == Verdict.ALLOWED:
            ref.commit(o)
        elif d.verdict == Verdict.ESCALATED:
            parked.append(o)
        # approvals land late: commit a parked op after newer traffic
        if parked and rng.random() < 0.4:
            approved = parked.pop(rng.randrange(len(parked)))
            eng.commit_approved(approved)
            ref.commit(approved)


def test_short_circuit_property_randomized(provider, cert_factory):
    """checks_executed always equals the first blocking check index (or 6)."""
    rng = random.Random(777)
    for round_ in range(30):
        constraints, triggers = random_policy(rng)
        cert = cert_factory(constraints=constraints, triggers=triggers,
                            t_expire=T_ISSUE + rng.randint(100, 10**6))
        eng = BoundaryEngine(cert, provider, T_ISSUE,
                             level_table={cert.level: frozenset(OP_TYPES[:3])},
                             anomaly=AnomalyConfig(reset_interval_seconds=10**9))
        ref = RefSession(cert, provider, T_ISSUE,
                         level_table={cert.level: frozenset(OP_TYPES[:3])},
                         anomaly=AnomalyConfig(reset_interval_seconds=10**9))
        ts = T_ISSUE
        for i in range(60):
            ts += rng.randint(0, 5000)
            o = random_op(rng, ts, i)
            presented = AGENT_HASH if rng.random() < 0.9 else WRONG_HASH
            d = eng.evaluate(o, ts, presented)
            r = ref.decide(o, ts, presented, commit=False)
            assert d.checks_executed == first_failure_index(r)
            if d.verdict == Verdict.BLOCKED:
                assert d.checks_executed == d.failed_check
            else:
                assert d.checks_executed == 6
            if d.verdict == Verdict.ALLOWED:
                ref.commit(o)


def test_window_equivalence_bulk(provider, cert_factory):
    """Incremental sliding windows equal naive recomputation (10^4 ops)."""
    rng = random.Random(31337)
    cert = cert_factory(
        constraints=(
            Constraint("agg", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                       ConstraintAction.BLOCK, max_amount=40_000,
                       window_seconds=500,
                       op_types=frozenset({"trade", "wire"})),
            Constraint("agg2", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                       ConstraintAction.BLOCK, max_amount=90_000,
                       window_seconds=3000),
        ),
    )
    level_table = {cert.level: frozenset(OP_TYPES)}
    eng = BoundaryEngine(cert, provider, T_ISSUE, level_table=level_table)
    ref = RefSession(cert, provider, T_ISSUE, level_table=level_table)
    ts = T_ISSUE
    mismatches = 0
    for i in range(10_000):
        ts += rng.randint(0, 40)
        o = random_op(rng, ts, i)
        d = eng.evaluate(o, ts, AGENT_HASH)
        r = ref.decide(o, ts, AGENT_HASH, commit=False)
        mismatches += d.verdict.name != r.verdict
        if d.verdict == Verdict.ALLOWED:
            ref.commit(o)
    assert mismatches == 0


def test_window_usage_introspection(provider, trade_cert):
    eng = make_engine(provider, trade_cert)
    for i, amount in enumerate((100_000, 200_000, 300_000)):
        eng.evaluate(op(T_ISSUE + 10 * (i + 1), amount=amount, op_id=f"u{i}"),
                     T_ISSUE + 10 * (i + 1), AGENT_HASH)
    assert eng.window_usage("agg-hour", T_ISSUE + 40) == 600_000
    # the first event expires an hour after its timestamp
    assert eng.window_usage("agg-hour", T_ISSUE + 10 + 3600) == 500_000
    with pytest.raises(KeyError):
        eng.window_usage("no-such-constraint", T_ISSUE + 40)
