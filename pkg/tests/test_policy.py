from __future__ import annotations

import pytest

from aith.errors import DanglingReference, MalformedConstraint
from aith.policy import (
    Constraint,
    ConstraintAction,
    ConstraintKind,
    EscalationTrigger,
    Operation,
    eval_constraint,
    eval_trigger,
    validate_policy,
    windowed_usage,
)


def op(ts=1000, op_type="trade", amount=None, asset=None, dest=None, op_id=None):
    return Operation(
        op_id=op_id or f"op-{ts}",
        op_type=op_type,
        timestamp=ts,
        amount=amount,
        asset=asset,
        destination=dest,
    )


class TestAmountLimit:
    c = Constraint("lim", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                   ConstraintAction.BLOCK, max_amount=1_000_000)

    def test_over_limit_violates(self):
        # $15,000 against a $10,000 cap: the large-trade band exists to trip this
        assert eval_constraint(self.c, op(amount=1_500_000), [], 1000) is False

    def test_at_limit_satisfies(self):
        assert eval_constraint(self.c, op(amount=1_000_000), [], 1000) is True

    def test_no_amount_satisfies(self):
        assert eval_constraint(self.c, op(op_type="query"), [], 1000) is True

    def test_scoped_to_op_types(self):
        scoped = Constraint("lim2", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                            ConstraintAction.BLOCK, max_amount=100,
                            op_types=frozenset({"trade"}))
        assert eval_constraint(scoped, op(op_type="transfer", amount=500), [], 0) is True
        assert eval_constraint(scoped, op(op_type="trade", amount=500), [], 0) is False


class TestDenylist:
    c = Constraint("deny", ConstraintKind.OP_TYPE_DENYLIST, ConstraintAction.BLOCK,
                   op_types=frozenset({"transfer_external"}))

    def test_non_member_satisfies(self):
        assert eval_constraint(self.c, op(op_type="query"), [], 0) is True

    def test_member_violates(self):
        assert eval_constraint(self.c, op(op_type="transfer_external"), [], 0) is False


class TestAggregateWindow:
    c = Constraint("agg", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                   ConstraintAction.BLOCK, max_amount=2_000_000, window_seconds=3600)

    def test_naive_sum_oracle(self):
        # three prior 6,000 ops + a new 6,000 against a 20,000 cap: 24,000 > cap
        history = [op(ts=t, amount=600_000, op_id=f"h{t}") for t in (100, 200, 300)]
        new = op(ts=400, amount=600_000)
        expected_usage = sum(h.amount for h in history)  # oracle: full re-sum
        assert windowed_usage(self.c, new, history) == expected_usage
        assert eval_constraint(self.c, new, history, 400) is False

    def test_expired_events_leave_window(self):
        # an event at t participates in windows ending in (t, t + window]
        history = [op(ts=100, amount=1_900_000)]
        inside = op(ts=3699, amount=200_000)
        outside = op(ts=3700, amount=200_000)
        assert eval_constraint(self.c, inside, history, 3699) is False
        assert eval_constraint(self.c, outside, history, 3700) is True

    def test_event_time_not_arrival_time(self):
        """The window keys on operation timestamps: replaying with an old
        timestamp cannot dodge the sum already booked at that time."""
        history = [op(ts=5000, amount=1_500_000)]
        backdated = op(ts=5001, amount=600_000)
        assert eval_constraint(self.c, backdated, history, 9999) is False


class TestAssetAndDestination:
    def test_asset_allowlist(self):
        c = Constraint("a", ConstraintKind.ASSET_ALLOWLIST, ConstraintAction.BLOCK,
                       assets=frozenset({"usd", "eur"}))
        assert eval_constraint(c, op(asset="usd"), [], 0) is True
        assert eval_constraint(c, op(asset="btc"), [], 0) is False
        assert eval_constraint(c, op(), [], 0) is True  # no asset -> not bound

    def test_asset_denylist(self):
        c = Constraint("d", ConstraintKind.ASSET_DENYLIST, ConstraintAction.BLOCK,
                       assets=frozenset({"btc"}))
        assert eval_constraint(c, op(asset="btc"), [], 0) is False
        assert eval_constraint(c, op(asset="usd"), [], 0) is True

    def test_destination_allowlist(self):
        c = Constraint("dst", ConstraintKind.DESTINATION_ALLOWLIST,
                       ConstraintAction.BLOCK, destinations=frozenset({"acct-1"}))
        assert eval_constraint(c, op(dest="acct-1"), [], 0) is True
        assert eval_constraint(c, op(dest="acct-9"), [], 0) is False


class TestTimeWindow:
    def test_daytime_window(self):
        c = Constraint("tw", ConstraintKind.TIME_WINDOW, ConstraintAction.BLOCK,
                       window_start=9 * 3600, window_end=17 * 3600)
        assert eval_constraint(c, op(ts=10 * 3600), [], 0) is True
        assert eval_constraint(c, op(ts=18 * 3600), [], 0) is False
        assert eval_constraint(c, op(ts=86_400 + 10 * 3600), [], 0) is True

    def test_overnight_wrap(self):
        c = Constraint("tw", ConstraintKind.TIME_WINDOW, ConstraintAction.BLOCK,
                       window_start=22 * 3600, window_end=2 * 3600)
        assert eval_constraint(c, op(ts=23 * 3600), [], 0) is True
        assert eval_constraint(c, op(ts=1 * 3600), [], 0) is True
        assert eval_constraint(c, op(ts=12 * 3600), [], 0) is False


class TestThresholdTrigger:
    agg = Constraint("agg", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                     ConstraintAction.BLOCK, max_amount=2_000_000,
                     window_seconds=3600)
    t = EscalationTrigger.threshold("th", "agg", 0.8)

    def test_fires_at_threshold(self):
        # usage after op 17,000 >= 0.8 * 20,000 = 16,000
        history = [op(ts=10, amount=1_000_000)]
        assert eval_trigger(self.t, op(ts=20, amount=700_000), history, [self.agg])

    def test_quiet_below_threshold(self):
        history = [op(ts=10, amount=1_000_000)]
        assert not eval_trigger(self.t, op(ts=20, amount=500_000), history, [self.agg])

    def test_quiet_when_outright_violation(self):
        history = [op(ts=10, amount=1_900_000)]
        assert not eval_trigger(self.t, op(ts=20, amount=200_000), history, [self.agg])

    def test_dangling_reference(self):
        with pytest.raises(DanglingReference):
            eval_trigger(self.t, op(amount=1), [], [])


class TestNoveltyTrigger:
    t = EscalationTrigger.novelty("nov", ("query", "trade"))

    def test_known_type_quiet(self):
        assert not eval_trigger(self.t, op(op_type="trade"), [], [])

    def test_unknown_type_fires(self):
        assert eval_trigger(self.t, op(op_type="options_trade"), [], [])


class TestCompositionTrigger:
    t = EscalationTrigger.composition("comp", window_seconds=600,
                                      op_types=("trade",), max_count=5)

    def test_count_oracle_sixth_fires(self):
        history = [op(ts=i * 10, op_type="trade", amount=1, op_id=f"c{i}")
                   for i in range(5)]
        assert eval_trigger(self.t, op(ts=60, op_type="trade", amount=1),
                            history, [])

    def test_fifth_quiet(self):
        history = [op(ts=i * 10, op_type="trade", amount=1, op_id=f"c{i}")
                   for i in range(4)]
        assert not eval_trigger(self.t, op(ts=50, op_type="trade", amount=1),
                                history, [])

    def test_window_expiry(self):
        history = [op(ts=i, op_type="trade", amount=1, op_id=f"c{i}")
                   for i in range(5)]
        assert not eval_trigger(self.t, op(ts=700, op_type="trade", amount=1),
                                history, [])

    def test_max_sum(self):
        t = EscalationTrigger.composition("s", window_seconds=600, max_sum=100)
        history = [op(ts=1, amount=60)]
        assert eval_trigger(t, op(ts=2, amount=50), history, [])
        assert not eval_trigger(t, op(ts=2, amount=40), history, [])


def test_purity_repeated_evaluation():
    c = Constraint("agg", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                   ConstraintAction.BLOCK, max_amount=100, window_seconds=60)
    history = [op(ts=1, amount=50)]
    candidate = op(ts=2, amount=60)
    results = {eval_constraint(c, candidate, history, 2) for _ in range(50)}
    assert results == {False}
    t = EscalationTrigger.novelty("n", ("x",))
    assert {eval_trigger(t, candidate, history, []) for _ in range(50)} == {True}


class TestValidation:
    def test_negative_amount_malformed(self):
        c = Constraint("bad", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                       ConstraintAction.BLOCK, max_amount=-1)
        with pytest.raises(MalformedConstraint):
            c.validate()

    def test_zero_window_malformed(self):
        c = Constraint("bad", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                       ConstraintAction.BLOCK, max_amount=1, window_seconds=0)
        with pytest.raises(MalformedConstraint):
            c.validate()

    def test_empty_set_malformed(self):
        with pytest.raises(MalformedConstraint):
            Constraint("bad", ConstraintKind.ASSET_ALLOWLIST,
                       ConstraintAction.BLOCK).validate()

    def test_threshold_fraction_range(self):
        with pytest.raises(MalformedConstraint):
            EscalationTrigger.threshold("t", "c", 1.5).validate()
        with pytest.raises(MalformedConstraint):
            EscalationTrigger.threshold("t", "c", 0.0).validate()

    def test_duplicate_ids_rejected(self):
        c = Constraint("same", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                       ConstraintAction.BLOCK, max_amount=1)
        with pytest.raises(MalformedConstraint, match="duplicate"):
            validate_policy([c, c], [])

    def test_threshold_needs_windowed_constraint(self):
        per_op = Constraint("x", ConstraintKind.AMOUNT_LIMIT_PER_OP,
                            ConstraintAction.BLOCK, max_amount=1)
        with pytest.raises(DanglingReference):
            validate_policy([per_op], [EscalationTrigger.threshold("t", "x", 0.5)])


def test_constraint_canonical_roundtrip():
    c = Constraint("rt", ConstraintKind.AGGREGATE_LIMIT_WINDOWED,
                   ConstraintAction.ESCALATE, max_amount=12345,
                   window_seconds=999, op_types=frozenset({"a", "b"}))
    assert Constraint.from_bytes(c.canonical_bytes()) == c


def test_trigger_canonical_roundtrip():
    t = EscalationTrigger.composition("rt", window_seconds=60,
                                      op_types=("x",), max_count=3,
                                      timeout_seconds=120)
    assert EscalationTrigger.from_bytes(t.canonical_bytes()) == t


def test_operation_canonical_roundtrip():
    from aith import codec

    o = op(ts=777, op_type="trade", amount=5, asset="usd", dest="acct")
    assert Operation.from_reader(codec.Reader(o.canonical_bytes())) == o
