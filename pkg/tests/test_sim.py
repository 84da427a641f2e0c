from __future__ import annotations

import pytest

from aith.errors import ConfigInvalid
from aith.sim import WorkloadMix, check_cross_tier, run_simulation


def small_mix(**kw):
    defaults = dict(op_count=8000, user_count=80, seed=11)
    defaults.update(kw)
    return WorkloadMix(**defaults)


class TestSimulation:
    def test_conservation_and_chains(self):
        report = run_simulation(small_mix())
        assert report.conserved()
        assert report.rejected == 0
        assert report.chain_verify_ok
        assert report.cross_tier_ok

    def test_deterministic_same_seed(self):
        a = run_simulation(small_mix())
        b = run_simulation(small_mix())
        assert a.chain_heads == b.chain_heads
        assert a.to_dict()["fractions"] == b.to_dict()["fractions"]
        assert a.escalation_reasons == b.escalation_reasons

    def test_different_seed_differs(self):
        a = run_simulation(small_mix())
        b = run_simulation(small_mix(seed=12))
        assert a.chain_heads != b.chain_heads

    def test_all_forbidden_mix_fully_blocked(self):
        mix = small_mix(
            op_count=2000,
            fractions={"query": 0.0, "small": 0.0, "medium": 0.0, "large": 0.0,
                       "transfer": 0.0, "over_limit": 0.0, "forbidden": 1.0},
        )
        report = run_simulation(mix)
        assert report.blocked == 2000
        assert report.allowed == report.escalated == 0

    def test_outcome_bands_move_in_right_direction(self):
        """Small run sanity: check-level breakdown matches the band design."""
        report = run_simulation(small_mix())
        f = report.fractions()
        assert 0.70 < f["allowed"] < 0.88
        assert 0.02 < f["escalated"] < 0.12
        assert 0.08 < f["blocked"] < 0.22
        assert report.per_check_blocked.get("check_3", 0) > 0
        assert report.per_check_blocked.get("check_2", 0) > 0
        assert any(k.startswith("trigger:unknown-op-type")
                   for k in report.escalation_reasons)

    def test_approve_rate_zero_denies_everything(self):
        report = run_simulation(small_mix(op_count=3000, approve_rate=0.0))
        assert report.escalations_approved == 0
        assert report.escalations_denied == report.escalated
        assert report.cross_tier_ok

    def test_invalid_fractions_rejected(self):
        with pytest.raises(ConfigInvalid):
            run_simulation(small_mix(fractions={"query": 0.5, "small": 0.2,
                                                "medium": 0.0, "large": 0.0,
                                                "transfer": 0.0,
                                                "over_limit": 0.0,
                                                "forbidden": 0.0}))


class TestCrossTier:
    def test_detects_unjustified_execution(self):
        from aith import codec
        from aith.chain import ChainSet
        from aith.policy import Operation

        chains = ChainSet()
        rogue = Operation("ghost", "trade", 100, amount=1)
        body = (codec.enc_str("cert-z") + codec.enc_bytes(rogue.canonical_bytes())
                + codec.enc_u8(1) + codec.enc_i64(0) + codec.enc_opt_i64(None))
        chains.t3.append("EXECUTION", body, 100)
        ok, detail = check_cross_tier(chains)
        assert not ok
        assert "ghost" in detail
