import math

import pytest

from peqkd.adversary import AttackModel, e_match_frequency, eve_information, passive_hook
from peqkd.gbs import GbsOutcome, p_wrong
from peqkd.oracle import exhaustive_oracle
from peqkd.protocol import ConfigError, ProtocolConfig, Verdict, controlled_run, run_protocol
from peqkd.quantum import PLUS

PARAMS = (0.5, 0.9)


def controlled(rounds, seed=1):
    return ProtocolConfig(PARAMS, rounds, mode="controlled", seed=seed)


def within(observed, expected, n, k=3.0):
    sigma = math.sqrt(expected * (1 - expected) / n)
    return abs(observed - expected) <= k * sigma


class TestAttackModel:
    def test_needs_pool(self):
        with pytest.raises(ConfigError):
            AttackModel("intercept")

    def test_oracle_eve_needs_no_pool(self):
        assert AttackModel("fake-source", knows_source=True).guess_pool == ()

    def test_pool_validated(self):
        with pytest.raises(ValueError):
            AttackModel("intercept", (0.5, 1.5))


class TestPassive:
    def test_identity(self):
        assert passive_hook(PLUS) is PLUS

    def test_same_transcript_as_no_adversary(self):
        cfg = ProtocolConfig(PARAMS, 400)
        a = run_protocol(cfg)
        b = run_protocol(cfg, AttackModel())
        assert a.records == b.records and a.qber == b.qber == 0
        assert eve_information(b) is None and b.eve_records == []


class TestIntercept:
    def test_reads_key_when_basis_guessed(self):
        t = run_protocol(ProtocolConfig(PARAMS, 5000, seed=4), AttackModel("intercept", PARAMS, eve_seed=2))
        eve = {e.round_id: e for e in t.eve_records}
        lucky = [r for r in t.records
                 if r.verdict in (Verdict.SIFTED_KEPT, Verdict.SIFTED_DISCLOSED)
                 and eve[r.round_id].guessed_e == PARAMS[r.alice_m_index]]
        assert lucky and all(eve[r.round_id].knew_bit for r in lucky)

    def test_distortion_frequency(self, intercept_fixed_guess):
        t = intercept_fixed_guess
        eve = {e.round_id: e for e in t.eve_records}
        cond = [r for r in t.records if r.alice_m_index == 1 and r.gbm_outcome is GbsOutcome.PHI_MINUS]
        assert len(cond) >= 10_000
        wrong = sum(eve[r.round_id].eve_bit_guess != r.alice_key_bit for r in cond)
        assert within(wrong / len(cond), p_wrong(0.9, 0.5), len(cond))

    def test_detected(self, intercept_big):
        t = intercept_big
        ref = exhaustive_oracle(PARAMS, "intercept").qber()
        assert t.qber > 0
        assert within(t.qber, ref, len(t.disclosed))

    def test_eve_information(self, intercept_big):
        t = intercept_big
        ref = exhaustive_oracle(PARAMS, "intercept").eve_information()
        kept = t.count(Verdict.SIFTED_KEPT)
        assert within(eve_information(t), ref, kept)
        assert within(e_match_frequency(t), 0.5, len(t.records))

    def test_independent_reinjection_runs(self):
        model = AttackModel("intercept", PARAMS, eve_seed=3, independent_reinjection=True)
        t = run_protocol(ProtocolConfig(PARAMS, 2000), model)
        assert len(t.eve_records) == 2000 and 0.3 < t.qber < 0.7


class TestFakeSource:
    def test_only_controlled(self):
        with pytest.raises(ConfigError):
            run_protocol(ProtocolConfig(PARAMS, 10), AttackModel("fake-source", PARAMS))

    def test_oracle_eve_is_invisible(self):
        t = controlled_run(controlled(4000), AttackModel("fake-source", knows_source=True, eve_seed=5))
        sifted = [r for r in t.records if r.verdict in (Verdict.SIFTED_KEPT, Verdict.SIFTED_DISCLOSED)]
        eve = {e.round_id: e for e in t.eve_records}
        assert t.qber == 0 and t.alice_key == t.bob_key
        assert all(eve[r.round_id].knew_bit for r in sifted)
        assert eve_information(t) == 1.0

    def test_uniform_guess_matches_oracle(self):
        t = controlled_run(controlled(60_000, seed=6), AttackModel("fake-source", PARAMS, eve_seed=6))
        ref = exhaustive_oracle(PARAMS, "fake-source").qber()
        assert t.qber > 0 and within(t.qber, ref, len(t.disclosed))

    def test_disjoint_pool_is_louder(self):
        uniform = exhaustive_oracle(PARAMS, "fake-source").qber()
        disjoint = exhaustive_oracle(PARAMS, "fake-source", guess_pool=(0.1, 0.2)).qber()
        assert disjoint > uniform


class TestAudit:
    def test_knew_bit_not_in_public_log(self):
        t = run_protocol(ProtocolConfig(PARAMS, 200), AttackModel("intercept", PARAMS))
        assert all("knew" not in str(m.payload) for m in t.messages)
        assert {m.sender for m in t.messages} <= {"alice", "bob"}
