import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from peqkd import gbs
from peqkd.gbs import GbsOutcome, KeyBit
from peqkd.quantum import (
    MINUS,
    PLUS,
    SIGMA_X,
    SIGMA_Z,
    apply_single_qubit,
    fidelity,
    make_state,
    outcome_probabilities,
    pair_branches,
    tensor,
)

R = 1 / math.sqrt(2)
param = st.floats(0.01, 1.0)
open_param = st.floats(0.01, 0.99)


@st.composite
def qubits(draw):
    a = complex(draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
    b = complex(draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
    norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if norm < 1e-3:
        return 1.0, 0.0
    return a / norm, b / norm


def frac_p_suc(n):
    n = Fraction(n)
    return 2 * n * n / (1 + n * n) ** 2


class TestOutcomeLabels:
    def test_order_and_labels(self):
        assert [o.label for o in GbsOutcome] == ["PhiPlus", "PhiMinus", "PsiPlus", "PsiMinus"]
        assert GbsOutcome.from_label("PsiPlus") is GbsOutcome.PSI_PLUS

    def test_key_bits(self):
        assert fidelity(KeyBit(0).state, PLUS) == pytest.approx(1)
        assert fidelity(KeyBit(1).state, MINUS) == pytest.approx(1)


class TestBasis:
    def test_bell_limit(self):
        b = gbs.gbs_basis(1.0)
        np.testing.assert_allclose(b[0].amplitudes, [R, 0, 0, R], atol=1e-15)
        np.testing.assert_allclose(b[1].amplitudes, [R, 0, 0, -R], atol=1e-15)
        np.testing.assert_allclose(b[2].amplitudes, [0, R, R, 0], atol=1e-15)
        np.testing.assert_allclose(b[3].amplitudes, [0, R, -R, 0], atol=1e-15)

    def test_phi_plus_half(self):
        np.testing.assert_allclose(gbs.gbs_basis(0.5)[0].amplitudes, np.array([1, 0, 0, 0.5]) / math.sqrt(1.25))

    @given(param)
    def test_orthonormal(self, m):
        M = np.array([s.amplitudes for s in gbs.gbs_basis(m)])
        np.testing.assert_allclose(M.conj() @ M.T, np.eye(4), atol=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -0.3, 1.2, math.nan, 0.5j])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            gbs.gbs_basis(bad)


class TestChannelState:
    def test_bell(self):
        np.testing.assert_allclose(gbs.channel_state(1.0).amplitudes, [R, 0, 0, R])

    def test_half(self):
        np.testing.assert_allclose(gbs.channel_state(0.5).amplitudes, [0.894427191, 0, 0, 0.4472135955], atol=1e-9)

    @given(param)
    def test_is_phi_plus(self, n):
        assert gbs.channel_state(n) is gbs.gbs_basis(n)[GbsOutcome.PHI_PLUS]


class TestGbmProbabilities:
    def test_matched_half(self):
        np.testing.assert_allclose(gbs.gbm_probabilities(R, R, 0.5, 0.5), [0.34, 0.16, 0.16, 0.34], atol=1e-12)

    def test_mismatched(self):
        # hand expansion of |+> (x) Phi+_n onto each basis element, in rationals
        n, m = Fraction(1, 2), Fraction(9, 10)
        den = 2 * (1 + n * n) * (1 + m * m)
        same, cross = (1 + (m * n) ** 2) / den, (m * m + n * n) / den
        want = [same, cross, cross, same]
        got = gbs.gbm_probabilities(R, R, 0.5, 0.9)
        np.testing.assert_allclose(got, [float(w) for w in want], atol=1e-12)
        np.testing.assert_allclose(got, [0.265746, 0.234254, 0.234254, 0.265746], atol=1e-6)

    def test_maximal_channel_uniform(self):
        np.testing.assert_allclose(gbs.gbm_probabilities(1, 0, 1, 1), [0.25] * 4, atol=1e-15)

    @given(qubits(), param, param)
    def test_matches_state_vector(self, ab, n, m):
        a, b = ab
        joint = tensor(make_state(1, [a, b]), gbs.channel_state(n))
        sim = outcome_probabilities(joint, 0, 1, gbs.gbs_basis(m))
        closed = gbs.gbm_probabilities(a, b, n, m)
        np.testing.assert_allclose(closed, sim, atol=1e-12)
        assert sum(closed) == pytest.approx(1, abs=1e-12)

    def test_unnormalized(self):
        with pytest.raises(ValueError):
            gbs.gbm_probabilities(1, 1, 0.5, 0.5)


class TestCorrections:
    def test_table(self):
        assert gbs.correction_for(GbsOutcome.PHI_PLUS).name == "I"
        np.testing.assert_array_equal(gbs.correction_for(GbsOutcome.PHI_MINUS).matrix, SIGMA_Z.matrix)
        np.testing.assert_array_equal(gbs.correction_for(GbsOutcome.PSI_PLUS).matrix, SIGMA_X.matrix)
        np.testing.assert_array_equal(gbs.correction_for(GbsOutcome.PSI_MINUS).matrix, (SIGMA_Z @ SIGMA_X).matrix)


class TestBobState:
    @given(qubits(), open_param, st.sampled_from([GbsOutcome.PHI_MINUS, GbsOutcome.PSI_PLUS]))
    def test_matched_success_is_perfect(self, ab, n, o):
        a, b = ab
        s = gbs.bob_conditional_state(a, b, n, n, o)
        assert fidelity(s, make_state(1, [a, b])) == pytest.approx(1, abs=1e-12)

    def test_distorted(self):
        s = gbs.bob_conditional_state(R, R, 0.5, 0.9, GbsOutcome.PHI_MINUS)
        assert fidelity(s, make_state(1, [0.9, 0.5])) == pytest.approx(1, abs=1e-12)

    @given(qubits(), open_param, open_param, st.sampled_from(list(GbsOutcome)))
    def test_matches_full_simulation(self, ab, n, m, o):
        a, b = ab
        joint = tensor(make_state(1, [a, b]), gbs.channel_state(n))
        if outcome_probabilities(joint, 0, 1, gbs.gbs_basis(m))[o] < 1e-9:
            return
        rest = next(r for k, _, r in pair_branches(joint, 0, 1, gbs.gbs_basis(m)) if k == o)
        rest = apply_single_qubit(rest, 0, gbs.correction_for(o))
        assert fidelity(rest, gbs.bob_conditional_state(a, b, n, m, o)) == pytest.approx(1, abs=1e-10)

    def test_unknown_outcome(self):
        # every outcome has positive weight for valid parameters
        with pytest.raises(ValueError):
            gbs.bob_conditional_state(1, 0, 1.0, 1.0, 7)


class TestPqt:
    def test_matched_phi_minus(self):
        draws = iter([0.42])  # cumulative 0.34 < 0.42 < 0.50 selects Phi-
        rec = gbs.simulate_pqt(KeyBit(0), 0.5, 0.5, draws)
        assert rec.outcome is GbsOutcome.PHI_MINUS and rec.succeeded
        assert fidelity(rec.bob_state, PLUS) == pytest.approx(1, abs=1e-12)

    def test_mismatch_never_succeeds(self):
        rng = np.random.default_rng(0)
        assert not any(gbs.simulate_pqt(KeyBit(1), 0.5, 0.9, rng).succeeded for _ in range(200))

    def test_success_frequency(self):
        rng = np.random.default_rng(11)
        T = 100_000
        hits = sum(gbs.simulate_pqt(KeyBit(int(d * 2)), 0.5, 0.5, rng).succeeded for d in rng.random(T))
        sigma = math.sqrt(0.32 * 0.68 / T)
        assert abs(hits / T - 0.32) < 3 * sigma


class TestClosedForms:
    def test_p_suc_values(self):
        assert gbs.p_suc(0.5) == pytest.approx(0.32, abs=1e-12)
        assert gbs.p_suc(1.0) == 0.5
        assert gbs.p_suc(0.9) == pytest.approx(1.62 / 3.2761, abs=1e-15)
        assert gbs.p_suc(0.9) == pytest.approx(0.494490, abs=1e-6)

    @given(open_param)
    def test_p_suc_exact(self, n):
        assert gbs.p_suc(n) == pytest.approx(float(frac_p_suc(n)), rel=1e-14)

    @given(open_param)
    def test_p_suc_from_outcomes(self, n):
        p = gbs.gbm_probabilities(R, R, n, n)
        assert p[1] + p[2] == pytest.approx(gbs.p_suc(n), abs=1e-12)

    def test_rates(self):
        exact = float((frac_p_suc(0.5) + frac_p_suc(0.9)) / 4)
        assert gbs.p_final_rate([0.5, 0.9]) == pytest.approx(exact, abs=1e-15)
        # the six quoted digits are truncated, not rounded
        assert gbs.p_final_rate([0.5, 0.9]) == pytest.approx(0.203622, abs=1e-6)
        assert gbs.p_final_rate([0.55, 0.55]) == pytest.approx(0.178308, abs=1e-6)
        assert gbs.p_final_rate([1, 1]) == 0.25

    def test_rate_empty(self):
        with pytest.raises(ValueError):
            gbs.p_final_rate([])

    def test_p_wrong(self):
        assert gbs.p_wrong(0.9, 0.5) == pytest.approx(0.16 / 2.12, abs=1e-15)
        assert gbs.p_wrong(0.7, 0.7) == 0
        assert gbs.p_wrong(0.999, 1e-6) == pytest.approx(0.5, abs=1e-5)

    @given(open_param, open_param)
    def test_p_wrong_is_distortion(self, m, n):
        s = gbs.bob_conditional_state(R, R, n, m, GbsOutcome.PHI_MINUS)
        assert gbs.x_error(s, KeyBit(0)) == pytest.approx(gbs.p_wrong(m, n), abs=1e-12)
        assert 0 <= gbs.p_wrong(m, n) < 0.5
