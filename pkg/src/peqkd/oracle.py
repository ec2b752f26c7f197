"""Exact joint distribution of one protocol round by exhaustive enumeration.

Every uniform choice (source parameter, Alice's basis, key bit, Eve's guess)
is enumerated with its exact weight and every measurement is expanded into
all of its non-vanishing outcomes with Born weights taken from state
vectors. Nothing here samples, and nothing here goes through the protocol or
adversary code, so the marginals are an independent reference for the
Monte Carlo runs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .adversary import AttackKind
from .gbs import SUCCESS_OUTCOMES, GbsOutcome, KeyBit, channel_state, correction_for, gbs_basis
from .quantum import apply_single_qubit, pair_branches, tensor, x_probabilities

MAX_PARAMS = 4


class Branch(NamedTuple):
    n_index: int
    m_index: int
    outcome: int
    alice_bit: int
    bob_bit: int
    # (guess index, Eve's bit guess, Eve's GBM outcome or -1); None when passive
    eve: tuple | None


def _x_branches(state):
    """Outcomes of an X measurement of a single qubit as ``(bit, prob)``."""
    p = x_probabilities(state, 0)
    return [(b, float(p[b])) for b in (0, 1) if p[b] >= 1e-15]


def _guesses(params, pool, knows_source, j):
    if knows_source:
        return [(j, params[j], 1.0)]
    return [(g, e, 1.0 / len(pool)) for g, e in enumerate(pool)]


@dataclass
class OracleDistribution:
    channel_params: tuple[float, ...]
    kind: AttackKind
    guess_pool: tuple[float, ...]
    branches: list[Branch]
    weights: np.ndarray

    def total(self) -> float:
        return float(self.weights.sum())

    def prob(self, pred) -> float:
        w = [w for b, w in zip(self.branches, self.weights) if pred(b)]
        return float(np.sum(w)) if w else 0.0

    def conditional(self, event, given) -> float:
        den = self.prob(given)
        if den == 0.0:
            raise ZeroDivisionError("conditioning event has probability zero")
        return self.prob(lambda b: given(b) and event(b)) / den

    # -- named marginals --

    @staticmethod
    def sifted(b: Branch) -> bool:
        return b.n_index == b.m_index and b.outcome in SUCCESS_OUTCOMES

    def p_match(self) -> float:
        return self.prob(lambda b: b.n_index == b.m_index)

    def p_sifted(self) -> float:
        return self.prob(self.sifted)

    def outcome_distribution(self, n_index: int, m_index: int, alice_bit: int | None = None) -> list[float]:
        def given(b):
            return b.n_index == n_index and b.m_index == m_index and (alice_bit is None or b.alice_bit == alice_bit)

        return [self.conditional(lambda b, o=o: b.outcome == o, given) for o in range(4)]

    def success_given_match(self, j: int) -> float:
        return self.conditional(
            lambda b: b.outcome in SUCCESS_OUTCOMES, lambda b: b.n_index == j and b.m_index == j
        )

    def qber(self) -> float:
        """Expected mismatch rate on disclosed bits (a uniform subset of sifted ones)."""
        return self.conditional(lambda b: b.alice_bit != b.bob_bit, self.sifted)

    def eve_information(self) -> float | None:
        if self.kind is AttackKind.PASSIVE:
            return None
        return self.conditional(lambda b: b.eve[1] == b.alice_bit, self.sifted)

    def eve_wrong(self, e_index: int, m_index: int, outcome: int) -> float:
        return self.conditional(
            lambda b: b.eve[1] != b.alice_bit,
            lambda b: b.eve[0] == e_index and b.m_index == m_index and b.outcome == outcome,
        )

    def e_match(self) -> float | None:
        if self.kind is AttackKind.PASSIVE:
            return None
        pool = self.guess_pool or self.channel_params
        return self.prob(lambda b: pool[b.eve[0]] == self.channel_params[b.m_index])


def exhaustive_oracle(
    channel_params: Sequence[float],
    kind: AttackKind | str = AttackKind.PASSIVE,
    guess_pool: Sequence[float] | None = None,
    knows_source: bool = False,
) -> OracleDistribution:
    """Enumerate every branch of one round.

    ``guess_pool`` defaults to the channel parameters. With
    ``knows_source`` Eve always picks the source's true parameter and the
    guess index in each branch is the source index.
    """
    params = tuple(float(x) for x in channel_params)
    kind = AttackKind(kind)
    if not params:
        raise ValueError("need at least one channel parameter")
    pool = tuple(float(x) for x in (guess_pool if guess_pool else params))
    if len(params) > MAX_PARAMS or len(pool) > MAX_PARAMS:
        raise ValueError(f"branch space too large: at most {MAX_PARAMS} parameters per list")

    N = len(params)
    branches: list[Branch] = []
    weights: list[float] = []

    def emit(branch, w):
        branches.append(branch)
        weights.append(w)

    for j, k, bit in itertools.product(range(N), range(N), (0, 1)):
        w0 = 1.0 / (N * N * 2)
        n, m = params[j], params[k]
        key = KeyBit(bit).state

        if kind is AttackKind.PASSIVE:
            for o, p, bob in pair_branches(tensor(key, channel_state(n)), 0, 1, gbs_basis(m)):
                bob = apply_single_qubit(bob, 0, correction_for(GbsOutcome(o)))
                for bb, pb in _x_branches(bob):
                    emit(Branch(j, k, o, bit, bb, None), w0 * p * pb)
            continue

        for g, e, pg in _guesses(params, pool, knows_source, j):
            # Alice teleports onto Eve's pair
            for o, p, held in pair_branches(tensor(key, channel_state(e)), 0, 1, gbs_basis(m)):
                corr = correction_for(GbsOutcome(o))
                held = apply_single_qubit(held, 0, corr)
                for eb, pe in _x_branches(held):
                    guess = KeyBit(eb).state
                    w = w0 * pg * p * pe
                    if kind is AttackKind.FAKE_SOURCE:
                        bob = apply_single_qubit(guess, 0, corr.dagger)
                        bob = apply_single_qubit(bob, 0, corr)
                        for bb, pb in _x_branches(bob):
                            emit(Branch(j, k, o, bit, bb, (g, eb, -1)), w * pb)
                        continue
                    # re-teleport the guess over the source pair with basis e
                    reinject = tensor(guess, channel_state(n))
                    for eo, peo, bob in pair_branches(reinject, 0, 1, gbs_basis(e)):
                        bob = apply_single_qubit(bob, 0, corr)
                        for bb, pb in _x_branches(bob):
                            emit(Branch(j, k, o, bit, bb, (g, eb, eo)), w * peo * pb)

    return OracleDistribution(params, kind, pool if kind is not AttackKind.PASSIVE else (), branches, np.array(weights))

