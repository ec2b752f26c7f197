"""Eavesdropper strategies plugged into the quantum channel.

A hook sees the round's lab at two points: while the Alice-bound half is in
transit (``on_transit``) and right after Alice's public outcome broadcast
(``after_outcome``). Eve reads the public log like everyone else; the
parameter reveals arrive after her round is over.

Intercept-reteleport (standard, controlled and repeater modes)
    Eve keeps the Alice-bound half A of the source's pair and hands Alice
    one half of her own ``channel_state(e)`` instead. When Alice announces
    her outcome, Eve corrects her other half, reads it in the X basis and
    re-teleports the X state of her guess over the source pair, measuring
    (guess, A) with basis ``e``. She cannot announce that outcome, so Bob
    corrects with Alice's.

Fake source (controlled mode)
    Eve distributes her own ``channel_state(e)`` in place of Charlie's pair.
    She holds Bob's half until Alice has announced, corrects it, reads it in
    the X basis, undoes the correction and forwards it to Bob.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .gbs import GbsOutcome, KeyBit, channel_state, check_param, correction_for, gbs_basis
from .protocol import ConfigError, Mode, MsgKind, ProtocolConfig, Verdict

if TYPE_CHECKING:
    from .protocol import RoundContext, Transcript


class AttackKind(str, enum.Enum):
    PASSIVE = "passive"
    INTERCEPT_RETELEPORT = "intercept"
    FAKE_SOURCE = "fake-source"


@dataclass(frozen=True)
class AttackModel:
    kind: AttackKind = AttackKind.PASSIVE
    guess_pool: tuple[float, ...] = ()
    eve_seed: int = 0
    # oracle-Eve: always guesses the source's true parameter (upper bound)
    knows_source: bool = False
    # re-teleport with a second, independent basis guess instead of e
    independent_reinjection: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        pool = tuple(check_param(x, "guess") for x in self.guess_pool)
        object.__setattr__(self, "guess_pool", pool)
        if self.kind is not AttackKind.PASSIVE and not pool and not self.knows_source:
            raise ConfigError(f"{self.kind.value} attack needs a non-empty guess_pool")
        if not 0 <= self.eve_seed < 2**64:
            raise ConfigError("eve_seed must be a 64-bit unsigned integer")


@dataclass
class EveRecord:
    round_id: int
    guessed_e: float
    eve_bit_guess: int | None = None
    eve_gbm_outcome: GbsOutcome | None = None
    # audit only, filled in after the run
    knew_bit: bool = False


class PassiveHook:
    """Leaves the channel alone."""

    def __init__(self):
        self.records: list[EveRecord] = []

    def on_transit(self, ctx: "RoundContext") -> None:
        pass

    def after_outcome(self, ctx: "RoundContext") -> None:
        pass


def passive_hook(qubit):
    return qubit


class _EveHook(PassiveHook):
    def __init__(self, model: AttackModel, num_rounds: int):
        super().__init__()
        self.model = model
        # columns: guess, X measurement, GBM, independent reinjection guess
        self.draws = np.random.default_rng(model.eve_seed).random((num_rounds, 4)).tolist()
        self._pending: EveRecord | None = None

    def _pick(self, pool, draw):
        return pool[min(int(draw * len(pool)), len(pool) - 1)]

    def _guess(self, ctx) -> float:
        if self.model.knows_source:
            return ctx.source_n
        return self._pick(self.model.guess_pool, self.draws[ctx.round_id][0])

    def _read_key(self, ctx, held: str) -> tuple[GbsOutcome, int]:
        """Correct the held half for Alice's announced outcome and read it."""
        outcome = ctx.channel.lookup(ctx.round_id, MsgKind.GBM_OUTCOME, "alice")
        ctx.lab.apply(held, correction_for(outcome))
        bit = ctx.lab.measure_x(held, self.draws[ctx.round_id][1])
        return outcome, bit


class InterceptReteleportHook(_EveHook):
    def on_transit(self, ctx):
        e = self._guess(ctx)
        ctx.lab.add(channel_state(e), ["eve_to_alice", "eve_kept"])
        # A stays with Eve under its old label
        ctx.alice_qubit = "eve_to_alice"
        self._pending = EveRecord(ctx.round_id, e)

    def after_outcome(self, ctx):
        rec = self._pending
        r = ctx.round_id
        _, guess = self._read_key(ctx, "eve_kept")
        rec.eve_bit_guess = guess
        basis = rec.guessed_e
        if self.model.independent_reinjection and self.model.guess_pool:
            basis = self._pick(self.model.guess_pool, self.draws[r][3])
        ctx.lab.add(KeyBit(guess).state, ["eve_guess"])
        rec.eve_gbm_outcome = GbsOutcome(
            ctx.lab.measure_pair("eve_guess", "a", gbs_basis(basis), self.draws[r][2])
        )
        self.records.append(rec)
        self._pending = None


class FakeSourceHook(_EveHook):
    def on_transit(self, ctx):
        if ctx.mode is not Mode.CONTROLLED:
            raise ConfigError("fake-source attack only applies in controlled mode")
        e = self._guess(ctx)
        ctx.lab.discard(ctx.alice_qubit)
        ctx.lab.add(channel_state(e), ["eve_to_alice", "eve_to_bob"])
        ctx.alice_qubit = "eve_to_alice"
        self._pending = EveRecord(ctx.round_id, e)

    def after_outcome(self, ctx):
        rec = self._pending
        outcome, guess = self._read_key(ctx, "eve_to_bob")
        rec.eve_bit_guess = guess
        # the measured half is |guess>; undo the correction before forwarding
        fwd = correction_for(outcome).dagger
        ctx.lab.add(KeyBit(guess).state, [ctx.bob_qubit])
        ctx.lab.apply(ctx.bob_qubit, fwd)
        self.records.append(rec)
        self._pending = None


def make_hook(model: AttackModel, config: ProtocolConfig) -> PassiveHook:
    if model.kind is AttackKind.PASSIVE:
        return PassiveHook()
    if model.kind is AttackKind.INTERCEPT_RETELEPORT:
        return InterceptReteleportHook(model, config.num_rounds)
    if config.mode is not Mode.CONTROLLED:
        raise ConfigError("fake-source attack only applies in controlled mode")
    return FakeSourceHook(model, config.num_rounds)


def audit(transcript: "Transcript") -> None:
    """Mark each Eve record with whether her bit guess was Alice's key bit."""
    if not transcript.eve_records:
        return
    bits = {r.round_id: r.alice_key_bit for r in transcript.records}
    for rec in transcript.eve_records:
        rec.knew_bit = rec.eve_bit_guess is not None and rec.eve_bit_guess == bits[rec.round_id]


def eve_information(transcript: "Transcript") -> float | None:
    """Fraction of kept key rounds on which Eve's bit guess was right.

    ``None`` for a passive run (or when no key survived).
    """
    if not transcript.eve_records:
        return None
    by_round = {rec.round_id: rec for rec in transcript.eve_records}
    kept = [r for r in transcript.records if r.verdict is Verdict.SIFTED_KEPT]
    if not kept:
        return None
    hits = sum(by_round[r.round_id].eve_bit_guess == r.alice_key_bit for r in kept)
    return hits / len(kept)


def e_match_frequency(transcript: "Transcript") -> float | None:
    """How often Eve's channel guess equals Alice's GBM parameter."""
    if not transcript.eve_records:
        return None
    params = transcript.config.channel_params
    m = {r.round_id: params[r.alice_m_index] for r in transcript.records}
    hits = sum(rec.guessed_e == m[rec.round_id] for rec in transcript.eve_records)
    return hits / len(transcript.eve_records)
