"""Round orchestration for the partially-entangled teleportation QKD scheme.

Each round:

1. the source (Bob, Charlie or the first repeater station) picks one of the
   agreed channel parameters and prepares ``channel_state(n)``; one half
   travels to Alice through the adversary's interception hook;
2. Alice picks a key bit and a basis parameter ``m``, runs the GBM on her
   key qubit and the received half, and broadcasts the outcome only;
3. repeater stations, if any, teleport the far half hop by hop to Bob;
4. Bob applies the Pauli correction for the announced outcome, measures in
   the X basis and acknowledges.

Parameter reveals come only after the acknowledgments (by default in one
batch once every round has finished). Sifting, disclosure of a random subset
of the sifted bits and the QBER estimate then use nothing but the public
message log.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, NamedTuple, Sequence

import numpy as np

from .gbs import SUCCESS_OUTCOMES, GbsOutcome, KeyBit, channel_state, check_param, correction_for, gbs_basis
from .quantum import Lab

if TYPE_CHECKING:
    from .adversary import AttackModel

DEFAULT_SEED = 20090917


class ConfigError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """A party or the orchestrator broke the message-ordering rules."""


class PrematureSift(ProtocolError):
    pass


class Mode(str, enum.Enum):
    STANDARD = "standard"
    CONTROLLED = "controlled"
    REPEATER = "repeater"


@dataclass(frozen=True)
class ProtocolConfig:
    channel_params: tuple[float, ...]
    num_rounds: int
    disclosure_fraction: float = 0.5
    mode: Mode = Mode.STANDARD
    repeater_links: tuple[float, ...] = ()
    seed: int = DEFAULT_SEED
    # reveal n and m right after each acknowledgment instead of in one batch
    reveal_per_round: bool = False

    def __post_init__(self):
        params = tuple(float(x) for x in self.channel_params)
        object.__setattr__(self, "channel_params", params)
        object.__setattr__(self, "repeater_links", tuple(float(x) for x in self.repeater_links))
        try:
            object.__setattr__(self, "mode", Mode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        if len(params) < 2:
            raise ConfigError("need at least two channel parameters")
        if len(set(params)) != len(params):
            raise ConfigError(f"channel parameters must be distinct: {params}")
        for n in params:
            if not 0.0 < n < 1.0:
                raise ConfigError(f"channel parameter {n} outside (0, 1)")
        if isinstance(self.num_rounds, bool) or int(self.num_rounds) != self.num_rounds or self.num_rounds < 1:
            raise ConfigError(f"num_rounds must be a positive integer, got {self.num_rounds!r}")
        if not 0.0 < self.disclosure_fraction < 1.0:
            raise ConfigError("disclosure_fraction must lie in (0, 1)")
        if self.mode is Mode.REPEATER:
            if not self.repeater_links:
                raise ConfigError("repeater mode needs at least one repeater link")
            for x in self.repeater_links:
                try:
                    check_param(x)
                except ValueError as exc:
                    raise ConfigError(f"repeater link: {exc}") from None
        elif self.repeater_links:
            raise ConfigError("repeater_links only apply in repeater mode")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


# -- classical channel -------------------------------------------------------


class MsgKind(str, enum.Enum):
    GBM_OUTCOME = "GbmOutcome"
    BOB_MEASURED_ACK = "BobMeasuredAck"
    REVEAL_N = "RevealN"
    REVEAL_M = "RevealM"
    DISCLOSE_BIT = "DiscloseBit"
    CHARLIE_REVEAL = "CharlieReveal"
    HOP_OUTCOME = "HopOutcome"
    STATION_REVEAL = "StationReveal"
    ABORT = "Abort"


_REVEALS = frozenset({MsgKind.REVEAL_N, MsgKind.REVEAL_M, MsgKind.CHARLIE_REVEAL, MsgKind.STATION_REVEAL})


class ClassicalMessage(NamedTuple):
    round_id: int
    sender: str
    kind: MsgKind
    payload: Any


class BroadcastChannel:
    """Authenticated public channel; everyone hears every message.

    Refuses any parameter reveal for a round that Bob has not yet
    acknowledged.
    """

    def __init__(self):
        self.log: list[ClassicalMessage] = []
        self._index: dict[tuple, Any] = {}
        self._acked: set[int] = set()

    def post(self, round_id: int, sender: str, kind: MsgKind, payload: Any = None) -> None:
        if kind in _REVEALS and round_id not in self._acked:
            raise ProtocolError(f"{kind.value} for round {round_id} before Bob's acknowledgment")
        if kind is MsgKind.BOB_MEASURED_ACK:
            self._acked.add(round_id)
        self.log.append(ClassicalMessage(round_id, sender, kind, payload))
        self._index[(round_id, kind, sender)] = payload

    def lookup(self, round_id: int, kind: MsgKind, sender: str) -> Any:
        """Payload of a public message, or ``None`` if it was never sent."""
        return self._index.get((round_id, kind, sender))


# -- parties -----------------------------------------------------------------


class Phase(enum.IntEnum):
    IDLE = 0
    PAIR_SENT = 1
    OUTCOME_RECEIVED = 2
    MEASURED = 3
    REVEALED = 4


class Party:
    """Per-round state machine Idle -> PairSent -> OutcomeReceived -> Measured -> Revealed."""

    def __init__(self, name: str, channel: BroadcastChannel, num_rounds: int):
        self.name = name
        self.channel = channel
        self._phase = bytearray(num_rounds)

    def phase(self, round_id: int) -> Phase:
        return Phase(self._phase[round_id])

    def _advance(self, round_id: int, new: Phase) -> None:
        cur = self._phase[round_id]
        if new != cur + 1:
            raise ProtocolError(
                f"{self.name}: illegal transition {Phase(cur).name} -> {Phase(new).name} in round {round_id}"
            )
        self._phase[round_id] = new

    def post(self, round_id: int, kind: MsgKind, payload: Any = None) -> None:
        self.channel.post(round_id, self.name, kind, payload)

    def hear_outcome(self, round_id: int) -> GbsOutcome:
        self._advance(round_id, Phase.OUTCOME_RECEIVED)
        return self.channel.lookup(round_id, MsgKind.GBM_OUTCOME, "alice")

    def hear_ack(self, round_id: int) -> None:
        self._advance(round_id, Phase.MEASURED)


@dataclass
class RoundContext:
    """Quantum side of one round: the lab and which qubit is routed where.

    ``source_n`` is ground truth kept for audits and for the oracle-Eve
    bound; honest parties never read it.
    """

    round_id: int
    lab: Lab
    channel: BroadcastChannel
    alice_qubit: str = "a"
    bob_qubit: str = "b"
    source_n: float = 0.0
    mode: Mode = Mode.STANDARD


class Source(Party):
    """Whoever prepares the partially entangled pairs."""

    def __init__(self, name, channel, num_rounds, channel_params):
        super().__init__(name, channel, num_rounds)
        self.channel_params = channel_params
        self.n_indices = bytearray(num_rounds)

    def prepare(self, ctx: RoundContext, draw: float) -> None:
        r = ctx.round_id
        j = min(int(draw * len(self.channel_params)), len(self.channel_params) - 1)
        self.n_indices[r] = j
        ctx.source_n = self.channel_params[j]
        ctx.lab.add(channel_state(ctx.source_n), [ctx.alice_qubit, ctx.bob_qubit])
        self._advance(r, Phase.PAIR_SENT)


class Alice(Party):
    def __init__(self, channel, num_rounds, channel_params):
        super().__init__("alice", channel, num_rounds)
        self.channel_params = channel_params
        self.key_bits = bytearray(num_rounds)
        self.m_indices = bytearray(num_rounds)

    def receive(self, round_id: int) -> None:
        self._advance(round_id, Phase.PAIR_SENT)

    def teleport(self, ctx: RoundContext, key_draw: float, basis_draw: float, gbm_draw: float) -> GbsOutcome:
        r = ctx.round_id
        bit = KeyBit(int(key_draw * 2))
        k = min(int(basis_draw * len(self.channel_params)), len(self.channel_params) - 1)
        self.key_bits[r] = bit
        self.m_indices[r] = k
        ctx.lab.add(bit.state, ["key"])
        outcome = GbsOutcome(
            ctx.lab.measure_pair("key", ctx.alice_qubit, gbs_basis(self.channel_params[k]), gbm_draw)
        )
        self._advance(r, Phase.OUTCOME_RECEIVED)
        self.post(r, MsgKind.GBM_OUTCOME, outcome)
        return outcome

    def reveal(self, round_id: int) -> None:
        self._advance(round_id, Phase.REVEALED)
        self.post(round_id, MsgKind.REVEAL_M, self.m_indices[round_id])


class Bob(Source):
    def __init__(self, channel, num_rounds, channel_params, is_source: bool):
        super().__init__("bob", channel, num_rounds, channel_params)
        self.is_source = is_source
        self.bits = bytearray(num_rounds)

    def receive(self, round_id: int) -> None:
        self._advance(round_id, Phase.PAIR_SENT)

    def measure(self, ctx: RoundContext, draw: float) -> int:
        r = ctx.round_id
        outcome = self.hear_outcome(r)
        ctx.lab.apply(ctx.bob_qubit, correction_for(outcome))
        bit = ctx.lab.measure_x(ctx.bob_qubit, draw)
        self.bits[r] = bit
        self._advance(r, Phase.MEASURED)
        self.post(r, MsgKind.BOB_MEASURED_ACK)
        return bit

    def reveal(self, round_id: int) -> None:
        self._advance(round_id, Phase.REVEALED)
        if self.is_source:
            self.post(round_id, MsgKind.REVEAL_N, self.n_indices[round_id])


class Charlie(Source):
    """Third party distributing the pairs; decides whether a key is possible."""

    def __init__(self, channel, num_rounds, channel_params, discloses: bool):
        super().__init__("charlie", channel, num_rounds, channel_params)
        self.discloses = discloses

    def reveal(self, round_id: int) -> None:
        self._advance(round_id, Phase.REVEALED)
        if self.discloses:
            self.post(round_id, MsgKind.CHARLIE_REVEAL, self.n_indices[round_id])

    def view(self) -> dict:
        """Everything Charlie holds: his own preparation record and the public log."""
        return {"n_indices": bytes(self.n_indices), "public_log": list(self.channel.log)}


class Station(Source):
    """Repeater station ``k``. Station 0 prepares the partially entangled
    pair; every station teleports the in-flight qubit across its own link."""

    def __init__(self, k, channel, num_rounds, channel_params, link: float, discloses: bool):
        super().__init__(f"station{k}", channel, num_rounds, channel_params)
        self.k = k
        self.link = link
        self.discloses = discloses

    def hop(self, ctx: RoundContext, draw: float) -> GbsOutcome:
        r = ctx.round_id
        near, far = f"hop{self.k}a", f"hop{self.k}b"
        ctx.lab.add(channel_state(self.link), [near, far])
        outcome = GbsOutcome(ctx.lab.measure_pair(ctx.bob_qubit, near, gbs_basis(self.link), draw))
        self.post(r, MsgKind.HOP_OUTCOME, outcome)
        # the receiving node corrects straight away
        ctx.lab.apply(far, correction_for(outcome))
        ctx.bob_qubit = far
        return outcome

    def reveal(self, round_id: int) -> None:
        self._advance(round_id, Phase.REVEALED)
        if not self.discloses:
            return
        n_index = self.n_indices[round_id] if self.k == 0 else None
        self.post(round_id, MsgKind.STATION_REVEAL, (n_index, self.link))


# -- records -----------------------------------------------------------------


class Verdict(str, enum.Enum):
    DISCARD_MISMATCH = "DiscardMismatch"
    DISCARD_OUTCOME = "DiscardOutcome"
    SIFTED_KEPT = "SiftedKept"
    SIFTED_DISCLOSED = "SiftedDisclosed"


@dataclass(frozen=True)
class RunRecord:
    round_id: int
    bob_n_index: int | None
    alice_m_index: int | None
    alice_key_bit: int
    gbm_outcome: GbsOutcome
    bob_bit: int
    verdict: Verdict | None = None
    # (outcome, link parameter) per repeater hop
    hops: tuple = ()


def _hops_ok(hops) -> bool:
    return all(link == 1.0 or GbsOutcome(o) in SUCCESS_OUTCOMES for o, link in hops)


def sift(records: Sequence[RunRecord]) -> tuple[list[int], list[int]]:
    """Split rounds into kept and discarded positions.

    Kept rounds have matching parameter indices, a Phi-/Psi+ outcome and
    every partially entangled repeater hop successful.
    """
    kept, discarded = [], []
    for i, rec in enumerate(records):
        if rec.bob_n_index is None or rec.alice_m_index is None:
            raise PrematureSift(f"premature sift: round {rec.round_id} has no reveal")
        if (
            rec.bob_n_index == rec.alice_m_index
            and GbsOutcome(rec.gbm_outcome) in SUCCESS_OUTCOMES
            and _hops_ok(rec.hops)
        ):
            kept.append(i)
        else:
            discarded.append(i)
    return kept, discarded


def _verdict(rec: RunRecord, kept: bool) -> Verdict:
    if rec.bob_n_index != rec.alice_m_index:
        return Verdict.DISCARD_MISMATCH
    return Verdict.SIFTED_KEPT if kept else Verdict.DISCARD_OUTCOME


def estimate_qber(disclosed: Sequence[tuple[int, int]]) -> float:
    if not disclosed:
        return 0.0
    return sum(a != b for a, b in disclosed) / len(disclosed)


def disclosure_size(sifted: int, fraction: float) -> int:
    return int(math.floor(fraction * sifted + 0.5))


@dataclass
class Transcript:
    config: ProtocolConfig
    records: list[RunRecord]
    messages: list[ClassicalMessage]
    alice_key: str
    bob_key: str
    disclosed: list[tuple[int, int]]
    qber: float
    aborted: bool
    attack: Any = None
    eve_records: list = field(default_factory=list)
    charlie_view: dict | None = None

    @property
    def sifted_count(self) -> int:
        return sum(
            r.verdict in (Verdict.SIFTED_KEPT, Verdict.SIFTED_DISCLOSED) for r in self.records
        )

    @property
    def key_length(self) -> int:
        return len(self.alice_key)

    def count(self, verdict: Verdict) -> int:
        return sum(r.verdict is verdict for r in self.records)


# -- orchestration -----------------------------------------------------------


def _streams(seed: int):
    honest, hops, disclosure = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(honest), np.random.default_rng(hops), np.random.default_rng(disclosure))


def _execute(config: ProtocolConfig, adversary, charlie_discloses=True, station_discloses=None) -> Transcript:
    from .adversary import AttackModel, audit, make_hook

    adversary = adversary if adversary is not None else AttackModel()
    hook = make_hook(adversary, config)

    R = config.num_rounds
    params = config.channel_params
    mode = config.mode
    links = config.repeater_links
    honest_rng, hop_rng, disclosure_rng = _streams(config.seed)
    # per-round draw rows: n choice, key bit, m choice, GBM, Bob's X measurement
    draws = honest_rng.random((R, 5)).tolist()
    hop_draws = hop_rng.random((R, len(links))).tolist() if links else None

    channel = BroadcastChannel()
    alice = Alice(channel, R, params)
    bob = Bob(channel, R, params, is_source=mode is Mode.STANDARD)
    charlie = None
    stations: list[Station] = []
    if mode is Mode.STANDARD:
        source: Source = bob
    elif mode is Mode.CONTROLLED:
        charlie = source = Charlie(channel, R, params, charlie_discloses)
    else:
        if station_discloses is None:
            station_discloses = [True] * len(links)
        if len(station_discloses) != len(links):
            raise ConfigError("one disclosure flag per repeater station required")
        stations = [
            Station(k, channel, R, params, link, bool(d))
            for k, (link, d) in enumerate(zip(links, station_discloses))
        ]
        source = stations[0]
    listeners = [p for p in (charlie, *stations) if p is not None]

    def reveal(r):
        source.reveal(r)
        for p in listeners:
            if p is not source:
                p.reveal(r)
        alice.reveal(r)
        if bob is not source:
            bob.reveal(r)

    hop_log: list[tuple] = []
    for r in range(R):
        d = draws[r]
        ctx = RoundContext(r, Lab(), channel, mode=mode)
        source.prepare(ctx, d[0])
        if bob is not source:
            bob.receive(r)
        for st in stations[1:]:
            st._advance(r, Phase.PAIR_SENT)
        hook.on_transit(ctx)
        alice.receive(r)
        alice.teleport(ctx, d[1], d[2], d[3])
        for p in listeners:
            p.hear_outcome(r)
        hook.after_outcome(ctx)
        hops = tuple((st.hop(ctx, hop_draws[r][st.k]), st.link) for st in stations)
        hop_log.append(hops)
        bob.measure(ctx, d[4])
        alice.hear_ack(r)
        for p in listeners:
            p.hear_ack(r)
        if config.reveal_per_round:
            reveal(r)
    if not config.reveal_per_round:
        for r in range(R):
            reveal(r)

    # everything below is computed from the public log
    def public_n(r):
        if mode is Mode.STANDARD:
            return channel.lookup(r, MsgKind.REVEAL_N, "bob")
        if mode is Mode.CONTROLLED:
            return channel.lookup(r, MsgKind.CHARLIE_REVEAL, "charlie")
        if any(channel.lookup(r, MsgKind.STATION_REVEAL, st.name) is None for st in stations):
            return None
        return channel.lookup(r, MsgKind.STATION_REVEAL, "station0")[0]

    public = [
        RunRecord(
            round_id=r,
            bob_n_index=public_n(r),
            alice_m_index=channel.lookup(r, MsgKind.REVEAL_M, "alice"),
            alice_key_bit=alice.key_bits[r],
            gbm_outcome=channel.lookup(r, MsgKind.GBM_OUTCOME, "alice"),
            bob_bit=bob.bits[r],
            hops=tuple(
                (channel.lookup(r, MsgKind.HOP_OUTCOME, st.name), st.link) for st in stations
            ),
        )
        for r in range(R)
    ]
    try:
        kept, _ = sift(public)
    except PrematureSift:
        channel.post(R, "alice", MsgKind.ABORT, "missing parameter reveal")
        truth = [
            RunRecord(r, source.n_indices[r], alice.m_indices[r], alice.key_bits[r],
                      rec.gbm_outcome, bob.bits[r], None, hop_log[r])
            for r, rec in enumerate(public)
        ]
        t = Transcript(config, truth, channel.log, "", "", [], 0.0, True, adversary,
                       hook.records, charlie.view() if charlie else None)
        audit(t)
        return t

    kept_set = set(kept)
    k = disclosure_size(len(kept), config.disclosure_fraction)
    chosen = disclosure_rng.choice(len(kept), size=k, replace=False) if k else []
    disclosed_rounds = sorted(kept[i] for i in chosen)
    disclosed_set = set(disclosed_rounds)
    for r in disclosed_rounds:
        channel.post(r, "alice", MsgKind.DISCLOSE_BIT, alice.key_bits[r])
        channel.post(r, "bob", MsgKind.DISCLOSE_BIT, bob.bits[r])
    disclosed = [
        (channel.lookup(r, MsgKind.DISCLOSE_BIT, "alice"), channel.lookup(r, MsgKind.DISCLOSE_BIT, "bob"))
        for r in disclosed_rounds
    ]

    records = []
    for r, rec in enumerate(public):
        v = _verdict(rec, r in kept_set)
        if r in disclosed_set:
            v = Verdict.SIFTED_DISCLOSED
        records.append(
            RunRecord(r, rec.bob_n_index, rec.alice_m_index, rec.alice_key_bit,
                      rec.gbm_outcome, rec.bob_bit, v, hop_log[r])
        )
    keep_rounds = [r for r in kept if r not in disclosed_set]
    t = Transcript(
        config=config,
        records=records,
        messages=channel.log,
        alice_key="".join(str(alice.key_bits[r]) for r in keep_rounds),
        bob_key="".join(str(bob.bits[r]) for r in keep_rounds),
        disclosed=disclosed,
        qber=estimate_qber(disclosed),
        aborted=False,
        attack=adversary,
        eve_records=hook.records,
        charlie_view=charlie.view() if charlie else None,
    )
    audit(t)
    return t


def run_protocol(config: ProtocolConfig, adversary: "AttackModel | None" = None) -> Transcript:
    """Run ``config.num_rounds`` rounds in the configured mode.

    Controlled mode assumes Charlie discloses and repeater mode assumes every
    station does; use :func:`controlled_run` or :func:`repeater_run` to
    withhold.
    """
    return _execute(config, adversary)


def controlled_run(config: ProtocolConfig, adversary=None, charlie_discloses: bool = True) -> Transcript:
    if config.mode is not Mode.CONTROLLED:
        raise ConfigError("controlled_run needs mode=controlled")
    return _execute(config, adversary, charlie_discloses=charlie_discloses)


def repeater_run(config: ProtocolConfig, adversary=None, station_discloses: Sequence[bool] | None = None) -> Transcript:
    if config.mode is not Mode.REPEATER:
        raise ConfigError("repeater_run needs mode=repeater")
    return _execute(config, adversary, station_discloses=station_discloses)
