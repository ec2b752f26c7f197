"""Monte Carlo statistics, comparison against the exact oracle, and the
(n1, n2) rate-versus-eavesdropper-error scan."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gbs
from .adversary import AttackKind, AttackModel
from .oracle import OracleDistribution
from .protocol import Mode, ProtocolConfig, Transcript, Verdict, controlled_run, repeater_run, run_protocol

Z_LIMIT = 5.0


@dataclass
class Observation:
    """One tracked statistic: ``hits`` out of ``total`` Bernoulli trials,
    optionally rescaled (the post-disclosure rate is a fixed fraction of
    the sifted count)."""

    name: str
    hits: int
    total: int
    scale: float = 1.0

    @property
    def value(self) -> float:
        return self.scale * self.hits / self.total if self.total else 0.0

    def z(self, expected: float) -> float:
        p = expected / self.scale
        if self.total == 0:
            return 0.0
        sigma = self.scale * math.sqrt(max(p * (1 - p), 0.0) / self.total)
        dev = self.value - expected
        if sigma == 0.0:
            return 0.0 if abs(dev) <= 1e-12 else math.inf
        return dev / sigma


@dataclass
class TrialStats:
    channel_params: tuple[float, ...]
    attack: AttackModel
    trials: int
    sifted_count: int
    success_counts: dict[int, tuple[int, int]]
    qber: float
    key_rate_pre_disclosure: float
    key_rate_post_disclosure: float
    observations: list[Observation]
    expected: dict[str, float] = field(default_factory=dict)
    z_scores: dict[str, float] = field(default_factory=dict)
    hop_factor: float = 1.0

    def observation(self, name: str) -> Observation:
        for o in self.observations:
            if o.name == name:
                return o
        raise KeyError(name)


def _hop_factor(links: Sequence[float]) -> float:
    # a unit link teleports perfectly for every outcome; a partial link only
    # for Phi-/Psi+, with probability p_suc(link) whatever the input state
    return math.prod(1.0 if x == 1.0 else gbs.p_suc(x) for x in links)


def observe(transcript: Transcript) -> list[Observation]:
    """Count every tracked statistic in a finished transcript."""
    cfg = transcript.config
    N = len(cfg.channel_params)
    recs = transcript.records
    T = len(recs)
    obs = [Observation("match", sum(r.bob_n_index == r.alice_m_index for r in recs), T)]

    pair_counts = np.zeros((N, N), dtype=int)
    outcome_counts = np.zeros((N, N, 4), dtype=int)
    for r in recs:
        pair_counts[r.bob_n_index, r.alice_m_index] += 1
        outcome_counts[r.bob_n_index, r.alice_m_index, int(r.gbm_outcome)] += 1
    for j in range(N):
        for k in range(N):
            for o in gbs.GbsOutcome:
                obs.append(Observation(f"outcome[{j},{k}]={o.label}", int(outcome_counts[j, k, o]), int(pair_counts[j, k])))
    for j in range(N):
        succ = int(outcome_counts[j, j, gbs.GbsOutcome.PHI_MINUS] + outcome_counts[j, j, gbs.GbsOutcome.PSI_PLUS])
        obs.append(Observation(f"success|n{j}", succ, int(pair_counts[j, j])))

    if transcript.aborted:
        return obs
    sifted = transcript.sifted_count
    obs.append(Observation("sifted_rate", sifted, T))
    obs.append(Observation("key_rate_post", transcript.key_length, T))
    mismatches = sum(a != b for a, b in transcript.disclosed)
    obs.append(Observation("qber", mismatches, len(transcript.disclosed)))
    if transcript.eve_records:
        kept = [r for r in recs if r.verdict is Verdict.SIFTED_KEPT]
        by_round = {e.round_id: e for e in transcript.eve_records}
        hits = sum(by_round[r.round_id].eve_bit_guess == r.alice_key_bit for r in kept)
        obs.append(Observation("eve_information", hits, len(kept)))
        params = cfg.channel_params
        m = {r.round_id: params[r.alice_m_index] for r in recs}
        ematch = sum(e.guessed_e == m[e.round_id] for e in transcript.eve_records)
        obs.append(Observation("e_match", ematch, len(transcript.eve_records)))
    return obs


def analytic_expectations(config: ProtocolConfig) -> dict[str, float]:
    """Closed-form expectations for the honest (passive) protocol."""
    params = config.channel_params
    N = len(params)
    amp = 1 / math.sqrt(2)
    exp = {"match": 1.0 / N}
    for j, n in enumerate(params):
        for k, m in enumerate(params):
            probs = gbs.gbm_probabilities(amp, amp, n, m)
            for o in gbs.GbsOutcome:
                exp[f"outcome[{j},{k}]={o.label}"] = probs[o]
        exp[f"success|n{j}"] = gbs.p_suc(n)
    sifted = sum(gbs.p_suc(n) for n in params) / N**2 * _hop_factor(config.repeater_links)
    exp["sifted_rate"] = sifted
    exp["key_rate_post"] = (1 - config.disclosure_fraction) * sifted
    exp["qber"] = 0.0
    return exp


def oracle_expectations(oracle: OracleDistribution, disclosure_fraction: float, hop_factor: float = 1.0) -> dict[str, float]:
    N = len(oracle.channel_params)
    exp = {"match": oracle.p_match()}
    for j in range(N):
        for k in range(N):
            dist = oracle.outcome_distribution(j, k)
            for o in gbs.GbsOutcome:
                exp[f"outcome[{j},{k}]={o.label}"] = dist[o]
        exp[f"success|n{j}"] = oracle.success_given_match(j)
    sifted = oracle.p_sifted() * hop_factor
    exp["sifted_rate"] = sifted
    exp["key_rate_post"] = (1 - disclosure_fraction) * sifted
    exp["qber"] = oracle.qber()
    if oracle.kind is not AttackKind.PASSIVE:
        exp["eve_information"] = oracle.eve_information()
        exp["e_match"] = oracle.e_match()
    return exp


def oracle_for(config: ProtocolConfig, attack: AttackModel) -> OracleDistribution:
    from .oracle import exhaustive_oracle

    if attack.kind is not AttackKind.PASSIVE and any(x != 1.0 for x in config.repeater_links):
        raise ValueError("the oracle does not model attacks on partially entangled repeater links")
    return exhaustive_oracle(config.channel_params, attack.kind, attack.guess_pool, attack.knows_source)


def _run(config: ProtocolConfig, attack: AttackModel) -> Transcript:
    if config.mode is Mode.CONTROLLED:
        return controlled_run(config, attack, charlie_discloses=True)
    if config.mode is Mode.REPEATER:
        return repeater_run(config, attack)
    return run_protocol(config, attack)


def stats_from_transcript(transcript: Transcript, expected: dict[str, float] | None = None) -> TrialStats:
    cfg = transcript.config
    attack = transcript.attack or AttackModel()
    obs = observe(transcript)
    if expected is None:
        if attack.kind is AttackKind.PASSIVE:
            expected = analytic_expectations(cfg)
        else:
            expected = oracle_expectations(oracle_for(cfg, attack), cfg.disclosure_fraction, _hop_factor(cfg.repeater_links))
    for o in obs:
        if o.name == "key_rate_post":
            # the kept count is (1 - f) of the sifted count up to rounding
            o.scale = transcript.key_length / transcript.sifted_count if transcript.sifted_count else 1.0
            o.hits = transcript.sifted_count
    z = {o.name: o.z(expected[o.name]) for o in obs if o.name in expected}
    N = len(cfg.channel_params)
    success = {}
    for j in range(N):
        so = next(o for o in obs if o.name == f"success|n{j}")
        success[j] = (so.hits, so.total)
    T = len(transcript.records)
    return TrialStats(
        channel_params=cfg.channel_params,
        attack=attack,
        trials=T,
        sifted_count=transcript.sifted_count,
        success_counts=success,
        qber=transcript.qber,
        key_rate_pre_disclosure=transcript.sifted_count / T,
        key_rate_post_disclosure=transcript.key_length / T,
        observations=obs,
        expected=expected,
        z_scores=z,
        hop_factor=_hop_factor(cfg.repeater_links),
    )


def monte_carlo(config: ProtocolConfig, adversary: AttackModel | None = None, trials: int | None = None) -> TrialStats:
    """Run ``trials`` protocol rounds and score every statistic against its
    analytic (passive) or oracle (attacked) expectation."""
    trials = config.num_rounds if trials is None else trials
    if trials < 1000:
        raise ValueError("monte_carlo needs at least 1000 trials")
    config = dataclasses.replace(config, num_rounds=trials)
    transcript = _run(config, adversary or AttackModel())
    return stats_from_transcript(transcript)


@dataclass
class ReportRow:
    name: str
    empirical: float
    reference: float
    abs_dev: float
    z: float
    passed: bool


def compare_report(stats: TrialStats, oracle: OracleDistribution, disclosure_fraction: float = 0.5) -> list[ReportRow]:
    """Tabulate each empirical statistic against the oracle at the 5 sigma policy."""
    if tuple(oracle.channel_params) != tuple(stats.channel_params):
        raise ValueError(
            f"parameter mismatch: stats at {stats.channel_params}, oracle at {oracle.channel_params}"
        )
    if oracle.kind is not stats.attack.kind:
        raise ValueError(f"attack mismatch: stats {stats.attack.kind.value}, oracle {oracle.kind.value}")
    ref = oracle_expectations(oracle, disclosure_fraction, stats.hop_factor)
    rows = []
    for o in stats.observations:
        if o.name not in ref:
            continue
        z = o.z(ref[o.name])
        rows.append(ReportRow(o.name, o.value, ref[o.name], abs(o.value - ref[o.name]), z, abs(z) <= Z_LIMIT))
    return rows


REPORT_COLUMNS = ("statistic", "empirical", "reference", "abs_dev", "z", "pass")


def write_report(rows: Sequence[ReportRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.name, f"{r.empirical:.15g}", f"{r.reference:.15g}", f"{r.abs_dev:.15g}", f"{r.z:.6g}", int(r.passed)])


TRIAL_COLUMNS = ("statistic", "hits", "total", "value", "expected", "z")


def write_trial_stats(stats: TrialStats, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for o in stats.observations:
            exp = stats.expected.get(o.name)
            w.writerow([
                o.name, o.hits, o.total, f"{o.value:.15g}",
                "" if exp is None else f"{exp:.15g}",
                "" if o.name not in stats.z_scores else f"{stats.z_scores[o.name]:.6g}",
            ])


# -- (n1, n2) scan -----------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    lo: float = 0.05
    hi: float = 0.95
    step: float = 0.05

    def points(self) -> np.ndarray:
        if not (0.0 < self.lo < 1.0 and 0.0 < self.hi < 1.0):
            raise ValueError("grid must lie inside (0, 1)")
        if self.step <= 0 or self.hi < self.lo:
            raise ValueError("grid needs step > 0 and hi >= lo")
        if self.step > self.hi - self.lo:
            raise ValueError(f"step {self.step} larger than the range [{self.lo}, {self.hi}]")
        count = int(round((self.hi - self.lo) / self.step)) + 1
        if count < 10:
            raise ValueError(f"grid has {count} points per axis; need at least 10")
        return np.round(self.lo + self.step * np.arange(count), 12)


@dataclass
class ScanResult:
    grid: GridSpec
    axis: np.ndarray
    p_wrong: np.ndarray
    rate: np.ndarray
    objective: np.ndarray
    argmax: tuple[float, float]
    argmin_offdiag: tuple[float, float]

    @property
    def argmax_pairs(self) -> list[tuple[float, float]]:
        """All grid points reaching the maximum (the surface is symmetric)."""
        i, j = np.nonzero(self.objective == self.objective.max())
        return [(float(self.axis[a]), float(self.axis[b])) for a, b in zip(i, j)]


def objective(n1: float, n2: float) -> float:
    """Eve's error probability times the final key rate."""
    return gbs.p_wrong(n1, n2) * gbs.p_final_rate([n1, n2])


def scan(grid: GridSpec = GridSpec()) -> ScanResult:
    axis = grid.points()
    size = axis.size
    pw = np.empty((size, size))
    rate = np.empty((size, size))
    for a, n1 in enumerate(axis):
        for b, n2 in enumerate(axis):
            pw[a, b] = gbs.p_wrong(n1, n2)
            rate[a, b] = gbs.p_final_rate([n1, n2])
    f = pw * rate
    a, b = np.unravel_index(int(np.argmax(f)), f.shape)
    off = np.where(np.eye(size, dtype=bool), np.inf, f)
    c, d = np.unravel_index(int(np.argmin(off)), f.shape)
    return ScanResult(grid, axis, pw, rate, f, (float(axis[a]), float(axis[b])), (float(axis[c]), float(axis[d])))


SCAN_COLUMNS = ("n1", "n2", "p_wrong", "rate", "F")


def write_scan(result: ScanResult, path: Path) -> int:
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for a, n1 in enumerate(result.axis):
            for b, n2 in enumerate(result.axis):
                w.writerow([f"{n1:.12g}", f"{n2:.12g}", f"{result.p_wrong[a, b]:.15g}",
                            f"{result.rate[a, b]:.15g}", f"{result.objective[a, b]:.15g}"])
                rows += 1
    return rows
