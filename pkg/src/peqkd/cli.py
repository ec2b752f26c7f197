"""Command-line entry point.

    peqkd run     [--config FILE] [--mode controlled --charlie-discloses false] ...
    peqkd attack  --attack intercept|fake-source [--guess-pool 0.5,0.9] ...
    peqkd scan    [--grid 0.05,0.95,0.05]
    peqkd verify  [--trials 20000] [--threads 4]
    peqkd oracle  [--attack intercept]

Config files are flat ``key = value`` text; ``#`` starts a comment. Keys:
channel_params, num_rounds, disclosure_fraction, mode, repeater_links, seed,
charlie_discloses, station_discloses, reveal_per_round, attack, guess_pool,
eve_seed, knows_source, trials, grid. Command-line flags win over the file.

Exit codes: 0 success (an aborted-by-design run included), 1 verification
failure, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gbs
from .adversary import AttackKind, AttackModel, e_match_frequency, eve_information
from .analysis import GridSpec, compare_report, monte_carlo, oracle_for, scan, write_report, write_scan
from .oracle import exhaustive_oracle
from .protocol import DEFAULT_SEED, ConfigError, Mode, ProtocolConfig, controlled_run, repeater_run, run_protocol
from .quantum import fidelity, outcome_probabilities, tensor, make_state
from .transcript_io import save

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "channel_params": "0.5,0.9",
    "num_rounds": "10000",
    "disclosure_fraction": "0.5",
    "mode": "standard",
    "repeater_links": "",
    "seed": str(DEFAULT_SEED),
    "charlie_discloses": "true",
    "station_discloses": "",
    "reveal_per_round": "false",
    "attack": "intercept",
    "guess_pool": "",
    "eve_seed": "1",
    "knows_source": "false",
    "trials": "20000",
    "grid": "0.05,0.95,0.05",
}


def parse_config(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"not a comma-separated list of numbers: {s!r}") from None


def _int(s: str, key: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {s!r}") from None


def _bool(s: str, key: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be true or false, got {s!r}")


@dataclass
class Settings:
    values: dict[str, str]

    def __getitem__(self, key):
        return self.values[key]

    def protocol_config(self) -> ProtocolConfig:
        v = self.values
        mode = v["mode"]
        links = _floats(v["repeater_links"])
        if mode == "repeater" and not links:
            links = (1.0, 1.0, 1.0)
        try:
            frac = float(v["disclosure_fraction"])
        except ValueError:
            raise ConfigError("disclosure_fraction must be a number") from None
        return ProtocolConfig(
            channel_params=_floats(v["channel_params"]),
            num_rounds=_int(v["num_rounds"], "num_rounds"),
            disclosure_fraction=frac,
            mode=mode,
            repeater_links=links,
            seed=_int(v["seed"], "seed"),
            reveal_per_round=_bool(v["reveal_per_round"], "reveal_per_round"),
        )

    def attack_model(self) -> AttackModel:
        v = self.values
        try:
            kind = AttackKind(v["attack"])
        except ValueError:
            raise ConfigError(f"unknown attack {v['attack']!r}") from None
        pool = _floats(v["guess_pool"]) or _floats(v["channel_params"])
        try:
            return AttackModel(kind, pool, _int(v["eve_seed"], "eve_seed"), _bool(v["knows_source"], "knows_source"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def station_flags(self, n_links: int, withheld: list[int]) -> list[bool]:
        raw = self.values["station_discloses"]
        flags = [_bool(x, "station_discloses") for x in raw.split(",")] if raw.strip() else [True] * n_links
        if len(flags) != n_links:
            raise ConfigError(f"station_discloses has {len(flags)} entries for {n_links} stations")
        for k in withheld:
            if not 0 <= k < n_links:
                raise ConfigError(f"no repeater station {k}")
            flags[k] = False
        return flags


def load_settings(args) -> Settings:
    values = dict(DEFAULTS)
    if args.config:
        values.update(parse_config(Path(args.config).read_text()))
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "mode": args.mode,
        "channel_params": args.params,
        "num_rounds": args.rounds,
        "charlie_discloses": args.charlie_discloses,
        "attack": getattr(args, "attack", None),
        "guess_pool": getattr(args, "guess_pool", None),
        "grid": getattr(args, "grid", None),
        "repeater_links": args.links,
    }
    for k, v in overrides.items():
        if v is not None:
            values[k] = str(v)
    return Settings(values)


# -- subcommands -------------------------------------------------------------


def _execute_run(settings: Settings, args, attack: AttackModel | None):
    cfg = settings.protocol_config()
    if cfg.mode is Mode.CONTROLLED:
        return controlled_run(cfg, attack, _bool(settings["charlie_discloses"], "charlie_discloses"))
    if cfg.mode is Mode.REPEATER:
        flags = settings.station_flags(len(cfg.repeater_links), args.withhold_station or [])
        return repeater_run(cfg, attack, flags)
    return run_protocol(cfg, attack)


def _print_summary(t, out: Path) -> None:
    print(f"rounds={len(t.records)} sifted={t.sifted_count} key_length={t.key_length} "
          f"qber={t.qber:.6g} aborted={str(t.aborted).lower()} keys_equal={str(t.alice_key == t.bob_key).lower()}")
    info = eve_information(t)
    if t.eve_records:
        em = e_match_frequency(t)
        print(f"eve_information={'none' if info is None else f'{info:.6g}'} e_match={em:.6g}")
    print(f"wrote {out / 'transcript.csv'} and {out / 'messages.csv'}")


def cmd_run(args, settings: Settings) -> int:
    t = _execute_run(settings, args, None)
    save(t, Path(args.out))
    _print_summary(t, Path(args.out))
    return EXIT_OK


def cmd_attack(args, settings: Settings) -> int:
    model = settings.attack_model()
    t = _execute_run(settings, args, model)
    save(t, Path(args.out))
    _print_summary(t, Path(args.out))
    return EXIT_OK


def cmd_scan(args, settings: Settings) -> int:
    lo, hi, step = (_floats(settings["grid"]) + (None, None, None))[:3]
    if step is None:
        raise ConfigError("grid needs lo,hi,step")
    try:
        result = scan(GridSpec(lo, hi, step))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = write_scan(result, out / "scan.csv")
    print(f"argmax F at (n1, n2) = ({result.argmax[0]:g}, {result.argmax[1]:g}), F = {result.objective.max():.6g}")
    print(f"max-F points: {', '.join(f'({a:g}, {b:g})' for a, b in result.argmax_pairs)}")
    print(f"wrote {rows} rows to {out / 'scan.csv'}")
    return EXIT_OK


def cmd_oracle(args, settings: Settings) -> int:
    params = _floats(settings["channel_params"])
    kind = AttackKind(args.attack or "passive")
    pool = _floats(settings["guess_pool"]) or None
    try:
        dist = exhaustive_oracle(params, kind, pool)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n_index", "m_index", "outcome", "alice_bit", "bob_bit", "eve_guess", "eve_bit", "eve_outcome", "probability"))
        for b, p in zip(dist.branches, dist.weights):
            eve = b.eve if b.eve is not None else ("", "", "")
            w.writerow((b.n_index, b.m_index, gbs.GbsOutcome(b.outcome).label, b.alice_bit, b.bob_bit, *eve, f"{p:.17g}"))
    print(f"branches={len(dist.branches)} total={dist.total():.15g}")
    print(f"p_match={dist.p_match():.15g} p_sifted={dist.p_sifted():.15g} qber={dist.qber():.15g}")
    if kind is not AttackKind.PASSIVE:
        print(f"eve_information={dist.eve_information():.15g} e_match={dist.e_match():.15g}")
    return EXIT_OK


# -- verify ------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _closed_form_checks(seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    r1 = gbs.p_final_rate([0.5, 0.9])
    r2 = gbs.p_final_rate([0.55, 0.55])
    axis = np.linspace(0, 1, 52)[1:-1]
    ceiling = max(gbs.p_final_rate([a, b]) for a in axis for b in axis)
    checks.append(Check("rate_claims", abs(r1 - 0.203622) < 1e-6 and r1 > 0.20 and abs(r2 - 0.178308) < 1e-6
                        and r2 > 0.15 and ceiling < 0.25,
                        f"P(0.5,0.9)={r1:.9f} P(0.55,0.55)={r2:.9f} grid max={ceiling:.9f}"))
    worst = 0.0
    for _ in range(200):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        nrm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        a, b = a / nrm, b / nrm
        n, m = rng.uniform(0.01, 1.0, size=2)
        joint = tensor(make_state(1, [a, b]), gbs.channel_state(n))
        sim = outcome_probabilities(joint, 0, 1, gbs.gbs_basis(m))
        worst = max(worst, float(np.max(np.abs(sim - gbs.gbm_probabilities(a, b, n, m)))))
    checks.append(Check("gbm_probabilities", worst < 1e-12, f"max |closed form - simulation| = {worst:.3g}"))
    worst = 0.0
    for _ in range(100):
        n = float(rng.uniform(0.01, 0.99))
        probs = gbs.gbm_probabilities(1 / math.sqrt(2), 1 / math.sqrt(2), n, n)
        worst = max(worst, abs(probs[1] + probs[2] - gbs.p_suc(n)))
    checks.append(Check("p_suc", worst < 1e-12 and abs(gbs.p_suc(0.5) - 0.32) < 1e-12, f"max dev = {worst:.3g}"))
    worst = 0.0
    for _ in range(50):
        m, n = rng.uniform(0.05, 0.99, size=2)
        for o in (gbs.GbsOutcome.PHI_MINUS, gbs.GbsOutcome.PSI_PLUS):
            s = gbs.bob_conditional_state(1 / math.sqrt(2), 1 / math.sqrt(2), n, m, o)
            worst = max(worst, abs(fidelity(s, gbs.KeyBit(0).state) - (1 - gbs.p_wrong(m, n))))
    checks.append(Check("distortion", worst < 1e-12, f"max |F - (1 - P_wrong)| = {worst:.3g}"))
    res = scan(GridSpec())
    corner = {(0.05, 0.95), (0.95, 0.05)}
    diag = float(np.max(np.abs(np.diag(res.objective))))
    checks.append(Check("scan_argmax", set(res.argmax_pairs) <= corner and bool(res.argmax_pairs) and diag == 0.0,
                        f"argmax {res.argmax_pairs}, max |F| on diagonal {diag}"))
    return checks


def _oracle_checks() -> list[Check]:
    checks = []
    for kind in AttackKind:
        dist = exhaustive_oracle((0.5, 0.9), kind)
        ok = abs(dist.total() - 1) < 1e-12
        detail = f"mass={dist.total():.15g}"
        if kind is AttackKind.PASSIVE:
            ok &= abs(dist.p_sifted() - gbs.p_final_rate([0.5, 0.9])) < 1e-12
            detail += f" p_sifted={dist.p_sifted():.15g}"
        checks.append(Check(f"oracle_{kind.value}", ok, detail))
    return checks


def _mc_job(job):
    name, cfg, attack = job
    stats = monte_carlo(cfg, attack)
    rows = compare_report(stats, oracle_for(cfg, attack), cfg.disclosure_fraction)
    analytic_bad = [k for k, z in stats.z_scores.items() if not abs(z) <= 5]
    failed = [r.name for r in rows if not r.passed]
    return name, rows, failed + [f"analytic:{k}" for k in analytic_bad]


def run_checks(trials: int, seed: int, threads: int = 1, out: Path | None = None) -> list[Check]:
    checks = _closed_form_checks(seed) + _oracle_checks()
    params = (0.5, 0.9)
    jobs = [
        ("mc_passive", ProtocolConfig(params, trials, seed=seed), AttackModel()),
        ("mc_intercept", ProtocolConfig(params, trials, seed=seed), AttackModel("intercept", params, seed + 1)),
        ("mc_fake_source", ProtocolConfig(params, trials, mode="controlled", seed=seed),
         AttackModel("fake-source", params, seed + 2)),
        ("mc_n3", ProtocolConfig((0.3, 0.6, 0.9), trials, seed=seed + 3), AttackModel()),
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_mc_job, jobs))
    else:
        results = [_mc_job(j) for j in jobs]
    for name, rows, failed in results:
        if out is not None:
            write_report(rows, out / f"report_{name}.csv")
        checks.append(Check(name, not failed, "all within 5 sigma" if not failed else "failed: " + ", ".join(failed)))

    cfg = ProtocolConfig(params, 2000, mode="controlled", seed=seed)
    t = controlled_run(cfg, None, charlie_discloses=False)
    checks.append(Check("controlled_abort", t.aborted and t.key_length == 0, f"aborted={t.aborted}"))
    cfg = ProtocolConfig(params, 2000, mode="repeater", repeater_links=(1.0, 1.0, 1.0), seed=seed)
    t = repeater_run(cfg)
    checks.append(Check("repeater_chain", t.qber == 0 and t.alice_key == t.bob_key and not t.aborted,
                        f"qber={t.qber} key_length={t.key_length}"))
    return checks


def cmd_verify(args, settings: Settings) -> int:
    trials = _int(settings["trials"], "trials")
    if trials < 1000:
        raise ConfigError("verify needs --trials >= 1000")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checks = run_checks(trials, _int(settings["seed"], "seed"), args.threads, out)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("check", "pass", "detail"))
        for c in checks:
            w.writerow((c.name, int(c.passed), c.detail))
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:18s} {c.detail}")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials for verify")
    common.add_argument("--rounds", type=int, help="protocol rounds")
    common.add_argument("--params", help="channel parameters, comma-separated")
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--links", help="repeater link parameters, comma-separated")
    common.add_argument("--charlie-discloses", dest="charlie_discloses", choices=["true", "false"])
    common.add_argument("--withhold-station", dest="withhold_station", type=int, action="append",
                        help="repeater station index that withholds its reveal (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for verify (default 1)")

    p = argparse.ArgumentParser(prog="peqkd", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="honest protocol run")
    a = sub.add_parser("attack", parents=[common], help="protocol run with an eavesdropper")
    a.add_argument("--attack", choices=[k.value for k in AttackKind if k is not AttackKind.PASSIVE])
    a.add_argument("--guess-pool", dest="guess_pool", help="Eve's parameter guesses, comma-separated")
    s = sub.add_parser("scan", parents=[common], help="rate x eavesdropper-error surface")
    s.add_argument("--grid", help="lo,hi,step")
    sub.add_parser("verify", parents=[common], help="analytic / oracle / Monte Carlo comparison suite")
    o = sub.add_parser("oracle", parents=[common], help="exact branch enumeration")
    o.add_argument("--attack", choices=[k.value for k in AttackKind])
    o.add_argument("--guess-pool", dest="guess_pool")
    return p


COMMANDS = {"run": cmd_run, "attack": cmd_attack, "scan": cmd_scan, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        settings = load_settings(args)
        return COMMANDS[args.command](args, settings)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
