"""Line-oriented CSV serialization of transcripts.

The file opens with one ``header`` row per record tag naming that tag's
columns, followed by the data rows, each starting with its tag::

    header,run,round_id,n_index,m_index,key_bit,outcome,bob_bit,verdict
    header,eve,round_id,guessed_e,eve_bit_guess,eve_gbm_outcome,knew_bit
    header,summary,sifted_count,key_length,qber,aborted
    run,0,1,1,0,PhiMinus,0,SiftedKept
    ...
    summary,20358,10179,0,false

``eve`` rows (and their header) only appear for non-passive runs. Missing
values are written as ``none``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import IO

from .gbs import GbsOutcome
from .protocol import Transcript

RUN_COLUMNS = ("round_id", "n_index", "m_index", "key_bit", "outcome", "bob_bit", "verdict")
EVE_COLUMNS = ("round_id", "guessed_e", "eve_bit_guess", "eve_gbm_outcome", "knew_bit")
SUMMARY_COLUMNS = ("sifted_count", "key_length", "qber", "aborted")
MESSAGE_COLUMNS = ("round_id", "sender", "kind", "payload")


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, GbsOutcome):
        return v.label
    if hasattr(v, "value") and isinstance(v.value, str):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_transcript(t: Transcript, fh: IO[str], audit: bool = True) -> None:
    """Write ``t``; with ``audit=False`` the Eve audit rows are left out."""
    w = csv.writer(fh, lineterminator="\n")
    with_eve = audit and bool(t.eve_records)
    w.writerow(("header", "run", *RUN_COLUMNS))
    if with_eve:
        w.writerow(("header", "eve", *EVE_COLUMNS))
    w.writerow(("header", "summary", *SUMMARY_COLUMNS))
    for r in t.records:
        w.writerow(("run", *map(_fmt, (r.round_id, r.bob_n_index, r.alice_m_index, r.alice_key_bit,
                                      r.gbm_outcome, r.bob_bit, r.verdict))))
    if with_eve:
        for e in t.eve_records:
            w.writerow(("eve", *map(_fmt, (e.round_id, e.guessed_e, e.eve_bit_guess, e.eve_gbm_outcome, e.knew_bit))))
    w.writerow(("summary", *map(_fmt, (t.sifted_count, t.key_length, t.qber, t.aborted))))


def write_messages(t: Transcript, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(MESSAGE_COLUMNS)
    for m in t.messages:
        payload = m.payload
        if isinstance(payload, tuple):
            payload = ";".join(_fmt(x) for x in payload)
        w.writerow((m.round_id, m.sender, m.kind.value, _fmt(payload)))


def save(t: Transcript, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "transcript.csv", "w", newline="") as fh:
        write_transcript(t, fh)
    with open(directory / "messages.csv", "w", newline="") as fh:
        write_messages(t, fh)


def read_transcript(fh: IO[str]) -> dict[str, list[dict[str, str]]]:
    """Parse a transcript file into ``{tag: [row dicts]}``."""
    headers: dict[str, tuple[str, ...]] = {}
    out: dict[str, list[dict[str, str]]] = {}
    for row in csv.reader(fh):
        if not row:
            continue
        if row[0] == "header":
            headers[row[1]] = tuple(row[2:])
            continue
        tag = row[0]
        if tag not in headers:
            raise ValueError(f"record tag {tag!r} has no header row")
        cols = headers[tag]
        if len(row) - 1 != len(cols):
            raise ValueError(f"{tag} row has {len(row) - 1} fields, header names {len(cols)}")
        out.setdefault(tag, []).append(dict(zip(cols, row[1:])))
    return out
