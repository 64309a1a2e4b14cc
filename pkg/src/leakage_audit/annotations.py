"""Durable append-only verdict log for human pair annotations.

One record per line: ``pair_id<TAB>verdict<TAB>duplicate<TAB>annotator<TAB>timestamp``.
``pair_id`` is ``probe_id + "|" + gallery_id``; the timestamp is an ISO-8601
UTC instant. Earlier records are never rewritten; the effective state of a
pair is the record with the latest timestamp, tie-broken by file order. A
truncated final line (crash artifact) is discarded on load and counted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import FormatError, ValidationError

VERDICTS = ("same", "different", "unsure")


def make_pair_id(probe_id: str, gallery_id: str) -> str:
    return f"{probe_id}|{gallery_id}"


def split_pair_id(pair_id: str) -> tuple[str, str]:
    probe_id, sep, gallery_id = pair_id.partition("|")
    if not sep or not probe_id or not gallery_id:
        raise ValidationError(f"malformed pair_id {pair_id!r}")
    return probe_id, gallery_id


@dataclass(frozen=True)
class AnnotationRecord:
    pair_id: str
    verdict: str
    duplicate: bool
    annotator: str
    timestamp: str  # ISO-8601 UTC

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValidationError(f"unknown verdict {self.verdict!r}")
        if self.duplicate and self.verdict != "same":
            raise ValidationError(
                f"pair {self.pair_id!r}: duplicate=true requires verdict=same"
            )
        parse_timestamp(self.timestamp)

    def to_line(self) -> str:
        dup = "true" if self.duplicate else "false"
        return f"{self.pair_id}\t{self.verdict}\t{dup}\t{self.annotator}\t{self.timestamp}"


def parse_timestamp(value: str) -> datetime:
    try:
        # fromisoformat in 3.10 does not accept a trailing Z
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValidationError(f"bad ISO-8601 timestamp {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def now_utc() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f+00:00")


@dataclass
class VerdictLog:
    """Parsed verdict file plus recovery bookkeeping."""

    records: list[AnnotationRecord]
    discarded_partial: int  # trailing incomplete lines dropped on load


def read_verdict_log(path: str | Path) -> VerdictLog:
    """Load all complete records; a damaged final line is dropped, not fatal."""
    path = Path(path)
    if not path.exists():
        return VerdictLog([], 0)
    raw = path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    trailing_newline = raw.endswith("\n")
    records: list[AnnotationRecord] = []
    discarded = 0
    for i, line in enumerate(lines):
        if line == "":
            continue
        last = i == len(lines) - 1 and not trailing_newline
        try:
            records.append(_parse_record(line))
        except (FormatError, ValidationError):
            if last:
                discarded += 1
            else:
                raise FormatError(f"{path}:{i + 1}: malformed verdict record") from None
    return VerdictLog(records, discarded)


def _parse_record(line: str) -> AnnotationRecord:
    fields = line.split("\t")
    if len(fields) != 5:
        raise FormatError(f"expected 5 fields, got {len(fields)}")
    pair_id, verdict, dup, annotator, timestamp = fields
    if dup not in ("true", "false"):
        raise FormatError(f"duplicate flag must be true/false, got {dup!r}")
    return AnnotationRecord(pair_id, verdict, dup == "true", annotator, timestamp)


def append_verdict(path: str | Path, record: AnnotationRecord) -> None:
    """Append one record and flush it to stable storage before returning."""
    path = Path(path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_line() + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def effective_state(records: list[AnnotationRecord]) -> dict[str, AnnotationRecord]:
    """Last record per pair_id by timestamp, tie-broken by file order."""
    state: dict[str, AnnotationRecord] = {}
    for record in records:
        current = state.get(record.pair_id)
        if current is None or parse_timestamp(record.timestamp) >= parse_timestamp(
            current.timestamp
        ):
            state[record.pair_id] = record
    return state
