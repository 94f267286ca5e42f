"""Evaluation record ingest, aggregation, and table rendering.

Records arrive as JSONL, one utterance per line: the emotion the decode
was conditioned on, the emotion a recognizer heard, a word error rate,
and a mean-opinion score, plus optional grouping fields. Aggregation is
deliberately dumb -- means over records -- but exact about it: merging
two disjoint aggregates weighted by their sizes reproduces the aggregate
of the union to floating-point accuracy, so sharded evaluation runs can
be combined without re-reading anything.

Rendering is fixed at two decimals with accuracy and WER as percentages
("73.57%", "3.69", "4.28%"): every table in and out of this package
formats through here so numbers stay comparable by eye.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptyInputError, InvalidInputError

__all__ = [
    "UtteranceRecord",
    "IngestResult",
    "Summary",
    "SweepPoint",
    "ingest",
    "aggregate",
    "merge_summaries",
    "sweep_table",
    "write_records",
    "write_summary_csv",
]

_REQUIRED_KEYS = ("id", "target_emotion", "predicted_emotion", "wer", "mos")
_OPTIONAL_KEYS = ("policy", "mismatch_level", "n_words", "source")


@dataclass(frozen=True)
class UtteranceRecord:
    """One evaluated utterance."""

    id: str
    target_emotion: str
    predicted_emotion: str | None
    wer: float
    mos: float
    policy: str = "unspecified"
    mismatch_level: str | None = None
    n_words: int | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidInputError("record id must be non-empty")
        if not self.target_emotion:
            raise InvalidInputError("target_emotion must be non-empty")
        if not (np.isfinite(self.wer) and self.wer >= 0.0):
            raise InvalidInputError(f"wer must be finite and >= 0, got {self.wer}")
        if not (np.isfinite(self.mos) and 1.0 <= self.mos <= 5.0):
            raise InvalidInputError(f"mos must lie in [1, 5], got {self.mos}")
        if self.n_words is not None and self.n_words < 1:
            raise InvalidInputError(f"n_words must be >= 1, got {self.n_words}")

    @property
    def correct(self) -> bool:
        return self.predicted_emotion == self.target_emotion

    def to_json(self) -> str:
        row = {
            "id": self.id,
            "target_emotion": self.target_emotion,
            "predicted_emotion": self.predicted_emotion,
            "wer": self.wer,
            "mos": self.mos,
            "policy": self.policy,
        }
        for key in ("mismatch_level", "n_words", "source"):
            value = getattr(self, key)
            if value is not None:
                row[key] = value
        return json.dumps(row)


@dataclass(frozen=True)
class IngestResult:
    records: tuple[UtteranceRecord, ...]
    diagnostics: tuple[str, ...]  # one "line N: why" entry per rejected line


def _record_from_row(row: Mapping) -> UtteranceRecord:
    missing = [k for k in _REQUIRED_KEYS if k not in row]
    if missing:
        raise InvalidInputError(f"missing keys: {missing}")
    predicted = row["predicted_emotion"]
    if predicted is not None and not isinstance(predicted, str):
        raise InvalidInputError("predicted_emotion must be a string or null")
    kwargs = {}
    for key in _OPTIONAL_KEYS:
        if key in row and row[key] is not None:
            kwargs[key] = row[key]
    return UtteranceRecord(
        id=str(row["id"]),
        target_emotion=str(row["target_emotion"]),
        predicted_emotion=predicted,
        wer=float(row["wer"]),
        mos=float(row["mos"]),
        **kwargs,
    )


def ingest(source: str | Iterable[str]) -> IngestResult:
    """Read JSONL records from a path or an iterable of lines.

    Bad lines never abort the run: each one contributes a line-numbered
    diagnostic and is skipped. Only a source with *zero* usable records
    raises EmptyInputError -- an evaluation that quietly aggregates
    nothing would render a plausible-looking empty table.
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    records: list[UtteranceRecord] = []
    diagnostics: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
        except ValueError as exc:
            diagnostics.append(f"line {lineno}: not valid JSON ({exc})")
            continue
        if not isinstance(row, dict):
            diagnostics.append(f"line {lineno}: expected a JSON object")
            continue
        try:
            records.append(_record_from_row(row))
        except (InvalidInputError, ValueError, TypeError) as exc:
            diagnostics.append(f"line {lineno}: {exc}")
    if not records:
        raise EmptyInputError(
            f"no usable records ({len(diagnostics)} rejected lines)"
        )
    return IngestResult(records=tuple(records), diagnostics=tuple(diagnostics))


@dataclass(frozen=True)
class Summary:
    """Aggregate over n utterances. wer_pooling records how WER was
    averaged ('utterance': plain mean; 'words': word-count weighted)."""

    n: int
    er_accuracy: float
    wer: float
    mos: float
    wer_pooling: str = "utterance"
    n_words: int | None = None

    @property
    def er_text(self) -> str:
        return f"{self.er_accuracy * 100:.2f}%"

    @property
    def wer_text(self) -> str:
        return f"{self.wer * 100:.2f}%"

    @property
    def mos_text(self) -> str:
        return f"{self.mos:.2f}"


def aggregate(
    records: Sequence[UtteranceRecord],
    *,
    group_by: str | None = None,
    wer_pooling: str = "utterance",
) -> Summary | dict[str, Summary]:
    """Mean accuracy/WER/MOS, optionally split by a grouping field.

    ``group_by`` may be None, "policy", or "mismatch_level". A missing
    predicted emotion counts as a miss, not a skip. Mixing records from
    different sources is legal but warned about, since cross-source means
    rarely mean anything.
    """
    if not records:
        raise EmptyInputError("no records to aggregate")
    if wer_pooling not in ("utterance", "words"):
        raise ConfigError(
            f"wer_pooling must be 'utterance' or 'words', got {wer_pooling!r}"
        )
    sources = {r.source for r in records if r.source is not None}
    if len(sources) > 1:
        warnings.warn(
            f"aggregating across {len(sources)} sources: {sorted(sources)}",
            stacklevel=2,
        )
    if group_by is None:
        return _summarize(records, wer_pooling)
    if group_by not in ("policy", "mismatch_level"):
        raise ConfigError(
            f"group_by must be 'policy' or 'mismatch_level', got {group_by!r}"
        )
    groups: dict[str, list[UtteranceRecord]] = {}
    for r in records:
        key = getattr(r, group_by) or "unspecified"
        groups.setdefault(key, []).append(r)
    return {k: _summarize(v, wer_pooling) for k, v in sorted(groups.items())}


def _summarize(records: Sequence[UtteranceRecord], wer_pooling: str) -> Summary:
    n = len(records)
    er = sum(r.correct for r in records) / n
    mos = sum(r.mos for r in records) / n
    if wer_pooling == "words":
        missing = [r.id for r in records if r.n_words is None]
        if missing:
            raise ConfigError(
                f"word-weighted pooling needs n_words on every record; "
                f"missing on {missing[:5]}"
            )
        total_words = sum(r.n_words for r in records)
        wer = sum(r.wer * r.n_words for r in records) / total_words
        return Summary(
            n=n, er_accuracy=er, wer=wer, mos=mos,
            wer_pooling="words", n_words=total_words,
        )
    wer = sum(r.wer for r in records) / n
    return Summary(n=n, er_accuracy=er, wer=wer, mos=mos)


def merge_summaries(summaries: Sequence[Summary]) -> Summary:
    """Size-weighted combination, the exact inverse of sharding.

    All inputs must share a pooling mode; word-pooled summaries weight
    WER by their word totals, utterance-pooled ones by record counts.
    """
    if not summaries:
        raise EmptyInputError("no summaries to merge")
    pooling = {s.wer_pooling for s in summaries}
    if len(pooling) != 1:
        raise ConfigError(f"cannot merge mixed wer_pooling modes: {sorted(pooling)}")
    (mode,) = pooling
    n = sum(s.n for s in summaries)
    er = sum(s.er_accuracy * s.n for s in summaries) / n
    mos = sum(s.mos * s.n for s in summaries) / n
    if mode == "words":
        total_words = sum(s.n_words for s in summaries)
        wer = sum(s.wer * s.n_words for s in summaries) / total_words
        return Summary(
            n=n, er_accuracy=er, wer=wer, mos=mos,
            wer_pooling="words", n_words=total_words,
        )
    wer = sum(s.wer * s.n for s in summaries) / n
    return Summary(n=n, er_accuracy=er, wer=wer, mos=mos)


@dataclass(frozen=True)
class SweepPoint:
    scale: float
    summary: Summary
    label: str | None = None


def sweep_table(
    points: Sequence[SweepPoint],
    *,
    references: Sequence[SweepPoint] = (),
) -> str:
    """Fixed-width text table of a guidance-scale sweep, sorted by scale.

    Needs at least two sweep points (one point is not a sweep) and
    rejects duplicate scales, which always indicate a collation bug.
    Reference rows (baseline, adaptive schedules, ...) render beneath a
    separator in the order given.
    """
    if len(points) < 2:
        raise ConfigError(f"a sweep needs at least 2 points, got {len(points)}")
    scales = [p.scale for p in points]
    if len(set(scales)) != len(scales):
        dupes = sorted({s for s in scales if scales.count(s) > 1})
        raise ConfigError(f"duplicate sweep scales: {dupes}")
    rows = [["scale", "n", "er_acc", "wer", "mos"]]
    for p in sorted(points, key=lambda p: p.scale):
        label = p.label if p.label is not None else f"{p.scale:g}"
        s = p.summary
        rows.append([label, str(s.n), s.er_text, s.wer_text, s.mos_text])
    ref_rows = []
    for p in references:
        s = p.summary
        ref_rows.append(
            [p.label or "reference", str(s.n), s.er_text, s.wer_text, s.mos_text]
        )
    widths = [
        max(len(r[i]) for r in rows + ref_rows) for i in range(len(rows[0]))
    ]

    def fmt(row):
        return "  ".join(cell.rjust(w) for cell, w in zip(row, widths))

    out = [fmt(rows[0]), fmt(["-" * w for w in widths])]
    out.extend(fmt(r) for r in rows[1:])
    if ref_rows:
        out.append(fmt(["-" * w for w in widths]))
        out.extend(fmt(r) for r in ref_rows)
    return "\n".join(out)


def write_records(path: str, records: Sequence[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def write_summary_csv(path: str, summaries: Mapping[str, Summary]) -> None:
    """One labeled summary per row, rendered through the standard formats."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["group", "n", "er_accuracy", "wer", "mos"])
    for label, s in summaries.items():
        writer.writerow([label, s.n, s.er_text, s.wer_text, s.mos_text])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buffer.getvalue())
