"""Dataset records, JSONL parsing/serialization, and deterministic batching.

Two record shapes exist: inference triplets (anchor / entailment-positive /
contradiction-negative) and similarity pairs scored 0-5. Files are UTF-8
JSON lines, LF-separated, blank lines ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

NLI_TRIPLETS = "nli_triplets"
STS_PAIRS = "sts_pairs"


class DatasetError(ValueError):
    """Base class for dataset shape/content violations."""


class ParseError(DatasetError):
    """A malformed input line; carries the 1-based line number."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


def _require_text(value, field_name: str) -> str:
    if not isinstance(value, str):
        raise DatasetError(f"field '{field_name}' must be a string")
    if not value.strip():
        raise DatasetError(f"field '{field_name}' is empty after trimming")
    return value


@dataclass(frozen=True)
class Triplet:
    """One NLI record. The contradiction side is optional (pair-only data)."""

    anchor: str
    positive: str
    negative: str | None = None

    def __post_init__(self):
        _require_text(self.anchor, "anchor")
        _require_text(self.positive, "positive")
        if self.negative is not None:
            _require_text(self.negative, "negative")


@dataclass(frozen=True)
class ScoredPair:
    """One STS record with a gold score on the 0-5 scale."""

    sentence1: str
    sentence2: str
    raw_score: float

    def __post_init__(self):
        _require_text(self.sentence1, "sentence1")
        _require_text(self.sentence2, "sentence2")
        if not isinstance(self.raw_score, (int, float)) or isinstance(
            self.raw_score, bool
        ):
            raise DatasetError("field 'score' must be numeric")
        if not math.isfinite(self.raw_score) or not 0.0 <= self.raw_score <= 5.0:
            raise DatasetError(f"score {self.raw_score!r} outside [0, 5]")

    @property
    def unit_score(self) -> float:
        """Gold score normalized to [0, 1], exactly raw_score / 5."""
        return self.raw_score / 5.0


Record = Union[Triplet, ScoredPair]


@dataclass(frozen=True)
class DatasetSplit:
    """A homogeneous, nonempty sequence of records with a split label."""

    kind: str
    records: tuple[Record, ...]
    name: str = "train"

    def __post_init__(self):
        if self.kind not in (NLI_TRIPLETS, STS_PAIRS):
            raise DatasetError(f"unknown split kind {self.kind!r}")
        if not self.records:
            raise DatasetError("split has no records")
        want = Triplet if self.kind == NLI_TRIPLETS else ScoredPair
        if not all(isinstance(r, want) for r in self.records):
            raise DatasetError(f"records are not homogeneous {want.__name__}s")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_negatives(self) -> bool:
        return self.kind == NLI_TRIPLETS and all(
            r.negative is not None for r in self.records
        )


def _iter_json_lines(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ParseError(lineno, "record is not a JSON object")
        yield lineno, obj


def parse_nli(
    lines: Iterable[str], name: str = "train", allow_pairs: bool = False
) -> DatasetSplit:
    """Parse NLI JSONL into a split, preserving input order.

    Each line must carry string fields anchor/positive/negative and nothing
    else. With allow_pairs=True the negative field may be omitted, but the
    file must then omit it everywhere (mixed files are rejected).
    """
    records: list[Triplet] = []
    saw_negative = saw_pair = False
    for lineno, obj in _iter_json_lines(lines):
        extra = set(obj) - {"anchor", "positive", "negative"}
        if extra:
            raise ParseError(lineno, f"unexpected fields {sorted(extra)}")
        for key in ("anchor", "positive"):
            if key not in obj:
                raise ParseError(lineno, f"missing field '{key}'")
        if "negative" not in obj:
            if not allow_pairs:
                raise ParseError(lineno, "missing field 'negative'")
            saw_pair = True
        else:
            saw_negative = True
        if saw_negative and saw_pair:
            raise ParseError(lineno, "mix of pair and triplet records")
        try:
            records.append(
                Triplet(obj["anchor"], obj["positive"], obj.get("negative"))
            )
        except DatasetError as exc:
            raise ParseError(lineno, str(exc)) from exc
    if not records:
        raise DatasetError("empty dataset: no records found")
    return DatasetSplit(NLI_TRIPLETS, tuple(records), name)


def parse_sts(lines: Iterable[str], name: str = "train") -> DatasetSplit:
    """Parse STS JSONL: fields sentence1, sentence2 and a numeric 0-5 score."""
    records: list[ScoredPair] = []
    for lineno, obj in _iter_json_lines(lines):
        extra = set(obj) - {"sentence1", "sentence2", "score"}
        if extra:
            raise ParseError(lineno, f"unexpected fields {sorted(extra)}")
        for key in ("sentence1", "sentence2", "score"):
            if key not in obj:
                raise ParseError(lineno, f"missing field '{key}'")
        score = obj["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise ParseError(lineno, f"score {score!r} is not numeric")
        try:
            records.append(ScoredPair(obj["sentence1"], obj["sentence2"], float(score)))
        except DatasetError as exc:
            raise ParseError(lineno, str(exc)) from exc
    if not records:
        raise DatasetError("empty dataset: no records found")
    return DatasetSplit(STS_PAIRS, tuple(records), name)


def load_split(path: str | Path, kind: str, name: str | None = None) -> DatasetSplit:
    """Read a JSONL file from disk as the given split kind."""
    if kind not in (NLI_TRIPLETS, STS_PAIRS):
        raise DatasetError(f"unknown split kind {kind!r}")
    path = Path(path)
    label = name if name is not None else path.stem
    with open(path, encoding="utf-8") as fh:
        if kind == NLI_TRIPLETS:
            return parse_nli(fh, name=label, allow_pairs=True)
        return parse_sts(fh, name=label)


def serialize_split(split: DatasetSplit) -> str:
    """Render a split back to JSONL text; parse(serialize(s)) == s."""
    lines = []
    for r in split.records:
        if split.kind == NLI_TRIPLETS:
            obj = {"anchor": r.anchor, "positive": r.positive}
            if r.negative is not None:
                obj["negative"] = r.negative
        else:
            obj = {"sentence1": r.sentence1, "sentence2": r.sentence2, "score": r.raw_score}
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_split(split: DatasetSplit, path: str | Path) -> None:
    Path(path).write_text(serialize_split(split), encoding="utf-8")


def shuffled_batches(
    split: DatasetSplit, batch_size: int, seed: int, epoch: int
) -> list[list[Record]]:
    """Chunk a deterministic (seed, epoch)-keyed permutation of the records.

    Uses a counter-based generator (Philox) keyed on (seed, epoch) so the
    permutation is a pure function of those two integers. A final batch of
    size 1 is dropped for NLI splits: a one-pair in-batch-negatives step
    has zero gradient.
    """
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    key = np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, epoch & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64
    )
    rng = np.random.Generator(np.random.Philox(key=key))
    order = rng.permutation(len(split.records))
    shuffled = [split.records[i] for i in order]
    batches = [
        shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)
    ]
    if split.kind == NLI_TRIPLETS and batches and len(batches[-1]) == 1:
        batches.pop()
    return batches
