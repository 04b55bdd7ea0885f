"""Clinical corpus handling: BIEOS tags, clause splitting, file IO and scoring."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class EntityType(str, enum.Enum):
    DISEASE = "disease"
    SYMPTOM = "symptom"
    EXAM = "exam"
    TREATMENT = "treatment"
    BODY = "body"

    @property
    def code(self) -> str:
        return _CODES[self]

    @classmethod
    def parse(cls, name: str) -> "EntityType":
        """Accept either the full name ("body") or the one-letter code ("b")."""
        key = name.strip().lower()
        if key in _BY_CODE:
            return _BY_CODE[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown entity type {name!r}") from None


_CODES = {
    EntityType.DISEASE: "d",
    EntityType.SYMPTOM: "s",
    EntityType.EXAM: "e",
    EntityType.TREATMENT: "t",
    EntityType.BODY: "b",
}
_BY_CODE = {code: etype for etype, code in _CODES.items()}

ENTITY_TYPES: tuple[EntityType, ...] = tuple(EntityType)
MARKERS = "BIES"
OUTSIDE = "O"

# "O" first, then B/I/E/S for each type in declaration order: 21 tags.
TAGS: tuple[str, ...] = (OUTSIDE,) + tuple(
    f"{marker}-{etype.code}" for etype in ENTITY_TYPES for marker in MARKERS
)
TAG_INDEX = {tag: i for i, tag in enumerate(TAGS)}

CLAUSE_DELIMITERS = frozenset({"，", ","})


def parse_tag(tag: str) -> tuple[str, EntityType | None]:
    """Split "B-b" into ("B", EntityType.BODY); "O" gives ("O", None)."""
    if tag == OUTSIDE:
        return OUTSIDE, None
    marker, sep, code = tag.partition("-")
    if not sep or marker not in MARKERS or code not in _BY_CODE:
        raise ValueError(f"not a BIEOS tag: {tag!r}")
    return marker, _BY_CODE[code]


def make_tag(marker: str, etype: EntityType) -> str:
    return f"{marker}-{etype.code}"


@dataclass(frozen=True, order=True)
class EntitySpan:
    """A typed character span; ``end`` is inclusive."""

    start: int
    end: int
    type: EntityType

    def __post_init__(self):
        if not isinstance(self.type, EntityType):
            object.__setattr__(self, "type", EntityType.parse(self.type))
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span bounds {self.start}..{self.end}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def shift(self, offset: int) -> "EntitySpan":
        return EntitySpan(self.start + offset, self.end + offset, self.type)

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end, "type": self.type.value}


def check_spans(spans: Iterable[EntitySpan], n: int) -> list[EntitySpan]:
    """Return spans sorted by start; raise ValueError on overlap or out-of-range."""
    ordered = sorted(spans)
    prev = None
    for span in ordered:
        if span.end >= n:
            raise ValueError(f"span {span} exceeds sequence length {n}")
        if prev is not None and span.start <= prev.end:
            raise ValueError(f"span {span} overlaps {prev}")
        prev = span
    return ordered


def encode_bieos(spans: Iterable[EntitySpan], n: int) -> list[str]:
    tags = [OUTSIDE] * n
    for span in check_spans(spans, n):
        if span.start == span.end:
            tags[span.start] = make_tag("S", span.type)
            continue
        tags[span.start] = make_tag("B", span.type)
        for i in range(span.start + 1, span.end):
            tags[i] = make_tag("I", span.type)
        tags[span.end] = make_tag("E", span.type)
    return tags


def decode_bieos(tags: Sequence[str | int]) -> list[EntitySpan]:
    """Convert a tag sequence to spans, repairing malformed transitions.

    Valid sequences decode exactly. Otherwise an open span is continued by
    I/E of the same type and closed by anything else; an I or E that cannot
    continue an open span starts a new one (an orphan E is a single-char span).
    A span left open at the end of the sequence is closed there.
    """
    spans = []
    open_start, open_type = None, None

    def close(end):
        nonlocal open_start, open_type
        if open_start is not None:
            spans.append(EntitySpan(open_start, end, open_type))
        open_start, open_type = None, None

    for i, tag in enumerate(tags):
        if not isinstance(tag, str):
            tag = TAGS[tag]
        marker, etype = parse_tag(tag)
        continues = open_start is not None and etype == open_type
        if marker == OUTSIDE:
            close(i - 1)
        elif marker == "S":
            close(i - 1)
            spans.append(EntitySpan(i, i, etype))
        elif marker == "B":
            close(i - 1)
            open_start, open_type = i, etype
        elif marker == "I":
            if not continues:
                close(i - 1)
                open_start, open_type = i, etype
        else:  # E
            if not continues:
                close(i - 1)
                open_start, open_type = i, etype
            close(i)
    close(len(tags) - 1)
    return spans


@dataclass(frozen=True)
class Clause:
    """A comma-delimited piece of a source text starting at ``offset``."""

    text: str
    offset: int = 0

    def __len__(self) -> int:
        return len(self.text)

    @property
    def source_indices(self) -> range:
        return range(self.offset, self.offset + len(self.text))


def split_clauses(text: str) -> list[Clause]:
    """Split on full-width and ASCII commas, keeping each comma on its left clause."""
    clauses = []
    start = 0
    for i, ch in enumerate(text):
        if ch in CLAUSE_DELIMITERS:
            clauses.append(Clause(text[start : i + 1], start))
            start = i + 1
    if start < len(text):
        clauses.append(Clause(text[start:], start))
    return clauses


@dataclass
class Record:
    """One corpus line: a text and its entity annotation."""

    text: str
    entities: list[EntitySpan] = field(default_factory=list)

    def __post_init__(self):
        self.entities = check_spans(self.entities, len(self.text))

    def to_json(self) -> dict:
        return {"text": self.text, "entities": [s.to_json() for s in self.entities]}

    @classmethod
    def from_json(cls, obj: dict) -> "Record":
        spans = [EntitySpan(int(e["start"]), int(e["end"]), e["type"]) for e in obj.get("entities", [])]
        return cls(obj["text"], spans)

    def clauses(self) -> list[tuple[Clause, list[EntitySpan]]]:
        """Split into clauses with spans re-based to clause coordinates.

        Raises ValueError if an entity crosses a clause boundary.
        """
        out = []
        remaining = list(self.entities)
        for clause in split_clauses(self.text):
            lo, hi = clause.offset, clause.offset + len(clause) - 1
            inside = [s for s in remaining if lo <= s.start <= hi]
            for span in inside:
                if span.end > hi:
                    raise ValueError(f"entity {span} crosses a clause boundary at {hi}")
            out.append((clause, [s.shift(-lo) for s in inside]))
        return out


class CorpusError(ValueError):
    pass


def read_jsonl(path: str | Path) -> list[Record]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(Record.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return records


def dump_jsonl(records: Iterable[Record]) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records)


def format_columns(rows: Iterable[tuple[str, Sequence[str]]]) -> str:
    """Two-column "char<TAB>label" text with a blank line after each clause."""
    lines = []
    for text, labels in rows:
        lines.extend(f"{ch}\t{label}" for ch, label in zip(text, labels))
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalReport:
    per_type: dict[EntityType, Counts]
    micro: Counts

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1

    def rows(self) -> list[tuple[str, Counts]]:
        return [(t.value, self.per_type[t]) for t in ENTITY_TYPES] + [("micro", self.micro)]

    def to_table(self) -> str:
        lines = [f"{'type':<10} {'tp':>6} {'fp':>6} {'fn':>6} {'precision':>10} {'recall':>10} {'f1':>10}"]
        for name, c in self.rows():
            lines.append(
                f"{name:<10} {c.tp:>6} {c.fp:>6} {c.fn:>6} {c.precision:>10.4f} {c.recall:>10.4f} {c.f1:>10.4f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["type,tp,fp,fn,precision,recall,f1"]
        for name, c in self.rows():
            lines.append(f"{name},{c.tp},{c.fp},{c.fn},{c.precision:.4f},{c.recall:.4f},{c.f1:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(
    gold: Sequence[Iterable[EntitySpan]], pred: Sequence[Iterable[EntitySpan]]
) -> EvalReport:
    """Strict span-level scoring: a hit needs identical start, end and type."""
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} clauses but pred has {len(pred)}")
    per_type = {t: Counts() for t in ENTITY_TYPES}
    for g, p in zip(gold, pred):
        gset, pset = set(g), set(p)
        for span in gset & pset:
            per_type[span.type].tp += 1
        for span in pset - gset:
            per_type[span.type].fp += 1
        for span in gset - pset:
            per_type[span.type].fn += 1
    micro = Counts(
        sum(c.tp for c in per_type.values()),
        sum(c.fp for c in per_type.values()),
        sum(c.fn for c in per_type.values()),
    )
    return EvalReport(per_type, micro)
