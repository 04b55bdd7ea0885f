"""Typed lexicon and bi-directional maximum matching dictionary features."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from rdcnn.corpus import TAGS, EntitySpan, EntityType, encode_bieos

NO_MATCH = "None"
# Dictionary feature vocabulary: every tag plus the "None" marker (22 values).
FEATURES: tuple[str, ...] = (NO_MATCH,) + TAGS


class LexiconError(ValueError):
    pass


class Lexicon:
    """Immutable mapping from surface string to entity type."""

    def __init__(self, entries: Mapping[str, EntityType | str] | Iterable[tuple[str, EntityType | str]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        table: dict[str, EntityType] = {}
        for surface, etype in items:
            _add(table, surface, etype)
        self._entries = table
        self.max_len = max(map(len, table), default=0)

    @classmethod
    def from_tsv(cls, path: str | Path) -> "Lexicon":
        """Load ``surface<TAB>type`` lines; ``#`` starts a comment line."""
        table: dict[str, EntityType] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise LexiconError(f"{path}:{lineno}: expected 'surface<TAB>type', got {line!r}")
                try:
                    _add(table, parts[0], parts[1])
                except LexiconError as exc:
                    raise LexiconError(f"{path}:{lineno}: {exc}") from None
        return cls(table)

    def get(self, surface: str) -> EntityType | None:
        return self._entries.get(surface)

    def __contains__(self, surface: str) -> bool:
        return surface in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()


def _add(table: dict[str, EntityType], surface: str, etype: EntityType | str) -> None:
    if not surface:
        raise LexiconError("empty surface string")
    try:
        etype = etype if isinstance(etype, EntityType) else EntityType.parse(etype)
    except ValueError as exc:
        raise LexiconError(f"{surface!r}: {exc}") from None
    old = table.get(surface)
    if old is not None and old != etype:
        raise LexiconError(f"conflicting types for surface {surface!r}: {old.value} vs {etype.value}")
    table[surface] = etype


class Segment(NamedTuple):
    start: int
    end: int  # inclusive
    type: EntityType | None


def forward_max_match(text: str, lex: Lexicon) -> list[Segment]:
    segments = []
    i, n = 0, len(text)
    while i < n:
        for size in range(min(lex.max_len, n - i), 0, -1):
            etype = lex.get(text[i : i + size])
            if etype is not None:
                segments.append(Segment(i, i + size - 1, etype))
                i += size
                break
        else:
            segments.append(Segment(i, i, None))
            i += 1
    return segments


def backward_max_match(text: str, lex: Lexicon) -> list[Segment]:
    segments = []
    j = len(text)
    while j > 0:
        for size in range(min(lex.max_len, j), 0, -1):
            etype = lex.get(text[j - size : j])
            if etype is not None:
                segments.append(Segment(j - size, j - 1, etype))
                j -= size
                break
        else:
            segments.append(Segment(j - 1, j - 1, None))
            j -= 1
    segments.reverse()
    return segments


def bdmm_segment(text: str, lex: Lexicon) -> list[Segment]:
    """Pick between forward and backward maximum matching.

    Fewer segments wins; on a tie, fewer single-character segments; if still
    tied, the backward result.
    """
    text = getattr(text, "text", text)
    fmm = forward_max_match(text, lex)
    bmm = backward_max_match(text, lex)
    if len(fmm) != len(bmm):
        return fmm if len(fmm) < len(bmm) else bmm
    singles_f = sum(s.start == s.end for s in fmm)
    singles_b = sum(s.start == s.end for s in bmm)
    return fmm if singles_f < singles_b else bmm


def dict_features(text: str, lex: Lexicon) -> list[str]:
    """Per-character BIEOS features from matched segments, "None" elsewhere."""
    text = getattr(text, "text", text)
    segments = bdmm_segment(text, lex)
    spans = [EntitySpan(s.start, s.end, s.type) for s in segments if s.type is not None]
    tags = encode_bieos(spans, len(text))
    return [NO_MATCH if tag == "O" else tag for tag in tags]
