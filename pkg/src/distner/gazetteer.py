"""Typed gazetteers and distant labeling by phrase matching.

The matcher is greedy leftmost-longest: scanning left to right, the longest
gazetteer phrase starting at the current token wins and all its tokens take
the phrase's entity type (IO tagging, no begin/inside distinction).  Ties
between equal-length phrases of different types go to the earlier gazetteer
entry, which makes the inherent ambiguity of context-free matching
deterministic instead of hiding it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import LabelAssignment, Sentence, TagScheme
from .errors import CorpusFormatError, SchemaError

Phrase = tuple[str, ...]


@dataclass(frozen=True)
class GazetteerEntry:
    phrase: Phrase
    entity_type: str
    order: int


@dataclass
class Gazetteer:
    """A multiset of (phrase, entity type) entries indexed by first token."""

    entries: list[GazetteerEntry] = field(default_factory=list)
    _index: dict[str, list[GazetteerEntry]] = field(default_factory=dict, repr=False)

    @classmethod
    def from_pairs(cls, pairs: list[tuple[Phrase, str]], scheme: TagScheme | None = None) -> "Gazetteer":
        gaz = cls()
        seen: set[tuple[Phrase, str]] = set()
        for phrase, etype in pairs:
            phrase = tuple(phrase)
            if not phrase or any(not t for t in phrase):
                raise SchemaError(f"gazetteer phrase must be non-empty tokens, got {phrase!r}")
            if scheme is not None and etype not in scheme.entity_types:
                raise SchemaError(f"gazetteer type {etype!r} not in scheme {scheme.entity_types}")
            if (phrase, etype) in seen:
                continue
            seen.add((phrase, etype))
            entry = GazetteerEntry(phrase, etype, order=len(gaz.entries))
            gaz.entries.append(entry)
            gaz._index.setdefault(phrase[0], []).append(entry)
        return gaz

    def __len__(self) -> int:
        return len(self.entries)

    def candidates(self, first_token: str) -> list[GazetteerEntry]:
        return self._index.get(first_token, [])


def read_gazetteer(path: str | Path, scheme: TagScheme | None = None) -> Gazetteer:
    """Read "phrase<TAB>type" lines; phrase tokens are space-separated."""
    path = Path(path)
    pairs: list[tuple[Phrase, str]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected PHRASE<TAB>TYPE, got {line!r}")
            pairs.append((tuple(parts[0].split()), parts[1]))
    return Gazetteer.from_pairs(pairs, scheme)


def write_gazetteer(gaz: Gazetteer, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in gaz.entries:
            fh.write(f"{' '.join(entry.phrase)}\t{entry.entity_type}\n")


def _build_lookup(
    gaz: Gazetteer, case_sensitive: bool
) -> dict[str, list[tuple[Phrase, GazetteerEntry]]]:
    lookup: dict[str, list[tuple[Phrase, GazetteerEntry]]] = {}
    for entry in gaz.entries:
        phrase = entry.phrase if case_sensitive else tuple(t.lower() for t in entry.phrase)
        lookup.setdefault(phrase[0], []).append((phrase, entry))
    return lookup


def _match_sentence(
    tokens: tuple[str, ...],
    lookup: dict[str, list[tuple[Phrase, GazetteerEntry]]],
    scheme: TagScheme,
    case_sensitive: bool,
) -> np.ndarray:
    toks = list(tokens) if case_sensitive else [t.lower() for t in tokens]
    labels = np.zeros(len(toks), dtype=np.int64)
    i = 0
    while i < len(toks):
        best: tuple[Phrase, GazetteerEntry] | None = None
        for phrase, entry in lookup.get(toks[i], []):
            end = i + len(phrase)
            if end > len(toks) or tuple(toks[i:end]) != phrase:
                continue
            if best is None or len(phrase) > len(best[0]) or (
                len(phrase) == len(best[0]) and entry.order < best[1].order
            ):
                best = (phrase, entry)
        if best is None:
            i += 1
            continue
        phrase, entry = best
        labels[i : i + len(phrase)] = scheme.label_index(entry.entity_type)
        i += len(phrase)
    return labels


def match_gazetteer(
    corpus: list[Sentence],
    gaz: Gazetteer,
    scheme: TagScheme,
    case_sensitive: bool = True,
) -> list[LabelAssignment]:
    """Distantly label every sentence; unmatched tokens get the O class."""
    for entry in gaz.entries:
        if entry.entity_type not in scheme.entity_types:
            raise SchemaError(
                f"gazetteer type {entry.entity_type!r} not in scheme {scheme.entity_types}"
            )
    lookup = _build_lookup(gaz, case_sensitive)
    return [
        LabelAssignment.fresh(_match_sentence(sent.tokens, lookup, scheme, case_sensitive))
        for sent in corpus
    ]


def ambiguity_report(gaz: Gazetteer) -> list[tuple[Phrase, tuple[str, ...]]]:
    """Phrases carrying more than one type, most-conflicted first."""
    by_phrase: dict[Phrase, list[str]] = {}
    for entry in gaz.entries:
        types = by_phrase.setdefault(entry.phrase, [])
        if entry.entity_type not in types:
            types.append(entry.entity_type)
    conflicted = [(p, tuple(ts)) for p, ts in by_phrase.items() if len(ts) > 1]
    conflicted.sort(key=lambda item: (-len(item[1]), item[0]))
    return conflicted
