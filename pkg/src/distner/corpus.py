"""Corpus containers and the on-disk column format.

A corpus file is UTF-8, one token per line with an optional tab-separated
label, and a blank line between sequences.  Reading and writing round-trip
exactly on well-formed files.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusFormatError, SchemaError, ShapeError

OUTSIDE_LABEL = "O"


@dataclass(frozen=True)
class TagScheme:
    """Entity-type inventory under IO tagging.

    Class 0 is the outside label "O"; entity type t sits at class index
    ``1 + entity_types.index(t)``.  Indices are stable for the lifetime of
    the scheme.
    """

    entity_types: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.entity_types)) != len(self.entity_types):
            raise SchemaError(f"duplicate entity types in {self.entity_types}")
        if OUTSIDE_LABEL in self.entity_types:
            raise SchemaError(f"{OUTSIDE_LABEL!r} is reserved for non-entity tokens")
        if any(not t for t in self.entity_types):
            raise SchemaError("empty entity type name")

    @property
    def outside_label(self) -> str:
        return OUTSIDE_LABEL

    @property
    def num_classes(self) -> int:
        return len(self.entity_types) + 1

    @property
    def num_entity_types(self) -> int:
        return len(self.entity_types)

    def label_index(self, name: str) -> int:
        if name == OUTSIDE_LABEL:
            return 0
        try:
            return 1 + self.entity_types.index(name)
        except ValueError:
            raise SchemaError(f"unknown label {name!r}; scheme has {self.entity_types}") from None

    def label_name(self, index: int) -> str:
        if index == 0:
            return OUTSIDE_LABEL
        if 1 <= index < self.num_classes:
            return self.entity_types[index - 1]
        raise SchemaError(f"class index {index} out of range for {self.num_classes} classes")

    def entity_offset(self, class_index: int) -> int:
        """Map a full class index (1..C-1) to a 0-based entity-type index."""
        if not 1 <= class_index < self.num_classes:
            raise SchemaError(f"class index {class_index} is not an entity class")
        return class_index - 1


SUBWORD_PREFIX = "##"


def token_is_capitalized(token: str) -> bool:
    return bool(token) and token[0].isupper()


def token_is_subword(token: str) -> bool:
    """Continuation-piece convention used when a subword tokenizer is in play."""
    return token.startswith(SUBWORD_PREFIX)


@dataclass(frozen=True)
class Sentence:
    """A tokenized sequence with per-token surface metadata."""

    tokens: tuple[str, ...]
    seq_id: str
    is_capitalized: tuple[bool, ...]
    is_subword: tuple[bool, ...]

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise CorpusFormatError(f"empty sentence {self.seq_id!r}")
        if len(self.is_capitalized) != n or len(self.is_subword) != n:
            raise CorpusFormatError(f"flag lengths disagree with token count in {self.seq_id!r}")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], seq_id: str) -> "Sentence":
        """Build a sentence under whitespace tokenization (no subword pieces)."""
        toks = tuple(tokens)
        return cls(
            tokens=toks,
            seq_id=seq_id,
            is_capitalized=tuple(token_is_capitalized(t) for t in toks),
            is_subword=tuple(False for _ in toks),
        )


@dataclass
class LabelAssignment:
    """Per-token distant labels with removal weights and inclusion flags.

    ``weights`` are {0,1} removal weights, all 1 until a weight-update pass
    runs.  ``included`` marks tokens that survived non-entity dropping;
    excluded tokens never contribute to any loss or weight statistic.
    """

    labels: np.ndarray
    weights: np.ndarray
    included: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.included = np.asarray(self.included, dtype=bool)
        n = self.labels.shape[0]
        if self.weights.shape != (n,) or self.included.shape != (n,):
            raise ShapeError(
                f"per-token arrays disagree: {n} labels, weights {self.weights.shape}, "
                f"included {self.included.shape}"
            )
        if not np.all((self.weights == 0.0) | (self.weights == 1.0)):
            raise ValueError("removal weights must be 0 or 1")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @classmethod
    def fresh(cls, labels: Sequence[int]) -> "LabelAssignment":
        arr = np.asarray(labels, dtype=np.int64)
        return cls(labels=arr, weights=np.ones(arr.shape[0]), included=np.ones(arr.shape[0], dtype=bool))

    def copy(self) -> "LabelAssignment":
        return LabelAssignment(self.labels.copy(), self.weights.copy(), self.included.copy())

    def same_as(self, other: "LabelAssignment") -> bool:
        return (
            np.array_equal(self.labels, other.labels)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.included, other.included)
        )


LabeledCorpus = list[tuple[Sentence, LabelAssignment | None]]


def read_column_corpus(
    path: str | Path,
    scheme: TagScheme | None = None,
    max_len: int | None = None,
) -> LabeledCorpus:
    """Parse a column-format corpus file.

    Returns one ``(Sentence, LabelAssignment | None)`` per sequence.  Label
    assignments start with all weights 1 and every token included.  A file
    may be unlabeled (single column); labeled files require ``scheme``.
    """
    path = Path(path)
    out: LabeledCorpus = []
    tokens: list[str] = []
    labels: list[str] = []

    def flush() -> None:
        if not tokens:
            return
        seq_id = f"{path.name}:{len(out)}"
        if max_len is not None and len(tokens) > max_len:
            raise CorpusFormatError(
                f"{seq_id}: {len(tokens)} tokens exceeds the configured maximum of {max_len}"
            )
        sent = Sentence.from_tokens(tokens, seq_id)
        if labels:
            if scheme is None:
                raise SchemaError(f"{path}: file carries labels but no tag scheme was given")
            assignment = LabelAssignment.fresh([scheme.label_index(l) for l in labels])
        else:
            assignment = None
        out.append((sent, assignment))
        tokens.clear()
        labels.clear()

    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) > 2:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected TOKEN or TOKEN<TAB>LABEL, got {line!r}"
                )
            if labels and len(parts) == 1 or tokens and not labels and len(parts) == 2:
                raise CorpusFormatError(
                    f"{path}:{lineno}: sequence mixes labeled and unlabeled lines"
                )
            tokens.append(parts[0])
            if len(parts) == 2:
                try:
                    if scheme is not None:
                        scheme.label_index(parts[1])
                except SchemaError as exc:
                    raise SchemaError(f"{path}:{lineno}: {exc}") from None
                labels.append(parts[1])
    flush()
    return out


def write_column_corpus(
    seqs: Iterable[tuple[Sentence, LabelAssignment | None]],
    path: str | Path,
    scheme: TagScheme | None = None,
) -> None:
    """Write sequences in column format; inverse of :func:`read_column_corpus`."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sent, assignment in seqs:
            if assignment is not None:
                if len(assignment) != len(sent):
                    raise ShapeError(
                        f"{sent.seq_id}: {len(sent)} tokens but {len(assignment)} labels"
                    )
                if scheme is None:
                    raise SchemaError("labeled sequences need a tag scheme to name classes")
                for tok, idx in zip(sent.tokens, assignment.labels):
                    fh.write(f"{tok}\t{scheme.label_name(int(idx))}\n")
            else:
                for tok in sent.tokens:
                    fh.write(f"{tok}\n")
            fh.write("\n")


def sentences(corpus: LabeledCorpus) -> list[Sentence]:
    return [sent for sent, _ in corpus]


def assignments(corpus: LabeledCorpus) -> list[LabelAssignment]:
    out = []
    for sent, assignment in corpus:
        if assignment is None:
            raise SchemaError(f"sequence {sent.seq_id!r} has no labels")
        out.append(assignment)
    return out
