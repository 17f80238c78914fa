"""Noise-robust training on distant labels.

The trainer runs the generalized loss over a corpus whose labels are not
trusted: a random share of non-entity tokens is excluded up front, and every
``weight_update_period`` batches each remaining token's weight is recomputed
from the current model — weight 1 when the model still assigns its given
label probability above ``tau``, weight 0 otherwise.  Weights are memoryless
(a zeroed token may return on a later refresh), and entity classes that the
model distrusts almost entirely (>90% of their tokens at or below ``tau``)
are left untouched so rare types cannot be erased wholesale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .corpus import LabelAssignment, Sentence, TagScheme
from .errors import ParameterError, ShapeError
from .losses import GceConfig, ProbTable
from .model import (
    EncoderSpec,
    Objective,
    TaggerModel,
    build_tagger,
    make_optimizer,
    predict_corpus,
    train_step,
)

PROTECTION_FRACTION = 0.9

LabeledPair = tuple[Sentence, LabelAssignment]


@dataclass(frozen=True)
class RobustSchedule:
    """How long to train and how often to refresh the removal weights."""

    passes: int = 12
    weight_update_period: int = 50
    drop_rate: float = 0.5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.passes < 1:
            raise ParameterError(f"passes must be >= 1, got {self.passes}")
        if self.weight_update_period < 1:
            raise ParameterError(
                f"weight_update_period must be >= 1, got {self.weight_update_period}"
            )
        if not 0.0 <= self.drop_rate < 1.0:
            raise ParameterError(f"drop_rate must be in [0, 1), got {self.drop_rate}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")


def drop_nonentity(
    assignments: Sequence[LabelAssignment], drop_rate: float, rng: np.random.Generator
) -> Sequence[LabelAssignment]:
    """Exclude exactly floor(drop_rate * #O-tokens) non-entity tokens, chosen
    uniformly across the whole corpus.  Entity-labeled tokens are never
    touched.  Mutates and returns ``assignments``."""
    if not 0.0 <= drop_rate < 1.0:
        raise ParameterError(f"drop_rate must be in [0, 1), got {drop_rate}")
    positions = [
        (a_idx, t_idx)
        for a_idx, assignment in enumerate(assignments)
        for t_idx in np.flatnonzero((assignment.labels == 0) & assignment.included)
    ]
    count = math.floor(drop_rate * len(positions))
    if count:
        for choice in rng.choice(len(positions), size=count, replace=False):
            a_idx, t_idx = positions[choice]
            assignments[a_idx].included[t_idx] = False
    return assignments


@dataclass
class RefreshAudit:
    """Summary of one weight refresh."""

    step: int
    tokens_considered: int
    tokens_zeroed: int
    protected_classes: tuple[str, ...]
    below_by_class: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def zeroed_fraction(self) -> float:
        if self.tokens_considered == 0:
            return 0.0
        return self.tokens_zeroed / self.tokens_considered


def update_weights(
    probs: Sequence[ProbTable],
    assignments: Sequence[LabelAssignment],
    tau: float,
    scheme: TagScheme,
) -> tuple[Sequence[LabelAssignment], RefreshAudit]:
    """Refresh removal weights in place from current model predictions.

    For every included token, weight becomes 1 when the predicted probability
    of its assigned label exceeds ``tau`` and 0 otherwise — a pure function
    of the predictions, with no memory of earlier refreshes.  Entity classes
    whose included tokens sit at or below ``tau`` more than 90% of the time
    are protected: their weights all stay 1.
    """
    if len(probs) != len(assignments):
        raise ShapeError(
            f"{len(probs)} prediction tables for {len(assignments)} assignments"
        )
    labeled: list[np.ndarray] = []
    for table, assignment in zip(probs, assignments):
        if table.num_tokens != len(assignment.labels):
            raise ShapeError(
                f"prediction table with {table.num_tokens} rows paired with "
                f"{len(assignment.labels)} labels"
            )
        labeled.append(table.labeled_probs(assignment.labels))

    below_by_class: dict[str, tuple[int, int]] = {}
    protected: list[str] = []
    for offset, name in enumerate(scheme.entity_types):
        class_index = offset + 1
        below = total = 0
        for f, assignment in zip(labeled, assignments):
            at_class = (assignment.labels == class_index) & assignment.included
            total += int(at_class.sum())
            below += int((at_class & (f <= tau)).sum())
        below_by_class[name] = (below, total)
        if total and below / total > PROTECTION_FRACTION:
            protected.append(name)

    protected_indices = {scheme.label_index(name) for name in protected}
    considered = zeroed = 0
    for f, assignment in zip(labeled, assignments):
        inc = assignment.included
        keep = (f > tau) | np.isin(assignment.labels, list(protected_indices))
        assignment.weights[inc] = keep[inc].astype(np.float64)
        considered += int(inc.sum())
        zeroed += int((inc & ~keep).sum())

    audit = RefreshAudit(
        step=-1,
        tokens_considered=considered,
        tokens_zeroed=zeroed,
        protected_classes=tuple(protected),
        below_by_class=below_by_class,
    )
    return assignments, audit


def _write_audit_rows(
    handle: TextIO,
    step: int,
    pairs: Sequence[LabeledPair],
    labeled: Sequence[np.ndarray],
) -> None:
    for (sentence, assignment), f in zip(pairs, labeled):
        for t_idx in np.flatnonzero(assignment.included):
            handle.write(
                f"{step}\t{sentence.seq_id}\t{t_idx}\t"
                f"{assignment.weights[t_idx]:.0f}\t{f[t_idx]:.6f}\n"
            )


@dataclass
class RobustResult:
    model: TaggerModel
    pairs: list[LabeledPair]
    losses: list[float]
    refreshes: list[RefreshAudit]

    @property
    def assignments(self) -> list[LabelAssignment]:
        return [assignment for _, assignment in self.pairs]


def train_robust(
    pairs: Sequence[LabeledPair],
    encoder_spec: EncoderSpec,
    scheme: TagScheme,
    schedule: RobustSchedule,
    gce: GceConfig = GceConfig(),
    lr: float = 1e-3,
    loss_kind: str = "gce",
    removal: bool = True,
    audit_path: Path | str | None = None,
) -> RobustResult:
    """Train a fresh tagger on distantly-labeled pairs.

    The caller's assignments are copied; the returned result carries the
    working copies so final weights and exclusions can be audited.  When
    ``audit_path`` is given, every refresh appends rows of
    ``step TAB seq_id TAB token_index TAB weight TAB labeled_prob``.
    """
    for _, assignment in pairs:
        if assignment is None:
            raise ParameterError("robust training needs labels for every sentence")
    work: list[LabeledPair] = [(sent, assignment.copy()) for sent, assignment in pairs]
    rng = np.random.default_rng(schedule.seed)
    if schedule.drop_rate > 0.0:
        drop_nonentity([a for _, a in work], schedule.drop_rate, rng)

    model = build_tagger(encoder_spec, scheme, schedule.seed)
    batches_per_pass = math.ceil(len(work) / schedule.batch_size)
    optimizer, decay = make_optimizer(model, lr, schedule.passes * batches_per_pass)
    objective = Objective(loss_kind, q=gce.q)

    losses: list[float] = []
    refreshes: list[RefreshAudit] = []
    audit_handle = open(audit_path, "w", encoding="utf-8") if audit_path else None
    try:
        step = 0
        for _ in range(schedule.passes):
            order = rng.permutation(len(work))
            for start in range(0, len(order), schedule.batch_size):
                batch = [work[i] for i in order[start : start + schedule.batch_size]]
                model.train()
                losses.append(train_step(model, batch, objective, optimizer, decay))
                step += 1
                if removal and step % schedule.weight_update_period == 0:
                    tables = predict_corpus(model, [s for s, _ in work], batch_size=128)
                    _, audit = update_weights(tables, [a for _, a in work], gce.tau, scheme)
                    audit.step = step
                    refreshes.append(audit)
                    if audit_handle is not None:
                        labeled = [
                            t.labeled_probs(a.labels)
                            for t, (_, a) in zip(tables, work)
                        ]
                        _write_audit_rows(audit_handle, step, work, labeled)
    finally:
        if audit_handle is not None:
            audit_handle.close()
    return RobustResult(model=model, pairs=work, losses=losses, refreshes=refreshes)
