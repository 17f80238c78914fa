"""Seed-varied model ensembling and distillation.

K independently seeded robust models are averaged per token, and a fresh
model is trained to match the averaged distribution under KL divergence.
The averaged targets are computed once per corpus and cached, so
distillation never pays for K forward passes per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sentence, TagScheme
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
from .robust import LabeledPair, RobustResult, RobustSchedule, train_robust


@dataclass(frozen=True)
class EnsembleSpec:
    """Member count and the seed layout of the ensemble."""

    num_members: int = 5
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_members < 1:
            raise ParameterError(f"num_members must be >= 1, got {self.num_members}")

    @property
    def member_seeds(self) -> tuple[int, ...]:
        return tuple(self.base_seed + k for k in range(self.num_members))

    @property
    def distill_seed(self) -> int:
        return self.base_seed + self.num_members


def average_predictions(member_tables: Sequence[ProbTable]) -> ProbTable:
    """Elementwise mean of same-shape probability tables."""
    if not member_tables:
        raise ParameterError("need at least one member table")
    shape = member_tables[0].rows.shape
    for table in member_tables[1:]:
        if table.rows.shape != shape:
            raise ShapeError(f"member table shapes differ: {table.rows.shape} vs {shape}")
    return ProbTable(np.mean([t.rows for t in member_tables], axis=0))


def averaged_targets(
    members: Sequence[TaggerModel], corpus: Sequence[Sentence], batch_size: int = 128
) -> list[ProbTable]:
    """Per-sentence averaged member predictions, computed once for caching."""
    per_member = [predict_corpus(m, corpus, batch_size) for m in members]
    return [average_predictions(tables) for tables in zip(*per_member)]


def train_members(
    pairs: Sequence[LabeledPair],
    encoder_spec: EncoderSpec,
    scheme: TagScheme,
    schedule: RobustSchedule,
    ensemble: EnsembleSpec,
    gce: GceConfig = GceConfig(),
    lr: float = 1e-3,
    loss_kind: str = "gce",
    removal: bool = True,
) -> list[RobustResult]:
    """Run the robust trainer once per member seed."""
    results = []
    for seed in ensemble.member_seeds:
        member_schedule = RobustSchedule(
            passes=schedule.passes,
            weight_update_period=schedule.weight_update_period,
            drop_rate=schedule.drop_rate,
            batch_size=schedule.batch_size,
            seed=seed,
        )
        results.append(
            train_robust(
                pairs,
                encoder_spec,
                scheme,
                member_schedule,
                gce=gce,
                lr=lr,
                loss_kind=loss_kind,
                removal=removal,
            )
        )
    return results


@dataclass
class DistillResult:
    model: TaggerModel
    losses: list[float]
    final_mean_kl: float


def distill(
    members: Sequence[TaggerModel],
    corpus: Sequence[Sentence],
    encoder_spec: EncoderSpec,
    scheme: TagScheme,
    seed: int,
    epochs: int = 8,
    batch_size: int = 32,
    lr: float = 1e-3 / 3,
) -> DistillResult:
    """Train a pristine model to match the members' averaged predictions.

    Every token participates — removal weights play no role here.  Returns
    the distilled model together with the mean per-token KL measured against
    the cached targets after training.
    """
    if not members:
        raise ParameterError("need at least one member model")
    if epochs < 0:
        raise ParameterError(f"epochs must be >= 0, got {epochs}")
    targets = averaged_targets(members, corpus)
    target_rows = [t.rows for t in targets]

    model = build_tagger(encoder_spec, scheme, seed)
    losses: list[float] = []
    if epochs and len(corpus):
        batches_per_pass = math.ceil(len(corpus) / batch_size)
        optimizer, decay = make_optimizer(model, lr, epochs * batches_per_pass)
        objective = Objective("kl")
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            order = rng.permutation(len(corpus))
            for start in range(0, len(order), batch_size):
                chunk = order[start : start + batch_size]
                batch = [(corpus[i], target_rows[i]) for i in chunk]
                model.train()
                losses.append(train_step(model, batch, objective, optimizer, decay))

    final = predict_corpus(model, corpus, batch_size=128)
    total = 0.0
    count = 0
    for target, table in zip(targets, final):
        t = target.rows
        total += float(np.sum(t * (np.log(t) - np.log(table.rows))))
        count += target.num_tokens
    return DistillResult(
        model=model, losses=losses, final_mean_kl=total / count if count else 0.0
    )
