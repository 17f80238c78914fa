"""Self-training on sharpened soft labels with augmentation consistency.

Each iteration re-infers the corpus, squares-and-normalizes the entity-class
probability slices into soft targets (weighted down by corpus-level class
mass so frequent classes don't snowball), and runs one training pass pulling
the type head toward those targets on both the original and the augmented
view of every sequence.  The binary head is trained only to keep its own
iteration-start predictions, so the entity/non-entity decision stays put
while types sharpen.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .augment import AugmentedPair
from .corpus import Sentence
from .errors import ParameterError, ShapeError, TrainingError
from .model import TaggerModel, make_optimizer, predict_full

EPS = 1e-8


@dataclass(frozen=True)
class SoftLabelTable:
    """Per-token soft targets over entity classes, rows summing to 1."""

    rows: np.ndarray
    class_mass: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "class_mass", np.asarray(self.class_mass, dtype=np.float64))
        if rows.ndim != 2:
            raise ShapeError(f"soft-label rows must be 2-d, got shape {rows.shape}")
        if rows.size and (rows.min() < 0.0 or rows.max() > 1.0):
            raise ParameterError("soft-label entries must lie in [0, 1]")
        if rows.size and np.abs(rows.sum(axis=1) - 1.0).max() > 1e-9:
            raise ParameterError("soft-label rows must sum to 1 within 1e-9")

    @property
    def num_tokens(self) -> int:
        return self.rows.shape[0]


def compute_soft_labels(entity_probs: np.ndarray) -> SoftLabelTable:
    """Square predictions and normalize by class mass (columns g_j).

    Input rows are the entity-class slices of the full per-token
    distribution; they need not sum to 1.  A class with (near-)zero total
    mass is clamped with a warning rather than dividing by zero.
    """
    f = np.asarray(entity_probs, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ShapeError(f"entity probabilities must be a non-empty 2-d array, got {f.shape}")
    if (f.sum(axis=0) < EPS).any():
        warnings.warn("class with near-zero prediction mass; clamping its frequency term")
    f = np.clip(f, EPS, None)
    g = np.maximum(f.sum(axis=0), EPS)
    weighted = (f * f) / g
    rows = weighted / weighted.sum(axis=1, keepdims=True)
    return SoftLabelTable(rows=rows, class_mass=g)


def soft_labels_for_corpus(entity_slices: Sequence[np.ndarray]) -> list[SoftLabelTable]:
    """Corpus-level variant: one shared class-mass vector across all sequences."""
    if not entity_slices:
        return []
    stacked = np.concatenate([np.asarray(s, dtype=np.float64) for s in entity_slices], axis=0)
    table = compute_soft_labels(stacked)
    out = []
    start = 0
    for s in entity_slices:
        n = np.asarray(s).shape[0]
        out.append(SoftLabelTable(rows=table.rows[start : start + n], class_mass=table.class_mass))
        start += n
    return out


def _entity_view(probs: np.ndarray, num_entity: int) -> np.ndarray:
    """Restrict to entity classes and renormalize so rows are distributions."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"probabilities must be 2-d, got shape {arr.shape}")
    if arr.shape[1] == num_entity + 1:
        arr = arr[:, 1:]
    elif arr.shape[1] != num_entity:
        raise ShapeError(
            f"probabilities have {arr.shape[1]} classes; expected {num_entity} "
            f"entity classes or {num_entity + 1} with the outside class first"
        )
    arr = np.clip(arr, EPS, None)
    return arr / arr.sum(axis=1, keepdims=True)


def st_loss(
    soft: SoftLabelTable, probs_orig: np.ndarray, probs_aug: np.ndarray | None
) -> float:
    """Mean per-token KL(soft target to each prediction view), summed over views."""
    y = soft.rows
    total = np.zeros(soft.num_tokens, dtype=np.float64)
    for probs in (probs_orig, probs_aug):
        if probs is None:
            continue
        view = _entity_view(probs, y.shape[1])
        if view.shape[0] != y.shape[0]:
            raise ShapeError(
                f"{view.shape[0]} prediction rows for {y.shape[0]} soft-label rows"
            )
        total += np.sum(np.where(y > 0.0, y * (np.log(np.clip(y, EPS**2, None)) - np.log(view)), 0.0), axis=1)
    return float(total.mean())


@dataclass(frozen=True)
class SelfTrainSchedule:
    """Pace and thresholds of the self-training loop."""

    batch_size: int = 32
    lr: float = 1e-3 / 60
    confidence_offset: float = 0.05
    passes_per_iteration: int = 1
    use_augmented: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.passes_per_iteration < 1:
            raise ParameterError(
                f"passes_per_iteration must be >= 1, got {self.passes_per_iteration}"
            )


@dataclass
class SelfTrainResult:
    model: TaggerModel
    metrics: list[dict[str, float]]
    overall_binary_drift: float


def _binary_kl(target: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    t = target.clamp(EPS, 1.0 - EPS)
    p = pred.clamp(EPS, 1.0 - EPS)
    return t * (t.log() - p.log()) + (1.0 - t) * ((1.0 - t).log() - (1.0 - p).log())


def self_train(
    model: TaggerModel,
    corpus: Sequence[Sentence],
    aug_pairs: Sequence[AugmentedPair],
    iterations: int,
    schedule: SelfTrainSchedule,
) -> SelfTrainResult:
    """Run ``iterations`` rounds of soft-label refitting on ``model`` in place.

    ``aug_pairs`` come from ``augment_corpus`` on the same corpus; sequences
    without a surviving pair train with the original-only consistency term.
    Tokens whose maximum entity-class probability at iteration start falls
    below 1/num_types + confidence_offset are excluded from the type-head
    loss for that iteration.
    """
    if iterations < 0:
        raise ParameterError(f"iterations must be >= 0, got {iterations}")
    metrics: list[dict[str, float]] = []
    if iterations == 0 or not corpus:
        return SelfTrainResult(model=model, metrics=metrics, overall_binary_drift=0.0)

    num_entity = model.scheme.num_entity_types
    cutoff = 1.0 / num_entity + schedule.confidence_offset
    aug_by_index: dict[int, Sentence] = {
        pair.index: pair.augmented.sentence for pair in aug_pairs
    }

    batches_per_pass = (len(corpus) + schedule.batch_size - 1) // schedule.batch_size
    total_steps = iterations * schedule.passes_per_iteration * batches_per_pass
    optimizer, decay = make_optimizer(model, schedule.lr, total_steps)
    rng = np.random.default_rng(schedule.seed)

    run_start_p: list[np.ndarray] | None = None
    for iteration in range(iterations):
        outputs = predict_full(model, corpus, batch_size=128)
        slices = [out.probs.rows[:, 1:] for out in outputs]
        soft = soft_labels_for_corpus(slices)
        selected = [s.max(axis=1) >= cutoff for s in slices]
        p_start = [out.p_entity for out in outputs]
        if run_start_p is None:
            run_start_p = p_start

        losses: list[float] = []
        for _ in range(schedule.passes_per_iteration):
            order = rng.permutation(len(corpus))
            for start in range(0, len(order), schedule.batch_size):
                chunk = [int(i) for i in order[start : start + schedule.batch_size]]
                loss = _st_step(
                    model,
                    [corpus[i] for i in chunk],
                    [aug_by_index.get(i) if schedule.use_augmented else None for i in chunk],
                    [soft[i].rows for i in chunk],
                    [selected[i] for i in chunk],
                    [p_start[i] for i in chunk],
                    optimizer,
                    decay,
                )
                losses.append(loss)

        end_outputs = predict_full(model, corpus, batch_size=128)
        drift = float(
            np.mean(
                [
                    np.abs(end.p_entity - start_p).mean()
                    for end, start_p in zip(end_outputs, p_start)
                ]
            )
        )
        entropy = float(
            np.mean(
                [
                    -(t.rows * np.log(np.clip(t.rows, EPS**2, None))).sum(axis=1).mean()
                    for t in soft
                ]
            )
        )
        metrics.append(
            {
                "iteration": float(iteration + 1),
                "mean_loss": float(np.mean(losses)) if losses else 0.0,
                "soft_entropy": entropy,
                "binary_drift": drift,
                "selected_fraction": float(np.mean([s.mean() for s in selected])),
            }
        )

    final_outputs = predict_full(model, corpus, batch_size=128)
    overall = float(
        np.mean(
            [
                np.abs(end.p_entity - start_p).mean()
                for end, start_p in zip(final_outputs, run_start_p)
            ]
        )
    )
    return SelfTrainResult(model=model, metrics=metrics, overall_binary_drift=overall)


def _st_step(
    model: TaggerModel,
    sentences: list[Sentence],
    augmented: list[Sentence | None],
    soft_rows: list[np.ndarray],
    selected: list[np.ndarray],
    p_start: list[np.ndarray],
    optimizer: torch.optim.Optimizer,
    decay,
) -> float:
    model.train()
    ids, pad = model.batch_tensors(sentences)
    width = ids.shape[1]
    num_entity = model.scheme.num_entity_types

    y = torch.zeros((len(sentences), width, num_entity), dtype=torch.float32)
    sel = torch.zeros((len(sentences), width), dtype=torch.bool)
    p0 = torch.zeros((len(sentences), width), dtype=torch.float32)
    has_aug = torch.zeros(len(sentences), dtype=torch.float32)
    aug_sentences: list[Sentence] = []
    for row, (sent, aug) in enumerate(zip(sentences, augmented)):
        n = len(sent)
        y[row, :n] = torch.tensor(soft_rows[row], dtype=torch.float32)
        sel[row, :n] = torch.tensor(selected[row])
        p0[row, :n] = torch.tensor(p_start[row], dtype=torch.float32)
        if aug is not None:
            has_aug[row] = 1.0
            aug_sentences.append(aug)
        else:
            aug_sentences.append(sent)

    p_entity, type_dist, _ = model.forward_batch(ids, pad)
    y_safe = y.clamp_min(1e-30)
    kl_type = (y * (y_safe.log() - type_dist.clamp_min(EPS).log())).sum(-1)
    per_token = kl_type
    if has_aug.any():
        aug_ids, aug_pad = model.batch_tensors(aug_sentences)
        _, aug_type_dist, _ = model.forward_batch(aug_ids, aug_pad)
        kl_aug = (y * (y_safe.log() - aug_type_dist.clamp_min(EPS).log())).sum(-1)
        per_token = per_token + kl_aug * has_aug[:, None]

    loss = torch.zeros((), dtype=per_token.dtype)
    if sel.any():
        loss = per_token[sel].mean()
    real = ~pad
    loss = loss + _binary_kl(p0, p_entity)[real].mean()

    if not torch.isfinite(loss):
        raise TrainingError(
            f"non-finite self-training loss in batch {[s.seq_id for s in sentences]}"
        )
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    if decay is not None:
        decay.step()
    return float(loss.detach())


def write_st_metrics(path: Path | str, metrics: Sequence[dict[str, float]]) -> None:
    """Plain-text metric rows, one iteration per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for row in metrics:
            handle.write(
                " ".join(f"{key}={row[key]:.6f}" for key in sorted(row)) + "\n"
            )
