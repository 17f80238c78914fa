"""Token-classification losses over probability tables.

The three losses share one shape: given per-token probabilities assigned to
the provided labels, reduce the per-token terms to a mean over contributing
tokens (weight 1 and included).  Gradients are reported per token with
respect to the probability of the labeled class, i.e. the derivative of the
per-token term, leaving the chain through the model to the tagger:

    cross entropy        -log f        gradient -1/f
    mean absolute error  1 - f         gradient -1
    generalized CE       (1-f^q)/q     gradient -f^(q-1)

The generalized form interpolates between the other two: it equals MAE at
q=1 and approaches cross entropy as q -> 0, while its gradient weights
low-probability tokens less aggressively than cross entropy does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

EPS = 1e-8
ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ProbTable:
    """An n x C matrix of per-token class probabilities.

    Rows must sum to 1 within 1e-6 on construction; entries are clamped to
    [EPS, 1] so downstream logs and powers stay finite.
    """

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ShapeError(f"probability table must be 2-d, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ShapeError("probability table contains non-finite entries")
        if np.any(rows < -ROW_SUM_TOL) or np.any(rows > 1.0 + ROW_SUM_TOL):
            raise ShapeError("probability table entries outside [0, 1]")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise ShapeError(f"rows must sum to 1 within {ROW_SUM_TOL}; worst deviation {worst:.3g}")
        object.__setattr__(self, "rows", np.clip(rows, EPS, 1.0))

    @property
    def num_tokens(self) -> int:
        return self.rows.shape[0]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]

    def labeled_probs(self, labels: np.ndarray) -> np.ndarray:
        """f_{i, y_i}: the probability each token assigns to its given label."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (self.num_tokens,):
            raise ShapeError(f"{self.num_tokens} rows but labels shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ShapeError(f"label index outside [0, {self.num_classes})")
        return self.rows[np.arange(self.num_tokens), labels]


@dataclass(frozen=True)
class GceConfig:
    """Exponent q of the generalized loss and removal threshold tau."""

    q: float = 0.7
    tau: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"q must be in (0, 1), got {self.q}")
        # tau = 0 is the explicit "removal disabled" floor: clamped
        # probabilities always exceed it, so weights stay 1.
        if not 0.0 <= self.tau < 1.0:
            raise ParameterError(f"tau must be in [0, 1), got {self.tau}")


@dataclass(frozen=True)
class LossResult:
    """Mean loss over contributing tokens plus per-token gradients.

    ``grad`` holds the derivative of each token's loss term with respect to
    f_{i,y_i}; non-contributing tokens get 0.  ``empty`` flags the
    defined-empty case (no contributing tokens): loss 0, all-zero gradient.
    """

    value: float
    grad: np.ndarray
    contributing: int

    @property
    def empty(self) -> bool:
        return self.contributing == 0


def _contributing_mask(
    probs: ProbTable,
    labels: np.ndarray,
    weights: np.ndarray | None,
    included: np.ndarray | None,
) -> np.ndarray:
    n = probs.num_tokens
    if weights is None:
        weights = np.ones(n)
    if included is None:
        included = np.ones(n, dtype=bool)
    weights = np.asarray(weights, dtype=np.float64)
    included = np.asarray(included, dtype=bool)
    if weights.shape != (n,) or included.shape != (n,):
        raise ShapeError(
            f"weights {weights.shape} / included {included.shape} do not match {n} tokens"
        )
    if not np.all((weights == 0.0) | (weights == 1.0)):
        raise ParameterError("removal weights must be 0 or 1")
    return (weights > 0.0) & included


def _reduce(per_token: np.ndarray, grad: np.ndarray, mask: np.ndarray) -> LossResult:
    count = int(mask.sum())
    if count == 0:
        return LossResult(value=0.0, grad=np.zeros_like(per_token), contributing=0)
    value = float(per_token[mask].mean())
    out = np.where(mask, grad, 0.0)
    return LossResult(value=value, grad=out, contributing=count)


def ce_loss(
    probs: ProbTable,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    included: np.ndarray | None = None,
) -> LossResult:
    """Cross entropy: mean of -log f_{i,y_i} over contributing tokens."""
    mask = _contributing_mask(probs, labels, weights, included)
    f = probs.labeled_probs(labels)
    return _reduce(-np.log(f), -1.0 / f, mask)


def mae_loss(
    probs: ProbTable,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    included: np.ndarray | None = None,
) -> LossResult:
    """Mean absolute error: mean of 1 - f_{i,y_i}; constant gradient -1."""
    mask = _contributing_mask(probs, labels, weights, included)
    f = probs.labeled_probs(labels)
    return _reduce(1.0 - f, np.full_like(f, -1.0), mask)


def gce_loss(
    probs: ProbTable,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    included: np.ndarray | None = None,
    q: float = 0.7,
) -> LossResult:
    """Generalized cross entropy: mean of (1 - f_{i,y_i}^q)/q.

    q=1 is admitted so the exact coincidence with MAE can be exercised;
    training configurations keep q strictly inside (0, 1).
    """
    if not 0.0 < q <= 1.0:
        raise ParameterError(f"q must be in (0, 1], got {q}")
    mask = _contributing_mask(probs, labels, weights, included)
    f = probs.labeled_probs(labels)
    return _reduce((1.0 - f**q) / q, -(f ** (q - 1.0)), mask)


def kl_divergence(target: np.ndarray, pred: np.ndarray) -> float:
    """KL(target || pred) for two probability rows, with 0 log 0 = 0."""
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if target.shape != pred.shape or target.ndim != 1:
        raise ShapeError(f"rows disagree: target {target.shape}, pred {pred.shape}")
    t = np.clip(target, 0.0, 1.0)
    p = np.clip(pred, EPS, 1.0)
    active = t > 0.0
    return float(np.sum(t[active] * (np.log(t[active]) - np.log(p[active]))))


def kl_table(target: ProbTable, pred: ProbTable) -> float:
    """Mean per-token KL(target || pred) between two aligned tables."""
    if target.rows.shape != pred.rows.shape:
        raise ShapeError(
            f"tables disagree: target {target.rows.shape}, pred {pred.rows.shape}"
        )
    t = target.rows
    p = np.clip(pred.rows, EPS, 1.0)
    terms = np.where(t > 0.0, t * (np.log(np.clip(t, EPS, 1.0)) - np.log(p)), 0.0)
    return float(np.sum(terms, axis=1).mean())


def per_token_loss_reference(f: float, kind: str, q: float = 0.7) -> float:
    """Scalar per-token loss term, kept for oracle-style spot checks."""
    if kind == "ce":
        return -math.log(f)
    if kind == "mae":
        return 1.0 - f
    if kind == "gce":
        return (1.0 - f**q) / q
    raise ParameterError(f"unknown loss kind {kind!r}")
