"""Entity-level precision/recall/F1 under IO tagging.

Spans are (start, end, type) with end exclusive; decoding takes maximal
runs of one entity type, so adjacent same-type entities cannot be told
apart.  That is an accepted limitation of IO tagging; the synthetic
benchmark never generates such adjacency.
"""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .corpus import OUTSIDE_LABEL
from .errors import ShapeError

Span = tuple[int, int, str]


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def decode_entities(labels: Sequence[str]) -> list[Span]:
    """Maximal same-type runs of a per-token IO label row."""
    spans: list[Span] = []
    start = None
    current = None
    for i, label in enumerate(labels):
        if label == current and current != OUTSIDE_LABEL:
            continue
        if current is not None and current != OUTSIDE_LABEL:
            spans.append((start, i, current))
        start, current = i, label
    if current is not None and current != OUTSIDE_LABEL:
        spans.append((start, len(labels), current))
    return spans


def encode_entities(spans: Iterable[Span], length: int) -> list[str]:
    """Inverse of :func:`decode_entities` for non-overlapping span sets."""
    labels = [OUTSIDE_LABEL] * length
    for start, end, etype in spans:
        if not 0 <= start < end <= length:
            raise ShapeError(f"span ({start}, {end}) outside a length-{length} row")
        for i in range(start, end):
            if labels[i] != OUTSIDE_LABEL:
                raise ShapeError(f"span ({start}, {end}, {etype}) overlaps another span")
            labels[i] = etype
    return labels


def _prf(tp: int, fp: int, fn: int) -> PRF:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def score(pred_spans: Iterable[Span], gold_spans: Iterable[Span]) -> PRF:
    """Exact-match span scoring (boundaries and type) for one sequence."""
    pred = set(pred_spans)
    gold = set(gold_spans)
    tp = len(pred & gold)
    return _prf(tp, len(pred) - tp, len(gold) - tp)


def score_corpus(
    pred: Sequence[Sequence[Span]], gold: Sequence[Sequence[Span]]
) -> PRF:
    """Micro-averaged exact-match scoring over aligned sequences."""
    if len(pred) != len(gold):
        raise ShapeError(f"{len(pred)} predicted sequences vs {len(gold)} gold")
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        p_set, g_set = set(p), set(g)
        tp += len(p_set & g_set)
        fp += len(p_set - g_set)
        fn += len(g_set - p_set)
    return _prf(tp, fp, fn)


def token_f1(pred_labels: Sequence[Sequence[str]], gold_labels: Sequence[Sequence[str]]) -> PRF:
    """Micro token-level P/R/F1 over non-O labels; harness-internal metric."""
    if len(pred_labels) != len(gold_labels):
        raise ShapeError(f"{len(pred_labels)} predicted rows vs {len(gold_labels)} gold")
    tp = fp = fn = 0
    for p_row, g_row in zip(pred_labels, gold_labels):
        if len(p_row) != len(g_row):
            raise ShapeError("token rows disagree in length")
        for p, g in zip(p_row, g_row):
            if p != OUTSIDE_LABEL and p == g:
                tp += 1
            elif p != OUTSIDE_LABEL:
                fp += 1
            if g != OUTSIDE_LABEL and p != g:
                fn += 1
    return _prf(tp, fp, fn)


def format_report(metrics: dict[str, float], title: str = "evaluation") -> str:
    """Small fixed-width table; keys in insertion order."""
    width = max(len(k) for k in metrics) if metrics else 8
    lines = [title, "-" * max(len(title), width + 9)]
    for key, value in metrics.items():
        lines.append(f"{key:<{width}}  {value:.6f}")
    return "\n".join(lines) + "\n"


def write_report(metrics: dict[str, float], text_path: str | Path, kv_path: str | Path | None = None) -> None:
    """Write the plain-text table and, optionally, a machine-readable twin."""
    Path(text_path).write_text(format_report(metrics), encoding="utf-8")
    if kv_path is not None:
        body = "".join(f"{k}={v:.6f}\n" for k, v in metrics.items())
        Path(kv_path).write_text(body, encoding="utf-8")
