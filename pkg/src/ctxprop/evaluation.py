"""Recall as a function of the proposal budget.

Matching is greedy in proposal rank order: each proposal claims the
still-unmatched annotation it overlaps most, if that overlap reaches the
threshold. Because of this, the matching of the first ``b`` proposals is a
prefix of the full matching, and one pass per image yields the whole curve.
Recall is micro-averaged over all annotations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NoAnnotations
from .geometry import iou_matrix


@dataclass(frozen=True)
class MatchResult:
    matched_pairs: tuple  # (annotation index, proposal rank), by rank
    unmatched_annotations: tuple


@dataclass(frozen=True)
class RecallCurve:
    budgets: tuple
    recall: tuple
    iou_threshold: float

    def __post_init__(self):
        if len(self.budgets) != len(self.recall):
            raise ValueError("budgets and recall differ in length")


def _as_boxes(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.astype(float).reshape(-1, 4)
    return np.array([b.as_tuple() if hasattr(b, "as_tuple") else tuple(b) for b in boxes], dtype=float).reshape(-1, 4)


def _claims(annotations, proposals, iou_threshold) -> np.ndarray:
    ann = _as_boxes(annotations)
    prop = _as_boxes(proposals)
    if ann.shape[0] == 0 or prop.shape[0] == 0:
        return np.full(prop.shape[0], -1, dtype=np.int64)
    ious = np.ascontiguousarray(iou_matrix(prop, ann))
    return _kernels.greedy_match(ious, float(iou_threshold))


def match(annotations, proposals, iou_threshold: float) -> MatchResult:
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    claims = _claims(annotations, proposals, iou_threshold)
    pairs = tuple((int(a), int(r)) for r, a in enumerate(claims) if a >= 0)
    hit = {a for a, _ in pairs}
    n_ann = len(annotations)
    return MatchResult(pairs, tuple(i for i in range(n_ann) if i not in hit))


def recall_curve(scenes, budgets, iou_threshold: float) -> RecallCurve:
    """``scenes`` is a sequence of ``(annotations, ordered proposals)``."""
    budgets = [int(b) for b in budgets]
    if any(b < 0 for b in budgets) or budgets != sorted(budgets):
        raise ValueError("budgets must be ascending and non-negative")
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    total = 0
    hits = np.zeros(len(budgets), dtype=np.int64)
    limit = budgets[-1] if budgets else 0
    edges = np.asarray(budgets)
    for annotations, proposals in scenes:
        total += len(annotations)
        claims = _claims(annotations, _as_boxes(proposals)[:limit], iou_threshold)
        ranks = np.flatnonzero(claims >= 0)
        # matches found by rank r count for every budget > r
        hits += np.searchsorted(ranks, edges, side="left")
    if total == 0:
        raise NoAnnotations("no annotations to evaluate against")
    return RecallCurve(tuple(budgets), tuple(float(h) / total for h in hits), float(iou_threshold))


# --- CSV ----------------------------------------------------------------------

CSV_HEADER = ("strategy", "iou", "budget", "recall")


def _rows(curve: RecallCurve, label: str):
    for b, r in zip(curve.budgets, curve.recall):
        yield (label, f"{curve.iou_threshold:.6f}", str(b), f"{r:.6f}")


def write_curves_csv(curves) -> str:
    """CSV for several ``(label, curve)`` blocks under one header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for label, curve in curves:
        w.writerows(_rows(curve, label))
    return buf.getvalue()


def write_curve_csv(curve: RecallCurve, strategy_label: str) -> str:
    return write_curves_csv([(strategy_label, curve)])


def read_curves_csv(text: str) -> list:
    """Inverse of :func:`write_curves_csv`; blocks keep their file order."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    blocks = {}
    for label, iou, budget, recall in reader:
        blocks.setdefault((label, float(iou)), []).append((int(budget), float(recall)))
    return [
        (label, RecallCurve(tuple(b for b, _ in rows), tuple(r for _, r in rows), iou))
        for (label, iou), rows in blocks.items()
    ]
