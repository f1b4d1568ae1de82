"""Detection-quality metrics for dual-threshold attempt classification.

The scatter enumerates every achievable operating point: candidate
thresholds per side are the distinct observed probabilities plus one
sentinel above the maximum, which with >= comparison covers every
possible classification. The envelope keeps the best precision at each
exactly attained recall, and the headline F1 is the maximum along that
envelope.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attempts import AttemptClass, Task, one_vs_rest
from .errors import UndefinedMetricError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class PrPoint:
    """One operating point; precision is None when nothing was predicted."""

    tau_original: float
    tau_corrected: float
    precision: float | None
    recall: float


@dataclass(frozen=True)
class Envelope:
    """Best precision per exactly attained recall, sorted by recall."""

    points: tuple[tuple[float, float], ...]  # (recall, max precision)


def confusion(pred: Sequence[int], gold: Sequence[int]) -> Confusion:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} labels")
    tp = fp = fn = tn = 0
    for p, g in zip(pred, gold):
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif not p and g:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def precision_recall(c: Confusion) -> tuple[float | None, float | None]:
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    return precision, recall


def f_beta(precision: float, recall: float, beta: float = 1.0) -> float:
    """Weighted harmonic mean of precision and recall; 0 when both are 0."""
    if precision == 0.0 and recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def _candidates(values: np.ndarray) -> list[float]:
    distinct = sorted({float(v) for v in values})
    sentinel = distinct[-1] + 1.0 if distinct else 1.0
    return distinct + [sentinel]


def pr_scatter(
    p_original: Sequence[float],
    p_corrected: Sequence[float],
    gold: Sequence[AttemptClass],
    task: Task,
) -> list[PrPoint]:
    """Precision/recall at every candidate threshold pair for one task."""
    if not (len(p_original) == len(p_corrected) == len(gold)):
        raise ValueError("p_original, p_corrected, and gold must have equal lengths")
    po = np.asarray(p_original, dtype=float)
    pc = np.asarray(p_corrected, dtype=float)
    gold_pos = np.array([bool(one_vs_rest(c, task)) for c in gold])
    n_pos = int(gold_pos.sum())
    if n_pos == 0:
        raise UndefinedMetricError(
            f"recall undefined for task {task.value!r}: no gold positives"
        )
    points = []
    corrected_masks = [(tc, pc >= tc) for tc in _candidates(pc)]
    for to in _candidates(po):
        mo = po >= to
        for tc, mc in corrected_masks:
            if task is Task.GENERAL:
                pred = mc
            elif task is Task.SUCCESSFUL:
                pred = mo & mc
            else:
                pred = ~mo & mc
            tp = int((pred & gold_pos).sum())
            n_pred = int(pred.sum())
            precision = tp / n_pred if n_pred else None
            recall = tp / n_pos
            points.append(PrPoint(to, tc, precision, recall))
    return points


def max_precision_envelope(points: Sequence[PrPoint]) -> Envelope:
    """Group scatter points by exact recall and keep the best defined precision.

    Recalls at which every point has undefined precision are omitted.
    """
    if not points:
        raise ValueError("cannot build an envelope from zero points")
    best: dict[float, float] = {}
    for pt in points:
        if pt.precision is None:
            continue
        if pt.recall not in best or pt.precision > best[pt.recall]:
            best[pt.recall] = pt.precision
    return Envelope(tuple(sorted(best.items())))


def best_f1(envelope: Envelope) -> float:
    """Maximum F1 along the envelope."""
    if not envelope.points:
        raise ValueError("empty envelope")
    return max(f_beta(p, r, 1.0) for r, p in envelope.points)


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    """Cohen's kappa for two binary label sequences.

    Defined as 1.0 in the degenerate case of identical constant sequences,
    where chance agreement equals 1.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty label sequences")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    a1 = sum(1 for x in a if x) / n
    b1 = sum(1 for y in b if y) / n
    expected = a1 * b1 + (1.0 - a1) * (1.0 - b1)
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


def write_scatter_csv(points: Sequence[PrPoint], path: str | Path) -> None:
    """Export scatter points as tau_o,tau_c,precision,recall (precision may be blank)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tau_o", "tau_c", "precision", "recall"])
        for pt in points:
            writer.writerow(
                [
                    repr(pt.tau_original),
                    repr(pt.tau_corrected),
                    "" if pt.precision is None else repr(pt.precision),
                    repr(pt.recall),
                ]
            )


def write_envelope_csv(
    envelope: Envelope, path: str | Path, include_running_max: bool = False
) -> None:
    """Export the envelope as recall,max_precision.

    With ``include_running_max`` an extra column holds the non-increasing
    running maximum over decreasing recall, the shape usually plotted.
    """
    rows = list(envelope.points)
    running: list[float] = []
    if include_running_max:
        peak = -math.inf
        for _, p in reversed(rows):
            peak = max(peak, p)
            running.append(peak)
        running.reverse()
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["recall", "max_precision"]
        if include_running_max:
            header.append("monotone_max_precision")
        writer.writerow(header)
        for i, (r, p) in enumerate(rows):
            row = [repr(r), repr(p)]
            if include_running_max:
                row.append(repr(running[i]))
            writer.writerow(row)
