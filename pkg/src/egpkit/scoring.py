"""Essay-level proficiency scoring from detected construct attempts.

Each essay gets one indicator per construct (attempted once or many times
counts once), and its score is the level-weight average over positive
indicators. Correlating those scores with assigned CEFR bands, plus a
cross-validated grid search for per-level decision thresholds, make up
the assessment side of the toolkit.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import random
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CEFR_LEVELS, CanDoStatement, Essay
from .errors import CatalogError, JoinError, TuningError, UndefinedMetricError

logger = logging.getLogger(__name__)

DEFAULT_LEVEL_WEIGHTS: dict[str, float] = {
    "A1": 1.0,
    "A2": 2.0,
    "B1": 3.0,
    "B2": 4.0,
    "C1": 5.0,
    "C2": 6.0,
}

DEFAULT_THRESHOLD_CANDIDATES = (0.70, 0.80, 0.90, 0.95, 0.99)

_BAND_VALUES = {
    "A1": 1.0,
    "A2": 2.0,
    "A2+": 2.5,
    "B1": 3.0,
    "B1+": 3.5,
    "B2": 4.0,
    "B2+": 4.5,
    "C1": 5.0,
    "C1+": 5.5,
    "C2": 6.0,
}

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class EssayPredictions:
    """Per-(sentence, construct) presence values for one essay.

    ``values`` maps (sentence index, egp_id) to a pair for the original and
    corrected sides; entries are probabilities until thresholded, binary
    0/1 afterwards.
    """

    essay_id: str
    values: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def egp_ids(self) -> set[int]:
        return {egp_id for _, egp_id in self.values}


@dataclass(frozen=True)
class ThresholdConfig:
    """One decision threshold per CEFR level, applied to both sides."""

    by_level: Mapping[str, float]

    def __post_init__(self):
        missing = [l for l in CEFR_LEVELS if l not in self.by_level]
        if missing:
            raise ValueError(f"threshold config is missing levels: {missing}")
        for level, tau in self.by_level.items():
            if not 0.0 <= tau <= 1.0:
                raise ValueError(f"threshold for {level} out of [0, 1]: {tau}")

    def for_level(self, level: str) -> float:
        return self.by_level[level]

    def as_vector(self) -> tuple[float, ...]:
        return tuple(self.by_level[l] for l in CEFR_LEVELS)


@dataclass(frozen=True)
class TuningResult:
    config: ThresholdConfig
    mean_src: float
    per_fold_src: tuple[float, ...]
    n_configs: int
    n_excluded: int  # essays with zero attempts under the winning config


def _check_weights(weights: Mapping[str, float] | None) -> dict[str, float]:
    if weights is None:
        return DEFAULT_LEVEL_WEIGHTS
    values = [weights[l] for l in CEFR_LEVELS]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("level weights must be strictly increasing A1..C2")
    return dict(weights)


def _is_binary(value: float) -> bool:
    return value == 0.0 or value == 1.0


def unique_indicators(preds: EssayPredictions, mode: str) -> dict[int, int]:
    """One binary indicator per construct: attempted anywhere in the essay.

    ``successful`` mode requires presence on both sides of some sentence;
    ``general`` mode only requires presence on the corrected side. Values
    must already be binary.
    """
    if mode not in ("successful", "general"):
        raise ValueError(f"mode must be successful or general, got {mode!r}")
    indicators: dict[int, int] = {}
    for (_, egp_id), (v_orig, v_corr) in preds.values.items():
        if not (_is_binary(v_orig) and _is_binary(v_corr)):
            raise ValueError(
                f"essay {preds.essay_id}: non-binary value for construct {egp_id}; "
                "apply thresholds first"
            )
        hit = (v_orig == 1.0 and v_corr == 1.0) if mode == "successful" else v_corr == 1.0
        indicators[egp_id] = max(indicators.get(egp_id, 0), int(hit))
    return indicators


def attempt_score(
    indicators: Mapping[int, int],
    catalog: Mapping[int, CanDoStatement],
    weights: Mapping[str, float] | None = None,
) -> float | None:
    """Level-weighted average over positive indicators; None when there are none."""
    weights = _check_weights(weights)
    counts = dict.fromkeys(CEFR_LEVELS, 0)
    for egp_id, flag in indicators.items():
        if egp_id not in catalog:
            raise CatalogError(f"construct {egp_id} is not in the catalog")
        if flag:
            counts[catalog[egp_id].level] += 1
    total = sum(counts.values())
    if total == 0:
        return None
    weighted = 0.0
    for level in CEFR_LEVELS:
        weighted += weights[level] * counts[level]
    return weighted / total


def encode_cefr(band: str) -> float:
    """Numeric encoding of a CEFR band; plus bands sit half way up."""
    try:
        return _BAND_VALUES[band]
    except KeyError:
        raise ValueError(f"unknown CEFR band {band!r}")


def pcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation; undefined for constant vectors."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise UndefinedMetricError(f"correlation needs at least 2 points, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((v - mx) ** 2 for v in x)
    syy = sum((v - my) ** 2 for v in y)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("correlation undefined for a constant vector")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / (math.sqrt(sxx) * math.sqrt(syy))
    return max(-1.0, min(1.0, r))


def _fractional_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def src(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    return pcc(_fractional_ranks(x), _fractional_ranks(y))


def apply_thresholds(
    preds: EssayPredictions,
    config: ThresholdConfig,
    catalog: Mapping[int, CanDoStatement],
) -> EssayPredictions:
    """Binarise probabilities with the per-level threshold on both sides (>=)."""
    out: dict[tuple[int, int], tuple[float, float]] = {}
    for (index, egp_id), (p_orig, p_corr) in preds.values.items():
        if egp_id not in catalog:
            raise CatalogError(f"construct {egp_id} is not in the catalog")
        tau = config.for_level(catalog[egp_id].level)
        out[(index, egp_id)] = (float(p_orig >= tau), float(p_corr >= tau))
    return EssayPredictions(essay_id=preds.essay_id, values=out)


def _bands_of(essays: Iterable[Essay] | Mapping[str, str]) -> dict[str, str]:
    if isinstance(essays, Mapping):
        return dict(essays)
    return {e.essay_id: e.cefr for e in essays}


def assign_folds(essay_ids: Iterable[str], folds: int, seed: int) -> dict[str, int]:
    """Deterministic fold assignment: sort ids, shuffle by seed, chunk evenly."""
    ids = sorted(essay_ids)
    if folds < 2:
        raise TuningError(f"need at least 2 folds, got {folds}")
    if len(ids) < folds:
        raise TuningError(f"{len(ids)} essays cannot fill {folds} folds")
    rng = random.Random(seed)
    rng.shuffle(ids)
    assignment: dict[str, int] = {}
    base = len(ids) // folds
    extra = len(ids) % folds
    pos = 0
    for fold in range(folds):
        size = base + (1 if fold < extra else 0)
        for essay_id in ids[pos : pos + size]:
            assignment[essay_id] = fold
        pos += size
    return assignment


def _fold_src(
    scores: Mapping[str, float], bands: Mapping[str, str], fold_ids: Sequence[str]
) -> float:
    xs = [encode_cefr(bands[eid]) for eid in fold_ids if eid in scores]
    ys = [scores[eid] for eid in fold_ids if eid in scores]
    try:
        return src(xs, ys)
    except UndefinedMetricError as exc:
        logger.warning("fold contributes -1: %s", exc)
        return -1.0


def _cv_src(
    scores: Mapping[str, float],
    bands: Mapping[str, str],
    fold_of: Mapping[str, int],
    n_folds: int,
    aggregate: str,
) -> tuple[float, list[float]]:
    fold_ids: list[list[str]] = [[] for _ in range(n_folds)]
    for eid, fold in fold_of.items():
        fold_ids[fold].append(eid)
    per_fold = [_fold_src(scores, bands, ids) for ids in fold_ids]
    if aggregate == "pooled":
        pooled = _fold_src(scores, bands, list(fold_of))
        return pooled, per_fold
    return sum(per_fold) / n_folds, per_fold


def evaluate_threshold_config(
    probs: Mapping[str, EssayPredictions],
    essays: Iterable[Essay] | Mapping[str, str],
    catalog: Mapping[int, CanDoStatement],
    config: ThresholdConfig,
    fold_of: Mapping[str, int],
    mode: str = "successful",
    weights: Mapping[str, float] | None = None,
    aggregate: str = "mean",
) -> tuple[float, list[float]]:
    """Reference evaluation of one threshold config (no shortcuts).

    Thresholds, indicators, and scores are computed through the public
    single-essay operations; grid_search must agree with this exactly.
    """
    bands = _bands_of(essays)
    scores: dict[str, float] = {}
    for essay_id, preds in probs.items():
        binary = apply_thresholds(preds, config, catalog)
        score = attempt_score(unique_indicators(binary, mode), catalog, weights)
        if score is not None:
            scores[essay_id] = score
    n_folds = max(fold_of.values()) + 1 if fold_of else 0
    return _cv_src(scores, bands, fold_of, n_folds, aggregate)


def grid_search(
    probs: Mapping[str, EssayPredictions],
    essays: Iterable[Essay] | Mapping[str, str],
    catalog: Mapping[int, CanDoStatement],
    candidates: Sequence[float] = DEFAULT_THRESHOLD_CANDIDATES,
    folds: int = 5,
    seed: int = 0,
    mode: str = "successful",
    weights: Mapping[str, float] | None = None,
    aggregate: str = "mean",
) -> TuningResult:
    """Exhaustive search over per-level threshold combinations.

    Every combination from ``candidates`` (one threshold per level) is
    scored by cross-validated Spearman correlation between essay attempt
    scores and their CEFR bands; ties break towards the lexicographically
    smallest threshold vector (A1..C2). Equivalent to evaluating
    ``evaluate_threshold_config`` on every combination, but precomputes
    per-essay match strengths so the search stays fast.
    """
    if not candidates:
        raise TuningError("candidate threshold set is empty")
    if mode not in ("successful", "general"):
        raise ValueError(f"mode must be successful or general, got {mode!r}")
    weights_map = _check_weights(weights)
    bands = _bands_of(essays)
    unknown = sorted(set(probs) - set(bands))
    if unknown:
        raise JoinError(f"essays missing CEFR bands: {', '.join(unknown)}")
    fold_of = assign_folds(bands.keys(), folds, seed)

    cand = sorted(set(float(c) for c in candidates))
    level_index = {level: i for i, level in enumerate(CEFR_LEVELS)}
    weight_vec = [weights_map[l] for l in CEFR_LEVELS]

    # strongest achievable evidence per (essay, construct): thresholding at
    # tau turns the construct on exactly when its strength is >= tau
    strengths: dict[str, list[list[float]]] = {}
    for essay_id, preds in probs.items():
        per_construct: dict[int, float] = {}
        for (_, egp_id), (p_orig, p_corr) in preds.values.items():
            if egp_id not in catalog:
                raise CatalogError(f"construct {egp_id} is not in the catalog")
            strength = min(p_orig, p_corr) if mode == "successful" else p_corr
            if egp_id not in per_construct or strength > per_construct[egp_id]:
                per_construct[egp_id] = strength
        by_level: list[list[float]] = [[] for _ in CEFR_LEVELS]
        for egp_id, strength in per_construct.items():
            by_level[level_index[catalog[egp_id].level]].append(strength)
        strengths[essay_id] = [sorted(vals) for vals in by_level]

    # counts[eid][level][ci] = number of constructs switched on at candidate ci
    counts: dict[str, list[list[int]]] = {}
    for essay_id, by_level in strengths.items():
        counts[essay_id] = [
            [len(vals) - bisect_left(vals, c) for c in cand] for vals in by_level
        ]

    essay_ids = list(probs)
    n_folds = folds
    best_key: float | None = None
    best_vector: tuple[float, ...] | None = None
    best_per_fold: list[float] = []
    best_excluded = 0
    n_configs = 0
    for combo in itertools.product(range(len(cand)), repeat=len(CEFR_LEVELS)):
        n_configs += 1
        scores: dict[str, float] = {}
        for essay_id in essay_ids:
            c = counts[essay_id]
            num = 0.0
            den = 0
            for li in range(len(CEFR_LEVELS)):
                n_on = c[li][combo[li]]
                num += weight_vec[li] * n_on
                den += n_on
            if den:
                scores[essay_id] = num / den
        value, per_fold = _cv_src(scores, bands, fold_of, n_folds, aggregate)
        if best_key is None or value > best_key:
            best_key = value
            best_vector = tuple(cand[i] for i in combo)
            best_per_fold = per_fold
            best_excluded = len(bands) - len(scores)
    assert best_vector is not None
    config = ThresholdConfig(dict(zip(CEFR_LEVELS, best_vector)))
    return TuningResult(
        config=config,
        mean_src=best_key,
        per_fold_src=tuple(best_per_fold),
        n_configs=n_configs,
        n_excluded=best_excluded,
    )


# ---------------------------------------------------------------------------
# distribution analyses

LEVELS_HIGH_TO_LOW = tuple(reversed(CEFR_LEVELS))


def cumulative_level_fractions(levels: Sequence[str]) -> list[float] | None:
    """Fraction of attempts at or above each level, ordered C2 down to A1."""
    if not levels:
        return None
    rank = {level: i for i, level in enumerate(CEFR_LEVELS)}
    total = len(levels)
    out = []
    for level in LEVELS_HIGH_TO_LOW:
        at_or_above = sum(1 for l in levels if rank[l] >= rank[level])
        out.append(at_or_above / total)
    return out


def cumulative_level_distribution(
    per_essay_levels: Mapping[str, Sequence[str]],
    bands: Mapping[str, str],
) -> list[tuple[str, str, float | None]]:
    """Per CEFR band group, the cumulative attempt fraction at each level.

    Attempts are pooled across the group's essays. Groups without any
    attempts produce rows with a None fraction. Rows are ordered by band
    (ascending) then level (C2 down to A1).
    """
    pooled: dict[str, list[str]] = {}
    for essay_id, levels in per_essay_levels.items():
        if essay_id not in bands:
            raise JoinError(f"essay {essay_id} has no CEFR band")
        pooled.setdefault(bands[essay_id], []).extend(levels)
    rows: list[tuple[str, str, float | None]] = []
    for band in sorted(pooled, key=encode_cefr):
        fractions = cumulative_level_fractions(pooled[band])
        for i, level in enumerate(LEVELS_HIGH_TO_LOW):
            rows.append((band, level, None if fractions is None else fractions[i]))
    return rows


def curve_auc(curve: Sequence[float]) -> float:
    """Trapezoidal area under a cumulative curve on the unit-spaced level axis."""
    return float(_trapezoid(np.asarray(curve, dtype=float), dx=1.0))


def ecdf_auc(
    curves: Mapping[str, Sequence[float]],
    bands: Mapping[str, str],
) -> tuple[dict[str, float], list[tuple[str, float, float]]]:
    """AUC per essay curve, plus the per-band empirical CDF of those AUCs.

    The eCDF rows give, at each observed AUC value, the fraction of the
    band's essays whose AUC is less than or equal to it.
    """
    aucs: dict[str, float] = {}
    by_band: dict[str, list[float]] = {}
    for essay_id, curve in curves.items():
        if essay_id not in bands:
            raise JoinError(f"essay {essay_id} has no CEFR band")
        value = curve_auc(curve)
        aucs[essay_id] = value
        by_band.setdefault(bands[essay_id], []).append(value)
    rows: list[tuple[str, float, float]] = []
    for band in sorted(by_band, key=encode_cefr):
        values = sorted(by_band[band])
        n = len(values)
        for v in sorted(set(values)):
            rows.append((band, v, sum(1 for x in values if x <= v) / n))
    return aucs, rows


# ---------------------------------------------------------------------------
# essay score pipeline

@dataclass(frozen=True)
class EssayScore:
    essay_id: str
    cefr: str
    score_general: float | None
    score_successful: float | None
    n_attempts: int  # unique general attempts


def score_essays(
    preds: Mapping[str, EssayPredictions],
    bands: Mapping[str, str],
    catalog: Mapping[int, CanDoStatement],
    weights: Mapping[str, float] | None = None,
    denominator: str = "same",
) -> list[EssayScore]:
    """Compute both attempt scores for every essay with predictions.

    ``denominator="general"`` normalises the successful score by the count
    of general attempts instead of successful ones; such scores can fall
    below the minimum level weight.
    """
    if denominator not in ("same", "general"):
        raise ValueError(f"denominator must be same or general, got {denominator!r}")
    weights_map = _check_weights(weights)
    out = []
    for essay_id in sorted(preds):
        if essay_id not in bands:
            raise JoinError(f"essay {essay_id} has no CEFR band")
        general_ind = unique_indicators(preds[essay_id], "general")
        successful_ind = unique_indicators(preds[essay_id], "successful")
        score_general = attempt_score(general_ind, catalog, weights_map)
        score_successful = attempt_score(successful_ind, catalog, weights_map)
        if denominator == "general" and score_successful is not None:
            num = 0.0
            for egp_id, flag in successful_ind.items():
                if flag:
                    num += weights_map[catalog[egp_id].level]
            den = sum(general_ind.values())
            score_successful = num / den
        out.append(
            EssayScore(
                essay_id=essay_id,
                cefr=bands[essay_id],
                score_general=score_general,
                score_successful=score_successful,
                n_attempts=sum(general_ind.values()),
            )
        )
    return out


def correlation_report(scores: list[EssayScore]) -> dict:
    """PCC/SRC of both score modes against encoded bands.

    Essays without a score in a mode are excluded from that mode's
    correlation and counted. Undefined correlations are reported as None.
    """
    report: dict = {}
    for mode, getter in (
        ("general", lambda s: s.score_general),
        ("successful", lambda s: s.score_successful),
    ):
        kept = [(encode_cefr(s.cefr), getter(s)) for s in scores if getter(s) is not None]
        excluded = len(scores) - len(kept)
        entry: dict = {"n": len(kept), "n_excluded": excluded}
        try:
            entry["pcc"] = pcc([x for x, _ in kept], [y for _, y in kept])
            entry["src"] = src([x for x, _ in kept], [y for _, y in kept])
        except UndefinedMetricError as exc:
            entry["pcc"] = None
            entry["src"] = None
            entry["undefined"] = str(exc)
        report[mode] = entry
    return report


def write_scores_csv(scores: list[EssayScore], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["essay_id", "cefr", "encoded_cefr", "score_general", "score_successful", "n_attempts"]
        )
        for s in scores:
            writer.writerow(
                [
                    s.essay_id,
                    s.cefr,
                    repr(encode_cefr(s.cefr)),
                    "" if s.score_general is None else repr(s.score_general),
                    "" if s.score_successful is None else repr(s.score_successful),
                    s.n_attempts,
                ]
            )


def write_cumulative_csv(
    rows: list[tuple[str, str, float | None]], path: str | Path
) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["band", "level", "fraction_at_or_above"])
        for band, level, fraction in rows:
            writer.writerow([band, level, "" if fraction is None else repr(fraction)])


def write_auc_csv(
    aucs: Mapping[str, float], bands: Mapping[str, str], path: str | Path
) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["essay_id", "band", "auc"])
        for essay_id in sorted(aucs):
            writer.writerow([essay_id, bands[essay_id], repr(aucs[essay_id])])


def write_ecdf_csv(rows: list[tuple[str, float, float]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["band", "auc", "cumulative_fraction"])
        for band, auc, fraction in rows:
            writer.writerow([band, repr(auc), repr(fraction)])
