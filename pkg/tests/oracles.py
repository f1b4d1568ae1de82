"""Independent reference implementations used to check the package.

Everything here is deliberately written from the definitions, without
touching the vectorised or precomputed code paths under test: plain
loops, plain divisions, exhaustive enumeration.
"""

from __future__ import annotations

import itertools

from egpkit.attempts import AttemptClass, Task


def classify_pair(p_o: float, p_c: float, tau_o: float, tau_c: float) -> AttemptClass:
    if p_o >= tau_o and p_c >= tau_c:
        return AttemptClass.SUCCESSFUL
    if p_o < tau_o and p_c >= tau_c:
        return AttemptClass.UNSUCCESSFUL
    return AttemptClass.NO_ATTEMPT


def project(cls: AttemptClass, task: Task) -> int:
    if task is Task.GENERAL:
        return int(cls is not AttemptClass.NO_ATTEMPT)
    if task is Task.SUCCESSFUL:
        return int(cls is AttemptClass.SUCCESSFUL)
    return int(cls is AttemptClass.UNSUCCESSFUL)


def candidate_thresholds(values) -> list[float]:
    distinct = sorted(set(float(v) for v in values))
    sentinel = distinct[-1] + 1.0 if distinct else 1.0
    return distinct + [sentinel]


def scatter(p_o, p_c, gold, task):
    """All (tau_o, tau_c, precision-or-None, recall) operating points."""
    gold_proj = [project(g, task) for g in gold]
    n_pos = sum(gold_proj)
    assert n_pos > 0
    points = []
    for to in candidate_thresholds(p_o):
        for tc in candidate_thresholds(p_c):
            tp = fp = 0
            for po_i, pc_i, g in zip(p_o, p_c, gold_proj):
                pred = project(classify_pair(po_i, pc_i, to, tc), task)
                if pred and g:
                    tp += 1
                elif pred:
                    fp += 1
            precision = tp / (tp + fp) if (tp + fp) else None
            recall = tp / n_pos
            points.append((to, tc, precision, recall))
    return points


def envelope(points):
    """(recall, best precision) pairs sorted by recall, skipping undefined."""
    best = {}
    for _, _, precision, recall in points:
        if precision is None:
            continue
        if recall not in best or precision > best[recall]:
            best[recall] = precision
    return sorted(best.items())


def f1(p, r):
    if p == 0.0 and r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def best_f1(env):
    return max(f1(p, r) for r, p in env)


def kappa(a, b):
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    pa = sum(a) / n
    pb = sum(b) / n
    expected = pa * pb + (1 - pa) * (1 - pb)
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


def trapezoid(ys, dx=1.0):
    area = 0.0
    for a, b in zip(ys, ys[1:]):
        area += (a + b) / 2.0 * dx
    return area


def ranks_with_ties(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    out = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            out[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return out


def pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((v - mx) ** 2 for v in x)
    syy = sum((v - my) ** 2 for v in y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / (sxx ** 0.5 * syy ** 0.5)
    return max(-1.0, min(1.0, r))


def spearman(x, y):
    return pearson(ranks_with_ties(x), ranks_with_ties(y))


def essay_score(values, levels_by_id, tau_by_level, mode, weights):
    """Score one essay from raw probability values, straight from the rules.

    ``values`` maps (sentence index, egp_id) to (p_original, p_corrected).
    """
    positive = set()
    for (_, egp_id), (p_o, p_c) in values.items():
        tau = tau_by_level[levels_by_id[egp_id]]
        y_o, y_c = p_o >= tau, p_c >= tau
        hit = (y_o and y_c) if mode == "successful" else y_c
        if hit:
            positive.add(egp_id)
    if not positive:
        return None
    level_order = ["A1", "A2", "B1", "B2", "C1", "C2"]
    counts = {l: 0 for l in level_order}
    for egp_id in positive:
        counts[levels_by_id[egp_id]] += 1
    num = 0.0
    for level in level_order:
        num += weights[level] * counts[level]
    return num / len(positive)


def grid_search_bruteforce(
    probs_values, levels_by_id, bands, fold_of, candidates, mode, weights
):
    """Lexicographic argmax over every config, scored with plain loops.

    ``probs_values`` maps essay_id to the raw values dict of that essay.
    Returns (threshold vector A1..C2, mean SRC).
    """
    level_order = ["A1", "A2", "B1", "B2", "C1", "C2"]
    n_folds = max(fold_of.values()) + 1
    band_value = {
        "A1": 1.0, "A2": 2.0, "A2+": 2.5, "B1": 3.0, "B1+": 3.5,
        "B2": 4.0, "B2+": 4.5, "C1": 5.0, "C1+": 5.5, "C2": 6.0,
    }
    best_vec = None
    best_val = None
    for combo in itertools.product(sorted(set(candidates)), repeat=6):
        tau_by_level = dict(zip(level_order, combo))
        scores = {}
        for essay_id, values in probs_values.items():
            sc = essay_score(values, levels_by_id, tau_by_level, mode, weights)
            if sc is not None:
                scores[essay_id] = sc
        fold_ids = [[] for _ in range(n_folds)]
        for eid, fold in fold_of.items():
            fold_ids[fold].append(eid)
        per_fold = []
        for ids in fold_ids:
            xs = [band_value[bands[eid]] for eid in ids if eid in scores]
            ys = [scores[eid] for eid in ids if eid in scores]
            if len(xs) < 2 or len(set(xs)) == 1 or len(set(ys)) == 1:
                per_fold.append(-1.0)
            else:
                per_fold.append(spearman(xs, ys))
        value = sum(per_fold) / n_folds
        if best_val is None or value > best_val:
            best_val = value
            best_vec = combo
    return best_vec, best_val
