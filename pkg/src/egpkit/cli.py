"""Command line pipeline: detect, classify, evaluate, score, tune, analyze.

Commands read and write plain CSV/JSON so that every figure-style output
is machine-readable plot data. Exit codes: 0 success, 2 input or schema
problem, 3 completion-endpoint failure, 4 undefined evaluation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Mapping, Sequence

from . import builtins as builtin_rules
from . import llm as llm_mod
from .attempts import AttemptClass, Task, ThresholdPair, class_from_labels, class_from_probs
from .corpus import (
    CanDoStatement,
    catalog_by_id,
    load_annotations,
    load_egp_catalog,
    load_essay_meta,
    load_sentence_pairs,
)
from .errors import (
    CoverageError,
    EgpkitError,
    InputError,
    ServiceError,
    UndefinedMetricError,
)
from .metrics import (
    best_f1,
    confusion,
    f_beta,
    max_precision_envelope,
    pr_scatter,
    precision_recall,
    write_envelope_csv,
    write_scatter_csv,
)
from .rules import Rule, evaluate_rule, load_rule_file
from .scoring import (
    DEFAULT_THRESHOLD_CANDIDATES,
    EssayPredictions,
    ThresholdConfig,
    correlation_report,
    cumulative_level_distribution,
    cumulative_level_fractions,
    ecdf_auc,
    grid_search,
    score_essays,
    unique_indicators,
    write_auc_csv,
    write_cumulative_csv,
    write_ecdf_csv,
    write_scores_csv,
    apply_thresholds,
)

DETECTIONS_FILE = "detections.csv"


# ---------------------------------------------------------------------------
# configuration plumbing


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc.msg}")
    if not isinstance(data, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return data


def _setting(args: argparse.Namespace, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    llm_cfg = config.get("llm") or {}
    if name in ("base_url", "model", "cache_dir", "max_in_flight", "timeout"):
        if name in llm_cfg:
            return llm_cfg[name]
    return default


def _require(args, config, name: str):
    value = _setting(args, config, name)
    if value is None:
        raise InputError(f"missing required setting --{name.replace('_', '-')}")
    return value


def _out_dir(args, config) -> Path:
    out = Path(_require(args, config, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _llm_config(args, config) -> llm_mod.LlmConfig:
    base_url = _setting(args, config, "base_url")
    model = _setting(args, config, "model")
    if not base_url or not model:
        raise InputError("this engine needs --base-url and --model (or llm settings in --config)")
    kwargs = {}
    for name in ("max_in_flight", "timeout", "cache_dir"):
        value = _setting(args, config, name)
        if value is not None:
            kwargs[name] = value
    if "max_in_flight" in kwargs:
        kwargs["max_in_flight"] = int(kwargs["max_in_flight"])
    if "timeout" in kwargs:
        kwargs["timeout"] = float(kwargs["timeout"])
    return llm_mod.LlmConfig(base_url=str(base_url), model=str(model), **kwargs)


# ---------------------------------------------------------------------------
# detection tables


def write_detections(rows: list[tuple[str, int, int, float, float, str]], path: Path) -> None:
    rows = sorted(rows, key=lambda r: (r[0], r[1], r[2]))
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["essay_id", "index", "egp_id", "p_o", "p_c", "source"])
        for essay_id, index, egp_id, p_o, p_c, source in rows:
            writer.writerow([essay_id, index, egp_id, repr(p_o), repr(p_c), source])


def read_detections(path: str | Path) -> dict[str, EssayPredictions]:
    path = Path(path)
    by_essay: dict[str, EssayPredictions] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for col in ("essay_id", "index", "egp_id", "p_o", "p_c"):
            if col not in (reader.fieldnames or []):
                raise InputError(f"{path}: detections are missing column {col!r}")
        for row in reader:
            essay_id = row["essay_id"]
            preds = by_essay.setdefault(essay_id, EssayPredictions(essay_id))
            key = (int(row["index"]), int(row["egp_id"]))
            preds.values[key] = (float(row["p_o"]), float(row["p_c"]))
    return by_essay


def _all_binary(preds: Mapping[str, EssayPredictions]) -> bool:
    return all(
        v in (0.0, 1.0)
        for table in preds.values()
        for pair in table.values.values()
        for v in pair
    )


def _parse_threshold_config(raw: str, path_hint: str = "") -> ThresholdConfig:
    """Accept a tuning-report JSON path or a single threshold for all levels."""
    candidate = Path(raw)
    if candidate.exists():
        data = json.loads(candidate.read_text(encoding="utf-8"))
        table = data.get("thresholds", data)
        if not isinstance(table, dict):
            raise InputError(f"{raw}: expected a thresholds object")
        return ThresholdConfig({k: float(v) for k, v in table.items()})
    try:
        tau = float(raw)
    except ValueError:
        raise InputError(f"--thresholds must be a config file or a number, got {raw!r}")
    return ThresholdConfig({level: tau for level in ("A1", "A2", "B1", "B2", "C1", "C2")})


def _binarise(args, config, preds, catalog):
    if _all_binary(preds):
        return preds
    raw = _setting(args, config, "thresholds")
    if raw is None:
        raise InputError("detections carry probabilities; pass --thresholds")
    tc = _parse_threshold_config(str(raw))
    return {eid: apply_thresholds(p, tc, catalog) for eid, p in preds.items()}


# ---------------------------------------------------------------------------
# detect


def _load_extra_rules(paths: Sequence[str] | None) -> tuple[dict[int, Rule], dict[int, Rule]]:
    detectors: dict[int, Rule] = {}
    filters: dict[int, Rule] = {}
    for path in paths or []:
        for loaded in load_rule_file(path):
            target = detectors if loaded.mode == "detector" else filters
            target[loaded.egp_id] = loaded.rule
    return detectors, filters


def _rule_tables(catalog: dict[int, CanDoStatement], rule_paths) -> tuple[dict[int, Rule], dict[int, Rule]]:
    detectors = {
        egp_id: builtin_rules.builtin_detector(egp_id)
        for egp_id in builtin_rules.BUILTIN_IDS
        if egp_id in catalog
    }
    filters = {
        egp_id: builtin_rules.builtin_filter(egp_id)
        for egp_id in builtin_rules.BUILTIN_IDS
        if egp_id in catalog
    }
    extra_detectors, extra_filters = _load_extra_rules(rule_paths)
    detectors.update((k, v) for k, v in extra_detectors.items() if k in catalog)
    filters.update((k, v) for k, v in extra_filters.items() if k in catalog)
    return detectors, filters


def cmd_detect(args, config) -> int:
    catalog = catalog_by_id(load_egp_catalog(_require(args, config, "catalog")))
    pairs = load_sentence_pairs(_require(args, config, "corpus"))
    engine = _setting(args, config, "engine", "rules")
    out = _out_dir(args, config)
    rule_paths = _setting(args, config, "rules")
    detectors, filters = _rule_tables(catalog, rule_paths)
    rows: list[tuple[str, int, int, float, float, str]] = []

    if engine == "rules":
        for pair in pairs:
            for egp_id in sorted(detectors):
                rule = detectors[egp_id]
                y_o = float(evaluate_rule(rule, pair.original).matched)
                y_c = float(evaluate_rule(rule, pair.corrected).matched)
                rows.append((pair.essay_id, pair.index, egp_id, y_o, y_c, "rules"))
    elif engine in ("llm", "rules-then-llm"):
        llm_config = _llm_config(args, config)
        client = llm_mod.LlmClient(llm_config)
        contexts: list[llm_mod.PromptContext] = []
        slots: list[tuple[str, int, int]] = []
        for pair in pairs:
            if engine == "llm":
                targets = sorted(catalog)
            else:
                targets = [
                    egp_id
                    for egp_id in sorted(filters)
                    if evaluate_rule(filters[egp_id], pair.corrected).matched
                ]
                passed = set(targets)
                for egp_id in sorted(filters):
                    if egp_id not in passed:
                        rows.append((pair.essay_id, pair.index, egp_id, 0.0, 0.0, "filter"))
            for egp_id in targets:
                ctx_o = llm_mod.PromptContext(catalog[egp_id], pair.original)
                ctx_c = llm_mod.PromptContext(catalog[egp_id], pair.corrected)
                contexts.extend([ctx_o, ctx_c])
                slots.append((pair.essay_id, pair.index, egp_id))
        batch = client.classify_batch(contexts)
        if batch.errors:
            detail = "; ".join(f"item {i}: {msg}" for i, msg in batch.errors[:5])
            raise ServiceError(
                f"{len(batch.errors)} classification(s) failed ({detail}); "
                "rerun to resume from the cache"
            )
        for slot_idx, (essay_id, index, egp_id) in enumerate(slots):
            p_o = batch.probabilities[2 * slot_idx].p
            p_c = batch.probabilities[2 * slot_idx + 1].p
            rows.append((essay_id, index, egp_id, p_o, p_c, "llm"))
    else:
        raise InputError(f"unknown engine {engine!r}")

    write_detections(rows, out / DETECTIONS_FILE)
    print(f"wrote {len(rows)} detections to {out / DETECTIONS_FILE}")
    return 0


# ---------------------------------------------------------------------------
# classify


def cmd_classify(args, config) -> int:
    preds = read_detections(_require(args, config, "detections"))
    raw = str(_require(args, config, "thresholds"))
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise InputError('classify needs --thresholds "tau_o,tau_c"')
    thresholds = ThresholdPair(float(parts[0]), float(parts[1]))
    out = _out_dir(args, config)
    path = out / "classes.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["essay_id", "index", "egp_id", "attempt_class"])
        for essay_id in sorted(preds):
            for (index, egp_id), (p_o, p_c) in sorted(preds[essay_id].values.items()):
                cls = class_from_probs(p_o, p_c, thresholds)
                writer.writerow([essay_id, index, egp_id, cls.value])
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _evaluate_statement_binary(items) -> dict:
    """Single-operating-point metrics from binary detections."""
    result = {}
    pred_classes = [class_from_labels(int(p_o), int(p_c)) for p_o, p_c, _ in items]
    gold_classes = [g for _, _, g in items]
    for task in Task:
        from .attempts import one_vs_rest

        pred = [one_vs_rest(c, task) for c in pred_classes]
        gold = [one_vs_rest(c, task) for c in gold_classes]
        if sum(gold) == 0:
            result[task.value] = {"undefined": "no gold positives"}
            continue
        p, r = precision_recall(confusion(pred, gold))
        if p is None:
            result[task.value] = {
                "precision": None,
                "recall": r,
                "f1": None,
                "undefined": "no predicted positives",
            }
        else:
            result[task.value] = {"precision": p, "recall": r, "f1": f_beta(p, r, 1.0)}
    return result


def _evaluate_statement_probabilistic(items, out: Path | None, egp_id: int) -> dict:
    """Envelope metrics from probability detections; F1 is the envelope maximum."""
    result = {}
    p_o = [x for x, _, _ in items]
    p_c = [x for _, x, _ in items]
    gold = [g for _, _, g in items]
    for task in Task:
        try:
            points = pr_scatter(p_o, p_c, gold, task)
        except UndefinedMetricError as exc:
            result[task.value] = {"undefined": str(exc)}
            continue
        envelope = max_precision_envelope(points)
        f1 = best_f1(envelope)
        at = max(envelope.points, key=lambda rp: f_beta(rp[1], rp[0], 1.0))
        result[task.value] = {
            "precision": at[1],
            "recall": at[0],
            "f1": f1,
            "f1_definition": "max along the precision envelope",
        }
        if out is not None:
            write_scatter_csv(points, out / f"scatter_{egp_id}_{task.value}.csv")
            write_envelope_csv(envelope, out / f"envelope_{egp_id}_{task.value}.csv")
    return result


def cmd_evaluate(args, config) -> int:
    preds = read_detections(_require(args, config, "detections"))
    annotations = load_annotations(_require(args, config, "annotations"))
    out = _out_dir(args, config)
    treat = _setting(args, config, "treat", "auto")
    binary = _all_binary(preds) if treat == "auto" else treat == "binary"

    missing = []
    by_statement: dict[int, list[tuple[float, float, AttemptClass]]] = {}
    for ann in annotations:
        table = preds.get(ann.essay_id)
        value = table.values.get((ann.index, ann.egp_id)) if table else None
        if value is None:
            missing.append((ann.essay_id, ann.index, ann.egp_id))
            continue
        gold = class_from_labels(ann.y_original, ann.y_corrected)
        by_statement.setdefault(ann.egp_id, []).append((value[0], value[1], gold))
    if missing:
        shown = ", ".join(f"({e},{i},{g})" for e, i, g in missing[:10])
        raise CoverageError(
            f"{len(missing)} annotated pairs have no detection, e.g. {shown}"
        )

    per_statement = {}
    for egp_id in sorted(by_statement):
        items = by_statement[egp_id]
        if binary:
            per_statement[egp_id] = _evaluate_statement_binary(items)
        else:
            per_statement[egp_id] = _evaluate_statement_probabilistic(items, out, egp_id)

    macro = {}
    for task in Task:
        cells = [
            stats[task.value]
            for stats in per_statement.values()
            if "f1" in stats[task.value] and stats[task.value]["f1"] is not None
        ]
        if cells:
            macro[task.value] = {
                "precision": sum(c["precision"] for c in cells) / len(cells),
                "recall": sum(c["recall"] for c in cells) / len(cells),
                "f1": sum(c["f1"] for c in cells) / len(cells),
                "n_statements": len(cells),
            }
        else:
            macro[task.value] = {"undefined": "no statement had defined scores"}

    report = {
        "operating_mode": "single point (binary)" if binary else "precision envelope",
        "per_statement": per_statement,
        "macro": macro,
    }
    path = out / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# score / tune / analyze


def cmd_score(args, config) -> int:
    catalog = catalog_by_id(load_egp_catalog(_require(args, config, "catalog")))
    meta = load_essay_meta(_require(args, config, "meta"))
    preds = read_detections(_require(args, config, "detections"))
    out = _out_dir(args, config)
    denominator = _setting(args, config, "denominator", "same")
    bands = {eid: m.cefr for eid, m in meta.items()}
    unknown = sorted(set(preds) - set(bands))
    if unknown:
        raise InputError(f"essays missing from metadata: {', '.join(unknown)}")
    binary = _binarise(args, config, preds, catalog)
    scores = score_essays(binary, bands, catalog, denominator=denominator)
    write_scores_csv(scores, out / "scores.csv")
    report = correlation_report(scores)
    (out / "correlations.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {out / 'scores.csv'} and {out / 'correlations.json'}")
    return 0


def cmd_tune(args, config) -> int:
    catalog = catalog_by_id(load_egp_catalog(_require(args, config, "catalog")))
    meta = load_essay_meta(_require(args, config, "meta"))
    preds = read_detections(_require(args, config, "detections"))
    out = _out_dir(args, config)
    raw_candidates = _setting(args, config, "candidates")
    if raw_candidates is None:
        candidates = DEFAULT_THRESHOLD_CANDIDATES
    elif isinstance(raw_candidates, str):
        candidates = tuple(float(c) for c in raw_candidates.split(","))
    else:
        candidates = tuple(float(c) for c in raw_candidates)
    folds = int(_setting(args, config, "folds", 5))
    seed = int(_setting(args, config, "seed", 0))
    mode = _setting(args, config, "mode", "successful")
    aggregate = _setting(args, config, "aggregate", "mean")
    bands = {eid: m.cefr for eid, m in meta.items()}
    result = grid_search(
        preds,
        bands,
        catalog,
        candidates=candidates,
        folds=folds,
        seed=seed,
        mode=mode,
        aggregate=aggregate,
    )
    report = {
        "thresholds": dict(result.config.by_level),
        "mean_src": result.mean_src,
        "per_fold_src": list(result.per_fold_src),
        "n_configs": result.n_configs,
        "n_excluded": result.n_excluded,
        "mode": mode,
        "aggregate": aggregate,
        "candidates": sorted(set(candidates)),
        "folds": folds,
        "seed": seed,
    }
    path = out / "thresholds.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return 0


def cmd_analyze(args, config) -> int:
    catalog = catalog_by_id(load_egp_catalog(_require(args, config, "catalog")))
    meta = load_essay_meta(_require(args, config, "meta"))
    preds = read_detections(_require(args, config, "detections"))
    out = _out_dir(args, config)
    bands = {eid: m.cefr for eid, m in meta.items()}
    unknown = sorted(set(preds) - set(bands))
    if unknown:
        raise InputError(f"essays missing from metadata: {', '.join(unknown)}")
    binary = _binarise(args, config, preds, catalog)
    for mode in ("general", "successful"):
        per_essay_levels = {}
        for essay_id, table in binary.items():
            indicators = unique_indicators(table, mode)
            per_essay_levels[essay_id] = [
                catalog[egp_id].level for egp_id, flag in sorted(indicators.items()) if flag
            ]
        rows = cumulative_level_distribution(per_essay_levels, bands)
        write_cumulative_csv(rows, out / f"cumulative_{mode}.csv")
        curves = {
            essay_id: fractions
            for essay_id, levels in per_essay_levels.items()
            if (fractions := cumulative_level_fractions(levels)) is not None
        }
        aucs, ecdf_rows = ecdf_auc(curves, bands)
        write_auc_csv(aucs, bands, out / f"auc_{mode}.csv")
        write_ecdf_csv(ecdf_rows, out / f"ecdf_{mode}.csv")
    print(f"wrote distribution tables to {out}")
    return 0


# ---------------------------------------------------------------------------
# cache


def cmd_cache(args, config) -> int:
    cache_dir = _setting(args, config, "cache_dir")
    if not cache_dir:
        raise InputError("cache needs --cache-dir")
    cache_dir = Path(cache_dir)
    entries = sorted(cache_dir.glob("*.json")) if cache_dir.is_dir() else []
    if getattr(args, "clear", False):
        for entry in entries:
            entry.unlink()
        print(f"removed {len(entries)} cached responses from {cache_dir}")
    else:
        print(f"{len(entries)} cached responses in {cache_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with defaults for any flag")
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egpkit",
        description="Grammatical construct attempt detection and essay scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run construct detection over a corpus")
    _add_common(p)
    p.add_argument("--catalog")
    p.add_argument("--corpus")
    p.add_argument("--engine", choices=["rules", "llm", "rules-then-llm"])
    p.add_argument("--rules", action="append", help="extra rule definition file (repeatable)")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", help="map probability detections to attempt classes")
    _add_common(p)
    p.add_argument("--detections")
    p.add_argument("--thresholds", help='pair "tau_o,tau_c"')
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score detections against gold annotations")
    _add_common(p)
    p.add_argument("--detections")
    p.add_argument("--annotations")
    p.add_argument("--treat", choices=["auto", "binary", "prob"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="essay attempt scores and CEFR correlations")
    _add_common(p)
    p.add_argument("--detections")
    p.add_argument("--catalog")
    p.add_argument("--meta")
    p.add_argument("--thresholds", help="tuning report JSON or a single threshold")
    p.add_argument("--denominator", choices=["same", "general"])
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tune", help="grid-search per-level thresholds by cross-validated SRC")
    _add_common(p)
    p.add_argument("--detections")
    p.add_argument("--catalog")
    p.add_argument("--meta")
    p.add_argument("--candidates", help="comma-separated threshold candidates")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["general", "successful"])
    p.add_argument("--aggregate", choices=["mean", "pooled"])
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("analyze", help="cumulative level distribution and AUC eCDF tables")
    _add_common(p)
    p.add_argument("--detections")
    p.add_argument("--catalog")
    p.add_argument("--meta")
    p.add_argument("--thresholds", help="needed when detections carry probabilities")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cache", help="inspect or clear the response cache")
    _add_common(p)
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--clear", action="store_true")
    p.set_defaults(func=cmd_cache)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(getattr(args, "config", None))
        return args.func(args, config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except UndefinedMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except EgpkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
