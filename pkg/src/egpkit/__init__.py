"""Construct-attempt detection and proficiency scoring for learner English.

The toolkit works on pairs of original learner sentences and their
corrected versions: rules or an LLM judge whether a catalog construct is
present on each side, the pair of judgements yields a successful /
unsuccessful / no-attempt classification, and per-essay aggregates of
those attempts feed CEFR-correlated proficiency scores.
"""

from .attempts import (
    AttemptClass,
    Task,
    ThresholdPair,
    class_from_labels,
    class_from_probs,
    one_vs_rest,
)
from .builtins import BUILTIN_IDS, builtin_detector, builtin_filter
from .corpus import (
    AttemptAnnotation,
    CanDoStatement,
    Essay,
    EssayMeta,
    Sentence,
    SentencePair,
    TaggedToken,
    catalog_by_id,
    dump_sentence_pairs,
    group_into_essays,
    load_annotations,
    load_egp_catalog,
    load_essay_meta,
    load_sentence_pairs,
    parse_conllu,
)
from .llm import (
    BatchResult,
    LlmClient,
    LlmConfig,
    PresenceProbability,
    PromptContext,
    build_prompt,
    classify,
    classify_batch,
    softmax_confidence,
)
from .metrics import (
    Confusion,
    Envelope,
    PrPoint,
    best_f1,
    cohen_kappa,
    confusion,
    f_beta,
    max_precision_envelope,
    pr_scatter,
    precision_recall,
)
from .rules import Rule, RuleMatch, compile_rule, evaluate_rule, load_rule_file, run_detectors
from .scoring import (
    DEFAULT_LEVEL_WEIGHTS,
    DEFAULT_THRESHOLD_CANDIDATES,
    EssayPredictions,
    ThresholdConfig,
    TuningResult,
    apply_thresholds,
    attempt_score,
    cumulative_level_distribution,
    ecdf_auc,
    encode_cefr,
    evaluate_threshold_config,
    grid_search,
    pcc,
    score_essays,
    src,
    unique_indicators,
)

__version__ = "0.1.0"
