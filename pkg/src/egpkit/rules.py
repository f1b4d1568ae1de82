"""Token-pattern rule engine over tagged sentences.

A rule is a disjunction of clause groups; a group matches when all of its
clauses match. Clauses test single tokens, consecutive form sequences,
ordered co-occurrence within a window, and sentence-wide presence or
absence (optionally scoped to a dependency subtree). Lexical matching is
case-insensitive and tolerant of apostrophe style; tag matching is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .corpus import Sentence, TaggedToken, normalize_apostrophes
from .errors import RuleError

MAX_PREDICATE_DEPTH = 4

Span = tuple[int, int]


def _fold(word: str) -> str:
    return normalize_apostrophes(word).casefold()


# ---------------------------------------------------------------------------
# predicates


@dataclass(frozen=True)
class FormIn:
    forms: frozenset[str]


@dataclass(frozen=True)
class LemmaIn:
    lemmas: frozenset[str]


@dataclass(frozen=True)
class UposIs:
    tag: str


@dataclass(frozen=True)
class XposIs:
    tag: str


@dataclass(frozen=True)
class DepIs:
    tag: str


@dataclass(frozen=True)
class Not:
    inner: "Predicate"


Predicate = Union[FormIn, LemmaIn, UposIs, XposIs, DepIs, Not]


def form_in(*words: str) -> FormIn:
    return FormIn(frozenset(_fold(w) for w in words))


def lemma_in(*words: str) -> LemmaIn:
    return LemmaIn(frozenset(_fold(w) for w in words))


def _predicate_matches(pred: Predicate, token: TaggedToken) -> bool:
    if isinstance(pred, FormIn):
        return _fold(token.form) in pred.forms
    if isinstance(pred, LemmaIn):
        return _fold(token.lemma) in pred.lemmas
    if isinstance(pred, UposIs):
        return token.upos == pred.tag
    if isinstance(pred, XposIs):
        return token.xpos == pred.tag
    if isinstance(pred, DepIs):
        return token.dep == pred.tag
    if isinstance(pred, Not):
        return not _predicate_matches(pred.inner, token)
    raise RuleError(f"unknown predicate {pred!r}")


# ---------------------------------------------------------------------------
# clauses


@dataclass(frozen=True)
class TokenMatch:
    """Some token satisfies every predicate at once."""

    predicates: tuple[Predicate, ...]


@dataclass(frozen=True)
class SequenceMatch:
    """Consecutive tokens spell out the given word forms."""

    forms: tuple[str, ...]


@dataclass(frozen=True)
class FollowsWithin:
    """A ``then`` token occurs 1..window positions after a ``first`` token.

    ``window=None`` means anywhere later in the sentence. With
    ``negated=True`` the clause matches when no such ordered pair exists.
    """

    first: Predicate
    then: Predicate
    window: int | None = None
    negated: bool = False


@dataclass(frozen=True)
class SentenceContains:
    predicate: Predicate


@dataclass(frozen=True)
class SentenceLacks:
    """No token matches the predicate.

    When ``within_subtree_of`` is set, the clause instead requires some
    anchor token matching that predicate whose dependency subtree (anchor
    included) is free of the forbidden predicate.
    """

    predicate: Predicate
    within_subtree_of: Predicate | None = None


Clause = Union[TokenMatch, SequenceMatch, FollowsWithin, SentenceContains, SentenceLacks]


@dataclass(frozen=True)
class Rule:
    """A construct detector: any clause group fully satisfied means a match."""

    egp_id: int
    groups: tuple[tuple[Clause, ...], ...]

    def __post_init__(self):
        if not self.groups or any(not g for g in self.groups):
            raise RuleError(f"rule {self.egp_id}: every rule needs at least one clause")


@dataclass(frozen=True)
class RuleMatch:
    matched: bool
    spans: tuple[Span, ...] = ()


# ---------------------------------------------------------------------------
# evaluation


class _SentenceView:
    """Folded forms/lemmas and the child map, computed once per evaluation."""

    def __init__(self, sentence: Sentence):
        self.tokens = sentence.tokens
        self.forms = [_fold(t.form) for t in sentence.tokens]
        self.lemmas = [_fold(t.lemma) for t in sentence.tokens]
        self._children: list[list[int]] | None = None

    def children(self) -> list[list[int]]:
        if self._children is None:
            kids: list[list[int]] = [[] for _ in self.tokens]
            for i, tok in enumerate(self.tokens):
                if tok.head != i:
                    kids[tok.head].append(i)
            self._children = kids
        return self._children

    def subtree(self, root: int) -> list[int]:
        out = [root]
        stack = [root]
        kids = self.children()
        while stack:
            node = stack.pop()
            for child in kids[node]:
                out.append(child)
                stack.append(child)
        return out


def _find_token(view: _SentenceView, pred: Predicate) -> Iterable[int]:
    for i, tok in enumerate(view.tokens):
        if _predicate_matches(pred, tok):
            yield i


def _eval_clause(clause: Clause, view: _SentenceView) -> tuple[bool, Span | None]:
    if isinstance(clause, TokenMatch):
        for i, tok in enumerate(view.tokens):
            if all(_predicate_matches(p, tok) for p in clause.predicates):
                return True, (i, i + 1)
        return False, None

    if isinstance(clause, SequenceMatch):
        k = len(clause.forms)
        folded = tuple(_fold(f) for f in clause.forms)
        for i in range(len(view.forms) - k + 1):
            if tuple(view.forms[i : i + k]) == folded:
                return True, (i, i + k)
        return False, None

    if isinstance(clause, FollowsWithin):
        hit: Span | None = None
        for i in _find_token(view, clause.first):
            stop = len(view.tokens) if clause.window is None else min(
                len(view.tokens), i + clause.window + 1
            )
            for j in range(i + 1, stop):
                if _predicate_matches(clause.then, view.tokens[j]):
                    hit = (i, j + 1)
                    break
            if hit:
                break
        if clause.negated:
            return hit is None, None
        return (hit is not None), hit

    if isinstance(clause, SentenceContains):
        for i in _find_token(view, clause.predicate):
            return True, (i, i + 1)
        return False, None

    if isinstance(clause, SentenceLacks):
        if clause.within_subtree_of is None:
            for _ in _find_token(view, clause.predicate):
                return False, None
            return True, None
        for anchor in _find_token(view, clause.within_subtree_of):
            clean = all(
                not _predicate_matches(clause.predicate, view.tokens[n])
                for n in view.subtree(anchor)
            )
            if clean:
                return True, (anchor, anchor + 1)
        return False, None

    raise RuleError(f"unknown clause {clause!r}")


def evaluate_rule(rule: Rule, sentence: Sentence) -> RuleMatch:
    """Evaluate a rule on one sentence; deterministic and side-effect free.

    The empty sentence never matches. Spans report, per clause of the
    first satisfied group, the first satisfying token range.
    """
    if not sentence.tokens:
        return RuleMatch(False)
    view = _SentenceView(sentence)
    for group in rule.groups:
        spans: list[Span] = []
        ok = True
        for clause in group:
            matched, span = _eval_clause(clause, view)
            if not matched:
                ok = False
                break
            if span is not None:
                spans.append(span)
        if ok:
            return RuleMatch(True, tuple(spans))
    return RuleMatch(False)


def run_detectors(rules: list[Rule], sentence: Sentence) -> dict[int, bool]:
    """Evaluate many rules on one sentence, deduplicated by id (last wins)."""
    unique: dict[int, Rule] = {}
    for rule in rules:
        unique[rule.egp_id] = rule
    return {egp_id: evaluate_rule(rule, sentence).matched for egp_id, rule in unique.items()}


# ---------------------------------------------------------------------------
# rule-definition files

_PREDICATE_KINDS = ("form-in-set", "lemma-in-set", "upos-is", "xpos-is", "dep-is", "not")
_CLAUSE_KINDS = (
    "token-match",
    "sequence",
    "follows-within",
    "sentence-contains",
    "sentence-lacks",
)


def _compile_predicate(obj: dict, depth: int = 1) -> Predicate:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise RuleError(f"predicate must be an object with a kind, got {obj!r}")
    if depth > MAX_PREDICATE_DEPTH:
        raise RuleError(f"predicate nesting deeper than {MAX_PREDICATE_DEPTH}")
    kind = obj["kind"]
    if kind == "form-in-set" or kind == "lemma-in-set":
        values = obj.get("values")
        if not values or not isinstance(values, list):
            raise RuleError(f"{kind} needs a non-empty values list")
        folded = frozenset(_fold(str(v)) for v in values)
        return FormIn(folded) if kind == "form-in-set" else LemmaIn(folded)
    if kind in ("upos-is", "xpos-is", "dep-is"):
        value = obj.get("value")
        if not value or not isinstance(value, str):
            raise RuleError(f"{kind} needs a tag value")
        cls = {"upos-is": UposIs, "xpos-is": XposIs, "dep-is": DepIs}[kind]
        return cls(value)
    if kind == "not":
        if "predicate" not in obj:
            raise RuleError("not needs a nested predicate")
        return Not(_compile_predicate(obj["predicate"], depth + 1))
    raise RuleError(f"unknown predicate kind {kind!r}")


def _compile_clause(obj: dict) -> Clause:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise RuleError(f"clause must be an object with a kind, got {obj!r}")
    kind = obj["kind"]
    if kind == "token-match":
        preds = obj.get("predicates")
        if not preds or not isinstance(preds, list):
            raise RuleError("token-match needs a non-empty predicates list")
        return TokenMatch(tuple(_compile_predicate(p) for p in preds))
    if kind == "sequence":
        forms = obj.get("forms")
        if not forms or not isinstance(forms, list):
            raise RuleError("sequence needs a non-empty forms list")
        return SequenceMatch(tuple(str(f) for f in forms))
    if kind == "follows-within":
        for key in ("first", "then"):
            if key not in obj:
                raise RuleError(f"follows-within needs {key!r}")
        window = obj.get("window")
        if window is not None:
            window = int(window)
            if window < 1:
                raise RuleError("follows-within window must be >= 1")
        return FollowsWithin(
            first=_compile_predicate(obj["first"]),
            then=_compile_predicate(obj["then"]),
            window=window,
            negated=bool(obj.get("negated", False)),
        )
    if kind == "sentence-contains":
        if "predicate" not in obj:
            raise RuleError("sentence-contains needs a predicate")
        return SentenceContains(_compile_predicate(obj["predicate"]))
    if kind == "sentence-lacks":
        if "predicate" not in obj:
            raise RuleError("sentence-lacks needs a predicate")
        scope = obj.get("within_subtree_of")
        return SentenceLacks(
            predicate=_compile_predicate(obj["predicate"]),
            within_subtree_of=_compile_predicate(scope) if scope is not None else None,
        )
    raise RuleError(f"unknown clause kind {kind!r}")


def compile_rule(definition: dict) -> Rule:
    """Compile one rule document into a validated Rule.

    ``clauses`` is either a flat list (a single all-of group) or a list of
    lists (alternative groups combined with any-of).
    """
    if not isinstance(definition, dict):
        raise RuleError(f"rule definition must be an object, got {type(definition).__name__}")
    if "egp_id" not in definition:
        raise RuleError("rule definition needs an egp_id")
    egp_id = int(definition["egp_id"])
    clauses = definition.get("clauses")
    if not clauses or not isinstance(clauses, list):
        raise RuleError(f"rule {egp_id}: clauses must be a non-empty list")
    if all(isinstance(c, list) for c in clauses):
        groups = tuple(tuple(_compile_clause(c) for c in group) for group in clauses)
    elif any(isinstance(c, list) for c in clauses):
        raise RuleError(f"rule {egp_id}: clauses mixes grouped and ungrouped entries")
    else:
        groups = (tuple(_compile_clause(c) for c in clauses),)
    return Rule(egp_id=egp_id, groups=groups)


@dataclass(frozen=True)
class LoadedRule:
    egp_id: int
    mode: str  # "detector" | "filter"
    rule: Rule


def load_rule_file(path: str | Path) -> list[LoadedRule]:
    """Load rule documents (a single object or a list) from a JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RuleError(f"{path}: invalid JSON ({exc.msg})")
    documents = data if isinstance(data, list) else [data]
    loaded = []
    for doc in documents:
        if not isinstance(doc, dict):
            raise RuleError(f"{path}: rule document must be an object")
        if doc.get("schema") != 1:
            raise RuleError(f"{path}: unsupported rule schema {doc.get('schema')!r}")
        mode = doc.get("mode", "detector")
        if mode not in ("detector", "filter"):
            raise RuleError(f"{path}: mode must be detector or filter, got {mode!r}")
        loaded.append(LoadedRule(egp_id=int(doc["egp_id"]), mode=mode, rule=compile_rule(doc)))
    return loaded
