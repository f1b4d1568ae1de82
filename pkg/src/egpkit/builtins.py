"""Built-in detectors and broad pre-filters for twelve catalog constructs.

Detectors encode the precise matching conditions; filters are the
recall-oriented variants used to pre-select candidate sentences before
an LLM pass. Every filter matches whenever its detector matches, so
filtering never loses a detectable sentence. A few filter word lists are
slightly wider than strictly necessary to keep that guarantee across all
tokenisations (e.g. split contractions).
"""

from __future__ import annotations

from .errors import RuleError
from .rules import (
    DepIs,
    FollowsWithin,
    Rule,
    SentenceContains,
    SentenceLacks,
    SequenceMatch,
    TokenMatch,
    UposIs,
    XposIs,
    form_in,
    lemma_in,
)

IRREGULAR_COMPARATIVES = ("better", "worse", "further", "farther", "elder")
RELATIVE_PRONOUNS = ("that", "who", "whom", "which")
TIME_CONJUNCTIONS = (
    "after",
    "before",
    "when",
    "while",
    "since",
    "as",
    "once",
    "until",
    "till",
    "whenever",
)
CONDITION_CONJUNCTIONS = ("if", "unless", "provided", "providing", "supposing")


def _seq(phrase: str) -> SequenceMatch:
    return SequenceMatch(tuple(phrase.split()))


def _build_detectors() -> dict[int, Rule]:
    return {
        # irregular comparative adjectives: a fixed word, adjectival, JJR
        19: Rule(
            19,
            (
                (
                    TokenMatch(
                        (form_in(*IRREGULAR_COMPARATIVES), UposIs("ADJ"), XposIs("JJR"))
                    ),
                ),
            ),
        ),
        # "enough" immediately after an adjective
        37: Rule(
            37,
            (((FollowsWithin(first=UposIs("ADJ"), then=form_in("enough"), window=1)),),),
        ),
        # negative interrogative: a negation lemma and a question mark
        209: Rule(
            209,
            (
                (
                    SentenceContains(lemma_in("not")),
                    SentenceContains(form_in("?")),
                ),
            ),
        ),
        # relative clause whose subtree holds no relative pronoun
        228: Rule(
            228,
            (
                (
                    SentenceContains(DepIs("relcl")),
                    SentenceLacks(
                        form_in(*RELATIVE_PRONOUNS), within_subtree_of=DepIs("relcl")
                    ),
                ),
            ),
        ),
        # time subordinate clause: multiword expression, or conjunction tagged SCONJ
        242: Rule(
            242,
            (
                (_seq("as soon as"),),
                (_seq("by the time"),),
                (_seq("as long as"),),
                ((TokenMatch((form_in(*TIME_CONJUNCTIONS), UposIs("SCONJ")))),),
            ),
        ),
        # conditional subordinate clause: multiword expression or conjunction word
        249: Rule(
            249,
            (
                (_seq("so long as"),),
                (_seq("as long as"),),
                (_seq("in case"),),
                ((TokenMatch((form_in(*CONDITION_CONJUNCTIONS),))),),
            ),
        ),
        # correlative "either ... or", in that order, any distance apart
        266: Rule(
            266,
            (((FollowsWithin(first=form_in("either"), then=form_in("or"))),),),
        ),
        # "another" used anywhere
        295: Rule(295, (((SentenceContains(form_in("another"))),),)),
        # "would" + infinitive within five tokens, plus a past-tense verb
        367: Rule(
            367,
            (
                (
                    FollowsWithin(first=lemma_in("would"), then=XposIs("VB"), window=5),
                    SentenceContains(XposIs("VBD")),
                ),
            ),
        ),
        # "used to" not right after a be-auxiliary, or the negated did-forms
        598: Rule(
            598,
            (
                (
                    _seq("used to"),
                    FollowsWithin(
                        first=lemma_in("be"), then=form_in("used"), window=2, negated=True
                    ),
                ),
                (_seq("did not use to"),),
                (_seq("didn't use to"),),
                (_seq("did n't use to"),),
            ),
        ),
        # past simple passive: was/were acting as passive auxiliary
        708: Rule(
            708,
            (((TokenMatch((form_in("was", "were"), DepIs("auxpass")))),),),
        ),
        # "everything" as an (active or passive) subject
        983: Rule(
            983,
            (
                ((TokenMatch((form_in("everything"), DepIs("nsubj")))),),
                ((TokenMatch((form_in("everything"), DepIs("nsubjpass")))),),
            ),
        ),
    }


def _build_filters() -> dict[int, Rule]:
    return {
        # comparatives plus superlatives and more/less/most/least
        19: Rule(
            19,
            (
                (
                    SentenceContains(
                        form_in(
                            *IRREGULAR_COMPARATIVES,
                            "eldest",
                            "best",
                            "worst",
                            "furthest",
                            "farthest",
                            "more",
                            "less",
                            "least",
                            "most",
                        )
                    ),
                ),
            ),
        ),
        37: Rule(37, (((SentenceContains(form_in("enough"))),),)),
        209: Rule(209, (((SentenceContains(lemma_in("not"))),),)),
        228: Rule(228, (((SentenceContains(DepIs("relcl"))),),)),
        # the time-word list plus "by", so "by the time" sentences pass too
        242: Rule(
            242,
            (
                (
                    SentenceContains(
                        form_in(
                            *TIME_CONJUNCTIONS,
                            "now",
                            "long",
                            "soon",
                            "by",
                        )
                    ),
                ),
            ),
        ),
        249: Rule(
            249,
            (
                (_seq("so long as"),),
                (_seq("as long as"),),
                (_seq("in case"),),
                ((SentenceContains(form_in(*CONDITION_CONJUNCTIONS))),),
            ),
        ),
        266: Rule(266, (((SentenceContains(form_in("either"))),),)),
        295: Rule(295, (((SentenceContains(form_in("another"))),),)),
        367: Rule(
            367,
            (
                (
                    FollowsWithin(first=lemma_in("would"), then=XposIs("VB"), window=5),
                    SentenceContains(XposIs("VBD")),
                ),
            ),
        ),
        # "used" in any role, or the split/negated did-forms
        598: Rule(
            598,
            (
                ((SentenceContains(form_in("used"))),),
                (_seq("didn't use"),),
                (_seq("did n't use"),),
                (_seq("did not use"),),
            ),
        ),
        708: Rule(
            708,
            (
                (
                    SentenceContains(DepIs("auxpass")),
                    SentenceContains(form_in("was", "were")),
                ),
            ),
        ),
        983: Rule(983, (((SentenceContains(form_in("everything"))),),)),
    }


_DETECTORS = _build_detectors()
_FILTERS = _build_filters()

BUILTIN_IDS = frozenset(_DETECTORS)


def builtin_detector(egp_id: int) -> Rule:
    """Return the built-in detector rule for a construct id."""
    try:
        return _DETECTORS[egp_id]
    except KeyError:
        raise RuleError(f"no built-in detector for egp_id {egp_id}")


def builtin_filter(egp_id: int) -> Rule:
    """Return the built-in broad pre-filter rule for a construct id."""
    try:
        return _FILTERS[egp_id]
    except KeyError:
        raise RuleError(f"no built-in filter for egp_id {egp_id}")
