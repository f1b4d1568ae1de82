"""Data model and ingestion for tagged sentence pairs, essays, and the catalog.

All loaders read UTF-8 and normalise curly apostrophes to straight ones so
that lexical rules match forms like "didn't" regardless of typography.
Tokens are always supplied by the caller (inline or via CoNLL-U sidecars);
nothing here runs a tagger.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError, JoinError, ParseError, RecordError, SchemaError

CEFR_LEVELS = ("A1", "A2", "B1", "B2", "C1", "C2")
CEFR_BANDS = ("A1", "A2", "A2+", "B1", "B1+", "B2", "B2+", "C1", "C1+", "C2")

CATALOG_COLUMNS = (
    "egp_id",
    "level",
    "supercategory",
    "subcategory",
    "guideword",
    "statement",
    "examples",
    "lexical",
)

_EXAMPLE_SEP = "||"


def normalize_apostrophes(text: str) -> str:
    """Replace curly apostrophes (U+2018/U+2019) with straight ones."""
    return text.replace("’", "'").replace("‘", "'")


@dataclass(frozen=True)
class TaggedToken:
    """One token with its surface form, lemma, and tag annotations.

    ``head`` is the 0-based index of the syntactic head within the owning
    sentence; the root token points at itself.
    """

    form: str
    lemma: str
    upos: str
    xpos: str
    dep: str
    head: int


@dataclass(frozen=True)
class Sentence:
    """Raw sentence text plus its ordered token annotations."""

    text: str
    tokens: tuple[TaggedToken, ...]

    def __post_init__(self):
        n = len(self.tokens)
        for i, tok in enumerate(self.tokens):
            if not tok.form:
                raise InputError(f"token {i} has an empty form")
            if not 0 <= tok.head < n:
                raise InputError(
                    f"token {i} ({tok.form!r}) has head {tok.head} outside 0..{n - 1}"
                )


@dataclass(frozen=True)
class SentencePair:
    """An original learner sentence and its corrected counterpart."""

    essay_id: str
    index: int
    original: Sentence
    corrected: Sentence


@dataclass(frozen=True)
class Essay:
    """All sentence pairs of one essay, with its assigned CEFR band."""

    essay_id: str
    cefr: str
    pairs: tuple[SentencePair, ...]
    prompt_id: str | None = None

    def __post_init__(self):
        if self.cefr not in CEFR_BANDS:
            raise InputError(f"essay {self.essay_id}: unknown CEFR band {self.cefr!r}")


@dataclass(frozen=True)
class CanDoStatement:
    """One catalog entry: a construct description with its CEFR level."""

    egp_id: int
    level: str
    supercategory: str
    subcategory: str
    guideword: str
    statement: str
    examples: tuple[str, ...]
    lexical: bool


@dataclass(frozen=True)
class AttemptAnnotation:
    """Gold binary labels for one (sentence, construct) pair.

    ``y_original`` says whether the construct is applied in the learner
    sentence, ``y_corrected`` whether it is applied in the corrected one.
    """

    essay_id: str
    index: int
    egp_id: int
    y_original: int
    y_corrected: int


@dataclass(frozen=True)
class EssayMeta:
    essay_id: str
    cefr: str
    prompt_id: str | None = None


def load_egp_catalog(path: str | Path) -> list[CanDoStatement]:
    """Load the catalog CSV into a list of statements.

    The header must match the documented column set. Duplicate ids and
    levels outside A1..C2 are rejected with the offending row number.
    """
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in CATALOG_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: catalog is missing column {col!r}")
        statements = []
        seen: set[int] = set()
        for row_no, row in enumerate(reader, start=2):
            try:
                egp_id = int(row["egp_id"])
            except (TypeError, ValueError):
                raise SchemaError(
                    f"{path}:{row_no}: egp_id {row.get('egp_id')!r} is not an integer"
                )
            if egp_id in seen:
                raise SchemaError(f"{path}:{row_no}: duplicate egp_id {egp_id}")
            seen.add(egp_id)
            level = (row["level"] or "").strip()
            if level not in CEFR_LEVELS:
                raise InputError(
                    f"{path}:{row_no}: level {level!r} is not one of {'/'.join(CEFR_LEVELS)}"
                )
            raw_examples = normalize_apostrophes(row["examples"] or "")
            examples = tuple(e for e in (s.strip() for s in raw_examples.split(_EXAMPLE_SEP)) if e)
            lexical_raw = (row["lexical"] or "").strip().lower()
            if lexical_raw not in ("true", "false"):
                raise SchemaError(
                    f"{path}:{row_no}: lexical must be true/false, got {row['lexical']!r}"
                )
            statements.append(
                CanDoStatement(
                    egp_id=egp_id,
                    level=level,
                    supercategory=normalize_apostrophes(row["supercategory"] or "").strip(),
                    subcategory=normalize_apostrophes(row["subcategory"] or "").strip(),
                    guideword=normalize_apostrophes(row["guideword"] or "").strip(),
                    statement=normalize_apostrophes(row["statement"] or "").strip(),
                    examples=examples,
                    lexical=lexical_raw == "true",
                )
            )
    return statements


def catalog_by_id(statements: list[CanDoStatement]) -> dict[int, CanDoStatement]:
    return {s.egp_id: s for s in statements}


def parse_conllu(text: str) -> list[Sentence]:
    """Parse a CoNLL-U document into sentences.

    Multiword-token range lines (ids like ``3-4``) are skipped. HEAD is
    converted from 1-based-with-0-root to 0-based with the root pointing
    at itself.
    """
    sentences = []
    block: list[tuple[int, list[str]]] = []
    block_text: str | None = None

    def flush():
        nonlocal block, block_text
        if not block:
            block_text = None
            return
        tokens = []
        n = len(block)
        for pos, (line_no, cols) in enumerate(block):
            head_raw = cols[6]
            try:
                head_1b = int(head_raw)
            except ValueError:
                raise ParseError(f"line {line_no}: HEAD {head_raw!r} is not numeric")
            head = pos if head_1b == 0 else head_1b - 1
            if not 0 <= head < n:
                raise ParseError(f"line {line_no}: HEAD {head_raw} points outside the sentence")
            tokens.append(
                TaggedToken(
                    form=normalize_apostrophes(cols[1]),
                    lemma=normalize_apostrophes(cols[2]),
                    upos=cols[3],
                    xpos=cols[4],
                    dep=cols[7],
                    head=head,
                )
            )
        text_value = block_text if block_text is not None else " ".join(t.form for t in tokens)
        sentences.append(Sentence(text=normalize_apostrophes(text_value), tokens=tuple(tokens)))
        block = []
        block_text = None

    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            if line[1:].split("=", 1)[0].strip() == "text":
                block_text = line.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"line {line_no}: expected 10 columns, got {len(cols)}")
        if "-" in cols[0]:
            continue
        block.append((line_no, cols))
    flush()
    return sentences


def parse_conllu_indexed(text: str) -> dict[str, Sentence]:
    """Parse a CoNLL-U document and index sentences by their sent_id comment."""
    sentences = parse_conllu(text)
    # collect the sent_id preceding each token block, in block order
    block_ids: list[str | None] = []
    pending: str | None = None
    in_block = False
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            in_block = False
            continue
        if stripped.startswith("#"):
            if stripped[1:].split("=", 1)[0].strip() == "sent_id":
                pending = stripped.split("=", 1)[1].strip()
            continue
        if not in_block:
            in_block = True
            block_ids.append(pending)
            pending = None
    return {
        sid: sentence
        for sid, sentence in zip(block_ids, sentences)
        if sid is not None
    }


def _token_from_json(obj: dict, where: str) -> TaggedToken:
    try:
        return TaggedToken(
            form=normalize_apostrophes(str(obj["form"])),
            lemma=normalize_apostrophes(str(obj["lemma"])),
            upos=str(obj["upos"]),
            xpos=str(obj["xpos"]),
            dep=str(obj["dep"]),
            head=int(obj["head"]),
        )
    except KeyError as exc:
        raise RecordError(f"{where}: token is missing field {exc.args[0]!r}")


def _sentence_from_json(obj: dict, where: str, sidecars: "_SidecarCache") -> Sentence:
    if "tokens" in obj:
        tokens = tuple(_token_from_json(t, where) for t in obj["tokens"])
        return Sentence(text=normalize_apostrophes(str(obj.get("text", ""))), tokens=tokens)
    if "conllu_ref" in obj:
        ref = obj["conllu_ref"]
        resolved = sidecars.lookup(ref.get("file"), ref.get("sent_id"), where)
        # keep the record's own text when present, tags from the sidecar
        if "text" in obj:
            return Sentence(text=normalize_apostrophes(str(obj["text"])), tokens=resolved.tokens)
        return resolved
    raise RecordError(f"{where}: sentence has neither tokens nor conllu_ref")


class _SidecarCache:
    """Lazily parses CoNLL-U sidecar files referenced from a pairs file."""

    def __init__(self, base_dir: Path):
        self.base_dir = base_dir
        self._files: dict[str, dict[str, Sentence]] = {}

    def lookup(self, file: str | None, sent_id: str | None, where: str) -> Sentence:
        if not file or not sent_id:
            raise RecordError(f"{where}: conllu_ref needs both file and sent_id")
        if file not in self._files:
            path = self.base_dir / file
            try:
                content = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise InputError(f"{where}: cannot read sidecar {path}: {exc}")
            self._files[file] = parse_conllu_indexed(content)
        table = self._files[file]
        if sent_id not in table:
            raise InputError(f"{where}: sent_id {sent_id!r} not found in sidecar {file}")
        return table[sent_id]


def load_sentence_pairs(path: str | Path) -> list[SentencePair]:
    """Load sentence pairs from a JSON-lines file, in file order.

    Each record carries ``essay_id``, ``index``, and ``original``/``corrected``
    sentences whose ``tokens`` may be replaced by a ``conllu_ref`` sidecar
    pointer resolved relative to the pairs file.
    """
    path = Path(path)
    sidecars = _SidecarCache(path.parent)
    pairs = []
    seen: set[tuple[str, int]] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{where}: invalid JSON ({exc.msg})")
            for key in ("essay_id", "index", "original", "corrected"):
                if key not in obj:
                    raise RecordError(f"{where}: record is missing {key!r}")
            essay_id = str(obj["essay_id"])
            index = int(obj["index"])
            if (essay_id, index) in seen:
                raise RecordError(f"{where}: duplicate pair ({essay_id}, {index})")
            seen.add((essay_id, index))
            pairs.append(
                SentencePair(
                    essay_id=essay_id,
                    index=index,
                    original=_sentence_from_json(obj["original"], where, sidecars),
                    corrected=_sentence_from_json(obj["corrected"], where, sidecars),
                )
            )
    return pairs


def dump_sentence_pairs(pairs: list[SentencePair], path: str | Path) -> None:
    """Write sentence pairs as JSON-lines with inline tokens."""

    def sent(s: Sentence) -> dict:
        return {
            "text": s.text,
            "tokens": [
                {
                    "form": t.form,
                    "lemma": t.lemma,
                    "upos": t.upos,
                    "xpos": t.xpos,
                    "dep": t.dep,
                    "head": t.head,
                }
                for t in s.tokens
            ],
        }

    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "essay_id": p.essay_id,
                        "index": p.index,
                        "original": sent(p.original),
                        "corrected": sent(p.corrected),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_essay_meta(path: str | Path) -> dict[str, EssayMeta]:
    """Load the essay metadata CSV keyed by essay id."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("essay_id", "cefr"):
            if col not in header:
                raise SchemaError(f"{path}: metadata is missing column {col!r}")
        meta: dict[str, EssayMeta] = {}
        for row_no, row in enumerate(reader, start=2):
            essay_id = (row["essay_id"] or "").strip()
            if not essay_id:
                raise SchemaError(f"{path}:{row_no}: empty essay_id")
            if essay_id in meta:
                raise SchemaError(f"{path}:{row_no}: duplicate essay_id {essay_id!r}")
            cefr = (row["cefr"] or "").strip()
            if cefr not in CEFR_BANDS:
                raise InputError(f"{path}:{row_no}: unknown CEFR band {cefr!r}")
            prompt_id = (row.get("prompt_id") or "").strip() or None
            meta[essay_id] = EssayMeta(essay_id=essay_id, cefr=cefr, prompt_id=prompt_id)
    return meta


def load_annotations(path: str | Path) -> list[AttemptAnnotation]:
    """Load gold attempt annotations from a JSON-lines file."""
    path = Path(path)
    annotations = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{where}: invalid JSON ({exc.msg})")
            for key in ("essay_id", "index", "egp_id", "y_o", "y_c"):
                if key not in obj:
                    raise RecordError(f"{where}: record is missing {key!r}")
            y_o, y_c = obj["y_o"], obj["y_c"]
            if y_o not in (0, 1) or y_c not in (0, 1):
                raise RecordError(f"{where}: labels must be 0 or 1")
            annotations.append(
                AttemptAnnotation(
                    essay_id=str(obj["essay_id"]),
                    index=int(obj["index"]),
                    egp_id=int(obj["egp_id"]),
                    y_original=int(y_o),
                    y_corrected=int(y_c),
                )
            )
    return annotations


def group_into_essays(
    pairs: list[SentencePair], meta: dict[str, EssayMeta]
) -> list[Essay]:
    """Partition pairs by essay id, sorted by sentence index.

    Essays are returned in order of first appearance. Every essay id must
    be present in ``meta``.
    """
    unknown = sorted({p.essay_id for p in pairs} - set(meta))
    if unknown:
        raise JoinError(f"essay ids missing from metadata: {', '.join(unknown)}")
    grouped: dict[str, list[SentencePair]] = {}
    order: list[str] = []
    for p in pairs:
        if p.essay_id not in grouped:
            grouped[p.essay_id] = []
            order.append(p.essay_id)
        grouped[p.essay_id].append(p)
    essays = []
    for essay_id in order:
        m = meta[essay_id]
        essays.append(
            Essay(
                essay_id=essay_id,
                cefr=m.cefr,
                prompt_id=m.prompt_id,
                pairs=tuple(sorted(grouped[essay_id], key=lambda p: p.index)),
            )
        )
    return essays
