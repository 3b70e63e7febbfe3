"""Corpus ingestion: annotated-XML conversion, cleaning, JSON persistence.

The persisted corpus format is one UTF-8 JSON file per document:

    {"doc_id": str,
     "sentences": [[{"w": str, "pos": str, "role": str,
                     "ant_id": str|null, "ref": str|null,
                     "span": [int, int]|null}, ...], ...]}

XML is accepted only on ingestion.  The expected scheme marks an
antecedent expression as ``<EXP id="...">`` and an anaphor as
``<PTR ref="...">`` inside ``<s>`` sentence elements under a
``<document>`` root; ordinary words use ``<w>``.  An expression that is
both an antecedent and an anaphor carries both ``id`` and ``ref``.
Attached (clitic) pronouns carry ``span="start:end"`` character offsets
into the word surface.
"""

from __future__ import annotations

import copy
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# Tag vocabularies used by the cleaning rules.  Corpus fixtures and the
# synthetic generator stick to this inventory; other tag sets can be
# passed explicitly to clean_corpus.
NOMINAL_TAGS = frozenset({"NOUN", "PROPN"})
PRONOUN_TAGS = frozenset({"PRON"})

# Reserved filenames inside a corpus directory that are not documents.
RESERVED_FILES = frozenset({"cleaning_stats.json"})


class CorpusError(ValueError):
    """Base class for ingestion and schema errors."""


class XmlParseError(CorpusError):
    pass


class ValidationError(CorpusError):
    def __init__(self, message: str, *, file: str | None = None,
                 sentence: int | None = None):
        parts = []
        if file is not None:
            parts.append(f"file {file}")
        if sentence is not None:
            parts.append(f"sentence {sentence}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.file = file
        self.sentence = sentence


class Role(str, Enum):
    ORDINARY = "ordinary"
    ANAPHOR = "anaphor"
    ANTECEDENT = "antecedent"
    BOTH = "both"


def role_for(antecedent_id: str | None, refers_to: str | None) -> Role:
    if antecedent_id is not None and refers_to is not None:
        return Role.BOTH
    if antecedent_id is not None:
        return Role.ANTECEDENT
    if refers_to is not None:
        return Role.ANAPHOR
    return Role.ORDINARY


@dataclass
class WordItem:
    """One corpus item: a word or a multi-word phrase kept as segmented."""

    surface: str
    pos: str = "X"
    role: Role = Role.ORDINARY
    antecedent_id: str | None = None
    refers_to: str | None = None
    anaphor_char_span: tuple[int, int] | None = None


@dataclass
class Sentence:
    words: list[WordItem]
    index: int = 0


@dataclass
class Document:
    doc_id: str
    sentences: list[Sentence]

    def iter_words(self):
        """Yield (sentence_index, word_index, word) in document order."""
        for sent in self.sentences:
            for wi, word in enumerate(sent.words):
                yield sent.index, wi, word


@dataclass
class CleaningStats:
    dangling: int = 0
    chains_collapsed: int = 0
    non_pronominal_dropped: int = 0
    kept: int = 0

    def __add__(self, other: "CleaningStats") -> "CleaningStats":
        return CleaningStats(
            self.dangling + other.dangling,
            self.chains_collapsed + other.chains_collapsed,
            self.non_pronominal_dropped + other.non_pronominal_dropped,
            self.kept + other.kept,
        )

    def to_json(self) -> dict:
        return {
            "dangling": self.dangling,
            "chains_collapsed": self.chains_collapsed,
            "non_pronominal_dropped": self.non_pronominal_dropped,
            "kept": self.kept,
        }


# ---------------------------------------------------------------------------
# XML conversion

_WORD_TAGS = ("w", "EXP", "PTR")
_SPAN_RE = re.compile(r"(\d+):(\d+)")


def convert_xml(xml_text: str, doc_id: str | None = None) -> Document:
    """Convert one annotated XML document to the sequential representation.

    Word order follows XML text order.  Antecedent IDs from the source
    annotation are preserved verbatim.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise XmlParseError(
            f"malformed XML at line {line}, column {column}: {exc}") from exc
    if root.tag != "document":
        raise ValidationError(
            f"unknown root tag <{root.tag}>, expected <document>")
    if doc_id is None:
        doc_id = root.get("id", "doc")
    sentences = []
    for s_index, element in enumerate(root):
        if element.tag != "s":
            raise ValidationError(
                f"unknown tag <{element.tag}>, expected <s>",
                sentence=s_index)
        words = [_word_from_element(child, s_index) for child in element]
        sentences.append(Sentence(words=words, index=s_index))
    return Document(doc_id=doc_id, sentences=sentences)


def _word_from_element(element, s_index: int) -> WordItem:
    tag = element.tag
    if tag not in _WORD_TAGS:
        raise ValidationError(f"unknown tag <{tag}>", sentence=s_index)
    surface = (element.text or "").strip()
    if not surface:
        raise ValidationError(f"empty surface in <{tag}>", sentence=s_index)
    antecedent_id = element.get("id")
    refers_to = element.get("ref")
    if tag == "EXP" and antecedent_id is None:
        raise ValidationError("<EXP> requires an id attribute",
                              sentence=s_index)
    if tag == "PTR" and refers_to is None:
        raise ValidationError("<PTR> requires a ref attribute",
                              sentence=s_index)
    if tag == "w" and (antecedent_id is not None or refers_to is not None):
        raise ValidationError("<w> may not carry id or ref attributes",
                              sentence=s_index)
    span = None
    raw_span = element.get("span")
    if raw_span is not None:
        match = _SPAN_RE.fullmatch(raw_span)
        if match is None:
            raise ValidationError(
                f"bad span attribute {raw_span!r}, expected start:end",
                sentence=s_index)
        span = (int(match.group(1)), int(match.group(2)))
        if not (0 <= span[0] < span[1] <= len(surface)):
            raise ValidationError(
                f"span {span} outside surface of length {len(surface)}",
                sentence=s_index)
    return WordItem(
        surface=surface,
        pos=element.get("pos", "X"),
        role=role_for(antecedent_id, refers_to),
        antecedent_id=antecedent_id,
        refers_to=refers_to,
        anaphor_char_span=span,
    )


# ---------------------------------------------------------------------------
# Cleaning

def is_pronominal_anaphor(word: WordItem,
                          pronoun_tags: frozenset[str] = PRONOUN_TAGS) -> bool:
    """A relation is pronominal when the anaphor's tag is a pronoun tag or
    the word carries a clitic span (attached pronoun)."""
    return word.pos in pronoun_tags or word.anaphor_char_span is not None


def clean_corpus(doc: Document,
                 nominal_tags: frozenset[str] = NOMINAL_TAGS,
                 pronoun_tags: frozenset[str] = PRONOUN_TAGS,
                 ) -> tuple[Document, CleaningStats]:
    """Apply the three cleaning rules and return a new document plus counts.

    Rules, in order: (a) drop relations whose target ID is missing,
    duplicated, or does not precede the anaphor; (b) drop relations whose
    anaphor is not pronominal; (c) collapse chains (an antecedent that
    itself refers onward) to the nearest preceding nominal mention in the
    chain.  The chain walk uses the link graph as it stood before rule (b)
    so that links dropped there still steer the collapse.  Chains with no
    nominal mention are dropped and counted as dangling.  Cleaning a
    cleaned document changes nothing.
    """
    doc = copy.deepcopy(doc)
    stats = CleaningStats()

    flat = list(doc.iter_words())
    position = {id(word): idx for idx, (_, _, word) in enumerate(flat)}
    words = [word for _, _, word in flat]

    id_positions: dict[str, list[int]] = {}
    for idx, word in enumerate(words):
        if word.antecedent_id is not None:
            id_positions.setdefault(word.antecedent_id, []).append(idx)

    def drop_relation(word: WordItem) -> None:
        word.refers_to = None
        word.anaphor_char_span = None
        word.role = role_for(word.antecedent_id, None)

    def resolve(ref: str) -> int | None:
        positions = id_positions.get(ref)
        if positions is None or len(positions) != 1:
            return None
        return positions[0]

    # Rule (a): unresolvable or non-preceding targets.
    for idx, word in enumerate(words):
        if word.refers_to is None:
            continue
        target = resolve(word.refers_to)
        if target is None or target >= idx:
            drop_relation(word)
            stats.dangling += 1

    # Snapshot the link graph before the pronominal restriction so chain
    # walks can still traverse links that rule (b) removes.
    link_snapshot = {idx: word.refers_to for idx, word in enumerate(words)
                     if word.refers_to is not None}

    # Rule (b): pronominal anaphors only.
    for word in words:
        if word.refers_to is None:
            continue
        if not is_pronominal_anaphor(word, pronoun_tags):
            drop_relation(word)
            stats.non_pronominal_dropped += 1

    # Rule (c): chain collapse over the snapshot graph.
    for idx, word in enumerate(words):
        if word.refers_to is None:
            continue
        chain: list[int] = []
        seen: set[int] = set()
        cursor = word.refers_to
        while cursor is not None:
            target = resolve(cursor)
            if target is None or target in seen:
                break
            seen.add(target)
            chain.append(target)
            cursor = link_snapshot.get(target)
        if len(chain) <= 1:
            continue
        nominal = [pos for pos in chain
                   if pos < idx and words[pos].pos in nominal_tags]
        if not nominal:
            drop_relation(word)
            stats.dangling += 1
            continue
        nearest = max(nominal)
        word.refers_to = words[nearest].antecedent_id
        stats.chains_collapsed += 1

    stats.kept = sum(1 for word in words if word.refers_to is not None)
    return doc, stats


# ---------------------------------------------------------------------------
# JSON persistence

def word_to_obj(word: WordItem) -> dict:
    return {
        "w": word.surface,
        "pos": word.pos,
        "role": word.role.value,
        "ant_id": word.antecedent_id,
        "ref": word.refers_to,
        "span": list(word.anaphor_char_span)
        if word.anaphor_char_span is not None else None,
    }


def document_to_obj(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "sentences": [[word_to_obj(word) for word in sent.words]
                      for sent in doc.sentences],
    }


def dumps_document(doc: Document) -> str:
    """Canonical serialization; byte-identical across round trips."""
    return json.dumps(document_to_obj(doc), ensure_ascii=False, indent=1) + "\n"


def _word_from_obj(obj: dict, s_index: int, file: str | None) -> WordItem:
    try:
        role = Role(obj["role"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad role in word object: {exc}",
                              file=file, sentence=s_index) from exc
    span = obj.get("span")
    return WordItem(
        surface=obj["w"],
        pos=obj.get("pos", "X"),
        role=role,
        antecedent_id=obj.get("ant_id"),
        refers_to=obj.get("ref"),
        anaphor_char_span=tuple(span) if span is not None else None,
    )


def document_from_obj(obj: dict, file: str | None = None) -> Document:
    try:
        doc_id = obj["doc_id"]
        raw_sentences = obj["sentences"]
    except KeyError as exc:
        raise ValidationError(f"missing top-level key {exc}", file=file)
    sentences = []
    for s_index, raw_words in enumerate(raw_sentences):
        words = [_word_from_obj(raw, s_index, file) for raw in raw_words]
        sentences.append(Sentence(words=words, index=s_index))
    return Document(doc_id=doc_id, sentences=sentences)


def validate_document(doc: Document, file: str | None = None) -> None:
    """Enforce the structural invariants; raises ValidationError."""
    ant_ids: dict[str, int] = {}
    for s_index, sent in enumerate(doc.sentences):
        if sent.index != s_index:
            raise ValidationError(
                f"sentence index {sent.index} not consecutive",
                file=file, sentence=s_index)
        for word in sent.words:
            if word.role != role_for(word.antecedent_id, word.refers_to):
                raise ValidationError(
                    f"role {word.role.value!r} inconsistent with ant_id/ref "
                    f"on {word.surface!r}", file=file, sentence=s_index)
            span = word.anaphor_char_span
            if span is not None and not (
                    0 <= span[0] < span[1] <= len(word.surface)):
                raise ValidationError(
                    f"span {span} outside surface {word.surface!r}",
                    file=file, sentence=s_index)
            if word.antecedent_id is not None:
                ant_ids[word.antecedent_id] = \
                    ant_ids.get(word.antecedent_id, 0) + 1
    duplicates = [key for key, count in ant_ids.items() if count > 1]
    if duplicates:
        raise ValidationError(f"duplicate antecedent ids {duplicates}",
                              file=file)
    for s_index, sent in enumerate(doc.sentences):
        for word in sent.words:
            if word.refers_to is not None and word.refers_to not in ant_ids:
                raise ValidationError(
                    f"refers_to {word.refers_to!r} resolves to no antecedent",
                    file=file, sentence=s_index)


def load_corpus(path: str | Path, strict: bool = True) -> list[Document]:
    """Load every document JSON in a directory, sorted by filename."""
    root = Path(path)
    docs = []
    for json_path in sorted(root.glob("*.json")):
        if json_path.name in RESERVED_FILES:
            continue
        with open(json_path, encoding="utf-8") as handle:
            obj = json.load(handle)
        doc = document_from_obj(obj, file=json_path.name)
        if strict:
            validate_document(doc, file=json_path.name)
        docs.append(doc)
    return docs


def save_corpus(docs: list[Document], path: str | Path) -> list[Path]:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for doc in docs:
        target = root / f"{doc.doc_id}.json"
        target.write_text(dumps_document(doc), encoding="utf-8")
        written.append(target)
    return written


# ---------------------------------------------------------------------------
# Splitting

def split_documents(docs: list[Document], ratio: float, seed: int,
                    ) -> tuple[list[Document], list[Document]]:
    """Document-level split: round(ratio * n) documents go to train."""
    if not docs:
        raise ValueError("cannot split an empty document list")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n_train = int(np.floor(ratio * len(docs) + 0.5))
    if n_train == 0 or n_train == len(docs):
        raise ValueError(
            f"ratio {ratio} leaves an empty side for {len(docs)} documents")
    order = np.random.default_rng(seed).permutation(len(docs))
    train = [docs[i] for i in order[:n_train]]
    test = [docs[i] for i in order[n_train:]]
    return train, test
