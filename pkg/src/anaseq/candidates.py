"""Candidate extraction and morphological agreement filtering.

POS taggers and morphological analyzers are pluggable.  A word counts as
nominal only when every configured tagger says so (intersection policy:
disagreement between taggers is treated as evidence against, which costs
recall but keeps the candidate lists clean).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from .corpus import Document, NOMINAL_TAGS, Role, WordItem

UNKNOWN = "unknown"

GENDERS = (UNKNOWN, "masc", "fem")
NUMBERS = (UNKNOWN, "sing", "dual", "plur")
PERSONS = (UNKNOWN, "first", "second", "third")


@dataclass(frozen=True)
class MorphFeatures:
    gender: str = UNKNOWN
    number: str = UNKNOWN
    person: str = UNKNOWN
    definite: bool = False

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"bad gender {self.gender!r}")
        if self.number not in NUMBERS:
            raise ValueError(f"bad number {self.number!r}")
        if self.person not in PERSONS:
            raise ValueError(f"bad person {self.person!r}")


def morph_to_obj(features: MorphFeatures) -> dict:
    return {"gender": features.gender, "number": features.number,
            "person": features.person, "definite": features.definite}


def morph_from_obj(obj: dict) -> MorphFeatures:
    return MorphFeatures(
        gender=obj.get("gender", UNKNOWN),
        number=obj.get("number", UNKNOWN),
        person=obj.get("person", UNKNOWN),
        definite=bool(obj.get("definite", False)),
    )


def features_compatible(anaphor: MorphFeatures,
                        candidate: MorphFeatures) -> bool:
    """Gender and number each agree when equal or when either side is
    unknown.  Person is deliberately not checked: analyzers rarely emit
    it for nouns."""
    for a, b in ((anaphor.gender, candidate.gender),
                 (anaphor.number, candidate.number)):
        if a != UNKNOWN and b != UNKNOWN and a != b:
            return False
    return True


class TaggerError(RuntimeError):
    pass


class TaggerInterface(ABC):
    """Maps a list of word surfaces to a same-length list of POS tags."""

    name = "tagger"

    @abstractmethod
    def tag(self, words: list[str]) -> list[str]:
        ...


class AnalyzerInterface(ABC):
    """Maps a surface (and its tag) to morphological features."""

    name = "analyzer"

    @abstractmethod
    def analyze(self, surface: str, pos: str) -> MorphFeatures:
        ...


class CorpusTagger(TaggerInterface):
    """Echoes gold tags from a surface -> tag table; unlisted words get
    the fallback tag."""

    name = "corpus"

    def __init__(self, table: dict[str, str], fallback: str = "X"):
        self.table = dict(table)
        self.fallback = fallback

    def tag(self, words: list[str]) -> list[str]:
        return [self.table.get(word, self.fallback) for word in words]


class LookupAnalyzer(AnalyzerInterface):
    """Surface -> MorphFeatures table; unlisted surfaces come back fully
    unknown."""

    name = "lookup"

    def __init__(self, table: dict[str, MorphFeatures]):
        self.table = dict(table)

    def analyze(self, surface: str, pos: str) -> MorphFeatures:
        return self.table.get(surface, MorphFeatures())


TAGGERS: dict[str, type] = {}
ANALYZERS: dict[str, type] = {}


def register_tagger(cls):
    TAGGERS[cls.name] = cls
    return cls


def register_analyzer(cls):
    ANALYZERS[cls.name] = cls
    return cls


register_tagger(CorpusTagger)
register_analyzer(LookupAnalyzer)


def tag_pos(words: list[str], tagger: TaggerInterface) -> list[str]:
    """Run one tagger over a word list and validate the output shape.

    On failure the offending word is located by re-tagging one word at a
    time, so the error names an index instead of just the batch.
    """
    try:
        tags = tagger.tag(words)
    except Exception as exc:  # noqa: BLE001 - attribute, then re-raise
        for index, word in enumerate(words):
            try:
                tagger.tag([word])
            except Exception:
                raise TaggerError(
                    f"{tagger.name} failed on word {index} ({word!r}): {exc}"
                ) from exc
        raise TaggerError(f"{tagger.name} failed on batch: {exc}") from exc
    if len(tags) != len(words):
        raise TaggerError(
            f"{tagger.name} returned {len(tags)} tags for {len(words)} words")
    return tags


@dataclass(frozen=True)
class Candidate:
    index: int               # word position within the paragraph
    surface: str
    morph: MorphFeatures
    sentence_index: int


@dataclass
class ResolutionInstance:
    """Everything needed to encode and score one anaphor."""

    doc_id: str
    instance_id: str
    paragraph: list[WordItem]          # document start .. anaphor sentence end
    sentence_indices: list[int]        # per paragraph word
    anaphor_index: int
    anaphor_span: tuple[int, int] | None
    anaphor_morph: MorphFeatures
    candidates: list[Candidate]
    gold_index: int | None = None      # paragraph position of the antecedent


def nominal_mask(words: list[str],
                 taggers: list[TaggerInterface],
                 nominal_tags: frozenset[str] = NOMINAL_TAGS) -> list[bool]:
    """Per-word nominal status under the intersection policy."""
    if not taggers:
        raise ValueError("at least one tagger is required")
    votes = [[tag in nominal_tags for tag in tag_pos(words, tagger)]
             for tagger in taggers]
    return [all(column) for column in zip(*votes)]


def extract_candidates(paragraph: list[WordItem],
                       sentence_indices: list[int],
                       anaphor_index: int,
                       taggers: list[TaggerInterface],
                       analyzer: AnalyzerInterface,
                       nominal_tags: frozenset[str] = NOMINAL_TAGS,
                       ) -> list[Candidate]:
    """Nominal words strictly before the anaphor, nearest last."""
    surfaces = [word.surface for word in paragraph]
    mask = nominal_mask(surfaces, taggers, nominal_tags)
    candidates = []
    for index in range(anaphor_index):
        if not mask[index]:
            continue
        surface = surfaces[index]
        morph = analyzer.analyze(surface, paragraph[index].pos)
        candidates.append(Candidate(
            index=index,
            surface=surface,
            morph=morph,
            sentence_index=sentence_indices[index],
        ))
    return candidates


def agreement_filter(candidates: list[Candidate],
                     anaphor_morph: MorphFeatures) -> list[Candidate]:
    """Drop candidates whose gender or number clashes with the anaphor.

    When fewer than two candidates survive, the unfiltered list is
    returned instead: a list that short gives the ranker nothing to
    choose between, and analyzer errors would silently delete the answer.
    """
    kept = [cand for cand in candidates
            if features_compatible(anaphor_morph, cand.morph)]
    if len(kept) < 2:
        return list(candidates)
    return kept


def build_query_instance(doc: Document,
                         taggers: list[TaggerInterface],
                         analyzer: AnalyzerInterface,
                         apply_agreement_filter: bool = False,
                         nominal_tags: frozenset[str] = NOMINAL_TAGS,
                         ) -> ResolutionInstance:
    """Instance for a document that marks exactly one anaphor to resolve.

    Unlike the training path, the anaphor is located by role (its ref may
    be absent) and no gold position is recorded.
    """
    flat = list(doc.iter_words())
    marked = [i for i, (_, _, word) in enumerate(flat)
              if word.role in (Role.ANAPHOR, Role.BOTH)]
    if len(marked) != 1:
        raise ValueError(
            f"expected exactly one word with role {Role.ANAPHOR.value!r}, "
            f"found {len(marked)}")
    anaphor_index = marked[0]
    sentence_of = [s for s, _, _ in flat]
    words = [word for _, _, word in flat]
    end = max(i for i, s in enumerate(sentence_of)
              if s == sentence_of[anaphor_index]) + 1
    paragraph = words[:end]
    sentence_indices = sentence_of[:end]
    word = words[anaphor_index]
    anaphor_surface = word.surface
    if word.anaphor_char_span is not None:
        lo, hi = word.anaphor_char_span
        anaphor_surface = word.surface[lo:hi]
    morph = analyzer.analyze(anaphor_surface, word.pos)
    candidates = extract_candidates(
        paragraph, sentence_indices, anaphor_index, taggers, analyzer,
        nominal_tags)
    if apply_agreement_filter:
        candidates = agreement_filter(candidates, morph)
    return ResolutionInstance(
        doc_id=doc.doc_id,
        instance_id=f"{doc.doc_id}:{anaphor_index}",
        paragraph=paragraph,
        sentence_indices=sentence_indices,
        anaphor_index=anaphor_index,
        anaphor_span=word.anaphor_char_span,
        anaphor_morph=morph,
        candidates=candidates,
        gold_index=None,
    )


@dataclass
class InstanceStats:
    instances: int = 0
    gold_not_candidate: int = 0
    no_candidates: int = 0


def _resolve_antecedents(doc: Document) -> dict[str, int]:
    """Antecedent id -> flat word position."""
    table = {}
    for flat_index, (_, _, word) in enumerate(doc.iter_words()):
        if word.antecedent_id is not None:
            table[word.antecedent_id] = flat_index
    return table


def build_instances(doc: Document,
                    taggers: list[TaggerInterface],
                    analyzer: AnalyzerInterface,
                    apply_agreement_filter: bool = False,
                    nominal_tags: frozenset[str] = NOMINAL_TAGS,
                    ) -> tuple[list[ResolutionInstance], InstanceStats]:
    """One instance per annotated anaphor in the document.

    The paragraph spans document start through the end of the anaphor's
    sentence; window budgeting happens later, at encoding time.  The gold
    antecedent is recorded by paragraph position whether or not the
    candidate extractor recovered it (misses are counted, and the ranker
    is charged for them at evaluation time).
    """
    stats = InstanceStats()
    antecedents = _resolve_antecedents(doc)
    flat = list(doc.iter_words())
    sentence_of = [s for s, _, _ in flat]
    words = [word for _, _, word in flat]
    sentence_end = {}
    for flat_index, s_index in enumerate(sentence_of):
        sentence_end[s_index] = flat_index

    instances = []
    for flat_index, word in enumerate(words):
        if word.refers_to is None:
            continue
        gold = antecedents.get(word.refers_to)
        if gold is None or gold >= flat_index:
            continue  # cleaning guarantees neither; belt and braces
        end = sentence_end[sentence_of[flat_index]] + 1
        paragraph = words[:end]
        sentence_indices = sentence_of[:end]
        anaphor_surface = word.surface
        if word.anaphor_char_span is not None:
            lo, hi = word.anaphor_char_span
            anaphor_surface = word.surface[lo:hi]
        morph = analyzer.analyze(anaphor_surface, word.pos)
        candidates = extract_candidates(
            paragraph, sentence_indices, flat_index, taggers, analyzer,
            nominal_tags)
        if apply_agreement_filter:
            candidates = agreement_filter(candidates, morph)
        stats.instances += 1
        if not candidates:
            stats.no_candidates += 1
        if gold not in {cand.index for cand in candidates}:
            stats.gold_not_candidate += 1
        instances.append(ResolutionInstance(
            doc_id=doc.doc_id,
            instance_id=f"{doc.doc_id}:{flat_index}",
            paragraph=paragraph,
            sentence_indices=sentence_indices,
            anaphor_index=flat_index,
            anaphor_span=word.anaphor_char_span,
            anaphor_morph=morph,
            candidates=candidates,
            gold_index=gold,
        ))
    return instances, stats
