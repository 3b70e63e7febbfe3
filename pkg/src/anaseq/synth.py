"""Synthetic corpus generator for end-to-end experiments.

The generated language is tiny but carries the structure the resolver
has to exploit: nouns end in a two-character gender/number suffix, every
pronoun (detached word or clitic attached to a verb) agrees with exactly
one class, and the gold antecedent is the nearest agreeing noun — except
for a configurable fraction of anaphors bound to the second-nearest one,
which breaks the pure recency heuristic.  Word shapes are chosen so a
3-character chunking yields the class suffix and the clitic as their own
subword tokens.

A generator run also emits the gold POS table and the morphological
lexicon, so taggers and analyzers can be exact (or noised on purpose).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .candidates import MorphFeatures
from .corpus import Document, Sentence, WordItem, role_for

CLASSES = ("ms", "fs", "mp", "fp")

CLASS_MORPH = {
    "ms": ("masc", "sing"),
    "fs": ("fem", "sing"),
    "mp": ("masc", "plur"),
    "fp": ("fem", "plur"),
}

NOUN_SUFFIX = {"ms": "um", "fs": "at", "mp": "un", "fp": "na"}
DETACHED_PRONOUN = {"ms": "huw", "fs": "hia", "mp": "hum", "fp": "hun"}
CLITIC = {"ms": "hu", "fs": "ha", "mp": "hm", "fp": "hn"}

PARTICLES = ("fii", "min", "ala", "qad", "lam", "maa")

_CONSONANTS = "bdfghjklmnqrstwz"


@dataclass
class SynthConfig:
    n_docs: int = 20
    noun_vocab: int = 24
    verb_vocab: int = 10
    sentences: tuple[int, int] = (3, 6)       # inclusive range per doc
    words: tuple[int, int] = (4, 8)           # inclusive range per sentence
    noun_rate: float = 0.45
    anaphor_rate: float = 0.6
    attached_rate: float = 0.2
    ambiguity: float = 0.0       # P(gold is the 2nd-nearest agreeing noun)
    agreement_noise: float = 0.0  # P(a noun's emitted morph entry is wrong)
    seed: int = 0


@dataclass
class SynthCorpus:
    documents: list[Document]
    tagger_table: dict[str, str]
    morph_table: dict[str, MorphFeatures]
    config: SynthConfig = field(repr=False, default_factory=SynthConfig)


def _stems(rng: np.random.Generator, count: int) -> list[str]:
    """Distinct three-consonant stems."""
    base = len(_CONSONANTS)
    codes = rng.choice(base ** 3, size=count, replace=False)
    stems = []
    for code in codes:
        a, rem = divmod(int(code), base * base)
        b, c = divmod(rem, base)
        stems.append(_CONSONANTS[a] + _CONSONANTS[b] + _CONSONANTS[c])
    return stems


@dataclass
class _Noun:
    surface: str
    cls: str
    definite: bool


def _build_lexicon(rng: np.random.Generator, config: SynthConfig,
                   ) -> tuple[list[_Noun], list[str]]:
    stems = _stems(rng, config.noun_vocab + config.verb_vocab)
    nouns = []
    for stem in stems[:config.noun_vocab]:
        cls = CLASSES[int(rng.integers(len(CLASSES)))]
        nouns.append(_Noun(surface=stem + NOUN_SUFFIX[cls], cls=cls,
                           definite=bool(rng.integers(2))))
    verbs = [stem + "vrb" for stem in stems[config.noun_vocab:]]
    return nouns, verbs


def _emit_tables(nouns: list[_Noun], verbs: list[str], config: SynthConfig,
                 rng: np.random.Generator,
                 ) -> tuple[dict[str, str], dict[str, MorphFeatures]]:
    tagger = {}
    morph = {}
    for noun in nouns:
        tagger[noun.surface] = "NOUN"
        gender, number = CLASS_MORPH[noun.cls]
        if config.agreement_noise > 0 and rng.random() < config.agreement_noise:
            # Emit a wrong lexicon entry; the corpus itself stays truthful.
            if rng.random() < 0.5:
                gender = "fem" if gender == "masc" else "masc"
            else:
                number = "plur" if number == "sing" else "sing"
        morph[noun.surface] = MorphFeatures(
            gender=gender, number=number, definite=noun.definite)
    for verb in verbs:
        tagger[verb] = "VERB"
    for particle in PARTICLES:
        tagger[particle] = "PART"
    for cls in CLASSES:
        gender, number = CLASS_MORPH[cls]
        feats = MorphFeatures(gender=gender, number=number, person="third")
        morph[DETACHED_PRONOUN[cls]] = feats
        morph[CLITIC[cls]] = feats
        tagger[DETACHED_PRONOUN[cls]] = "PRON"
    # Attached forms: the tagger sees the whole host+clitic word.
    for verb in verbs:
        for clitic in CLITIC.values():
            tagger[verb + clitic] = "VERB"
    return tagger, morph


def _pick_antecedent(rng: np.random.Generator,
                     placed: list[tuple[int, WordItem, str]],
                     before: int, ambiguity: float,
                     ) -> tuple[str, WordItem] | None:
    """Choose a pronoun class and its gold noun among nouns placed before
    position `before`.  Returns (class, gold word) or None when no class
    has enough material."""
    by_class: dict[str, list[tuple[int, WordItem]]] = {}
    for position, word, cls in placed:
        if position < before:
            by_class.setdefault(cls, []).append((position, word))
    want_second = ambiguity > 0 and rng.random() < ambiguity
    if want_second:
        eligible = sorted(c for c, lst in by_class.items() if len(lst) >= 2)
        if eligible:
            cls = eligible[int(rng.integers(len(eligible)))]
            return cls, sorted(by_class[cls])[-2][1]
    eligible = sorted(by_class)
    if not eligible:
        return None
    cls = eligible[int(rng.integers(len(eligible)))]
    return cls, sorted(by_class[cls])[-1][1]


def generate(config: SynthConfig) -> SynthCorpus:
    """Deterministic corpus for a given config (seed included)."""
    rng = np.random.default_rng(config.seed)
    nouns, verbs = _build_lexicon(rng, config)
    tagger_table, morph_table = _emit_tables(nouns, verbs, config, rng)

    documents = []
    for doc_index in range(config.n_docs):
        doc_rng = np.random.default_rng([config.seed, doc_index])
        words_placed: list[tuple[int, WordItem, str]] = []  # nouns so far
        position = 0
        next_id = 0
        sentences = []
        n_sentences = int(doc_rng.integers(config.sentences[0],
                                           config.sentences[1] + 1))
        for s_index in range(n_sentences):
            n_words = int(doc_rng.integers(config.words[0],
                                           config.words[1] + 1))
            sentence_words: list[WordItem] = []
            pronoun_at = -1
            if doc_rng.random() < config.anaphor_rate and n_words >= 2:
                pronoun_at = int(doc_rng.integers(1, n_words))
            for w_index in range(n_words):
                if w_index == pronoun_at:
                    pick = _pick_antecedent(
                        doc_rng, words_placed, position, config.ambiguity)
                    if pick is None:
                        pronoun_at = -1  # nothing to refer to yet
                    else:
                        cls, gold = pick
                        if gold.antecedent_id is None:
                            gold.antecedent_id = f"e{next_id}"
                            gold.role = role_for(gold.antecedent_id,
                                                 gold.refers_to)
                            next_id += 1
                        if doc_rng.random() < config.attached_rate:
                            host = verbs[int(doc_rng.integers(len(verbs)))]
                            clitic = CLITIC[cls]
                            word = WordItem(
                                surface=host + clitic,
                                pos="VERB",
                                role=role_for(None, gold.antecedent_id),
                                refers_to=gold.antecedent_id,
                                anaphor_char_span=(
                                    len(host), len(host) + len(clitic)),
                            )
                        else:
                            word = WordItem(
                                surface=DETACHED_PRONOUN[cls],
                                pos="PRON",
                                role=role_for(None, gold.antecedent_id),
                                refers_to=gold.antecedent_id,
                            )
                        sentence_words.append(word)
                        position += 1
                        continue
                if doc_rng.random() < config.noun_rate:
                    noun = nouns[int(doc_rng.integers(len(nouns)))]
                    word = WordItem(surface=noun.surface, pos="NOUN")
                    words_placed.append((position, word, noun.cls))
                elif doc_rng.random() < 0.5:
                    word = WordItem(
                        surface=verbs[int(doc_rng.integers(len(verbs)))],
                        pos="VERB")
                else:
                    word = WordItem(
                        surface=PARTICLES[
                            int(doc_rng.integers(len(PARTICLES)))],
                        pos="PART")
                sentence_words.append(word)
                position += 1
            sentences.append(Sentence(words=sentence_words, index=s_index))
        documents.append(Document(
            doc_id=f"synth{doc_index:03d}", sentences=sentences))
    return SynthCorpus(documents=documents, tagger_table=tagger_table,
                       morph_table=morph_table, config=config)
