"""Turn resolution instances into scored-sequence training examples.

A paragraph is embedded once per instance.  Each subword token carries
its pretrained vector plus two indicator columns: z marks the anaphor's
tokens, c marks candidate-word tokens.  Targets mark the gold
antecedent's tokens.  Variants are cumulative and selected by
VariantFlags:

    append_anaphor   copy the anaphor's token rows to the end of the
                     sequence (visible to the recurrent pass, excluded
                     from ranking),
    candidate_mask   keep a 0/1 mask over candidate tokens for the
                     scoring head,
    agreement_filter morphological pre-filtering (applied upstream, the
                     flag only travels with the example for bookkeeping).
"""

from __future__ import annotations

import hashlib
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .candidates import ResolutionInstance


class EncodingError(ValueError):
    pass


class AlignmentError(EncodingError):
    pass


class BudgetExceededError(EncodingError):
    """The anaphor's own sentence does not fit the token budget."""


class GoldOutsideWindowError(EncodingError):
    """Left-truncation dropped the gold antecedent."""


@dataclass(frozen=True)
class VariantFlags:
    append_anaphor: bool = False
    candidate_mask: bool = False
    agreement_filter: bool = False

    def to_json(self) -> dict:
        return {"append": self.append_anaphor,
                "mask": self.candidate_mask,
                "filter": self.agreement_filter}

    @classmethod
    def from_json(cls, obj: dict) -> "VariantFlags":
        return cls(append_anaphor=obj["append"],
                   candidate_mask=obj["mask"],
                   agreement_filter=obj["filter"])


# The four cumulative model variants, weakest first.
VARIANT_LADDER: tuple[tuple[str, VariantFlags], ...] = (
    ("base", VariantFlags(False, False, False)),
    ("append", VariantFlags(True, False, False)),
    ("mask", VariantFlags(True, True, False)),
    ("filter", VariantFlags(True, True, True)),
)

VARIANTS = dict(VARIANT_LADDER)


class EmbeddingProviderInterface(ABC):
    """Maps text to subword tokens, character offsets, and vectors.

    ``encode`` returns (tokens, offsets, vectors) where offsets[i] is the
    (start, end) character range of token i in the input text, or None
    for synthetic marker tokens, and vectors has shape (n_tokens, dim).
    """

    name = "provider"
    dim: int
    max_tokens: int

    @abstractmethod
    def encode(self, text: str) -> tuple[
            list[str], list[tuple[int, int] | None], np.ndarray]:
        ...


class HashEmbeddingProvider(EmbeddingProviderInterface):
    """Deterministic stand-in for a pretrained encoder.

    Words (maximal non-space runs) are chunked into pieces of at most
    ``chunk_chars`` characters; each distinct piece gets a fixed vector
    drawn from a generator keyed by hashing the piece.  Equal pieces get
    equal vectors across any text, which is the only property the model
    and the tests rely on.
    """

    name = "hash"

    def __init__(self, dim: int = 32, chunk_chars: int = 3,
                 max_tokens: int = 256, seed: int = 0, markers: bool = True):
        if dim < 1 or chunk_chars < 1 or max_tokens < 4:
            raise ValueError("dim, chunk_chars >= 1 and max_tokens >= 4")
        self.dim = dim
        self.chunk_chars = chunk_chars
        self.max_tokens = max_tokens
        self.seed = seed
        self.markers = markers
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(
                f"{self.seed}:{token}".encode(), digest_size=8).digest()
            rng = np.random.Generator(
                np.random.PCG64(int.from_bytes(digest, "big")))
            vec = rng.uniform(-1.0, 1.0, self.dim)
            self._cache[token] = vec
        return vec

    def encode(self, text):
        tokens: list[str] = []
        offsets: list[tuple[int, int] | None] = []
        if self.markers:
            tokens.append("<s>")
            offsets.append(None)
        for match in re.finditer(r"\S+", text):
            start = match.start()
            piece = match.group()
            for lo in range(0, len(piece), self.chunk_chars):
                hi = min(lo + self.chunk_chars, len(piece))
                tokens.append(piece[lo:hi])
                offsets.append((start + lo, start + hi))
        if self.markers:
            tokens.append("</s>")
            offsets.append(None)
        vectors = np.stack([self._vector(tok) for tok in tokens]) \
            if tokens else np.zeros((0, self.dim))
        return tokens, offsets, vectors


PROVIDERS: dict[str, type] = {}


def register_provider(cls):
    PROVIDERS[cls.name] = cls
    return cls


register_provider(HashEmbeddingProvider)


# ---------------------------------------------------------------------------
# Token/word alignment

@dataclass
class TokenAlignment:
    tokens: list[str]
    token_offsets: list[tuple[int, int] | None]
    token_word: list[int]                    # -1 for marker tokens
    word_spans: list[tuple[int, int]]        # token range per word
    word_char_ranges: list[tuple[int, int]]  # char range per word

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


def word_char_ranges(surfaces: list[str]) -> list[tuple[int, int]]:
    """Character ranges of each word in ' '.join(surfaces)."""
    ranges = []
    cursor = 0
    for surface in surfaces:
        ranges.append((cursor, cursor + len(surface)))
        cursor += len(surface) + 1
    return ranges


def align(surfaces: list[str],
          tokens: list[str],
          offsets: list[tuple[int, int] | None]) -> TokenAlignment:
    """Assign each token to the word containing its start offset.

    Tokens may not straddle word boundaries, and a word's tokens must be
    contiguous; violating providers are rejected rather than guessed at.
    """
    ranges = word_char_ranges(surfaces)
    token_word = []
    for t_index, offset in enumerate(offsets):
        if offset is None:
            token_word.append(-1)
            continue
        start, end = offset
        owner = -1
        for w_index, (lo, hi) in enumerate(ranges):
            if lo <= start < hi:
                owner = w_index
                if end > hi:
                    raise AlignmentError(
                        f"token {t_index} ({tokens[t_index]!r}) spans past "
                        f"word {w_index} ({surfaces[w_index]!r})")
                break
        if owner < 0:
            raise AlignmentError(
                f"token {t_index} ({tokens[t_index]!r}) at offset {start} "
                f"falls between words")
        token_word.append(owner)

    word_spans = []
    cursor = 0
    n = len(tokens)
    for w_index in range(len(surfaces)):
        while cursor < n and token_word[cursor] == -1:
            cursor += 1
        start = cursor
        while cursor < n and token_word[cursor] == w_index:
            cursor += 1
        word_spans.append((start, cursor))
    for t_index, owner in enumerate(token_word):
        if owner >= 0:
            lo, hi = word_spans[owner]
            if not lo <= t_index < hi:
                raise AlignmentError(
                    f"word {owner} has non-contiguous tokens")
    return TokenAlignment(
        tokens=list(tokens),
        token_offsets=list(offsets),
        token_word=token_word,
        word_spans=word_spans,
        word_char_ranges=ranges,
    )


def build_flags(alignment: TokenAlignment,
                anaphor_word: int,
                anaphor_char_range: tuple[int, int] | None,
                candidate_words: list[int],
                ) -> tuple[np.ndarray, np.ndarray]:
    """Anaphor (z) and candidate (c) indicator columns over tokens.

    For attached pronouns ``anaphor_char_range`` is the clitic's absolute
    character range; only tokens overlapping it are flagged.  When the
    provider's chunking misses the range entirely, the whole word is
    flagged instead — losing the distinction beats flagging nothing.
    """
    n = alignment.n_tokens
    z = np.zeros(n)
    c = np.zeros(n)
    lo, hi = alignment.word_spans[anaphor_word]
    if anaphor_char_range is not None:
        a, b = anaphor_char_range
        for t_index in range(lo, hi):
            ts, te = alignment.token_offsets[t_index]
            if ts < b and a < te:
                z[t_index] = 1.0
    if anaphor_char_range is None or not z.any():
        z[lo:hi] = 1.0
    for word in candidate_words:
        ws, we = alignment.word_spans[word]
        c[ws:we] = 1.0
    return z, c


# ---------------------------------------------------------------------------
# Example assembly

@dataclass(eq=False)
class EncodedExample:
    inputs: np.ndarray            # (n_tokens, dim + 2)
    targets: np.ndarray           # (n_tokens,)
    candidate_mask: np.ndarray    # (n_tokens,)
    alignment: TokenAlignment
    anaphor_word: int             # window word positions
    gold_word: int | None
    candidate_words: list[int]
    instance_id: str
    word_offset: int              # paragraph index of window word 0
    appended_span: tuple[int, int] | None = None

    @property
    def n_tokens(self) -> int:
        return self.inputs.shape[0]

    def ranking_tokens(self) -> np.ndarray:
        """Boolean mask of tokens that take part in word-level ranking:
        real (non-marker, non-appended) tokens outside the anaphor."""
        keep = np.array([w >= 0 for w in self.alignment.token_word])
        if self.appended_span is not None:
            keep[self.appended_span[0]:self.appended_span[1]] = False
        lo, hi = self.alignment.word_spans[self.anaphor_word]
        keep[lo:hi] = False
        return keep

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "inputs": self.inputs.astype(np.float32).tolist(),
            "targets": self.targets.astype(np.float32).tolist(),
            "candidate_mask": self.candidate_mask.astype(np.float32).tolist(),
            "tokens": self.alignment.tokens,
            "token_offsets": [list(o) if o is not None else None
                              for o in self.alignment.token_offsets],
            "token_word": self.alignment.token_word,
            "word_spans": [list(s) for s in self.alignment.word_spans],
            "word_char_ranges": [list(r)
                                 for r in self.alignment.word_char_ranges],
            "anaphor_word": self.anaphor_word,
            "gold_word": self.gold_word,
            "candidate_words": self.candidate_words,
            "word_offset": self.word_offset,
            "appended_span": list(self.appended_span)
            if self.appended_span is not None else None,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "EncodedExample":
        alignment = TokenAlignment(
            tokens=obj["tokens"],
            token_offsets=[tuple(o) if o is not None else None
                           for o in obj["token_offsets"]],
            token_word=obj["token_word"],
            word_spans=[tuple(s) for s in obj["word_spans"]],
            word_char_ranges=[tuple(r) for r in obj["word_char_ranges"]],
        )
        return cls(
            inputs=np.asarray(obj["inputs"], dtype=np.float64),
            targets=np.asarray(obj["targets"], dtype=np.float64),
            candidate_mask=np.asarray(obj["candidate_mask"],
                                      dtype=np.float64),
            alignment=alignment,
            anaphor_word=obj["anaphor_word"],
            gold_word=obj["gold_word"],
            candidate_words=list(obj["candidate_words"]),
            instance_id=obj["instance_id"],
            word_offset=obj["word_offset"],
            appended_span=tuple(obj["appended_span"])
            if obj["appended_span"] is not None else None,
        )


def assemble(instance: ResolutionInstance,
             provider: EmbeddingProviderInterface,
             flags: VariantFlags) -> EncodedExample:
    """Build the input matrix for one instance.

    The window is the paragraph, left-truncated word by word until the
    token count (plus appended copies) fits the provider budget.
    Truncation never cuts into the anaphor's sentence, and an instance
    whose gold antecedent falls off the window is rejected so the caller
    can count it.
    """
    anaphor_sentence = instance.sentence_indices[instance.anaphor_index]
    sentence_start = instance.sentence_indices.index(anaphor_sentence)
    start = 0
    while True:
        surfaces = [w.surface for w in instance.paragraph[start:]]
        tokens, offsets, vectors = provider.encode(" ".join(surfaces))
        alignment = align(surfaces, tokens, offsets)
        anaphor_word = instance.anaphor_index - start
        lo, hi = alignment.word_spans[anaphor_word]
        appended = (hi - lo) if flags.append_anaphor else 0
        over = alignment.n_tokens + appended - provider.max_tokens
        if over <= 0:
            break
        if start >= sentence_start:
            raise BudgetExceededError(
                f"{instance.instance_id}: anaphor sentence alone needs "
                f"{alignment.n_tokens + appended} tokens, budget is "
                f"{provider.max_tokens}")
        # Drop the fewest leading words whose tokens cover the overshoot,
        # then re-encode; loop in case re-tokenization shifts counts.
        drop = 0
        freed = 0
        while (start + drop < sentence_start and freed < over):
            ws, we = alignment.word_spans[drop]
            freed += we - ws
            drop += 1
        start += max(drop, 1)

    if instance.gold_index is not None and instance.gold_index < start:
        raise GoldOutsideWindowError(
            f"{instance.instance_id}: antecedent at word "
            f"{instance.gold_index} precedes window start {start}")

    anaphor_word = instance.anaphor_index - start
    span_range = None
    if instance.anaphor_span is not None:
        word_lo = alignment.word_char_ranges[anaphor_word][0]
        span_range = (word_lo + instance.anaphor_span[0],
                      word_lo + instance.anaphor_span[1])
    candidate_words = [cand.index - start for cand in instance.candidates
                       if cand.index >= start]
    z, c = build_flags(alignment, anaphor_word, span_range, candidate_words)

    targets = np.zeros(alignment.n_tokens)
    gold_word = None
    if instance.gold_index is not None:
        gold_word = instance.gold_index - start
        glo, ghi = alignment.word_spans[gold_word]
        if glo == ghi:
            raise EncodingError(
                f"{instance.instance_id}: gold word produced no tokens")
        targets[glo:ghi] = 1.0

    inputs = np.concatenate([vectors, z[:, None], c[:, None]], axis=1)
    candidate_mask = c.copy()
    appended_span = None
    if flags.append_anaphor:
        rows = np.flatnonzero(z)
        copies = inputs[rows].copy()
        copies[:, -1] = 0.0  # appended anaphor tokens are not candidates
        m = inputs.shape[0]
        inputs = np.concatenate([inputs, copies], axis=0)
        targets = np.concatenate([targets, np.zeros(len(rows))])
        candidate_mask = np.concatenate([candidate_mask, np.zeros(len(rows))])
        appended_span = (m, m + len(rows))

    return EncodedExample(
        inputs=inputs,
        targets=targets,
        candidate_mask=candidate_mask,
        alignment=alignment,
        anaphor_word=anaphor_word,
        gold_word=gold_word,
        candidate_words=candidate_words,
        instance_id=instance.instance_id,
        word_offset=start,
        appended_span=appended_span,
    )


@dataclass
class EncodingStats:
    encoded: int = 0
    gold_outside_window: int = 0


def encode_instances(instances: list[ResolutionInstance],
                     provider: EmbeddingProviderInterface,
                     flags: VariantFlags,
                     ) -> tuple[list[tuple[ResolutionInstance,
                                           EncodedExample]], EncodingStats]:
    """Encode a batch, skipping (and counting) gold-outside-window cases.

    Budget violations are not skippable: they mean the provider budget is
    too small for the corpus and the run configuration must change.
    """
    stats = EncodingStats()
    pairs = []
    for instance in instances:
        try:
            example = assemble(instance, provider, flags)
        except GoldOutsideWindowError:
            stats.gold_outside_window += 1
            continue
        pairs.append((instance, example))
        stats.encoded += 1
    return pairs, stats
