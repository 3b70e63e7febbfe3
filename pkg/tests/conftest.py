import numpy as np
import pytest

from anaseq.candidates import CorpusTagger, LookupAnalyzer
from anaseq.encoding import EncodedExample, HashEmbeddingProvider, TokenAlignment
from anaseq.synth import SynthConfig, generate

# A small annotated document: a nominal antecedent, a detached pronoun in
# the following sentence, and an attached pronoun (clitic span 4:5).
SAMPLE_XML = """\
<document id="sample">
 <s>
  <w pos="VERB">قرأ</w>
  <EXP id="e1" pos="NOUN">الرئيس</EXP>
  <w pos="NOUN">التقرير</w>
 </s>
 <s>
  <PTR ref="e1" pos="PRON">هو</PTR>
  <w pos="VERB">غادر</w>
  <PTR ref="e1" pos="VERB" span="4:5">مكتبه</PTR>
 </s>
</document>
"""


@pytest.fixture
def sample_xml() -> str:
    return SAMPLE_XML


@pytest.fixture(scope="session")
def synth_bundle():
    """A small generated corpus plus matching tagger/analyzer/provider."""
    corpus = generate(SynthConfig(n_docs=6, seed=11))
    return {
        "corpus": corpus,
        "docs": corpus.documents,
        "tagger": CorpusTagger(corpus.tagger_table),
        "analyzer": LookupAnalyzer(corpus.morph_table),
        "provider": HashEmbeddingProvider(dim=16, chunk_chars=3,
                                          max_tokens=256, seed=0),
    }


def make_example(scores_shape_words: int,
                 anaphor_word: int,
                 gold_word: int | None,
                 candidate_words: list[int],
                 instance_id: str = "t:0") -> EncodedExample:
    """Minimal one-token-per-word example for ranking/metric tests."""
    n = scores_shape_words
    alignment = TokenAlignment(
        tokens=[f"w{i}" for i in range(n)],
        token_offsets=[(i * 2, i * 2 + 1) for i in range(n)],
        token_word=list(range(n)),
        word_spans=[(i, i + 1) for i in range(n)],
        word_char_ranges=[(i * 2, i * 2 + 1) for i in range(n)],
    )
    targets = np.zeros(n)
    if gold_word is not None:
        targets[gold_word] = 1.0
    cmask = np.zeros(n)
    cmask[candidate_words] = 1.0
    return EncodedExample(
        inputs=np.zeros((n, 3)),
        targets=targets,
        candidate_mask=cmask,
        alignment=alignment,
        anaphor_word=anaphor_word,
        gold_word=gold_word,
        candidate_words=list(candidate_words),
        instance_id=instance_id,
        word_offset=0,
    )
