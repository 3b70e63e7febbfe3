"""Acceptance gate: eight checks, one printed verdict line each.

Run with `pytest -v tests/test_acceptance.py -s` to see the verdict lines
as they pass; on failure the verdict is in the captured output.
"""

import json
import math
import statistics
import time

import numpy as np

from anaseq.baselines import KNN_K_RANGE, KnnScorer
from anaseq.candidates import CorpusTagger, LookupAnalyzer
from anaseq.corpus import (clean_corpus, convert_xml, document_from_obj,
                           dumps_document, split_documents)
from anaseq.encoding import (EncodedExample, HashEmbeddingProvider,
                             TokenAlignment, VARIANTS, VariantFlags)
from anaseq.evaluation import (aggregate, dataset_mrr, mrr, prepare_examples,
                               rank_example, run_experiment, TokenCounts)
from anaseq.model import (ModelParameters, TrainingConfig,
                          apply_candidate_mask, batch_loss_and_grads,
                          max_relative_error, numerical_gradients, train)
from anaseq.synth import SynthConfig, generate

from conftest import SAMPLE_XML, make_example


def _verdict(label: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[{status}] {label}{suffix}")
    assert passed, f"{label}{suffix}"


# ---------------------------------------------------------------------------
# 1. Analytic gradients match central finite differences.

def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    trials = 24
    for trial in range(trials):
        batch = int(rng.integers(1, 3))
        steps = int(rng.integers(2, 7))        # m <= 6
        dim = int(rng.integers(2, 5))
        hidden = int(rng.integers(2, 5))       # hidden <= 4
        params = ModelParameters.init(dim, hidden, seed=trial)
        x = rng.normal(size=(batch, steps, dim))
        y = rng.integers(0, 2, (batch, steps)).astype(float)
        valid = np.ones((batch, steps))
        if batch > 1:
            valid[-1, steps - 1] = 0.0         # exercise padding
        cmask = rng.integers(0, 2, (batch, steps)).astype(float) \
            if trial % 2 else None
        _, analytic = batch_loss_and_grads(params, x, y, valid, cmask)
        numeric = numerical_gradients(
            params,
            lambda p: batch_loss_and_grads(p, x, y, valid, cmask)[0])
        worst = max(worst, max_relative_error(analytic, numeric))
    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 1: gradient check, relative error < 1e-4",
        worst < 1e-4 and elapsed < 60.0,
        f"worst {worst:.2e} over {trials} instances, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Candidate mask law and rank monotonicity.

def test_criterion_2_mask_law_and_monotonicity():
    rng = np.random.default_rng(11)
    law_holds = True
    for _ in range(1000):
        n = int(rng.integers(1, 33))
        s = rng.uniform(0, 1, n)
        m = rng.integers(0, 2, n).astype(float)
        expected = np.array([s[i] * m[i] + 1e-16 for i in range(n)])
        if not np.array_equal(apply_candidate_mask(s, m), expected):
            law_holds = False
            break

    monotone = True
    for _ in range(1000):
        n = int(rng.integers(3, 11))
        anaphor = int(rng.integers(0, n))
        gold = int(rng.integers(0, n))
        while gold == anaphor:
            gold = int(rng.integers(0, n))
        candidates = sorted(set(
            int(i) for i in rng.integers(0, n, size=rng.integers(1, n))
            if int(i) != anaphor) | {gold})
        example = make_example(n, anaphor_word=anaphor, gold_word=gold,
                               candidate_words=candidates)
        scores = rng.uniform(0, 1, n)
        base_rank = rank_example(scores, example, VariantFlags()).rank
        masked = apply_candidate_mask(scores, example.candidate_mask)
        mask_rank = rank_example(masked, example, VARIANTS["mask"]).rank
        if not mask_rank <= base_rank:
            monotone = False
            break
    _verdict(
        "criterion 2: mask law exact and mask never worsens the gold rank",
        law_holds and monotone,
        "1000 sequences, 1000 fixtures")


# ---------------------------------------------------------------------------
# 3. MRR against a brute-force recomputation.

def _brute_force_rank(token_scores, word_spans, universe, anaphor, gold):
    values = []
    for word in universe:
        lo, hi = word_spans[word]
        values.append(max(float(token_scores[t]) for t in range(lo, hi)))
    order = sorted(range(len(universe)),
                   key=lambda i: (-values[i],
                                  abs(universe[i] - anaphor),
                                  universe[i]))
    ranked = [universe[i] for i in order]
    return float(ranked.index(gold) + 1) if gold in ranked else math.inf


def _random_multi_token_example(rng):
    n_words = int(rng.integers(2, 9))
    word_spans = []
    cursor = 0
    for _ in range(n_words):
        width = int(rng.integers(1, 4))
        word_spans.append((cursor, cursor + width))
        cursor += width
    alignment = TokenAlignment(
        tokens=[f"t{i}" for i in range(cursor)],
        token_offsets=[(i, i + 1) for i in range(cursor)],
        token_word=[w for w, (lo, hi) in enumerate(word_spans)
                    for _ in range(lo, hi)],
        word_spans=word_spans,
        word_char_ranges=[(lo, hi) for lo, hi in word_spans],
    )
    anaphor = int(rng.integers(0, n_words))
    gold = int(rng.integers(0, n_words))
    while gold == anaphor:
        gold = int(rng.integers(0, n_words))
    candidates = sorted(set(
        int(i) for i in rng.integers(0, n_words, size=rng.integers(1, n_words))
        if int(i) != anaphor))
    restrict = bool(rng.integers(0, 2)) and bool(candidates)
    cmask = np.zeros(cursor)
    for word in candidates:
        lo, hi = word_spans[word]
        cmask[lo:hi] = 1.0
    example = EncodedExample(
        inputs=np.zeros((cursor, 3)), targets=np.zeros(cursor),
        candidate_mask=cmask, alignment=alignment, anaphor_word=anaphor,
        gold_word=gold, candidate_words=candidates, instance_id="a:0",
        word_offset=0)
    return example, rng.uniform(0, 1, cursor), restrict


def test_criterion_3_mrr_oracle():
    assert abs(mrr([1, 2, 4]) - 0.5833333333333334) < 1e-12
    rng = np.random.default_rng(23)
    package_ranks = []
    oracle_ranks = []
    agree = True
    for _ in range(500):
        example, scores, restrict = _random_multi_token_example(rng)
        variant = VARIANTS["mask"] if restrict else VariantFlags()
        pred = rank_example(scores, example, variant)
        if restrict:
            universe = list(example.candidate_words)
        else:
            universe = [w for w in range(len(example.alignment.word_spans))
                        if w != example.anaphor_word]
        brute = _brute_force_rank(scores, example.alignment.word_spans,
                                  universe, example.anaphor_word,
                                  example.gold_word)
        if pred.rank != brute:
            agree = False
            break
        package_ranks.append(pred.rank)
        oracle_ranks.append(brute)
    brute_mrr = sum(0.0 if math.isinf(r) else 1.0 / r
                    for r in oracle_ranks) / len(oracle_ranks)
    close = abs(mrr(package_ranks) - brute_mrr) < 1e-12
    _verdict(
        "criterion 3: MRR matches brute force on 500 fixtures",
        agree and close,
        f"mrr {mrr(package_ranks):.6f}")


# ---------------------------------------------------------------------------
# 4. Overfit convergence at the published hyperparameters.

def test_criterion_4_overfit_convergence():
    start = time.perf_counter()
    corpus = generate(SynthConfig(n_docs=20, seed=7))
    provider = HashEmbeddingProvider(dim=32, chunk_chars=3,
                                     max_tokens=256, seed=0)
    flags = VARIANTS["mask"]
    pairs, _ = prepare_examples(
        corpus.documents, [CorpusTagger(corpus.tagger_table)],
        LookupAnalyzer(corpus.morph_table), provider, flags)
    examples = [ex for _, ex in pairs]
    config = TrainingConfig(learning_rate=0.005, batch_size=16,
                            max_epochs=200, patience=5, hidden=64,
                            seed=0, dev_fraction=0.0, variant=flags)
    params, log = train(examples, config)
    train_mrr = dataset_mrr(params, examples, flags)
    elapsed = time.perf_counter() - start
    _verdict(
        "criterion 4: train MRR >= 0.95 within the epoch cap",
        train_mrr >= 0.95 and elapsed < 600.0,
        f"mrr {train_mrr:.4f} after {len(log)} epochs, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. Cumulative variants keep their ordering on ambiguous data.

def test_criterion_5_variant_ordering():
    names = ("base", "mask", "filter")
    per_variant: dict[str, list[float]] = {name: [] for name in names}
    for seed in (0, 1, 2):
        corpus = generate(SynthConfig(n_docs=30, ambiguity=0.3, seed=seed))
        provider = HashEmbeddingProvider(dim=32, chunk_chars=3,
                                         max_tokens=256, seed=0)
        config = TrainingConfig(hidden=64, seed=seed, dev_fraction=0.1,
                                max_epochs=30, patience=6)
        result = run_experiment(
            corpus.documents, [CorpusTagger(corpus.tagger_table)],
            LookupAnalyzer(corpus.morph_table), provider, config,
            split_ratio=0.7, split_seed=seed, baseline_names=(),
            variants=tuple((n, VARIANTS[n]) for n in names))
        assert not result.failures, result.failures
        for report in result.reports:
            for name in names:
                if report.variant == VARIANTS[name]:
                    per_variant[name].append(report.mrr)
    medians = {name: statistics.median(vals)
               for name, vals in per_variant.items()}
    ordered = medians["filter"] >= medians["mask"] >= medians["base"]
    _verdict(
        "criterion 5: median MRR filter >= mask >= base over 3 seeds",
        ordered,
        "medians " + " ".join(f"{n}={medians[n]:.3f}" for n in names))


# ---------------------------------------------------------------------------
# 6. k-NN against a brute-force neighbour count.

def _brute_force_knn(train_x, train_y, query, k):
    distances = []
    for index, row in enumerate(train_x):
        d = 0.0
        for a, b in zip(row, query):
            d += (float(a) - float(b)) ** 2
        distances.append((d, index))
    distances.sort()
    nearest = [train_y[index] for _, index in distances[:k]]
    return sum(nearest) / len(nearest)


def test_criterion_6_knn_oracle():
    rng = np.random.default_rng(31)
    exact = True
    for _ in range(200):
        n_train = int(rng.integers(31, 80))
        # integer-valued features (the real ones are flags and distances),
        # so both routes compute bit-identical squared distances
        train_x = rng.integers(0, 7, size=(n_train, 8)).astype(float)
        train_y = rng.integers(0, 2, n_train).astype(float)
        queries = rng.integers(0, 7, size=(4, 8)).astype(float)
        k = int(rng.integers(KNN_K_RANGE.start, KNN_K_RANGE.stop))
        scorer = KnnScorer(k=k)
        scorer.fit(train_x, train_y)
        got = scorer.predict_proba(queries)
        for row, query in enumerate(queries):
            if got[row] != _brute_force_knn(train_x, train_y, query, k):
                exact = False
                break
        if not exact:
            break

    in_range = True
    for bad in (KNN_K_RANGE.start - 1, KNN_K_RANGE.stop):
        try:
            KnnScorer(k=bad)
            in_range = False
        except ValueError:
            pass
    sweep = KnnScorer()
    sweep.fit(rng.normal(size=(60, 8)),
              rng.integers(0, 2, 60).astype(float))
    in_range = in_range and sweep.k in KNN_K_RANGE
    _verdict(
        "criterion 6: k-NN scores match brute force; k confined to [10, 30]",
        exact and in_range,
        "200 feature sets")


# ---------------------------------------------------------------------------
# 7. Corpus pipeline integrity.

def test_criterion_7_pipeline_integrity():
    doc = convert_xml(SAMPLE_XML, doc_id="sample")
    loaded = document_from_obj(json.loads(dumps_document(doc)))
    round_trips = loaded == doc

    cleaned, _ = clean_corpus(doc)
    again, _ = clean_corpus(cleaned)
    idempotent = dumps_document(again) == dumps_document(cleaned)

    docs = generate(SynthConfig(n_docs=59, seed=0)).documents
    train_docs, test_docs = split_documents(docs, 0.7, seed=4)
    train_ids = {d.doc_id for d in train_docs}
    test_ids = {d.doc_id for d in test_docs}
    split_ok = (len(train_docs) == 41 and len(test_docs) == 18
                and not train_ids & test_ids
                and train_ids | test_ids == {d.doc_id for d in docs})
    _verdict(
        "criterion 7: convert/serialize round trip, idempotent clean, "
        "59 -> 41/18 split",
        round_trips and idempotent and split_ok)


# ---------------------------------------------------------------------------
# 8. Metric identities.

def test_criterion_8_metric_identities():
    frozen = aggregate(TokenCounts(tp=5, fp=5, fn=5, tn=985))
    frozen_ok = (abs(frozen["accuracy"] - 0.990) < 1e-12
                 and abs(frozen["f1"] - 0.5) < 1e-12
                 and abs(frozen["precision"] - 0.5) < 1e-12
                 and abs(frozen["recall"] - 0.5) < 1e-12)

    rng = np.random.default_rng(41)
    identities = True
    for _ in range(500):
        counts = TokenCounts(*(int(v) for v in rng.integers(0, 50, 4)))
        if counts.total == 0:
            continue
        rates = aggregate(counts)
        p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp \
            else 0.0
        r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn \
            else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        acc = (counts.tp + counts.tn) / counts.total
        if (abs(rates["f1"] - f1) >= 1e-12
                or abs(rates["accuracy"] - acc) >= 1e-12
                or abs(rates["precision"] - p) >= 1e-12
                or abs(rates["recall"] - r) >= 1e-12):
            identities = False
            break
    _verdict(
        "criterion 8: f1 and accuracy identities hold; 0.990/0.5 "
        "illustration reproduces",
        frozen_ok and identities)
