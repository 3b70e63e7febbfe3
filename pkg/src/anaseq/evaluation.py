"""Ranking metrics, token metrics, and the experiment matrix.

The headline number is mean reciprocal rank over anaphors: words are
ranked by the maximum score of their tokens and the gold antecedent's
reciprocal rank is averaged, counting an unreachable gold (outside the
candidate set or the encoding window) as 0.  Token-level
precision/recall/f1/accuracy are reported alongside but are inflated by
the overwhelming negative class, so they mainly serve as a sanity check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines as baselines_mod
from .candidates import (AnalyzerInterface, ResolutionInstance,
                         TaggerInterface, build_instances)
from .corpus import Document, split_documents
from .encoding import (EmbeddingProviderInterface, EncodedExample,
                       VARIANT_LADDER, VariantFlags, encode_instances)
from .model import (ModelParameters, TrainingConfig, predict, train)

DEFAULT_BASELINES = ("knn", "logistic", "svm")


# ---------------------------------------------------------------------------
# Ranking

@dataclass
class RankedPrediction:
    instance_id: str
    ranking: list[int]        # window word indices, best first
    scores: list[float]       # aligned with ranking
    gold_word: int | None
    rank: float               # 1-based; math.inf when gold is unreachable


def word_scores(scores: np.ndarray, example: EncodedExample,
                words: list[int]) -> list[float]:
    """A word scores the max of its tokens."""
    out = []
    for word in words:
        lo, hi = example.alignment.word_spans[word]
        if lo == hi:
            out.append(float("-inf"))
        else:
            out.append(float(scores[lo:hi].max()))
    return out


def rank_example(scores: np.ndarray, example: EncodedExample,
                 variant: VariantFlags,
                 restrict_to_candidates: bool | None = None,
                 ) -> RankedPrediction:
    """Order words by score and locate the gold antecedent.

    The ranking universe is the candidate set when any candidate
    restriction is active (mask or filter variants, or forced by the
    caller), otherwise every word in the window except the anaphor
    itself.  Ties break toward the word nearer the anaphor, then the
    earlier one.
    """
    if restrict_to_candidates is None:
        restrict_to_candidates = (variant.candidate_mask
                                  or variant.agreement_filter)
    if restrict_to_candidates:
        universe = list(example.candidate_words)
    else:
        universe = [w for w in range(len(example.alignment.word_spans))
                    if w != example.anaphor_word]
    values = word_scores(scores, example, universe)
    order = sorted(
        range(len(universe)),
        key=lambda i: (-values[i],
                       abs(universe[i] - example.anaphor_word),
                       universe[i]))
    ranking = [universe[i] for i in order]
    ranked_scores = [values[i] for i in order]
    if example.gold_word is not None and example.gold_word in ranking:
        rank: float = ranking.index(example.gold_word) + 1
    else:
        rank = math.inf
    return RankedPrediction(
        instance_id=example.instance_id,
        ranking=ranking,
        scores=ranked_scores,
        gold_word=example.gold_word,
        rank=rank,
    )


def mrr(ranks: list[float]) -> float:
    """Mean reciprocal rank; an infinite rank contributes 0."""
    if not ranks:
        raise ValueError("mrr of an empty rank list is undefined")
    return float(np.mean([0.0 if math.isinf(r) else 1.0 / r
                          for r in ranks]))


def dataset_mrr(params: ModelParameters, examples: list[EncodedExample],
                variant: VariantFlags) -> float:
    """MRR of the recurrent scorer over encoded examples (training-time
    progress number)."""
    ranks = [rank_example(predict(params, ex, variant), ex, variant).rank
             for ex in examples]
    return mrr(ranks)


# ---------------------------------------------------------------------------
# Token metrics

@dataclass
class TokenCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "TokenCounts") -> "TokenCounts":
        return TokenCounts(self.tp + other.tp, self.fp + other.fp,
                           self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def token_metrics(scores: np.ndarray, targets: np.ndarray,
                  consider: np.ndarray | None = None,
                  threshold: float = 0.5) -> TokenCounts:
    """Confusion counts at a score threshold; `consider` masks tokens out
    of the tally (appended copies, padding)."""
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    if consider is None:
        consider = np.ones(scores.shape, dtype=bool)
    pred = (scores > threshold) & consider
    gold = (targets > 0.5) & consider
    return TokenCounts(
        tp=int((pred & gold).sum()),
        fp=int((pred & ~gold).sum()),
        fn=int((~pred & gold).sum()),
        tn=int((~pred & ~gold & consider).sum()),
    )


def aggregate(counts: TokenCounts) -> dict[str, float]:
    """Precision/recall/f1/accuracy with the usual 0/0 -> 0 conventions."""
    if counts.total == 0:
        raise ValueError("no tokens were counted")
    precision = counts.tp / (counts.tp + counts.fp) \
        if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) \
        if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    accuracy = (counts.tp + counts.tn) / counts.total
    return {"precision": precision, "recall": recall, "f1": f1,
            "accuracy": accuracy}


def metric_tokens(example: EncodedExample) -> np.ndarray:
    """Tokens that count toward token metrics: everything except the
    appended anaphor copies."""
    consider = np.ones(example.n_tokens, dtype=bool)
    if example.appended_span is not None:
        consider[example.appended_span[0]:example.appended_span[1]] = False
    return consider


# ---------------------------------------------------------------------------
# Reports

@dataclass
class MetricsReport:
    model: str
    variant: VariantFlags
    split: str
    mrr: float
    precision: float
    recall: float
    f1: float
    accuracy: float
    counts: dict

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "variant": self.variant.to_json(),
            "split": self.split,
            "mrr": self.mrr,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "counts": self.counts,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        return cls(
            model=obj["model"],
            variant=VariantFlags.from_json(obj["variant"]),
            split=obj["split"],
            mrr=obj["mrr"],
            precision=obj["precision"],
            recall=obj["recall"],
            f1=obj["f1"],
            accuracy=obj["accuracy"],
            counts=obj["counts"],
        )


def build_report(model: str, variant: VariantFlags, split: str,
                 ranks: list[float], counts: TokenCounts,
                 extra: dict | None = None) -> MetricsReport:
    rates = aggregate(counts)
    count_obj = counts.to_json()
    count_obj["instances"] = len(ranks)
    count_obj["unranked"] = sum(1 for r in ranks if math.isinf(r))
    if extra:
        count_obj.update(extra)
    return MetricsReport(
        model=model, variant=variant, split=split,
        mrr=mrr(ranks), counts=count_obj, **rates)


def write_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json(), indent=1) + "\n", encoding="utf-8")


def read_report(path: str | Path) -> MetricsReport:
    return MetricsReport.from_json(
        json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Error analysis

def error_records(pairs: list[tuple[ResolutionInstance, EncodedExample]],
                  predictions: list[RankedPrediction]) -> list[dict]:
    """One record per instance whose top-ranked word is not the gold."""
    records = []
    for (instance, example), pred in zip(pairs, predictions):
        if pred.rank == 1:
            continue
        window = instance.paragraph[example.word_offset:]
        top_word = pred.ranking[0] if pred.ranking else None
        gold_surface = None
        gold_score = None
        if example.gold_word is not None:
            gold_surface = window[example.gold_word].surface
            if example.gold_word in pred.ranking:
                gold_score = pred.scores[pred.ranking.index(example.gold_word)]
        records.append({
            "instance_id": pred.instance_id,
            "anaphor": window[example.anaphor_word].surface,
            "gold": gold_surface,
            "predicted": window[top_word].surface
            if top_word is not None else None,
            "predicted_score": pred.scores[0] if pred.scores else None,
            "gold_score": gold_score,
            "gold_rank": None if math.isinf(pred.rank) else int(pred.rank),
        })
    return records


def write_error_analysis(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Experiment matrix

def evaluate_examples(params: ModelParameters,
                      pairs: list[tuple[ResolutionInstance, EncodedExample]],
                      variant: VariantFlags,
                      unreachable: int = 0,
                      ) -> tuple[list[float], TokenCounts,
                                 list[RankedPrediction]]:
    """Score every pair with the recurrent model and tally metrics.

    `unreachable` is the number of instances the encoder had to skip
    (gold outside the window); each is charged an infinite rank so MRR
    does not improve by dropping hard cases.
    """
    ranks: list[float] = [math.inf] * unreachable
    counts = TokenCounts()
    predictions = []
    for _, example in pairs:
        scores = predict(params, example, variant)
        prediction = rank_example(scores, example, variant)
        predictions.append(prediction)
        ranks.append(prediction.rank)
        counts = counts + token_metrics(scores, example.targets,
                                        metric_tokens(example))
    return ranks, counts, predictions


def evaluate_baseline(model: baselines_mod.BaselineModel,
                      pairs: list[tuple[ResolutionInstance, EncodedExample]],
                      unreachable: int = 0,
                      ) -> tuple[list[float], TokenCounts,
                                 list[RankedPrediction]]:
    """Baselines rank candidates only: their features exist for nothing
    else."""
    ranks: list[float] = [math.inf] * unreachable
    counts = TokenCounts()
    predictions = []
    flags = VariantFlags()
    for instance, example in pairs:
        scores = baselines_mod.score_sequence(model, instance, example)
        prediction = rank_example(scores, example, flags,
                                  restrict_to_candidates=True)
        predictions.append(prediction)
        ranks.append(prediction.rank)
        counts = counts + token_metrics(scores, example.targets,
                                        metric_tokens(example))
    return ranks, counts, predictions


@dataclass
class ExperimentResult:
    reports: list[MetricsReport] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    errors: dict[str, list[dict]] = field(default_factory=dict)
    logs: dict[str, list[dict]] = field(default_factory=dict)
    checkpoints: dict[str, ModelParameters] = field(default_factory=dict)
    split: dict[str, list[str]] = field(default_factory=dict)


def prepare_examples(docs: list[Document], taggers, analyzer, provider,
             flags: VariantFlags):
    instances = []
    for doc in docs:
        doc_instances, _ = build_instances(
            doc, taggers, analyzer,
            apply_agreement_filter=flags.agreement_filter)
        instances.extend(doc_instances)
    pairs, stats = encode_instances(instances, provider, flags)
    return pairs, stats.gold_outside_window


def train_variant(train_docs: list[Document],
                  taggers: list[TaggerInterface],
                  analyzer: AnalyzerInterface,
                  provider: EmbeddingProviderInterface,
                  config: TrainingConfig,
                  dev_split_seed: int = 1,
                  ) -> tuple[ModelParameters, list[dict]]:
    """Train one variant cell, carving a document-level dev set when the
    corpus is big enough (instances from one document are correlated, so
    an instance-level dev split would leak)."""
    flags = config.variant
    fit_docs, dev_docs = train_docs, []
    if config.dev_fraction > 0 and len(train_docs) >= 4:
        fit_docs, dev_docs = split_documents(
            train_docs, 1.0 - config.dev_fraction, dev_split_seed)
    train_pairs, _ = prepare_examples(fit_docs, taggers, analyzer, provider, flags)
    dev_examples = None
    if dev_docs:
        dev_pairs, _ = prepare_examples(dev_docs, taggers, analyzer, provider, flags)
        dev_examples = [ex for _, ex in dev_pairs] or None
    return train([ex for _, ex in train_pairs], config,
                 dev_examples=dev_examples)


def run_experiment(docs: list[Document],
                   taggers: list[TaggerInterface],
                   analyzer: AnalyzerInterface,
                   provider: EmbeddingProviderInterface,
                   config: TrainingConfig,
                   split_ratio: float = 0.7,
                   split_seed: int = 0,
                   baseline_names: tuple[str, ...] = DEFAULT_BASELINES,
                   variants=VARIANT_LADDER) -> ExperimentResult:
    """Train and evaluate the full model/variant matrix on one split.

    Documents are split once; every cell sees the same train/test
    documents.  The recurrent model is trained per variant (the variants
    change the training examples themselves); baselines train once on the
    plain encoding.  A failing cell is recorded and skipped rather than
    aborting the matrix.
    """
    result = ExperimentResult()
    train_docs, test_docs = split_documents(docs, split_ratio, split_seed)
    result.split = {"train": [d.doc_id for d in train_docs],
                    "test": [d.doc_id for d in test_docs]}

    for variant_name, flags in variants:
        cell = f"bilstm/{variant_name}"
        try:
            cell_config = replace(config, variant=flags)
            params, log = train_variant(
                train_docs, taggers, analyzer, provider, cell_config,
                dev_split_seed=split_seed + 1)
            test_pairs, test_missed = prepare_examples(test_docs, taggers, analyzer,
                                               provider, flags)
            ranks, counts, predictions = evaluate_examples(
                params, test_pairs, flags, unreachable=test_missed)
            result.reports.append(build_report(
                "bilstm", flags, "test", ranks, counts))
            result.errors[cell] = error_records(test_pairs, predictions)
            result.logs[cell] = log
            result.checkpoints[cell] = params
        except Exception as exc:  # noqa: BLE001 - cell isolation
            result.failures.append({"cell": cell, "error": repr(exc)})

    if baseline_names:
        flags = VariantFlags()
        try:
            train_pairs, _ = prepare_examples(train_docs, taggers, analyzer,
                                      provider, flags)
            test_pairs, test_missed = prepare_examples(test_docs, taggers, analyzer,
                                               provider, flags)
            train_instances = [inst for inst, _ in train_pairs]
        except Exception as exc:  # noqa: BLE001
            result.failures.append({"cell": "baselines", "error": repr(exc)})
            return result
        for name in baseline_names:
            try:
                fitted = baselines_mod.fit(train_instances, name)
                ranks, counts, predictions = evaluate_baseline(
                    fitted, test_pairs, unreachable=test_missed)
                result.reports.append(build_report(
                    name, flags, "test", ranks, counts))
                result.errors[name] = error_records(test_pairs, predictions)
            except Exception as exc:  # noqa: BLE001
                result.failures.append({"cell": name, "error": repr(exc)})
    return result
