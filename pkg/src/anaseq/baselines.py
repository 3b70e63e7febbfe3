"""Classical baselines over hand-built agreement features.

Each (anaphor, candidate) pair becomes a fixed-length feature vector;
a binary classifier's positive-class probability is the candidate's
score.  Three scorers: a k-nearest-neighbour voter (implemented here so
tie handling is pinned down), logistic regression, and an SVM (both from
scikit-learn).
"""

from __future__ import annotations

import base64
import json
import pickle
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.svm import SVC

from .candidates import Candidate, ResolutionInstance, UNKNOWN
from .encoding import EncodedExample

FEATURE_NAMES = (
    "number_agree", "gender_agree", "definite", "sentence_distance",
    "person_first", "person_second", "person_third", "person_unknown",
)

# The neighbourhood sweep for the k-NN scorer.
KNN_K_RANGE = range(10, 31)


@dataclass(frozen=True)
class LinguisticFeatureVector:
    """Agreement and position features for one anaphor-candidate pair.

    Agreement features are 1.0 only when both sides are known and equal;
    an unknown on either side scores 0.0 (absence of evidence is not
    agreement).  The person block one-hot-encodes the anaphor's person,
    so it is constant across the candidates of one instance.
    """

    number_agree: float
    gender_agree: float
    definite: float
    sentence_distance: float
    person_first: float
    person_second: float
    person_third: float
    person_unknown: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES],
                        dtype=np.float64)


def _agree(a: str, b: str) -> float:
    return 1.0 if a != UNKNOWN and a == b else 0.0


def featurize(instance: ResolutionInstance) -> list[LinguisticFeatureVector]:
    """One vector per candidate, aligned with instance.candidates."""
    anaphor = instance.anaphor_morph
    anaphor_sentence = instance.sentence_indices[instance.anaphor_index]
    person = anaphor.person
    vectors = []
    for cand in instance.candidates:
        vectors.append(LinguisticFeatureVector(
            number_agree=_agree(anaphor.number, cand.morph.number),
            gender_agree=_agree(anaphor.gender, cand.morph.gender),
            definite=1.0 if cand.morph.definite else 0.0,
            sentence_distance=float(anaphor_sentence - cand.sentence_index),
            person_first=1.0 if person == "first" else 0.0,
            person_second=1.0 if person == "second" else 0.0,
            person_third=1.0 if person == "third" else 0.0,
            person_unknown=1.0 if person == UNKNOWN else 0.0,
        ))
    return vectors


def training_matrix(instances: list[ResolutionInstance],
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Stack candidate vectors over instances; label 1 marks the gold
    antecedent's rows."""
    rows = []
    labels = []
    for instance in instances:
        for cand, vector in zip(instance.candidates, featurize(instance)):
            rows.append(vector.to_array())
            labels.append(1.0 if cand.index == instance.gold_index else 0.0)
    if not rows:
        raise ValueError("no candidates to train on")
    return np.stack(rows), np.array(labels)


# ---------------------------------------------------------------------------
# Scorers

class BaselineScorer(ABC):
    name = "baseline"

    @abstractmethod
    def fit(self, x: np.ndarray, y: np.ndarray) -> None:
        ...

    @abstractmethod
    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """P(antecedent) per row, shape (n,)."""


class KnnScorer(BaselineScorer):
    """Squared-Euclidean k-NN; the score is the positive fraction among
    the neighbours.

    Neighbour order is distance, then training-row index (stable sort on
    distances), so results are reproducible bit for bit.  When k is not
    given, fit sweeps KNN_K_RANGE with contiguous 5-fold cross-validation
    and keeps the smallest k reaching the best fold-accuracy mean.
    """

    name = "knn"

    def __init__(self, k: int | None = None):
        if k is not None and k not in KNN_K_RANGE:
            raise ValueError(f"k must lie in "
                             f"[{KNN_K_RANGE.start}, {KNN_K_RANGE.stop - 1}]")
        self.k = k
        self.train_x: np.ndarray | None = None
        self.train_y: np.ndarray | None = None

    @staticmethod
    def _proba(train_x, train_y, queries, k):
        k = min(k, len(train_x))
        out = np.empty(len(queries))
        for row, q in enumerate(queries):
            distances = ((train_x - q) ** 2).sum(axis=1)
            nearest = np.argsort(distances, kind="stable")[:k]
            out[row] = train_y[nearest].mean()
        return out

    def fit(self, x, y):
        self.train_x = np.asarray(x, dtype=np.float64)
        self.train_y = np.asarray(y, dtype=np.float64)
        if self.k is None:
            self.k = self._select_k(self.train_x, self.train_y)

    @classmethod
    def _select_k(cls, x, y, folds: int = 5) -> int:
        chunks = np.array_split(np.arange(len(x)), folds)
        best_k, best_acc = KNN_K_RANGE.start, -1.0
        for k in KNN_K_RANGE:
            accs = []
            for held in chunks:
                if len(held) == 0:
                    continue
                rest = np.setdiff1d(np.arange(len(x)), held,
                                    assume_unique=True)
                if len(rest) == 0:
                    continue
                proba = cls._proba(x[rest], y[rest], x[held], k)
                accs.append(((proba > 0.5) == (y[held] > 0.5)).mean())
            acc = float(np.mean(accs)) if accs else 0.0
            if acc > best_acc:
                best_k, best_acc = k, acc
        return best_k

    def predict_proba(self, x):
        if self.train_x is None:
            raise RuntimeError("fit before predicting")
        return self._proba(self.train_x, self.train_y,
                           np.asarray(x, dtype=np.float64), self.k)


class LogisticScorer(BaselineScorer):
    name = "logistic"

    def __init__(self):
        self.model = LogisticRegression()

    def fit(self, x, y):
        self.model.fit(x, y.astype(int))

    def predict_proba(self, x):
        return self.model.predict_proba(x)[:, 1]


class SvmScorer(BaselineScorer):
    name = "svm"

    def __init__(self):
        # probability=True adds the internal calibration fit; random_state
        # pins its fold shuffling so scores are reproducible.
        self.model = SVC(probability=True, random_state=0)

    def fit(self, x, y):
        self.model.fit(x, y.astype(int))

    def predict_proba(self, x):
        return self.model.predict_proba(x)[:, 1]


BASELINES: dict[str, type] = {
    KnnScorer.name: KnnScorer,
    LogisticScorer.name: LogisticScorer,
    SvmScorer.name: SvmScorer,
}


@dataclass
class BaselineModel:
    """A fitted scorer plus the bookkeeping needed to persist it."""

    name: str
    scorer: BaselineScorer


def fit(instances: list[ResolutionInstance], name: str,
        **scorer_args) -> BaselineModel:
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}; "
                         f"choose from {sorted(BASELINES)}")
    x, y = training_matrix(instances)
    scorer = BASELINES[name](**scorer_args)
    scorer.fit(x, y)
    return BaselineModel(name=name, scorer=scorer)


def score_sequence(model: BaselineModel,
                   instance: ResolutionInstance,
                   example: EncodedExample) -> np.ndarray:
    """Spread candidate probabilities over the example's token grid.

    Every token of a candidate word gets that candidate's probability;
    all other tokens score 0, so the array slots into the same ranking
    and metric code as the recurrent model's output.
    """
    scores = np.zeros(example.n_tokens)
    vectors = featurize(instance)
    visible = [(cand, vec) for cand, vec in zip(instance.candidates, vectors)
               if cand.index >= example.word_offset]
    if not visible:
        return scores
    proba = model.scorer.predict_proba(
        np.stack([vec.to_array() for _, vec in visible]))
    for (cand, _), p in zip(visible, proba):
        lo, hi = example.alignment.word_spans[cand.index - example.word_offset]
        scores[lo:hi] = p
    return scores


def select_antecedent(model: BaselineModel,
                      instance: ResolutionInstance) -> Candidate | None:
    """Highest-probability candidate; ties prefer the nearer, then the
    earlier one."""
    if not instance.candidates:
        return None
    proba = model.scorer.predict_proba(
        np.stack([vec.to_array() for vec in featurize(instance)]))
    keyed = sorted(
        zip(proba, instance.candidates),
        key=lambda item: (-item[0],
                          abs(instance.anaphor_index - item[1].index),
                          item[1].index))
    return keyed[0][1]


# ---------------------------------------------------------------------------
# Persistence

BASELINE_FILE_VERSION = 1


def save_baseline(model: BaselineModel, path: str | Path) -> None:
    """Write a fitted baseline as JSON.

    k-NN and logistic weights are stored transparently; the SVM has no
    compact transparent form and is pickled (base64) inside the JSON.
    """
    payload: dict = {"version": BASELINE_FILE_VERSION, "model": model.name,
                     "features": list(FEATURE_NAMES)}
    scorer = model.scorer
    if isinstance(scorer, KnnScorer):
        payload["k"] = scorer.k
        payload["train_x"] = scorer.train_x.tolist()
        payload["train_y"] = scorer.train_y.tolist()
    elif isinstance(scorer, LogisticScorer):
        payload["coef"] = scorer.model.coef_[0].tolist()
        payload["intercept"] = float(scorer.model.intercept_[0])
    elif isinstance(scorer, SvmScorer):
        payload["pickle_b64"] = base64.b64encode(
            pickle.dumps(scorer.model)).decode("ascii")
    else:
        raise ValueError(f"cannot persist scorer {type(scorer).__name__}")
    Path(path).write_text(json.dumps(payload, indent=1) + "\n",
                          encoding="utf-8")


def load_baseline(path: str | Path) -> BaselineModel:
    """Inverse of save_baseline.  Only load files you wrote yourself:
    the SVM payload is a pickle."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != BASELINE_FILE_VERSION:
        raise ValueError(f"unsupported baseline file version "
                         f"{payload.get('version')}")
    name = payload["model"]
    if name == "knn":
        scorer = KnnScorer(k=payload["k"])
        scorer.train_x = np.asarray(payload["train_x"], dtype=np.float64)
        scorer.train_y = np.asarray(payload["train_y"], dtype=np.float64)
    elif name == "logistic":
        scorer = LogisticScorer()
        scorer.model.coef_ = np.asarray([payload["coef"]])
        scorer.model.intercept_ = np.asarray([payload["intercept"]])
        scorer.model.classes_ = np.array([0, 1])
    elif name == "svm":
        scorer = SvmScorer()
        scorer.model = pickle.loads(
            base64.b64decode(payload["pickle_b64"]))
    else:
        raise ValueError(f"unknown baseline {name!r}")
    return BaselineModel(name=name, scorer=scorer)
