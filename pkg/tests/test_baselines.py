import json

import numpy as np
import pytest

from anaseq.baselines import (BASELINES, FEATURE_NAMES, KNN_K_RANGE,
                              BaselineModel, KnnScorer, LogisticScorer,
                              SvmScorer, featurize, fit, load_baseline,
                              save_baseline, score_sequence,
                              select_antecedent, training_matrix)
from anaseq.candidates import (Candidate, MorphFeatures, ResolutionInstance,
                               WordItem, build_instances)
from anaseq.encoding import VariantFlags, assemble

from conftest import make_example

MS = MorphFeatures(gender="masc", number="sing", person="third")
FS = MorphFeatures(gender="fem", number="sing", person="third")
MS_DEF = MorphFeatures(gender="masc", number="sing",
                       person="third", definite=True)


def toy_instance(candidates, anaphor_morph=MS, anaphor_index=5,
                 gold_index=None, sentences=(0, 0, 0, 1, 1, 1)):
    words = [WordItem(surface=f"w{i}") for i in range(len(sentences))]
    return ResolutionInstance(
        doc_id="d", instance_id="d:0", paragraph=words,
        sentence_indices=list(sentences), anaphor_index=anaphor_index,
        anaphor_span=None, anaphor_morph=anaphor_morph,
        candidates=candidates, gold_index=gold_index)


class TestFeaturize:
    def test_hand_oracle(self):
        instance = toy_instance([
            Candidate(index=0, surface="w0", morph=MS, sentence_index=0),
            Candidate(index=3, surface="w3", morph=FS, sentence_index=1),
        ])
        first, second = [v.to_array() for v in featurize(instance)]
        #            num gen def dist p1 p2 p3 p?
        assert first.tolist() == [1, 1, 0, 1, 0, 0, 1, 0]
        assert second.tolist() == [1, 0, 0, 0, 0, 0, 1, 0]

    def test_unknown_features_never_agree(self):
        vague = MorphFeatures()  # everything unknown
        instance = toy_instance(
            [Candidate(index=0, surface="w0", morph=vague, sentence_index=0)],
            anaphor_morph=vague)
        vec = featurize(instance)[0]
        assert vec.number_agree == 0.0
        assert vec.gender_agree == 0.0
        assert vec.person_unknown == 1.0

    def test_definite_flag(self):
        instance = toy_instance(
            [Candidate(index=0, surface="w0", morph=MS_DEF,
                       sentence_index=0)])
        assert featurize(instance)[0].definite == 1.0

    def test_vector_matches_feature_names(self):
        instance = toy_instance(
            [Candidate(index=0, surface="w0", morph=MS, sentence_index=0)])
        assert featurize(instance)[0].to_array().shape == (len(FEATURE_NAMES),)


class TestTrainingMatrix:
    def test_labels_mark_the_gold_rows(self):
        instance = toy_instance(
            [Candidate(index=0, surface="w0", morph=MS, sentence_index=0),
             Candidate(index=3, surface="w3", morph=FS, sentence_index=1)],
            gold_index=3)
        x, y = training_matrix([instance, instance])
        assert x.shape == (4, len(FEATURE_NAMES))
        assert y.tolist() == [0, 1, 0, 1]

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            training_matrix([toy_instance([])])


class TestKnnScorer:
    def test_k_outside_sweep_range_rejected(self):
        for bad in (0, 1, 9, 31, 100, -5):
            with pytest.raises(ValueError):
                KnnScorer(k=bad)
        KnnScorer(k=KNN_K_RANGE.start)
        KnnScorer(k=KNN_K_RANGE.stop - 1)
        KnnScorer(k=None)

    def test_hand_oracle(self):
        # distances from the origin are 0,1,4,...,64; ten neighbours of
        # twelve, four of them positive
        train_x = np.array([[float(i)] for i in range(12)])
        train_y = np.array([1.0] * 4 + [0.0] * 8)
        scorer = KnnScorer(k=10)
        scorer.fit(train_x, train_y)
        assert scorer.predict_proba(np.array([[0.0]])).tolist() == [0.4]

    def test_distance_ties_break_on_training_index(self):
        # rows 9, 10, 11 all sit at squared distance 81; only the
        # lowest-indexed one may join the ten neighbours
        train_x = np.array([[float(i), 0.0] for i in range(9)]
                           + [[9.0, 0.0], [0.0, 9.0], [-9.0, 0.0]])
        train_y = np.zeros(12)
        train_y[9] = 1.0
        scorer = KnnScorer(k=10)
        scorer.fit(train_x, train_y)
        assert scorer.predict_proba(np.array([[0.0, 0.0]])).tolist() == [0.1]

    def test_small_training_set_uses_all_points(self):
        scorer = KnnScorer(k=10)
        scorer.fit(np.array([[0.0], [1.0], [2.0]]),
                   np.array([1.0, 1.0, 0.0]))
        got = scorer.predict_proba(np.array([[0.0]]))
        assert abs(got[0] - 2.0 / 3.0) < 1e-15

    def test_predict_before_fit_rejected(self):
        with pytest.raises(RuntimeError):
            KnnScorer(k=10).predict_proba(np.zeros((1, 2)))

    def test_k_sweep_is_deterministic_and_in_range(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(80, 4))
        y = (x[:, 0] + 0.3 * rng.normal(size=80) > 0).astype(float)
        first = KnnScorer()
        first.fit(x, y)
        second = KnnScorer()
        second.fit(x.copy(), y.copy())
        assert first.k == second.k
        assert first.k in KNN_K_RANGE


class TestFitAndRegistry:
    def test_registry_contents(self):
        assert set(BASELINES) == {"knn", "logistic", "svm"}

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown baseline"):
            fit([toy_instance([Candidate(0, "w0", MS, 0)], gold_index=0)],
                "forest")

    def test_fit_each_baseline(self, synth_bundle):
        instances = []
        for doc in synth_bundle["docs"][:3]:
            built, _ = build_instances(doc, [synth_bundle["tagger"]],
                                       synth_bundle["analyzer"])
            instances.extend(built)
        for name in BASELINES:
            model = fit(instances, name)
            assert model.name == name
            proba = model.scorer.predict_proba(
                training_matrix(instances)[0][:5])
            assert proba.shape == (5,)
            assert np.all((proba >= 0) & (proba <= 1))


class FixedScorer:
    """Returns canned probabilities, in call order."""

    def __init__(self, proba):
        self.proba = list(proba)

    def predict_proba(self, x):
        assert len(x) == len(self.proba)
        return np.array(self.proba)


class TestScoreSequence:
    def test_probability_covers_candidate_tokens(self, synth_bundle):
        doc = synth_bundle["docs"][0]
        instances, _ = build_instances(doc, [synth_bundle["tagger"]],
                                       synth_bundle["analyzer"])
        instance = instances[0]
        example = assemble(instance, synth_bundle["provider"],
                           VariantFlags())
        proba = [0.1 * (i + 1) for i in range(len(instance.candidates))]
        model = BaselineModel(name="fake", scorer=FixedScorer(proba))
        scores = score_sequence(model, instance, example)
        covered = np.zeros(example.n_tokens, dtype=bool)
        for cand, p in zip(instance.candidates, proba):
            lo, hi = example.alignment.word_spans[cand.index]
            assert np.all(scores[lo:hi] == p)
            covered[lo:hi] = True
        assert not scores[~covered].any()

    def test_window_invisible_candidates_are_skipped(self):
        instance = toy_instance(
            [Candidate(index=0, surface="w0", morph=MS, sentence_index=0),
             Candidate(index=3, surface="w3", morph=FS, sentence_index=1)],
            anaphor_index=5)
        example = make_example(4, anaphor_word=3, gold_word=None,
                               candidate_words=[1])
        example.word_offset = 2  # paragraph word 2 starts the window
        model = BaselineModel(name="fake", scorer=FixedScorer([0.7]))
        scores = score_sequence(model, instance, example)
        assert scores.tolist() == [0.0, 0.7, 0.0, 0.0]


class TestSelectAntecedent:
    CANDS = [Candidate(index=1, surface="w1", morph=MS, sentence_index=0),
             Candidate(index=5, surface="w5", morph=FS, sentence_index=1)]

    def test_highest_probability_wins(self):
        instance = toy_instance(self.CANDS, anaphor_index=3,
                                sentences=(0, 0, 0, 1, 1, 1, 1))
        model = BaselineModel("fake", FixedScorer([0.2, 0.9]))
        assert select_antecedent(model, instance).index == 5

    def test_probability_ties_prefer_the_nearer_then_earlier(self):
        # both candidates are two words from the anaphor
        instance = toy_instance(self.CANDS, anaphor_index=3,
                                sentences=(0, 0, 0, 1, 1, 1, 1))
        model = BaselineModel("fake", FixedScorer([0.5, 0.5]))
        assert select_antecedent(model, instance).index == 1

    def test_no_candidates(self):
        instance = toy_instance([], anaphor_index=3,
                                sentences=(0, 0, 0, 1))
        model = BaselineModel("fake", FixedScorer([]))
        assert select_antecedent(model, instance) is None


class TestPersistence:
    def fitted(self, name, synth_bundle):
        instances = []
        for doc in synth_bundle["docs"][:3]:
            built, _ = build_instances(doc, [synth_bundle["tagger"]],
                                       synth_bundle["analyzer"])
            instances.extend(built)
        return fit(instances, name), training_matrix(instances)[0][:6]

    @pytest.mark.parametrize("name", ["knn", "logistic", "svm"])
    def test_round_trip_preserves_probabilities(self, name, synth_bundle,
                                                tmp_path):
        model, queries = self.fitted(name, synth_bundle)
        path = tmp_path / f"{name}.json"
        save_baseline(model, path)
        loaded = load_baseline(path)
        assert loaded.name == name
        assert np.allclose(loaded.scorer.predict_proba(queries),
                           model.scorer.predict_proba(queries),
                           atol=1e-12)

    def test_knn_payload_is_transparent(self, synth_bundle, tmp_path):
        model, _ = self.fitted("knn", synth_bundle)
        path = tmp_path / "knn.json"
        save_baseline(model, path)
        payload = json.loads(path.read_text())
        assert payload["model"] == "knn"
        assert payload["k"] == model.scorer.k
        assert payload["features"] == list(FEATURE_NAMES)
        assert np.array_equal(np.asarray(payload["train_x"]),
                              model.scorer.train_x)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"version": 0, "model": "knn"}))
        with pytest.raises(ValueError, match="version"):
            load_baseline(path)

    def test_unknown_model_rejected(self, tmp_path):
        path = tmp_path / "odd.json"
        path.write_text(json.dumps({"version": 1, "model": "forest"}))
        with pytest.raises(ValueError, match="unknown baseline"):
            load_baseline(path)