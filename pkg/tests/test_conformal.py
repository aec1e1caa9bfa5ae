import math

import numpy as np
import pytest

from webcp.conformal import (
    ALL_LABELS,
    ConformalThreshold,
    MonteCarloConfig,
    PredictionSet,
    ScoreTable,
    mc_threshold,
    nonconformity_scores,
    predict_set,
    predict_sets,
    sample_calibration_iteration,
    standard_threshold,
)
from webcp.embeddings import EmbeddingMatrix
from webcp.errors import CalibrationError
from webcp.plausibility import AmbiguousCalibrationSet, PlausibilityVector
from webcp.rng import substream

from oracles import mc_threshold_oracle, standard_quantile_oracle


def one_hot_set(scores_by_id: dict, label_by_id: dict, class_ids) -> AmbiguousCalibrationSet:
    entries = []
    for ex_id, label in label_by_id.items():
        lam = {y: 0.0 for y in class_ids}
        lam[label] = 1.0
        entries.append(PlausibilityVector(ex_id, lam, 0.0))
    return AmbiguousCalibrationSet(entries, list(class_ids))


def table_from(scores_by_id: dict, class_ids) -> ScoreTable:
    return ScoreTable(class_ids=list(class_ids), rows=scores_by_id)


class TestNonconformityScores:
    def _stores(self, cosines, t):
        # image at e0; labels constructed to hit the requested cosines exactly
        dim = len(cosines) + 1
        img = np.zeros(dim, dtype=np.float32)
        img[0] = 1.0
        labels = []
        for i, c in enumerate(cosines):
            v = np.zeros(dim)
            v[0] = c
            v[i + 1] = math.sqrt(1 - c * c)
            labels.append(v)
        images = EmbeddingMatrix(dim=dim, ids=["img"], data=img.reshape(1, -1))
        label_m = EmbeddingMatrix(dim=dim, ids=[f"c{i}" for i in range(len(cosines))],
                                  data=np.stack(labels).astype(np.float32))
        return nonconformity_scores(images, label_m, t)

    def test_equal_cosines_symmetric(self):
        table = self._stores([0.5, 0.5], 0.07)
        assert table.rows["img"]["c0"] == pytest.approx(0.5, abs=1e-6)
        assert table.rows["img"]["c1"] == pytest.approx(0.5, abs=1e-6)

    def test_dominant_cosine_closed_form(self):
        table = self._stores([1.0, 0.0], 0.1)
        p = 1 / (1 + math.exp(-10))
        assert table.rows["img"]["c0"] == pytest.approx(1 - p, rel=1e-6)
        assert table.rows["img"]["c1"] == pytest.approx(p, rel=1e-6)

    def test_scores_sum_to_classes_minus_one(self):
        table = self._stores([0.9, 0.3, 0.1, -0.2], 0.07)
        assert sum(table.rows["img"].values()) == pytest.approx(3.0, abs=1e-9)

    def test_probabilities_retained(self):
        table = self._stores([0.5, 0.1], 0.07)
        assert table.probabilities is not None
        probs = table.probabilities["img"]
        assert probs["c0"] + probs["c1"] == pytest.approx(1.0, abs=1e-12)


class TestSampler:
    def test_certain_junk_never_appears(self):
        amb = AmbiguousCalibrationSet(
            [PlausibilityVector("e", {"a": 0.0, "b": 0.0}, 1.0)], ["a", "b"])
        table = table_from({"e": {"a": 0.1, "b": 0.2}}, ["a", "b"])
        for m in range(50):
            assert sample_calibration_iteration(amb, table, substream(1, m)) == []

    def test_one_hot_always_appears_with_that_class(self):
        amb = one_hot_set({}, {"e": "b"}, ["a", "b"])
        table = table_from({"e": {"a": 0.9, "b": 0.2}}, ["a", "b"])
        for m in range(50):
            sampled = sample_calibration_iteration(amb, table, substream(1, m))
            assert len(sampled) == 1
            assert sampled[0].class_id == "b"
            assert sampled[0].score == 0.2

    def test_empirical_frequencies_match_probabilities(self):
        # lambda = (0.5, 0.25), junk 0.25: keep rate 0.75, labels 2:1 among kept
        amb = AmbiguousCalibrationSet(
            [PlausibilityVector("e", {"a": 0.5, "b": 0.25}, 0.25)], ["a", "b"])
        table = table_from({"e": {"a": 0.1, "b": 0.2}}, ["a", "b"])
        rng = substream(12345, 0)
        draws = 100_000
        kept = {"a": 0, "b": 0}
        for _ in range(draws):
            sampled = sample_calibration_iteration(amb, table, rng)
            if sampled:
                kept[sampled[0].class_id] += 1
        total_kept = kept["a"] + kept["b"]
        assert total_kept / draws == pytest.approx(0.75, abs=0.01)
        assert kept["a"] / total_kept == pytest.approx(2 / 3, abs=0.01)
        assert kept["b"] / total_kept == pytest.approx(1 / 3, abs=0.01)

    def test_deterministic_given_stream(self):
        rng_a = substream(9, 4)
        rng_b = substream(9, 4)
        amb = AmbiguousCalibrationSet(
            [PlausibilityVector(f"e{i}", {"a": 0.4, "b": 0.3}, 0.3) for i in range(20)],
            ["a", "b"])
        table = table_from({f"e{i}": {"a": 0.1, "b": 0.6} for i in range(20)}, ["a", "b"])
        assert sample_calibration_iteration(amb, table, rng_a) == \
               sample_calibration_iteration(amb, table, rng_b)


class TestMcThreshold:
    def test_spec_example_m1(self):
        scores = {"e1": 0.1, "e2": 0.2, "e3": 0.3, "e4": 0.4}
        amb = one_hot_set({}, {e: "y" for e in scores}, ["y"])
        table = table_from({e: {"y": s} for e, s in scores.items()}, ["y"])
        th = mc_threshold(amb, table, MonteCarloConfig(1, 0.25, 0))
        assert th.gamma == 0.3  # (k+1)/5 > 0.75 first met at k=3
        assert th.iteration_sizes == [4]

    def test_identical_iterations_match_m1(self):
        scores = {"e1": 0.1, "e2": 0.2, "e3": 0.3, "e4": 0.4}
        amb = one_hot_set({}, {e: "y" for e in scores}, ["y"])
        table = table_from({e: {"y": s} for e, s in scores.items()}, ["y"])
        g1 = mc_threshold(amb, table, MonteCarloConfig(1, 0.25, 0)).gamma
        g5 = mc_threshold(amb, table, MonteCarloConfig(5, 0.25, 0)).gamma
        assert g1 == g5 == 0.3

    def test_tiny_alpha_selects_max_observed_score(self):
        # with the "+1" smoothing the averaged term equals 1 at the largest
        # observed score, so any alpha > 0 is satisfied there
        scores = {"e1": 0.1, "e2": 0.9}
        amb = one_hot_set({}, {e: "y" for e in scores}, ["y"])
        table = table_from({e: {"y": s} for e, s in scores.items()}, ["y"])
        th = mc_threshold(amb, table, MonteCarloConfig(3, 1e-12, 0))
        assert th.gamma == 0.9

    def test_alpha_zero_limit_forces_sentinel_in_oracle(self):
        # strict inequality is unattainable at any finite candidate when alpha == 0
        assert mc_threshold_oracle([[0.1, 0.2]], 0.0) == ALL_LABELS

    def test_empty_iteration_contributes_unit_term(self):
        # one always-junk entry plus one certain entry: empty iterations mix in
        amb = AmbiguousCalibrationSet(
            [PlausibilityVector("junk", {"y": 0.0}, 1.0),
             PlausibilityVector("keep", {"y": 0.5}, 0.5)], ["y"])
        table = table_from({"junk": {"y": 0.9}, "keep": {"y": 0.4}}, ["y"])
        th = mc_threshold(amb, table, MonteCarloConfig(40, 0.3, 5))
        # oracle over the same sampled iterations
        iterations = [
            [s.score for s in sample_calibration_iteration(amb, table, substream(5, m))]
            for m in range(1, 41)
        ]
        assert th.gamma == mc_threshold_oracle(iterations, 0.3)

    def test_all_iterations_empty_is_calibration_error(self):
        amb = AmbiguousCalibrationSet([PlausibilityVector("e", {"y": 0.0}, 1.0)], ["y"])
        table = table_from({"e": {"y": 0.5}}, ["y"])
        with pytest.raises(CalibrationError, match="junk"):
            mc_threshold(amb, table, MonteCarloConfig(10, 0.1, 0))

    def test_determinism_and_monotonicity(self):
        rng = np.random.default_rng(3)
        n, class_ids = 40, ["a", "b", "c"]
        rows, entries = {}, []
        for i in range(n):
            ex = f"e{i:02d}"
            rows[ex] = dict(zip(class_ids, rng.random(3).tolist()))
            lam_raw = rng.dirichlet(np.ones(4))
            lam = dict(zip(class_ids, lam_raw[:3].tolist()))
            entries.append(PlausibilityVector(ex, lam, float(lam_raw[3])))
        amb = AmbiguousCalibrationSet(entries, class_ids)
        table = table_from(rows, class_ids)

        t1 = mc_threshold(amb, table, MonteCarloConfig(25, 0.2, 11))
        t2 = mc_threshold(amb, table, MonteCarloConfig(25, 0.2, 11))
        assert t1.gamma == t2.gamma and t1.iteration_sizes == t2.iteration_sizes

        gammas = [mc_threshold(amb, table, MonteCarloConfig(25, a, 11)).gamma
                  for a in (0.5, 0.4, 0.3, 0.2, 0.1, 0.05)]
        assert gammas == sorted(gammas)  # non-decreasing in 1 - alpha

    def test_reduction_property_oracle_equivalence(self):
        rng = np.random.default_rng(17)
        for trial in range(50):
            n = int(rng.integers(1, 51))
            scores = rng.random(n).round(6)
            alpha = float(rng.choice([0.05, 0.1, 0.2, 0.25, 0.33, 0.5, 0.75]))
            label_by_id = {f"e{i:02d}": "y" for i in range(n)}
            amb = one_hot_set({}, label_by_id, ["y"])
            table = table_from({f"e{i:02d}": {"y": float(scores[i])} for i in range(n)}, ["y"])
            expected = mc_threshold_oracle([list(scores)], alpha)
            for m in (1, 10):
                got = mc_threshold(amb, table, MonteCarloConfig(m, alpha, trial)).gamma
                assert got == expected, (trial, n, alpha, m)

    def test_conservative_flag_uses_weak_inequality(self):
        scores = {"e1": 0.1, "e2": 0.2, "e3": 0.3, "e4": 0.4}
        amb = one_hot_set({}, {e: "y" for e in scores}, ["y"])
        table = table_from({e: {"y": s} for e, s in scores.items()}, ["y"])
        # at alpha = 0.2: strict needs (k+1)/5 > 0.8 -> k = 4; weak accepts k = 3
        strict = mc_threshold(amb, table, MonteCarloConfig(1, 0.2, 0)).gamma
        weak = mc_threshold(amb, table, MonteCarloConfig(1, 0.2, 0), conservative=True).gamma
        assert strict == 0.4 and weak == 0.3


class TestStandardThreshold:
    def test_spec_examples(self):
        assert standard_threshold([0.1, 0.2, 0.3, 0.4], 0.25) == 0.4
        assert standard_threshold([0.2, 0.8], 0.5) == 0.8
        assert standard_threshold([0.5], 0.1) == ALL_LABELS

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            standard_threshold([], 0.1)

    def test_matches_order_statistic_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 51))
            scores = rng.random(n).tolist()
            alpha = float(rng.choice(np.round(np.arange(0.05, 1.0, 0.05), 2)))
            assert standard_threshold(scores, alpha) == standard_quantile_oracle(scores, alpha)


class TestPredictionSets:
    def test_inclusion(self):
        s = predict_set("e", {"a": 0.2, "b": 0.5}, 0.3, ["a", "b"])
        assert s.members == ["a"]

    def test_sentinel_includes_all(self):
        s = predict_set("e", {"a": 0.2, "b": 0.5}, ALL_LABELS, ["a", "b"])
        assert s.members == ["a", "b"]

    def test_empty_set_permitted(self):
        s = predict_set("e", {"a": 0.2, "b": 0.5}, 0.0, ["a", "b"])
        assert s.members == []

    def test_boundary_is_inclusive(self):
        s = predict_set("e", {"a": 0.3, "b": 0.5}, 0.3, ["a", "b"])
        assert s.members == ["a"]


class TestPersistence:
    def test_threshold_round_trip(self, tmp_path):
        th = ConformalThreshold(gamma=0.25, alpha=0.1, m_samples=10, seed=3,
                                iteration_sizes=[4, 5], method="webcp")
        path = tmp_path / "th.json"
        th.save(path)
        loaded = ConformalThreshold.load(path)
        assert loaded == th

    def test_sentinel_round_trip_as_null(self, tmp_path):
        th = ConformalThreshold(gamma=ALL_LABELS, alpha=0.1, method="standard")
        path = tmp_path / "th.json"
        th.save(path)
        assert ConformalThreshold.load(path).covers_all
        assert '"gamma": null' in path.read_text()

    def test_score_table_round_trip(self, tmp_path):
        table = ScoreTable(class_ids=["a", "b"],
                           rows={"e": {"a": 0.25, "b": 0.75}},
                           probabilities={"e": {"a": 0.75, "b": 0.25}})
        path = tmp_path / "scores.jsonl"
        table.save(path)
        loaded = ScoreTable.load(path)
        assert loaded.rows == table.rows
        assert loaded.probabilities == table.probabilities

    def test_prediction_set_round_trip(self, tmp_path):
        from webcp.conformal import load_prediction_sets, save_prediction_sets
        table = ScoreTable(class_ids=["a", "b"], rows={"e": {"a": 0.1, "b": 0.9}})
        sets = predict_sets(table, ConformalThreshold(gamma=0.5, alpha=0.2))
        path = tmp_path / "sets.jsonl"
        save_prediction_sets(sets, path)
        loaded = load_prediction_sets(path)
        assert loaded == sets
