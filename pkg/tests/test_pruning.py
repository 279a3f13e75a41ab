import math

import numpy as np
import pytest

from topobetti.datasets import LabeledCloud
from topobetti.errors import WouldEmptyLayer
from topobetti.network import cnn_spec, forward, init_network, mlp_spec
from topobetti.pruning import (FilterScore, ScoreConfig, _score_one, evaluate, filter_betti_scores, mask_filters,
                               percentile_threshold, prune_filters, removed_param_count, scores_frame)
from topobetti.topology import BettiConfig, BettiVector
from topobetti.training import TrainConfig
from tests.helpers import circle_cloud, random_images


def small_cnn(seed=0):
    # 30 + 112 + 40 + 27 = 209 parameters
    return init_network(cnn_spec(input_shape=(1, 10, 10), classes=3, channels=(3, 4), hidden=8, init_seed=seed))


def fake_scores(net, totals):
    """FilterScores with the given total for every (layer, filter) key; missing keys score 0"""
    scores = []
    for layer in net.conv_layers():
        for f in range(net.spec.layers[layer].out_channels):
            total = totals.get((layer, f), 0)
            scores.append(FilterScore(layer, f, BettiVector((total,), 1.0, 0), 1.0, 10))
    return scores


class TestScoring:

    def test_one_score_per_filter(self):
        net = small_cnn()
        scores = filter_betti_scores(net, random_images(20), ScoreConfig(sample_n=10))
        assert [(s.layer, s.filter) for s in scores] == [(0, 0), (0, 1), (0, 2), (2, 0), (2, 1), (2, 2), (2, 3)]
        assert all(s.m is not None and s.m <= 10 for s in scores)

    def test_deterministic(self):
        net, data = small_cnn(), random_images(20)
        a = filter_betti_scores(net, data, ScoreConfig(sample_n=10, seed=3))
        b = filter_betti_scores(net, data, ScoreConfig(sample_n=10, seed=3))
        assert scores_frame(a).equals(scores_frame(b))

    def test_frame_columns_follow_score_dimension(self):
        net, data = small_cnn(), random_images(20)
        scores = filter_betti_scores(net, data, ScoreConfig(sample_n=10))
        assert list(scores_frame(scores).columns) == ["layer", "filter", "b0", "b1", "total", "eps", "m"]
        assert "b2" in scores_frame(scores, max_dim=2).columns
        assert scores_frame(scores)["b1"].notna().all()

    def test_dead_filter_scores_one_component(self):
        net = small_cnn()
        w, b = net.params[0]
        w[1] = 0.0
        b[1] = 0.0
        scores = filter_betti_scores(net, random_images(20), ScoreConfig(sample_n=10))
        assert scores[1].betti.betti == (1, 0)

    def test_circle_and_line_feature_spaces(self):
        cfg = BettiConfig(subsample=None, quantile=0.15, max_dim=1)
        circle = _score_one((0, 0, circle_cloud(60, noise=0.0).points, cfg))
        line = _score_one((0, 1, np.linspace(0.0, 1.0, 60)[:, None] * np.array([[1.0, 2.0]]), cfg))
        assert circle.betti.betti == (1, 1)
        assert line.betti.betti == (1, 0)
        assert circle.total > line.total

    def test_no_conv_layers(self):
        net = init_network(mlp_spec(input_dim=2, hidden_layers=1, width=3))
        with pytest.raises(ValueError):
            filter_betti_scores(net, LabeledCloud(np.zeros((4, 2)), np.zeros(4)), ScoreConfig())

    def test_failed_filter_is_unscored(self):
        cfg = BettiConfig(subsample=None, quantile=0.5, max_dim=1, simplex_budget=2)
        score = _score_one((2, 3, np.random.default_rng(0).normal(size=(5, 4)), cfg))
        assert score.betti is None and score.total is None
        assert scores_frame([score]).iloc[0]["layer"] == 2


class TestParamAccounting:

    def test_small_cnn_total(self):
        assert small_cnn().num_params() == 209

    def test_removal_count_matches_pruned_network(self):
        net = small_cnn()
        removed = {(0, 1), (2, 2)}
        assert removed_param_count(net, removed) == 73
        pruned, report = prune_filters(net, fake_scores(net, {key: 500 for key in removed}), 300)
        assert pruned.num_params() == 136
        assert report.params_before - report.params_after == report.params_removed_expected == 73
        assert report.removed == [(0, 1), (2, 2)]
        assert pruned.spec.shapes()[0] == (2, 8, 8)
        assert pruned.spec.layers[2].in_channels == 2


class TestPruneFilters:

    def test_infinite_threshold_changes_nothing(self):
        net = small_cnn()
        x = random_images(6).features
        pruned, report = prune_filters(net, fake_scores(net, {(0, 0): 10 ** 6}), math.inf)
        assert report.removed == []
        assert np.array_equal(forward(net, x).probabilities, forward(pruned, x).probabilities)

    def test_pruned_matches_masked(self):
        net = small_cnn(seed=5)
        removed = {(0, 0), (2, 1), (2, 3)}
        pruned, _ = prune_filters(net, fake_scores(net, {key: 400 for key in removed}), 300)
        masked = mask_filters(net, removed)
        x = random_images(8, seed=2).features
        np.testing.assert_allclose(forward(pruned, x).logits, forward(masked, x).logits, atol=1e-6)

    def test_would_empty_layer(self):
        net = small_cnn()
        before = [p[0].copy() for p in net.params if p is not None]
        scores = fake_scores(net, {(0, 0): 400, (0, 1): 400, (0, 2): 400})
        with pytest.raises(WouldEmptyLayer):
            prune_filters(net, scores, 300)
        assert all(np.array_equal(a, p[0]) for a, p in zip(before, [p for p in net.params if p is not None]))

    def test_unscored_filters_are_kept(self):
        net = small_cnn()
        scores = fake_scores(net, {(0, 0): 400})
        scores[1] = FilterScore(0, 1, None, None, None, error="SimplexBudgetExceeded")
        _, report = prune_filters(net, scores, 300)
        assert report.removed == [(0, 0)]
        assert report.to_dict()["unscored"] == [[0, 1]]

    def test_incomplete_scores(self):
        net = small_cnn()
        with pytest.raises(ValueError):
            prune_filters(net, fake_scores(net, {})[:-1], 300)

    def test_report_with_evaluation_and_retraining(self):
        net = small_cnn()
        data = random_images(12, seed=4)
        scores = fake_scores(net, {(2, 0): 400})
        pruned, report = prune_filters(net, scores, 300, data=data, retrain_data=data,
                                       retrain_cfg=TrainConfig(epochs=1))
        assert report.retrain_epochs == 1
        assert 0.0 <= report.accuracy_after <= 1.0
        assert report.latency_before > 0.0
        assert pruned.spec.layers[2].out_channels == 3

    def test_percentile_threshold(self):
        net = small_cnn()
        scores = fake_scores(net, {(0, 0): 10, (0, 1): 20, (0, 2): 30, (2, 0): 40, (2, 1): 50, (2, 2): 60, (2, 3): 70})
        assert percentile_threshold(scores, 50) == 40.0


class TestEvaluate:

    def test_deterministic_accuracy(self):
        net, data = small_cnn(), random_images(20)
        assert evaluate(net, data).accuracy == evaluate(net, data).accuracy
        assert evaluate(net, data).params == 209

    def test_zero_network_predicts_first_class(self):
        net = small_cnn()
        for p in net.params:
            if p is not None:
                p[0][...] = 0.0
        data = LabeledCloud(np.zeros((10, 1, 10, 10)), [0, 1, 2, 0, 1, 2, 0, 1, 2, 0])
        assert evaluate(net, data).accuracy == pytest.approx(0.4)

    def test_degraded_network_is_at_chance(self):
        net = init_network(cnn_spec(input_shape=(1, 10, 10), classes=10, channels=(3, 4), hidden=8))
        for p in net.params:
            if p is not None:
                p[0][...] = 0.0
        data = LabeledCloud(np.zeros((1000, 1, 10, 10)), np.arange(1000) % 10)
        assert evaluate(net, data).accuracy == pytest.approx(0.1)

    def test_untrained_network_is_near_chance(self):
        net = init_network(cnn_spec(input_shape=(1, 10, 10), classes=10, channels=(3, 4), hidden=8, init_seed=5))
        rng = np.random.default_rng(5)
        data = LabeledCloud(rng.uniform(0.0, 1.0, size=(2000, 1, 10, 10)), rng.integers(0, 10, size=2000))
        assert abs(evaluate(net, data).accuracy - 0.1) < 0.04
