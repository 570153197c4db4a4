"""Tests for the Monte-Carlo diffusion classifier."""

import json

import numpy as np
import pytest

from app.utils.errors import DivergenceError, FrozenModelError, ShapeError
from ml.core.diffusion import PairBatch, add_noise, sample_pair_batch
from ml.inference.classifier import (
    ClassifierConfig,
    ErrorMatrix,
    class_error,
    classify,
    classify_many,
    error_matrix,
    posterior,
    posterior_logsumexp,
    write_reports_jsonl,
)
from tests.stubs import PerfectOracleDenoiser, ZeroDenoiser


def test_perfect_denoiser_has_zero_error(schedule):
    x = np.array([0.5, -1.0, 2.0])
    pairs = sample_pair_batch(16, schedule.T, 3, np.random.default_rng(0))
    pairs = PairBatch(pairs.ts, pairs.eps.astype(np.float64))
    oracle = PerfectOracleDenoiser(x, schedule, cond_dim=2)
    assert class_error(x, np.zeros(2), pairs, oracle, schedule) < 1e-20


def test_zero_denoiser_error_is_mean_noise_energy(schedule):
    rng = np.random.default_rng(1)
    pairs = sample_pair_batch(8, schedule.T, 3, rng)
    expected = 0.0
    for i in range(8):
        expected += sum(float(v) ** 2 for v in pairs.eps[i]) / 3
    expected /= 8
    got = class_error(np.ones(3), np.zeros(2), pairs, ZeroDenoiser(3, 2), schedule)
    assert got == pytest.approx(expected, rel=1e-6)


def test_class_error_accepts_pair_lists(small_backbone, schedule):
    pairs = sample_pair_batch(4, schedule.T, small_backbone.latent_dim, np.random.default_rng(2))
    x = np.zeros(small_backbone.latent_dim, dtype=np.float32)
    c = np.zeros(small_backbone.cond_dim, dtype=np.float32)
    assert class_error(x, c, pairs.to_pairs(), small_backbone, schedule) == class_error(
        x, c, pairs, small_backbone, schedule
    )


def test_posterior_two_classes():
    np.testing.assert_allclose(posterior([1.0, 2.0]), [0.7310585786, 0.2689414214], rtol=1e-9)


def test_posterior_relative_and_logsumexp_agree():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        errors = rng.uniform(0, 5, size=rng.integers(1, 9))
        p, q = posterior(errors), posterior_logsumexp(errors)
        assert np.argmax(p) == np.argmax(q) == np.argmin(errors)
        np.testing.assert_allclose(p, q, atol=1e-6)
        assert p.sum() == pytest.approx(1.0, abs=1e-6)


def test_posterior_shift_invariance():
    rng = np.random.default_rng(4)
    errors = rng.uniform(0, 2, size=5)
    np.testing.assert_allclose(posterior(errors + 123.0), posterior(errors), atol=1e-7)


def test_posterior_extremes():
    p = posterior([0.0, 1000.0])
    assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0)
    assert posterior([3.0])[0] == 1.0
    with pytest.raises(DivergenceError):
        posterior([np.nan, 1.0])
    with pytest.raises(ValueError):
        posterior([])


def test_error_matrix_validation():
    with pytest.raises(ShapeError):
        ErrorMatrix(np.zeros(3))
    with pytest.raises(ValueError):
        ErrorMatrix(np.array([[-1.0]]))
    np.testing.assert_allclose(ErrorMatrix(np.array([[1.0, 3.0], [2.0, 2.0]])).means, [2.0, 2.0])


def test_shared_pairs_serve_every_class(small_backbone, schedule):
    x = np.ones(small_backbone.latent_dim, dtype=np.float32)
    prompts = np.zeros((2, small_backbone.cond_dim), dtype=np.float32)
    shared = error_matrix(x, prompts, 8, small_backbone, schedule, np.random.default_rng(0))
    np.testing.assert_array_equal(shared.errors[0], shared.errors[1])
    independent = error_matrix(x, prompts, 8, small_backbone, schedule, np.random.default_rng(0), shared_pairs=False)
    assert not np.array_equal(independent.errors[0], independent.errors[1])


def test_classify_ties_go_to_lowest_index(small_backbone, schedule):
    x = np.ones(small_backbone.latent_dim, dtype=np.float32)
    prompts = np.zeros((3, small_backbone.cond_dim), dtype=np.float32)
    report = classify(x, prompts, ClassifierConfig(n_mc=4), small_backbone, schedule)
    assert report.predicted == 0
    np.testing.assert_allclose(report.posterior, np.full(3, 1 / 3))


def test_single_class_posterior_is_one(small_backbone, schedule):
    report = classify(np.zeros(small_backbone.latent_dim), np.zeros((1, small_backbone.cond_dim)),
                      ClassifierConfig(n_mc=2), small_backbone, schedule)
    assert report.predicted == 0
    assert report.posterior.tolist() == [1.0]


def test_classify_uses_per_query_streams(small_backbone, schedule):
    rng = np.random.default_rng(5)
    queries = rng.standard_normal((6, small_backbone.latent_dim)).astype(np.float32)
    prompts = rng.standard_normal((3, small_backbone.cond_dim)).astype(np.float32)
    cfg = ClassifierConfig(n_mc=8, seed=2)
    serial = classify_many(queries, prompts, cfg, small_backbone, schedule)
    threaded = classify_many(queries, prompts, cfg, small_backbone, schedule, workers=3)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.error_means, b.error_means)
    single = classify(queries[4], prompts, cfg, small_backbone, schedule, query_id=4)
    np.testing.assert_array_equal(single.error_means, serial[4].error_means)


def test_classifier_recovers_anchor_conditions(tiny_fixture, schedule):
    """Predicted class is the one whose true condition generated the query."""
    model, data = tiny_fixture.model, tiny_fixture.dataset
    reports = classify_many(data.test_x, model.anchors, ClassifierConfig(n_mc=64, seed=0), model, schedule)
    accuracy = np.mean([r.predicted == y for r, y in zip(reports, data.test_y)])
    assert accuracy > 1 / 3 + 0.2


def test_shared_pairs_reduce_error_gap_variance(tiny_fixture, schedule):
    """Across 30 seeds, err_A − err_B for one query varies less when both classes see the same pairs."""
    model, data = tiny_fixture.model, tiny_fixture.dataset
    x = data.test_x[0]
    anchors = model.anchors[:2]
    gaps = {True: [], False: []}
    for shared in (True, False):
        for seed in range(30):
            em = error_matrix(x, anchors, 32, model, schedule, np.random.default_rng(seed), shared_pairs=shared)
            gaps[shared].append(em.means[0] - em.means[1])
    assert np.std(gaps[True]) < np.std(gaps[False])


def test_classifier_requires_frozen_backbone(unfrozen_backbone, schedule):
    with pytest.raises(FrozenModelError):
        classify(np.zeros(unfrozen_backbone.latent_dim), np.zeros((2, unfrozen_backbone.cond_dim)),
                 ClassifierConfig(n_mc=1), unfrozen_backbone, schedule)


def test_query_shape_is_checked(small_backbone, schedule):
    with pytest.raises(ShapeError):
        classify(np.zeros(small_backbone.latent_dim + 2), np.zeros((2, small_backbone.cond_dim)),
                 ClassifierConfig(n_mc=1), small_backbone, schedule)


def test_reports_jsonl(small_backbone, schedule, tmp_path):
    queries = np.zeros((2, small_backbone.latent_dim), dtype=np.float32)
    prompts = np.random.default_rng(6).standard_normal((2, small_backbone.cond_dim)).astype(np.float32)
    reports = classify_many(queries, prompts, ClassifierConfig(n_mc=4), small_backbone, schedule,
                            class_names=["cat", "dog"])
    path = write_reports_jsonl(reports, tmp_path / "out" / "predictions.jsonl", true_labels=[1, 0])
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["query_id"] for r in rows] == [0, 1]
    assert rows[0]["true_label"] == "dog"
    assert set(rows[0]["posterior"]) == {"cat", "dog"}
    assert sum(rows[1]["posterior"].values()) == pytest.approx(1.0, abs=1e-6)
    assert rows[0]["predicted_label"] in {"cat", "dog"}


def test_noised_query_is_reconstructed_by_oracle(schedule):
    x = np.array([1.0, 2.0])
    eps = np.array([0.5, -0.5])
    xt = add_noise(x, eps, 300, schedule).xt
    oracle = PerfectOracleDenoiser(x, schedule, cond_dim=1)
    np.testing.assert_allclose(oracle.predict_noise(xt[None, :], np.array([300]), np.zeros(1))[0], eps, atol=1e-12)
