"""Gaussian mixture proposal: EM fitting, selection, density, sampling."""

import math

import numpy as np
import pytest

from helpers import blob_data
from wfcm import (
    Dataset,
    ProposalModel,
    ValidationError,
    fit_gmm,
    gmm_logpdf,
    gmm_sample,
    select_components,
)


def standard_normal_model(d=1):
    return ProposalModel(
        mix_weights=[1.0], means=np.zeros((1, d)), covariances=np.eye(d)[None]
    )


class TestProposalModel:
    def test_rejects_bad_weights(self):
        with pytest.raises(ValidationError):
            ProposalModel(
                mix_weights=[0.6, 0.6], means=np.zeros((2, 1)), covariances=np.ones((2, 1, 1))
            )

    def test_rejects_asymmetric_covariance(self):
        cov = np.array([[[1.0, 0.5], [0.1, 1.0]]])
        with pytest.raises(ValidationError):
            ProposalModel(mix_weights=[1.0], means=np.zeros((1, 2)), covariances=cov)

    def test_rejects_indefinite_covariance(self):
        cov = np.array([[[1.0, 2.0], [2.0, 1.0]]])
        with pytest.raises(ValidationError):
            ProposalModel(mix_weights=[1.0], means=np.zeros((1, 2)), covariances=cov)

    def test_serialization_round_trip(self, rng):
        model = ProposalModel(
            mix_weights=[0.3, 0.7],
            means=rng.standard_normal((2, 3)),
            covariances=np.stack([np.eye(3), 2.0 * np.eye(3)]),
        )
        clone = ProposalModel.from_dict(model.to_dict())
        np.testing.assert_allclose(clone.mix_weights, model.mix_weights)
        np.testing.assert_allclose(clone.means, model.means)
        np.testing.assert_allclose(clone.covariances, model.covariances)


class TestFitGmm:
    def test_single_component_fixed_point(self, rng):
        x = rng.standard_normal((200, 2)) * [1.0, 2.0] + [3.0, -1.0]
        model = fit_gmm(Dataset(x), components=1, seed=0)
        np.testing.assert_allclose(model.means[0], x.mean(axis=0), atol=1e-9)
        ml_cov = np.cov(x, rowvar=False, bias=True)
        np.testing.assert_allclose(model.covariances[0], ml_cov, rtol=1e-4)

    def test_two_blob_recovery(self, rng):
        data = blob_data(rng, [[0.0, 0.0], [8.0, 8.0]], 150, scale=0.4)
        model = fit_gmm(data, components=2, seed=1)
        means = model.means[np.argsort(model.means[:, 0])]
        assert np.linalg.norm(means[0] - [0.0, 0.0]) < 0.1
        assert np.linalg.norm(means[1] - [8.0, 8.0]) < 0.1

    def test_loglik_monotone(self, rng):
        data = blob_data(rng, [[0.0], [5.0], [-4.0]], 60, scale=0.5)
        model = fit_gmm(data, components=3, seed=2)
        trace = np.asarray(model.loglik_trace)
        assert trace.size >= 2
        assert np.all(np.diff(trace) >= -1e-8 * np.maximum(1.0, np.abs(trace[:-1])))

    def test_rejects_more_components_than_points(self):
        with pytest.raises(ValidationError):
            fit_gmm(Dataset(np.zeros((2, 1))), components=3, seed=0)


class TestSelectComponents:
    def test_three_blobs_select_three(self, rng):
        data = blob_data(rng, [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 120, scale=0.5)
        model = select_components(data, (2, 6), seed=3)
        assert model.n_components == 3

    def test_singleton_range(self, rng):
        data = Dataset(rng.standard_normal((30, 2)))
        model = select_components(data, (1, 1), seed=0)
        assert model.n_components == 1

    def test_overparameterized_counts_skipped_with_warning(self, rng):
        data = Dataset(rng.standard_normal((12, 2)))
        with pytest.warns(UserWarning, match="skipping"):
            model = select_components(data, (1, 6), seed=0)
        assert model.n_components <= 2

    def test_empty_range_rejected(self, rng):
        data = Dataset(rng.standard_normal((10, 1)))
        with pytest.raises(ValidationError):
            select_components(data, (3, 2), seed=0)


class TestGmmLogpdf:
    def test_standard_normal_mode(self):
        model = standard_normal_model()
        assert gmm_logpdf(np.array([0.0]), model) == pytest.approx(
            -0.5 * math.log(2.0 * math.pi), rel=1e-12
        )

    def test_logsumexp_lower_bound(self, rng):
        model = ProposalModel(
            mix_weights=[0.2, 0.5, 0.3],
            means=rng.standard_normal((3, 2)),
            covariances=np.stack([np.eye(2)] * 3),
        )
        x = rng.standard_normal((20, 2))
        total = gmm_logpdf(x, model)
        comp = model.component_logpdfs(x)
        for j in range(3):
            assert np.all(total >= math.log(model.mix_weights[j]) + comp[:, j] - 1e-12)

    def test_integrates_to_one(self):
        model = ProposalModel(
            mix_weights=[0.4, 0.6],
            means=np.array([[-2.0], [3.0]]),
            covariances=np.array([[[1.0]], [[4.0]]]),
        )
        grid = np.linspace(-30.0, 30.0, 20001)[:, None]
        dens = np.exp(gmm_logpdf(grid, model))
        integral = np.trapezoid(dens, grid[:, 0])
        assert 0.999 <= integral <= 1.001


class TestGmmSample:
    def test_deterministic(self):
        model = standard_normal_model(d=2)
        a = gmm_sample(model, 50, seed=7)
        b = gmm_sample(model, 50, seed=7)
        np.testing.assert_array_equal(a.values, b.values)

    def test_clt_mean_bound(self):
        model = standard_normal_model(d=3)
        M = 20000
        sample = gmm_sample(model, M, seed=11)
        assert np.all(np.abs(sample.values.mean(axis=0)) < 4.0 / math.sqrt(M))

    def test_component_frequencies(self):
        pi = 0.3
        model = ProposalModel(
            mix_weights=[pi, 1 - pi],
            means=np.array([[0.0], [100.0]]),
            covariances=np.array([[[1.0]], [[1.0]]]),
        )
        M = 5000
        sample = gmm_sample(model, M, seed=5)
        frac = float(np.mean(sample.values[:, 0] < 50.0))
        assert abs(frac - pi) < 4.0 * math.sqrt(pi * (1 - pi) / M)

    def test_self_importance_weights_are_one(self):
        model = standard_normal_model()
        sample = gmm_sample(model, 100, seed=1)
        logq = gmm_logpdf(sample.values, model)
        weights = np.exp(gmm_logpdf(sample.values, model) - logq)
        np.testing.assert_allclose(weights, 1.0, rtol=1e-15)

    def test_rejects_bad_count(self):
        with pytest.raises(ValidationError):
            gmm_sample(standard_normal_model(), 0, seed=0)
