"""Label alignment, bootstrap intervals and regions, likelihood-ratio test."""

import itertools
import math

import numpy as np
import pytest

from helpers import blob_data, chi2_sf_quad
from wfcm import (
    FitConfig,
    ModelParams,
    ValidationError,
    align_labels,
    bootstrap,
    chi_square_sf,
    lrt_equal_centers,
    percentile_ci,
)
from wfcm.inference import ellipsoid_region

FAST = FitConfig(
    m_grid=(2.0,),
    is_samples=1500,
    proposal_components=(2, 2),
    seed=0,
    max_mm_iters=15,
)


def params_from_centers(centers, weights=None):
    centers = np.asarray(centers, dtype=float)
    k = centers.shape[0]
    w = weights if weights is not None else np.full(k, 1.0 / k)
    return ModelParams(sigma=1.0, centers=centers, weights=w, fuzziness=2.0)


class TestAlignLabels:
    def test_identity(self):
        p = params_from_centers([[0.0, 0.0], [5.0, 5.0]])
        np.testing.assert_array_equal(align_labels(p, p), [0, 1])

    def test_swap(self):
        ref = params_from_centers([[0.0], [5.0]])
        cand = params_from_centers([[5.1], [-0.1]])
        np.testing.assert_array_equal(align_labels(ref, cand), [1, 0])

    def test_matches_brute_force_k4(self, rng):
        for _ in range(20):
            ref = params_from_centers(rng.standard_normal((4, 2)) * 3)
            cand = params_from_centers(rng.standard_normal((4, 2)) * 3)
            perm = align_labels(ref, cand)
            cost = lambda pi: sum(
                np.sum((cand.centers[pi[j]] - ref.centers[j]) ** 2) for j in range(4)
            )
            best = min(itertools.permutations(range(4)), key=cost)
            assert cost(tuple(perm)) <= cost(best) + 1e-12

    def test_tie_breaks_to_lexicographic(self):
        # both orderings have identical cost by symmetry
        ref = params_from_centers([[0.0], [0.0]])
        cand = params_from_centers([[1.0], [1.0]])
        np.testing.assert_array_equal(align_labels(ref, cand), [0, 1])

    def test_shape_mismatch_rejected(self):
        ref = params_from_centers([[0.0], [5.0]])
        cand = params_from_centers([[0.0, 0.0], [5.0, 5.0]])
        with pytest.raises(ValidationError):
            align_labels(ref, cand)

    def test_weights_permute_with_centers(self):
        ref = params_from_centers([[0.0], [5.0]], weights=[0.7, 0.3])
        cand = params_from_centers([[5.0], [0.0]], weights=[0.3, 0.7])
        aligned = cand.permuted(align_labels(ref, cand))
        np.testing.assert_allclose(aligned.centers, ref.centers)
        np.testing.assert_allclose(aligned.weights, ref.weights)


class TestPercentileCi:
    def test_linear_interpolation_values(self):
        lo, hi = percentile_ci(np.arange(1.0, 101.0), alpha=0.1)
        assert lo == pytest.approx(5.95)
        assert hi == pytest.approx(95.05)

    def test_narrower_with_larger_alpha(self, rng):
        vals = rng.standard_normal(500)
        lo1, hi1 = percentile_ci(vals, alpha=0.05)
        lo2, hi2 = percentile_ci(vals, alpha=0.5)
        assert hi2 - lo2 < hi1 - lo1
        assert lo1 <= lo2 and hi2 <= hi1

    def test_rejects_too_few_values(self):
        with pytest.raises(ValidationError):
            percentile_ci([1.0], alpha=0.1)

    def test_ignores_nonfinite(self):
        lo, hi = percentile_ci([1.0, np.nan, 2.0, np.inf, 3.0], alpha=0.5)
        assert 1.0 <= lo <= hi <= 3.0


class TestChiSquareSf:
    def test_zero_is_one(self):
        for df in (1, 2, 5):
            assert chi_square_sf(0.0, df) == pytest.approx(1.0)

    def test_df2_is_exponential(self):
        assert chi_square_sf(2.0, 2) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_df3_critical_value(self):
        assert chi_square_sf(7.814727903251179, 3) == pytest.approx(0.05, abs=1e-10)

    def test_matches_quadrature_oracle(self):
        for x, df in [(1.3, 1), (4.2, 2), (7.0, 3), (2.5, 6)]:
            assert chi_square_sf(x, df) == pytest.approx(chi2_sf_quad(x, df), abs=1e-9)

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            chi_square_sf(-1.0, 2)
        with pytest.raises(ValidationError):
            chi_square_sf(1.0, 0)


class TestEllipsoidRegion:
    def test_sphere_threshold_and_coverage(self, rng):
        B = 400
        reps = rng.standard_normal((B, 2))
        center = np.zeros(2)
        region = ellipsoid_region(reps, center, alpha=0.1)
        np.testing.assert_allclose(region.center, center)
        inside = np.mean([region.contains(r) for r in reps])
        assert abs(inside - 0.9) <= 1.5 / math.sqrt(B) + 1.0 / B
        assert not region.used_pseudoinverse

    def test_covariance_is_sample_covariance(self, rng):
        reps = rng.standard_normal((50, 3)) @ np.diag([1.0, 2.0, 0.5])
        region = ellipsoid_region(reps, reps.mean(axis=0), alpha=0.05)
        np.testing.assert_allclose(region.covariance, np.cov(reps, rowvar=False, ddof=1))

    def test_degenerate_direction_uses_pseudoinverse(self, rng):
        reps = np.column_stack([rng.standard_normal(60), np.zeros(60)])
        region = ellipsoid_region(reps, np.zeros(2), alpha=0.1)
        assert region.used_pseudoinverse
        assert any(f.code == "region-pseudoinverse" for f in region.flags)

    def test_affine_consistency(self, rng):
        # stretching one axis must not change membership decisions
        reps = rng.standard_normal((200, 2))
        A = np.diag([3.0, 0.5])
        r1 = ellipsoid_region(reps, np.zeros(2), alpha=0.2)
        r2 = ellipsoid_region(reps @ A, np.zeros(2), alpha=0.2)
        pts = rng.standard_normal((50, 2))
        for p in pts:
            assert r1.contains(p) == r2.contains(p @ A)


class TestBootstrap:
    def test_report_structure_and_reference_recovery(self, rng):
        data = blob_data(rng, [[0.0, 0.0], [8.0, 8.0]], 40, scale=0.8)
        report = bootstrap(data, k=2, fit_config=FAST, B=16, alpha=0.1, seed=1, fix_m=True)
        assert report.B == 16
        assert report.n_failures == 0
        assert len(report.replicates) == 16
        assert set(report.scalar_cis) == {
            "sigma", "m", "v1_x", "v1_y", "v2_x", "v2_y", "w1", "w2"
        }
        table = report.ci_table()
        assert list(table["Parameter"]) == list(report.scalar_cis)
        for name, ci in report.scalar_cis.items():
            assert ci["lower"] <= ci["upper"]
        # with fix_m every replicate reuses the reference fuzziness
        assert set(report.replicate_ms) == {report.reference.params.fuzziness}
        # aligned replicate centers stay near their reference labels
        ref = report.reference.params.centers
        for p in report.replicates:
            assert np.linalg.norm(p.centers - ref, axis=1).max() < 3.0
        assert len(report.center_regions) == 2
        assert report.weight_region.used_pseudoinverse  # weights sum to one

    def test_reference_centers_inside_regions(self, rng):
        data = blob_data(rng, [[0.0], [10.0]], 50, scale=0.5)
        report = bootstrap(data, k=2, fit_config=FAST, B=16, alpha=0.1, seed=3, fix_m=True)
        for j, region in enumerate(report.center_regions):
            assert region.mahalanobis(report.reference.params.centers[j]) <= region.threshold + 1e-9

    def test_invalid_arguments(self, rng):
        data = blob_data(rng, [[0.0]], 20, scale=1.0)
        with pytest.raises(ValidationError):
            bootstrap(data, 1, FAST, B=1, alpha=0.1)
        with pytest.raises(ValidationError):
            bootstrap(data, 1, FAST, B=4, alpha=1.5)


class TestLrtEqualCenters:
    def test_invalid_pair_rejected(self, rng):
        data = blob_data(rng, [[0.0], [5.0]], 20, scale=0.5)
        with pytest.raises(ValidationError):
            lrt_equal_centers(data, 2, pair=(1, 1), config=FAST)
        with pytest.raises(ValidationError):
            lrt_equal_centers(data, 2, pair=(1, 0), config=FAST)

    def test_nested_statistic_nonnegative_and_null_accepted(self, rng):
        # one true cluster fitted with k=2: tying the centers costs little
        x = rng.standard_normal((120, 2)) * 1.5
        from wfcm import Dataset

        report = lrt_equal_centers(Dataset(x), 2, pair=(0, 1), config=FAST)
        assert report.lam >= 0.0
        assert report.df == 2
        assert report.p_value == pytest.approx(chi_square_sf(report.lam, 2))
        assert report.restricted.nll + 1e-6 >= report.unrestricted.nll

    def test_separated_clusters_rejected(self, rng):
        data = blob_data(rng, [[0.0, 0.0], [9.0, 9.0]], 60, scale=0.7)
        report = lrt_equal_centers(data, 2, pair=(0, 1), config=FAST)
        assert report.lam > 20.0
        assert report.p_value < 1e-3
        # the tied fit really produced one shared center
        np.testing.assert_allclose(
            report.restricted.params.centers[0], report.restricted.params.centers[1]
        )
