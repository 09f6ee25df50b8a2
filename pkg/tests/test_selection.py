"""Weighted Xie-Beni validity index and cluster-count selection."""

import numpy as np
import pytest

from helpers import blob_data
from wfcm import (
    Dataset,
    FitConfig,
    ModelParams,
    NumericalError,
    ValidationError,
    classic_xbi,
    select_k,
    weighted_xbi,
)

FAST = FitConfig(
    m_grid=(2.0,),
    is_samples=1500,
    proposal_components=(2, 2),
    seed=0,
    max_mm_iters=15,
)


def make_params(centers, weights, m=2.0, sigma=1.0):
    return ModelParams(sigma=sigma, centers=centers, weights=weights, fuzziness=m)


class TestWeightedXbi:
    def test_hand_computed_value(self):
        # centers 0 and 2, data {0, 2, 1}: the two on-center points
        # contribute nothing, the midpoint splits evenly, separation is 4
        p = make_params([[0.0], [2.0]], [0.5, 0.5])
        data = Dataset(np.array([[0.0], [2.0], [1.0]]))
        assert weighted_xbi(data, p) == pytest.approx(0.0625, rel=1e-12)

    def test_zero_when_data_at_centers(self):
        p = make_params([[0.0, 0.0], [4.0, 4.0]], [0.3, 0.7])
        data = Dataset(np.repeat(p.centers, 5, axis=0))
        assert weighted_xbi(data, p) == pytest.approx(0.0, abs=1e-15)

    def test_uniform_weights_match_classic_over_k(self, rng):
        # with equal weights the closed-form memberships coincide with the
        # classic ones, so the weighted numerator is 1/k times the classic one
        centers = np.array([[0.0, 0.0], [3.0, 1.0], [-2.0, 4.0]])
        p = make_params(centers, np.full(3, 1.0 / 3.0))
        data = Dataset(rng.standard_normal((40, 2)) * 2)
        expected = classic_xbi(data, centers, m=2.0) / 3.0
        assert weighted_xbi(data, p) == pytest.approx(expected, rel=1e-10)

    def test_translation_and_scale_invariance(self, rng):
        centers = rng.standard_normal((3, 2)) * 2
        p = make_params(centers, [0.2, 0.5, 0.3])
        x = rng.standard_normal((30, 2)) * 1.5
        base = weighted_xbi(Dataset(x), p)
        shift = np.array([7.0, -3.0])
        p_shift = make_params(centers + shift, p.weights)
        assert weighted_xbi(Dataset(x + shift), p_shift) == pytest.approx(base, rel=1e-10)
        c = 2.5
        p_scaled = make_params(centers * c, p.weights)
        assert weighted_xbi(Dataset(x * c), p_scaled) == pytest.approx(base, rel=1e-10)

    def test_label_permutation_invariance(self, rng):
        p = make_params(rng.standard_normal((3, 2)) * 3, [0.2, 0.5, 0.3])
        data = Dataset(rng.standard_normal((25, 2)))
        assert weighted_xbi(data, p.permuted([2, 0, 1])) == pytest.approx(
            weighted_xbi(data, p), rel=1e-12
        )

    def test_single_cluster_rejected(self):
        p = make_params([[0.0]], [1.0])
        with pytest.raises(ValidationError):
            weighted_xbi(Dataset(np.zeros((5, 1))), p)

    def test_coincident_centers_degenerate(self):
        p = make_params([[1.0], [1.0]], [0.5, 0.5])
        with pytest.raises(NumericalError) as excinfo:
            weighted_xbi(Dataset(np.array([[0.0], [2.0]])), p)
        assert excinfo.value.code == "xbi-degenerate"


class TestClassicXbi:
    def test_hand_computed_value(self):
        data = Dataset(np.array([[0.0], [2.0], [1.0]]))
        assert classic_xbi(data, [[0.0], [2.0]], m=2.0) == pytest.approx(0.125, rel=1e-12)

    def test_tight_clusters_score_lower(self, rng):
        centers = [[0.0, 0.0], [10.0, 10.0]]
        tight = blob_data(rng, centers, 50, scale=0.3)
        loose = blob_data(rng, centers, 50, scale=3.0)
        assert classic_xbi(tight, centers, 2.0) < classic_xbi(loose, centers, 2.0)

    def test_coincident_centers_degenerate(self):
        with pytest.raises(NumericalError):
            classic_xbi(Dataset(np.zeros((4, 1))), [[1.0], [1.0]], 2.0)


class TestSelectK:
    def test_three_blobs_select_three(self, rng):
        data = blob_data(
            rng, [[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]], 40, scale=0.6
        )
        grid = select_k(data, k_values=(2, 3, 4), m_values=(2.0,), fit_config=FAST)
        assert grid.best[0] == 3
        assert grid.xbi.shape == (3, 1)
        # a cell may fail (e.g. a degenerate over-clustered fit), but then
        # it must carry an explanatory flag and never win the argmin
        for i, k in enumerate(grid.k_values):
            if not np.isfinite(grid.xbi[i, 0]):
                assert grid.cell_flags[(k, 2.0)]
        assert np.isfinite(grid.xbi[:2]).all()
        assert grid.elbow_k in (2, 3, 4)
        frame = grid.to_frame()
        assert len(frame) == 3
        assert set(frame.columns) == {"k", "m", "xbi", "flags"}

    def test_singleton_grid(self, rng):
        data = blob_data(rng, [[0.0], [8.0]], 30, scale=0.5)
        grid = select_k(data, k_values=(2,), m_values=(2.0,), fit_config=FAST)
        assert grid.best == (2, 2.0)

    def test_invalid_grids_rejected(self, rng):
        data = Dataset(rng.standard_normal((20, 1)))
        with pytest.raises(ValidationError):
            select_k(data, k_values=(), m_values=(2.0,), fit_config=FAST)
        with pytest.raises(ValidationError):
            select_k(data, k_values=(1, 2), m_values=(2.0,), fit_config=FAST)

    def test_round_trip_serialization(self, rng, tmp_path):
        data = blob_data(rng, [[0.0], [8.0]], 25, scale=0.5)
        grid = select_k(data, k_values=(2, 3), m_values=(2.0,), fit_config=FAST)
        d = grid.to_dict()
        assert d["best"]["k"] == grid.best[0]
        grid.to_csv(tmp_path / "grid.csv")
        grid.to_json(tmp_path / "grid.json")
        assert (tmp_path / "grid.csv").exists()
        assert (tmp_path / "grid.json").exists()
