"""Quantify uncertainty for a fitted model.

Bootstraps percentile confidence intervals for every scalar parameter,
builds joint confidence ellipsoids for the centers, and runs the
likelihood-ratio test of "these two centers are equal".

Run: python3 demos/02_uncertainty.py   (about a minute)
"""

import numpy as np

from wfcm import ChainConfig, FitConfig, ModelParams, bootstrap, lrt_equal_centers, mh_sample

truth = ModelParams(
    sigma=2.0,
    centers=[[0.0, 0.0], [3.5, 3.5]],
    weights=[0.8, 0.2],
    fuzziness=2.0,
)
data, _ = mh_sample(truth, 800, ChainConfig(iterations=30000, local_step_sd=1.2, seed=2))

config = FitConfig(
    m_grid=(2.0,), is_samples=1000, proposal_components=(2, 2), seed=2, max_mm_iters=10
)

print("Bootstrapping (B = 60, 90% intervals)...")
report = bootstrap(data, k=2, fit_config=config, B=60, alpha=0.1, seed=2, fix_m=True)
print(report.ci_table().to_string(index=False, float_format=lambda v: f"{v:8.3f}"))

for j, region in enumerate(report.center_regions):
    truth_in = region.contains(truth.centers[j])
    print(f"center {j + 1} ellipsoid: contains the true center -> {truth_in}")

print("\nLikelihood-ratio test of equal centers (they are far apart here):")
lrt = lrt_equal_centers(data, k=2, pair=(0, 1), config=config)
print(f"  lambda = {lrt.lam:.1f}, df = {lrt.df}, p = {lrt.p_value:.2e}")
