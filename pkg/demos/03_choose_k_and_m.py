"""Choose the cluster count with the weighted Xie-Beni index and the
fuzziness exponent by profile likelihood over a grid.

Run: python3 demos/03_choose_k_and_m.py   (about a minute)
"""

import numpy as np

from wfcm import Dataset, FitConfig, fit, select_k

rng = np.random.default_rng(3)
centers = np.array([[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]])
data = Dataset(
    np.vstack([c + 0.8 * rng.standard_normal((60, 2)) for c in centers])
)

config = FitConfig(
    m_grid=(2.0,), is_samples=1500, proposal_components=(2, 2), seed=3, max_mm_iters=15
)

print("Scoring k in {2,...,5} with the weighted Xie-Beni index (lower = better):")
grid = select_k(data, k_values=(2, 3, 4, 5), m_values=(2.0,), fit_config=config)
print(grid.to_frame().to_string(index=False, float_format=lambda v: f"{v:8.4f}"))
print(f"best cell: k = {grid.best[0]}, m = {grid.best[1]}  (elbow suggestion: k = {grid.elbow_k})")

print("\nProfile likelihood over a fuzziness grid at the chosen k:")
m_config = FitConfig(
    m_grid=(1.3, 1.7, 2.0, 2.4), is_samples=4000, proposal_components=(3, 3), seed=3,
    max_mm_iters=15, post_mm_max_iters=15,
)
result = fit(data, k=grid.best[0], config=m_config)
for m, value in sorted(result.m_grid_table.items()):
    marker = "  <-- selected" if m == result.params.fuzziness else ""
    print(f"  m = {m:.1f}: NLL = {value:10.2f}{marker}")
