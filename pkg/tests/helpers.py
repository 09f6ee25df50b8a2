"""Shared test helpers and independent oracles.

The oracles here deliberately avoid the library's own code paths: the
simplex search enumerates membership vectors on a grid, and the chi-square
tail oracle integrates the density with adaptive quadrature.
"""

import math

import numpy as np
from scipy.integrate import quad

from wfcm import Dataset, ModelParams


def random_params(rng, k=None, d=None, m_choices=(1.5, 2.0, 3.0), spread=3.0):
    k = k or int(rng.integers(1, 5))
    d = d or int(rng.integers(1, 4))
    centers = spread * rng.standard_normal((k, d))
    raw = rng.random(k) + 0.1
    weights = raw / raw.sum()
    return ModelParams(
        sigma=float(rng.uniform(0.5, 3.0)),
        centers=centers,
        weights=weights,
        fuzziness=float(rng.choice(m_choices)),
    )


def blob_data(rng, means, n_per, scale=0.3):
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if np.isscalar(n_per):
        n_per = [n_per] * means.shape[0]
    chunks = [
        mu + scale * rng.standard_normal((n, means.shape[1]))
        for mu, n in zip(means, n_per)
    ]
    return Dataset(values=np.vstack(chunks))


# ---------------------------------------------------------------------------
# simplex grid-search oracle for the per-point membership objective


def _grid_pass(value, k, lo, hi, h, incumbent=None):
    """Enumerate the first k-1 coordinates on a grid of step h inside
    [lo, hi], complete with u_k = 1 - sum, and return the best point."""
    axes = [np.arange(lo[i], hi[i] + h / 2, h) for i in range(k - 1)]
    mesh = np.meshgrid(*axes, indexing="ij") if k > 1 else []
    free = (
        np.stack([g.ravel() for g in mesh], axis=1)
        if k > 1
        else np.zeros((1, 0))
    )
    total = free.sum(axis=1)
    ok = total <= 1.0 + 1e-12
    free = free[ok]
    last = np.clip(1.0 - free.sum(axis=1), 0.0, 1.0)
    U = np.concatenate([free, last[:, None]], axis=1)
    vals = value(U)
    i = int(np.argmin(vals))
    best_u, best_v = U[i], float(vals[i])
    if incumbent is not None and incumbent[1] < best_v:
        best_u, best_v = incumbent
    return best_u, best_v


def simplex_grid_search(weights, sq_dists, m, step=1e-3):
    """Grid minimization of sum_j w_j u_j^m d_j^2 over the simplex.

    The objective is convex in u, so a coarse full grid followed by local
    refinement around the incumbent reaches the target resolution safely
    even for k = 4 where a full fine grid is infeasible.

    Returns (u, value) at the best grid point.
    """
    w = np.asarray(weights, dtype=float)
    d2 = np.asarray(sq_dists, dtype=float)
    k = w.size

    def value(U):
        return (w[None, :] * U**m * d2[None, :]).sum(axis=1)

    h = step if k <= 2 else 0.02
    best_u, best_v = _grid_pass(value, k, np.zeros(k - 1), np.ones(k - 1), h)
    while h > step:
        h = max(h / 10.0, step)
        lo = np.clip(best_u[: k - 1] - 25 * h, 0.0, 1.0)
        hi = np.clip(best_u[: k - 1] + 25 * h, 0.0, 1.0)
        best_u, best_v = _grid_pass(value, k, lo, hi, h, incumbent=(best_u, best_v))
    return best_u, best_v


# ---------------------------------------------------------------------------
# chi-square tail oracle by adaptive quadrature of the density


def chi2_sf_quad(x, df):
    def density(t):
        return (
            t ** (df / 2.0 - 1.0)
            * math.exp(-t / 2.0)
            / (2.0 ** (df / 2.0) * math.gamma(df / 2.0))
        )

    tail, _ = quad(density, x, np.inf)
    return tail
