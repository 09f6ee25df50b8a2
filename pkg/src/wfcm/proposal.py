"""Full-covariance Gaussian mixture fitted by EM, used as the
importance-sampling proposal: sampling plus log-density evaluation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .data import Dataset
from .exceptions import NumericalError, ValidationError

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ProposalModel:
    """Gaussian mixture with cached Cholesky factors and log-determinants."""

    mix_weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik_trace: tuple = ()

    def __post_init__(self):
        w = np.ravel(np.asarray(self.mix_weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None, :, :]
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValidationError("invalid-proposal", "mixture weights must be a simplex vector")
        G, d = mu.shape
        if cov.shape != (G, d, d):
            raise ValidationError("invalid-proposal", f"covariances must be ({G},{d},{d})")
        chols = []
        logdets = []
        for j in range(G):
            sym_err = np.max(np.abs(cov[j] - cov[j].T))
            if sym_err > 1e-10:
                raise ValidationError("invalid-proposal", f"covariance {j} not symmetric")
            try:
                L = cholesky(cov[j], lower=True)
            except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded upstream
                raise ValidationError("invalid-proposal", f"covariance {j} not PD") from exc
            chols.append(L)
            logdets.append(2.0 * np.sum(np.log(np.diag(L))))
        object.__setattr__(self, "mix_weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "_chols", tuple(chols))
        object.__setattr__(self, "_logdets", tuple(logdets))

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def component_logpdfs(self, X):
        """Per-component Gaussian log-densities, shape (n, G)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        out = np.empty((n, self.n_components))
        for j in range(self.n_components):
            z = solve_triangular(self._chols[j], (X - self.means[j]).T, lower=True)
            maha = np.einsum("dn,dn->n", z, z)
            out[:, j] = -0.5 * (self.d * _LOG_2PI + self._logdets[j] + maha)
        return out

    def to_dict(self):
        return {
            "mix_weights": self.mix_weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, doc):
        return cls(
            mix_weights=np.asarray(doc["mix_weights"], dtype=float),
            means=np.asarray(doc["means"], dtype=float),
            covariances=np.asarray(doc["covariances"], dtype=float),
        )

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def gmm_logpdf(x, model: ProposalModel):
    """log q(x) via log-sum-exp over components.

    Accepts a single d-vector or an (n, d) matrix; returns a float or an
    (n,) array accordingly.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    comp = model.component_logpdfs(np.atleast_2d(x))
    out = logsumexp(comp + np.log(model.mix_weights)[None, :], axis=1)
    return float(out[0]) if single else out


def gmm_sample(model: ProposalModel, count, seed) -> Dataset:
    """Ancestral sampling: categorical component, then Cholesky transform."""
    if count < 1:
        raise ValidationError("invalid-count", "count must be >= 1")
    rng = np.random.default_rng(seed)
    comps = rng.choice(model.n_components, size=count, p=model.mix_weights)
    out = np.empty((count, model.d))
    for j in range(model.n_components):
        idx = np.flatnonzero(comps == j)
        if idx.size == 0:
            continue
        z = rng.standard_normal((idx.size, model.d))
        out[idx] = model.means[j] + z @ model._chols[j].T
    return Dataset(values=out)


def _kmeanspp_seeds(X, G, rng):
    n = X.shape[0]
    idx = [rng.integers(n)]
    for _ in range(1, G):
        d2 = np.min(
            [np.sum((X - X[i]) ** 2, axis=1) for i in idx], axis=0
        )
        total = d2.sum()
        if total <= 0:
            idx.append(rng.integers(n))
        else:
            idx.append(rng.choice(n, p=d2 / total))
    return X[np.asarray(idx)]


def _ridge(cov, ridge):
    d = cov.shape[0]
    return cov + np.eye(d) * max(ridge * np.trace(cov) / d, 1e-12)


def _lloyd_init(X, G, rng, pooled, ridge, iters=10):
    """k-means++ seeding polished by Lloyd iterations, then moment-matched
    per-cluster parameters. Starting every component at the pooled
    covariance lets EM diffuse responsibilities across the whole sample and
    lose small well-separated clusters; local covariances keep them."""
    n, d = X.shape
    means = _kmeanspp_seeds(X, G, rng)
    labels = None
    for _ in range(iters):
        d2 = np.sum((X[:, None, :] - means[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(G):
            members = X[labels == j]
            if members.size:
                means[j] = members.mean(axis=0)
    weights = np.empty(G)
    covs = np.empty((G, d, d))
    for j in range(G):
        members = X[labels == j]
        weights[j] = max(members.shape[0], 1) / n
        if members.shape[0] > d:
            covs[j] = _ridge(np.cov(members, rowvar=False, bias=True).reshape(d, d), ridge)
        else:
            covs[j] = pooled
    return means, covs, weights / weights.sum()


def fit_gmm(data: Dataset, components, seed, max_iters=200, tol=1e-7, ridge=1e-6, n_starts=3):
    """EM fit of a full-covariance Gaussian mixture, best of ``n_starts``.

    Each start seeds means k-means++-style, polishes them with Lloyd
    iterations, and moment-matches per-cluster covariances and weights
    before running EM; the start with the highest final log-likelihood
    wins. A component whose responsibility mass falls below ``1e-8 * n``
    is re-seeded from a random data point at most 3 times before the start
    aborts with ``proposal-degenerate``.
    """
    rng = np.random.default_rng(seed)
    best = None
    failure = None
    for _ in range(max(1, int(n_starts))):
        try:
            model = _fit_gmm_once(data, components, rng, max_iters, tol, ridge)
        except NumericalError as exc:
            failure = exc
            continue
        if best is None or model.loglik_trace[-1] > best.loglik_trace[-1]:
            best = model
    if best is None:
        raise failure
    return best


def _fit_gmm_once(data: Dataset, components, rng, max_iters, tol, ridge):
    X = data.values
    n, d = X.shape
    G = int(components)
    if G < 1:
        raise ValidationError("invalid-components", "components must be >= 1")
    if n < G:
        raise ValidationError("invalid-components", "need n >= components")

    pooled = np.cov(X, rowvar=False, bias=True).reshape(d, d)
    pooled = _ridge(pooled, ridge)
    means, covs, weights = _lloyd_init(X, G, rng, pooled, ridge)

    trace = []
    reseeds = np.zeros(G, dtype=int)
    for _ in range(max_iters):
        model = ProposalModel(mix_weights=weights, means=means, covariances=covs)
        comp = model.component_logpdfs(X) + np.log(weights)[None, :]
        norm = logsumexp(comp, axis=1)
        loglik = float(norm.sum())
        trace.append(loglik)
        resp = np.exp(comp - norm[:, None])

        mass = resp.sum(axis=0)
        starved = np.flatnonzero(mass < 1e-8 * n)
        if starved.size:
            for j in starved:
                reseeds[j] += 1
                if reseeds[j] > 3:
                    raise NumericalError(
                        "proposal-degenerate", f"component {j} degenerate after 3 re-seeds"
                    )
                means[j] = X[rng.integers(n)]
                covs[j] = pooled
            continue

        weights = mass / n
        means = (resp.T @ X) / mass[:, None]
        new_covs = np.empty_like(covs)
        for j in range(G):
            diff = X - means[j]
            cov = (resp[:, j, None] * diff).T @ diff / mass[j]
            new_covs[j] = _ridge(cov, ridge)
        covs = new_covs

        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol * max(1.0, abs(trace[-2])):
            break

    return ProposalModel(
        mix_weights=weights, means=means, covariances=covs, loglik_trace=tuple(trace)
    )


def _param_count(G, d):
    return G - 1 + G * d + G * d * (d + 1) // 2


def select_components(data: Dataset, g_range, seed, **fit_kwargs) -> ProposalModel:
    """Fit each component count in ``g_range`` and return the BIC minimizer.

    ``g_range`` is an inclusive (lo, hi) pair. Counts whose parameter count
    reaches n are skipped with a warning.
    """
    lo, hi = int(g_range[0]), int(g_range[1])
    n = data.n
    lo = max(lo, 1)
    hi = min(hi, n)
    if lo > hi:
        raise ValidationError("invalid-components", f"empty component range {g_range}")

    best = None
    best_bic = np.inf
    for G in range(lo, hi + 1):
        p = _param_count(G, data.d)
        if p >= n and G > lo:
            warnings.warn(f"skipping G={G}: {p} parameters >= n={n}", stacklevel=2)
            continue
        try:
            model = fit_gmm(data, G, seed=seed, **fit_kwargs)
        except NumericalError:
            warnings.warn(f"skipping G={G}: degenerate fit", stacklevel=2)
            continue
        bic = -2.0 * model.loglik_trace[-1] + p * np.log(n)
        if bic < best_bic:
            best, best_bic = model, bic
    if best is None:
        raise NumericalError("proposal-degenerate", "no component count produced a fit")
    return best
