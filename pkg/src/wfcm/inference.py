"""Likelihood-based inference: bootstrap confidence intervals and regions
with label alignment, and the likelihood-ratio test for equality of two
cluster centers.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaincc

from .data import Dataset, Flag, ModelParams, flags_to_list
from .estimator import FitConfig, FitResult, ISContext, fit
from .exceptions import NumericalError, ValidationError


def align_labels(reference: ModelParams, candidate: ModelParams):
    """Permutation pi minimizing sum_j ||v_cand[pi(j)] - v_ref[j]||^2.

    Solved exactly by minimum-cost assignment; cost ties resolve to the
    lexicographically smallest permutation (checked exhaustively for small k).
    """
    if reference.k != candidate.k or reference.d != candidate.d:
        raise ValidationError("invalid-align", "reference/candidate shapes differ")
    k = reference.k
    diff = candidate.centers[None, :, :] - reference.centers[:, None, :]
    cost = np.einsum("jld,jld->jl", diff, diff)  # cost[j, l] = ||v_cand_l - v_ref_j||^2
    rows, cols = linear_sum_assignment(cost)
    best_cost = cost[rows, cols].sum()
    perm = cols[np.argsort(rows)]
    if k <= 6:
        for cand in itertools.permutations(range(k)):
            c = sum(cost[j, cand[j]] for j in range(k))
            if c <= best_cost + 1e-12 * max(1.0, abs(best_cost)) and list(cand) < list(perm):
                perm = np.asarray(cand)
    return np.asarray(perm, dtype=int)


def percentile_ci(values, alpha):
    """Two-sided (1 - alpha) percentile interval with linear interpolation."""
    vals = np.asarray(values, dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size < 2:
        raise ValidationError("invalid-ci", "need at least 2 finite values")
    lo, hi = np.quantile(vals, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


@dataclass(frozen=True)
class EllipsoidRegion:
    """Bootstrap ellipsoid: covariance, Mahalanobis threshold, and metric."""

    center: np.ndarray
    covariance: np.ndarray
    threshold: float
    inverse: np.ndarray
    used_pseudoinverse: bool
    flags: tuple = ()

    def contains(self, v):
        diff = np.asarray(v, dtype=float) - self.center
        return float(diff @ self.inverse @ diff) <= self.threshold + 1e-12

    def mahalanobis(self, v):
        diff = np.asarray(v, dtype=float) - self.center
        return float(diff @ self.inverse @ diff)

    def to_dict(self):
        return {
            "center": self.center.tolist(),
            "covariance": self.covariance.tolist(),
            "threshold": self.threshold,
            "used_pseudoinverse": self.used_pseudoinverse,
            "flags": flags_to_list(self.flags),
        }


def ellipsoid_region(replicates, center, alpha, use_pseudoinverse=False) -> EllipsoidRegion:
    """(1 - alpha) bootstrap region from aligned replicate vectors.

    Covariance uses denominator B-1; the threshold is the empirical
    (1 - alpha) quantile of the replicates' squared Mahalanobis distances to
    ``center``. Near-singular covariances (condition > 1e12) fall back to the
    Moore-Penrose pseudoinverse with a flag.
    """
    R = np.atleast_2d(np.asarray(replicates, dtype=float))
    center = np.ravel(np.asarray(center, dtype=float))
    cov = np.cov(R, rowvar=False, ddof=1).reshape(center.size, center.size)
    flags = []
    pseudo = use_pseudoinverse
    if not pseudo:
        cond = np.linalg.cond(cov)
        if not np.isfinite(cond) or cond > 1e12:
            pseudo = True
            flags.append(Flag("region-pseudoinverse", f"condition {cond:.3e}"))
    if pseudo:
        inv = np.linalg.pinv(cov, hermitian=True)
    else:
        try:
            inv = np.linalg.inv(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "region-singular", "covariance singular; pass use_pseudoinverse=True"
            ) from exc
    diffs = R - center
    maha = np.einsum("bi,ij,bj->b", diffs, inv, diffs)
    threshold = float(np.quantile(maha, 1.0 - alpha))
    return EllipsoidRegion(
        center=center,
        covariance=cov,
        threshold=threshold,
        inverse=inv,
        used_pseudoinverse=pseudo,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class BootstrapReport:
    reference: FitResult
    replicates: tuple  # aligned ModelParams
    replicate_ms: tuple
    scalar_cis: dict  # name -> dict(lower, upper, mean, sd)
    center_regions: tuple  # EllipsoidRegion per cluster
    weight_region: EllipsoidRegion
    alpha: float
    B: int
    n_failures: int
    flags: tuple = ()

    def ci_table(self) -> pd.DataFrame:
        rows = [
            {
                "Parameter": name,
                "Mean": ci["mean"],
                "Std": ci["sd"],
                "CI lower": ci["lower"],
                "CI upper": ci["upper"],
            }
            for name, ci in self.scalar_cis.items()
        ]
        return pd.DataFrame(rows)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "B": self.B,
            "n_failures": self.n_failures,
            "reference": self.reference.to_dict(),
            "replicates": [p.to_dict() for p in self.replicates],
            "scalar_cis": self.scalar_cis,
            "center_regions": [r.to_dict() for r in self.center_regions],
            "weight_region": self.weight_region.to_dict(),
            "flags": flags_to_list(self.flags),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def scalar_names(k, d, column_names=None):
    """CI-table parameter names: sigma, m, centers by coordinate, weights."""
    coords = column_names or ([c for c in "xyz"[:d]] if d <= 3 else None)
    if coords is None or len(coords) != d:
        coords = [f"c{t}" for t in range(d)]
    names = ["sigma", "m"]
    for j in range(k):
        for t in range(d):
            names.append(f"v{j + 1}_{coords[t]}")
    names += [f"w{j + 1}" for j in range(k)]
    return names


def _replicate_vector(params: ModelParams, m_hat):
    return np.concatenate([[params.sigma, m_hat], params.centers.ravel(), params.weights])


def _fit_one_replicate(args):
    values, column_names, k, config, fix_m = args
    try:
        data = Dataset(values=values, column_names=column_names)
        res = fit(data, k, config)
        return res.params, res.params.fuzziness
    except (NumericalError, ValidationError):
        return None


def bootstrap(
    data: Dataset,
    k,
    fit_config: FitConfig,
    B,
    alpha,
    seed=0,
    fix_m=False,
    workers=1,
    reference: FitResult | None = None,
) -> BootstrapReport:
    """Nonparametric bootstrap with label alignment.

    Each replicate resamples n indices with replacement, refits with its own
    proposal (seed derived as ``seed XOR b``), and is aligned to the
    reference by minimum-cost center matching; centers and weights permute
    jointly. ``fix_m=True`` reuses the reference fuzziness instead of
    re-searching the m-grid per replicate. Replicate failures are skipped;
    more than 20% failing aborts with ``bootstrap-unstable``.
    """
    if B < 2:
        raise ValidationError("invalid-bootstrap", "need B >= 2")
    if not 0 < alpha < 1:
        raise ValidationError("invalid-bootstrap", "alpha must be in (0, 1)")
    if reference is None:
        reference = fit(data, k, fit_config)
    ref_params = reference.params

    rep_config = fit_config
    if fix_m:
        rep_config = replace(fit_config, m_grid=(ref_params.fuzziness,))

    rng = np.random.default_rng(seed)
    jobs = []
    for b in range(B):
        idx = rng.integers(data.n, size=data.n)
        cfg_b = replace(rep_config, seed=int(seed) ^ (b + 1))
        jobs.append((data.values[idx], data.column_names, k, cfg_b, fix_m))

    results = []
    failures = 0
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for out in pool.map(_fit_one_replicate, jobs, chunksize=4):
                results.append(out)
    else:
        for job in jobs:
            results.append(_fit_one_replicate(job))
    aligned = []
    ms = []
    for out in results:
        if out is None:
            failures += 1
            continue
        params, m_hat = out
        perm = align_labels(ref_params, params)
        aligned.append(params.permuted(perm))
        ms.append(m_hat)
    if failures > 0.2 * B:
        raise NumericalError("bootstrap-unstable", f"{failures}/{B} replicate fits failed")

    vecs = np.stack([_replicate_vector(p, m) for p, m in zip(aligned, ms)])
    names = scalar_names(k, data.d)
    scalar_cis = {}
    for col, name in enumerate(names):
        vals = vecs[:, col]
        lo, hi = percentile_ci(vals, alpha) if np.ptp(vals) > 0 else (vals[0], vals[0])
        scalar_cis[name] = {
            "lower": float(lo),
            "upper": float(hi),
            "mean": float(vals.mean()),
            "sd": float(vals.std(ddof=1)),
        }

    flags = []
    center_regions = []
    for j in range(k):
        reps = np.stack([p.centers[j] for p in aligned])
        if np.ptp(reps, axis=0).max() == 0:
            region = EllipsoidRegion(
                center=ref_params.centers[j],
                covariance=np.zeros((data.d, data.d)),
                threshold=0.0,
                inverse=np.zeros((data.d, data.d)),
                used_pseudoinverse=True,
                flags=(Flag("region-degenerate", "all replicates identical"),),
            )
        else:
            region = ellipsoid_region(reps, ref_params.centers[j], alpha)
        center_regions.append(region)

    wreps = np.stack([p.weights for p in aligned])
    if np.ptp(wreps, axis=0).max() == 0:
        weight_region = EllipsoidRegion(
            center=ref_params.weights,
            covariance=np.zeros((k, k)),
            threshold=0.0,
            inverse=np.zeros((k, k)),
            used_pseudoinverse=True,
            flags=(Flag("region-degenerate", "all replicates identical"),),
        )
    else:
        weight_region = ellipsoid_region(
            wreps, ref_params.weights, alpha, use_pseudoinverse=True
        )

    if failures:
        flags.append(Flag("replicate-failures", f"{failures} of {B} replicates failed"))
    return BootstrapReport(
        reference=reference,
        replicates=tuple(aligned),
        replicate_ms=tuple(ms),
        scalar_cis=scalar_cis,
        center_regions=tuple(center_regions),
        weight_region=weight_region,
        alpha=alpha,
        B=B,
        n_failures=failures,
        flags=tuple(flags),
    )


def chi_square_sf(x, df):
    """Chi-square survival function via the regularized upper incomplete
    gamma function Q(df/2, x/2)."""
    if x < 0:
        raise ValidationError("invalid-stat", "x must be nonnegative")
    if df < 1:
        raise ValidationError("invalid-stat", "df must be a positive integer")
    return float(gammaincc(df / 2.0, x / 2.0))


def fit_constrained_equal_centers(data: Dataset, k, pair, config: FitConfig,
                                  is_context: ISContext | None = None) -> FitResult:
    """Fit with centers ``pair = (a, b)`` tied to one shared vector."""
    a, b = pair
    if not 0 <= a < b < k:
        raise ValidationError("invalid-pair", f"need 0 <= a < b < k, got {pair}")
    return fit(data, k, config, is_context=is_context, tie_pair=(a, b))


@dataclass(frozen=True)
class LrtReport:
    lam: float
    df: int
    p_value: float
    unrestricted: FitResult
    restricted: FitResult
    pair: tuple
    flags: tuple = ()

    def to_dict(self):
        return {
            "lambda": self.lam,
            "df": self.df,
            "p_value": self.p_value,
            "pair": list(self.pair),
            "unrestricted": self.unrestricted.to_dict(),
            "restricted": self.restricted.to_dict(),
            "flags": flags_to_list(self.flags),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def lrt_equal_centers(data: Dataset, k, pair, config: FitConfig) -> LrtReport:
    """Likelihood-ratio test of H0: v_a = v_b against the free model.

    Both fits share one importance-sampling context so the likelihood
    comparison is not polluted by fresh Monte Carlo noise. The statistic is
    compared to chi-square with df = d.
    """
    ctx = ISContext.build(data, config)
    unrestricted = fit(data, k, config, is_context=ctx)
    restricted = fit_constrained_equal_centers(data, k, pair, config, is_context=ctx)
    lam = 2.0 * (restricted.nll - unrestricted.nll)
    flags = []
    if lam < 0:
        if lam >= -1e-6:
            flags.append(Flag("lambda-clamped", f"{lam:.2e} clamped to 0"))
        else:
            flags.append(Flag("lambda-negative", f"restricted beat unrestricted by {-lam:.3e}"))
        lam = 0.0
    df = data.d
    return LrtReport(
        lam=float(lam),
        df=df,
        p_value=chi_square_sf(lam, df),
        unrestricted=unrestricted,
        restricted=restricted,
        pair=tuple(pair),
        flags=tuple(flags),
    )
