"""Blockwise MM fitting of the weighted fuzzy c-means likelihood.

One fit alternates closed-form membership and centroid updates with a
quasi-Newton update of (sigma, w) against the importance-sampled negative
log-likelihood, then refines all continuous parameters jointly (post-MM).
The fuzziness exponent is grid-searched in an outer loop that reuses a
single proposal sample set across the whole grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .data import (
    DISTANCE_FLOOR,
    Dataset,
    Flag,
    MembershipMatrix,
    ModelParams,
    ParamBounds,
    flags_to_list,
)
from .exceptions import NumericalError, ValidationError
from . import model as core
from .normalizer import ISEstimate, estimate_log_c
from .proposal import ProposalModel, gmm_logpdf, gmm_sample, select_components

_FD_STEP = 1e-5
_LOGIT_CAP = 30.0


@dataclass(frozen=True)
class FitConfig:
    """Knobs for one maximum-likelihood fit."""

    m_grid: tuple = (2.0,)
    max_mm_iters: int = 50
    theta_tol: float = 1e-5
    nll_tol: float = 1e-7
    post_mm_max_iters: int = 200
    is_samples: int = 5000
    proposal_components: tuple = (2, 6)
    seed: int = 0
    bounds: ParamBounds | None = None
    restarts: int = 1
    fcm_init_iters: int = 50

    def __post_init__(self):
        if len(self.m_grid) == 0 or any(m <= 1 for m in self.m_grid):
            raise ValidationError("invalid-config", "m_grid must be non-empty with all m > 1")
        if self.theta_tol <= 0 or self.nll_tol <= 0:
            raise ValidationError("invalid-config", "tolerances must be positive")
        object.__setattr__(self, "m_grid", tuple(sorted(float(m) for m in self.m_grid)))


@dataclass(frozen=True)
class ISContext:
    """Frozen proposal sample set shared across all NLL evaluations of a fit."""

    proposal: ProposalModel
    samples: Dataset
    log_q: np.ndarray

    @classmethod
    def build(cls, data: Dataset, config: FitConfig):
        proposal = select_components(data, config.proposal_components, seed=config.seed)
        samples = gmm_sample(proposal, config.is_samples, seed=config.seed + 104729)
        return cls(proposal=proposal, samples=samples, log_q=gmm_logpdf(samples.values, proposal))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit: parameters, NLL, diagnostics, and the m-grid table."""

    params: ModelParams
    nll: float
    log_c: ISEstimate
    memberships: MembershipMatrix
    trace: tuple
    m_grid_table: dict
    converged: bool
    reason: str
    flags: tuple = ()

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "nll": self.nll,
            "log_c": self.log_c.to_dict(),
            "m_grid_table": {str(m): v for m, v in self.m_grid_table.items()},
            "converged": self.converged,
            "reason": self.reason,
            "flags": flags_to_list(self.flags),
            "trace": [dict(rec) for rec in self.trace],
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------------
# initialization


def _kmeanspp_centers(X, k, rng):
    idx = [rng.integers(X.shape[0])]
    for _ in range(1, k):
        d2 = np.min([np.sum((X - X[i]) ** 2, axis=1) for i in idx], axis=0)
        total = d2.sum()
        idx.append(rng.integers(X.shape[0]) if total <= 0 else rng.choice(X.shape[0], p=d2 / total))
    return X[np.asarray(idx)].copy()


def classic_fcm(data: Dataset, k, m, iters=100, seed=0):
    """Classic unweighted fuzzy c-means; returns (centers, MembershipMatrix).

    Alternates the closed-form membership update with the fuzzy mean
    centroid update; the FCM loss is non-increasing along the way.
    """
    if k > data.n:
        raise ValidationError("too-many-clusters", f"k={k} exceeds n={data.n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(data.values, k, rng)
    u = core.fcm_memberships(data, centers, m)
    prev_loss = np.inf
    for _ in range(iters):
        um = u**m
        mass = um.sum(axis=0)
        ok = mass > 1e-12
        new_centers = centers.copy()
        new_centers[ok] = (um.T[ok] @ data.values) / mass[ok, None]
        centers = new_centers
        u = core.fcm_memberships(data, centers, m)
        loss = core.fcm_loss(data, centers, m)
        if prev_loss - loss < 1e-12 * max(1.0, abs(prev_loss)):
            prev_loss = loss
            break
        prev_loss = loss
    return centers, MembershipMatrix(u)


def _seed_init(data: Dataset, k, m, seed, bounds: ParamBounds) -> ModelParams:
    """Restart initializer: raw k-means++ seed points with an empirical scale.

    Deliberately skips the FCM polish used by ``init_params``: FCM's own
    optimum is a strong attractor, so polished restarts all land in the same
    basin. Raw seed points keep restart diversity, and the likelihood steps
    take over from there.
    """
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(data.values, k, rng)
    d2 = np.min(
        np.sum((data.values[:, None, :] - centers[None, :, :]) ** 2, axis=2), axis=1
    )
    sigma = float(np.clip(np.sqrt(max(d2.mean(), 0.0)), bounds.sigma_min, bounds.sigma_max))
    return ModelParams(
        sigma=sigma,
        centers=centers,
        weights=np.full(k, 1.0 / k),
        fuzziness=m,
        eps_w=bounds.eps_w,
    )


def _proposal_init(data: Dataset, k, m, proposal, bounds: ParamBounds):
    """Restart initializer: centers from the proposal mixture's means.

    The density-fitted proposal often finds small, far-away modes that
    distance-based seeding misses. Centers are chosen from the component
    means by farthest-point selection starting at the heaviest component;
    returns None when the proposal has fewer components than clusters.
    """
    means = np.asarray(proposal.means, dtype=float)
    if means.shape[0] < k:
        return None
    chosen = [int(np.argmax(proposal.mix_weights))]
    while len(chosen) < k:
        d2 = np.min(
            np.sum((means[:, None, :] - means[chosen][None, :, :]) ** 2, axis=2), axis=1
        )
        d2[chosen] = -np.inf
        chosen.append(int(np.argmax(d2)))
    centers = means[chosen]
    d2 = np.min(
        np.sum((data.values[:, None, :] - centers[None, :, :]) ** 2, axis=2), axis=1
    )
    sigma = float(np.clip(np.sqrt(max(d2.mean(), 0.0)), bounds.sigma_min, bounds.sigma_max))
    return ModelParams(
        sigma=sigma,
        centers=centers,
        weights=np.full(k, 1.0 / k),
        fuzziness=m,
        eps_w=bounds.eps_w,
    )


def init_params(data: Dataset, k, m, seed=0, bounds: ParamBounds | None = None) -> ModelParams:
    """Starting point: FCM centers, uniform weights, empirical sigma."""
    if k > data.n:
        raise ValidationError("too-many-clusters", f"k={k} exceeds n={data.n}")
    bounds = bounds or ParamBounds.for_data(data.values)
    bounds.validate_k(k)
    centers, u = classic_fcm(data, k, m, seed=seed)
    labels = u.hard_labels()
    d2 = np.sum((data.values - centers[labels]) ** 2, axis=1)
    sigma2 = float(np.mean(d2))
    sigma = float(np.clip(np.sqrt(max(sigma2, 0.0)), bounds.sigma_min, bounds.sigma_max))
    weights = np.full(k, 1.0 / k)
    return ModelParams(
        sigma=sigma, centers=centers, weights=weights, fuzziness=m, eps_w=bounds.eps_w
    )


# ---------------------------------------------------------------------------
# block updates


def update_centroids(data: Dataset, memberships: MembershipMatrix, m, previous=None):
    """Fuzzy-mean centroid update v_j = sum_i u_ij^m x_i / sum_i u_ij^m.

    Columns with membership mass below 1e-12 keep their previous center and
    a ``starved-cluster`` flag is returned alongside the centers.
    """
    u = memberships.values
    um = u**m
    mass = um.sum(axis=0)
    k = u.shape[1]
    flags = []
    centers = np.empty((k, data.d))
    for j in range(k):
        if mass[j] < 1e-12:
            centers[j] = previous[j] if previous is not None else data.values.mean(axis=0)
            flags.append(Flag("starved-cluster", f"cluster {j} kept previous center"))
        else:
            centers[j] = um[:, j] @ data.values / mass[j]
    return centers, flags


def _tie_centers(centers, pair):
    """Pool the two tied rows so both carry the shared center."""
    if pair is None:
        return centers
    a, b = pair
    shared = 0.5 * (centers[a] + centers[b])
    out = centers.copy()
    out[a] = shared
    out[b] = shared
    return out


def _update_centroids_tied(data, memberships, m, pair, previous=None):
    centers, flags = update_centroids(data, memberships, m, previous=previous)
    if pair is not None:
        a, b = pair
        um = memberships.values**m
        mass = um[:, a].sum() + um[:, b].sum()
        if mass >= 1e-12:
            shared = (um[:, a] + um[:, b]) @ data.values / mass
            centers[a] = shared
            centers[b] = shared
        elif previous is not None:
            centers[a] = previous[a]
            centers[b] = previous[b]
            flags.append(Flag("starved-cluster", f"tied pair {pair} kept previous center"))
    return centers, flags


# ---------------------------------------------------------------------------
# reparameterization: sigma = exp(s) in [sigma_min, sigma_max] via box bounds
# on s; w = eps_w + (1 - k * eps_w) * softmax([logits, 0]).


def _weights_from_logits(logits, k, eps_w):
    full = np.concatenate([logits, [0.0]])
    full = full - full.max()
    soft = np.exp(full)
    soft /= soft.sum()
    return eps_w + (1.0 - k * eps_w) * soft


def _logits_from_weights(w, eps_w):
    k = w.shape[0]
    inner = np.maximum((w - eps_w) / (1.0 - k * eps_w), 1e-12)
    logits = np.log(inner)
    return np.clip(logits[:-1] - logits[-1], -_LOGIT_CAP, _LOGIT_CAP)


class _NllObjective:
    """NLL as a function of reparameterized free coordinates.

    Layout: [s] + [k-1 weight logits] (+ flattened free centers when
    ``with_centers``). With a tied pair, the second tied row is dropped from
    the free center block and mirrored back on evaluation.
    """

    def __init__(self, data, m, is_context, bounds, k, with_centers, centers=None, pair=None):
        self.data = data
        self.m = m
        self.ctx = is_context
        self.bounds = bounds
        self.k = k
        self.with_centers = with_centers
        self.fixed_centers = centers
        self.pair = pair
        self.eps_w = bounds.eps_w
        d = data.d
        self.free_rows = [j for j in range(k) if pair is None or j != pair[1]]
        self.n_center_params = len(self.free_rows) * d if with_centers else 0

    def pack(self, sigma, weights, centers):
        x = [np.log(np.clip(sigma, self.bounds.sigma_min, self.bounds.sigma_max))]
        parts = [np.asarray(x), _logits_from_weights(weights, self.eps_w)]
        if self.with_centers:
            parts.append(np.asarray(centers)[self.free_rows].ravel())
        return np.concatenate(parts)

    def unpack(self, x):
        s = x[0]
        logits = x[1 : self.k]
        sigma = float(np.exp(np.clip(s, np.log(self.bounds.sigma_min), np.log(self.bounds.sigma_max))))
        weights = _weights_from_logits(logits, self.k, self.eps_w)
        if self.with_centers:
            free = x[self.k :].reshape(len(self.free_rows), self.data.d)
            centers = np.empty((self.k, self.data.d))
            centers[self.free_rows] = free
            if self.pair is not None:
                centers[self.pair[1]] = centers[self.pair[0]]
        else:
            centers = self.fixed_centers
        return sigma, weights, centers

    def scipy_bounds(self):
        lo = [np.log(self.bounds.sigma_min)] + [-_LOGIT_CAP] * (self.k - 1)
        hi = [np.log(self.bounds.sigma_max)] + [_LOGIT_CAP] * (self.k - 1)
        if self.with_centers:
            box = self.bounds.center_box
            if box is None:
                lo += [-np.inf] * self.n_center_params
                hi += [np.inf] * self.n_center_params
            else:
                for _ in self.free_rows:
                    lo += list(box[:, 0])
                    hi += list(box[:, 1])
        return list(zip(lo, hi))

    def params_at(self, x):
        sigma, weights, centers = self.unpack(x)
        return ModelParams(
            sigma=sigma, centers=centers, weights=weights, fuzziness=self.m, eps_w=self.eps_w
        )

    def __call__(self, x):
        params = self.params_at(x)
        try:
            est = estimate_log_c(params, self.ctx.samples, self.ctx.log_q)
            value = core.nll(self.data, params, est.log_c)
        except NumericalError:
            return 1e30
        return value if np.isfinite(value) else 1e30


def _nll_at(data, params, ctx):
    est = estimate_log_c(params, ctx.samples, ctx.log_q)
    return core.nll(data, params, est.log_c), est


def optimize_scale_weights(data, centers, m, is_context, init, bounds, max_iters=100):
    """L-BFGS minimization of NLL over (sigma, w) with centers and m fixed.

    Gradients come from central finite differences on the reparameterized
    objective. The returned value never exceeds the initial one (the best
    iterate wins); a line-search failure yields a ``weak-step`` flag.
    """
    sigma0, w0 = init
    obj = _NllObjective(data, m, is_context, bounds, k=w0.shape[0], with_centers=False,
                        centers=np.asarray(centers, dtype=float))
    x0 = obj.pack(sigma0, w0, None)
    f0 = obj(x0)
    # Coarse probe along sigma: the estimated NLL flattens out at very large
    # sigma, and a long first line-search step can jump onto that plateau
    # and get stuck there. Starting from the best of a few scale factors
    # keeps the quasi-Newton step inside the right basin.
    s_lo, s_hi = np.log(bounds.sigma_min), np.log(bounds.sigma_max)
    start = x0.copy()
    f_start = f0
    for factor in (0.25, 0.5, 2.0, 4.0):
        cand = x0.copy()
        cand[0] = np.clip(x0[0] + np.log(factor), s_lo, s_hi)
        f_cand = obj(cand)
        if f_cand < f_start:
            start, f_start = cand, f_cand
    x0 = start
    res = minimize(
        obj,
        x0,
        method="L-BFGS-B",
        jac="3-point",
        bounds=obj.scipy_bounds(),
        options={"maxiter": max_iters, "finite_diff_rel_step": _FD_STEP},
    )
    flags = []
    if not res.success:
        flags.append(Flag("weak-step", str(res.message)))
    if res.fun <= f0 + 1e-8:
        sigma, weights, _ = obj.unpack(res.x)
        value = float(res.fun)
    else:
        sigma, weights, value = sigma0, w0, float(f0)
        flags.append(Flag("weak-step", "optimizer did not improve; kept initial point"))
    return sigma, weights, value, flags


# ---------------------------------------------------------------------------
# the MM loop


def fit_fixed_m(
    data: Dataset,
    k,
    m,
    config: FitConfig,
    is_context: ISContext | None = None,
    init: ModelParams | None = None,
    tie_pair=None,
) -> FitResult:
    """Algorithm: MM loop then post-MM joint refinement, at fixed fuzziness.

    ``tie_pair=(a, b)`` constrains centers a and b to a single shared vector
    in every update (used by the equal-centers likelihood-ratio test).
    """
    bounds = config.bounds or ParamBounds.for_data(data.values)
    bounds.validate_k(k)
    if is_context is None:
        is_context = ISContext.build(data, config)
    params = init or init_params(data, k, m, seed=config.seed, bounds=bounds)
    if params.fuzziness != m:
        params = replace(params, fuzziness=m)
    if tie_pair is not None:
        a, b = tie_pair
        if not 0 <= a < b < k:
            raise ValidationError("invalid-pair", f"need 0 <= a < b < k, got {tie_pair}")
        params = replace(params, centers=_tie_centers(params.centers, tie_pair))

    flags = []
    trace = []
    u = core.memberships(data, params).values
    nll_prev, est = _nll_at(data, params, is_context)
    if not np.isfinite(nll_prev):
        raise NumericalError("fit-diverged", "non-finite NLL at initialization")

    converged = False
    reason = "max-iters"
    for it in range(config.max_mm_iters):
        theta_prev = params.flat()
        rec = {"iter": it, "nll_pre": nll_prev}

        # (a) membership update: minimizes the surrogate over U
        rec["surrogate_pre_membership"] = core.surrogate_value(data, u, params)
        u = core.memberships(data, params).values
        rec["surrogate_post_membership"] = core.surrogate_value(data, u, params)

        # (b) centroid update: minimizes the surrogate over V
        centers, cflags = _update_centroids_tied(
            data, MembershipMatrix(u), m, tie_pair, previous=params.centers
        )
        flags.extend(cflags)
        params = replace(params, centers=centers)
        rec["surrogate_post_centroid"] = core.surrogate_value(data, u, params)

        # (c) scale/weight update: minimizes the IS-estimated NLL
        nll_pre_sw, _ = _nll_at(data, params, is_context)
        rec["nll_pre_sw"] = nll_pre_sw
        sigma, weights, nll_now, sflags = optimize_scale_weights(
            data, params.centers, m, is_context, (params.sigma, params.weights), bounds
        )
        flags.extend(sflags)
        params = replace(params, sigma=sigma, weights=weights)
        rec["nll_post_sw"] = nll_now

        if not np.isfinite(nll_now):
            raise NumericalError("fit-diverged", f"non-finite NLL at iteration {it}")

        theta_change = float(np.linalg.norm(params.flat() - theta_prev))
        rec["nll"] = nll_now
        rec["wfcm_loss"] = core.wfcm_loss(data, params)
        rec["param_change"] = theta_change
        trace.append(rec)

        if theta_change <= config.theta_tol:
            converged, reason = True, "theta-tol"
        elif nll_prev - nll_now <= config.nll_tol:
            converged, reason = True, "nll-tol"
        nll_prev = nll_now
        if converged:
            break

    # post-MM refinement: joint quasi-Newton over (sigma, V, w)
    post_bounds = bounds
    if post_bounds.center_box is None:
        post_bounds = ParamBounds.for_data(
            data.values,
            sigma_min=bounds.sigma_min,
            sigma_max=bounds.sigma_max,
            eps_w=bounds.eps_w,
            m_min=bounds.m_min,
            m_max=bounds.m_max,
        )
    obj = _NllObjective(
        data, m, is_context, post_bounds, k=k, with_centers=True, pair=tie_pair
    )
    x0 = obj.pack(params.sigma, params.weights, params.centers)
    f0 = obj(x0)
    res = minimize(
        obj,
        x0,
        method="L-BFGS-B",
        jac="3-point",
        bounds=obj.scipy_bounds(),
        options={"maxiter": config.post_mm_max_iters, "finite_diff_rel_step": _FD_STEP},
    )
    if res.fun <= f0 + 1e-8 and np.isfinite(res.fun):
        params = obj.params_at(res.x)
        nll_final = float(res.fun)
    else:
        nll_final = float(f0)
        flags.append(Flag("weak-step", "post-MM refinement kept the MM iterate"))
    nll_final_check, est = _nll_at(data, params, is_context)
    nll_final = float(nll_final_check)
    trace.append({"iter": "post-mm", "nll": nll_final, "nll_pre": float(f0)})

    return FitResult(
        params=params,
        nll=nll_final,
        log_c=est,
        memberships=core.memberships(data, params),
        trace=tuple(trace),
        m_grid_table={m: nll_final},
        converged=converged,
        reason=reason,
        flags=tuple(flags),
    )


def fit(data: Dataset, k, config: FitConfig, is_context: ISContext | None = None,
        tie_pair=None) -> FitResult:
    """Full fit: every m on the grid shares one proposal sample set; the
    result at the NLL-minimizing m is returned with the grid table attached.
    """
    if is_context is None:
        is_context = ISContext.build(data, config)
    bounds = config.bounds or ParamBounds.for_data(data.values)
    table = {}
    results = {}
    all_flags = []
    for m in config.m_grid:
        best = None
        for r in range(max(1, config.restarts)):
            cfg_r = replace(config, seed=config.seed + 7919 * r)
            # restart schedule: FCM-polished start, then proposal-mean
            # start, then raw seed points — FCM's optimum is a strong
            # attractor, so later restarts must come from other basins
            if r == 0:
                init = None
            elif r == 1:
                init = _proposal_init(data, k, m, is_context.proposal, bounds)
                if init is None:
                    init = _seed_init(data, k, m, cfg_r.seed, bounds)
            else:
                init = _seed_init(data, k, m, cfg_r.seed, bounds)
            try:
                res = fit_fixed_m(
                    data, k, m, cfg_r, is_context=is_context, init=init, tie_pair=tie_pair
                )
            except NumericalError as exc:
                all_flags.append(Flag("grid-fit-failed", f"m={m} restart={r}: {exc.code}"))
                continue
            if best is None or res.nll < best.nll:
                best = res
        if best is None:
            table[m] = float("nan")
            continue
        table[m] = best.nll
        results[m] = best
    if not results:
        raise NumericalError("fit-failed", "every m-grid fit failed")
    m_star = min(results, key=lambda m: results[m].nll)
    winner = results[m_star]
    return replace(
        winner, m_grid_table=table, flags=winner.flags + tuple(all_flags)
    )
