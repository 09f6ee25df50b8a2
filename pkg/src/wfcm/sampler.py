"""Metropolis-Hastings sampling from the induced density.

A random-walk chain on the unnormalized log-density -E_theta(x): the
normalizing constant cancels in the acceptance ratio. The proposal mixes
local Gaussian steps with occasional large isotropic jumps whose scale
matches the typical distance between cluster centers, which helps the
chain hop between well-separated modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DISTANCE_FLOOR, Dataset, Flag, ModelParams
from .exceptions import ValidationError


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 20000
    burn_in_fraction: float = 0.2
    local_step_sd: float = 1.0
    jump_probability: float = 0.1
    jump_scale: float | str = "auto"
    thinning: int | None = None
    seed: int = 0
    initial_point: np.ndarray | str = "center-mixture"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("invalid-chain", "iterations must be >= 1")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValidationError("invalid-chain", "burn_in_fraction must be in [0, 1)")
        if self.local_step_sd <= 0:
            raise ValidationError("invalid-chain", "local_step_sd must be positive")
        if not 0 <= self.jump_probability <= 1:
            raise ValidationError("invalid-chain", "jump_probability must be in [0, 1]")
        if self.thinning is not None and self.thinning < 1:
            raise ValidationError("invalid-chain", "thinning must be >= 1")


def _resolve_jump_scale(config: ChainConfig, params: ModelParams):
    if config.jump_scale != "auto":
        scale = float(config.jump_scale)
        if scale <= 0:
            raise ValidationError("invalid-chain", "jump_scale must be positive")
        return scale
    if params.k == 1:
        return 5.0 * config.local_step_sd
    diffs = params.centers[:, None, :] - params.centers[None, :, :]
    dists = np.sqrt(np.einsum("abd,abd->ab", diffs, diffs))
    iu = np.triu_indices(params.k, 1)
    mean_dist = float(dists[iu].mean())
    return mean_dist if mean_dist > 0 else 5.0 * config.local_step_sd


def _neg_energy(x, centers, log_w, inv_m1, inv_sig2, m):
    """-E_theta(x) for a single point, stable in log space."""
    diff = x - centers
    d2 = np.einsum("kd,kd->k", diff, diff)
    if np.any(d2 < DISTANCE_FLOOR):
        return 0.0
    t = -(log_w + np.log(d2)) * inv_m1
    tmax = t.max()
    log_sw = tmax + np.log(np.exp(t - tmax).sum())
    return -inv_sig2 * np.exp(-(m - 1.0) * log_sw)


def mh_sample(params: ModelParams, count, config: ChainConfig):
    """Run one chain and return ``(Dataset, diagnostics)``.

    Burn-in is discarded, the remainder thinned (by default just enough that
    one chain yields ``count`` points), and the first ``count`` retained
    draws are returned. Diagnostics report the acceptance rate, burn-in
    length, thinning, and per-coordinate chain means.
    """
    if count < 1:
        raise ValidationError("invalid-count", "count must be >= 1")
    rng = np.random.default_rng(config.seed)
    d = params.d
    burn = int(np.floor(config.iterations * config.burn_in_fraction))
    kept = config.iterations - burn
    thin = config.thinning or max(1, kept // count)
    if (kept + thin - 1) // thin < count and config.thinning is None:
        thin = 1
    if kept < count:
        raise ValidationError(
            "invalid-chain", f"{kept} post-burn-in draws cannot yield {count} samples"
        )

    if isinstance(config.initial_point, str):
        if config.initial_point != "center-mixture":
            raise ValidationError("invalid-chain", f"unknown start {config.initial_point!r}")
        j = rng.integers(params.k)
        x = params.centers[j] + config.local_step_sd * rng.standard_normal(d)
    else:
        x = np.array(config.initial_point, dtype=float)
        if x.shape != (d,):
            raise ValidationError("invalid-chain", "initial_point dimension mismatch")

    jump_scale = _resolve_jump_scale(config, params)
    log_w = np.log(params.weights)
    inv_m1 = 1.0 / (params.fuzziness - 1.0)
    inv_sig2 = 1.0 / params.sigma**2
    m = params.fuzziness
    centers = params.centers

    steps = rng.standard_normal((config.iterations, d))
    jumps = rng.random(config.iterations) < config.jump_probability
    scales = np.where(jumps, jump_scale, config.local_step_sd)
    log_us = np.log(rng.random(config.iterations))

    log_f = _neg_energy(x, centers, log_w, inv_m1, inv_sig2, m)
    accepted_post = 0
    chain_sum = np.zeros(d)
    out = np.empty((count, d))
    n_out = 0
    kept_idx = 0
    for t in range(config.iterations):
        prop = x + scales[t] * steps[t]
        log_f_prop = _neg_energy(prop, centers, log_w, inv_m1, inv_sig2, m)
        if log_us[t] < log_f_prop - log_f:
            x = prop
            log_f = log_f_prop
            if t >= burn:
                accepted_post += 1
        if t >= burn:
            chain_sum += x
            if kept_idx % thin == 0 and n_out < count:
                out[n_out] = x
                n_out += 1
            kept_idx += 1

    if n_out < count:
        raise ValidationError("invalid-chain", "thinning left fewer draws than requested")

    rate = accepted_post / max(kept, 1)
    flags = []
    if rate < 0.01 or rate > 0.99:
        flags.append(Flag("acceptance-rate", f"post-burn-in acceptance rate {rate:.3f}"))
    diagnostics = {
        "acceptance_rate": rate,
        "burn_in": burn,
        "thinning": thin,
        "jump_scale": jump_scale,
        "seed": config.seed,
        "chain_means": (chain_sum / max(kept, 1)).tolist(),
        "flags": [str(f) for f in flags],
    }
    return Dataset(values=out), diagnostics
