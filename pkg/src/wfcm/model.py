"""Pure evaluations of the weighted fuzzy c-means loss, the induced density
energy, closed-form memberships, and the log-likelihood.

Everything is computed in log space: the per-cluster terms
``(w_j * d_ij^2)^(-1/(m-1))`` overflow for small distances or m close to 1,
so aggregations go through log-sum-exp.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp, softmax

from .data import DISTANCE_FLOOR, Dataset, MembershipMatrix, ModelParams
from .exceptions import ValidationError


class AtCenter(float):
    """Sentinel returned by :func:`sigma_w` when the point coincides with a
    center. Compares equal to +inf; carries the coincident center index."""

    def __new__(cls, center_index):
        obj = super().__new__(cls, math.inf)
        obj.center_index = int(center_index)
        return obj


def _sq_dists(X, centers):
    """Squared Euclidean distances, shape (n, k)."""
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _log_terms(d2, params):
    """log of (w_j d_ij^2)^(-1/(m-1)) with coincident entries masked.

    Returns (log_terms, at_center_mask). Masked entries are +inf in the
    log-term array (they dominate any log-sum-exp).
    """
    at = d2 < DISTANCE_FLOOR
    with np.errstate(divide="ignore"):
        logs = np.log(params.weights)[None, :] + np.log(np.where(at, 1.0, d2))
    terms = -logs / (params.fuzziness - 1.0)
    terms = np.where(at, np.inf, terms)
    return terms, at


def sigma_w(x, params: ModelParams):
    """Weighted inverse-distance aggregation Sigma_w(x).

    Returns ``sum_j (w_j ||x - v_j||^2)^(-1/(m-1))`` computed stably in log
    space, or an :class:`AtCenter` sentinel (== +inf) if x lies within the
    squared-distance floor of some center.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("invalid-point", "x contains non-finite entries")
    d2 = _sq_dists(x[None, :], params.centers)[0]
    hits = np.flatnonzero(d2 < DISTANCE_FLOOR)
    if hits.size:
        return AtCenter(hits[0])
    terms, _ = _log_terms(d2[None, :], params)
    return float(np.exp(logsumexp(terms[0])))


def log_energies(X, params: ModelParams):
    """log E_theta(x_i) for each row of X; -inf where x coincides with a
    center (energy extends continuously to 0 there)."""
    d2 = _sq_dists(X, params.centers)
    terms, at = _log_terms(d2, params)
    log_sw = logsumexp(terms, axis=1)
    out = -2.0 * np.log(params.sigma) - (params.fuzziness - 1.0) * log_sw
    out[at.any(axis=1)] = -np.inf
    return out


def energies(X, params: ModelParams):
    """Density energies E_theta(x_i) = sigma^-2 [Sigma_w(x_i)]^-(m-1)."""
    return np.exp(log_energies(np.atleast_2d(np.asarray(X, dtype=float)), params))


def energy(x, params: ModelParams):
    """Energy of a single point; exactly 0 at a center."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("invalid-point", "x contains non-finite entries")
    return float(energies(x[None, :], params)[0])


def wfcm_loss(data: Dataset, params: ModelParams):
    """Weighted FCM loss: sum_i [sum_j (w_j d_ij^2)^(-1/(m-1))]^(-(m-1)).

    Equals sigma^2 times the total energy; points at a center contribute 0.
    """
    le = log_energies(data.values, params)
    finite = le[le > -np.inf]
    if finite.size == 0:
        return 0.0
    return float(params.sigma**2 * np.exp(logsumexp(finite)))


def fcm_loss(data: Dataset, centers, m):
    """Classic unweighted FCM objective sum_i [sum_j d_ij^(-2/(m-1))]^(-(m-1))."""
    if m <= 1:
        raise ValidationError("invalid-fuzziness", "m must be > 1")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d2 = _sq_dists(data.values, centers)
    at = (d2 < DISTANCE_FLOOR).any(axis=1)
    with np.errstate(divide="ignore"):
        terms = -np.log(np.where(d2 < DISTANCE_FLOOR, 1.0, d2)) / (m - 1.0)
    per_point = np.exp(-(m - 1.0) * logsumexp(terms, axis=1))
    per_point[at] = 0.0
    return float(per_point.sum())


def _membership_rows(d2, log_terms, at):
    """Softmax rows with at-center rows replaced by (split) indicators."""
    u = np.empty_like(d2)
    regular = ~at.any(axis=1)
    if regular.any():
        u[regular] = softmax(log_terms[regular], axis=1)
    tied = ~regular
    if tied.any():
        rows = at[tied].astype(float)
        u[tied] = rows / rows.sum(axis=1, keepdims=True)
    return u


def memberships(data: Dataset, params: ModelParams) -> MembershipMatrix:
    """Closed-form weighted memberships (row-stochastic).

    u_ij = (w_j d_ij^2)^(-1/(m-1)) / sum_l (w_l d_il^2)^(-1/(m-1)),
    computed via a numerically stable softmax. A point within the distance
    floor of exactly one center gets an indicator row; ties split equally.
    """
    d2 = _sq_dists(data.values, params.centers)
    terms, at = _log_terms(d2, params)
    # softmax ignores the +inf convention; recompute without the mask
    with np.errstate(divide="ignore"):
        clean = -(np.log(params.weights)[None, :] + np.log(np.where(at, 1.0, d2))) / (
            params.fuzziness - 1.0
        )
    return MembershipMatrix(_membership_rows(d2, np.where(at, -np.inf, clean), at))


def fcm_memberships(data: Dataset, centers, m):
    """Classic unweighted membership rows for given centers (as ndarray)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d2 = _sq_dists(data.values, centers)
    at = d2 < DISTANCE_FLOOR
    with np.errstate(divide="ignore"):
        terms = -np.log(np.where(at, 1.0, d2)) / (m - 1.0)
    return _membership_rows(d2, np.where(at, -np.inf, terms), at)


def nll(data: Dataset, params: ModelParams, log_c):
    """Negative log-likelihood given an external estimate of log C(theta).

    NLL = -n log C + sigma^-2 * J_wfcm = -n log C + sum_i E_theta(x_i).
    """
    log_c = float(log_c)
    if not math.isfinite(log_c):
        raise ValidationError("invalid-logc", "log_c must be finite")
    return -data.n * log_c + wfcm_loss(data, params) / params.sigma**2


def surrogate_value(data: Dataset, u, params: ModelParams):
    """Blockwise-MM surrogate sum_ij w_j u_ij^m d_ij^2 at arbitrary u."""
    d2 = _sq_dists(data.values, params.centers)
    return float(np.sum(params.weights[None, :] * u**params.fuzziness * d2))


def energy_limit_oracle(x, params: ModelParams, case):
    """Limiting-form energies used as test oracles at extreme fuzziness.

    ``m_to_1``: min_j w_j ||x - v_j||^2 / sigma^2.
    ``m_eq_2``: sigma^-2 / sum_j (w_j d_j^2)^(-1) (requires m == 2).
    ``m_to_inf``: 0 (the energy vanishes pointwise).
    """
    x = np.asarray(x, dtype=float)
    d2 = _sq_dists(x[None, :], params.centers)[0]
    if case == "m_to_1":
        return float(np.min(params.weights * d2) / params.sigma**2)
    if case == "m_eq_2":
        if params.fuzziness != 2:
            raise ValidationError("invalid-case", "m_eq_2 requires fuzziness == 2")
        if np.any(d2 < DISTANCE_FLOOR):
            return 0.0
        return float(1.0 / (params.sigma**2 * np.sum(1.0 / (params.weights * d2))))
    if case == "m_to_inf":
        return 0.0
    raise ValidationError("invalid-case", f"unknown case {case!r}")
