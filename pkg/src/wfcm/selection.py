"""Weighted Xie-Beni validity index and (k, m) grid selection.

The index is the ratio of weighted fuzzy within-cluster scatter to the
minimum squared center separation; smaller is better, but values below
1e-3 are flagged rather than trusted, and an elbow suggestion accompanies
the raw argmin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .data import DISTANCE_FLOOR, Dataset, Flag, ModelParams, flags_to_list
from .estimator import FitConfig, fit
from .exceptions import NumericalError, ValidationError
from .model import _sq_dists, fcm_memberships, memberships

#: XBI values below this are flagged as suspiciously small.
SMALL_XBI = 1e-3


def _min_center_separation(centers):
    k = centers.shape[0]
    diffs = centers[:, None, :] - centers[None, :, :]
    d2 = np.einsum("jld,jld->jl", diffs, diffs)
    iu = np.triu_indices(k, 1)
    return float(d2[iu].min())


def weighted_xbi(data: Dataset, params: ModelParams):
    """Weighted Xie-Beni index at the model's own closed-form memberships.

    numerator = sum_ij w_j u_ij^m ||x_i - v_j||^2, denominator = minimum
    squared distance between two centers. Degenerate models are an error
    (``xbi-degenerate``): coincident centers, or a cluster weight at the
    simplex floor — a floor-weight cluster contributes nothing to the
    numerator regardless of its scatter, which collapses the index.
    """
    if params.k < 2:
        raise ValidationError("invalid-xbi", "need at least two clusters")
    sep = _min_center_separation(params.centers)
    if sep < DISTANCE_FLOOR:
        raise NumericalError("xbi-degenerate", "two centers coincide; separation is 0")
    if params.weights.min() <= max(10.0 * params.eps_w, 1e-3 / params.k):
        raise NumericalError("xbi-degenerate", "a cluster weight sits at the simplex floor")
    u = memberships(data, params).values
    d2 = _sq_dists(data.values, params.centers)
    num = float(np.sum(params.weights[None, :] * u**params.fuzziness * d2))
    return num / sep


def classic_xbi(data: Dataset, centers, m):
    """Unweighted Xie-Beni index at classic FCM memberships."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] < 2:
        raise ValidationError("invalid-xbi", "need at least two clusters")
    sep = _min_center_separation(centers)
    if sep < DISTANCE_FLOOR:
        raise NumericalError("xbi-degenerate", "two centers coincide; separation is 0")
    u = fcm_memberships(data, centers, m)
    d2 = _sq_dists(data.values, centers)
    return float(np.sum(u**m * d2)) / sep


@dataclass(frozen=True)
class ValidityGrid:
    k_values: tuple
    m_values: tuple
    xbi: np.ndarray  # (len(k), len(m)); NaN marks failed cells
    best: tuple  # (k*, m*)
    elbow_k: int | None
    cell_flags: dict  # (k, m) -> list of flag codes

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, k in enumerate(self.k_values):
            for j, m in enumerate(self.m_values):
                rows.append(
                    {
                        "k": k,
                        "m": m,
                        "xbi": self.xbi[i, j],
                        "flags": ";".join(self.cell_flags.get((k, m), [])),
                    }
                )
        return pd.DataFrame(rows)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def to_dict(self):
        return {
            "k_values": list(self.k_values),
            "m_values": list(self.m_values),
            "xbi": [[None if np.isnan(v) else v for v in row] for row in self.xbi],
            "best": {"k": self.best[0], "m": self.best[1]},
            "elbow_k": self.elbow_k,
            "cell_flags": {f"{k},{m}": v for (k, m), v in self.cell_flags.items()},
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _elbow_suggestion(k_values, profile, rel_drop=0.10):
    """First k where the relative XBI drop to the next k falls below 10%."""
    finite = np.isfinite(profile)
    if finite.sum() < 2:
        return None
    for i in range(len(k_values) - 1):
        if not (finite[i] and finite[i + 1]):
            continue
        if profile[i] <= 0:
            return k_values[i]
        drop = (profile[i] - profile[i + 1]) / profile[i]
        if drop < rel_drop:
            return k_values[i]
    return k_values[-1]


def select_k(data: Dataset, k_values, m_values, fit_config: FitConfig) -> ValidityGrid:
    """Fit each (k, m) cell and score it with the weighted Xie-Beni index.

    The full grid is returned so callers can apply the elbow heuristic;
    ``best`` is the raw argmin over finite cells, with very small values
    flagged ``suspiciously-small`` rather than excluded.
    """
    k_values = tuple(int(k) for k in k_values)
    m_values = tuple(float(m) for m in m_values)
    if not k_values or not m_values:
        raise ValidationError("invalid-grid", "k_values and m_values must be non-empty")
    if any(k < 2 for k in k_values):
        raise ValidationError("invalid-grid", "all k must be >= 2")

    xbi = np.full((len(k_values), len(m_values)), np.nan)
    cell_flags = {}
    for i, k in enumerate(k_values):
        for j, m in enumerate(m_values):
            cfg = replace(fit_config, m_grid=(m,))
            codes = []
            try:
                res = fit(data, k, cfg)
                value = weighted_xbi(data, res.params)
                xbi[i, j] = value
                if value < SMALL_XBI:
                    codes.append("suspiciously-small")
                codes.extend(sorted({f.code for f in res.flags}))
            except (NumericalError, ValidationError) as exc:
                codes.append(f"cell-failed:{exc.code}")
            if codes:
                cell_flags[(k, m)] = codes

    if not np.any(np.isfinite(xbi)):
        raise NumericalError("selection-failed", "every (k, m) cell failed")
    i, j = np.unravel_index(np.nanargmin(xbi), xbi.shape)
    profile = np.array(
        [np.nanmin(row) if np.any(np.isfinite(row)) else np.nan for row in xbi]
    )  # best over m for each k
    return ValidityGrid(
        k_values=k_values,
        m_values=m_values,
        xbi=xbi,
        best=(k_values[i], m_values[j]),
        elbow_k=_elbow_suggestion(k_values, profile),
        cell_flags=cell_flags,
    )
