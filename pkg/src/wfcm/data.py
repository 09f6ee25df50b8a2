"""Core parameter and data containers.

All containers validate on construction and are treated as immutable
afterwards; numpy arrays are copied in and flagged read-only so instances
can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import ValidationError

#: Default floor on cluster weights (identifiability requires a strictly
#: positive lower bound).
DEFAULT_EPS_W = 1e-6

#: Squared-distance floor below which a point counts as coincident with a
#: center.
DISTANCE_FLOOR = 1e-300


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector: scale, centers, cluster weights, fuzziness.

    Attributes
    ----------
    sigma : float
        Positive scale parameter.
    centers : ndarray of shape (k, d)
        Cluster centers, one per row.
    weights : ndarray of shape (k,)
        Cluster weights on the open simplex (each >= ``eps_w``, summing to 1).
    fuzziness : float
        Softness exponent, strictly greater than 1.
    """

    sigma: float
    centers: np.ndarray
    weights: np.ndarray
    fuzziness: float
    eps_w: float = DEFAULT_EPS_W

    def __post_init__(self):
        object.__setattr__(self, "centers", _readonly(np.atleast_2d(self.centers)))
        object.__setattr__(self, "weights", _readonly(np.ravel(self.weights)))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "fuzziness", float(self.fuzziness))
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValidationError("invalid-sigma", f"sigma must be > 0, got {self.sigma}")
        if not np.isfinite(self.fuzziness) or self.fuzziness <= 1:
            raise ValidationError(
                "invalid-fuzziness", f"fuzziness must be > 1, got {self.fuzziness}"
            )
        if not np.all(np.isfinite(self.centers)):
            raise ValidationError("invalid-centers", "centers contain non-finite entries")
        k, d = self.centers.shape
        if k < 1 or d < 1:
            raise ValidationError("invalid-centers", "need k >= 1 and d >= 1")
        if self.weights.shape != (k,):
            raise ValidationError(
                "invalid-weights", f"weights shape {self.weights.shape} != ({k},)"
            )
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValidationError(
                "invalid-weights", f"weights sum to {self.weights.sum()!r}, expected 1"
            )
        if np.any(self.weights < self.eps_w - 1e-15):
            raise ValidationError(
                "invalid-weights", f"every weight must be >= eps_w = {self.eps_w}"
            )

    @property
    def k(self):
        return self.centers.shape[0]

    @property
    def d(self):
        return self.centers.shape[1]

    def permuted(self, perm):
        """Return a copy with centers and weights jointly permuted."""
        perm = np.asarray(perm, dtype=int)
        return ModelParams(
            sigma=self.sigma,
            centers=self.centers[perm],
            weights=self.weights[perm],
            fuzziness=self.fuzziness,
            eps_w=self.eps_w,
        )

    def flat(self):
        """Parameter vector (sigma, centers.ravel(), weights) used for norms."""
        return np.concatenate([[self.sigma], self.centers.ravel(), self.weights])

    def to_dict(self):
        return {
            "sigma": self.sigma,
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "m": self.fuzziness,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            sigma=doc["sigma"],
            centers=np.asarray(doc["centers"], dtype=float),
            weights=np.asarray(doc["weights"], dtype=float),
            fuzziness=doc["m"],
        )

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ParamBounds:
    """Compact parameter space used by the optimizer.

    ``center_box`` is a (d, 2) array of per-dimension closed intervals.
    """

    sigma_min: float = 1e-4
    sigma_max: float = 1e4
    eps_w: float = DEFAULT_EPS_W
    m_min: float = 1.01
    m_max: float = 100.0
    center_box: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValidationError("invalid-bounds", "need 0 < sigma_min < sigma_max")
        if not 1 < self.m_min < self.m_max:
            raise ValidationError("invalid-bounds", "need 1 < m_min < m_max")
        if self.eps_w <= 0:
            raise ValidationError("invalid-bounds", "eps_w must be positive")
        if self.center_box is not None:
            box = _readonly(np.atleast_2d(self.center_box))
            if box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
                raise ValidationError("invalid-bounds", "center_box must be (d, 2) intervals")
            object.__setattr__(self, "center_box", box)

    def validate_k(self, k):
        if self.eps_w >= 1.0 / k:
            raise ValidationError("invalid-bounds", f"eps_w must be < 1/k = {1.0 / k}")

    @classmethod
    def for_data(cls, values, inflate=0.5, **kwargs):
        """Bounds with a center box equal to the data bounding box inflated
        by ``inflate`` on each side."""
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        pad = inflate * np.maximum(hi - lo, 1e-12)
        box = np.stack([lo - pad, hi + pad], axis=1)
        return cls(center_box=box, **kwargs)


@dataclass(frozen=True)
class Dataset:
    """An n x d observation matrix with optional column names."""

    values: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_2d(self.values)))
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("invalid-data", "data contains non-finite entries")
        if self.values.shape[0] < 1:
            raise ValidationError("invalid-data", "need at least one observation")
        if self.column_names is not None and len(self.column_names) != self.values.shape[1]:
            raise ValidationError("invalid-data", "column_names length mismatch")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def columns(self):
        if self.column_names is not None:
            return list(self.column_names)
        return [f"x{j}" for j in range(self.d)]

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        return cls(values=frame.to_numpy(dtype=float), column_names=list(frame.columns))

    def to_csv(self, path):
        pd.DataFrame(self.values, columns=self.columns()).to_csv(path, index=False)


@dataclass(frozen=True)
class MembershipMatrix:
    """Row-stochastic n x k fuzzy assignment matrix."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_2d(self.values)))
        v = self.values
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValidationError("invalid-membership", "entries must lie in [0, 1]")
        rows = v.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-10):
            raise ValidationError("invalid-membership", "rows must sum to 1")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]

    def hard_labels(self):
        return np.argmax(self.values, axis=1)


@dataclass(frozen=True)
class Flag:
    """Non-fatal diagnostic raised during a computation."""

    code: str
    detail: str = ""

    def __str__(self):
        return f"{self.code}: {self.detail}" if self.detail else self.code


def flags_to_list(flags):
    return [{"code": f.code, "detail": f.detail} for f in flags]
