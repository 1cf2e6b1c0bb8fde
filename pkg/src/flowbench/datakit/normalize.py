"""Min-max scaling of operating parameters, fitted on training cases only."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInputError, InputError


@dataclass
class NormalizationStats:
    names: tuple[str, ...]
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)
        if np.any(self.max < self.min):
            raise InputError("normalization max below min")

    @classmethod
    def fit(cls, params_list) -> "NormalizationStats":
        params_list = list(params_list)
        if not params_list:
            raise EmptyInputError("cannot fit normalization on zero cases")
        names = params_list[0].names()
        if any(p.names() != names for p in params_list):
            raise InputError("cases with different parameter layouts cannot share normalization")
        vecs = np.stack([p.vector() for p in params_list])
        return cls(names, vecs.min(axis=0), vecs.max(axis=0))

    def to_json(self) -> dict:
        return dict(names=list(self.names), min=self.min.tolist(), max=self.max.tolist())

    @classmethod
    def from_json(cls, d) -> "NormalizationStats":
        return cls(d["names"], d["min"], d["max"])


def normalize_params(params, stats: NormalizationStats) -> np.ndarray:
    """(v - min) / (max - min); parameters constant over training map to 0. No clipping."""
    v = params.vector() if hasattr(params, "vector") else np.asarray(params, dtype=np.float64)
    span = stats.max - stats.min
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (v - stats.min) / safe, 0.0)
