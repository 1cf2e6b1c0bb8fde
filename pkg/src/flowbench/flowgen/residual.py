"""Normalized imbalance of an assembled finite-volume system a_P Φ_P = Σ a_nb Φ_nb + b."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class Coefficients:
    """Per-cell a_P, neighbour matrix a_nb (row = cell, column = neighbour) and source b."""

    a_p: np.ndarray
    a_nb: sp.spmatrix
    b: np.ndarray

    @classmethod
    def from_system(cls, matrix, rhs) -> "Coefficients":
        """Split ``A x = rhs`` into diag(a_P) - a_nb."""
        matrix = sp.csr_matrix(matrix)
        a_p = matrix.diagonal()
        a_nb = sp.diags(a_p) - matrix
        return cls(np.asarray(a_p, dtype=np.float64), sp.csr_matrix(a_nb), np.asarray(rhs, dtype=np.float64))


@dataclass
class ResidualReport:
    residuals: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    max_divergence: float = 0.0

    def worst(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def merge_max(self, other: "ResidualReport") -> "ResidualReport":
        res = {k: max(self.residuals.get(k, 0.0), v) for k, v in other.residuals.items()}
        its = {k: self.iterations.get(k, 0) + v for k, v in other.iterations.items()}
        return ResidualReport(res, its, max(self.max_divergence, other.max_divergence))

    def to_dict(self) -> dict:
        return dict(residuals=dict(self.residuals), iterations=dict(self.iterations),
                    max_divergence=self.max_divergence)


def scaled_residual(coeffs: Coefficients, values) -> float:
    """R = Σ|Σ a_nb Φ_nb + b - a_P Φ_P| / Σ|a_P Φ_P|; 0/0 is 0, x/0 is +inf with a warning."""
    phi = np.asarray(values, dtype=np.float64).reshape(-1)
    a_p = np.asarray(coeffs.a_p, dtype=np.float64).reshape(-1)
    imbalance = coeffs.a_nb @ phi + coeffs.b - a_p * phi
    num = float(np.sum(np.abs(imbalance)))
    den = float(np.sum(np.abs(a_p * phi)))
    if den == 0.0:
        if num == 0.0:
            return 0.0
        warnings.warn("scaled residual has a zero denominator with a nonzero imbalance", RuntimeWarning)
        return float("inf")
    return num / den
