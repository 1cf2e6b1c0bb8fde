"""Loss, query sampling and the step-decay learning-rate schedule."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import diffmath as dm
from ..diffmath import Tensor
from ..errors import ContractError, DimensionError

LOSS_EPS = 1e-12


def nmse_loss(pred: Tensor, label, weight=None) -> Tensor:
    """Σ(Y − Ŷ)² / Σ Y² pooled over every element of the batch.

    ``weight`` (0/1, broadcastable) restricts both sums to fluid cells. An
    all-zero label clamps the denominator to ``LOSS_EPS`` with a warning.
    """
    y = np.asarray(label, dtype=pred.dtype)
    if y.shape != pred.shape:
        raise DimensionError(f"prediction {pred.shape} and label {y.shape} differ")
    if weight is not None:
        w = np.broadcast_to(np.asarray(weight, dtype=pred.dtype), y.shape)
        diff = (pred - Tensor(y)) * Tensor(w)
        y = y * w
    else:
        diff = pred - Tensor(y)
    ref = float(np.sum(np.square(y, dtype=np.float64)))
    if ref == 0.0:
        warnings.warn(f"all-zero label; NMSE denominator clamped to {LOSS_EPS}", RuntimeWarning, stacklevel=2)
        ref = LOSS_EPS
    return dm.square(diff).sum() / ref


@dataclass
class QuerySample:
    index: np.ndarray   # flat cell indices [k]
    coords: np.ndarray  # unit-square (x, y) [k, 2]
    values: np.ndarray  # [k, C] read from the frame


def sample_queries(frame, k: int, seed=None, mask=None, rng=None) -> QuerySample:
    """Draw ``k`` distinct fluid cells uniformly from a [C, H, W] frame."""
    frame = np.asarray(frame)
    c, h, w = frame.shape
    fluid = np.flatnonzero(np.ones(h * w, bool) if mask is None else np.asarray(mask).reshape(-1) != 0)
    if k < 1 or k > fluid.size:
        raise ContractError(f"cannot draw {k} distinct queries from {fluid.size} fluid cells")
    rng = np.random.default_rng(seed) if rng is None else rng
    idx = np.sort(rng.choice(fluid, size=k, replace=False))
    rows, cols = np.divmod(idx, w)
    coords = np.stack([(cols + 0.5) / w, (rows + 0.5) / h], axis=-1)
    return QuerySample(idx, coords, frame.reshape(c, -1)[:, idx].T)


def lr_at_epoch(base: float, epoch: int, decay: float = 0.9, period: int = 20) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base * decay ** (epoch // period)
