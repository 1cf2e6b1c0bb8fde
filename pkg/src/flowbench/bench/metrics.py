"""MSE, NMSE and MAE over fluid cells, per frame then averaged."""
from __future__ import annotations

import warnings

import numpy as np

from ..errors import DimensionError

NMSE_EPS = 1e-12
METRICS = ("MSE", "NMSE", "MAE")


def _fluid_weights(shape, mask):
    """Broadcast a [H, W] or [N, H, W] mask to ``shape`` ([N, C, H, W]) as 0/1 weights."""
    if mask is None:
        return np.ones(shape)
    m = (np.asarray(mask) != 0).astype(float)
    if m.ndim == 2:
        m = m[None]
    return np.broadcast_to(m[:, None], shape)


def frame_metrics(label, pred, mask=None):
    """Per-frame metric arrays for [N, C, H, W] stacks.

    Returns (mse, nmse, mae, flagged) where each is length N. Frames with an
    all-zero label have their NMSE denominator clamped to ``NMSE_EPS``.
    """
    y = np.asarray(label, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError(f"label {y.shape} and prediction {p.shape} differ")
    if y.ndim != 4:
        raise DimensionError(f"expected [N, C, H, W] frames, got {y.shape}")
    w = _fluid_weights(y.shape, mask)
    axes = (1, 2, 3)
    n = w.sum(axis=axes)
    if np.any(n == 0):
        raise DimensionError("a frame has no fluid cells")
    err = (p - y) * w
    sq = (err * err).sum(axis=axes)
    ref = ((y * w) ** 2).sum(axis=axes)
    flagged = ref == 0
    nmse = np.where(sq == 0, 0.0, sq / np.maximum(ref, NMSE_EPS))
    return sq / n, nmse, np.abs(err).sum(axis=axes) / n, flagged


def compute_metrics(label, pred, mask=None, pooled: bool = False) -> dict:
    """Metrics over fluid cells.

    A 4-D input is a stack of frames: metrics are computed per frame and
    averaged unless ``pooled``, in which case all fluid cells are pooled. Any
    other shape is treated as a single frame.
    """
    y = np.asarray(label, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError(f"label {y.shape} and prediction {p.shape} differ")
    if y.ndim != 4:
        if mask is not None:
            m = np.broadcast_to(np.asarray(mask) != 0, y.shape[-2:])
            y, p = y[..., m], p[..., m]
        y = y.reshape(1, 1, 1, -1)
        p = p.reshape(1, 1, 1, -1)
        mask = None
    elif pooled:
        w = _fluid_weights(y.shape, mask).astype(bool)
        y = y[w].reshape(1, 1, 1, -1)
        p = p[w].reshape(1, 1, 1, -1)
        mask = None
    mse, nmse, mae, flagged = frame_metrics(y, p, mask)
    if flagged.any():
        warnings.warn(f"{int(flagged.sum())} frame(s) with all-zero labels; NMSE denominator clamped to {NMSE_EPS}",
                      RuntimeWarning, stacklevel=2)
    return {"MSE": float(mse.mean()), "NMSE": float(nmse.mean()), "MAE": float(mae.mean()),
            "flagged": bool(flagged.any()), "frames": int(len(mse))}
