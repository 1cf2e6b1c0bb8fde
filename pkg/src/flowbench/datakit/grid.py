"""Scattered point data to the benchmark grid: cell-mean binning, layered fill, wall padding."""
from __future__ import annotations

import numpy as np

from ..errors import EmptyInputError, InputError


def interpolate_to_grid(points, extents, resolution=(64, 64)) -> np.ndarray:
    """Mean of the values falling in each cell; empty cells are NaN.

    ``points`` is [N, 2 + K] holding (x, y, value_1..value_K). Returns [H, W] for K = 1,
    otherwise [K, H, W]. Row 0 is y = 0; points on the far edge go to the last cell.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInputError("no points to interpolate")
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise InputError(f"points must be [N, 2 + K], got {pts.shape}")
    (ly, lx), (h, w) = extents, resolution
    x, y, vals = pts[:, 0], pts[:, 1], pts[:, 2:]
    if (x < 0).any() or (x > lx).any() or (y < 0).any() or (y > ly).any():
        raise InputError(f"points fall outside the {lx} x {ly} domain")
    col = np.minimum((x / lx * w).astype(np.int64), w - 1)
    row = np.minimum((y / ly * h).astype(np.int64), h - 1)
    cell = row * w + col
    counts = np.bincount(cell, minlength=h * w).astype(np.float64)
    out = np.empty((vals.shape[1], h * w))
    for k in range(vals.shape[1]):
        sums = np.bincount(cell, weights=vals[:, k], minlength=h * w)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[k] = np.where(counts > 0, sums / counts, np.nan)
    out = out.reshape(vals.shape[1], h, w)
    return out[0] if vals.shape[1] == 1 else out


def _neighbour_stack(g):
    p = np.pad(g, 1, constant_values=np.nan)
    return np.stack([p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])


def fill_empty_cells(grid) -> np.ndarray:
    """Fill NaN cells from the edge of each empty region inward.

    Every sweep assigns, simultaneously, each empty cell that touches at least one valued
    4-neighbour the mean of those neighbours. Leading axes are filled independently.
    """
    g = np.array(grid, dtype=np.float64)
    if g.ndim > 2:
        return np.stack([fill_empty_cells(s) for s in g])
    empty = np.isnan(g)
    if empty.all():
        raise EmptyInputError("every cell is empty; nothing to fill from")
    while empty.any():
        nb = _neighbour_stack(g)
        have = ~np.isnan(nb)
        count = have.sum(axis=0)
        frontier = empty & (count > 0)
        g[frontier] = np.nansum(nb, axis=0)[frontier] / count[frontier]
        empty &= ~frontier
    return g


def pad_constant_bc(grid, problem: str, params=None, lid_velocity: float | None = None) -> np.ndarray:
    """Add known boundary lines around [..., C, H, W] velocity data (u, v first).

    tube: zero row below and above; cavity: lid row (u_b, 0) on top, zeros on the other
    three walls; other problems unchanged.
    """
    g = np.asarray(grid)
    if problem == "tube":
        return np.pad(g, [(0, 0)] * (g.ndim - 2) + [(1, 1), (0, 0)])
    if problem == "cavity":
        lid = lid_velocity if lid_velocity is not None else params.u_b
        out = np.pad(g, [(0, 0)] * (g.ndim - 2) + [(1, 1), (1, 1)])
        if g.ndim == 2:
            out[-1, :] = lid
        else:
            out[..., 0, -1, :] = lid
        return out
    return g.copy()


def pad_mask(mask, problem: str) -> np.ndarray:
    """Padded boundary lines are walls, so they are marked solid."""
    m = np.asarray(mask)
    if problem == "tube":
        return np.pad(m, [(1, 1), (0, 0)])
    if problem == "cavity":
        return np.pad(m, 1)
    return m.copy()
