"""Obstacle rasterization on the cell-centred grid (row 0 at y = 0)."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, GeometryError
from .cases import DAM_OFFSET, OperatingParams


def cell_centers(extents, resolution):
    """x and y coordinates of cell centres for a (height, width) domain."""
    (ly, lx), (h, w) = extents, resolution
    x = (np.arange(w) + 0.5) * (lx / w)
    y = (np.arange(h) + 0.5) * (ly / h)
    return x, y


def build_geometry_mask(problem: str, params: OperatingParams, resolution=(64, 64)) -> np.ndarray:
    """uint8 [H, W] mask, 1 for fluid and 0 for solid; the cylinder is a stair-step disk."""
    h, w = resolution
    if h < 1 or w < 1:
        raise ConfigurationError(f"resolution must be positive, got {resolution}")
    if problem != params.problem:
        raise ConfigurationError(f"problem {problem!r} does not match params for {params.problem!r}")
    mask = np.ones((h, w), dtype=np.uint8)
    if problem in ("cavity", "tube"):
        return mask
    x, y = cell_centers(params.extents, resolution)
    ly, lx = params.extents
    g = params.geometry
    if problem == "dam":
        # rectangular barrier standing on the floor, DAM_OFFSET from the inlet
        if DAM_OFFSET + g["w"] > lx or g["h"] > ly:
            raise GeometryError(f"dam barrier (h={g['h']}, w={g['w']}) exceeds the {lx} x {ly} domain")
        # x-overlap keeps barriers thinner than one cell visible
        half = 0.5 * lx / w
        cols = (x + half > DAM_OFFSET) & (x - half < DAM_OFFSET + g["w"])
        inside = cols[None, :] & (y[:, None] <= g["h"])
        mask[inside] = 0
        return mask

    r = g["d"] / 2
    cx, cy = g["x1"], g["y2"]
    if cx - r < 0 or cx + r > lx or cy - r < 0 or cy + r > ly:
        raise GeometryError(f"cylinder (d={g['d']}, centre=({cx}, {cy})) exceeds the {lx} x {ly} domain")
    inside = (x[None, :] - cx) ** 2 + (y[:, None] - cy) ** 2 <= r * r
    mask[inside] = 0
    return mask
