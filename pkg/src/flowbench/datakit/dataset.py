"""In-memory view over a set of cases with splits, Ω normalization and frame-pair indexing."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import EmptyInputError, InputError
from ..flowgen.cases import OperatingParams
from .container import list_cases, read_container
from .grid import fill_empty_cells, interpolate_to_grid, pad_constant_bc, pad_mask
from .normalize import NormalizationStats, normalize_params
from .record import CaseMeta, CaseRecord
from .split import DatasetSplit, split_by_group

SPLIT_FILE = "split.json"


class FlowDataset:
    """Cases keyed by id. Frames are exposed read-only; padding is applied once at load."""

    def __init__(self, records, split: DatasetSplit | None = None, seed: int = 0, ratio=(8, 1, 1),
                 pad: bool = False):
        records = list(records)
        if not records:
            raise EmptyInputError("dataset has no cases")
        self.records = {r.meta.case_id: r for r in records}
        if len(self.records) != len(records):
            raise InputError("duplicate case ids in dataset")
        problems = {r.meta.problem for r in records}
        if len(problems) != 1:
            raise InputError(f"a dataset holds one problem, got {sorted(problems)}")
        self.problem = problems.pop()
        if split is None:
            groups = {}
            for r in records:
                groups.setdefault(r.meta.subset, []).append(r.meta.case_id)
            split = split_by_group(groups, ratio, seed)
        missing = set(split.all()) ^ set(self.records)
        if missing:
            raise InputError(f"split and cases disagree on {sorted(missing)[:5]}")
        self.split = split
        self.params = {cid: OperatingParams.from_dict(r.meta.params) for cid, r in self.records.items()}
        self.stats = NormalizationStats.fit(self.params[c] for c in (split.train or split.all()))
        self.pad = pad
        self._frames = {}
        self._masks = {}
        for cid, r in self.records.items():
            vel = r.frames[:, :2]
            mask = r.mask
            if pad:
                lid = r.meta.flags.get("u_effective")
                vel = pad_constant_bc(vel, self.problem, self.params[cid], lid_velocity=lid)
                mask = pad_mask(mask, self.problem)
            vel = np.ascontiguousarray(vel, dtype=np.float32)
            vel.setflags(write=False)
            mask = np.ascontiguousarray(mask)
            mask.setflags(write=False)
            self._frames[cid] = vel
            self._masks[cid] = mask

    @classmethod
    def load(cls, root, subsets=None, split: DatasetSplit | None = None, seed: int = 0, pad: bool = False):
        root = Path(root)
        records = [read_container(d) for d in list_cases(root)]
        if subsets:
            wanted = {s.lower() for s in subsets}
            records = [r for r in records if r.meta.subset.lower() in wanted]
        if split is None and (root / SPLIT_FILE).exists():
            split = DatasetSplit.from_json(json.loads((root / SPLIT_FILE).read_text()))
        if split is not None:
            keep = {r.meta.case_id for r in records}
            split = DatasetSplit([c for c in split.train if c in keep], [c for c in split.val if c in keep],
                                 [c for c in split.test if c in keep], split.seed, split.ratio)
        return cls(records, split=split, seed=seed, pad=pad)

    # ---- access
    def ids(self, split: str) -> list[str]:
        return list(self.split[split])

    def frames(self, case_id) -> np.ndarray:
        """[T, 2, H, W] velocity frames."""
        return self._frames[case_id]

    def mask(self, case_id) -> np.ndarray:
        return self._masks[case_id]

    def omega(self, case_id) -> np.ndarray:
        return normalize_params(self.params[case_id], self.stats)

    @property
    def omega_dim(self) -> int:
        return len(self.stats.names)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return next(iter(self._frames.values())).shape[-2:]

    def field_scale(self, split: str = "train") -> float:
        """RMS velocity over the fluid cells of a split's frames (all cases when the split is empty).

        Falls back to 1.0 for an all-zero split so it can always be used as a divisor.
        """
        ids = self.ids(split) or self.split.all()
        total, count = 0.0, 0
        for cid in ids:
            fluid = self._masks[cid] != 0
            vel = self._frames[cid].astype(np.float64)[:, :, fluid]
            total += float(np.sum(vel ** 2))
            count += vel.size
        rms = np.sqrt(total / count) if count else 0.0
        return float(rms) if rms > 0 else 1.0

    def times(self, case_id) -> np.ndarray:
        f = self._frames[case_id]
        return np.arange(f.shape[0]) * self.records[case_id].meta.dt

    def pair_index(self, split: str) -> np.ndarray:
        """[N, 2] rows of (case position within the split, target frame t >= 1)."""
        rows = [(i, t) for i, cid in enumerate(self.ids(split)) for t in range(1, self._frames[cid].shape[0])]
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def gather_pairs(self, split: str, rows):
        """Stack (input frame, target frame, omega, mask) for the given pair rows."""
        ids = self.ids(split)
        x = np.stack([self._frames[ids[i]][t - 1] for i, t in rows])
        y = np.stack([self._frames[ids[i]][t] for i, t in rows])
        omega = np.stack([self.omega(ids[i]) for i, _ in rows])
        mask = np.stack([self._masks[ids[i]] for i, _ in rows])
        return x, y, omega, mask


def ingest_points(frames_points, params: OperatingParams, subset: str, case_id: str,
                  resolution=(64, 64), mask=None, channels=("u", "v")) -> CaseRecord:
    """Bin externally produced point clouds (one [N, 2 + C] array per frame) into a case."""
    from ..flowgen.geometry import build_geometry_mask

    frames = []
    for pts in frames_points:
        g = interpolate_to_grid(pts, params.extents, resolution)
        g = g[None] if g.ndim == 2 else g
        frames.append(fill_empty_cells(g))
    frames = np.stack(frames)
    if mask is None:
        mask = build_geometry_mask(params.problem, params, resolution)
    frames = frames * mask[None, None]
    meta = CaseMeta(problem=params.problem, subset=subset, case_id=case_id, params=params.to_dict(),
                    dt=params.dt, extents_m=params.extents, resolution=tuple(resolution),
                    n_frames=frames.shape[0], channels=tuple(channels), flags={"source": "ingested"})
    return CaseRecord(meta=meta, frames=frames, mask=mask)
