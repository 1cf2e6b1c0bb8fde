"""One simulated or ingested case: metadata, frame stack and obstacle mask."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

SCHEMA_VERSION = 1


@dataclass
class CaseMeta:
    problem: str
    subset: str
    case_id: str
    params: dict
    dt: float
    extents_m: tuple[float, float]
    resolution: tuple[int, int]
    n_frames: int
    channels: tuple[str, ...] = ("u", "v")
    flags: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return dict(schema_version=self.schema_version, problem=self.problem, subset=self.subset,
                    case_id=self.case_id, params=self.params, dt=self.dt, extents_m=list(self.extents_m),
                    resolution=list(self.resolution), n_frames=self.n_frames, channels=list(self.channels),
                    flags=self.flags, row0="y=0")

    @classmethod
    def from_json(cls, d: dict) -> "CaseMeta":
        return cls(problem=d["problem"], subset=d["subset"], case_id=d["case_id"], params=d["params"],
                   dt=float(d["dt"]), extents_m=tuple(float(x) for x in d["extents_m"]),
                   resolution=tuple(int(x) for x in d["resolution"]), n_frames=int(d["n_frames"]),
                   channels=tuple(d["channels"]), flags=d.get("flags", {}),
                   schema_version=int(d["schema_version"]))


@dataclass
class CaseRecord:
    meta: CaseMeta
    frames: np.ndarray  # [T, C, H, W] float32
    mask: np.ndarray    # [H, W] uint8, 1 = fluid

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        self.mask = np.ascontiguousarray(self.mask, dtype=np.uint8)
        self.validate()

    def validate(self):
        f, m = self.frames, self.mask
        if f.ndim != 4:
            raise InputError(f"frames must be [T, C, H, W], got shape {f.shape}")
        t, c, h, w = f.shape
        if t < 2:
            raise InputError(f"a case needs at least 2 frames, got {t}")
        if c != len(self.meta.channels):
            raise InputError(f"{c} frame channels but meta lists {self.meta.channels}")
        if tuple(self.meta.channels[:2]) != ("u", "v"):
            raise InputError(f"first channels must be u, v; got {self.meta.channels}")
        if m.shape != (h, w) or tuple(self.meta.resolution) != (h, w):
            raise InputError(f"mask {m.shape} / meta resolution {self.meta.resolution} vs frames {(h, w)}")
        if t != self.meta.n_frames:
            raise InputError(f"meta says {self.meta.n_frames} frames, array has {t}")
        if not np.all(np.isfinite(f)):
            raise InputError(f"case {self.meta.case_id} has non-finite frame values")
        if not np.isin(m, (0, 1)).all():
            raise InputError("mask values must be 0 or 1")

    @property
    def velocity(self) -> np.ndarray:
        return self.frames[:, :2]
