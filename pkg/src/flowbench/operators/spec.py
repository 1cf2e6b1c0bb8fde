"""Model kinds, their input styles and default hyperparameters."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

KINDS = ("FFN", "DeepONet", "AutoFFN", "AutoDeepONet", "AutoEDeepONet", "AutoDeepONetCNN", "ResNet", "UNet", "FNO")

# input style per kind: query = (x, y, t) + Ω; sampled = u_sample + Ω + (x, y);
# field_query = full previous field + (x, y); field = image-to-image
STYLE = {
    "FFN": "query", "DeepONet": "query",
    "AutoFFN": "sampled", "AutoDeepONet": "sampled", "AutoEDeepONet": "sampled",
    "AutoDeepONetCNN": "field_query",
    "ResNet": "field", "UNet": "field", "FNO": "field",
}

DEFAULTS = {
    "FFN": dict(width=128, depth=6, activation="relu", pre_normalize=True),
    "DeepONet": dict(width=100, branch_depth=12, trunk_depth=16, activation="relu", pre_normalize=True),
    "AutoFFN": dict(width=400, depth=4, sample_grid=(32, 32), activation="relu", pre_normalize=True),
    "AutoDeepONet": dict(width=128, branch_depth=4, trunk_depth=4, sample_grid=(32, 32), activation="relu",
                         pre_normalize=True),
    "AutoEDeepONet": dict(width=128, branch_depth=4, trunk_depth=4, sample_grid=(32, 32), activation="relu",
                          pre_normalize=True),
    "AutoDeepONetCNN": dict(width=128, channels=(16, 32, 64), trunk_depth=4, activation="relu",
                            pre_normalize=True),
    "ResNet": dict(hidden=16, depth=4, kernel=3),
    "UNet": dict(base=12, levels=4),
    "FNO": dict(hidden=32, depth=4, modes=12, proj=128, activation="gelu"),
}

_POSITIVE_INTS = {"width", "depth", "branch_depth", "trunk_depth", "hidden", "kernel", "base", "levels", "modes",
                  "proj", "branch_width", "trunk_width"}


@dataclass
class ModelSpec:
    kind: str
    omega_dim: int
    out_dim: int = 2
    grid: tuple[int, int] = (64, 64)
    hyper: dict = field(default_factory=dict)
    field_scale: float = 1.0  # velocity unit the network sees; set from training data

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.omega_dim < 0 or self.out_dim < 1:
            raise ConfigurationError(f"omega_dim must be >= 0 and out_dim >= 1, got {self.omega_dim}, {self.out_dim}")
        self.grid = tuple(int(g) for g in self.grid)
        self.field_scale = float(self.field_scale)
        if not (np.isfinite(self.field_scale) and self.field_scale > 0):
            raise ConfigurationError(f"field_scale must be positive and finite, got {self.field_scale}")
        merged = copy.deepcopy(DEFAULTS[self.kind])
        unknown = set(self.hyper) - set(merged) - {"branch_width", "trunk_width"}
        if unknown:
            raise ConfigurationError(f"{self.kind} has no hyperparameters {sorted(unknown)}")
        merged.update(self.hyper)
        for k, v in merged.items():
            vals = v if k == "modes" and isinstance(v, (tuple, list)) else (v,)
            if k in _POSITIVE_INTS and not all(isinstance(x, int) and x > 0 for x in vals):
                raise ConfigurationError(f"{self.kind}.{k} must be a positive integer, got {v!r}")
        for k in ("sample_grid", "channels"):
            if k in merged:
                merged[k] = tuple(int(c) for c in merged[k])
                if not merged[k] or min(merged[k]) < 1:
                    raise ConfigurationError(f"{self.kind}.{k} must hold positive sizes, got {merged[k]}")
        if self.kind == "FNO" and not isinstance(merged["modes"], int):
            merged["modes"] = tuple(merged["modes"])
        self.hyper = merged

    @property
    def autoregressive(self) -> bool:
        return self.kind not in ("FFN", "DeepONet")

    @property
    def style(self) -> str:
        return STYLE[self.kind]

    @property
    def in_channels(self) -> int:
        """Channels of the image-style input: u, v, mask, then one per Ω entry."""
        return 3 + self.omega_dim

    def to_json(self) -> dict:
        hyper = {k: list(v) if isinstance(v, tuple) else v for k, v in self.hyper.items()}
        return dict(kind=self.kind, omega_dim=self.omega_dim, out_dim=self.out_dim, grid=list(self.grid),
                    hyper=hyper, field_scale=self.field_scale)

    @classmethod
    def from_json(cls, d) -> "ModelSpec":
        return cls(kind=d["kind"], omega_dim=int(d["omega_dim"]), out_dim=int(d["out_dim"]),
                   grid=tuple(d["grid"]), hyper=dict(d.get("hyper", {})),
                   field_scale=float(d.get("field_scale", 1.0)))


def paper_spec(kind: str) -> ModelSpec:
    """Configurations whose parameter totals are pinned exactly (scalar output, six or five Ω entries)."""
    presets = {
        "DeepONet": ModelSpec("DeepONet", omega_dim=6, out_dim=1, hyper=dict(width=100, branch_depth=12,
                                                                           trunk_depth=16)),
        "UNet": ModelSpec("UNet", omega_dim=5, out_dim=1, hyper=dict(base=12)),
        "FNO": ModelSpec("FNO", omega_dim=6, out_dim=1, hyper=dict(depth=4, hidden=32, modes=12)),
    }
    if kind not in presets:
        raise ConfigurationError(f"no pinned configuration for {kind!r}; pinned kinds are {sorted(presets)}")
    return presets[kind]
