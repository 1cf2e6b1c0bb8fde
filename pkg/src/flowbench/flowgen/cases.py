"""Operating-parameter records and the per-problem case grids."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

PROBLEMS = ("cavity", "tube", "dam", "cylinder")
SUBSETS = ("bc", "prop", "geo")

GEOMETRY_KEYS = {
    "cavity": ("l", "w"),
    "tube": ("d", "l"),
    "dam": ("h", "w"),
    "cylinder": ("d", "x1", "x2", "y1", "y2"),
}

# fixed dam domain, metres (length, height)
DAM_DOMAIN = (1.5, 0.4)
DAM_OFFSET = 0.5  # barrier distance from the inlet, metres

BASELINES = {
    "cavity": dict(u_b=10.0, rho=1.0, mu=1e-5, geometry={"l": 0.01, "w": 0.01}, dt=0.1),
    "tube": dict(u_b=1.0, rho=100.0, mu=0.1, geometry={"d": 0.1, "l": 1.0}, dt=0.01),
    "dam": dict(u_b=1.0, rho=100.0, mu=0.1, geometry={"h": 0.1, "w": 0.05}, dt=0.1),
    "cylinder": dict(u_b=1.0, rho=10.0, mu=1e-3,
                     geometry={"d": 0.02, "x1": 0.06, "x2": 0.16, "y1": 0.06, "y2": 0.06}, dt=0.001),
}


@dataclass
class OperatingParams:
    """Condition vector of one case: boundary speed, fluid properties, geometry, frame step."""

    problem: str
    u_b: float
    rho: float
    mu: float
    geometry: dict = field(default_factory=dict)
    dt: float = 0.1

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        keys = GEOMETRY_KEYS[self.problem]
        if set(self.geometry) != set(keys):
            raise ConfigurationError(f"{self.problem} geometry needs keys {keys}, got {sorted(self.geometry)}")
        self.geometry = {k: float(self.geometry[k]) for k in keys}
        for name in ("rho", "mu", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.u_b < 0:
            raise ConfigurationError(f"u_b must be non-negative, got {self.u_b}")
        if any(v <= 0 for v in self.geometry.values()):
            raise ConfigurationError(f"geometry lengths must be positive: {self.geometry}")

    @property
    def nu(self) -> float:
        return self.mu / self.rho

    @property
    def extents(self) -> tuple[float, float]:
        """Physical domain size (height, width) in metres."""
        g = self.geometry
        if self.problem == "cavity":
            return g["w"], g["l"]
        if self.problem == "tube":
            return g["d"], g["l"]
        if self.problem == "dam":
            return DAM_DOMAIN[1], DAM_DOMAIN[0]
        return g["y1"] + g["y2"], g["x1"] + g["x2"]

    def names(self) -> tuple[str, ...]:
        return ("u_b", "rho", "mu") + GEOMETRY_KEYS[self.problem]

    def vector(self) -> np.ndarray:
        """Ω as a flat float64 vector, ordered like ``names()``."""
        return np.array([self.u_b, self.rho, self.mu] + list(self.geometry.values()), dtype=np.float64)

    def to_dict(self) -> dict:
        return dict(problem=self.problem, u_b=self.u_b, rho=self.rho, mu=self.mu,
                    geometry=dict(self.geometry), dt=self.dt)

    @classmethod
    def from_dict(cls, d: dict) -> "OperatingParams":
        return cls(problem=d["problem"], u_b=float(d["u_b"]), rho=float(d["rho"]), mu=float(d["mu"]),
                   geometry=dict(d["geometry"]), dt=float(d["dt"]))

    def replace(self, **changes) -> "OperatingParams":
        d = self.to_dict()
        geometry = dict(d["geometry"])
        geometry.update(changes.pop("geometry", {}))
        d.update(changes, geometry=geometry)
        return OperatingParams.from_dict(d)


def baseline(problem: str) -> OperatingParams:
    if problem not in BASELINES:
        raise ConfigurationError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
    b = BASELINES[problem]
    return OperatingParams(problem=problem, u_b=b["u_b"], rho=b["rho"], mu=b["mu"],
                           geometry=dict(b["geometry"]), dt=b["dt"])


def _steps(start, stop, step):
    """Inclusive arithmetic grid, rounded to kill float drift."""
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


_CAVITY_RHO = [0.1, 0.5] + _steps(1, 10, 1)
_CAVITY_MU = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2]
_FLOW_RHO = _steps(10, 1000, 110)
_FLOW_MU = _steps(0.01, 1.0, 0.11)
_TUBE_DIAMETERS = [0.01, 0.05, 0.1, 0.3, 0.5]
_TUBE_RATIOS = [1, 2, 5, 7.5, 10, 15, 20, 50, 75, 100]
_CYL_RHO = (_steps(0.1, 1.0, 0.1) + [1.5, 2.5, 3.5, 4.5, 5.0] + _steps(6, 10, 1)
            + _steps(20, 250, 10) + [300.0, 400.0, 500.0])
_CYL_MU = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2]
_CYL_RE_RANGE = (20.0, 1000.0)
_CYL_PROP_COUNT = 115
_CYL_SPAN = [0.02, 0.04, 0.06, 0.08, 0.1]
_CYL_EXIT = [0.12, 0.14, 0.16, 0.18, 0.2]
_CYL_DIAMETERS = [0.01, 0.02, 0.03, 0.04, 0.05]


def _tube_geometries():
    out = []
    for d in _TUBE_DIAMETERS:
        ratios = [r for r in _TUBE_RATIOS if 0.1 - 1e-12 <= d * r <= 10 + 1e-12][:5]
        out.extend({"d": d, "l": round(d * r, 10)} for r in ratios)
    return out


def _cylinder_props(base: OperatingParams):
    """Density/viscosity pairs with Re = rho*u*d/mu nearest the target band, in grid order."""
    u, d = base.u_b, base.geometry["d"]
    lo, hi = _CYL_RE_RANGE
    scored = []
    for rho, mu in itertools.product(_CYL_RHO, _CYL_MU):
        re = rho * u * d / mu
        dist = 0.0 if lo <= re <= hi else min(abs(math.log(re / lo)), abs(math.log(re / hi)))
        scored.append((dist, rho, mu))
    keep = sorted(scored)[:_CYL_PROP_COUNT]
    chosen = {(rho, mu) for _, rho, mu in keep}
    return [(rho, mu) for rho, mu in itertools.product(_CYL_RHO, _CYL_MU) if (rho, mu) in chosen]


def _cylinder_geometries(base: OperatingParams):
    out = []
    sweeps = [("d", _CYL_DIAMETERS), ("x1", _CYL_SPAN), ("x2", _CYL_EXIT), ("y1", _CYL_SPAN), ("y2", _CYL_SPAN)]
    for key, values in sweeps:
        for v in values:
            if v != base.geometry[key]:
                g = dict(base.geometry)
                g[key] = v
                out.append(g)
    return out


def enumerate_cases(problem: str, subset: str) -> list[OperatingParams]:
    """Every case of one (problem, subset) grid, in a fixed order; non-varied values stay at baseline."""
    subset = subset.lower()
    if problem not in PROBLEMS or subset not in SUBSETS:
        raise ConfigurationError(f"unknown problem/subset pair ({problem!r}, {subset!r})")
    base = baseline(problem)

    if subset == "bc":
        if problem == "cavity":
            speeds = _steps(1, 50, 1)
        elif problem == "dam":
            speeds = _steps(0.05, 1.0, 0.05) + _steps(1.02, 2.0, 0.02)
        else:
            speeds = _steps(0.1, 5.0, 0.1)
        return [base.replace(u_b=float(s)) for s in speeds]

    if subset == "prop":
        if problem == "cavity":
            pairs = itertools.product(_CAVITY_RHO, _CAVITY_MU)
        elif problem in ("tube", "dam"):
            pairs = itertools.product(_FLOW_RHO, _FLOW_MU)
        else:
            pairs = _cylinder_props(base)
        return [base.replace(rho=float(r), mu=float(m)) for r, m in pairs]

    if problem == "cavity":
        sizes = [0.01, 0.02, 0.03, 0.04, 0.05]
        geoms = [{"l": l, "w": w} for l, w in itertools.product(sizes, sizes)]
    elif problem == "tube":
        geoms = _tube_geometries()
    elif problem == "dam":
        geoms = [{"h": h, "w": w} for h, w in itertools.product(_steps(0.11, 0.15, 0.01), _steps(0.01, 0.10, 0.01))]
    else:
        geoms = _cylinder_geometries(base)
    return [base.replace(geometry=g) for g in geoms]


def case_id(subset: str, index: int) -> str:
    return f"{subset.lower()}_{index:04d}"
