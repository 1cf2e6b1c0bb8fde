"""Incompressible Navier-Stokes on a staggered (MAC) grid with a fractional-step projection.

Layout: ``u`` lives on vertical faces [ny, nx+1], ``v`` on horizontal faces [ny+1, nx],
pressure at cell centres [ny, nx]; row 0 is the bottom of the domain. Each substep does
explicit first-order upwind advection and implicit central diffusion with the previous
pressure gradient, then an incremental pressure projection that makes the discrete
divergence vanish to solver precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..datakit.record import CaseMeta, CaseRecord
from ..errors import (CapabilityError, ConfigurationError, IterationLimitError, SolverBlowupError)
from .cases import OperatingParams
from .geometry import build_geometry_mask
from .residual import Coefficients, ResidualReport, scaled_residual

SUPPORTED = ("cavity", "tube", "cylinder")


@dataclass
class SolverConfig:
    resolution: tuple[int, int] = (64, 64)  # (H, W)
    n_frames: int = 21
    max_inner_iterations: int = 20000
    residual_target: float = 1e-6
    divergence_tol: float = 1e-6
    pressure_relaxation: float = 1.0  # SOR factor, only used by the red-black solver
    pressure_solver: str = "direct"   # "direct" or "rbgs"
    cfl: float = 0.5
    max_cell_reynolds: float | None = 10.0
    store_pressure: bool = False
    max_substeps: int = 100_000

    def __post_init__(self):
        self.resolution = tuple(int(r) for r in self.resolution)
        if len(self.resolution) != 2 or min(self.resolution) < 8:
            raise ConfigurationError(f"resolution must be two sizes >= 8, got {self.resolution}")
        if not self.residual_target > 0:
            raise ConfigurationError("residual_target must be positive")
        if self.n_frames < 2:
            raise ConfigurationError("n_frames must be at least 2")
        if self.pressure_solver not in ("direct", "rbgs"):
            raise ConfigurationError(f"unknown pressure solver {self.pressure_solver!r}")
        if not 0 < self.cfl <= 1:
            raise ConfigurationError("cfl must lie in (0, 1]")
        if not 0 < self.pressure_relaxation < 2:
            raise ConfigurationError("pressure_relaxation must lie in (0, 2)")

    def to_dict(self) -> dict:
        return dict(resolution=list(self.resolution), n_frames=self.n_frames,
                    max_inner_iterations=self.max_inner_iterations, residual_target=self.residual_target,
                    divergence_tol=self.divergence_tol, pressure_relaxation=self.pressure_relaxation,
                    pressure_solver=self.pressure_solver, cfl=self.cfl,
                    max_cell_reynolds=self.max_cell_reynolds, store_pressure=self.store_pressure,
                    max_substeps=self.max_substeps)


@dataclass
class FieldState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    dx: float
    dy: float
    mask: np.ndarray
    time: float = 0.0
    step: int = 0
    report: ResidualReport | None = None

    def divergence(self) -> np.ndarray:
        div = (self.u[:, 1:] - self.u[:, :-1]) / self.dx + (self.v[1:] - self.v[:-1]) / self.dy
        return np.where(self.mask.astype(bool), div, 0.0)

    def max_divergence(self) -> float:
        return float(np.max(np.abs(self.divergence())))

    def cell_velocity(self) -> tuple[np.ndarray, np.ndarray]:
        fl = self.mask.astype(bool)
        uc = 0.5 * (self.u[:, :-1] + self.u[:, 1:])
        vc = 0.5 * (self.v[:-1] + self.v[1:])
        return np.where(fl, uc, 0.0), np.where(fl, vc, 0.0)

    def copy(self) -> "FieldState":
        return replace(self, u=self.u.copy(), v=self.v.copy(), p=self.p.copy())


_SIDE_DIAG = {"face": -1.0, "wall": -2.0, "neumann": 0.0}


def _laplacian(nr, nc, hx, hy, west, east, south, north):
    """5-point Laplacian on an nr x nc block of unknowns.

    Side kinds: ``face`` (known neighbour one spacing away), ``wall`` (known value half a
    spacing away, ghost = 2*w - phi), ``neumann`` (zero gradient).
    """
    idx = np.arange(nr * nc).reshape(nr, nc)
    cx, cy = 1.0 / hx ** 2, 1.0 / hy ** 2
    diag = np.zeros((nr, nc))
    rows, cols, vals = [], [], []
    for a, b, c in ((idx[:, :-1], idx[:, 1:], cx), (idx[:-1, :], idx[1:, :], cy)):
        a, b = a.ravel(), b.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(a.size, c), np.full(a.size, c)]
    diag[:, :-1] -= cx
    diag[:, 1:] -= cx
    diag[:-1, :] -= cy
    diag[1:, :] -= cy
    diag[:, 0] += _SIDE_DIAG[west] * cx
    diag[:, -1] += _SIDE_DIAG[east] * cx
    diag[0, :] += _SIDE_DIAG[south] * cy
    diag[-1, :] += _SIDE_DIAG[north] * cy
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    n = nr * nc
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


class _Discretization:
    """Operators and factorizations that depend only on problem geometry and grid."""

    def __init__(self, problem, extents, resolution, mask):
        self.ny, self.nx = ny, nx = resolution
        ly, lx = extents
        self.dx, self.dy = lx / nx, ly / ny
        self.mask = mask
        fl = mask.astype(bool)
        self.outlet = problem != "cavity"
        self.solid_u = ~(fl[:, :-1] & fl[:, 1:])
        self.solid_v = ~(fl[:-1, :] & fl[1:, :])
        self.inlet_rows = fl[:, 0].astype(float)

        east_u = "neumann" if self.outlet else "face"
        east_v = "neumann" if self.outlet else "wall"
        self.lap_u = _laplacian(ny, nx - 1, self.dx, self.dy, "face", east_u, "wall", "wall")
        self.lap_v = _laplacian(ny - 1, nx, self.dx, self.dy, "wall", east_v, "face", "face")
        self.free_u = sp.diags((~self.solid_u).ravel().astype(float))
        self.free_v = sp.diags((~self.solid_v).ravel().astype(float))
        self._momentum = {}
        self._build_pressure(fl)

    def _build_pressure(self, fl):
        ny, nx, dx, dy = self.ny, self.nx, self.dx, self.dy
        a_e = np.zeros((ny, nx))
        a_n = np.zeros((ny, nx))
        a_e[:, :-1] = (fl[:, :-1] & fl[:, 1:]) / dx ** 2
        a_n[:-1, :] = (fl[:-1, :] & fl[1:, :]) / dy ** 2
        a_w = np.zeros((ny, nx))
        a_s = np.zeros((ny, nx))
        a_w[:, 1:] = a_e[:, :-1]
        a_s[1:, :] = a_n[:-1, :]
        a_bc = np.zeros((ny, nx))
        if self.outlet:
            a_bc[:, -1] = fl[:, -1] * 2.0 / dx ** 2
        fixed = ~fl
        if not self.outlet:
            # closed domain: pin the first fluid cell to remove the constant null space
            pin = np.argwhere(fl)[0]
            fixed[tuple(pin)] = True
        for a in (a_e, a_w, a_n, a_s, a_bc):
            a[fixed] = 0.0
        a_p = a_e + a_w + a_n + a_s + a_bc
        a_p[fixed] = 1.0
        self.p_fixed = fixed
        self.p_coef = (a_p, a_e, a_w, a_n, a_s)

        idx = np.arange(ny * nx).reshape(ny, nx)
        rows, cols, vals = [], [], []
        for a, shift in ((a_e, (0, 1)), (a_w, (0, -1)), (a_n, (1, 0)), (a_s, (-1, 0))):
            sel = a > 0
            src = idx[sel]
            dst = np.roll(idx, (-shift[0], -shift[1]), axis=(0, 1))[sel]
            rows.append(src)
            cols.append(dst)
            vals.append(a[sel])
        a_nb = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(ny * nx, ny * nx))
        self.p_a_p = a_p.ravel()
        self.p_a_nb = a_nb
        self.p_matrix = sp.csc_matrix(sp.diags(self.p_a_p) - a_nb)
        self.p_lu = splu(self.p_matrix)

    def momentum(self, alpha):
        """Cached (matrix, LU, a_P, a_nb) for u and v at diffusion number alpha = nu * dt."""
        hit = self._momentum.get(alpha)
        if hit is None:
            hit = []
            for lap, free in ((self.lap_u, self.free_u), (self.lap_v, self.free_v)):
                a = sp.csc_matrix(sp.identity(lap.shape[0]) - alpha * (free @ lap))
                a_p = a.diagonal()
                hit.append((a, splu(a), a_p, sp.csr_matrix(sp.diags(a_p) - a)))
            if len(self._momentum) > 8:
                self._momentum.clear()
            self._momentum[alpha] = hit
        return hit


@lru_cache(maxsize=16)
def _cached_discretization(problem, geometry_items, resolution, extents):
    params = OperatingParams(problem=problem, u_b=0.0, rho=1.0, mu=1.0, geometry=dict(geometry_items), dt=1.0)
    mask = build_geometry_mask(problem, params, resolution)
    return _Discretization(problem, extents, resolution, mask)


def _discretization(params: OperatingParams, cfg: SolverConfig) -> _Discretization:
    if params.problem not in SUPPORTED:
        raise CapabilityError(f"{params.problem} flow is not generated in-house (two-phase); "
                              "bring external data in with `flowbench ingest`")
    return _cached_discretization(params.problem, tuple(sorted(params.geometry.items())),
                                  cfg.resolution, params.extents)


def effective_velocity(params: OperatingParams, cfg: SolverConfig) -> tuple[float, float]:
    """(velocity actually simulated, cell Reynolds number at the nominal velocity)."""
    ly, lx = params.extents
    h = max(lx / cfg.resolution[1], ly / cfg.resolution[0])
    re_cell = params.rho * params.u_b * h / params.mu
    if cfg.max_cell_reynolds is not None and re_cell > cfg.max_cell_reynolds:
        return cfg.max_cell_reynolds * params.mu / (params.rho * h), re_cell
    return params.u_b, re_cell


def initial_state(params: OperatingParams, cfg: SolverConfig) -> FieldState:
    """Fluid at rest."""
    disc = _discretization(params, cfg)
    ny, nx = cfg.resolution
    return FieldState(u=np.zeros((ny, nx + 1)), v=np.zeros((ny + 1, nx)), p=np.zeros((ny, nx)),
                      dx=disc.dx, dy=disc.dy, mask=disc.mask.copy())


def _apply_bc(u, v, disc, u_in):
    u[:, 0] = u_in * disc.inlet_rows if disc.outlet else 0.0
    if not disc.outlet:
        u[:, -1] = 0.0
    v[0, :] = 0.0
    v[-1, :] = 0.0
    u[:, 1:-1][disc.solid_u] = 0.0
    v[1:-1, :][disc.solid_v] = 0.0


def _advection(u, v, disc, lid):
    dx, dy = disc.dx, disc.dy
    # u on interior vertical faces
    uc = u[:, 1:-1]
    ug = np.vstack([-u[:1], u, 2.0 * lid - u[-1:]])
    va = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:])
    dudx = np.where(uc > 0, uc - u[:, :-2], u[:, 2:] - uc) / dx
    dudy = np.where(va > 0, uc - ug[:-2, 1:-1], ug[2:, 1:-1] - uc) / dy
    adv_u = uc * dudx + va * dudy
    # v on interior horizontal faces
    vc = v[1:-1, :]
    right = v[1:-1, -1:] if disc.outlet else -v[1:-1, -1:]
    vg = np.hstack([-v[1:-1, :1], vc, right])
    ua = 0.25 * (u[:-1, :-1] + u[:-1, 1:] + u[1:, :-1] + u[1:, 1:])
    dvdx = np.where(ua > 0, vc - vg[:, :-2], vg[:, 2:] - vc) / dx
    dvdy = np.where(vc > 0, vc - v[:-2, :], v[2:, :] - vc) / dy
    adv_v = ua * dvdx + vc * dvdy
    return adv_u, adv_v


def _solve_pressure(disc, rhs, cfg):
    coeffs = Coefficients(disc.p_a_p, disc.p_a_nb, rhs)
    if cfg.pressure_solver == "direct":
        phi = disc.p_lu.solve(rhs)
        iters = 1
        res = scaled_residual(coeffs, phi)
        while res > cfg.residual_target and iters < 4:
            phi = phi + disc.p_lu.solve(rhs - disc.p_matrix @ phi)
            res = scaled_residual(coeffs, phi)
            iters += 1
    else:
        phi, iters, res = _rbgs(disc, rhs, cfg, coeffs)
    if res > cfg.residual_target:
        raise IterationLimitError(f"pressure solve stalled after {iters} iterations", res)
    return phi, res, iters


def _rbgs(disc, rhs, cfg, coeffs):
    """Red-black Gauss-Seidel with optional over-relaxation on the cell grid."""
    ny, nx = disc.ny, disc.nx
    a_p, a_e, a_w, a_n, a_s = disc.p_coef
    b = rhs.reshape(ny, nx)
    phi = np.zeros((ny + 2, nx + 2))
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    colours = [(jj + ii) % 2 == c for c in (0, 1)]
    w = cfg.pressure_relaxation
    res = float("inf")
    it = 0
    for it in range(1, cfg.max_inner_iterations + 1):
        for sel in colours:
            inner = phi[1:-1, 1:-1]
            nb = (a_e * phi[1:-1, 2:] + a_w * phi[1:-1, :-2] + a_n * phi[2:, 1:-1] + a_s * phi[:-2, 1:-1])
            new = (1 - w) * inner + w * (nb + b) / a_p
            inner[sel] = new[sel]
        if it % 10 == 0 or it == cfg.max_inner_iterations:
            res = scaled_residual(coeffs, phi[1:-1, 1:-1].ravel())
            if res <= cfg.residual_target:
                break
    return phi[1:-1, 1:-1].ravel().copy(), it, res


def _substep(u, v, phi, disc, u_in, lid, nu, dt, cfg) -> tuple[np.ndarray, ResidualReport]:
    """One incremental pressure-correction step; ``phi`` is kinematic pressure p / rho."""
    _apply_bc(u, v, disc, u_in)
    adv_u, adv_v = _advection(u, v, disc, lid)
    alpha = nu * dt
    (mu_, lu_u, ap_u, nb_u), (mv_, lu_v, ap_v, nb_v) = disc.momentum(alpha)

    src_u = np.zeros_like(adv_u)
    src_u[:, 0] += u[:, 0] / disc.dx ** 2
    src_u[-1, :] += 2.0 * lid / disc.dy ** 2
    grad_x = (phi[:, 1:] - phi[:, :-1]) / disc.dx
    grad_y = (phi[1:, :] - phi[:-1, :]) / disc.dy
    rhs_u = u[:, 1:-1] - dt * (adv_u + grad_x) + alpha * src_u
    rhs_u[disc.solid_u] = 0.0
    rhs_v = v[1:-1, :] - dt * (adv_v + grad_y)
    rhs_v[disc.solid_v] = 0.0
    us = lu_u.solve(rhs_u.ravel())
    vs = lu_v.solve(rhs_v.ravel())
    r_u = scaled_residual(Coefficients(ap_u, nb_u, rhs_u.ravel()), us)
    r_v = scaled_residual(Coefficients(ap_v, nb_v, rhs_v.ravel()), vs)

    u[:, 1:-1] = us.reshape(adv_u.shape)
    v[1:-1, :] = vs.reshape(adv_v.shape)
    if disc.outlet:
        u[:, -1] = u[:, -2]

    div = (u[:, 1:] - u[:, :-1]) / disc.dx + (v[1:] - v[:-1]) / disc.dy
    rhs_p = np.where(disc.p_fixed, 0.0, -div / dt).ravel()
    dphi, r_p, it_p = _solve_pressure(disc, rhs_p, cfg)
    dphi = dphi.reshape(disc.ny, disc.nx)

    u[:, 1:-1] -= dt * (~disc.solid_u) * (dphi[:, 1:] - dphi[:, :-1]) / disc.dx
    v[1:-1, :] -= dt * (~disc.solid_v) * (dphi[1:, :] - dphi[:-1, :]) / disc.dy
    if disc.outlet:
        u[:, -1] -= dt * disc.mask[:, -1] * (0.0 - dphi[:, -1]) / (0.5 * disc.dx)
    report = ResidualReport({"u": r_u, "v": r_v, "p": r_p}, {"u": 1, "v": 1, "p": it_p})
    return np.where(disc.mask.astype(bool), phi + dphi, 0.0), report


def _substep_count(state, u_ref, dt, cfg, disc):
    vel = max(float(np.max(np.abs(state.u))), float(np.max(np.abs(state.v))), u_ref)
    if vel == 0.0:
        return 1
    n = math.ceil(dt * (vel / disc.dx + vel / disc.dy) / cfg.cfl - 1e-9)
    if n > cfg.max_substeps:
        raise ConfigurationError(f"{n} substeps per frame exceeds max_substeps={cfg.max_substeps}; "
                                 "lower the resolution or tighten max_cell_reynolds")
    return max(n, 1)


def advance_timestep(state: FieldState, params: OperatingParams, cfg: SolverConfig) -> FieldState:
    """Advance one frame interval ``params.dt`` using CFL-limited substeps."""
    disc = _discretization(params, cfg)
    if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.v))):
        raise SolverBlowupError("non-finite velocity in the incoming state", state.step + 1)
    u_in, _ = effective_velocity(params, cfg)
    lid = u_in if params.problem == "cavity" else 0.0
    n_sub = _substep_count(state, u_in, params.dt, cfg, disc)
    dt = params.dt / n_sub
    out = state.copy()
    report = ResidualReport()
    phi = out.p / params.rho
    for _ in range(n_sub):
        phi, rep = _substep(out.u, out.v, phi, disc, u_in, lid, params.nu, dt, cfg)
        report = report.merge_max(rep)
        if not (np.all(np.isfinite(out.u)) and np.all(np.isfinite(out.v))):
            raise SolverBlowupError("non-finite velocity", state.step + 1)
    out.p = params.rho * phi
    out.time = state.time + params.dt
    out.step = state.step + 1
    report.max_divergence = out.max_divergence()
    if report.max_divergence > cfg.divergence_tol:
        warnings.warn(f"step {out.step}: max divergence {report.max_divergence:.3e} exceeds "
                      f"{cfg.divergence_tol:.1e}", RuntimeWarning)
    out.report = report
    return out


def frame_from_state(state: FieldState, store_pressure=False) -> np.ndarray:
    uc, vc = state.cell_velocity()
    chans = [uc, vc]
    if store_pressure:
        chans.append(np.where(state.mask.astype(bool), state.p, 0.0))
    return np.stack(chans)


def solve_case(params: OperatingParams, cfg: SolverConfig | None = None, subset: str = "",
               case_id: str = "case") -> CaseRecord:
    """Simulate one case from rest and sample ``cfg.n_frames`` frames every ``params.dt``."""
    cfg = cfg or SolverConfig()
    state = initial_state(params, cfg)
    u_eff, re_cell = effective_velocity(params, cfg)
    frames = [frame_from_state(state, cfg.store_pressure)]
    reports = []
    for _ in range(cfg.n_frames - 1):
        state = advance_timestep(state, params, cfg)
        frames.append(frame_from_state(state, cfg.store_pressure))
        reports.append(state.report.to_dict())
    channels = ("u", "v", "p") if cfg.store_pressure else ("u", "v")
    flags = dict(reduced_velocity=bool(u_eff != params.u_b), u_effective=u_eff, cell_reynolds=re_cell,
                 residuals=reports, solver=cfg.to_dict(),
                 proxy="plane-channel" if params.problem == "tube" else None)
    meta = CaseMeta(problem=params.problem, subset=subset, case_id=case_id, params=params.to_dict(),
                    dt=params.dt, extents_m=params.extents, resolution=cfg.resolution,
                    n_frames=cfg.n_frames, channels=channels, flags=flags)
    return CaseRecord(meta=meta, frames=np.stack(frames), mask=state.mask)
