import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from flowbench.errors import CapabilityError, ConfigurationError, GeometryError, SolverBlowupError
from flowbench.flowgen import (Coefficients, OperatingParams, SolverConfig, advance_timestep, baseline,
                               build_geometry_mask, enumerate_cases, initial_state, scaled_residual,
                               solve_case)

TABLE = {
    "cavity": {"bc": 50, "prop": 84, "geo": 25},
    "tube": {"bc": 50, "prop": 100, "geo": 25},
    "dam": {"bc": 70, "prop": 100, "geo": 50},
    "cylinder": {"bc": 50, "prop": 115, "geo": 20},
}


# ---------------------------------------------------------------- enumeration

@pytest.mark.parametrize("problem,subset", [(p, s) for p in TABLE for s in TABLE[p]])
def test_subset_counts(problem, subset):
    assert len(enumerate_cases(problem, subset)) == TABLE[problem][subset]


def test_problem_totals():
    totals = {p: sum(len(enumerate_cases(p, s)) for s in TABLE[p]) for p in TABLE}
    assert totals == {"cavity": 159, "tube": 175, "dam": 220, "cylinder": 185}
    assert sum(totals.values()) == 739


def test_cavity_bc_values():
    cases = enumerate_cases("cavity", "bc")
    assert [c.u_b for c in cases] == [float(i) for i in range(1, 51)]
    assert all(c.dt == 0.1 and c.rho == 1.0 and c.mu == 1e-5 for c in cases)


def test_non_varied_parameters_stay_at_baseline():
    for problem in TABLE:
        base = baseline(problem)
        for c in enumerate_cases(problem, "prop"):
            assert c.u_b == base.u_b and c.geometry == base.geometry
        for c in enumerate_cases(problem, "geo"):
            assert (c.u_b, c.rho, c.mu) == (base.u_b, base.rho, base.mu)
        for c in enumerate_cases(problem, "bc"):
            assert (c.rho, c.mu, c.geometry) == (base.rho, base.mu, base.geometry)


def test_cases_are_unique_and_ordered_deterministically():
    for problem in TABLE:
        for subset in TABLE[problem]:
            a = [c.to_dict() for c in enumerate_cases(problem, subset)]
            b = [c.to_dict() for c in enumerate_cases(problem, subset)]
            assert a == b
            keys = {repr(sorted(d.items())) for d in a}
            assert len(keys) == len(a)


def test_tube_lengths_respect_bounds():
    for c in enumerate_cases("tube", "geo"):
        assert 0.1 - 1e-12 <= c.geometry["l"] <= 10 + 1e-12


def test_cylinder_prop_reynolds_mostly_in_band():
    res = [c.rho * c.u_b * c.geometry["d"] / c.mu for c in enumerate_cases("cylinder", "prop")]
    inside = sum(20 <= r <= 1000 for r in res)
    assert inside == 105
    assert min(res) > 5 and max(res) < 5000


def test_unknown_pair_raises():
    with pytest.raises(ConfigurationError):
        enumerate_cases("pipe", "bc")
    with pytest.raises(ConfigurationError):
        enumerate_cases("cavity", "viscosity")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(TABLE)), st.sampled_from(["bc", "prop", "geo"]), st.integers(0, 10_000))
def test_enumerated_quantities_positive(problem, subset, k):
    cases = enumerate_cases(problem, subset)
    c = cases[k % len(cases)]
    assert c.u_b > 0 and c.rho > 0 and c.mu > 0 and c.dt > 0
    assert all(v > 0 for v in c.geometry.values())
    assert OperatingParams.from_dict(c.to_dict()) == c


# ---------------------------------------------------------------- residual

def test_residual_zero_for_exact_solution():
    rng = np.random.default_rng(0)
    a = sp.random(30, 30, density=0.2, random_state=1) + sp.identity(30) * 5
    x = rng.standard_normal(30)
    coeffs = Coefficients.from_system(a, a @ x)
    assert scaled_residual(coeffs, x) < 1e-14


def test_residual_hand_example():
    coeffs = Coefficients(np.array([2.0, 2.0]), sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 1.0]))
    assert scaled_residual(coeffs, [1.0, 1.0]) == 0.0
    # phi = (1, 0): |0 + 1 - 2| + |1 + 1 - 0| = 3 over |2| = 1.5
    assert scaled_residual(coeffs, [1.0, 0.0]) == pytest.approx(1.5)


def test_residual_zero_denominator():
    coeffs = Coefficients(np.array([1.0]), sp.csr_matrix((1, 1)), np.array([0.0]))
    assert scaled_residual(coeffs, [0.0]) == 0.0
    coeffs.b = np.array([1.0])
    with pytest.warns(RuntimeWarning):
        assert scaled_residual(coeffs, [0.0]) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_residual_nonnegative(n, seed):
    rng = np.random.default_rng(seed)
    coeffs = Coefficients(rng.uniform(0.1, 3, n), sp.csr_matrix(rng.uniform(0, 1, (n, n))), rng.normal(size=n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert scaled_residual(coeffs, rng.normal(size=n)) >= 0


# ---------------------------------------------------------------- geometry

def test_cavity_mask_all_fluid():
    m = build_geometry_mask("cavity", baseline("cavity"), (64, 64))
    assert m.dtype == np.uint8 and m.shape == (64, 64) and m.all()


def test_cylinder_mask_area():
    p = baseline("cylinder")
    m = build_geometry_mask("cylinder", p, (64, 64))
    ly, lx = p.extents
    expected = math.pi * (p.geometry["d"] / 2) ** 2 / ((lx / 64) * (ly / 64))
    assert abs((m == 0).sum() - expected) <= 0.2 * expected
    assert set(np.unique(m)) <= {0, 1}


@pytest.mark.parametrize("case", enumerate_cases("cylinder", "geo"))
def test_cylinder_geo_masks_in_codomain(case):
    m = build_geometry_mask("cylinder", case, (64, 64))
    assert set(np.unique(m)) == {0, 1}


def test_cylinder_centre_position():
    p = baseline("cylinder")
    m = build_geometry_mask("cylinder", p, (64, 64))
    rows, cols = np.nonzero(m == 0)
    ly, lx = p.extents
    assert (cols.mean() + 0.5) * lx / 64 == pytest.approx(p.geometry["x1"], abs=lx / 64)
    assert (rows.mean() + 0.5) * ly / 64 == pytest.approx(p.geometry["y2"], abs=ly / 64)


def test_obstacle_exceeding_domain():
    p = baseline("cylinder").replace(geometry={"d": 0.15})
    with pytest.raises(GeometryError):
        build_geometry_mask("cylinder", p, (64, 64))


def test_dam_not_generated():
    with pytest.raises(CapabilityError, match="ingest"):
        solve_case(baseline("dam"), SolverConfig(resolution=(16, 16), n_frames=2))


# ---------------------------------------------------------------- solver

def reduced_cavity(n=32):
    return baseline("cavity").replace(mu=1e-2, dt=1e-3), SolverConfig(resolution=(n, n), n_frames=6)


def test_zero_forcing_gives_zero_frames():
    rec = solve_case(baseline("cavity").replace(u_b=0.0), SolverConfig(resolution=(16, 16), n_frames=4))
    assert not rec.frames.any()


def test_zero_state_fixed_point():
    p = baseline("cavity").replace(u_b=0.0)
    cfg = SolverConfig(resolution=(16, 16))
    s0 = initial_state(p, cfg)
    s1 = advance_timestep(s0, p, cfg)
    assert not s1.u.any() and not s1.v.any() and not s1.p.any()


def test_cavity_divergence_and_residual():
    p, cfg = reduced_cavity()
    rec = solve_case(p, cfg)
    assert not rec.meta.flags["reduced_velocity"]
    for rep in rec.meta.flags["residuals"]:
        assert rep["max_divergence"] <= 1e-6
        assert max(rep["residuals"].values()) <= 1e-6
    assert np.all(np.isfinite(rec.frames))


def test_wall_normal_velocities_exactly_zero():
    p, cfg = reduced_cavity(16)
    s = initial_state(p, cfg)
    for _ in range(3):
        s = advance_timestep(s, p, cfg)
    assert np.all(s.u[:, 0] == 0) and np.all(s.u[:, -1] == 0)
    assert np.all(s.v[0] == 0) and np.all(s.v[-1] == 0)
    assert np.abs(s.u).max() > 0


def test_obstacle_faces_hold_no_flow():
    p = baseline("cylinder").replace(dt=0.01)
    cfg = SolverConfig(resolution=(32, 32))
    s = initial_state(p, cfg)
    for _ in range(3):
        s = advance_timestep(s, p, cfg)
    solid = s.mask == 0
    assert np.all(s.u[:, 1:][solid] == 0) and np.all(s.u[:, :-1][solid] == 0)
    assert np.all(s.v[1:][solid] == 0) and np.all(s.v[:-1][solid] == 0)
    assert s.max_divergence() <= 1e-6


def test_channel_centerline_is_one_and_a_half_bulk():
    p = baseline("tube").replace(u_b=0.1, rho=1.0, mu=0.1, dt=0.05)
    rec = solve_case(p, SolverConfig(resolution=(64, 64), n_frames=12))
    col = rec.frames[-1, 0, :, 48].astype(np.float64)
    centre = 0.5 * (col[31] + col[32])
    assert centre / col.mean() == pytest.approx(1.5, rel=0.03)
    assert col.mean() == pytest.approx(p.u_b, rel=1e-4)


def _steady_cavity(n, re=1.0):
    p = OperatingParams("cavity", u_b=1.0, rho=1.0, mu=1.0 / re, geometry={"l": 1.0, "w": 1.0}, dt=0.05)
    cfg = SolverConfig(resolution=(n, n), max_cell_reynolds=None)
    s = initial_state(p, cfg)
    for _ in range(500):
        nxt = advance_timestep(s, p, cfg)
        change = np.abs(nxt.u - s.u).max()
        s = nxt
        if change < 1e-11:
            break
    return s, p, cfg


def test_steady_fixed_point():
    s, p, cfg = _steady_cavity(16)
    s2 = advance_timestep(s, p, cfg)
    assert np.abs(s2.u - s.u).max() < 1e-8
    assert np.abs(s2.u).max() > 0.1


@pytest.mark.slow
def test_grid_convergence_against_richardson_reference():
    y16 = (np.arange(16) + 0.5) / 16
    prof = {}
    for n in (16, 32, 64, 128):
        s, _, _ = _steady_cavity(n)
        prof[n] = np.interp(y16, (np.arange(n) + 0.5) / n, s.u[:, n // 2])
    order = np.log2(np.linalg.norm(prof[32] - prof[64]) / np.linalg.norm(prof[64] - prof[128]))
    ref = prof[128] + (prof[128] - prof[64]) / (2 ** order - 1)
    err = [np.sqrt(np.mean((prof[n] - ref) ** 2)) for n in (16, 32, 64)]
    assert err[0] > err[1] > err[2]


def test_determinism():
    p, cfg = reduced_cavity(16)
    a, b = solve_case(p, cfg), solve_case(p, cfg)
    assert a.frames.tobytes() == b.frames.tobytes()


def test_red_black_solver_matches_direct():
    p = baseline("cavity").replace(mu=1e-2, dt=1e-3)
    kw = dict(resolution=(16, 16), n_frames=3, residual_target=1e-10)
    direct = solve_case(p, SolverConfig(**kw))
    rbgs = solve_case(p, SolverConfig(pressure_solver="rbgs", pressure_relaxation=1.8,
                                      max_inner_iterations=50_000, **kw))
    assert np.abs(direct.frames - rbgs.frames).max() < 1e-5
    assert rbgs.meta.flags["residuals"][0]["iterations"]["p"] > direct.meta.flags["residuals"][0]["iterations"]["p"]


def test_laminar_guard_reduces_and_flags():
    p = baseline("cavity")
    rec = solve_case(p, SolverConfig(resolution=(16, 16), n_frames=2))
    flags = rec.meta.flags
    assert flags["reduced_velocity"] and flags["u_effective"] < p.u_b
    assert flags["u_effective"] * p.rho * (p.geometry["l"] / 16) / p.mu == pytest.approx(10.0)


def test_blowup_reports_step():
    p, cfg = reduced_cavity(16)
    s = initial_state(p, cfg)
    s.u[5, 5] = np.nan
    s.step = 7
    with pytest.raises(SolverBlowupError) as exc:
        advance_timestep(s, p, cfg)
    assert exc.value.step == 8


def test_frames_shape_and_layout():
    p = baseline("tube").replace(dt=0.01)
    rec = solve_case(p, SolverConfig(resolution=(16, 32), n_frames=3, store_pressure=True))
    assert rec.frames.shape == (3, 3, 16, 32)
    assert rec.meta.channels == ("u", "v", "p")
    assert rec.frames.dtype == np.float32
    assert not rec.frames[0].any()


@pytest.mark.parametrize("case", enumerate_cases("dam", "geo")[::7])
def test_dam_barrier_rasterized(case):
    m = build_geometry_mask("dam", case, (64, 64))
    rows, cols = np.nonzero(m == 0)
    assert rows.size > 0 and rows.min() == 0
    assert (rows.max() + 1) * 0.4 / 64 == pytest.approx(case.geometry["h"], abs=0.4 / 64)
