import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import frozen
import oracles
from fermat_rays.causal import LightlikeCurve, SpatialPath, curve_length, lift_time, riemann_lengths
from fermat_rays.errors import DegenerateCurveError, ShorteningAborted
from fermat_rays.jacobi import make_record
from fermat_rays.metric import (Event, ObserverCurve, catalog, photon_sphere_radius, region_all,
                                region_annulus, region_ball, region_exterior)
from fermat_rays.shortening import (ShorteningConfig, StartHint, check_light_convexity, concatenate,
                                    current_curve, eta1_step, eta2_step, initial_state,
                                    junction_angles, local_fermat_minimizer, multi_start,
                                    polyline_curve, run_shortening, start_polyline, subdivide)

MINK = catalog("minkowski", N=3)
LENS = catalog("static_spherical", M=0.01, r_min=0.05, dim=4)
P = Event([0.0, 0.0], 0.0)
OBS = ObserverCurve([1.0, 0.0], (-10.0, 10.0))
CFG = ShorteningConfig(N_segments=4, rho_star=0.6)


def zigzag_curve():
    return polyline_curve(MINK, [[0, 0], [0.5, 0.3], [1, 0]], 0.0)


def null_line(n=21):
    s = np.linspace(0, 1, n)
    return LightlikeCurve(s, np.column_stack([s, 0 * s, s]))


def flow_curve(rec):
    return next(d["flow_curve"] for d in rec.diagnostics if isinstance(d, dict) and "flow_curve" in d)


# ---------------------------------------------------------------- subdivide


def test_subdivide_null_line():
    nodes = subdivide(MINK, null_line(), 4)
    assert [n.x[0] for n in nodes] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0], abs=1e-14)
    ends = subdivide(MINK, null_line(), 1)
    assert len(ends) == 2 and ends[0].x[0] == 0 and ends[1].x[0] == 1


def test_subdivide_skips_constant_piece():
    z = np.array([[0, 0, 0], [0.5, 0, 0.5], [0.5, 0, 0.5], [0.5, 0, 0.5], [1, 0, 1]], dtype=float)
    nodes = subdivide(MINK, LightlikeCurve(np.linspace(0, 1, 5), z), 4)
    assert [n.x[0] for n in nodes] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])


def test_subdivide_rejects_zero_length():
    with pytest.raises(DegenerateCurveError):
        subdivide(MINK, LightlikeCurve(np.array([0.0, 1.0]), np.zeros((2, 3))), 3)


@given(st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3), st.integers(2, 12))
def test_equal_spacing(c, N):
    path = SpatialPath.from_function(
        lambda s: (1 + 2 * s + c[0] * np.sin(np.pi * s), 0.5 + c[1] * np.sin(2 * np.pi * s) + c[2] * s), 801)
    chart = catalog("static_spherical", M=0.3, r_min=0.3, dim=3)
    curve = lift_time(chart, path, 0.0, 2)
    nodes = subdivide(chart, curve, N)
    # arc length along the fine curve between consecutive nodes
    cum = np.concatenate([[0.0], np.cumsum(riemann_lengths(chart, curve.z))])
    pos = [np.interp(n.x[0], curve.x[:, 0], cum) for n in nodes]
    gaps = np.diff(pos)
    assert np.max(np.abs(gaps / gaps.mean() - 1)) < 0.01


# ---------------------------------------------------------------- local minimizer


def test_local_minimizer_flat():
    seg = local_fermat_minimizer(MINK, [0.0, 0.0, 0.0], [0.2, 0.0])
    assert seg.end[-1] == pytest.approx(0.2, abs=1e-9)
    assert np.allclose(seg.end[:-1], [0.2, 0.0])


def test_local_minimizer_beats_straight_lift():
    q = np.array([3.0, 0.5, 0.0, 1.0])
    target = np.array([0.5, 3.0, 0.0])
    chart = catalog("static_spherical", M=0.4, r_min=0.3, dim=4)
    seg = local_fermat_minimizer(chart, q, target)
    straight = lift_time(chart, SpatialPath.from_points(np.linspace(0, 1, 201)[:, None] * (target - q[:-1])
                                                        + q[:-1]), q[-1], 4)
    assert seg.end[-1] <= straight.end[-1] + 1e-12
    assert seg.end[-1] > q[-1] + np.linalg.norm(target - q[:-1])


def test_local_minimizer_constant_when_target_is_start():
    q = np.array([0.3, 0.4, 2.0])
    seg = local_fermat_minimizer(MINK, q, q[:-1])
    assert np.array_equal(seg.start, q) and np.array_equal(seg.end, q)


# ---------------------------------------------------------------- flow steps


def test_eta1_decreases_zigzag():
    curve = zigzag_curve()
    assert curve.end[-1] == pytest.approx(frozen.ZIGZAG_TAU, abs=1e-12)
    assert curve.end[-1] == pytest.approx(oracles.minkowski_zigzag_tau([[0, 0], [0.5, 0.3], [1, 0]]))
    # three segments: the kink falls strictly between nodes
    state = initial_state(MINK, curve, 3)
    eta1_step(MINK, state, OBS, CFG)
    assert state.tau < frozen.ZIGZAG_TAU
    tau1 = state.tau
    eta2_step(MINK, state, OBS, CFG)
    assert state.tau <= tau1
    assert state.tau_history == sorted(state.tau_history, reverse=True)


def test_kink_on_a_node_is_removed_by_the_midpoint_sweep():
    state = initial_state(MINK, zigzag_curve(), 4)
    eta1_step(MINK, state, OBS, CFG)
    assert state.tau == pytest.approx(frozen.ZIGZAG_TAU, abs=1e-14)
    eta2_step(MINK, state, OBS, CFG)
    assert state.tau < frozen.ZIGZAG_TAU


def test_eta_steps_fix_a_geodesic():
    state = initial_state(MINK, null_line(), 4)
    eta1_step(MINK, state, OBS, CFG)
    assert abs(state.tau - 1.0) < CFG.tau_tol
    assert np.max(junction_angles(MINK, state.segments)) < CFG.junction_tol
    eta2_step(MINK, state, OBS, CFG)
    assert abs(state.tau - 1.0) < CFG.tau_tol
    assert np.max(junction_angles(MINK, state.segments)) < CFG.junction_tol


def test_single_segment_flow_is_one_minimization():
    state = initial_state(MINK, zigzag_curve(), 1)
    eta1_step(MINK, state, OBS, CFG)
    assert len(state.segments) == 1 and state.tau == pytest.approx(1.0, abs=1e-12)


def test_constant_segments_are_carried():
    const = LightlikeCurve(np.array([0.0, 1.0]), np.array([[0.5, 0, 0.5], [0.5, 0, 0.5]]),
                           tangents=np.zeros((2, 3)))
    first = LightlikeCurve(np.array([0.0, 1.0]), np.array([[0, 0, 0], [0.5, 0, 0.5]]))
    last = LightlikeCurve(np.array([0.0, 1.0]), np.array([[0.5, 0, 0.5], [1, 0, 1.0]]))
    state = initial_state(MINK, null_line(), 3)
    state.segments = [first, const, last]
    state.phase = "minimizing"
    eta2_step(MINK, state, OBS, CFG)
    # the zero-length segment contributes a zero-length piece whose midpoint is its endpoint
    assert len(state.segments) == 4
    assert state.tau == pytest.approx(1.0, abs=1e-12)
    angles = junction_angles(MINK, state.segments)
    assert angles.size == 3 and np.max(angles) < CFG.junction_tol
    curve = current_curve(state)
    assert np.all(np.diff(curve.s) > 0)


def test_concatenate_and_junctions():
    a = LightlikeCurve(np.array([0.0, 1.0]), np.array([[0, 0, 0], [0.5, 0, 0.5]]))
    b = LightlikeCurve(np.array([0.0, 1.0]), np.array([[0.5, 0, 0.5], [0.5, 0.5, 1.0]]))
    joined = concatenate([a, b])
    assert joined.z.shape == (3, 3) and np.allclose(joined.s, [0, 0.5, 1])
    # the two spatial directions are orthogonal: the Riemannian angle of the null tangents is 60 degrees
    assert junction_angles(MINK, [a, b]) == pytest.approx([np.pi / 3])


# ---------------------------------------------------------------- run_shortening


def test_zigzag_converges_to_straight_ray():
    rec = run_shortening(MINK, zigzag_curve(), OBS, region_all(), CFG)
    assert rec.tau == pytest.approx(1.0, abs=1e-9)
    hist = next(d["tau_history"] for d in rec.diagnostics if isinstance(d, dict) and "tau_history" in d)
    # nonincreasing up to floating-point rounding of the lift sums
    assert np.all(np.diff(hist) <= 1e-14 * np.abs(hist[:-1]))
    rounds = next(d["rounds"] for d in rec.diagnostics if isinstance(d, dict) and "rounds" in d)
    assert rounds <= 200
    assert np.max(np.abs(flow_curve(rec)[:, 1])) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_zigzag_few_rounds_with_coarse_subdivision(seed):
    # the midpoint alternation smooths diffusively: rounds grow like N^2
    corners = start_polyline(StartHint(kind="zigzag", seed=seed), P.x, OBS.x_obs)
    rec = run_shortening(MINK, polyline_curve(MINK, corners, 0.0), OBS, region_all(),
                         ShorteningConfig(N_segments=2, rho_star=1.5))
    assert rec.tau == pytest.approx(1.0, abs=1e-6)
    assert next(d["rounds"] for d in rec.diagnostics if isinstance(d, dict) and "rounds" in d) <= 30


def test_converged_ray_is_a_fixed_point():
    rec = run_shortening(MINK, zigzag_curve(), OBS, region_all(), CFG)
    again = run_shortening(MINK, rec.as_curve(), OBS, region_all(), CFG)
    assert abs(again.tau - rec.tau) < CFG.tau_tol
    rounds = next(d["rounds"] for d in again.diagnostics if isinstance(d, dict) and "rounds" in d)
    assert rounds == 1


def test_outside_worldline_abort():
    with pytest.raises(ShorteningAborted) as info:
        run_shortening(MINK, zigzag_curve(), ObserverCurve([1.0, 0.0], (-1.0, 1.1)), region_all(), CFG)
    assert info.value.reason == "outside-worldline-domain"


def test_pseudo_coercivity_guard():
    cfg = ShorteningConfig(N_segments=4, rho_star=0.6, D_cap=1.5)
    with pytest.raises(ShorteningAborted) as info:
        run_shortening(MINK, zigzag_curve(), OBS, region_all(), cfg)
    assert info.value.reason == "pseudo-coercivity-violation"
    assert info.value.tau_history


def test_rho_star_guard():
    with pytest.raises(ShorteningAborted) as info:
        run_shortening(MINK, zigzag_curve(), OBS, region_all(), ShorteningConfig(N_segments=2, rho_star=0.2))
    assert info.value.reason == "rho-star-spacing"


def test_nonconvergence_report():
    with pytest.raises(ShorteningAborted) as info:
        run_shortening(MINK, zigzag_curve(), OBS, region_all(), ShorteningConfig(N_segments=4, rho_star=0.6,
                                                                                  max_iters=1))
    assert info.value.reason == "nonconvergence" and len(info.value.tau_history) == 3


def test_annulus_never_returns_exiting_ray():
    region = region_annulus([0.0, 0.0], 0.5, 3.0)
    p = Event([-1.5, 0.0], 0.0)
    obs = ObserverCurve([1.5, 0.0], (-10.0, 20.0))
    cfg = ShorteningConfig(N_segments=6, rho_star=1.0)
    for corners in ([[-1.5, 0], [1.5, 0]], [[-1.5, 0], [0, 1], [1.5, 0]], [[-1.5, 0], [0, -1.2], [1.5, 0]]):
        try:
            rec = run_shortening(MINK, polyline_curve(MINK, corners, 0.0), obs, None, cfg)
        except ShorteningAborted:
            continue
        # without the region guard the flow is free to cross the hole; with it, it must not
        if not np.all(region.contains(rec.z)):
            with pytest.raises(ShorteningAborted) as info:
                run_shortening(MINK, polyline_curve(MINK, corners, 0.0), obs, region, cfg)
            assert info.value.reason == "region-exit"


# ---------------------------------------------------------------- multi_start


def test_flat_multi_start_finds_one_ray():
    res = multi_start(MINK, P, OBS, region_all(), CFG, [StartHint()], k_starts=8, seed=3)
    assert res.attempts == 8 and len(res.records) == 1 and not res.failures
    assert res.records[0].tau == pytest.approx(1.0, abs=1e-9)


def test_duplicate_starts_are_merged():
    hints = [StartHint(kind="detour", offset=0.2)] * 2
    res = multi_start(MINK, P, OBS, region_all(), CFG, hints)
    assert len(res.records) == 1


def test_lens_rays_match_oracle(lens_run):
    report, _ = lens_run
    taus = [r["tau"] for r in report.records]
    assert len(taus) == 2
    assert taus == pytest.approx(list(frozen.LENS_TAUS), abs=1e-6)
    assert [r["mu"] for r in report.records] == [0, 1]
    assert all(r["geodesic_residual"] < 1e-8 for r in report.records)


def test_start_polylines():
    px, ox = np.zeros(2), np.array([1.0, 0.0])
    assert start_polyline(StartHint(), px, ox).shape == (2, 2)
    det = start_polyline(StartHint(kind="detour", side=-1, offset=0.4), px, ox)
    assert np.allclose(det[1], [0.5, -0.4]) or np.allclose(det[1], [0.5, 0.4])
    a = start_polyline(StartHint(kind="zigzag", seed=5, kinks=4), px, ox)
    b = start_polyline(StartHint(kind="zigzag", seed=5, kinks=4), px, ox)
    assert a.shape == (6, 2) and np.array_equal(a, b)
    w = start_polyline(StartHint(kind="wound", center=(0.5, 0.0), normal=(0.0, 1.0), offset=0.2, turns=2),
                       px, ox)
    ang = np.unwrap(np.arctan2(w[2:-2, 1], w[2:-2, 0] - 0.5))
    assert abs(ang[-1] - ang[0]) > 3.5 * np.pi
    way = start_polyline(StartHint(kind="waypoints", waypoints=((0.3, 0.3),)), px, ox)
    assert np.allclose(way[1], [0.3, 0.3])
    with pytest.raises(ValueError):
        StartHint(kind="spiral")


def test_config_validation():
    with pytest.raises(ValueError):
        ShorteningConfig(N_segments=0)
    with pytest.raises(ValueError):
        ShorteningConfig(tau_tol=0.0)
    with pytest.raises(ValueError):
        ShorteningConfig(segment_method="euler")
    with pytest.raises(ValueError):
        ShorteningConfig(rho_star=-1.0)


# ---------------------------------------------------------------- light convexity


def test_convexity_ball_and_annulus():
    ball = check_light_convexity(MINK, region_ball([0, 0], 1.0), n_samples=32, rho_star=0.5, seed=1)
    assert ball.violations == 0 and ball.n_pairs > 0 and ball.n_grazing > 0
    ann = check_light_convexity(MINK, region_annulus([0, 0], 0.5, 2.0), n_samples=32, rho_star=0.5, seed=1)
    assert ann.violations >= 1 and ann.witnesses


@pytest.mark.parametrize("r_over_m", [1.2, 2.5])
def test_exterior_convexity_follows_turning_point_analysis(r_over_m):
    mass = 1.0
    chart = catalog("static_spherical", M=mass, r_min=0.55, dim=3)
    rep = check_light_convexity(chart, region_exterior([0, 0], r_over_m * mass), n_samples=32,
                                horizon=6.0, rho_star=0.3, seed=1)
    convex = oracles.exterior_is_light_convex(r_over_m * mass, mass)
    assert convex == (r_over_m * mass < photon_sphere_radius(mass))
    assert (rep.violations == 0) == convex
