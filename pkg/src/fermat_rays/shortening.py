"""Arrival-time shortening flow.

Each round alternates two sweeps over a lightlike polyline.  The first
replaces the curve by a chain of segment minimizers aimed at the integral
curves of W through equally spaced nodes.  The second re-aims the chain at
the Riemannian midpoints of those segments.  Arrival time never increases,
and a curve is a fixed point exactly when the chain has no corners, i.e. it
is a lightlike geodesic.  The final polyline is handed to Newton shooting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .causal import (LightlikeCurve, SpatialPath, lift_endpoints, lift_time, null_residual,
                     riemann_lengths)
from .errors import (DegenerateCurveError, FermatError, LocalMinimizerFailure,
                     OutOfDomainError, OutsideWorldlineError, RefinementFailure,
                     ShorteningAborted)
from .jacobi import (GeodesicRecord, initial_direction_guess, integrate_null_geodesic,
                     null_vector, refine_geodesic, shoot)
from .metric import (Event, ObserverCurve, RegionSpec, SplittingChart, as_point,
                     riemann_matrix)

PHASES = ("subdividing", "minimizing", "midpointing", "converged", "aborted")


@dataclass
class ShorteningConfig:
    """Knobs of the flow.  ``rho_star`` and ``D_cap`` may be left as None and
    filled in from the scenario geometry by :func:`resolve_config`."""

    N_segments: int = 16
    tau_tol: float = 1e-8
    junction_tol: float = 1e-3
    max_iters: int = 200
    rho_star: Optional[float] = None
    D_cap: Optional[float] = None
    local_min_grid: int = 3
    newton_steps: int = 32
    newton_tol: float = 1e-12
    # "auto" integrates segments with adaptive DOP853 unless the chart is flat
    segment_method: str = "auto"
    descent_iters: int = 40
    lift_substeps: int = 4
    refine_steps: int = 1000
    refine_tol: float = 1e-11
    monotone_slack: float = 1e-10

    def __post_init__(self):
        if int(self.N_segments) < 1:
            raise ValueError("N_segments must be a positive integer")
        for name in ("tau_tol", "junction_tol", "monotone_slack"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iters", "local_min_grid", "newton_steps", "lift_substeps",
                     "refine_steps", "descent_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.segment_method not in ("auto", "rk4", "dop853"):
            raise ValueError("segment_method must be 'auto', 'rk4' or 'dop853'")
        for name in ("rho_star", "D_cap"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ShorteningState:
    nodes: List[Event]
    segments: List[LightlikeCurve]
    tau_history: List[float] = field(default_factory=list)
    iter: int = 0
    phase: str = "subdividing"
    diagnostics: List[str] = field(default_factory=list)

    @property
    def tau(self) -> float:
        return float(self.segments[-1].end[-1])


def straight_chord_length(chart: SplittingChart, p: Event, obs: ObserverCurve) -> float:
    """Riemannian length of the lifted straight chart segment from p to the observer line."""
    x = np.linspace(0.0, 1.0, 65)[:, None] * (obs.x_obs - p.x) + p.x
    try:
        curve = lift_time(chart, SpatialPath.from_points(x), p.t, substeps=2)
        return float(np.sum(riemann_lengths(chart, curve.z)))
    except FermatError:
        return math.sqrt(2.0) * float(np.linalg.norm(obs.x_obs - p.x))


def resolve_config(cfg: ShorteningConfig, chart: SplittingChart, p: Event, obs: ObserverCurve,
                   extra_points: Sequence = ()) -> ShorteningConfig:
    """Fill the default guards: rho_star from the scenario diameter, D_cap from the chord."""
    pts = [p.x, obs.x_obs] + [np.asarray(q, dtype=float) for q in extra_points]
    pts = np.array(pts)
    diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
    rho = cfg.rho_star if cfg.rho_star is not None else 0.1 * diam
    cap = cfg.D_cap if cfg.D_cap is not None else 20.0 * straight_chord_length(chart, p, obs)
    return replace(cfg, rho_star=rho, D_cap=cap)


# ---------------------------------------------------------------- geometry helpers


def concatenate(segments: Sequence[LightlikeCurve], breaks=None) -> LightlikeCurve:
    """Join segments end to end; segment k occupies [breaks[k], breaks[k+1]]."""
    m = len(segments)
    if breaks is None:
        breaks = np.linspace(0.0, 1.0, m + 1)
    s_parts, z_parts, v_parts = [], [], []
    have_tangents = all(seg.tangents is not None for seg in segments)
    for k, seg in enumerate(segments):
        lo, hi = breaks[k], breaks[k + 1]
        s_loc = lo + (hi - lo) * seg.s
        first = 0 if k == 0 else 1
        s_parts.append(s_loc[first:])
        z_parts.append(seg.z[first:])
        if have_tangents:
            v_parts.append(seg.tangents[first:])
    s = np.concatenate(s_parts)
    z = np.concatenate(z_parts)
    # zero-width pieces (constant segments on a degenerate partition) would repeat s
    keep = np.concatenate([[True], np.diff(s) > 0])
    tangents = np.concatenate(v_parts)[keep] if have_tangents else None
    return LightlikeCurve(s[keep], z[keep], tangents=tangents)


def subdivide(chart: SplittingChart, curve: LightlikeCurve, N: int) -> List[Event]:
    """N+1 points on the curve's image at equal Riemannian arc-length spacing."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    z = curve.z
    seg = riemann_lengths(chart, z)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if not total > 0:
        raise DegenerateCurveError("curve has zero Riemannian length")
    targets = np.linspace(0.0, total, N + 1)
    out = []
    for k, a in enumerate(targets):
        if k == 0:
            out.append(Event.from_z(z[0]))
            continue
        if k == N:
            out.append(Event.from_z(z[-1]))
            continue
        # first interval whose cumulative length reaches a; constant pieces are skipped
        j = int(np.searchsorted(cum, a, side="left"))
        j = min(max(j, 1), len(cum) - 1)
        w = (a - cum[j - 1]) / seg[j - 1] if seg[j - 1] > 0 else 0.0
        out.append(Event.from_z(z[j - 1] + w * (z[j] - z[j - 1])))
    return out


def _segment_midpoint(chart, seg: LightlikeCurve) -> np.ndarray:
    lens = riemann_lengths(chart, seg.z)
    total = float(np.sum(lens))
    if not total > 0:
        return seg.z[0].copy()
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    j = int(np.searchsorted(cum, 0.5 * total, side="left"))
    j = min(max(j, 1), len(cum) - 1)
    w = (0.5 * total - cum[j - 1]) / lens[j - 1]
    return seg.z[j - 1] + w * (seg.z[j] - seg.z[j - 1])


def _end_tangent(seg: LightlikeCurve, which: int):
    """Tangent at the start (which=0) or end (which=-1), None for a constant segment."""
    if seg.tangents is not None:
        v = seg.tangents[which]
    else:
        v = seg.z[1] - seg.z[0] if which == 0 else seg.z[-1] - seg.z[-2]
    return None if not np.any(v) else v


def junction_angles(chart: SplittingChart, segments: Sequence[LightlikeCurve]) -> np.ndarray:
    """Riemannian angle between incoming and outgoing tangents at each corner.

    Constant segments are stepped over, so the corner is measured between the
    nearest moving neighbours.
    """
    moving = [seg for seg in segments if _end_tangent(seg, 0) is not None]
    out = []
    for a, b in zip(moving[:-1], moving[1:]):
        u, v = _end_tangent(a, -1), _end_tangent(b, 0)
        gr = riemann_matrix(chart, b.z[0])
        nu = math.sqrt(max(u @ gr @ u, 0.0))
        nv = math.sqrt(max(v @ gr @ v, 0.0))
        c = float(u @ gr @ v) / (nu * nv)
        out.append(math.acos(min(1.0, max(-1.0, c))))
    return np.array(out)


def _curve_length(chart, segments) -> float:
    return float(sum(np.sum(riemann_lengths(chart, seg.z)) for seg in segments))


# ---------------------------------------------------------------- local minimizer


def _constant_curve(q: np.ndarray) -> LightlikeCurve:
    z = np.stack([q, q])
    return LightlikeCurve(np.array([0.0, 1.0]), z, tangents=np.zeros_like(z))


def _coarse_minimize(chart: SplittingChart, q: np.ndarray, target_x: np.ndarray,
                     grid: int, substeps: int, iters: int):
    """Damped gradient descent of the lifted endpoint time over polyline nodes."""
    n = q.size - 1
    x0 = q[:-1]
    s = np.linspace(0.0, 1.0, grid + 2)
    free = x0 + s[1:-1, None] * (target_x - x0)
    scale = float(np.linalg.norm(target_x - x0))
    h = 1e-6 * scale

    def evaluate(F):
        B = F.shape[0]
        full = np.empty((B, grid + 2, n))
        full[:, 0] = x0
        full[:, -1] = target_x
        full[:, 1:-1] = F
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            T = lift_endpoints(chart, s, full, np.full(B, q[-1]), substeps)[:, -1]
            tt = np.broadcast_to(q[-1], full.shape[:-1])
            ok = np.all(chart.contains(np.concatenate([full, tt[..., None]], -1)), axis=1)
        T = np.where(ok & np.isfinite(T), T, np.inf)
        return T

    tau = float(evaluate(free[None])[0])
    if not np.isfinite(tau):
        raise OutOfDomainError(np.append(target_x, q[-1]), message="straight segment leaves the domain")
    dim = grid * n
    eye = np.eye(dim).reshape(dim, grid, n) * h
    lams = scale * 0.5 ** np.arange(0, 40)
    for _ in range(iters):
        tp = evaluate(free[None] + eye)
        tm = evaluate(free[None] - eye)
        if not (np.all(np.isfinite(tp)) and np.all(np.isfinite(tm))):
            break
        grad = ((tp - tm) / (2 * h)).reshape(grid, n)
        gnorm = float(np.linalg.norm(grad))
        if gnorm * scale < 1e-13 * max(1.0, abs(tau)):
            break
        d = -grad / gnorm
        trial = evaluate(free[None] + lams[:, None, None] * d[None])
        # Armijo with a small constant; take the best admissible step
        ok = trial <= tau - 1e-4 * lams * gnorm
        if not np.any(ok):
            break
        k = int(np.argmin(np.where(ok, trial, np.inf)))
        if tau - trial[k] <= 1e-15 * max(1.0, abs(tau)):
            break
        free = free + lams[k] * d
        tau = float(trial[k])
    full = np.concatenate([x0[None], free, target_x[None]])
    return full


def _segment_method(chart, cfg):
    if cfg.segment_method == "auto":
        return "rk4" if chart.flat else "dop853"
    return cfg.segment_method


def local_fermat_minimizer(chart: SplittingChart, q, target_x, cfg: Optional[ShorteningConfig] = None
                           ) -> LightlikeCurve:
    """Earliest-arrival lightlike curve from ``q`` to the vertical line over ``target_x``.

    Coarse stage: gradient descent on the lift of a short polyline.  Refine
    stage: Newton shooting of the null geodesic equation.  If shooting fails
    a :class:`LocalMinimizerFailure` carries the coarse curve.
    """
    cfg = cfg or ShorteningConfig()
    q = as_point(q)
    target_x = np.asarray(target_x, dtype=float).reshape(q.size - 1)
    if not chart.contains(q):
        raise OutOfDomainError(q, s_exit=0.0)
    if np.array_equal(target_x, q[:-1]):
        return _constant_curve(q)
    poly = _coarse_minimize(chart, q, target_x, int(cfg.local_min_grid), int(cfg.lift_substeps),
                            int(cfg.descent_iters))
    # dense resampling so the lifted coarse curve is a usable polyline
    per = 4
    s_fine = np.linspace(0.0, 1.0, (poly.shape[0] - 1) * per + 1)
    s_nodes = np.linspace(0.0, 1.0, poly.shape[0])
    xs = np.stack([np.interp(s_fine, s_nodes, poly[:, k]) for k in range(poly.shape[1])], -1)
    coarse = lift_time(chart, SpatialPath(s_fine, xs), float(q[-1]), int(cfg.lift_substeps))
    xi0 = initial_direction_guess(chart, coarse)
    try:
        xi, Z, V, _ = shoot(chart, q, target_x, xi0, int(cfg.newton_steps), cfg.newton_tol, 50,
                              _segment_method(chart, cfg))
    except RefinementFailure as exc:
        raise LocalMinimizerFailure(f"segment shooting failed: {exc}", fallback=coarse) from exc
    s = np.linspace(0.0, 1.0, Z.shape[0])
    fine = LightlikeCurve(s, Z, null_residual(chart, s, Z), True, tangents=V)
    if not np.all(chart.contains(Z)):
        raise LocalMinimizerFailure("segment geodesic left the chart domain", fallback=coarse)
    tie = 1e-10 * max(1.0, abs(float(q[-1])))
    tc, tf = float(coarse.end[-1]), float(fine.end[-1])
    if tf < tc - tie:
        return fine
    if tf > tc + tie:
        coarse.notes.append("coarse curve kept: shooting found a later arrival")
        return coarse
    lc = float(np.sum(riemann_lengths(chart, coarse.z)))
    lf = float(np.sum(riemann_lengths(chart, fine.z)))
    return coarse if lc < lf - tie else fine


# ---------------------------------------------------------------- flow steps


def _minimize_chain(chart, start, targets, obs_x, cfg, state):
    """Sequential segment minimizers from ``start`` through the vertical lines over ``targets``."""
    segs = []
    q = as_point(start)
    for tx in list(targets) + [obs_x]:
        try:
            seg = local_fermat_minimizer(chart, q, tx, cfg)
        except LocalMinimizerFailure as exc:
            seg = exc.fallback
            state.diagnostics.append(f"iter {state.iter}: {exc}; continuing with coarse curve")
        except OutOfDomainError as exc:
            raise ShorteningAborted("out-of-domain", str(exc), state.tau_history, state) from exc
        segs.append(seg)
        q = seg.end
    return segs


def _check_monotone(state, tau_new, cfg):
    prev = state.tau_history[-1] if state.tau_history else math.inf
    if tau_new > prev + cfg.monotone_slack * max(1.0, abs(prev)):
        state.phase = "aborted"
        raise ShorteningAborted("monotonicity", f"arrival time rose from {prev!r} to {tau_new!r}",
                                state.tau_history, state)


def eta1_step(chart: SplittingChart, state: ShorteningState, obs: ObserverCurve,
              cfg: ShorteningConfig) -> ShorteningState:
    """Re-aim the chain at the vertical lines through the current nodes."""
    state.phase = "minimizing"
    targets = [node.x for node in state.nodes[1:-1]]
    segs = _minimize_chain(chart, state.nodes[0].z, targets, obs.x_obs, cfg, state)
    state.segments = segs
    _check_monotone(state, state.tau, cfg)
    state.tau_history.append(state.tau)
    return state


def eta2_step(chart: SplittingChart, state: ShorteningState, obs: ObserverCurve,
              cfg: ShorteningConfig) -> ShorteningState:
    """Re-aim the chain at the Riemannian midpoints of the current segments."""
    state.phase = "midpointing"
    mids = [_segment_midpoint(chart, seg)[:-1] for seg in state.segments]
    start = state.segments[0].start
    # the last midpoint lies short of the observer; the chain then closes on it
    segs = _minimize_chain(chart, start, mids, obs.x_obs, cfg, state)
    state.segments = segs
    state.nodes = [Event.from_z(start)] + [Event.from_z(seg.end) for seg in segs]
    _check_monotone(state, state.tau, cfg)
    state.tau_history.append(state.tau)
    return state


def eta2_breaks(N: int) -> np.ndarray:
    """Shifted partition 0, 1/2N, 3/2N, ..., 1 used after the midpoint sweep."""
    inner = (2 * np.arange(N) + 1) / (2.0 * N)
    return np.concatenate([[0.0], inner, [1.0]])


def current_curve(state: ShorteningState) -> LightlikeCurve:
    m = len(state.segments)
    breaks = eta2_breaks(m - 1) if state.phase == "midpointing" and m > 1 else None
    return concatenate(state.segments, breaks)


def initial_state(chart: SplittingChart, initial: LightlikeCurve, N: int) -> ShorteningState:
    nodes = subdivide(chart, initial, N)
    return ShorteningState(nodes=nodes, segments=[initial], tau_history=[float(initial.end[-1])])


def _guards(chart, state, region, obs, cfg):
    for seg in state.segments:
        if region is not None and not np.all(region.contains(seg.z)):
            state.phase = "aborted"
            raise ShorteningAborted("region-exit", "flow left the region", state.tau_history, state)
    length = _curve_length(chart, state.segments)
    if length > cfg.D_cap:
        state.phase = "aborted"
        raise ShorteningAborted("pseudo-coercivity-violation",
                                f"Riemannian length {length:.6g} exceeds cap {cfg.D_cap:.6g}",
                                state.tau_history, state)
    lo, hi = obs.t_range
    if not lo < state.tau < hi:
        state.phase = "aborted"
        raise ShorteningAborted("outside-worldline-domain",
                                f"arrival time {state.tau!r} outside observer range ({lo}, {hi})",
                                state.tau_history, state)
    return length


def run_shortening(chart: SplittingChart, initial: LightlikeCurve, obs: ObserverCurve,
                   region: Optional[RegionSpec], cfg: ShorteningConfig) -> GeodesicRecord:
    """Iterate the two sweeps until arrival time stalls and the corners vanish.

    Returns the Newton-refined geodesic record, or raises
    :class:`ShorteningAborted` with the arrival-time history.
    """
    if cfg.rho_star is None or cfg.D_cap is None:
        p = Event.from_z(initial.start)
        cfg = resolve_config(cfg, chart, p, obs, initial.x[1:-1])
    N = int(cfg.N_segments)
    end = initial.end
    if float(np.max(np.abs(end[:-1] - obs.x_obs))) > 1e-9:
        raise ShorteningAborted("outside-worldline-domain", "initial curve does not end on the observer")
    state = initial_state(chart, initial, N)
    _guards(chart, state, region, obs, cfg)
    tau_round = state.tau
    converged = False
    for it in range(int(cfg.max_iters)):
        state.iter = it
        curve = current_curve(state)
        length = _curve_length(chart, state.segments)
        if length / N > cfg.rho_star:
            state.phase = "aborted"
            raise ShorteningAborted("rho-star-spacing",
                                    f"node spacing {length / N:.6g} exceeds rho_star {cfg.rho_star:.6g}",
                                    state.tau_history, state)
        state.phase = "subdividing"
        state.nodes = subdivide(chart, curve, N)
        eta1_step(chart, state, obs, cfg)
        _guards(chart, state, region, obs, cfg)
        eta2_step(chart, state, obs, cfg)
        _guards(chart, state, region, obs, cfg)
        drop = tau_round - state.tau
        tau_round = state.tau
        angles = junction_angles(chart, state.segments)
        corner = float(np.max(angles)) if angles.size else 0.0
        if drop < cfg.tau_tol and corner < cfg.junction_tol:
            converged = True
            break
    if not converged:
        state.phase = "aborted"
        raise ShorteningAborted("nonconvergence", f"no convergence in {cfg.max_iters} rounds",
                                state.tau_history, state)
    state.phase = "converged"
    polyline = current_curve(state)
    try:
        rec = refine_geodesic(chart, polyline, obs, int(cfg.refine_steps), cfg.refine_tol)
    except (RefinementFailure, OutOfDomainError, OutsideWorldlineError) as exc:
        state.phase = "aborted"
        raise ShorteningAborted("refinement-failure", str(exc), state.tau_history, state) from exc
    if region is not None and not np.all(region.contains(rec.z)):
        raise ShorteningAborted("region-exit", "refined geodesic leaves the region",
                                state.tau_history, state)
    rec.diagnostics.extend(state.diagnostics)
    rec.diagnostics.append(f"shortening: rounds={state.iter + 1} tau_flow={state.tau!r}")
    rec.diagnostics.append({"tau_history": list(state.tau_history)})
    rec.diagnostics.append({"flow_curve": polyline.z.copy(), "rounds": state.iter + 1})
    return rec


# ---------------------------------------------------------------- start curves


@dataclass(frozen=True)
class StartHint:
    """Recipe for an initial spatial polyline from p to the observer.

    kinds: ``straight``; ``detour`` (through center + side*offset*normal);
    ``waypoints``; ``zigzag`` (random lateral kinks, seeded); ``wound``
    (``turns`` loops around ``center`` at radius ``offset``).
    """

    kind: str = "straight"
    side: float = 1.0
    offset: float = 0.5
    center: Optional[tuple] = None
    normal: Optional[tuple] = None
    waypoints: tuple = ()
    kinks: int = 3
    amplitude: float = 0.3
    turns: int = 1
    seed: Optional[int] = None

    KINDS = ("straight", "detour", "waypoints", "zigzag", "wound")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown start hint kind {self.kind!r}; expected one of {self.KINDS}")


def _perp(chord, center_dir, normal, n, rng=None):
    if normal is not None:
        v = np.asarray(normal, dtype=float)
    else:
        v = center_dir
        if v is None or np.linalg.norm(v) < 1e-12:
            v = np.zeros(n)
            v[np.argmin(np.abs(chord))] = 1.0
    u = chord / np.linalg.norm(chord)
    v = v - (v @ u) * u
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        raise ValueError("cannot build a direction transverse to the chord")
    return v / nv


def start_polyline(hint: StartHint, px, ox, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Spatial corner points (K, n) for ``hint``, first p.x and last the observer point."""
    px = np.asarray(px, dtype=float)
    ox = np.asarray(ox, dtype=float)
    n = px.size
    chord = ox - px
    L = float(np.linalg.norm(chord))
    if hint.kind == "straight":
        return np.stack([px, ox])
    if hint.kind == "waypoints":
        return np.vstack([px] + [np.asarray(w, dtype=float) for w in hint.waypoints] + [ox])
    center = np.asarray(hint.center, dtype=float) if hint.center is not None else 0.5 * (px + ox)
    mid = 0.5 * (px + ox)
    if hint.kind == "detour":
        e = _perp(chord, mid - center, hint.normal, n)
        return np.stack([px, center + hint.side * hint.offset * e, ox])
    if hint.kind == "zigzag":
        if rng is None:
            rng = np.random.default_rng(hint.seed)
        frac = np.sort(rng.uniform(0.15, 0.85, hint.kinks))
        pts = [px]
        for f in frac:
            d = rng.normal(size=n)
            d -= (d @ chord) / (L * L) * chord
            nd = np.linalg.norm(d)
            d = d / nd if nd > 0 else _perp(chord, None, hint.normal, n)
            pts.append(px + f * chord + rng.uniform(-1, 1) * hint.amplitude * L * d)
        pts.append(ox)
        return np.stack(pts)
    # wound: loops around the center in the plane of chord and normal
    u = chord / L
    e = _perp(chord, mid - center, hint.normal, n)
    k = 24 * max(1, hint.turns)
    ang = hint.side * 2 * np.pi * hint.turns * np.arange(1, k) / k
    loop = center + hint.offset * (np.cos(ang)[:, None] * (-u) + np.sin(ang)[:, None] * e)
    return np.vstack([px, center - hint.offset * u, *loop, center + hint.offset * u, ox])


def polyline_curve(chart: SplittingChart, corners, t0: float, per_piece: int = 8,
                   substeps: int = 4) -> LightlikeCurve:
    """Lift a corner polyline, resampled ``per_piece`` times along each straight piece."""
    corners = np.asarray(corners, dtype=float)
    m = corners.shape[0] - 1
    s_nodes = np.linspace(0.0, 1.0, m + 1)
    s = np.linspace(0.0, 1.0, m * per_piece + 1)
    x = np.stack([np.interp(s, s_nodes, corners[:, k]) for k in range(corners.shape[1])], -1)
    return lift_time(chart, SpatialPath(s, x), t0, substeps)


# ---------------------------------------------------------------- multi-start


@dataclass
class StartFailure:
    start: int
    reason: str
    message: str
    tau_history: list


@dataclass
class MultiStartResult:
    records: List[GeodesicRecord]
    failures: List[StartFailure]
    attempts: int


def path_distance(a: GeodesicRecord, b: GeodesicRecord) -> float:
    """Max spatial distance between two records sampled at common parameters."""
    s = np.union1d(a.s, b.s)
    xa = np.stack([np.interp(s, a.s, a.z[:, k]) for k in range(a.z.shape[1] - 1)], -1)
    xb = np.stack([np.interp(s, b.s, b.z[:, k]) for k in range(b.z.shape[1] - 1)], -1)
    return float(np.max(np.linalg.norm(xa - xb, axis=-1)))


def multi_start(chart: SplittingChart, p: Event, obs: ObserverCurve, region: Optional[RegionSpec],
                cfg: ShorteningConfig, hints: Sequence[StartHint], k_starts: Optional[int] = None,
                seed: int = 0, dedup_radius: Optional[float] = None) -> MultiStartResult:
    """Shorten from several start curves and keep the distinct rays, sorted by arrival time.

    With ``k_starts`` above the number of hints, the remainder is filled with
    seeded random zig-zags.
    """
    hints = list(hints) or [StartHint()]
    k = len(hints) if k_starts is None else int(k_starts)
    rng = np.random.default_rng(seed)
    while len(hints) < k:
        hints.append(StartHint(kind="zigzag", seed=int(rng.integers(2**31))))
    hints = hints[:k]
    extra = []
    for h in hints:
        if h.center is not None:
            extra.append(h.center)
        extra.extend(h.waypoints)
    cfg = resolve_config(cfg, chart, p, obs, extra)
    if dedup_radius is None:
        dedup_radius = 1e-3 * max(1.0, float(np.linalg.norm(obs.x_obs - p.x)))
    records, failures = [], []
    for i, hint in enumerate(hints):
        try:
            corners = start_polyline(hint, p.x, obs.x_obs, np.random.default_rng(
                hint.seed if hint.seed is not None else seed + i))
            initial = polyline_curve(chart, corners, p.t, substeps=int(cfg.lift_substeps))
            rec = run_shortening(chart, initial, obs, region, cfg)
        except ShorteningAborted as exc:
            failures.append(StartFailure(i, exc.reason, str(exc), exc.tau_history))
            continue
        except FermatError as exc:
            failures.append(StartFailure(i, type(exc).__name__, str(exc), []))
            continue
        rec.diagnostics.append(f"start {i}: {hint.kind}")
        dup = False
        for other in records:
            if abs(other.tau - rec.tau) < 10 * cfg.tau_tol and path_distance(other, rec) < dedup_radius:
                dup = True
                break
        if not dup:
            records.append(rec)
    records.sort(key=lambda r: (r.tau, float(r.z[len(r.z) // 2, 0])))
    return MultiStartResult(records, failures, len(hints))


# ---------------------------------------------------------------- convexity check


@dataclass
class ConvexityReport:
    n_pairs: int
    pair_violations: int
    n_grazing: int
    grazing_violations: int
    witnesses: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.pair_violations + self.grazing_violations

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "pair_violations": self.pair_violations,
                "n_grazing": self.n_grazing, "grazing_violations": self.grazing_violations,
                "violations": self.violations}


def _reenters(inside: np.ndarray) -> bool:
    out = np.nonzero(~inside)[0]
    return out.size > 0 and bool(np.any(inside[out[0]:]))


def _normal(region: RegionSpec, z, h=1e-6):
    n = z.size - 1
    grad = np.zeros(z.size)
    for k in range(n):
        e = np.zeros(z.size)
        e[k] = h
        grad[k] = (region.level(z + e) - region.level(z - e)) / (2 * h)
    nrm = np.linalg.norm(grad)
    return grad / nrm if nrm > 0 else grad


def check_light_convexity(chart: SplittingChart, region: RegionSpec, n_samples: int = 64,
                          horizon: float = 4.0, rho_star: float = 0.5, seed: int = 0,
                          cfg: Optional[ShorteningConfig] = None, t0: float = 0.0,
                          n_steps: int = 400, inset: float = 1e-3, max_tilt: float = 0.2
                          ) -> ConvexityReport:
    """Monte-Carlo audit of light convexity near the region boundary.

    Pairs of interior points within ``rho_star`` of a boundary sample are
    joined by the segment minimizer; a curve that leaves the region counts
    as a violation.  Null geodesics launched nearly tangent to the boundary
    are followed for ``horizon`` and count if they leave and come back.
    """
    cfg = cfg or ShorteningConfig(newton_steps=32)
    rng = np.random.default_rng(seed)
    samples = np.asarray(region.boundary_samples, dtype=float) if region.boundary_samples is not None \
        else np.empty((0, chart.n_space))
    report = ConvexityReport(0, 0, 0, 0)
    if samples.size == 0:
        return report
    n = chart.n_space
    for _ in range(n_samples):
        b = np.append(samples[rng.integers(len(samples))], t0)
        pts = []
        for _try in range(50):
            c = b.copy()
            c[:n] += rng.uniform(-rho_star, rho_star, n)
            if np.linalg.norm(c[:n] - b[:n]) <= rho_star and region.contains(c) and chart.contains(c):
                pts.append(c)
                if len(pts) == 2:
                    break
        if len(pts) < 2:
            continue
        report.n_pairs += 1
        try:
            seg = local_fermat_minimizer(chart, pts[0], pts[1][:n], cfg)
        except LocalMinimizerFailure as exc:
            seg = exc.fallback
        except FermatError:
            continue
        if not np.all(region.contains(seg.z)):
            report.pair_violations += 1
            if len(report.witnesses) < 8:
                report.witnesses.append({"kind": "pair", "start": pts[0].tolist(),
                                         "target_x": pts[1][:n].tolist()})
    if region.level is None:
        return report
    for _ in range(n_samples):
        b = np.append(samples[rng.integers(len(samples))], t0)
        nrm = _normal(region, b)
        z0 = b - inset * nrm
        if not (region.contains(z0) and chart.contains(z0)):
            continue
        d = rng.normal(size=n)
        d -= (d @ nrm[:n]) * nrm[:n]
        if np.linalg.norm(d) < 1e-12:
            continue
        d /= np.linalg.norm(d)
        tilt = rng.uniform(-max_tilt, max_tilt)
        xi = d + tilt * nrm[:n]
        v0 = null_vector(chart, z0, xi)
        report.n_grazing += 1
        smp = integrate_null_geodesic(chart, z0, v0, length=horizon, n_steps=n_steps)
        z = smp.z
        if z.shape[0] == 0:
            continue
        if _reenters(region.contains(z)):
            report.grazing_violations += 1
            if len(report.witnesses) < 8:
                report.witnesses.append({"kind": "grazing", "start": z0.tolist(), "xi": xi.tolist()})
    return report


__all__ = [
    "ShorteningConfig", "ShorteningState", "StartHint", "MultiStartResult", "StartFailure",
    "ConvexityReport", "subdivide", "local_fermat_minimizer", "eta1_step", "eta2_step",
    "run_shortening", "multi_start", "check_light_convexity", "resolve_config",
    "junction_angles", "concatenate", "start_polyline", "polyline_curve", "path_distance",
    "current_curve", "initial_state", "eta2_breaks", "straight_chord_length",
]
