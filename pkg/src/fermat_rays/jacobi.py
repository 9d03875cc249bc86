"""Null geodesics, Jacobi fields, conjugate points and the index of tau.

Geodesics are parameterized affinely on s in [0, 1]; a record stores the
initial data and step count so that Jacobi fields can be integrated on
the same RK4 grid as the geodesic itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import minimize_scalar

from .causal import LightlikeCurve, null_residual
from .errors import BasisDegenerateError, OutOfDomainError, OutsideWorldlineError, RefinementFailure
from .metric import (ObserverCurve, SplittingChart, as_point, christoffel, connection_and_derivative,
                     curvature_from_connection, curvature_operator,
                     metric_matrix, null_time_component, riemann_matrix)


class DegenerateInertiaWarning(UserWarning):
    """An eigenvalue of the Hessian sits inside the zero band."""


@dataclass
class GeodesicSamples:
    s: np.ndarray
    z: np.ndarray
    v: np.ndarray
    exited: bool = False
    exit_index: Optional[int] = None


@dataclass
class GeodesicRecord:
    s: np.ndarray
    z: np.ndarray
    tangent: np.ndarray
    tau: float
    geodesic_residual: float
    null_residual: float
    n_steps: int
    index_mu: Optional[int] = None
    nondegenerate: Optional[bool] = None
    conjugate_points: Optional[list] = None
    converged: bool = True
    diagnostics: list = field(default_factory=list)

    @property
    def z0(self) -> np.ndarray:
        return self.z[0]

    @property
    def v0(self) -> np.ndarray:
        return self.tangent[0]

    def as_curve(self) -> LightlikeCurve:
        return LightlikeCurve(self.s.copy(), self.z.copy(), self.null_residual, True,
                              tangents=self.tangent.copy())


@dataclass
class JacobiSolution:
    """Matrix Jacobi solution J(s), with its covariant derivative, on the record grid."""

    s: np.ndarray
    J: np.ndarray
    DJ: np.ndarray


# ------------------------------------------------------------ integration


def null_vector(chart: SplittingChart, z, xi) -> np.ndarray:
    """Future-pointing null vector with spatial part ``xi``."""
    z = as_point(z)
    xi = np.asarray(xi, dtype=float)
    theta = null_time_component(chart, z, xi)
    return np.concatenate([xi, np.atleast_1d(theta)], axis=-1) if xi.ndim == 1 else \
        np.concatenate([xi, theta[..., None]], axis=-1)


def _accel(chart, z, v):
    gam = christoffel(chart, z, check_domain=False)
    return -np.einsum("...kij,...i,...j->...k", gam, v, v)


def _integrate(chart, z0, v0, length, n_steps):
    """Batched RK4 for z'' = -Gamma(z', z'); arrays have shape (B, N)."""
    h = length / n_steps
    B = z0.shape[0]
    if chart.flat:
        # vanishing connection: RK4 reproduces straight lines exactly
        s = h * np.arange(n_steps + 1)
        Z = z0[None] + s[:, None, None] * v0[None]
        V = np.broadcast_to(v0[None], Z.shape).copy()
        ok = chart.contains(Z) & np.all(np.isfinite(Z), axis=-1)
        bad = ~ok
        exit_at = np.where(np.any(bad, axis=0), np.argmax(bad, axis=0), -1)
        for b in np.nonzero(exit_at > 0)[0]:
            Z[exit_at[b]:, b] = Z[exit_at[b] - 1, b]
            V[exit_at[b]:, b] = V[exit_at[b] - 1, b]
        return Z, V, exit_at
    Z = np.empty((n_steps + 1, B, z0.shape[1]))
    V = np.empty_like(Z)
    z, v = z0.copy(), v0.copy()
    Z[0], V[0] = z, v
    alive = chart.contains(z)
    exit_at = np.where(alive, -1, 0)
    for k in range(n_steps):
        a1 = _accel(chart, z, v)
        z2, v2 = z + 0.5 * h * v, v + 0.5 * h * a1
        a2 = _accel(chart, z2, v2)
        z3, v3 = z + 0.5 * h * v2, v + 0.5 * h * a2
        a3 = _accel(chart, z3, v3)
        z4, v4 = z + h * v3, v + h * a3
        a4 = _accel(chart, z4, v4)
        zn = z + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        vn = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        ok = chart.contains(zn) & np.all(np.isfinite(zn), axis=-1) & np.all(np.isfinite(vn), axis=-1)
        newly = alive & ~ok
        exit_at[newly] = k + 1
        alive = alive & ok
        z = np.where(alive[:, None], zn, z)
        v = np.where(alive[:, None], vn, v)
        Z[k + 1], V[k + 1] = z, v
    return Z, V, exit_at


def _integrate_adaptive(chart, z0, v0, length, n_out, rtol=1e-12, atol=1e-13):
    """Batched DOP853 for the same system, sampled on a uniform grid of n_out steps.

    All trajectories share one step sequence, which keeps finite differences
    between neighbouring trajectories free of step-selection noise.
    """
    B, N = z0.shape

    def rhs(_, y):
        y = y.reshape(B, 2, N)
        z, v = y[:, 0], y[:, 1]
        inside = chart.contains(z)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            a = _accel(chart, z, v)
        a = np.where(inside[:, None] & np.isfinite(a), a, 0.0)
        return np.stack([v, a], 1).reshape(-1)

    s_eval = np.linspace(0.0, length, n_out + 1)
    y0 = np.stack([z0, v0], 1).reshape(-1)
    sol = solve_ivp(rhs, (0.0, length), y0, method="DOP853", t_eval=s_eval, rtol=rtol, atol=atol)
    if not sol.success or sol.y.shape[1] != n_out + 1:
        Z = np.full((n_out + 1, B, N), np.nan)
        return Z, Z.copy(), np.zeros(B, dtype=int)
    Y = sol.y.T.reshape(n_out + 1, B, 2, N)
    Z, V = Y[:, :, 0], Y[:, :, 1]
    ok = chart.contains(Z) & np.all(np.isfinite(Z), axis=-1)
    bad = ~ok
    exit_at = np.where(np.any(bad, axis=0), np.argmax(bad, axis=0), -1)
    return Z, V, exit_at


def integrate_null_geodesic(chart: SplittingChart, z0, v0, length: float = 1.0,
                            step: float = 1e-3, n_steps: Optional[int] = None) -> GeodesicSamples:
    """RK4 integration of the geodesic equation from (z0, v0) over ``length``.

    No renormalization is applied; on leaving the chart domain the partial
    trajectory is returned with ``exited`` set.
    """
    z0 = as_point(z0)
    v0 = np.asarray(v0, dtype=float)
    if n_steps is None:
        n_steps = max(1, int(math.ceil(length / step - 1e-9)))
    Z, V, exit_at = _integrate(chart, z0[None], v0[None], float(length), int(n_steps))
    s = np.linspace(0.0, length, n_steps + 1)
    e = int(exit_at[0])
    if e >= 0:
        return GeodesicSamples(s[:e], Z[:e, 0], V[:e, 0], True, e)
    return GeodesicSamples(s, Z[:, 0], V[:, 0])


def null_drift(chart: SplittingChart, samples: GeodesicSamples) -> float:
    g = metric_matrix(chart, samples.z)
    return float(np.max(np.abs(np.einsum("ki,kij,kj->k", samples.v, g, samples.v))))


def _fd_derivative(y, h):
    """Fourth-order differences along axis 0, one-sided near the ends."""
    d = np.gradient(y, h, axis=0, edge_order=2)
    if y.shape[0] >= 5:
        d[2:-2] = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
        d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
        d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
        d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
        d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def geodesic_residual(chart: SplittingChart, s, z, v) -> float:
    """max ||D_s z'||_R / ||z'||_R^2 from sampled data."""
    h = s[1] - s[0]
    dv = _fd_derivative(v, h)
    gam = christoffel(chart, z, check_domain=False)
    acc = dv + np.einsum("kaij,ki,kj->ka", gam, v, v)
    gr = riemann_matrix(chart, z)
    num = np.sqrt(np.maximum(np.einsum("ki,kij,kj->k", acc, gr, acc), 0))
    den = np.einsum("ki,kij,kj->k", v, gr, v)
    moving = den > 0
    if not np.any(moving):
        return 0.0
    return float(np.max(num[moving] / den[moving]))


def make_record(chart: SplittingChart, z0, v0, n_steps: int, obs: Optional[ObserverCurve] = None,
                length: float = 1.0) -> GeodesicRecord:
    """Integrate from (z0, v0) on [0, length] and package a record on s in [0, 1].

    A nonunit ``length`` is absorbed into the tangent so the stored record is
    affinely parameterized on [0, 1].
    """
    z0 = as_point(z0)
    v0 = np.asarray(v0, dtype=float) * length
    Z, V, exit_at = _integrate(chart, z0[None], v0[None], 1.0, n_steps)
    if exit_at[0] >= 0:
        raise OutOfDomainError(Z[exit_at[0], 0], s_exit=exit_at[0] / n_steps,
                               message="geodesic left the chart domain")
    s = np.linspace(0.0, 1.0, n_steps + 1)
    z, v = Z[:, 0], V[:, 0]
    tau = float(z[-1, -1])
    rec = GeodesicRecord(s, z, v, tau, geodesic_residual(chart, s, z, v),
                         null_residual_tangent(chart, z, v), n_steps)
    if obs is not None:
        lo, hi = obs.t_range
        if not lo < tau < hi:
            raise OutsideWorldlineError(f"arrival time {tau!r} outside observer range ({lo}, {hi})")
    return rec


def null_residual_tangent(chart, z, v) -> float:
    g = metric_matrix(chart, z)
    gr = riemann_matrix(chart, z)
    num = np.abs(np.einsum("ki,kij,kj->k", v, g, v))
    den = np.einsum("ki,kij,kj->k", v, gr, v)
    moving = den > 0
    return float(np.max(num[moving] / den[moving])) if np.any(moving) else 0.0


# ---------------------------------------------------------------- shooting


def _shoot_residual(chart, z0, xis, target_x, n_steps, method="rk4"):
    v0 = null_vector(chart, np.broadcast_to(z0, (xis.shape[0], z0.size)), xis)
    run = _integrate if method == "rk4" else _integrate_adaptive
    Z, V, exit_at = run(chart, np.broadcast_to(z0, v0.shape).copy(), v0, 1.0, n_steps)
    end = Z[-1, :, :-1]
    res = end - target_x
    res[exit_at >= 0] = np.inf
    return res, Z, V, exit_at


def shoot(chart: SplittingChart, z0, target_x, xi_guess, n_steps: int = 200,
          tol: float = 1e-11, max_iter: int = 50, method: str = "rk4"):
    """Newton shooting for the null geodesic from z0 reaching x = target_x at s = 1.

    Unknowns are the spatial components of the initial tangent; the time
    component is fixed by the null condition.  ``method`` is ``"rk4"`` (fixed
    grid of ``n_steps``) or ``"dop853"`` (adaptive, sampled on that grid).
    Returns (xi, Z, V, iterations) and raises :class:`RefinementFailure`
    otherwise.
    """
    if method not in ("rk4", "dop853"):
        raise ValueError(f"unknown integration method {method!r}")
    z0 = as_point(z0)
    target_x = np.asarray(target_x, dtype=float)
    xi = np.asarray(xi_guess, dtype=float).copy()
    n = xi.size
    scale = max(1.0, float(np.max(np.abs(target_x - z0[:-1]))))
    res, Z, V, _ = _shoot_residual(chart, z0, xi[None], target_x, n_steps, method)
    fnorm = float(np.max(np.abs(res[0])))
    for it in range(max_iter):
        if fnorm <= tol * scale:
            return xi, Z[:, 0], V[:, 0], it
        hstep = 1e-7 * max(1.0, float(np.max(np.abs(xi))))
        pert = xi[None] + hstep * np.eye(n)
        rp, *_ = _shoot_residual(chart, z0, pert, target_x, n_steps, method)
        if not np.all(np.isfinite(rp)):
            pert = xi[None] - hstep * np.eye(n)
            rp, *_ = _shoot_residual(chart, z0, pert, target_x, n_steps, method)
            jac = (res[0][:, None] - rp.T) / hstep
        else:
            jac = (rp.T - res[0][:, None]) / hstep
        try:
            delta = np.linalg.solve(jac, -res[0])
        except np.linalg.LinAlgError as exc:
            raise RefinementFailure(f"singular shooting Jacobian at iteration {it}") from exc
        lam = 1.0
        for _ in range(30):
            trial = xi + lam * delta
            rt, Zt, Vt, _ = _shoot_residual(chart, z0, trial[None], target_x, n_steps, method)
            ft = float(np.max(np.abs(rt[0])))
            if np.isfinite(ft) and ft < fnorm:
                break
            lam *= 0.5
        else:
            raise RefinementFailure(f"shooting line search stalled at |F|={fnorm:.3g}")
        xi, res, Z, V, fnorm = trial, rt, Zt, Vt, ft
    if fnorm <= tol * scale:
        return xi, Z[:, 0], V[:, 0], max_iter
    raise RefinementFailure(f"shooting did not converge in {max_iter} iterations (|F|={fnorm:.3g})")


def initial_direction_guess(chart: SplittingChart, curve: LightlikeCurve) -> np.ndarray:
    """Spatial initial tangent for shooting along ``curve`` over s in [0, 1].

    Direction from the first moving chord; magnitude chosen so that
    -g(W, z') equals the curve's integral of sqrt(<d,x'>^2 + <a x',x'>),
    which is conserved along geodesics of stationary charts.
    """
    x = curve.x
    steps = np.linalg.norm(np.diff(x, axis=0), axis=-1)
    moving = np.nonzero(steps > 1e-14 * max(1.0, float(np.max(np.abs(x)))))[0]
    if moving.size == 0:
        return np.zeros(x.shape[1])
    k = moving[0]
    d = x[k + 1] - x[0]
    z0 = curve.z[0]
    a = chart.alpha(z0[:-1], z0[-1])
    dl = chart.delta(z0[:-1], z0[-1])
    unit = math.sqrt(float(d @ dl) ** 2 + float(d @ a @ d))
    ds = np.diff(curve.s)
    xdot = np.diff(x, axis=0) / ds[:, None]
    mid = 0.5 * (curve.z[1:] + curve.z[:-1])
    am = chart.alpha(mid[:, :-1], mid[:, -1])
    dm = np.broadcast_to(chart.delta(mid[:, :-1], mid[:, -1]), xdot.shape)
    dx = np.einsum("ki,ki->k", dm, xdot)
    energy = float(np.sum(np.sqrt(dx * dx + np.einsum("ki,kij,kj->k", xdot, am, xdot)) * ds))
    return d * (energy / unit)


def refine_geodesic(chart: SplittingChart, polyline: LightlikeCurve, obs: ObserverCurve,
                    n_steps: int = 1000, tol: float = 1e-11, max_iter: int = 50) -> GeodesicRecord:
    """Newton-shoot the geodesic from the polyline's start to the observer line."""
    z0 = polyline.start
    xi0 = initial_direction_guess(chart, polyline)
    try:
        xi, Z, V, iters = shoot(chart, z0, obs.x_obs, xi0, n_steps, tol, max_iter)
    except RefinementFailure as exc:
        raise RefinementFailure(str(exc), polyline) from exc
    rec = make_record(chart, z0, null_vector(chart, z0, xi), n_steps, obs)
    rec.diagnostics.append(f"refine: newton iterations={iters}")
    return rec


# ---------------------------------------------------------------- Jacobi


def _jacobi_rhs(chart, z, v, J, P):
    gam, dgam = connection_and_derivative(chart, z)
    a = -np.einsum("kij,i,j->k", gam, v, v)
    gv = np.einsum("kij,i->kj", gam, v)  # Gamma^k_ij v^i
    M = curvature_from_connection(gam, dgam, v)
    dJ = P - gv @ J
    dP = -M @ J - gv @ P
    return a, dJ, dP


def _jacobi_step(chart, z, v, J, P, h):
    a1, j1, p1 = _jacobi_rhs(chart, z, v, J, P)
    a2, j2, p2 = _jacobi_rhs(chart, z + 0.5 * h * v, v + 0.5 * h * a1, J + 0.5 * h * j1, P + 0.5 * h * p1)
    v2 = v + 0.5 * h * a1
    v3 = v + 0.5 * h * a2
    a3, j3, p3 = _jacobi_rhs(chart, z + 0.5 * h * v2, v3, J + 0.5 * h * j2, P + 0.5 * h * p2)
    v4 = v + h * a3
    a4, j4, p4 = _jacobi_rhs(chart, z + h * v3, v4, J + h * j3, P + h * p3)
    zn = z + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
    vn = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    Jn = J + h / 6 * (j1 + 2 * j2 + 2 * j3 + j4)
    Pn = P + h / 6 * (p1 + 2 * p2 + 2 * p3 + p4)
    return zn, vn, Jn, Pn


def _jacobi_run(chart, record, J0, P0):
    n = record.n_steps
    h = 1.0 / n
    z, v = record.z[0].copy(), record.tangent[0].copy()
    J, P = np.array(J0, dtype=float), np.array(P0, dtype=float)
    Js = np.empty((n + 1,) + J.shape)
    Ps = np.empty_like(Js)
    Zs = np.empty((n + 1, z.size))
    Vs = np.empty_like(Zs)
    Js[0], Ps[0], Zs[0], Vs[0] = J, P, z, v
    for k in range(n):
        z, v, J, P = _jacobi_step(chart, z, v, J, P, h)
        Js[k + 1], Ps[k + 1], Zs[k + 1], Vs[k + 1] = J, P, z, v
    return Zs, Vs, Js, Ps


def solve_jacobi(chart: SplittingChart, record: GeodesicRecord, zeta0, dzeta0):
    """Jacobi field with zeta(0) = zeta0 and D_s zeta(0) = dzeta0 on the record grid.

    Integrates  zeta' = P - Gamma(z', zeta),  P' = -R(zeta, z') z' - Gamma(z', P)
    jointly with the geodesic.  Returns (s, zeta, D_s zeta) with zeta in
    coordinate components.
    """
    zeta0 = np.asarray(zeta0, dtype=float)
    dzeta0 = np.asarray(dzeta0, dtype=float)
    _, _, Js, Ps = _jacobi_run(chart, record, zeta0[:, None], dzeta0[:, None])
    return record.s.copy(), Js[:, :, 0], Ps[:, :, 0]


def jacobi_matrix(chart: SplittingChart, record: GeodesicRecord) -> JacobiSolution:
    """Matrix solution with J(0) = 0, D_s J(0) = I."""
    n = record.z.shape[1]
    _, _, Js, Ps = _jacobi_run(chart, record, np.zeros((n, n)), np.eye(n))
    return JacobiSolution(record.s.copy(), Js, Ps)


def _sv_ratio(J):
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[..., -1] / sv[..., 0], sv


def conjugate_points(chart: SplittingChart, record: GeodesicRecord, svd_tol: float = 1e-6,
                     merge_tol: float = 1e-4, solution: Optional[JacobiSolution] = None) -> list:
    """Conjugate points of z(0) along the record as a list of (s, multiplicity).

    J(s) (J(0) = 0, J'(0) = I) is scanned for rank deficiency through the
    ratio of its extreme singular values, which stays O(1) near s = 0 where
    J ~ s I.  Local minima are localized by bounded scalar minimization using
    single RK4 sub-steps from the nearest grid node.
    """
    sol = solution if solution is not None else jacobi_matrix(chart, record)
    s = sol.s
    n_dim = record.z.shape[1]
    h = s[1] - s[0]
    ratio, _ = _sv_ratio(sol.J[1:])
    ratio = np.concatenate([[1.0], ratio])
    Zs, Vs = record.z, record.tangent

    def state_at(sq):
        k = min(int(np.floor(sq / h)), len(s) - 2)
        dt = sq - s[k]
        if dt <= 0:
            return sol.J[k]
        _, _, Jn, _ = _jacobi_step(chart, Zs[k], Vs[k], sol.J[k], sol.DJ[k], dt)
        return Jn

    def ratio_at(sq):
        return _sv_ratio(state_at(sq))[0]

    found = []
    last = len(s) - 1
    # a sampled |s - s*| profile has its lowest node within one neighbour rise
    # of zero; plateaus and smooth positive minima fail this test
    def v_shaped(k):
        rise = max(ratio[k - 1] - ratio[k], ratio[min(k + 1, last)] - ratio[k])
        return ratio[k] <= rise + svd_tol

    candidates = [k for k in range(2, last)
                  if ratio[k] <= ratio[k - 1] and ratio[k] <= ratio[k + 1] and v_shaped(k)]
    if ratio[last] <= ratio[last - 1] and ratio[last] <= 2.0 * (ratio[last - 1] - ratio[last]) + svd_tol:
        candidates.append(last)
    for k in candidates:
        lo, hi = s[k - 1], s[min(k + 1, last)]
        opt = minimize_scalar(ratio_at, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 200})
        best_s, best = float(opt.x), float(opt.fun)
        if k == last and ratio[last] < best:
            best_s, best = 1.0, float(ratio[last])
        if best < svd_tol:
            found.append(1.0 if 1.0 - best_s < 1e-9 else best_s)
    found.sort()
    merged = []
    for sc in found:
        if merged and sc - merged[-1] < merge_tol:
            continue
        merged.append(sc)
    out = []
    for sc in merged:
        sv = np.linalg.svd(state_at(sc) if sc < 1.0 else sol.J[-1], compute_uv=False)
        mult = int(np.sum(sv / sv[0] < max(svd_tol, 1e3 * sv[-1] / sv[0])))
        if mult > n_dim - 1:
            warnings.warn(f"conjugate multiplicity {mult} clamped to {n_dim - 1}")
            mult = n_dim - 1
        out.append((sc, max(mult, 1)))
    return out


def geometric_index(record: GeodesicRecord, loc_tol: float = 1e-6) -> int:
    """Index mu: conjugate points in the open interval (0, 1) with multiplicity.

    Also sets ``record.nondegenerate`` (no conjugate point at s = 1).
    """
    if record.conjugate_points is None:
        raise ValueError("conjugate points have not been computed for this record")
    mu = sum(m for sc, m in record.conjugate_points if 0.0 < sc < 1.0 - loc_tol)
    record.index_mu = int(mu)
    record.nondegenerate = not any(abs(sc - 1.0) <= loc_tol for sc, _ in record.conjugate_points)
    return record.index_mu


def analyze_record(chart: SplittingChart, record: GeodesicRecord, svd_tol: float = 1e-6) -> GeodesicRecord:
    record.conjugate_points = conjugate_points(chart, record, svd_tol)
    geometric_index(record)
    return record


# ---------------------------------------------------------------- Hessian


def parallel_frame(chart: SplittingChart, record: GeodesicRecord) -> np.ndarray:
    """E(s) with E(0) = I and D_s E = 0, shape (n_steps+1, N, N)."""
    n = record.z.shape[1]
    # a Jacobi run with zero curvature coupling is parallel transport of P
    h = 1.0 / record.n_steps
    z, v = record.z[0].copy(), record.tangent[0].copy()
    E = np.eye(n)
    out = np.empty((record.n_steps + 1, n, n))
    out[0] = E

    def rhs(z, v, E):
        gam = christoffel(chart, z, check_domain=False)
        return -np.einsum("kij,i,j->k", gam, v, v), -np.einsum("kij,i->kj", gam, v) @ E

    for k in range(record.n_steps):
        a1, e1 = rhs(z, v, E)
        v2 = v + 0.5 * h * a1
        a2, e2 = rhs(z + 0.5 * h * v, v2, E + 0.5 * h * e1)
        v3 = v + 0.5 * h * a2
        a3, e3 = rhs(z + 0.5 * h * v2, v3, E + 0.5 * h * e2)
        v4 = v + h * a3
        a4, e4 = rhs(z + h * v3, v4, E + h * e3)
        z = z + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        E = E + h / 6 * (e1 + 2 * e2 + 2 * e3 + e4)
        out[k + 1] = E
    return out


@dataclass
class HessianInfo:
    H: np.ndarray
    asymmetry: float
    gram_condition: float
    prefactor: float
    n_modes: int
    screen_dim: int
    parameterization_spread: float


def screen_basis(chart: SplittingChart, z, v, u) -> np.ndarray:
    """Orthonormal basis of {e : g(e, v) = 0, g(e, u) = 0}, shape (N-2, N).

    Spatial coordinate vectors are projected along v and u and then
    orthonormalized with the (positive on this space) Lorentzian metric.
    """
    g = metric_matrix(chart, z)
    n = g.shape[0]
    A = np.array([[v @ g @ v, v @ g @ u], [u @ g @ v, u @ g @ u]])
    proj = []
    for a in range(n - 1):
        e = np.zeros(n)
        e[a] = 1.0
        rhs = -np.array([e @ g @ v, e @ g @ u])
        c = np.linalg.solve(A, rhs)
        proj.append(e + c[0] * v + c[1] * u)
    P = np.array(proj)
    gram = P @ g @ P.T
    w, Q = np.linalg.eigh(gram)
    keep = w > 1e-10 * w.max()
    basis = (Q[:, keep] / np.sqrt(w[keep])).T @ P
    return basis


def hessian_matrix(chart: SplittingChart, record: GeodesicRecord, n_modes: int = 8,
                   return_info: bool = False):
    """Discretized Hessian of the arrival time at a lightlike geodesic.

    Variation fields are sin(k pi s) e_a(s), k = 1..n_modes, with e_a a
    parallel orthonormal frame of the screen space orthogonal to z' and to
    the parallel transport U of the observer's tangent W.  These satisfy
    zeta(0) = zeta(1) = 0 and <D_s zeta, z'> = 0.  The form is

        H[a, b] = -1/g(W, z'(1)) * int (<D zeta_a, D zeta_b> - <R(zeta_a, z') z', zeta_b>) ds
    """
    s, z, v = record.s, record.z, record.tangent
    n = z.shape[1]
    E = parallel_frame(chart, record)
    w_end = np.zeros(n)
    w_end[-1] = 1.0
    U = np.einsum("kij,j->ki", E, np.linalg.solve(E[-1], w_end))
    g_all = metric_matrix(chart, z)
    guz = np.einsum("ki,kij,kj->k", U, g_all, v)
    spread = float(np.ptp(guz) / max(abs(np.mean(guz)), 1e-300))
    screen0 = screen_basis(chart, z[0], v[0], U[0])
    m = screen0.shape[0]
    frames = np.einsum("kij,aj->kai", E, screen0)  # (K, m, N)
    h = s[1] - s[0]
    gam = christoffel(chart, z, check_domain=False)
    de = _fd_derivative(frames, h) + np.einsum("kpij,ki,kaj->kap", gam, v, frames)
    M = curvature_operator(chart, z, v)  # (K, N, N)
    fields, dfields = [], []
    for kk in range(1, n_modes + 1):
        f = np.sin(kk * np.pi * s)
        df = kk * np.pi * np.cos(kk * np.pi * s)
        for a in range(m):
            fields.append(f[:, None] * frames[:, a])
            dfields.append(df[:, None] * frames[:, a] + f[:, None] * de[:, a])
    Z = np.array(fields)  # (nb, K, N)
    DZ = np.array(dfields)
    kin = np.einsum("aki,kij,bkj->abk", DZ, g_all, DZ)
    RZ = np.einsum("kij,akj->aki", M, Z)
    pot = np.einsum("aki,kij,bkj->abk", RZ, g_all, Z)
    H = trapezoid(kin - pot, s, axis=-1)
    prefactor = -1.0 / float(w_end @ g_all[-1] @ v[-1])
    H = prefactor * H
    gram = trapezoid(np.einsum("aki,kij,bkj->abk", Z, g_all, Z), s, axis=-1)
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > 1e12:
        raise BasisDegenerateError(f"projected basis Gram condition {cond:.3g}; try fewer modes")
    scale = max(float(np.max(np.abs(H))), 1e-300)
    asym = float(np.max(np.abs(H - H.T)) / scale)
    Hs = 0.5 * (H + H.T)
    if return_info:
        return Hs, HessianInfo(Hs, asym, cond, prefactor, n_modes, m, spread)
    return Hs


def morse_index_numeric(H, inertia_tol: float = 1e-8) -> int:
    """Number of eigenvalues below -inertia_tol * ||H||."""
    H = np.asarray(H, dtype=float)
    w = np.linalg.eigvalsh(H)
    norm = float(np.max(np.abs(w))) if w.size else 0.0
    band = inertia_tol * norm
    if np.any(np.abs(w) <= band):
        warnings.warn("Hessian has an eigenvalue in the zero band; endpoint may be conjugate",
                      DegenerateInertiaWarning)
    return int(np.sum(w < -band))
