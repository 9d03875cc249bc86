"""Lightlike lifts of spatial paths and the arrival-time functional."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DegenerateCurveError, NotOnObserverError, OutOfDomainError,
                     OutsideWorldlineError)
from .metric import (ObserverCurve, SplittingChart, as_point, metric_matrix,
                     riemann_matrix)

SNAP_TOL = 1e-9


@dataclass
class SpatialPath:
    """Piecewise-linear spatial path x(s), s from 0 to 1."""

    s: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.s.ndim != 1 or self.s.size != self.x.shape[0] or self.s.size < 2:
            raise ValueError("SpatialPath needs matching s and x with at least two samples")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("SpatialPath parameter must be strictly increasing")
        if abs(self.s[0]) > 1e-12 or abs(self.s[-1] - 1.0) > 1e-12:
            raise ValueError("SpatialPath parameter must run from 0 to 1")

    @classmethod
    def from_points(cls, x) -> "SpatialPath":
        x = np.asarray(x, dtype=float)
        return cls(np.linspace(0.0, 1.0, x.shape[0]), x)

    @classmethod
    def from_function(cls, fn, n=1001) -> "SpatialPath":
        s = np.linspace(0.0, 1.0, n)
        return cls(s, np.array([fn(si) for si in s]))


@dataclass
class LightlikeCurve:
    """Sampled curve z(s) = (x(s), t(s)), piecewise-linear between samples."""

    s: np.ndarray
    z: np.ndarray
    null_residual: float = 0.0
    future_ok: bool = True
    notes: list = field(default_factory=list)
    # exact tangents at the samples when the curve came from an ODE solve
    tangents: Optional[np.ndarray] = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        if self.tangents is not None:
            self.tangents = np.asarray(self.tangents, dtype=float)

    @property
    def start(self) -> np.ndarray:
        return self.z[0]

    @property
    def end(self) -> np.ndarray:
        return self.z[-1]

    @property
    def x(self) -> np.ndarray:
        return self.z[:, :-1]

    @property
    def t(self) -> np.ndarray:
        return self.z[:, -1]

    def spatial_path(self) -> SpatialPath:
        return SpatialPath(self.s, self.x)

    def at(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.stack([np.interp(s, self.s, self.z[:, k]) for k in range(self.z.shape[1])], -1)
        return out


@dataclass
class CausalReport:
    max_null_residual: float
    future_pointing: bool


def _theta(chart, x, t, xdot):
    a = chart.alpha(x, t)
    d = np.broadcast_to(chart.delta(x, t), np.shape(xdot))
    dx = np.einsum("...i,...i->...", d, xdot)
    axx = np.einsum("...i,...ij,...j->...", xdot, a, xdot)
    # exact zero for constant pieces, no regularization of the square root
    return dx + np.sqrt(dx * dx + np.maximum(axx, 0.0))


def lift_endpoints(chart: SplittingChart, s, X, t0, substeps: int = 1) -> np.ndarray:
    """Vectorized time lift of a batch of polylines.

    ``X`` has shape (B, M, N-1) on the common grid ``s`` (M,), ``t0`` shape (B,).
    Returns t at every sample, shape (B, M).  No domain checks.
    """
    s = np.asarray(s, dtype=float)
    X = np.asarray(X, dtype=float)
    B, M, _ = X.shape
    if chart.stationary:
        return _lift_endpoints_stationary(chart, s, X, t0, substeps)
    T = np.empty((B, M))
    t = np.broadcast_to(np.asarray(t0, dtype=float), (B,)).copy()
    T[:, 0] = t
    for k in range(M - 1):
        ds = s[k + 1] - s[k]
        xdot = (X[:, k + 1] - X[:, k]) / ds
        h = ds / substeps
        for j in range(substeps):
            u0 = j * h
            x0 = X[:, k] + u0 * xdot
            xm = x0 + 0.5 * h * xdot
            x1 = x0 + h * xdot
            k1 = _theta(chart, x0, t, xdot)
            k2 = _theta(chart, xm, t + 0.5 * h * k1, xdot)
            k3 = _theta(chart, xm, t + 0.5 * h * k2, xdot)
            k4 = _theta(chart, x1, t + h * k3, xdot)
            t = t + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        T[:, k + 1] = t
    return T


def _lift_endpoints_stationary(chart, s, X, t0, substeps):
    # with t-independent coefficients each RK4 step is Simpson's rule, so all
    # steps are evaluated in one batch and accumulated
    ds = np.diff(s)
    xdot = np.diff(X, axis=1) / ds[None, :, None]
    u = np.linspace(0.0, 1.0, 2 * substeps + 1)  # substep ends and midpoints
    pts = X[:, :-1, None, :] + (u[None, None, :, None] * ds[None, :, None, None]) * xdot[:, :, None, :]
    th = _theta(chart, pts, np.zeros(pts.shape[:-1]), np.broadcast_to(xdot[:, :, None, :], pts.shape))
    w = np.zeros(2 * substeps + 1)
    w[0:-1:2] += 1.0
    w[2::2] += 1.0
    w[1::2] += 4.0
    inc = (th @ w) * (ds / (6.0 * substeps))[None, :]
    T = np.empty(X.shape[:2])
    T[:, 0] = np.broadcast_to(np.asarray(t0, dtype=float), (X.shape[0],))
    T[:, 1:] = T[:, :1] + np.cumsum(inc, axis=1)
    return T


def _first_exit(chart, s, z):
    inside = chart.contains(z)
    if np.all(inside):
        return None
    k = int(np.argmin(inside))
    return k


def null_residual(chart: SplittingChart, s, z) -> float:
    """max over sample intervals of |g(zdot, zdot)| / <zdot, zdot>_R at midpoints."""
    s = np.asarray(s)
    z = np.asarray(z)
    if len(s) < 2:
        return 0.0
    ds = np.diff(s)
    zdot = np.diff(z, axis=0) / ds[:, None]
    mid = 0.5 * (z[1:] + z[:-1])
    g = metric_matrix(chart, mid)
    gr = riemann_matrix(chart, mid)
    num = np.abs(np.einsum("ki,kij,kj->k", zdot, g, zdot))
    den = np.einsum("ki,kij,kj->k", zdot, gr, zdot)
    moving = den > 1e-300
    if not np.any(moving):
        return 0.0
    return float(np.max(num[moving] / den[moving]))


def lift_time(chart: SplittingChart, path: SpatialPath, t0: float, substeps: int = 1) -> LightlikeCurve:
    """Future-pointing lightlike lift of ``path`` starting at time ``t0``.

    Integrates  dt/ds = <delta, x'> + sqrt(<delta, x'>^2 + <alpha x', x'>)
    by classical RK4, ``substeps`` steps per sample interval.
    """
    X = path.x[None]
    first = np.append(path.x[0], t0)
    if not chart.contains(first):
        raise OutOfDomainError(first, s_exit=0.0)
    T = lift_endpoints(chart, path.s, X, np.array([t0]), substeps)[0]
    z = np.column_stack([path.x, T])
    k = _first_exit(chart, path.s, z)
    if k is not None:
        raise OutOfDomainError(z[k], s_exit=float(path.s[k]), message="lift left the chart domain")
    return LightlikeCurve(path.s.copy(), z, null_residual(chart, path.s, z), True)


def arrival_time(curve: LightlikeCurve, obs: ObserverCurve, snap_tol: float = SNAP_TOL) -> float:
    """tau(z): observer proper time at which the curve meets the worldline."""
    end = curve.end
    miss = float(np.max(np.abs(end[:-1] - obs.x_obs)))
    if miss > snap_tol:
        raise NotOnObserverError(f"curve ends {miss:.3g} away from the observer worldline")
    tau = float(end[-1])
    lo, hi = obs.t_range
    if not lo < tau < hi:
        raise OutsideWorldlineError(f"arrival time {tau!r} outside observer range ({lo}, {hi})")
    return tau


def causal_character(chart: SplittingChart, curve: LightlikeCurve, tol: float = 1e-12) -> CausalReport:
    s, z = curve.s, curve.z
    if len(s) < 2:
        return CausalReport(0.0, True)
    zdot = np.diff(z, axis=0) / np.diff(s)[:, None]
    mid = 0.5 * (z[1:] + z[:-1])
    g = metric_matrix(chart, mid)
    gr = riemann_matrix(chart, mid)
    gzz = np.einsum("ki,kij,kj->k", zdot, g, zdot)
    rzz = np.einsum("ki,kij,kj->k", zdot, gr, zdot)
    gzw = np.einsum("ki,ki->k", zdot, g[:, :, -1])
    moving = np.sqrt(np.maximum(rzz, 0.0)) > tol
    resid = float(np.max(np.abs(gzz[moving]) / rzz[moving])) if np.any(moving) else 0.0
    future = bool(np.all(gzw[moving] < 0))
    return CausalReport(resid, future)


def _field_values(chart, y_field, pts):
    if y_field is None:
        out = np.zeros(pts.shape)
        out[..., -1] = 1.0
        return out
    if callable(y_field):
        return np.asarray(y_field(pts), dtype=float)
    return np.broadcast_to(np.asarray(y_field, dtype=float), pts.shape)


def normalize_parameterization(chart: SplittingChart, curve: LightlikeCurve, y_field=None) -> LightlikeCurve:
    """Reparameterize so that g(Y(z), z') is constant in s.

    The samples are kept; only their parameter values change, so image and
    endpoint are untouched.  Zero-length pieces are collapsed.
    """
    s, z = curve.s, curve.z
    dz = np.diff(z, axis=0)
    mid = 0.5 * (z[1:] + z[:-1])
    g = metric_matrix(chart, mid)
    y = _field_values(chart, y_field, mid)
    inc = -np.einsum("ki,kij,kj->k", y, g, dz)
    total = float(np.sum(inc))
    if not total > 0:
        raise DegenerateCurveError("integral of -g(Y, z') vanishes; cannot normalize")
    keep = np.concatenate([[True], inc > total * 1e-15])
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    s_new = cum[keep] / total
    s_new[-1] = 1.0
    z_new = z[keep]
    return LightlikeCurve(s_new, z_new, null_residual(chart, s_new, z_new), curve.future_ok,
                          list(curve.notes))


def global_lift(chart: SplittingChart, path: SpatialPath, y_field=None, t0: float = 0.0,
                substeps: int = 1, check: bool = True) -> LightlikeCurve:
    """Lift along the flow of a constant timelike field Y from the slice t = t0.

    Solves  sigma' = -(<Y, e> + sqrt(<Y, e>^2 - <Y, Y><e, e>)) / <Y, Y>,
    e = (x', 0), and returns z(s) = (x(s), t0) + sigma(s) Y.  With Y = W
    this coincides with :func:`lift_time`; ``check`` asserts that.
    """
    n = chart.dim
    if y_field is None:
        yv = np.zeros(n)
        yv[-1] = 1.0
    else:
        yv = np.asarray(y_field, dtype=float).reshape(n)
    if abs(yv[-1]) < 1e-14:
        raise ValueError("Y must be transverse to the t = const slice")
    s, x = path.s, path.x
    base = np.column_stack([x, np.full(len(s), float(t0))])
    if not chart.contains(base[0]):
        raise OutOfDomainError(base[0], s_exit=0.0)

    def rhs(point, e):
        g = metric_matrix(chart, point)
        gy = g @ yv
        yy = yv @ gy
        ye = e @ gy
        ee = e @ g @ e
        return -(ye + np.sqrt(max(ye * ye - yy * ee, 0.0))) / yy

    sig = np.zeros(len(s))
    sigma = 0.0
    for k in range(len(s) - 1):
        ds = s[k + 1] - s[k]
        e = np.append((x[k + 1] - x[k]) / ds, 0.0)
        h = ds / substeps
        for j in range(substeps):
            y0 = base[k] + j * h * e
            ym = y0 + 0.5 * h * e
            y1 = y0 + h * e
            k1 = rhs(y0 + sigma * yv, e)
            k2 = rhs(ym + (sigma + 0.5 * h * k1) * yv, e)
            k3 = rhs(ym + (sigma + 0.5 * h * k2) * yv, e)
            k4 = rhs(y1 + (sigma + h * k3) * yv, e)
            sigma += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        sig[k + 1] = sigma
    z = base + sig[:, None] * yv
    k = _first_exit(chart, s, z)
    if k is not None:
        raise OutOfDomainError(z[k], s_exit=float(s[k]), message="lift left the chart domain")
    curve = LightlikeCurve(s.copy(), z, null_residual(chart, s, z), True)
    if check and y_field is None:
        ref = lift_time(chart, path, t0, substeps)
        gap = float(np.max(np.abs(ref.z - curve.z)))
        if gap > 1e-9 * max(1.0, float(np.max(np.abs(ref.z)))):
            raise AssertionError(f"global lift disagrees with time lift by {gap:.3g}")
    return curve


def riemann_lengths(chart: SplittingChart, z) -> np.ndarray:
    """Riemannian length of each sample interval (midpoint rule on the chords)."""
    z = np.asarray(z)
    dz = np.diff(z, axis=0)
    mid = 0.5 * (z[1:] + z[:-1])
    gr = riemann_matrix(chart, mid)
    return np.sqrt(np.maximum(np.einsum("ki,kij,kj->k", dz, gr, dz), 0.0))


def curve_length(chart: SplittingChart, curve: LightlikeCurve) -> float:
    return float(np.sum(riemann_lengths(chart, curve.z)))


def as_curve(points, s=None) -> LightlikeCurve:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if s is None:
        s = np.linspace(0.0, 1.0, points.shape[0])
    return LightlikeCurve(s, points)


__all__ = [
    "SpatialPath", "LightlikeCurve", "CausalReport", "lift_time", "lift_endpoints",
    "arrival_time", "causal_character", "normalize_parameterization", "global_lift",
    "riemann_lengths", "curve_length", "null_residual", "as_point",
]
