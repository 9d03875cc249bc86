"""Lorentzian metrics in renormalized splitting coordinates.

Points are arrays ``z = (x_1, ..., x_{N-1}, t)`` and tangent vectors are
``zeta = (xi, theta)``.  The metric reads

    g[(xi, theta), (xi, theta)] = <alpha xi, xi> + 2 <delta, xi> theta - theta**2

so the time-orientation field ``W = d/dt`` has ``g(W, W) = -1`` and every
integral curve of ``W`` is a vertical line ``s -> (x_bar, s)``.

All evaluators broadcast over leading axes; chart callables receive
``x`` with shape ``(..., N-1)`` and ``t`` with shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMetricError, FermatError, OutOfDomainError


ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SplittingChart:
    dim: int
    alpha: ArrayFn
    delta: ArrayFn
    domain: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-4
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # closed-form connection, used instead of finite differences when present
    christoffel_exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # alpha and delta do not depend on t; enables quadrature shortcuts
    stationary: bool = False
    # connection vanishes identically in these coordinates
    flat: bool = False

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"spacetime dimension must be >= 3, got {self.dim}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")

    @property
    def n_space(self) -> int:
        return self.dim - 1

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.domain is None:
            return np.ones(z.shape[:-1], dtype=bool)
        return np.asarray(self.domain(z[..., :-1], z[..., -1]), dtype=bool)

    def with_fd_only(self) -> "SplittingChart":
        """Copy of the chart that ignores any closed-form connection."""
        return SplittingChart(self.dim, self.alpha, self.delta, self.domain,
                              self.fd_step, self.name, dict(self.params), None, self.stationary,
                              self.flat)


@dataclass(frozen=True)
class Event:
    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "t", float(self.t))

    @property
    def z(self) -> np.ndarray:
        return np.append(self.x, self.t)

    @classmethod
    def from_z(cls, z) -> "Event":
        z = np.asarray(z, dtype=float)
        return cls(z[:-1], z[-1])


@dataclass(frozen=True)
class ObserverCurve:
    """Integral curve of W over a fixed spatial point: ``s -> (x_obs, s)``."""

    x_obs: np.ndarray
    t_range: tuple

    def __post_init__(self):
        object.__setattr__(self, "x_obs", np.asarray(self.x_obs, dtype=float).reshape(-1))
        lo, hi = (float(v) for v in self.t_range)
        if not lo < hi:
            raise ValueError(f"observer t_range must be a nonempty interval, got {(lo, hi)}")
        object.__setattr__(self, "t_range", (lo, hi))


@dataclass(frozen=True)
class RegionSpec:
    """Region of spacetime given by a vectorized predicate on points ``z``.

    ``level`` is an optional signed function (negative inside) used to
    find boundary normals; ``boundary_samples`` are points on the boundary.
    """

    inside: Callable[[np.ndarray], np.ndarray]
    level: Optional[Callable[[np.ndarray], np.ndarray]] = None
    boundary_samples: Optional[np.ndarray] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def contains(self, z) -> np.ndarray:
        return np.asarray(self.inside(np.asarray(z, dtype=float)), dtype=bool)


def as_point(z) -> np.ndarray:
    if isinstance(z, Event):
        return z.z
    return np.asarray(z, dtype=float)


def _check_domain(chart, z):
    inside = chart.contains(z)
    if not np.all(inside):
        bad = np.asarray(z)[~inside] if np.ndim(inside) else np.asarray(z)
        raise OutOfDomainError(np.asarray(bad).reshape(-1, chart.dim)[0])


def metric_matrix(chart: SplittingChart, z) -> np.ndarray:
    """Full N x N metric components at ``z`` (no domain check)."""
    z = as_point(z)
    x, t = z[..., :-1], z[..., -1]
    a = np.asarray(chart.alpha(x, t), dtype=float)
    d = np.asarray(chart.delta(x, t), dtype=float)
    n = chart.n_space
    if a.shape != z.shape[:-1] + (n, n):
        a = np.broadcast_to(a, z.shape[:-1] + (n, n))
    if d.shape != z.shape[:-1] + (n,):
        d = np.broadcast_to(d, z.shape[:-1] + (n,))
    g = np.empty(z.shape[:-1] + (n + 1, n + 1))
    g[..., :n, :n] = a
    g[..., :n, n] = d
    g[..., n, :n] = d
    g[..., n, n] = -1.0
    return g


def riemann_matrix(chart: SplittingChart, z) -> np.ndarray:
    """Components of the auxiliary Riemannian metric g - 2 (gW)(gW)^T / g(W,W)."""
    g = metric_matrix(chart, z)
    w = g[..., :, -1]  # g(W, .)
    return g + 2.0 * w[..., :, None] * w[..., None, :]


def eval_metric(chart: SplittingChart, z, zeta, eta) -> float:
    z = as_point(z)
    _check_domain(chart, z)
    g = metric_matrix(chart, z)
    return np.einsum("...i,...ij,...j->...", np.asarray(zeta, float), g, np.asarray(eta, float))


def riemann_inner(chart: SplittingChart, z, zeta, eta) -> float:
    z = as_point(z)
    _check_domain(chart, z)
    gr = riemann_matrix(chart, z)
    return np.einsum("...i,...ij,...j->...", np.asarray(zeta, float), gr, np.asarray(eta, float))


def riemann_norm(chart: SplittingChart, z, v) -> np.ndarray:
    gr = riemann_matrix(chart, z)
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, gr, v), 0.0))


def _inverse(g):
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("singular metric determinant") from exc
    if not np.all(np.isfinite(ginv)):
        raise DegenerateMetricError("singular metric determinant")
    return ginv


@lru_cache(maxsize=64)
def _stencil(n: int, h: float, with_center: bool) -> np.ndarray:
    off = np.concatenate([np.eye(n), -np.eye(n)]) * h
    if with_center:
        off = np.concatenate([off, np.zeros((1, n))])
    off.setflags(write=False)
    return off


def christoffel_fd(chart: SplittingChart, z) -> np.ndarray:
    """Gamma^k_ij by central differences of the metric, shape (..., N, N, N)."""
    z = as_point(z)
    n = chart.dim
    h = chart.fd_step
    gs = metric_matrix(chart, z[..., None, :] + _stencil(n, h, True))
    # dg[..., k, i, j] = d_k g_ij
    dg = (gs[..., :n, :, :] - gs[..., n:2 * n, :, :]) / (2.0 * h)
    ginv = _inverse(gs[..., 2 * n, :, :])
    # lowered: Gamma_{l i j} = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    low = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    gam = np.einsum("...kl,...lij->...kij", ginv, low)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def christoffel(chart: SplittingChart, z, check_domain: bool = True) -> np.ndarray:
    z = as_point(z)
    if check_domain:
        _check_domain(chart, z)
    if chart.christoffel_exact is not None:
        return np.asarray(chart.christoffel_exact(z), dtype=float)
    return christoffel_fd(chart, z)


def connection_and_derivative(chart: SplittingChart, z):
    """(Gamma, d Gamma) at ``z`` from one batched evaluation.

    d Gamma has index order (..., c, a, b, d) meaning d_c Gamma^a_bd.
    """
    z = as_point(z)
    n = chart.dim
    h = chart.fd_step
    gam = christoffel(chart, z[..., None, :] + _stencil(n, h, True), check_domain=False)
    dgam = (gam[..., :n, :, :, :] - gam[..., n:2 * n, :, :, :]) / (2.0 * h)
    return gam[..., 2 * n, :, :, :], dgam


def christoffel_derivative(chart: SplittingChart, z) -> np.ndarray:
    """d_c Gamma^a_bd by central differences of Gamma; index order (..., c, a, b, d)."""
    return connection_and_derivative(chart, z)[1]


def curvature_operator(chart: SplittingChart, z, v) -> np.ndarray:
    """Matrix M(z, v) with M @ zeta = R(zeta, v) v.

    Convention R(X,Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z, so a round unit
    sphere gives R(zeta, v) v = zeta for orthonormal zeta, v.
    """
    z = as_point(z)
    v = np.asarray(v, dtype=float)
    gam, dgam = connection_and_derivative(chart, z)
    return curvature_from_connection(gam, dgam, v)


def curvature_from_connection(gam, dgam, v) -> np.ndarray:
    """Matrix of zeta -> R(zeta, v) v from Gamma and its derivative."""
    # R^a_bcd = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb
    # M^a_c = R^a_bcd v^b v^d
    t1 = np.einsum("...cadb,...b,...d->...ac", dgam, v, v)
    t2 = np.einsum("...dacb,...b,...d->...ac", dgam, v, v)
    gv = np.einsum("...edb,...b,...d->...e", gam, v, v)  # G^e_db v^d v^b
    t3 = np.einsum("...ace,...e->...ac", gam, gv)
    gav = np.einsum("...ade,...d->...ae", gam, v)  # G^a_de v^d
    gcv = np.einsum("...ecb,...b->...ec", gam, v)  # G^e_cb v^b
    t4 = np.einsum("...ae,...ec->...ac", gav, gcv)
    return t1 - t2 + t3 - t4


def curvature_apply(chart: SplittingChart, z, zeta, v) -> np.ndarray:
    """R(zeta, v) v at ``z``."""
    z = as_point(z)
    _check_domain(chart, z)
    m = curvature_operator(chart, z, v)
    return np.einsum("...ac,...c->...a", m, np.asarray(zeta, dtype=float))


def null_time_component(chart: SplittingChart, z, xi) -> np.ndarray:
    """Future-pointing theta with g((xi, theta), (xi, theta)) = 0."""
    z = as_point(z)
    xi = np.asarray(xi, dtype=float)
    x, t = z[..., :-1], z[..., -1]
    a = chart.alpha(x, t)
    d = np.broadcast_to(chart.delta(x, t), xi.shape)
    dx = np.einsum("...i,...i->...", d, xi)
    axx = np.einsum("...i,...ij,...j->...", xi, a, xi)
    return dx + np.sqrt(dx * dx + np.maximum(axx, 0.0))


def time_reflected(chart: SplittingChart) -> SplittingChart:
    """Chart for t -> -t; past-pointing rays of ``chart`` are future-pointing here."""

    def alpha(x, t):
        return chart.alpha(x, -np.asarray(t))

    def delta(x, t):
        return -np.asarray(chart.delta(x, -np.asarray(t)))

    domain = None
    if chart.domain is not None:
        def domain(x, t):
            return chart.domain(x, -np.asarray(t))

    exact = None
    if chart.christoffel_exact is not None:
        flip = np.ones(chart.dim)
        flip[-1] = -1.0

        def exact(z):
            gam = chart.christoffel_exact(np.asarray(z) * flip)
            # Gamma transforms as a tensor under the linear map t -> -t
            return np.einsum("k,i,j,...kij->...kij", flip, flip, flip, gam)

    return SplittingChart(chart.dim, alpha, delta, domain, chart.fd_step,
                          chart.name + "[reflected]", dict(chart.params), exact, chart.stationary,
                          chart.flat)


# ---------------------------------------------------------------- catalog


def _zero_christoffel(dim):
    def gam(z):
        z = np.asarray(z)
        return np.zeros(z.shape[:-1] + (dim, dim, dim))
    return gam


def _minkowski(dim=3, fd_step=1e-4):
    """Flat spacetime, alpha = I, delta = 0."""
    n = int(dim) - 1

    def alpha(x, t):
        return np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n))

    def delta(x, t):
        return np.zeros(np.shape(x))

    return SplittingChart(int(dim), alpha, delta, None, fd_step, "minkowski",
                          {"dim": int(dim)}, _zero_christoffel(int(dim)), stationary=True,
                          flat=True)


def isotropic_factor(r, mass):
    """Spatial factor A(r) of the Schwarzschild optical metric in isotropic radius."""
    # points outside the domain may be evaluated before the exit check
    with np.errstate(divide="ignore", invalid="ignore"):
        u = mass / (2.0 * r)
        return (1.0 + u) ** 6 / (1.0 - u) ** 2


def isotropic_factor_dr(r, mass):
    with np.errstate(divide="ignore", invalid="ignore"):
        u = mass / (2.0 * r)
        return -isotropic_factor(r, mass) * (mass / r**2) * (3.0 / (1.0 + u) + 1.0 / (1.0 - u))


def photon_sphere_radius(mass):
    """Isotropic radius of the circular light orbit (Schwarzschild r = 3M)."""
    return mass * (1.0 + np.sqrt(3.0) / 2.0)


def _static_spherical(mass=0.0, r_min=None, dim=4, center=None, fd_step=1e-4):
    """Schwarzschild exterior in isotropic coordinates, alpha = A(r) I; domain r > r_min."""
    mass = float(mass)
    dim = int(dim)
    n = dim - 1
    if mass < 0:
        raise ValueError("static_spherical requires mass M >= 0")
    horizon = mass / 2.0
    if r_min is None:
        r_min = 4.0 * mass
    r_min = float(r_min)
    if mass > 0 and r_min <= horizon:
        raise ValueError(f"r_min={r_min} must exceed the horizon radius M/2={horizon}")
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)

    def radius(x):
        return np.linalg.norm(np.asarray(x) - c, axis=-1)

    def alpha(x, t):
        a = isotropic_factor(radius(x), mass)
        return a[..., None, None] * np.eye(n)

    def delta(x, t):
        return np.zeros(np.shape(x))

    def domain(x, t):
        return radius(x) > r_min

    def exact(z):
        z = np.asarray(z, dtype=float)
        y = z[..., :n] - c
        r = np.linalg.norm(y, axis=-1)
        a = isotropic_factor(r, mass)
        # grad(ln A) / 2
        w = 0.5 * (isotropic_factor_dr(r, mass) / a / r)[..., None] * y
        eye = np.eye(n)
        gam = np.zeros(z.shape[:-1] + (dim, dim, dim))
        gam[..., :n, :n, :n] = (w[..., None, :, None] * eye[:, None, :]
                                + w[..., None, None, :] * eye[:, :, None]
                                - w[..., :, None, None] * eye[None, :, :])
        return gam

    params = {"M": mass, "r_min": r_min, "dim": dim, "center": c.tolist()}
    return SplittingChart(dim, alpha, delta, domain, fd_step, "static_spherical", params, exact,
                          stationary=True)


def _product_sphere(radius=1.0, margin=0.1, fd_step=1e-4):
    """R_t x S^2 with spatial coordinates (polar angle, azimuth)."""
    rad2 = float(radius) ** 2

    def alpha(x, t):
        x = np.asarray(x)
        a = np.zeros(x.shape[:-1] + (2, 2))
        a[..., 0, 0] = rad2
        a[..., 1, 1] = rad2 * np.sin(x[..., 0]) ** 2
        return a

    def delta(x, t):
        return np.zeros(np.shape(x))

    def domain(x, t):
        th = np.asarray(x)[..., 0]
        return (th > margin) & (th < np.pi - margin)

    return SplittingChart(3, alpha, delta, domain, fd_step, "product_sphere",
                          {"radius": float(radius), "margin": margin}, stationary=True)


def _conformally_stationary_demo(delta0=(0.3, 0.0), fd_step=1e-4):
    """Flat metric in a rotating-type splitting: alpha = I, constant shift delta0."""
    d0 = np.asarray(delta0, dtype=float).reshape(-1)
    n = d0.size
    if np.dot(d0, d0) >= 1e6:
        raise ValueError("delta0 unreasonably large")

    def alpha(x, t):
        return np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n))

    def delta(x, t):
        return np.broadcast_to(d0, np.shape(x)).copy()

    return SplittingChart(n + 1, alpha, delta, None, fd_step, "conformally_stationary_demo",
                          {"delta0": d0.tolist()}, _zero_christoffel(n + 1), stationary=True,
                          flat=True)


CATALOG = {
    "minkowski": _minkowski,
    "static_spherical": _static_spherical,
    "conformally_stationary_demo": _conformally_stationary_demo,
    "product_sphere": _product_sphere,
}

_PARAM_ALIASES = {"N": "dim", "M": "mass", "delta_0": "delta0", "δ0": "delta0"}


def catalog(name: str, params: Optional[dict] = None, **kwargs) -> SplittingChart:
    """Build a catalog chart by name."""
    if name not in CATALOG:
        raise FermatError(f"unknown chart {name!r}; valid names: {sorted(CATALOG)}")
    merged = dict(params or {})
    merged.update(kwargs)
    merged = {_PARAM_ALIASES.get(k, k): v for k, v in merged.items()}
    try:
        return CATALOG[name](**merged)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for chart {name!r}: {exc}") from exc


def tabulated_chart(axes, alpha_values, delta_values, fd_step=1e-3) -> SplittingChart:
    """t-independent chart from alpha, delta sampled on a grid (linear interpolation)."""
    from scipy.interpolate import RegularGridInterpolator

    axes = [np.asarray(a, dtype=float) for a in axes]
    n = len(axes)
    alpha_values = np.asarray(alpha_values, dtype=float)
    delta_values = np.asarray(delta_values, dtype=float)
    shape = tuple(a.size for a in axes)
    if alpha_values.shape != shape + (n, n) or delta_values.shape != shape + (n,):
        raise ValueError("tabulated alpha/delta shapes do not match the grid")
    ia = RegularGridInterpolator(axes, alpha_values, bounds_error=False, fill_value=None)
    idl = RegularGridInterpolator(axes, delta_values, bounds_error=False, fill_value=None)
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])

    def alpha(x, t):
        x = np.asarray(x, dtype=float)
        out = ia(x.reshape(-1, n)).reshape(x.shape[:-1] + (n, n))
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def delta(x, t):
        x = np.asarray(x, dtype=float)
        return idl(x.reshape(-1, n)).reshape(x.shape)

    def domain(x, t):
        x = np.asarray(x)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    return SplittingChart(n + 1, alpha, delta, domain, fd_step, "tabulated", {"grid_shape": list(shape)},
                          stationary=True)


# ---------------------------------------------------------------- regions


def region_all() -> RegionSpec:
    return RegionSpec(lambda z: np.ones(np.shape(z)[:-1], dtype=bool), name="all")


def _spatial_radius(z, center):
    z = np.asarray(z, dtype=float)
    return np.linalg.norm(z[..., :-1] - center, axis=-1)


def _sphere_samples(center, radius, n=64):
    k = center.size
    if k == 2:
        ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        # Fibonacci-type spread on the unit sphere in 3D; random for higher dims
        if k == 3:
            i = np.arange(n) + 0.5
            phi = np.arccos(1 - 2 * i / n)
            th = np.pi * (1 + 5**0.5) * i
            pts = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], -1)
        else:
            rng = np.random.default_rng(0)
            pts = rng.normal(size=(n, k))
            pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    return center + radius * pts


def region_ball(center, radius) -> RegionSpec:
    c = np.asarray(center, dtype=float)
    r = float(radius)
    return RegionSpec(lambda z: _spatial_radius(z, c) < r,
                      level=lambda z: _spatial_radius(z, c) - r,
                      boundary_samples=_sphere_samples(c, r),
                      name="ball", params={"center": c.tolist(), "radius": r})


def region_exterior(center, radius) -> RegionSpec:
    c = np.asarray(center, dtype=float)
    r = float(radius)
    return RegionSpec(lambda z: _spatial_radius(z, c) > r,
                      level=lambda z: r - _spatial_radius(z, c),
                      boundary_samples=_sphere_samples(c, r),
                      name="exterior", params={"center": c.tolist(), "radius": r})


def region_annulus(center, inner, outer) -> RegionSpec:
    c = np.asarray(center, dtype=float)
    r1, r2 = float(inner), float(outer)
    if not 0 < r1 < r2:
        raise ValueError("annulus requires 0 < inner < outer")

    def level(z):
        r = _spatial_radius(z, c)
        return np.maximum(r1 - r, r - r2)

    return RegionSpec(lambda z: level(z) < 0, level=level,
                      boundary_samples=np.concatenate([_sphere_samples(c, r1), _sphere_samples(c, r2)]),
                      name="annulus", params={"center": c.tolist(), "inner": r1, "outer": r2})


def region_box(lower, upper) -> RegionSpec:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)

    def level(z):
        x = np.asarray(z, dtype=float)[..., :-1]
        return np.max(np.maximum(lo - x, x - hi), axis=-1)

    return RegionSpec(lambda z: level(z) < 0, level=level, name="box",
                      params={"lower": lo.tolist(), "upper": hi.tolist()})
