import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import frozen
from fermat_rays.errors import FermatError, OutOfDomainError
from fermat_rays.metric import (SplittingChart, catalog, christoffel, christoffel_fd,
                                curvature_apply, eval_metric, isotropic_factor,
                                isotropic_factor_dr, metric_matrix, photon_sphere_radius,
                                riemann_inner, riemann_matrix, tabulated_chart, time_reflected)

MINK = catalog("minkowski", N=3)
SPHERE = catalog("product_sphere")
DEMO = catalog("conformally_stationary_demo", delta0=(0.3, 0.0))
LENS = catalog("static_spherical", M=0.01, r_min=0.05, dim=4)


def exp_chart(fd_step=1e-4):
    def alpha(x, t):
        return np.exp(2 * np.asarray(x)[..., 0])[..., None, None] * np.eye(2)

    def delta(x, t):
        return np.zeros(np.shape(x))

    return SplittingChart(3, alpha, delta, fd_step=fd_step, name="exp")


def random_interior(chart, rng, n):
    """Points inside the chart domain at moderate coordinates."""
    if chart.name == "product_sphere":
        x = np.column_stack([rng.uniform(0.4, np.pi - 0.4, n), rng.uniform(-3, 3, n)])
    elif chart.name == "static_spherical":
        d = rng.normal(size=(n, chart.n_space))
        x = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(0.08, 5.0, (n, 1))
    else:
        x = rng.uniform(-3, 3, (n, chart.n_space))
    return np.column_stack([x, rng.uniform(-5, 5, n)])


CHARTS = [MINK, SPHERE, DEMO, LENS, catalog("minkowski", N=4)]


# ---------------------------------------------------------------- eval_metric / riemann_inner


@pytest.mark.parametrize("zeta, expected", [((1, 0, 0), 1.0), ((0, 0, 1), -1.0), ((1, 0, 1), 0.0)])
def test_minkowski_metric_examples(zeta, expected):
    assert eval_metric(MINK, [0.3, -0.2, 1.0], zeta, zeta) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("zeta, expected", [((0, 0, 1), 1.0), ((1, 0, 0), 1.0), ((1, 0, 1), 2.0)])
def test_minkowski_riemann_examples(zeta, expected):
    assert riemann_inner(MINK, [0.0, 0.0, 0.0], zeta, zeta) == pytest.approx(expected, abs=1e-15)


def test_demo_metric_shift_term():
    assert eval_metric(DEMO, [0.0, 0.0, 0.0], [1, 0, 1], [1, 0, 1]) == pytest.approx(0.6, abs=1e-15)


def test_metric_is_polarized_quadratic_form(rng):
    z = random_interior(DEMO, rng, 1)[0]
    a, b = rng.normal(size=(2, 3))
    q = lambda v: eval_metric(DEMO, z, v, v)
    assert eval_metric(DEMO, z, a, b) == pytest.approx(0.25 * (q(a + b) - q(a - b)), abs=1e-12)


def test_domain_violation_carries_point():
    z = np.array([0.01, 0.0, 0.0, 0.0])
    with pytest.raises(OutOfDomainError) as info:
        eval_metric(LENS, z, np.ones(4), np.ones(4))
    assert np.allclose(info.value.point, z)


# ---------------------------------------------------------------- christoffel


def test_minkowski_christoffel_vanishes():
    assert np.max(np.abs(christoffel_fd(MINK, [0.4, 0.1, 2.0]))) < 1e-10


def test_exp_chart_christoffel_matches_hand_value():
    gam = christoffel(exp_chart(), np.zeros(3))
    assert gam[0, 0, 0] == pytest.approx(frozen.EXP_CHART_GAMMA_111, abs=2e-6)


def test_christoffel_exactly_symmetric(rng):
    for chart in CHARTS:
        gam = christoffel_fd(chart, random_interior(chart, rng, 4))
        assert np.array_equal(gam, np.swapaxes(gam, -1, -2))


def test_fd_christoffel_second_order():
    # at x_1 = 0.3 every entry is +-1 or 0 exactly; the stencil error is h^2 * 2/3 e^0
    z = np.array([0.3, 0.0, 0.0])
    exact = np.zeros((3, 3, 3))
    exact[0, 0, 0] = 1.0
    exact[0, 1, 1] = -1.0
    exact[1, 0, 1] = exact[1, 1, 0] = 1.0
    errs = [np.max(np.abs(christoffel_fd(exp_chart(h), z) - exact)) for h in (2e-2, 1e-2)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("chart", [LENS, catalog("static_spherical", M=0.5, r_min=1.0, dim=3)])
def test_closed_form_connection_matches_finite_differences(chart, rng):
    d = rng.normal(size=(16, chart.n_space))
    r = rng.uniform(3.0, 20.0, (16, 1)) * chart.params["r_min"]
    z = np.column_stack([d / np.linalg.norm(d, axis=1, keepdims=True) * r, rng.uniform(-1, 1, 16)])
    exact = christoffel(chart, z)
    fd = christoffel_fd(chart.with_fd_only(), z)
    assert np.max(np.abs(exact - fd)) < 1e-6


def test_isotropic_factor_derivative():
    r = np.linspace(0.6, 5, 9)
    h = 1e-6
    num = (isotropic_factor(r + h, 1.0) - isotropic_factor(r - h, 1.0)) / (2 * h)
    assert np.allclose(isotropic_factor_dr(r, 1.0), num, rtol=1e-7)
    assert photon_sphere_radius(1.0) == pytest.approx(frozen.PHOTON_SPHERE_OVER_M)


# ---------------------------------------------------------------- curvature


def test_minkowski_curvature_vanishes(rng):
    z = random_interior(MINK, rng, 1)[0]
    for _ in range(5):
        zeta, v = rng.normal(size=(2, 3))
        assert np.max(np.abs(curvature_apply(MINK.with_fd_only(), z, zeta, v))) < 1e-8


def test_sphere_sectional_curvature_is_one():
    z = np.array([np.pi / 2, 0.7, 0.0])
    v = np.array([0.0, 1.0, 1.0])
    zeta = np.array([1.0, 0.0, 0.0])
    assert np.allclose(curvature_apply(SPHERE, z, zeta, v), zeta, atol=5e-4)


@given(arrays(float, 3, elements=st.floats(-2, 2)), st.floats(0.5, 2.5), st.floats(-3, 3))
def test_curvature_antisymmetry(v, theta, phi):
    z = np.array([theta, phi, 0.0])
    out = curvature_apply(SPHERE, z, v, v)
    assert np.linalg.norm(out) <= 1e-8 * max(1.0, float(v @ v))


def test_curvature_does_not_see_time_component(rng):
    z = np.array([1.0, 0.2, 0.0])
    zeta = np.array([0.0, 0.0, 1.0])
    assert np.max(np.abs(curvature_apply(SPHERE, z, zeta, rng.normal(size=3)))) < 1e-8


# ---------------------------------------------------------------- catalog


def test_catalog_minkowski_shape():
    assert MINK.dim == 3
    assert np.array_equal(MINK.alpha(np.zeros(2), 0.0), np.eye(2))
    assert np.array_equal(MINK.delta(np.zeros(2), 0.0), np.zeros(2))


def test_zero_mass_is_minkowski(rng):
    flat = catalog("static_spherical", M=0.0, r_min=0.1, dim=4)
    z = random_interior(flat, rng, 20)
    assert np.array_equal(metric_matrix(flat, z), metric_matrix(catalog("minkowski", N=4), z))


def test_catalog_errors():
    with pytest.raises(FermatError, match="minkowski"):
        catalog("kerr")
    with pytest.raises(ValueError):
        catalog("static_spherical", M=1.0, r_min=0.2)
    with pytest.raises(ValueError):
        catalog("minkowski", spin=1.0)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: f"{c.name}-{c.dim}")
def test_alpha_spd_and_riemann_positive(chart):
    rng = np.random.default_rng(7)
    z = random_interior(chart, rng, 1000)
    assert np.all(chart.contains(z))
    a = chart.alpha(z[:, :-1], z[:, -1])
    np.linalg.cholesky(a)
    zeta = rng.normal(size=z.shape)
    assert np.all(np.einsum("ki,kij,kj->k", zeta, riemann_matrix(chart, z), zeta) > 0)


@pytest.mark.parametrize("chart", CHARTS, ids=lambda c: f"{c.name}-{c.dim}")
def test_time_orientation_field_is_unit_timelike(chart, rng):
    z = random_interior(chart, rng, 10)
    g = metric_matrix(chart, z)
    assert np.allclose(g[:, -1, -1], -1.0)
    # W has Riemannian length one
    assert np.allclose(riemann_matrix(chart, z)[:, -1, -1], 1.0)


def test_time_reflection_maps_future_null_vectors_to_past(rng):
    ref = time_reflected(DEMO)
    z = np.array([0.2, 0.1, 1.0])
    v = np.array([1.0, 0.0, 0.3 + np.sqrt(1.09)])
    assert eval_metric(DEMO, z, v, v) == pytest.approx(0.0, abs=1e-14)
    flip = np.array([1.0, 1.0, -1.0])
    assert eval_metric(ref, z * flip, v * flip, v * flip) == pytest.approx(0.0, abs=1e-14)
    assert ref.stationary and ref.flat


def test_time_reflection_of_closed_form_connection(rng):
    ref = time_reflected(LENS)
    z = random_interior(LENS, rng, 3)
    assert np.allclose(christoffel(ref, z), christoffel_fd(ref.with_fd_only(), z), atol=1e-6)


def test_tabulated_chart_reproduces_linear_data():
    axes = [np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    alpha = np.zeros((5, 5, 2, 2))
    alpha[..., 0, 0] = 2 + X
    alpha[..., 1, 1] = 2 + Y
    delta = np.stack([0.1 * X, np.zeros_like(X)], -1)
    chart = tabulated_chart(axes, alpha, delta)
    x = np.array([0.33, -0.41])
    assert np.allclose(chart.alpha(x, 0.0), np.diag(2 + x))
    assert np.allclose(chart.delta(x, 0.0), [0.033, 0.0])
    assert not chart.contains([1.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        tabulated_chart(axes, alpha[..., :1], delta)


def test_chart_validation():
    with pytest.raises(ValueError):
        dataclasses.replace(MINK, dim=2)
    with pytest.raises(ValueError):
        dataclasses.replace(MINK, fd_step=0.0)
