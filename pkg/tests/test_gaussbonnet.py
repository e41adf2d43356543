import math

import jax.numpy as jnp
import numpy as np
import pytest

from eulerclass import bundle as BU
from eulerclass import gaussbonnet as GB
from eulerclass import manifolds as MF
from eulerclass.compendium import build_ansatz
from eulerclass.errors import ContractViolation, GeometryError
from eulerclass.fields import Chart, CurveSegment, SmoothField, codifferential_1, hodge_star_1

PLANE = Chart((-2.0, -2.0), (2.0, 2.0), name="plane")


@pytest.fixture(scope="module")
def ellipsoid():
    return MF.ellipsoid_metric((1.0, 1.2, 0.8))


@pytest.fixture(scope="module")
def ellipsoid_phi(ellipsoid):
    return MF.random_sphere_form(ellipsoid.chart, ellipsoid, MF.sphere_embedding, np.random.default_rng(3))


def test_round_sphere_gauss_curvature(round_metric, rng):
    K = GB.gauss_curvature(round_metric)
    assert np.allclose(K.evaluate(round_metric.chart.random_points(10, rng)), 1.0, atol=1e-8)


def test_conformal_flat_gauss_curvature(torus, rng):
    u = lambda x: 0.3 * jnp.sin(x[0]) * jnp.cos(x[1])
    g = MF.conformal_metric(MF.flat_metric(torus), u)
    X = torus.random_points(10, rng)
    # K = -exp(-2u) Laplacian(u) for g = exp(2u) (du^2 + dv^2)
    lap = -0.6 * np.sin(X[:, 0]) * np.cos(X[:, 1])
    expected = -np.exp(-2 * 0.3 * np.sin(X[:, 0]) * np.cos(X[:, 1])) * lap
    assert np.allclose(GB.gauss_curvature(g).evaluate(X), expected, atol=1e-8)


def test_split_difference_parts(ellipsoid, ellipsoid_phi, rng):
    S = GB.SurfaceGeometry(ellipsoid, build_ansatz(ellipsoid, ellipsoid_phi, 0.4, -1.1, 0.7))
    D = GB.difference_tensor(S)
    X = ellipsoid.chart.random_points(6, rng)
    full, sym, anti = (f.evaluate(X) for f in (D.full, D.symmetric, D.antisymmetric))
    g = ellipsoid.evaluate(X)
    assert np.allclose(sym + anti, full, atol=1e-12)
    lowered_s = np.einsum("pkm,pimj->pikj", g, sym)
    lowered_a = np.einsum("pkm,pimj->pikj", g, anti)
    assert np.allclose(lowered_s, np.transpose(lowered_s, (0, 1, 3, 2)), atol=1e-10)
    assert np.allclose(lowered_a, -np.transpose(lowered_a, (0, 1, 3, 2)), atol=1e-10)


@pytest.mark.parametrize("a,b,c", [(-0.5, -0.5, 0.5), (0.4, -1.1, 0.7), (1.0, 0.0, 0.0)])
def test_b_trace_of_ansatz(ellipsoid, ellipsoid_phi, rng, a, b, c):
    S = GB.SurfaceGeometry(ellipsoid, build_ansatz(ellipsoid, ellipsoid_phi, a, b, c))
    X = ellipsoid.chart.random_points(6, rng)
    got = GB.difference_tensor(S).trace.evaluate(X)
    assert np.allclose(got, -0.5 * (b - c) * ellipsoid_phi.evaluate(X), atol=1e-9)


def test_metric_difference_from_trace(ellipsoid, ellipsoid_phi, rng):
    Bt = GB.metric_difference_from_trace(ellipsoid_phi, ellipsoid)
    X = ellipsoid.chart.random_points(6, rng)
    assert np.allclose(GB.b_trace(Bt, ellipsoid).evaluate(X), ellipsoid_phi.evaluate(X), atol=1e-10)
    _, anti = GB.split_difference(Bt, ellipsoid)
    assert np.allclose(anti.evaluate(X), Bt.evaluate(X), atol=1e-10)


def test_latitude_signed_curvature(round_metric):
    theta0 = 0.8
    circle = CurveSegment(round_metric.chart, lambda t: jnp.array([theta0, 2 * jnp.pi * t]))
    kappa = GB.signed_curvature(GB.SurfaceGeometry(round_metric), None, circle, np.linspace(0.1, 0.9, 5))
    assert np.allclose(kappa, 1.0 / math.tan(theta0), atol=1e-8)


def test_global_gauss_bonnet_sphere_and_ellipsoid(round_metric, ellipsoid, ellipsoid_phi):
    assert GB.global_gb(GB.SurfaceGeometry(round_metric)).integral == pytest.approx(4 * math.pi, abs=1e-5)
    weyl = GB.SurfaceGeometry(ellipsoid, build_ansatz(ellipsoid, ellipsoid_phi, -0.5, -0.5, 0.5))
    rep = GB.global_gb(weyl)
    assert rep.euler_characteristic == 2 and abs(rep.residual) < 1e-5


def test_global_gauss_bonnet_torus(torus):
    g = MF.conformal_metric(MF.flat_metric(torus), lambda x: 0.2 * jnp.cos(x[0] + x[1]))
    phi = MF.random_fourier_form(torus, np.random.default_rng(4), modes=1)
    rep = GB.global_gb(GB.SurfaceGeometry(g, build_ansatz(g, phi, 0.2, -0.6, 0.9)), nodes=32)
    assert rep.euler_characteristic == 0 and abs(rep.integral) < 1e-5


def test_density_is_two_pi_times_euler_form(ellipsoid, ellipsoid_phi, rng):
    S = GB.SurfaceGeometry(ellipsoid, build_ansatz(ellipsoid, ellipsoid_phi, 0.4, -1.1, 0.7))
    X = ellipsoid.chart.random_points(20, rng)
    density = GB.gb_density(S).evaluate(X)
    euler = BU.euler_form(S.bundle()).evaluate(X)
    assert np.max(np.abs(density - 2 * math.pi * euler)) < 1e-6


def test_curvature_relation(ellipsoid, ellipsoid_phi, rng):
    S = GB.SurfaceGeometry(ellipsoid)
    Bt = GB.metric_difference_from_trace(ellipsoid_phi, ellipsoid)
    res = GB.curvature_relation_check(S, Bt, ellipsoid.chart.random_points(4, rng))
    assert res["general"] < 1e-6 and res["lowered"] < 1e-6


def test_curvature_relation_with_torsion(ellipsoid, ellipsoid_phi, rng):
    S = GB.SurfaceGeometry(ellipsoid)
    base = build_ansatz(ellipsoid, ellipsoid_phi, 0.9, -0.3, 0.2)
    Bt = GB.metric_difference_from_trace(ellipsoid_phi, ellipsoid)
    res = GB.curvature_relation_check(S, Bt, ellipsoid.chart.random_points(4, rng), base=base)
    assert res["general"] < 1e-6 and "lowered" not in res


def test_b_dual(ellipsoid, ellipsoid_phi, rng):
    res = GB.b_dual_check(GB.SurfaceGeometry(ellipsoid), ellipsoid_phi, ellipsoid.chart.random_points(10, rng))
    assert res["star_b"] < 1e-10 and res["pfaffian"] < 1e-6


def _cap(radius):
    """Disk of stereographic radius ``radius`` around the north pole."""
    chart = MF.stereographic_chart()
    seg = CurveSegment(chart, lambda t: radius * jnp.array([jnp.cos(2 * jnp.pi * t), jnp.sin(2 * jnp.pi * t)]))
    interior = lambda s, t: s * radius * jnp.array([jnp.cos(2 * jnp.pi * t), jnp.sin(2 * jnp.pi * t)])
    return GB.CurvedPolygon((seg,), interior, "cap")


def test_local_gauss_bonnet_spherical_cap():
    theta0 = 1.0
    g = MF.stereographic_sphere_metric()
    rep = GB.local_gb(GB.SurfaceGeometry(g), None, _cap(math.tan(theta0 / 2)))
    assert rep.interior == pytest.approx(2 * math.pi * (1 - math.cos(theta0)), abs=1e-8)
    assert rep.boundary == pytest.approx(2 * math.pi * math.cos(theta0), abs=1e-8)
    assert rep.angles == pytest.approx(0.0, abs=1e-8)
    assert abs(rep.residual) < 1e-5


def test_local_gauss_bonnet_with_divergence_term():
    g = MF.stereographic_sphere_metric()
    phi = SmoothField(g.chart, lambda x: jnp.array([0.5 * x[0] + 0.3 * x[1], 0.4 * x[1] - 0.1 * x[0] ** 2]), (2,))
    conn = build_ansatz(g, phi, 0.2, 0.8, -0.6)
    rep = GB.local_gb(GB.SurfaceGeometry(g), conn, _cap(0.7))
    assert abs(rep.interior_divergence) > 1e-3
    assert abs(rep.interior_divergence + rep.boundary_normal) < 1e-6
    assert abs(rep.residual) < 1e-5


def test_local_gauss_bonnet_planar_square():
    g = MF.flat_metric(PLANE)
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
    segs = tuple(CurveSegment(PLANE, lambda t, p=jnp.asarray(corners[k]), q=jnp.asarray(corners[(k + 1) % 4]):
                              p + t * (q - p)) for k in range(4))
    square = GB.CurvedPolygon(segs, lambda s, t: jnp.array([2 * s - 1, 2 * t - 1]), "square")
    b = SmoothField(PLANE, lambda x: jnp.array([jnp.sin(x[1]), x[0] ** 2]), (2,))
    rep = GB.local_gb(GB.SurfaceGeometry(g), None, square, b_form=b)
    assert np.allclose(rep.exterior_angles, math.pi / 2)
    assert rep.interior_curvature == pytest.approx(0.0, abs=1e-12)
    assert abs(rep.residual) < 1e-5


def test_open_polygon_is_rejected():
    seg = CurveSegment(PLANE, lambda t: jnp.array([t, 0.0 * t]))
    with pytest.raises(GeometryError):
        GB.CurvedPolygon((seg,), lambda s, t: jnp.array([s, t]))


def test_clockwise_polygon_is_rejected():
    g = MF.flat_metric(PLANE)
    seg = CurveSegment(PLANE, lambda t: 0.5 * jnp.array([jnp.cos(-2 * jnp.pi * t), jnp.sin(-2 * jnp.pi * t)]))
    P = GB.CurvedPolygon((seg,), lambda s, t: 0.5 * s * jnp.array([jnp.cos(2 * jnp.pi * t), jnp.sin(2 * jnp.pi * t)]))
    with pytest.raises(GeometryError):
        GB.local_gb(GB.SurfaceGeometry(g), None, P)


def test_surface_geometry_needs_two_dimensions():
    chart = Chart((-1.0,) * 3, (1.0,) * 3)
    with pytest.raises(ContractViolation):
        GB.SurfaceGeometry(SmoothField.constant(chart, np.eye(3)))


def test_codifferential_hodge_relation(ellipsoid, ellipsoid_phi, rng):
    """``d*`` on 1-forms agrees with ``-* d *`` on a surface."""
    from eulerclass.fields import exterior_derivative, hodge_star_2

    star = hodge_star_1(ellipsoid_phi, ellipsoid)
    lhs = codifferential_1(ellipsoid_phi, ellipsoid)
    rhs = hodge_star_2(exterior_derivative(star), ellipsoid)
    X = ellipsoid.chart.random_points(8, rng)
    assert np.allclose(lhs.evaluate(X), -rhs.evaluate(X), atol=1e-8)
