
import jax.numpy as jnp
import numpy as np
import pytest

from eulerclass import bundle as BU
from eulerclass import manifolds as MF
from eulerclass.compendium import build_ansatz
from eulerclass.errors import ContractViolation
from eulerclass.exterior import FormMatrix, matrix_wedge
from eulerclass.fields import Chart, SmoothField
from eulerclass.gaussbonnet import levi_civita


@pytest.fixture(scope="module")
def sphere_phi():
    g = MF.round_sphere_metric()
    return MF.random_sphere_form(g.chart, g, MF.sphere_embedding, np.random.default_rng(5))


@pytest.fixture(scope="module")
def weyl_bundle(round_metric, sphere_phi):
    return BU.tangent_bundle(round_metric, build_ansatz(round_metric, sphere_phi, -0.5, -0.5, 0.5))


@pytest.fixture(scope="module")
def random_bundle(round_metric, sphere_phi):
    rng = np.random.default_rng(9)
    psi = MF.random_sphere_form(round_metric.chart, round_metric, MF.sphere_embedding, rng)
    g, pf, sf = round_metric, sphere_phi.fn, psi.fn
    lc = levi_civita(g)
    # a generic connection: Levi-Civita plus an arbitrary smooth (1,2)-tensor
    conn = SmoothField(g.chart, lambda x: lc.fn(x) + 0.7 * jnp.einsum("i,k,j->ikj", pf(x), sf(x), pf(x))
                       + 0.4 * jnp.einsum("i,kj->ikj", sf(x), g.fn(x)), (2, 2, 2))
    return BU.tangent_bundle(g, conn)


def test_weyl_nonmetricity_is_phi_times_g(weyl_bundle, sphere_phi, round_metric, rng):
    X = round_metric.chart.random_points(10, rng)
    q = BU.non_metricity(weyl_bundle).evaluate(X)
    expected = np.einsum("pi,pab->piab", sphere_phi.evaluate(X), round_metric.evaluate(X))
    assert np.max(np.abs(q - expected)) < 1e-9


def test_weyl_error_term_vanishes(weyl_bundle, rng):
    X = weyl_bundle.chart.random_points(10, rng)
    assert np.max(np.abs(BU.error_term(weyl_bundle).evaluate(X))) < 1e-10


def test_error_term_is_matrix_wedge_square(random_bundle, round_metric, rng):
    X = random_bundle.chart.random_points(5, rng)
    E = BU.error_term(random_bundle).evaluate(X)
    q = BU.non_metricity(random_bundle).evaluate(X)
    A = np.einsum("pac,picb->piab", np.linalg.inv(round_metric.evaluate(X)), q)
    for p in range(len(X)):
        M = FormMatrix.from_one_form_components(A[p])
        ref = matrix_wedge(M, M)
        assert (FormMatrix.from_two_form_components(E[p]) - ref).max_abs() < 1e-12
    assert np.max(np.abs(E)) > 1e-3


def test_round_sphere_curvature_in_orthonormal_frame(round_metric, rng):
    B = BU.orthonormalize_frame(BU.tangent_bundle(round_metric, levi_civita(round_metric)))
    X = round_metric.chart.random_points(8, rng)
    Om = BU.curvature(B).evaluate(X)
    assert np.allclose(Om[:, 0, 1, 0, 1], np.sin(X[:, 0]), atol=1e-8)
    assert np.allclose(Om[:, 0, 1, 1, 0], -np.sin(X[:, 0]), atol=1e-8)


def test_orthonormal_frame_of_constant_metric():
    chart = Chart((-1.0, -1.0), (1.0, 1.0))
    g = SmoothField.constant(chart, np.diag([4.0, 9.0]))
    B = BU.orthonormalize_frame(BU.tangent_bundle(g, SmoothField.constant(chart, np.zeros((2, 2, 2)))))
    assert np.allclose(B.frame.evaluate(np.zeros(2)), np.diag([0.5, 1.0 / 3.0]))
    assert np.allclose(B.connection.evaluate(np.zeros(2)), 0.0)


def test_canonical_connection_is_metric(random_bundle, rng):
    X = random_bundle.chart.random_points(20, rng)
    before = BU.non_metricity(random_bundle).evaluate(X)
    after = BU.non_metricity(BU.canonical_metric_connection(random_bundle)).evaluate(X)
    assert np.max(np.abs(before)) > 0.1
    assert np.max(np.abs(after)) < 1e-7


def test_antisymmetric_shift_of_canonical_connection_stays_metric(random_bundle, round_metric, rng):
    canon = BU.canonical_metric_connection(random_bundle)
    A = rng.standard_normal((2, 2, 2))
    A = jnp.asarray(A - np.transpose(A, (0, 2, 1)))
    gfn, cfn = round_metric.fn, canon.connection.fn
    other = SmoothField(round_metric.chart,
                        lambda x: cfn(x) + jnp.einsum("ac,icb->iab", jnp.linalg.inv(gfn(x)), A), (2, 2, 2))
    X = random_bundle.chart.random_points(10, rng)
    assert np.max(np.abs(BU.non_metricity(random_bundle.with_connection(other)).evaluate(X))) < 1e-7


def test_canonical_connection_is_nearest_metric_connection(random_bundle, round_metric, rng):
    canon = BU.canonical_metric_connection(random_bundle)
    mu = BU.ConnectionDistanceMetric(round_metric, round_metric)
    X = random_bundle.chart.random_points(10, rng)
    g = round_metric.evaluate(X)
    w, wg = random_bundle.connection.evaluate(X), canon.connection.evaluate(X)
    d0 = BU.connection_distance(random_bundle, canon.connection, mu, X)
    assert np.allclose(d0, BU.endomorphism_norm(w - wg, g, g))
    for _ in range(50):
        A = rng.standard_normal((2, 2, 2))
        A = A - np.transpose(A, (0, 2, 1))
        other = wg + np.einsum("pac,icb->piab", np.linalg.inv(g), A)
        d1 = BU.endomorphism_norm(wg - other, g, g)
        d2 = BU.endomorphism_norm(w - other, g, g)
        assert np.all(d0 <= d2 + 1e-12)
        assert np.max(np.abs(d0 ** 2 + d1 ** 2 - d2 ** 2)) < 1e-9


def test_split_identities(random_bundle, rng):
    B = BU.orthonormalize_frame(random_bundle)
    res = BU.split_identities_check(B, random_bundle.chart.random_points(5, rng))
    assert res["antisymmetric"] < 1e-6 and res["symmetric"] < 1e-6


def test_split_identities_need_orthonormal_frame(random_bundle):
    with pytest.raises(ContractViolation):
        BU.split_identities_check(random_bundle, np.array([1.0, 1.0]))


def test_corrected_form_equals_canonical_pfaffian(random_bundle, rng):
    X = random_bundle.chart.random_points(30, rng)
    lhs = BU.euler_form(random_bundle).evaluate(X)
    rhs = BU.euler_form(BU.canonical_metric_connection(random_bundle), corrected=False).evaluate(X)
    assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_euler_number_of_round_sphere(round_metric):
    rep = BU.euler_number(BU.tangent_bundle(round_metric, levi_civita(round_metric)), 48)
    assert rep.nearest == 2 and rep.deviation < 1e-5


def test_euler_number_of_nonmetric_sphere(random_bundle):
    rep = BU.euler_number(random_bundle, 64)
    assert rep.value == pytest.approx(2.0, abs=1e-5)
    plain = BU.euler_number(random_bundle, 64, corrected=False)
    assert abs(plain.value - 2.0) > 1e-3


def test_euler_number_of_flat_torus(torus):
    g = MF.flat_metric(torus)
    phi = MF.random_fourier_form(torus, np.random.default_rng(2), modes=1)
    B = BU.tangent_bundle(g, build_ansatz(g, phi, 0.3, -0.8, 0.5))
    assert abs(BU.euler_number(B, 32).value) < 1e-6


def test_euler_form_rejects_odd_rank():
    chart = Chart((-1.0,) * 3, (1.0,) * 3)
    B = BU.tangent_bundle(SmoothField.constant(chart, np.eye(3)), SmoothField.constant(chart, np.zeros((3, 3, 3))))
    with pytest.raises(ContractViolation):
        BU.euler_form(B)


def test_bundle_shape_contract(round_metric):
    with pytest.raises(ContractViolation):
        BU.BundleGeometry(round_metric, SmoothField.constant(round_metric.chart, np.zeros((2, 3, 3))))
