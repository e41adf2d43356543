import math

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerclass import bundle as BU
from eulerclass import compendium as C
from eulerclass import manifolds as MF
from eulerclass.errors import DomainError, RegistryError
from eulerclass.fields import DerivativeEngine, SmoothField, exterior_derivative, FormField, lie_derivative_metric


def conformal_torus(n, seed, amplitude=0.2):
    chart = MF.torus_chart(n)
    u = MF.random_fourier_function(n, np.random.default_rng(seed), modes=1, amplitude=amplitude)
    g = MF.conformal_metric(MF.flat_metric(chart), u)
    phi = MF.random_fourier_form(chart, np.random.default_rng(seed + 100), modes=1)
    return g, phi


@pytest.fixture(scope="module")
def surface():
    g = MF.ellipsoid_metric((1.0, 1.2, 0.8))
    phi = MF.random_sphere_form(g.chart, g, MF.sphere_embedding, np.random.default_rng(8))
    return g, phi


@pytest.fixture(scope="module")
def three_torus():
    return conformal_torus(3, 11)


@pytest.fixture(scope="module")
def four_torus():
    return conformal_torus(4, 12)


def _points(g, count=6, seed=0):
    return g.chart.random_points(count, np.random.default_rng(seed))


def test_torsion_closed_form(three_torus):
    g, phi = three_torus
    A = C.AnsatzConnection.from_coefficients(g, phi, 0.3, -0.9, 0.4)
    X = _points(g)
    direct = C.torsion(A.connection).evaluate(X)
    assert np.allclose(direct, C.ansatz_torsion_closed_form(A.alpha, A.beta).evaluate(X), atol=1e-10)
    assert np.max(np.abs(direct)) > 0.01


def test_nonmetricity_closed_form(three_torus):
    g, phi = three_torus
    A = C.AnsatzConnection.from_coefficients(g, phi, 0.3, -0.9, 0.4)
    X = _points(g)
    direct = BU.non_metricity(BU.tangent_bundle(g, A.connection)).evaluate(X)
    closed = C.ansatz_nonmetricity_closed_form(A.alpha, A.beta, A.gamma, g).evaluate(X)
    assert np.max(np.abs(direct - closed)) < 1e-9


def test_canonical_connection_closed_form(three_torus):
    g, phi = three_torus
    A = C.AnsatzConnection.from_coefficients(g, phi, 0.3, -0.9, 0.4)
    X = _points(g)
    direct = BU.canonical_metric_connection(BU.tangent_bundle(g, A.connection)).connection.evaluate(X)
    closed = C.ansatz_canonical_metric_closed_form(A.beta, A.gamma, g)
    assert np.max(np.abs(direct - closed["connection"].evaluate(X))) < 1e-9
    D = closed["difference"].evaluate(X)
    assert np.allclose(np.einsum("pkki->pi", D), closed["trace"].evaluate(X), atol=1e-12)


def _worst_relative(reports):
    return max(r.residual / max(1.0, float(np.max(np.abs(r.direct)))) for r in reports)


@pytest.mark.parametrize("geometry", ["surface", "three_torus", "four_torus"])
def test_every_closed_form_matches_direct_curvature(request, geometry):
    g, phi = request.getfixturevalue(geometry)
    A = C.AnsatzConnection.from_coefficients(g, phi, 0.35, -0.8, 0.55)
    X = _points(g, 8)
    reports = C.verify(A, X)
    assert {r.name for r in reports} == set(C.TENSOR_NAMES)
    assert _worst_relative(reports) < 1e-5
    assert _worst_relative(C.verify(A, X, specialized=True)) < 1e-5


def test_closed_forms_with_independent_one_forms(three_torus):
    g, phi = three_torus
    chart = g.chart
    rng = np.random.default_rng(21)
    alpha, beta, gamma = (MF.random_fourier_form(chart, rng, modes=1) for _ in range(3))
    A = C.AnsatzConnection(g, alpha, beta, gamma)
    assert _worst_relative(C.verify(A, _points(g, 6))) < 1e-5


def test_closed_forms_in_exact_mode(three_torus):
    g, phi = three_torus
    A = C.AnsatzConnection.from_coefficients(g, phi, 0.35, -0.8, 0.55, DerivativeEngine("exact"))
    assert max(r.residual for r in C.verify(A, _points(g, 4))) < 1e-8


def test_trace_identities(surface, four_torus):
    for g, phi in (surface, four_torus):
        A = C.AnsatzConnection.from_coefficients(g, phi, 0.35, -0.8, 0.55)
        X = _points(g, 5)
        vals = jax.vmap(C._direct_all(A, ("scalar", "rho_trace", "canonical_ricci", "canonical_scalar")))(X)
        assert np.max(np.abs(vals["rho_trace"] + vals["scalar"])) < 1e-8
        gi = np.linalg.inv(g.evaluate(X))
        trace_h = np.einsum("pij,pij->p", gi, np.asarray(vals["canonical_ricci"]))
        assert np.max(np.abs(trace_h - vals["canonical_scalar"])) < 1e-8


def test_zero_form_reduces_to_levi_civita(three_torus):
    g, _ = three_torus
    zero = SmoothField.constant(g.chart, np.zeros(3))
    A = C.AnsatzConnection.from_coefficients(g, zero, 0.4, -0.2, 0.9)
    lc = C.AnsatzConnection.from_coefficients(g, zero, 0.0, 0.0, 0.0)
    X = _points(g, 4)
    for name in ("ricci", "scalar", "canonical_curvature"):
        assert np.allclose(C.direct_tensor(A, name, X), C.closed_form_tensor(lc, name, X), atol=1e-8)
    assert np.max(np.abs(C.closed_form_tensor(A, "zeta", X))) < 1e-12
    assert np.allclose(C.closed_form_tensor(A, "canonical_curvature", X), C.closed_form_tensor(lc, "curvature", X))


def test_zeta_for_closed_and_nonclosed_forms(three_torus):
    g, phi = three_torus
    n, (a, b, c) = 3, (0.35, -0.8, 0.55)
    X = _points(g, 4)
    exact = MF.exact_form(g.chart, lambda x: jnp.sin(x[0]) * jnp.cos(x[1] - x[2]))
    closed = C.AnsatzConnection.from_coefficients(g, exact, a, b, c)
    assert np.max(np.abs(C.direct_tensor(closed, "zeta", X))) < 1e-8
    A = C.AnsatzConnection.from_coefficients(g, phi, a, b, c)
    dphi = exterior_derivative(FormField.from_components(g.chart, lambda x: phi.fn(x), 1)).evaluate(X)
    dphi_full = np.zeros((len(X), 3, 3))
    for k, (i, j) in enumerate([(0, 1), (0, 2), (1, 2)]):
        dphi_full[:, i, j], dphi_full[:, j, i] = dphi[:, k], -dphi[:, k]
    assert np.allclose(C.direct_tensor(A, "zeta", X), (n * a + b + c) * dphi_full, atol=1e-7)


def test_wylie_yeroshkin_ricci(three_torus):
    g, _ = three_torus
    n = 3
    phi = MF.exact_form(g.chart, lambda x: 0.4 * jnp.cos(x[0] + x[2]) + 0.2 * jnp.sin(x[1]))
    A = C.AnsatzConnection.from_coefficients(g, phi, -1 / (n - 1), -1 / (n - 1), 0.0)
    zero = C.AnsatzConnection.from_coefficients(g, phi, 0.0, 0.0, 0.0)
    X = _points(g, 5)
    f = phi.evaluate(X)
    expected = (C.direct_tensor(zero, "ricci", X) + 0.5 * lie_derivative_metric(phi, g).evaluate(X)
                + np.einsum("pi,pj->pij", f, f) / (n - 1))
    assert np.max(np.abs(C.direct_tensor(A, "ricci", X) - expected)) < 1e-5


def test_unknown_tensor_name():
    with pytest.raises(RegistryError):
        C.describe_tensor("riemann")


# coefficient solver -------------------------------------------------------------

def test_surface_coefficients():
    sol = C.solve_coefficients(2, 3.0)
    assert len(sol.solutions) == 1
    assert sol.solutions[0] == pytest.approx((-1 / 3, -2 / 3), abs=1e-15)


def test_einstein_weyl_is_unique():
    for n in (3, 4, 6):
        sol = C.solve_coefficients(n, -(n - 2))
        assert len(sol.solutions) == 1 and sol.multiplicity == (2,)
        b, c = sol.solutions[0]
        assert b == pytest.approx(-1 / (n - 2)) and c == pytest.approx(1 / (n - 2))
    assert C.solve_coefficients(4, -2).solutions[0] == pytest.approx((-0.5, 0.5))


def test_two_branches_n4_m2():
    sol = C.solve_coefficients(4, 2.0)
    bs = sorted(b for b, _ in sol.solutions)
    cs = sorted(c for _, c in sol.solutions)
    assert bs == pytest.approx([-0.9082482904638631, -0.09175170953613693], abs=1e-12)
    assert cs == pytest.approx([-0.7247448713915889, 1.724744871391589], abs=1e-12)


@pytest.mark.parametrize("n,m", [(3, 1.0), (4, 2.0), (5, "inf"), (6, 7.5), (7, -10.0), (4, -3.0), (2, "-inf")])
def test_solutions_satisfy_both_equations(n, m):
    sol = C.solve_coefficients(n, m)
    assert sol.solutions
    for linear, quadratic in sol.residuals():
        assert linear < 1e-12 and quadratic < 1e-12
    if n > 2 and len(sol.solutions) == 2:
        assert np.mean([b for b, _ in sol.solutions]) == pytest.approx(-1 / (n - 2), abs=1e-12)
        assert np.mean([c for _, c in sol.solutions]) == pytest.approx(1 / (n - 2), abs=1e-12)


@pytest.mark.parametrize("n,m", [(3, 0.5), (4, -1.0), (5, -2.5), (4, 1.0), (6, -3.0), (4, -2.0)])
def test_discriminant_gates_real_solutions(n, m):
    disc = 4 * (n - 1) * (1 + (n - 2) / m)
    count = len(C.solve_coefficients(n, m).solutions)
    assert count == (2 if disc > 0 else 1 if disc == 0 else 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 12), st.one_of(st.floats(0.1, 100.0), st.floats(-100.0, -0.1)))
def test_solver_properties(n, m):
    sol = C.solve_coefficients(n, m)
    for linear, quadratic in sol.residuals():
        assert linear < 1e-12 and quadratic < 1e-12
    if n == 2:
        assert len(sol.solutions) == 1
    else:
        disc = 4 * (n - 1) * (1 + (n - 2) / m)
        assert (len(sol.solutions) > 0) == (disc >= 0)


def test_zero_weight_is_excluded():
    with pytest.raises(DomainError):
        C.solve_coefficients(4, 0)


def test_infinite_weight_spellings():
    assert C.QuasiEinsteinParams.from_weight(4, "inf").inv_m == 0.0
    assert C.QuasiEinsteinParams.from_weight(4, float("-inf")).m == math.inf


# quasi-Einstein residual and averages ------------------------------------------------

def test_round_sphere_is_quasi_einstein_for_zero_form(round_metric, rng):
    zero = SmoothField.constant(round_metric.chart, np.zeros(2))
    res = C.gmqe_residual(round_metric, zero, 3.0).evaluate(round_metric.chart.random_points(5, rng))
    assert np.max(np.abs(res)) < 1e-8


def test_branch_connections_share_traceless_ricci(four_torus):
    g, phi = four_torus
    X = _points(g, 5)
    residual = C.gmqe_residual(g, phi, 2.0).evaluate(X)
    branches = []
    for b, c in C.solve_coefficients(4, 2.0).solutions:
        A = C.AnsatzConnection.from_coefficients(g, phi, b, b, c)
        branches.append(C.direct_tensor(A, "ricci_traceless", X))
        assert np.max(np.abs(branches[-1] - residual)) < 1e-5
    assert np.max(np.abs(branches[0] - branches[1])) < 1e-6
    syms = [C.direct_tensor(C.AnsatzConnection.from_coefficients(g, phi, b, b, c), "ricci_sym", X)
            for b, c in C.solve_coefficients(4, 2.0).solutions]
    assert np.max(np.abs(syms[0] - syms[1])) > 1e-3


def test_averaged_tensors_match_branch_average(four_torus):
    g, phi = four_torus
    X = _points(g, 4)
    closed = C.averaged_tensors(g, phi, 2.0)
    direct = C.averaged_tensors_direct(g, phi, 2.0)
    for key in ("ricci_sym", "scalar"):
        assert np.max(np.abs(closed[key].evaluate(X) - direct[key].evaluate(X))) < 1e-5


def test_averaged_tensors_need_two_branches(four_torus):
    g, phi = four_torus
    with pytest.raises(DomainError):
        C.averaged_tensors(g, phi, -2.0)


# functionals ----------------------------------------------------------------------

def test_weyl_functionals(surface):
    g, phi = surface
    out = C.functionals(C.build_ansatz(g, phi, -0.5, -0.5, 0.5), g, nodes=48)
    sq = SmoothField(g.chart, lambda x: 2.0 * phi.fn(x) @ jnp.linalg.solve(g.fn(x), phi.fn(x)), ())
    from eulerclass.fields import integrate_function

    assert out["K"] == pytest.approx(integrate_function(sq, g, 48), rel=1e-8)
    assert out["F"] == pytest.approx(out["K"], rel=1e-12)


def test_functionals_are_scale_invariant_in_dimension_n(three_torus):
    g, phi = three_torus
    scaled = SmoothField(g.chart, lambda x: 4.0 * g.fn(x), (3, 3))
    base = C.functionals(C.build_ansatz(g, phi, 0.2, -0.5, 0.3), g, nodes=12)
    big = C.functionals(C.build_ansatz(scaled, phi, 0.2, -0.5, 0.3), scaled, nodes=12)
    assert big["F"] == pytest.approx(base["F"], rel=1e-8)
    assert big["volume"] == pytest.approx(8.0 * base["volume"], rel=1e-12)
