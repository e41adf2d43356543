import math

import jax.numpy as jnp
import numpy as np
import pytest
import yaml

from eulerclass import scenario as SC
from eulerclass.expr import Expression, ExpressionError
from eulerclass.gaussbonnet import SurfaceGeometry, local_gb


def doc(**overrides):
    base = {
        "name": "tiny",
        "seed": 3,
        "manifold": {"kind": "flat-torus"},
        "connection": {"kind": "levi-civita"},
        "numerics": {"quad": 12},
        "checks": ["euler-number"],
    }
    base.update(overrides)
    return base


def error_of(data) -> SC.ScenarioError:
    with pytest.raises(SC.ScenarioError) as info:
        SC.parse_scenario(data)
    return info.value


def test_minimal_scenario_parses():
    sc = SC.parse_scenario(doc())
    assert sc.name == "tiny" and sc.seed == 3 and sc.numerics.quad == 12
    assert sc.checks[0].name == "euler-number" and sc.checks[0].where == "checks[0].euler-number"


def test_overrides_replace_numerics_and_seed():
    sc = SC.parse_scenario(doc()).with_overrides(seed=9, quad=20, fd_step=1e-4, exact=True)
    assert (sc.seed, sc.numerics.quad, sc.numerics.fd_step) == (9, 20, 1e-4)
    assert sc.numerics.engine().mode == "exact"


@pytest.mark.parametrize("mutation,where", [
    ({"checks": ["euler-number", "no-such-check"]}, "checks[1]"),
    ({"checks": [{"local-gb": {"polygon": "octant", "colour": "red"}}],
      "manifold": {"kind": "stereographic-sphere"}}, "checks[0].local-gb"),
    ({"manifold": {"kind": "klein-bottle"}}, "manifold.kind"),
    ({"connection": {"kind": "teleparallel"}}, "connection.kind"),
    ({"numerics": {"quad": -4}}, "numerics.quad"),
    ({"numerics": {"speed": "fast"}}, "numerics"),
    ({"checks": []}, "checks"),
    ({"name": ""}, "name"),
])
def test_errors_name_the_offending_field(mutation, where):
    err = error_of(doc(**mutation))
    assert err.where.startswith(where)


def test_unknown_check_lists_known_checks():
    err = error_of(doc(checks=["eulr-number"]))
    assert "euler-number" in str(err)


def test_check_dimension_is_validated():
    err = error_of(doc(checks=["global-gb"], manifold={"kind": "flat-torus", "dimension": 4}))
    assert "dimension" in str(err)


def test_closed_manifold_is_required_for_euler_number():
    err = error_of(doc(manifold={"kind": "plane", "lower": [-1, -1], "upper": [1, 1]}))
    assert "closed" in str(err)


def test_bad_expression_is_reported():
    data = doc(metric={"log_conformal_factor": "0.1*sin(u) + blorp(v)"}, manifold={"kind": "conformal-torus"})
    assert "blorp" in str(error_of(data))


def test_yaml_syntax_error_reports_line_and_column(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: broken\nchecks: [euler-number\nseed: 1\n")
    with pytest.raises(SC.ScenarioError) as info:
        SC.load_scenario(path)
    assert str(path) in info.value.where and info.value.where.count(":") >= 2


def test_missing_scenario_file():
    with pytest.raises(SC.ScenarioError):
        SC.load_scenario("/nonexistent/scenario.yaml")


def test_bundled_scenarios_all_parse():
    names = SC.bundled_scenarios()
    assert {"sphere-levi-civita", "sphere-weyl", "sphere-random-ansatz", "torus-random-ansatz",
            "octant-triangle-local-gb", "latitude-cap-local-gb", "planar-square-local-gb",
            "corwin-morgan-density", "product-spheres-4d"} <= set(names)
    for name, path in names.items():
        sc = SC.load_scenario(name)
        assert sc.name == name
        assert yaml.safe_load(path.read_text())["name"] == name


def test_file_and_bundled_name_load_the_same(tmp_path):
    path = SC.bundled_path("sphere-weyl")
    copy = tmp_path / "copy.yaml"
    copy.write_text(path.read_text())
    assert SC.load_scenario(copy).checks == SC.load_scenario("sphere-weyl").checks


def test_model_for_sphere_weyl():
    model = SC.build_model(SC.load_scenario("sphere-weyl"))
    assert model.chart.dimension == 2 and model.closed and model.euler_characteristic == 2
    assert model.family is not None and model.family.coefficients == (-0.5, -0.5, 0.5)


def test_model_randomness_is_seeded():
    a = SC.build_model(SC.load_scenario("sphere-weyl"))
    b = SC.build_model(SC.load_scenario("sphere-weyl"))
    c = SC.build_model(SC.load_scenario("sphere-weyl").with_overrides(seed=99))
    x = np.array([[1.0, 2.0]])
    assert np.array_equal(a.phi.evaluate(x), b.phi.evaluate(x))
    assert not np.allclose(a.phi.evaluate(x), c.phi.evaluate(x))


def test_octant_polygon_geometry():
    model = SC.build_model(SC.load_scenario("octant-triangle-local-gb"))
    poly = SC.build_polygon(model, "octant", "test")
    assert np.allclose(poly.exterior_angles(model.metric), math.pi / 2, atol=1e-8)
    rep = local_gb(SurfaceGeometry(model.metric, engine=model.engine), None, poly)
    assert rep.interior == pytest.approx(math.pi / 2, abs=1e-6)
    assert abs(rep.boundary) < 1e-6


def test_custom_polygon_matches_named_square():
    data = doc(manifold={"kind": "plane", "lower": [-2, -2], "upper": [2, 2]}, checks=[
        {"local-gb": {"polygon": {"shape": "custom",
                                  "segments": [["2*t - 1", "-1"], ["1", "2*t - 1"], ["1 - 2*t", "1"], ["-1", "1 - 2*t"]],
                                  "interior": ["2*s - 1", "2*t - 1"]}}}])
    model = SC.build_model(SC.parse_scenario(data))
    custom = SC.build_polygon(model, data["checks"][0]["local-gb"]["polygon"], "custom")
    square = SC.build_polygon(model, {"shape": "square"}, "square")
    assert custom.signed_coordinate_area() == pytest.approx(square.signed_coordinate_area(), abs=1e-12)
    assert np.allclose(custom.exterior_angles(model.metric), square.exterior_angles(model.metric))


def test_polygon_outside_chart_is_rejected_while_parsing():
    err = error_of(doc(manifold={"kind": "plane", "lower": [-1, -1], "upper": [1, 1]},
                       checks=[{"local-gb": {"polygon": {"shape": "square", "half_width": 1.5}}}]))
    assert err.where == "checks[0].local-gb.polygon"


def test_expression_language():
    e = Expression("2*u^2 - sin(pi*v) + exp(0)", ("u", "v"))
    assert float(e(jnp.array([3.0, 0.5]))) == pytest.approx(18.0 - 1.0 + 1.0)
    with pytest.raises(ExpressionError):
        Expression("__import__('os')", ("u",))
    with pytest.raises(ExpressionError):
        Expression("u +", ("u",))
