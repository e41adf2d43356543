"""Declarative scenario files: parsing, validation and model construction.

A scenario is a YAML mapping::

    name: sphere-weyl
    seed: 7
    manifold: {kind: sphere}
    metric: {ellipsoid_axes: [1, 1, 1.2]}          # optional
    connection: {kind: weyl, phi: {random: {amplitude: 0.3}}}
    numerics: {quad: 64, fd_step: 1.0e-3}
    checks:
      - euler-number
      - global-gb: {tolerance: 1.0e-5}

Every problem found while loading is reported as a :class:`ScenarioError`
naming the offending field, before any numerical work starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np
import yaml

from . import manifolds as M
from .compendium import AnsatzConnection, QuasiEinsteinParams, solve_coefficients
from .errors import EulerClassError
from .expr import Expression, ExpressionError
from .fields import Chart, CurveSegment, DerivativeEngine, SmoothField
from .gaussbonnet import CurvedPolygon, levi_civita

__all__ = [
    "ScenarioError",
    "Scenario",
    "CheckSpec",
    "Model",
    "load_scenario",
    "parse_scenario",
    "bundled_scenarios",
    "bundled_path",
    "build_model",
    "build_connection",
    "build_polygon",
    "build_one_form",
]

MANIFOLD_KINDS = ("sphere", "stereographic-sphere", "flat-torus", "conformal-torus", "product-of-spheres",
                  "plane", "custom-chart")
CONNECTION_KINDS = ("levi-civita", "ansatz", "weyl", "density", "quasi-einstein", "explicit")
DEFAULT_COORDINATES = ("u", "v", "s", "t")


class ScenarioError(EulerClassError, ValueError):
    """Scenario text that does not parse or does not validate."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class CheckSpec:
    name: str
    params: dict[str, Any]
    where: str


@dataclass(frozen=True)
class Numerics:
    quad: int = 64
    curve_quad: int = 128
    fd_step: float = 1e-3
    richardson: bool = True
    exact_derivatives: bool = False
    points: int = 50

    def engine(self) -> DerivativeEngine:
        if self.exact_derivatives:
            return DerivativeEngine("exact")
        return DerivativeEngine("fd", self.fd_step, self.richardson)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    seed: int
    manifold: dict[str, Any]
    metric: dict[str, Any]
    connection: dict[str, Any]
    numerics: Numerics
    checks: tuple[CheckSpec, ...]
    source: str = ""

    def with_overrides(self, seed: int | None = None, quad: int | None = None, fd_step: float | None = None,
                       exact: bool | None = None) -> "Scenario":
        num = self.numerics
        num = Numerics(quad if quad is not None else num.quad, num.curve_quad,
                       fd_step if fd_step is not None else num.fd_step, num.richardson,
                       exact if exact is not None else num.exact_derivatives, num.points)
        return Scenario(self.name, self.description, seed if seed is not None else self.seed, self.manifold,
                        self.metric, self.connection, num, self.checks, self.source)


# ---------------------------------------------------------------------------
# parsing

def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(where, f"expected a mapping, got {type(value).__name__}")
    return value


def _number(value, where: str, positive: bool = False, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(where, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ScenarioError(where, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(where, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ScenarioError(where, f"expected a positive number, got {value!r}")
    return int(value) if integer else float(value)


def _unknown_keys(mapping: dict, allowed, where: str) -> None:
    extra = sorted(set(mapping) - set(allowed))
    if extra:
        raise ScenarioError(where, f"unknown field(s) {', '.join(map(repr, extra))}; allowed: {', '.join(sorted(allowed))}")


def parse_scenario(data: Any, source: str = "<scenario>") -> Scenario:
    """Validate a decoded YAML document and return a :class:`Scenario`."""
    from .checks import CHECKS  # registry lives with the check implementations

    doc = _require_mapping(data, source)
    _unknown_keys(doc, ("name", "description", "seed", "manifold", "metric", "connection", "numerics", "checks"),
                  source)
    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ScenarioError("name", "a non-empty scenario name is required")
    seed = _number(doc.get("seed", 0), "seed", integer=True)
    manifold = _require_mapping(doc.get("manifold"), "manifold")
    kind = manifold.get("kind")
    if kind not in MANIFOLD_KINDS:
        raise ScenarioError("manifold.kind", f"expected one of {', '.join(MANIFOLD_KINDS)}, got {kind!r}")
    metric = _require_mapping(doc.get("metric"), "metric")
    connection = _require_mapping(doc.get("connection", {"kind": "levi-civita"}), "connection")
    ckind = connection.get("kind", "levi-civita")
    if ckind not in CONNECTION_KINDS:
        raise ScenarioError("connection.kind", f"expected one of {', '.join(CONNECTION_KINDS)}, got {ckind!r}")
    raw_num = _require_mapping(doc.get("numerics"), "numerics")
    _unknown_keys(raw_num, ("quad", "curve_quad", "fd_step", "richardson", "exact_derivatives", "points"), "numerics")
    num = Numerics(
        quad=_number(raw_num.get("quad", 64), "numerics.quad", positive=True, integer=True),
        curve_quad=_number(raw_num.get("curve_quad", 128), "numerics.curve_quad", positive=True, integer=True),
        fd_step=_number(raw_num.get("fd_step", 1e-3), "numerics.fd_step", positive=True),
        richardson=bool(raw_num.get("richardson", True)),
        exact_derivatives=bool(raw_num.get("exact_derivatives", False)),
        points=_number(raw_num.get("points", 50), "numerics.points", positive=True, integer=True),
    )
    raw_checks = doc.get("checks")
    if not isinstance(raw_checks, list) or not raw_checks:
        raise ScenarioError("checks", "a non-empty list of checks is required")
    checks = []
    for k, entry in enumerate(raw_checks):
        where = f"checks[{k}]"
        if isinstance(entry, str):
            cname, params = entry, {}
        elif isinstance(entry, dict) and len(entry) == 1:
            cname, params = next(iter(entry.items()))
            params = _require_mapping(params, f"{where}.{cname}")
        else:
            raise ScenarioError(where, "each check is a name or a one-key mapping {name: {parameters}}")
        if cname not in CHECKS:
            raise ScenarioError(where, f"unknown check {cname!r}; known checks: {', '.join(CHECKS)}")
        _unknown_keys(params, CHECKS[cname].parameters, f"{where}.{cname}")
        checks.append(CheckSpec(cname, dict(params), f"{where}.{cname}"))
    scenario = Scenario(name.strip(), str(doc.get("description", "")), seed, manifold, metric, connection, num,
                        tuple(checks), source)
    validate(scenario)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario from a file path or a bundled scenario name."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_path(str(path))
        if bundled is None:
            raise ScenarioError(str(path), "no such file and no bundled scenario with that name")
        p = bundled
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{p}:{mark.line + 1}:{mark.column + 1}" if mark is not None else str(p)
        raise ScenarioError(loc, f"YAML syntax error ({getattr(exc, 'problem', exc)})") from None
    return parse_scenario(data, str(p))


def _scenario_dir():
    return resources.files("eulerclass") / "scenarios"


def bundled_scenarios() -> dict[str, Path]:
    """Bundled scenario names mapped to their files."""
    out = {}
    for entry in sorted(_scenario_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            out[entry.name[:-5]] = Path(str(entry))
    return out


def bundled_path(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".yaml") else name
    return bundled_scenarios().get(stem)


# ---------------------------------------------------------------------------
# validation (dimension, closedness and connection prerequisites)

def _manifold_facts(manifold: dict) -> tuple[int, bool, int | None]:
    """Dimension, closedness and Euler characteristic of a manifold spec."""
    kind = manifold["kind"]
    if kind in ("sphere",):
        return 2, True, 2
    if kind in ("flat-torus", "conformal-torus"):
        dim = _number(manifold.get("dimension", 2), "manifold.dimension", positive=True, integer=True)
        return dim, True, 0
    if kind == "product-of-spheres":
        return 4, True, 4
    if kind in ("stereographic-sphere", "plane"):
        return 2, False, None
    coords = manifold.get("coordinates")
    lower = manifold.get("lower")
    if not isinstance(lower, list) or not lower:
        raise ScenarioError("manifold.lower", "custom charts need a list of lower bounds")
    if coords is not None and (not isinstance(coords, list) or len(coords) != len(lower)):
        raise ScenarioError("manifold.coordinates", "one coordinate name per dimension is required")
    closed = bool(manifold.get("closed", False))
    chi = manifold.get("euler_characteristic")
    if chi is not None:
        chi = _number(chi, "manifold.euler_characteristic", integer=True)
    return len(lower), closed, chi


def validate(sc: Scenario) -> None:
    from .checks import CHECKS

    dim, closed, _ = _manifold_facts(sc.manifold)
    for spec in sc.checks:
        check = CHECKS[spec.name]
        if check.dimensions is not None and dim not in check.dimensions:
            raise ScenarioError(spec.where, f"needs a manifold of dimension {' or '.join(map(str, check.dimensions))}, "
                                            f"this one has dimension {dim}")
        if check.needs_closed and not closed:
            raise ScenarioError(spec.where, "needs a closed manifold (sphere, torus, product of spheres, "
                                            "or a custom chart declared closed)")
        if check.needs_family:
            conn = spec.params.get("connection", sc.connection)
            if _require_mapping(conn, spec.where + ".connection").get("kind", "levi-civita") == "explicit":
                raise ScenarioError(spec.where, "needs a connection from the shifted Levi-Civita family, "
                                                "not an explicit table")
    # build everything symbolic now so expression errors surface before any numerics
    build_model(sc, dry_run=True)


# ---------------------------------------------------------------------------
# model construction

@dataclass(eq=False)
class Model:
    """Everything a check needs: chart, metric, derivative engine and the connection."""

    scenario: Scenario
    chart: Chart
    metric: SmoothField
    engine: DerivativeEngine
    coordinates: tuple[str, ...]
    closed: bool
    euler_characteristic: int | None
    embedding: Callable | None
    connection: SmoothField
    family: AnsatzConnection | None
    phi: SmoothField | None
    connection_spec: dict
    _cache: dict = field(default_factory=dict)

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.scenario.seed, salt])

    def connection_for(self, spec: dict | None, where: str) -> tuple[SmoothField, AnsatzConnection | None, SmoothField | None]:
        """Connection of a check-level override, or the scenario's own."""
        if spec is None:
            return self.connection, self.family, self.phi
        key = repr(sorted(spec.items()))
        if key not in self._cache:
            self._cache[key] = build_connection(self, spec, where, salt=len(self._cache) + 1)
        return self._cache[key]


def _chart_and_metric(sc: Scenario):
    m, meta = sc.manifold, sc.metric
    kind = m["kind"]
    dim, closed, chi = _manifold_facts(m)
    orientation = _number(m.get("orientation", 1), "manifold.orientation", integer=True)
    if orientation not in (1, -1):
        raise ScenarioError("manifold.orientation", "orientation must be +1 or -1")
    embedding = None
    coords = tuple(DEFAULT_COORDINATES[:dim]) if dim <= 4 else tuple(f"x{k}" for k in range(dim))
    if kind == "sphere":
        _unknown_keys(m, ("kind", "orientation"), "manifold")
        chart = M.sphere_chart(orientation)
        metric = M.round_sphere_metric(chart)
        embedding = M.sphere_embedding
    elif kind == "stereographic-sphere":
        _unknown_keys(m, ("kind", "orientation", "radius"), "manifold")
        radius = _number(m.get("radius", 3.0), "manifold.radius", positive=True)
        chart = M.stereographic_chart(radius).with_orientation(orientation)
        metric = M.stereographic_sphere_metric(chart)
        embedding = M.stereographic_embedding
    elif kind in ("flat-torus", "conformal-torus"):
        allowed = ("kind", "orientation", "dimension") + (("log_factor",) if kind == "conformal-torus" else ())
        _unknown_keys(m, allowed, "manifold")
        chart = M.torus_chart(dim).with_orientation(orientation)
        metric = M.flat_metric(chart)
        if kind == "conformal-torus":
            lf = m.get("log_factor", {"random": {}})
            metric = M.conformal_metric(metric, _scalar_function(lf, coords, chart, "manifold.log_factor", sc), "conformal")
    elif kind == "product-of-spheres":
        _unknown_keys(m, ("kind", "orientation"), "manifold")
        chart = M.product_spheres_chart().with_orientation(orientation)
        metric = M.product_spheres_metric(chart)
    elif kind == "plane":
        _unknown_keys(m, ("kind", "orientation", "lower", "upper"), "manifold")
        lower = [_number(v, f"manifold.lower[{k}]") for k, v in enumerate(m.get("lower", [-2.0, -2.0]))]
        upper = [_number(v, f"manifold.upper[{k}]") for k, v in enumerate(m.get("upper", [2.0, 2.0]))]
        if len(lower) != 2 or len(upper) != 2:
            raise ScenarioError("manifold", "a plane chart needs two lower and two upper bounds")
        chart = _make_chart(lower, upper, (False, False), orientation, "plane")
        metric = M.flat_metric(chart)
    else:
        _unknown_keys(m, ("kind", "orientation", "coordinates", "lower", "upper", "periodic", "closed",
                          "euler_characteristic"), "manifold")
        lower = [_number(v, f"manifold.lower[{k}]") for k, v in enumerate(m["lower"])]
        upper = m.get("upper")
        if not isinstance(upper, list) or len(upper) != dim:
            raise ScenarioError("manifold.upper", "one upper bound per coordinate is required")
        upper = [_number(v, f"manifold.upper[{k}]") for k, v in enumerate(upper)]
        periodic = m.get("periodic", [False] * dim)
        if not isinstance(periodic, list) or len(periodic) != dim:
            raise ScenarioError("manifold.periodic", "one periodicity flag per coordinate is required")
        if m.get("coordinates") is not None:
            coords = tuple(str(c) for c in m["coordinates"])
            if len(set(coords)) != dim:
                raise ScenarioError("manifold.coordinates", "coordinate names must be distinct")
        chart = _make_chart(lower, upper, tuple(bool(p) for p in periodic), orientation, "custom")
        if "components" not in meta:
            raise ScenarioError("metric.components", "custom charts need explicit metric components")
        metric = None
    _unknown_keys(meta, ("components", "ellipsoid_axes", "log_conformal_factor"), "metric")
    if "components" in meta:
        metric = _matrix_field(meta["components"], coords, chart, "metric.components", dim)
    if "ellipsoid_axes" in meta:
        if kind != "sphere":
            raise ScenarioError("metric.ellipsoid_axes", "ellipsoid metrics live on the sphere chart")
        axes = meta["ellipsoid_axes"]
        if not isinstance(axes, list) or len(axes) != 3:
            raise ScenarioError("metric.ellipsoid_axes", "three semi-axes are required")
        metric = M.ellipsoid_metric(tuple(_number(a, f"metric.ellipsoid_axes[{k}]", positive=True)
                                          for k, a in enumerate(axes)), chart)
    if "log_conformal_factor" in meta:
        fn = _scalar_function(meta["log_conformal_factor"], coords, chart, "metric.log_conformal_factor", sc,
                              embedding=embedding)
        metric = M.conformal_metric(metric, fn)
    return chart, metric, coords, closed, chi, embedding


def _make_chart(lower, upper, periodic, orientation, name) -> Chart:
    try:
        return Chart(tuple(lower), tuple(upper), periodic, orientation, name)
    except EulerClassError as exc:
        raise ScenarioError("manifold", str(exc)) from None


def _expression(text, coords, where) -> Expression:
    try:
        return Expression(text, coords, where)
    except ExpressionError as exc:
        raise ScenarioError(where, str(exc).split(": ", 1)[-1]) from None


def _matrix_field(rows, coords, chart, where, dim) -> SmoothField:
    if not isinstance(rows, list) or len(rows) != dim or any(not isinstance(r, list) or len(r) != dim for r in rows):
        raise ScenarioError(where, f"expected a {dim}x{dim} list of expressions")
    exprs = [[_expression(e, coords, f"{where}[{i}][{j}]") for j, e in enumerate(r)] for i, r in enumerate(rows)]
    for i in range(dim):
        for j in range(i):
            if exprs[i][j].text.replace(" ", "") != exprs[j][i].text.replace(" ", ""):
                raise ScenarioError(where, f"metric must be symmetric: entry [{i}][{j}] differs from [{j}][{i}]")

    def fn(x):
        return jnp.stack([jnp.stack([e(x) for e in row]) for row in exprs])

    return SmoothField(chart, fn, (dim, dim), slots=("_i", "_j"), name="metric")


def _scalar_function(spec, coords, chart, where, sc: Scenario, embedding=None) -> Callable:
    """A scalar callback from an expression or ``{random: {modes, amplitude}}``."""
    if isinstance(spec, dict):
        _unknown_keys(spec, ("random",), where)
        opts = _require_mapping(spec.get("random"), f"{where}.random")
        _unknown_keys(opts, ("modes", "amplitude"), f"{where}.random")
        modes = _number(opts.get("modes", 2), f"{where}.random.modes", positive=True, integer=True)
        amp = _number(opts.get("amplitude", 0.2), f"{where}.random.amplitude")
        rng = np.random.default_rng([sc.seed, 101])
        if all(chart.periodic):
            return M.random_fourier_function(chart.dimension, rng, modes, amp)
        if embedding is not None:
            q = M.random_quadratic(rng, amp)
            return lambda x: q(embedding(x))
        q = M.random_quadratic(rng, amp, chart.dimension)
        return q
    return _expression(spec, coords, where)


def build_one_form(model_or_parts, spec, where: str, salt: int = 0) -> SmoothField:
    """A 1-form from ``{random: ...}``, ``{components: [...]}`` or ``{potential: expr}``."""
    chart, metric, coords, embedding, seed = model_or_parts
    spec = _require_mapping(spec, where)
    keys = set(spec)
    if len(keys) != 1 or not keys <= {"random", "components", "potential"}:
        raise ScenarioError(where, "give exactly one of 'random', 'components' or 'potential'")
    n = chart.dimension
    if "components" in spec:
        comps = spec["components"]
        if not isinstance(comps, list) or len(comps) != n:
            raise ScenarioError(f"{where}.components", f"expected {n} expressions")
        exprs = [_expression(e, coords, f"{where}.components[{k}]") for k, e in enumerate(comps)]
        return SmoothField(chart, lambda x: jnp.stack([e(x) for e in exprs]), (n,), slots=("_i",), name="phi")
    if "potential" in spec:
        pot = _expression(spec["potential"], coords, f"{where}.potential")
        return M.exact_form(chart, pot, "phi")
    opts = _require_mapping(spec["random"], f"{where}.random")
    _unknown_keys(opts, ("modes", "amplitude"), f"{where}.random")
    amp = _number(opts.get("amplitude", 0.3), f"{where}.random.amplitude")
    modes = _number(opts.get("modes", 2), f"{where}.random.modes", positive=True, integer=True)
    rng = np.random.default_rng([seed, 211, salt])
    if chart.name == "sphere":
        return M.random_sphere_form(chart, metric, embedding, rng, amp)
    if chart.name == "sphere x sphere":
        return M.random_product_sphere_form(chart, rng, amp)
    if all(chart.periodic):
        return M.random_fourier_form(chart, rng, modes, amp)
    if embedding is not None:
        f, h = M.random_quadratic(rng, amp), M.random_quadratic(rng, amp)
        eps = jnp.array([[0.0, 1.0], [-1.0, 0.0]])
        return SmoothField(chart, lambda x: jax.grad(lambda y: f(embedding(y)))(x)
                           + jax.grad(lambda y: h(embedding(y)))(x) @ eps, (n,), slots=("_i",), name="phi")
    q = M.random_quadratic(rng, amp, n)
    return M.exact_form(chart, q, "phi")


def build_connection(model: "Model", spec: dict, where: str, salt: int = 0):
    """Connection field, family member (when applicable) and 1-form of a connection spec."""
    spec = _require_mapping(spec, where)
    kind = spec.get("kind", "levi-civita")
    chart, g, eng = model.chart, model.metric, model.engine
    parts = (chart, g, model.coordinates, model.embedding, model.scenario.seed)
    n = chart.dimension
    allowed = {
        "levi-civita": ("kind",),
        "ansatz": ("kind", "a", "b", "c", "phi", "alpha", "beta", "gamma", "seed"),
        "weyl": ("kind", "phi", "seed"),
        "density": ("kind", "m", "log_density"),
        "quasi-einstein": ("kind", "m", "branch", "phi", "seed"),
        "explicit": ("kind", "table"),
    }
    if kind not in allowed:
        raise ScenarioError(f"{where}.kind", f"expected one of {', '.join(CONNECTION_KINDS)}, got {kind!r}")
    _unknown_keys(spec, allowed[kind], where)
    if "seed" in spec:
        salt = 10_000 + _number(spec["seed"], f"{where}.seed", integer=True)
    rng = np.random.default_rng([model.scenario.seed, 307, salt])

    def coefficient(key):
        v = spec.get(key, 0.0)
        if v == "random":
            return float(rng.uniform(-1.0, 1.0))
        return _number(v, f"{where}.{key}")

    def phi_field(key="phi"):
        if key not in spec:
            raise ScenarioError(f"{where}.{key}", "a 1-form specification is required")
        return build_one_form(parts, spec[key], f"{where}.{key}", salt)

    if kind == "levi-civita":
        zero = SmoothField.constant(chart, np.zeros(n), slots=("_i",), name="zero")
        fam = AnsatzConnection.from_coefficients(g, zero, 0.0, 0.0, 0.0, eng)
        return levi_civita(g, eng), fam, None
    if kind == "explicit":
        table = spec.get("table")
        if (not isinstance(table, list) or len(table) != n
                or any(not isinstance(r, list) or len(r) != n for r in table)
                or any(not isinstance(e, list) or len(e) != n for r in table for e in r)):
            raise ScenarioError(f"{where}.table", f"expected an {n}x{n}x{n} nested list of expressions (i, k, j)")
        exprs = [[[_expression(e, model.coordinates, f"{where}.table[{i}][{k}][{j}]") for j, e in enumerate(row)]
                  for k, row in enumerate(block)] for i, block in enumerate(table)]
        fn = lambda x: jnp.stack([jnp.stack([jnp.stack([e(x) for e in row]) for row in block]) for block in exprs])
        return SmoothField(chart, fn, (n, n, n), slots=("_i", "^k", "_j"), name="explicit"), None, None
    if kind == "ansatz":
        separate = [k for k in ("alpha", "beta", "gamma") if k in spec]
        if separate:
            if len(separate) != 3 or any(k in spec for k in ("a", "b", "c", "phi")):
                raise ScenarioError(where, "give either a, b, c with phi, or all three of alpha, beta, gamma")
            forms = [build_one_form(parts, spec[k], f"{where}.{k}", salt + 17 * (i + 1))
                     for i, k in enumerate(("alpha", "beta", "gamma"))]
            fam = AnsatzConnection(g, *forms, engine=eng)
            return fam.connection, fam, None
        phi = phi_field()
        fam = AnsatzConnection.from_coefficients(g, phi, coefficient("a"), coefficient("b"), coefficient("c"), eng)
        return fam.connection, fam, phi
    if kind == "weyl":
        phi = phi_field()
        fam = AnsatzConnection.from_coefficients(g, phi, -0.5, -0.5, 0.5, eng)
        return fam.connection, fam, phi
    if kind == "density":
        m = _number(spec.get("m", 1.0), f"{where}.m")
        if "log_density" not in spec:
            raise ScenarioError(f"{where}.log_density", "an expression for log of the length density is required")
        logd = _expression(spec["log_density"], model.coordinates, f"{where}.log_density")
        phi = M.exact_form(chart, lambda x: -logd(x), "df")
        fam = AnsatzConnection.from_coefficients(g, phi, m - 1.0, m - 1.0, m + 1.0, eng)
        return fam.connection, fam, phi
    # quasi-einstein
    try:
        params = QuasiEinsteinParams.from_weight(n, spec.get("m", "inf"))
    except (EulerClassError, ValueError) as exc:
        raise ScenarioError(f"{where}.m", str(exc)) from None
    sol = solve_coefficients(n, params)
    if not sol.solutions:
        raise ScenarioError(f"{where}.m", sol.status)
    branch = spec.get("branch", "plus")
    if branch not in ("plus", "minus"):
        raise ScenarioError(f"{where}.branch", "expected 'plus' or 'minus'")
    b, c = sol.solutions[0 if branch == "plus" or len(sol.solutions) == 1 else 1]
    phi = phi_field()
    fam = AnsatzConnection.from_coefficients(g, phi, b, b, c, eng)
    return fam.connection, fam, phi


def build_model(sc: Scenario, dry_run: bool = False) -> Model:
    """Construct chart, metric and connection (pure construction; no evaluation)."""
    chart, metric, coords, closed, chi, embedding = _chart_and_metric(sc)
    eng = sc.numerics.engine()
    model = Model(sc, chart, metric, eng, coords, closed, chi, embedding, None, None, None, sc.connection)
    model.connection, model.family, model.phi = build_connection(model, sc.connection, "connection")
    for spec in sc.checks:
        if "connection" in spec.params:
            model.connection_for(_require_mapping(spec.params["connection"], spec.where + ".connection"),
                                 spec.where + ".connection")
        if "polygon" in spec.params:
            build_polygon(model, spec.params["polygon"], spec.where + ".polygon")
        if isinstance(spec.params.get("b_term"), dict):
            build_b_term(model, spec.params["b_term"], spec.where + ".b_term")
    return model


# ---------------------------------------------------------------------------
# polygons and boundary terms

def _segment(chart, fn, name) -> CurveSegment:
    return CurveSegment(chart, fn, name)


def build_polygon(model: Model, spec, where: str) -> CurvedPolygon:
    """Curved polygon from a named shape or explicit segment expressions."""
    chart = model.chart
    if chart.dimension != 2:
        raise ScenarioError(where, "polygons live on surfaces")
    if isinstance(spec, str):
        spec = {"shape": spec}
    spec = _require_mapping(spec, where)
    shape = spec.get("shape")
    half_pi = 0.5 * math.pi
    if shape == "octant":
        _unknown_keys(spec, ("shape",), where)
        # the octant x, y, z >= 0 of the unit sphere in stereographic coordinates
        segs = (
            _segment(chart, lambda t: jnp.array([jnp.cos(half_pi * t), jnp.sin(half_pi * t)]), "equator"),
            _segment(chart, lambda t: jnp.array([0.0 * t, 1.0 - t]), "meridian 90"),
            _segment(chart, lambda t: jnp.array([t, 0.0 * t]), "meridian 0"),
        )
        interior = lambda s, t: jnp.array([s * jnp.cos(half_pi * t), s * jnp.sin(half_pi * t)])
    elif shape == "latitude-cap":
        _unknown_keys(spec, ("shape", "polar_angle"), where)
        theta0 = _number(spec.get("polar_angle", 1.0), f"{where}.polar_angle", positive=True)
        if theta0 >= math.pi:
            raise ScenarioError(f"{where}.polar_angle", "polar angle must lie in (0, pi)")
        r0 = math.tan(0.5 * theta0)
        two_pi = 2.0 * math.pi
        segs = (_segment(chart, lambda t: r0 * jnp.array([jnp.cos(two_pi * t), jnp.sin(two_pi * t)]),
                         "latitude circle"),)
        interior = lambda s, t: r0 * s * jnp.array([jnp.cos(two_pi * t), jnp.sin(two_pi * t)])
    elif shape == "square":
        _unknown_keys(spec, ("shape", "center", "half_width"), where)
        cx, cy = [_number(v, f"{where}.center") for v in spec.get("center", [0.0, 0.0])]
        w = _number(spec.get("half_width", 1.0), f"{where}.half_width", positive=True)
        corners = [(cx - w, cy - w), (cx + w, cy - w), (cx + w, cy + w), (cx - w, cy + w)]

        def edge(p, q):
            p, q = jnp.array(p), jnp.array(q)
            return lambda t: p + t * (q - p)

        segs = tuple(_segment(chart, edge(corners[k], corners[(k + 1) % 4]), f"edge {k}") for k in range(4))
        interior = lambda s, t: jnp.array([cx - w + 2 * w * s, cy - w + 2 * w * t])
    elif shape == "custom":
        _unknown_keys(spec, ("shape", "segments", "interior"), where)
        raw = spec.get("segments")
        if not isinstance(raw, list) or not raw:
            raise ScenarioError(f"{where}.segments", "a list of [u(t), v(t)] expression pairs is required")
        segs = []
        for k, pair in enumerate(raw):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ScenarioError(f"{where}.segments[{k}]", "expected [u(t), v(t)]")
            ex = [_expression(e, ("t",), f"{where}.segments[{k}][{c}]") for c, e in enumerate(pair)]
            segs.append(_segment(chart, lambda t, ex=ex: jnp.stack([ex[0](jnp.atleast_1d(t)), ex[1](jnp.atleast_1d(t))]), f"segment {k}"))
        ipair = spec.get("interior")
        if not isinstance(ipair, list) or len(ipair) != 2:
            raise ScenarioError(f"{where}.interior", "expected [u(s, t), v(s, t)] mapping the unit square onto the region")
        iex = [_expression(e, ("s", "t"), f"{where}.interior[{c}]") for c, e in enumerate(ipair)]
        interior = lambda s, t: jnp.stack([iex[0](jnp.array([s, t])), iex[1](jnp.array([s, t]))])
        segs = tuple(segs)
    else:
        raise ScenarioError(f"{where}.shape", f"expected octant, latitude-cap, square or custom, got {shape!r}")
    try:
        poly = CurvedPolygon(segs, interior, str(shape))
        for s in poly.segments:
            chart.check_points(s.jet(np.linspace(0.0, 1.0, 9), DerivativeEngine("exact"))[0])
    except EulerClassError as exc:
        raise ScenarioError(where, str(exc)) from None
    return poly


def build_b_term(model: Model, spec, where: str) -> SmoothField | None:
    """Explicit divergence 1-form for local Gauss-Bonnet (``None`` means no term)."""
    if spec in (None, "none"):
        return None
    spec = _require_mapping(spec, where)
    if "log_density" in spec:
        _unknown_keys(spec, ("log_density",), where)
        logd = _expression(spec["log_density"], model.coordinates, f"{where}.log_density")
        return M.exact_form(model.chart, lambda x: -logd(x), "-d log density")
    parts = (model.chart, model.metric, model.coordinates, model.embedding, model.scenario.seed)
    return build_one_form(parts, spec, where, salt=997)
