"""Registry of the verifications a scenario can request.

Each check receives a built :class:`~eulerclass.scenario.Model` plus its
parameters and returns a :class:`CheckResult`: the computed value, the
reference it is compared against and where that reference comes from,
the residual, the tolerance and the wall time.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np

from . import bundle as BU
from . import compendium as C
from . import gaussbonnet as GB
from .errors import NumericalBlowup, RegistryError
from .exterior import FormMatrix, pfaffian, pfaffian_multi, scalar_pfaffian
from .fields import SmoothField, gauss_legendre, integrate_function, sqrt_det

__all__ = ["CheckResult", "Check", "CHECKS", "run_check", "explain", "check_names"]

COMMON = ("tolerance", "connection")


@dataclass
class CheckResult:
    """Outcome of one check."""

    name: str
    value: float
    reference: float
    provenance: str
    residual: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)
    density: np.ndarray | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": _plain(self.value),
            "reference": _plain(self.reference),
            "provenance": self.provenance,
            "residual": _plain(self.residual),
            "tolerance": _plain(self.tolerance),
            "pass": bool(self.passed),
            "seconds": round(float(self.seconds), 3),
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in np.asarray(v, dtype=object).ravel()] if isinstance(v, np.ndarray) else [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


@dataclass(frozen=True)
class Check:
    name: str
    run: Callable
    summary: str
    formula: str
    citation: str
    tolerance: float
    parameters: tuple[str, ...]
    dimensions: tuple[int, ...] | None = None
    needs_closed: bool = False
    needs_family: bool = False


CHECKS: dict[str, Check] = {}


def _register(name, summary, formula, citation, tolerance, parameters=(), dimensions=None, needs_closed=False,
              needs_family=False):
    def deco(fn):
        CHECKS[name] = Check(name, fn, summary, formula, citation, tolerance, COMMON + tuple(parameters),
                             dimensions, needs_closed, needs_family)
        return fn

    return deco


def check_names() -> list[str]:
    return list(CHECKS)


def explain(name: str) -> str:
    """Human-readable description of a check: what it computes and where it comes from."""
    if name not in CHECKS:
        raise RegistryError(f"unknown check {name!r}; known checks: {', '.join(CHECKS)}")
    c = CHECKS[name]
    lines = [f"{c.name}: {c.summary}", "", f"  computes:   {c.formula}", f"  reference:  {c.citation}",
             f"  tolerance:  {c.tolerance:g} (default)"]
    extra = [p for p in c.parameters if p not in COMMON]
    if extra:
        lines.append(f"  parameters: {', '.join(extra)} (plus tolerance, connection)")
    reqs = []
    if c.dimensions:
        reqs.append("dimension " + " or ".join(map(str, c.dimensions)))
    if c.needs_closed:
        reqs.append("closed manifold")
    if c.needs_family:
        reqs.append("connection from the shifted Levi-Civita family")
    if reqs:
        lines.append(f"  requires:   {', '.join(reqs)}")
    return "\n".join(lines)


def run_check(model, spec, index: int = 0) -> CheckResult:
    """Run one :class:`~eulerclass.scenario.CheckSpec` against ``model``."""
    check = CHECKS[spec.name]
    params = dict(spec.params)
    tol = float(params.pop("tolerance", check.tolerance))
    override = params.pop("connection", None)
    conn, family, phi = model.connection_for(override, spec.where + ".connection")
    ctx = _Context(model, conn, family, phi, params, tol, model.rng(1000 + index),
                   (override or model.connection_spec).get("kind", "levi-civita"))
    start = time.perf_counter()
    result = check.run(ctx)
    result.seconds = time.perf_counter() - start
    for key in ("value", "reference", "residual"):
        v = getattr(result, key)
        if isinstance(v, float) and not math.isfinite(v):
            raise NumericalBlowup(f"{spec.where}: {key} is not finite")
    return result


@dataclass
class _Context:
    model: Any
    connection: SmoothField
    family: C.AnsatzConnection | None
    phi: SmoothField | None
    params: dict
    tolerance: float
    rng: np.random.Generator
    kind: str

    @property
    def is_levi_civita(self) -> bool:
        return self.kind == "levi-civita"

    def points(self, default: int | None = None) -> np.ndarray:
        count = int(self.params.get("points", default or self.model.scenario.numerics.points))
        return self.model.chart.random_points(count, self.rng)

    def quad(self) -> int:
        return int(self.params.get("quad", self.model.scenario.numerics.quad))

    def surface(self) -> GB.SurfaceGeometry:
        m = self.model
        return GB.SurfaceGeometry(m.metric, None if self.is_levi_civita else self.connection, m.engine,
                                  m.scenario.name)

    def bundle(self) -> BU.BundleGeometry:
        return BU.tangent_bundle(self.model.metric, self.connection, self.model.engine, self.model.scenario.name)


def _result(name, value, reference, provenance, residual, tol, passed=None, **kw) -> CheckResult:
    passed = residual <= tol if passed is None else passed
    return CheckResult(name, float(value), float(reference), provenance, float(residual), float(tol), bool(passed), **kw)


def _density_grid(model, values_fn, per_axis: int = 41) -> np.ndarray | None:
    """Table ``(u, v, density)`` on a uniform grid of interior points (surfaces only)."""
    chart = model.chart
    if chart.dimension != 2:
        return None
    axes = [lo + (np.arange(per_axis) + 0.5) / per_axis * (hi - lo) for lo, hi in zip(chart.lower, chart.upper)]
    U, V = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([U.ravel(), V.ravel()], axis=-1)
    vals = np.asarray(values_fn(pts)).reshape(len(pts))
    return np.column_stack([pts, vals])


# ---------------------------------------------------------------------------
# Euler number and Pfaffian identities

@_register(
    "euler-number",
    "integrated Euler form of the tangent bundle equals the Euler characteristic",
    "integral over M of (2 pi)^-k Pf(Omega - 1/4 (g^-1 nabla g)^2) in an oriented orthonormal frame",
    "the main theorem: the corrected Pfaffian represents the Euler class for any connection",
    1e-5, ("quad", "corrected", "expected"), needs_closed=True)
def _euler_number(ctx: _Context) -> CheckResult:
    B = ctx.bundle()
    corrected = bool(ctx.params.get("corrected", True))
    rep = BU.euler_number(B, ctx.quad(), corrected)
    expected = ctx.params.get("expected", ctx.model.euler_characteristic)
    if expected is None:
        expected = rep.nearest
    residual = abs(rep.value - expected)
    form = BU.euler_form(B, corrected)
    density = _density_grid(ctx.model, lambda p: form.evaluate(p)[:, 0])
    return _result("euler-number", rep.value, expected, "topological: Euler characteristic of the manifold",
                   residual, ctx.tolerance, details={"nodes": rep.nodes, "corrected": corrected,
                                                     "nearest_integer": rep.nearest},
                   density=density)


@_register(
    "proof-identity",
    "corrected Pfaffian of a connection equals the plain Pfaffian of its canonical metric connection",
    "max |Pf(Omega - 1/4 E) - Pf(Omega(nabla^g))| at random points, plus the antisymmetric/symmetric "
    "curvature splitting identities in an orthonormal frame",
    "the proof of the main theorem via the canonical metric connection and the curvature splitting lemma",
    1e-6, ("points", "split_points"))
def _proof_identity(ctx: _Context) -> CheckResult:
    B = ctx.bundle()
    X = ctx.points(100)
    lhs = BU.euler_form(B, corrected=True).evaluate(X)
    rhs = BU.euler_form(BU.canonical_metric_connection(B), corrected=False).evaluate(X)
    pf_res = float(np.max(np.abs(lhs - rhs)))
    split_count = int(ctx.params.get("split_points", 20))
    split = BU.split_identities_check(BU.orthonormalize_frame(B), X[:split_count])
    residual = max(pf_res, split["antisymmetric"], split["symmetric"])
    return _result("proof-identity", pf_res, 0.0, "exact identity: corrected form versus canonical connection",
                   residual, ctx.tolerance, details={"pfaffian": pf_res, "split_antisymmetric": split["antisymmetric"],
                                                     "split_symmetric": split["symmetric"], "points": len(X)})


@_register(
    "canonical-connection",
    "the canonical metric connection nabla + 1/2 g^-1 nabla g is metric",
    "max |nabla^g g| at random points",
    "the definition and metricity statement for the canonical metric connection",
    1e-7, ("points",))
def _canonical_connection(ctx: _Context) -> CheckResult:
    B = ctx.bundle()
    X = ctx.points()
    before = float(np.max(np.abs(BU.non_metricity(B).evaluate(X))))
    after = float(np.max(np.abs(BU.non_metricity(BU.canonical_metric_connection(B)).evaluate(X))))
    return _result("canonical-connection", after, 0.0, "exact: metric connections have zero non-metricity",
                   after, ctx.tolerance, details={"nonmetricity_before": before})


@_register(
    "distance-projection",
    "the canonical metric connection is the metric connection nearest to nabla",
    "for random metric nabla' = nabla^g + g^-1 A (A antisymmetric): |nabla - nabla^g|^2 + |nabla^g - nabla'|^2 "
    "= |nabla - nabla'|^2 and |nabla - nabla^g| <= |nabla - nabla'|",
    "the projection property of the canonical metric connection",
    1e-9, ("points", "samples", "scale"))
def _distance_projection(ctx: _Context) -> CheckResult:
    B = ctx.bundle()
    canon = BU.canonical_metric_connection(B)
    X = ctx.points()
    g = ctx.model.metric.evaluate(X)
    w, wg = B.connection.evaluate(X), canon.connection.evaluate(X)
    n = ctx.model.chart.dimension
    samples = int(ctx.params.get("samples", 50))
    scale = float(ctx.params.get("scale", 0.5))
    d0 = BU.endomorphism_norm(w - wg, g, g)
    pyth = worst_gap = 0.0
    for _ in range(samples):
        A = scale * ctx.rng.standard_normal((n, n, n))
        A = A - np.transpose(A, (0, 2, 1))
        shift = np.einsum("pac,icb->piab", np.linalg.inv(g), A)
        other = wg + shift
        d1 = BU.endomorphism_norm(wg - other, g, g)
        d2 = BU.endomorphism_norm(w - other, g, g)
        pyth = max(pyth, float(np.max(np.abs(d0 ** 2 + d1 ** 2 - d2 ** 2))))
        worst_gap = max(worst_gap, float(np.max(d0 - d2)))
    passed = pyth <= ctx.tolerance and worst_gap <= 0.0
    return _result("distance-projection", pyth, 0.0, "exact: orthogonality of symmetric and antisymmetric parts",
                   pyth, ctx.tolerance, passed, details={"samples": samples, "max_distance_to_canonical": float(np.max(d0)),
                                                         "max_inequality_violation": max(worst_gap, 0.0)})


@_register(
    "pfaffian-props",
    "algebraic properties of the multilinear Pfaffian on random form-valued matrices",
    "Pf(..., M^T, ...) = -Pf(..., M, ...); Pf(..., S, ...) = 0 for symmetric S; Pf(M) = Pf(M_A); "
    "Pf(A)^2 = det(A) for scalar antisymmetric A",
    "the definition of the multilinear Pfaffian and its listed properties",
    1e-10, ("samples",), dimensions=None)
def _pfaffian_props(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    samples = int(ctx.params.get("samples", 200))
    dim, k = 4, 2
    width = 6  # number of 2-form components in dimension 4

    def random_matrix():
        return FormMatrix(dim, 2, rng.standard_normal((2 * k, 2 * k, width)))

    transpose = invisible = antipart = 0.0
    for _ in range(samples):
        M1, M2 = random_matrix(), random_matrix()
        base = pfaffian_multi([M1, M2])
        transpose = max(transpose, (pfaffian_multi([M1.T, M2]) + base).max_abs())
        S = M1 + M1.T
        invisible = max(invisible, pfaffian_multi([S, M2]).max_abs())
        MA = (M1 - M1.T) * 0.5
        antipart = max(antipart, (pfaffian(M1) - pfaffian(MA)).max_abs())
    det_rel = 0.0
    for s in range(samples):
        size = 2 * (1 + s % 3)
        A = rng.standard_normal((size, size))
        A = A - A.T
        det = float(np.linalg.det(A))
        det_rel = max(det_rel, abs(scalar_pfaffian(A) ** 2 - det) / max(abs(det), 1e-300))
    residual = max(transpose, invisible, antipart, det_rel)
    return _result("pfaffian-props", residual, 0.0, "exact algebraic identities; determinant from LAPACK",
                   residual, ctx.tolerance, details={"transpose": transpose, "symmetric_invisible": invisible,
                                                     "antisymmetric_part": antipart, "pf_squared_vs_det": det_rel,
                                                     "samples": samples})


# ---------------------------------------------------------------------------
# Gauss-Bonnet on surfaces

@_register(
    "global-gb",
    "integrated Gauss-Bonnet density with the divergence correction equals 2 pi chi",
    "integral of (K_g - d*_g B) dV_g with B the trace of the antisymmetric difference tensor; "
    "also pointwise density = 2 pi * Euler form",
    "the global Gauss-Bonnet proposition for arbitrary connections on surfaces",
    1e-5, ("quad", "points", "pointwise_tolerance"), dimensions=(2,), needs_closed=True)
def _global_gb(ctx: _Context) -> CheckResult:
    S = ctx.surface()
    rep = GB.global_gb(S, ctx.quad())
    chi = ctx.model.euler_characteristic if ctx.model.euler_characteristic is not None else rep.euler_characteristic
    target = 2.0 * math.pi * chi
    residual = abs(rep.integral - target)
    X = ctx.points()
    dens = GB.gb_density(S)
    euler = BU.euler_form(ctx.bundle())
    pointwise = float(np.max(np.abs(dens.evaluate(X) - 2.0 * math.pi * euler.evaluate(X))))
    ptol = float(ctx.params.get("pointwise_tolerance", 1e-6))
    passed = residual <= ctx.tolerance and pointwise <= ptol
    return _result("global-gb", rep.integral, target, "topological: 2 pi times the Euler characteristic",
                   residual, ctx.tolerance, passed, details={"pointwise_density_vs_euler_form": pointwise,
                                                             "pointwise_tolerance": ptol, "chi": chi},
                   density=_density_grid(ctx.model, lambda p: dens.evaluate(p)[:, 0]))


def _b_form(ctx: _Context, spec):
    from .scenario import build_b_term

    if spec in (None, "none"):
        return None
    if spec == "connection":
        if ctx.is_levi_civita:
            return None
        return GB.difference_tensor(GB.SurfaceGeometry(ctx.model.metric, ctx.connection, ctx.model.engine)).trace
    return build_b_term(ctx.model, spec, "b_term")


@_register(
    "local-gb",
    "interior + boundary + exterior angles = 2 pi for a curved polygon",
    "int_P (K_g - d*_g B) dA + int_dP (kappa_g + <B, N>) ds + sum of exterior angles",
    "the local Gauss-Bonnet formula with divergence term",
    1e-5, ("polygon", "b_term", "quad", "curve_quad", "expected", "term_tolerance"), dimensions=(2,))
def _local_gb(ctx: _Context) -> CheckResult:
    from .scenario import build_polygon

    P = build_polygon(ctx.model, ctx.params.get("polygon", "square"), "polygon")
    b = _b_form(ctx, ctx.params.get("b_term", "none"))
    S = GB.SurfaceGeometry(ctx.model.metric, None, ctx.model.engine)
    num = ctx.model.scenario.numerics
    rep = GB.local_gb(S, None, P, b, int(ctx.params.get("quad", num.quad)),
                      int(ctx.params.get("curve_quad", num.curve_quad)))
    details = {"interior": rep.interior, "boundary": rep.boundary, "angles": rep.angles,
               "interior_curvature": rep.interior_curvature, "interior_divergence": rep.interior_divergence,
               "boundary_geodesic": rep.boundary_geodesic, "boundary_normal": rep.boundary_normal,
               "exterior_angles": list(rep.exterior_angles), "b_term": b is not None}
    passed = abs(rep.residual) <= ctx.tolerance
    expected = ctx.params.get("expected") or {}
    ttol = float(ctx.params.get("term_tolerance", ctx.tolerance))
    for term, ref in expected.items():
        ref = float(ref)
        got = details[term]
        details[f"{term}_expected"] = ref
        passed = passed and abs(got - ref) <= ttol
    density_fn = None
    if ctx.model.chart.dimension == 2:
        dens = GB.gb_density(S, b)
        density_fn = lambda p: dens.evaluate(p)[:, 0]
    table = None
    if density_fn is not None:
        st = (np.arange(31) + 0.5) / 31
        grid = np.array([[s, t] for s in st for t in st])
        pts = np.asarray([np.asarray(P.interior(s, t)) for s, t in grid])
        table = np.column_stack([pts, density_fn(pts)])
    return _result("local-gb", rep.total, 2.0 * math.pi, "topological: 2 pi for a disk", abs(rep.residual),
                   ctx.tolerance, passed, details=details, density=table)


@_register(
    "density-agreement",
    "the divergence 1-form of the connection equals a prescribed 1-form",
    "max |B_connection - B_prescribed| at random points (e.g. B = -d log delta for a density connection)",
    "the remark identifying the divergence term of the density-surface connection",
    1e-6, ("points", "b_term"), dimensions=(2,))
def _density_agreement(ctx: _Context) -> CheckResult:
    spec = ctx.params.get("b_term")
    if spec is None and ctx.model.connection_spec.get("kind") == "density":
        spec = {"log_density": ctx.model.connection_spec["log_density"]}
    b_conn = _b_form(ctx, "connection")
    b_ref = _b_form(ctx, spec)
    X = ctx.points()
    zero = np.zeros((len(X), 2))
    got = b_conn.evaluate(X) if b_conn is not None else zero
    ref = b_ref.evaluate(X) if b_ref is not None else zero
    residual = float(np.max(np.abs(got - ref)))
    return _result("density-agreement", float(np.max(np.abs(got))), float(np.max(np.abs(ref))),
                   "closed form of the prescribed 1-form", residual, ctx.tolerance)


# ---------------------------------------------------------------------------
# compendium and quasi-Einstein structure

def _family(ctx: _Context) -> C.AnsatzConnection:
    if ctx.family is None:
        raise RegistryError("this check needs a connection from the shifted Levi-Civita family")
    return ctx.family


def _phi(ctx: _Context) -> SmoothField:
    if "phi" in ctx.params:
        from .scenario import build_one_form

        m = ctx.model
        return build_one_form((m.chart, m.metric, m.coordinates, m.embedding, m.scenario.seed), ctx.params["phi"],
                              "phi", salt=523)
    if ctx.phi is not None:
        return ctx.phi
    from .scenario import build_one_form

    m = ctx.model
    return build_one_form((m.chart, m.metric, m.coordinates, m.embedding, m.scenario.seed), {"random": {}}, "phi",
                          salt=523)


@_register(
    "compendium-verify",
    "closed-form curvature tensors of the shifted connection against direct curvature computation",
    "max |closed form - direct| for each named tensor (general and coefficient forms), plus the trace "
    "identities sigma = -s and tau = trace(h)",
    "the appendix compendium of torsion, non-metricity and curvature of the ansatz connection",
    1e-5, ("names", "points", "specialized", "trace_tolerance"), needs_family=True)
def _compendium_verify(ctx: _Context) -> CheckResult:
    A = _family(ctx)
    names = tuple(ctx.params.get("names") or C.TENSOR_NAMES)
    for nm in names:
        if nm not in C.TENSOR_NAMES:
            raise RegistryError(f"unknown tensor {nm!r}; known: {', '.join(C.TENSOR_NAMES)}")
    X = ctx.points()
    mode = ctx.params.get("specialized", "both")
    runs = {"general": [False], "specialized": [True], "both": [False, True]}.get(
        mode if isinstance(mode, str) else ("specialized" if mode else "general"))
    if runs is None:
        raise RegistryError(f"specialized must be general, specialized, both or a boolean, got {mode!r}")
    if A.coefficients is None:
        runs = [r for r in runs if not r]
    per_tensor = {}
    worst = 0.0
    for spec in runs:
        for rep in C.verify(A, X, names, specialized=spec):
            scale = max(1.0, float(np.max(np.abs(rep.direct))))
            key = f"{rep.name}{' (coefficients)' if spec else ''}"
            per_tensor[key] = rep.residual
            worst = max(worst, rep.residual / scale)
    direct = C._direct_all(A, ("scalar", "rho_trace", "canonical_ricci", "canonical_scalar"))
    vals = jax.jit(jax.vmap(direct))(X)
    g = ctx.model.metric.evaluate(X)
    sigma = float(np.max(np.abs(np.asarray(vals["rho_trace"]) + np.asarray(vals["scalar"]))))
    tau = float(np.max(np.abs(np.einsum("pij,pij->p", np.linalg.inv(g), np.asarray(vals["canonical_ricci"]))
                              - np.asarray(vals["canonical_scalar"]))))
    ttol = float(ctx.params.get("trace_tolerance", 1e-8))
    passed = worst <= ctx.tolerance and sigma <= ttol and tau <= ttol
    details = {"tensors": per_tensor, "sigma_plus_s": sigma, "tau_minus_trace_h": tau, "trace_tolerance": ttol,
               "points": len(X), "coefficients": list(A.coefficients) if A.coefficients else None}
    return _result("compendium-verify", worst, 0.0, "independent oracle: curvature of the connection by differentiation",
                   worst, ctx.tolerance, passed, details=details)


_DEFAULT_COEFFICIENT_CASES = (
    {"n": 2, "m": 3.0}, {"n": 2, "m": "inf"}, {"n": 3, "m": -1.0}, {"n": 4, "m": -2.0}, {"n": 4, "m": 2.0},
    {"n": 5, "m": "inf"}, {"n": 5, "m": -1.0}, {"n": 6, "m": 7.5}, {"n": 4, "m": -1.5},
)


@_register(
    "coefficients",
    "ansatz coefficients reproducing the quasi-Einstein equation: every branch solves the coefficient system",
    "residuals of (n-1) b + c = -1 and (n-1) b^2 - c^2 = -1/m; number of real branches versus the sign of "
    "4 (n-1) (1 + (n-2)/m)",
    "the coefficient equations for the quasi-Einstein ansatz and their solution branches",
    1e-12, ("cases", "n", "m"), dimensions=None)
def _coefficients(ctx: _Context) -> CheckResult:
    if "n" in ctx.params:
        cases = [{"n": ctx.params["n"], "m": ctx.params.get("m", "inf")}]
    else:
        cases = list(ctx.params.get("cases") or _DEFAULT_COEFFICIENT_CASES)
    worst = 0.0
    gating_ok = True
    rows = []
    for case in cases:
        sol = C.solve_coefficients(int(case["n"]), case["m"])
        res = max((max(r) for r in sol.residuals()), default=0.0)
        worst = max(worst, res)
        p = sol.params
        expected = 1 if p.n == 2 else (0 if p.discriminant < 0 else (1 if p.discriminant == 0 else 2))
        gating_ok = gating_ok and len(sol.solutions) == expected
        rows.append({"n": p.n, "m": str(case["m"]), "solutions": [list(s) for s in sol.solutions],
                     "status": sol.status, "residual": res})
    return _result("coefficients", worst, 0.0, "exact: substitution into the coefficient equations", worst,
                   ctx.tolerance, worst <= ctx.tolerance and gating_ok, details={"cases": rows, "gating_ok": gating_ok})


@_register(
    "quasi-einstein",
    "both coefficient branches give the same traceless symmetric Ricci tensor, equal to the quasi-Einstein residual",
    "max |ricci_traceless(b+, c+) - ricci_traceless(b-, c-)| and max |ricci_traceless - traceless(r_g + 1/2 L g "
    "- 1/m phi phi)| at random points",
    "the quasi-Einstein equation as vanishing traceless symmetric Ricci tensor of the ansatz connection",
    1e-6, ("m", "phi", "points"))
def _quasi_einstein(ctx: _Context) -> CheckResult:
    m = ctx.model
    n = m.chart.dimension
    weight = ctx.params.get("m", "inf")
    phi = _phi(ctx)
    sol = C.solve_coefficients(n, weight)
    if not sol.solutions:
        raise RegistryError(f"no real coefficient branches for n={n}, m={weight}: {sol.status}")
    X = ctx.points()
    res = C.gmqe_residual(m.metric, phi, weight, m.engine).evaluate(X)
    branches = []
    for b, c in sol.solutions:
        A = C.AnsatzConnection.from_coefficients(m.metric, phi, b, b, c, m.engine)
        branches.append(C.direct_tensor(A, "ricci_traceless", X))
    vs_residual = max(float(np.max(np.abs(r - res))) for r in branches)
    between = float(np.max(np.abs(branches[0] - branches[-1])))
    residual = max(vs_residual, between)
    return _result("quasi-einstein", between, 0.0, "independent oracle: direct curvature of each branch connection",
                   residual, ctx.tolerance, details={"branch_vs_closed_form": vs_residual, "between_branches": between,
                                                     "branches": [list(s) for s in sol.solutions],
                                                     "max_residual_norm": float(np.max(np.abs(res)))})


@_register(
    "averaged-tensors",
    "closed forms for the branch-averaged symmetric Ricci tensor and scalar curvature",
    "max |closed average - mean of the direct curvatures of the two branch connections|",
    "the appendix discussion of averages over the two quasi-Einstein connections",
    1e-5, ("m", "phi", "points"), dimensions=(3, 4, 5, 6))
def _averaged(ctx: _Context) -> CheckResult:
    m = ctx.model
    weight = ctx.params.get("m", 2.0)
    phi = _phi(ctx)
    X = ctx.points()
    closed = C.averaged_tensors(m.metric, phi, weight, m.engine)
    direct = C.averaged_tensors_direct(m.metric, phi, weight, m.engine)
    parts = {k: float(np.max(np.abs(closed[k].evaluate(X) - direct[k].evaluate(X)))) for k in ("ricci_sym", "scalar")}
    residual = max(parts.values())
    return _result("averaged-tensors", residual, 0.0, "independent oracle: direct curvature of both branches",
                   residual, ctx.tolerance, details=parts)


@_register(
    "functionals",
    "scale-invariant non-metricity functionals F = int |nabla g|^n dV and K = int |nabla g|^2 dV",
    "K against the closed-form non-metricity contracted at the quadrature nodes (n |phi|^2 for Weyl "
    "connections); on surfaces also F = K",
    "the functionals measuring how far a connection is from being metric",
    1e-8, ("quad",))
def _functionals(ctx: _Context) -> CheckResult:
    m = ctx.model
    nodes = ctx.quad()
    vals = C.functionals(ctx.connection, m.metric, nodes, m.engine)
    n = m.chart.dimension
    weyl = ctx.family is not None and ctx.family.coefficients == (-0.5, -0.5, 0.5) and ctx.phi is not None
    if weyl:
        pfn, gfn = ctx.phi.fn, m.metric.fn
        sq = SmoothField(m.chart, lambda x: n * pfn(x) @ jnp.linalg.solve(gfn(x), pfn(x)), ())
        reference = integrate_function(sq, m.metric, nodes)
        provenance = "closed form: n |phi|^2 for a Weyl connection"
    else:
        pts, w = gauss_legendre(m.chart, nodes)
        if ctx.family is not None:
            fam = ctx.family
            q = C.ansatz_nonmetricity_closed_form(fam.alpha, fam.beta, fam.gamma, m.metric).evaluate(pts)
        else:
            q = BU.non_metricity(BU.tangent_bundle(m.metric, ctx.connection, m.engine)).evaluate(pts)
        g = m.metric.evaluate(pts)
        gi = np.linalg.inv(g)
        sq = np.einsum("pia,pjb,pkc,pijk,pabc->p", gi, gi, gi, q, q)
        reference = float(np.sum(w * sq * sqrt_det(g)))
        provenance = ("contraction of the closed-form non-metricity" if ctx.family is not None
                      else "independent contraction of the non-metricity tensor")
    scale = max(1.0, abs(reference))
    residual = abs(vals["K"] - reference) / scale
    details = {"F": vals["F"], "K": vals["K"], "volume": vals["volume"]}
    if n == 2:
        details["F_minus_K"] = abs(vals["F"] - vals["K"])
        residual = max(residual, abs(vals["F"] - vals["K"]) / scale)
    return _result("functionals", vals["K"], reference, provenance, residual, ctx.tolerance, details=details)
