"""Charts, smooth fields, differentiation engines and quadrature.

Fields are pointwise callbacks written with :mod:`jax.numpy`: a field's
``fn`` maps one chart point of shape ``(n,)`` to a coefficient array of the
field's declared shape.  Batched evaluation vectorizes and compiles ``fn``
once per field; differentiation either runs central finite differences on
``fn`` or delegates to an exact callback / automatic differentiation.

Index layout conventions used throughout the package:

* metric ``g[a, b]``; connection coefficients ``gamma[i, k, j]`` with
  ``nabla_i e_j = gamma[i, k, j] e_k``;
* derivatives put the differentiation index first: ``jacobian(f)(x)[i]`` is
  ``d_i f``;
* curvature ``omega[i, j, k, l] = R_ij^k_l``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import _tensor as T
from .errors import (
    ContractViolation,
    DegenerateCurveError,
    DomainError,
    NumericalBlowup,
    SingularMetricError,
)
from .exterior import DifferentialForm, index_tuples

__all__ = [
    "Chart",
    "SmoothField",
    "FormField",
    "DerivativeEngine",
    "CurveSegment",
    "DEFAULT_ENGINE",
    "partial_derivative",
    "exterior_derivative",
    "hodge_star_1",
    "codifferential_1",
    "lie_derivative_metric",
    "volume_form",
    "gauss_legendre",
    "quadrature_samples",
    "integrate_form",
    "integrate_function",
    "integrate_along_curve",
    "sqrt_det",
]

CHUNK = 4096


def worker_count() -> int:
    """Worker threads for batched evaluation (``EULERCLASS_THREADS`` caps it)."""
    default = min(4, os.cpu_count() or 1)
    raw = os.environ.get("EULERCLASS_THREADS")
    if raw:
        try:
            return max(1, min(int(raw), 64))
        except ValueError:
            return default
    return default


@dataclass(frozen=True)
class Chart:
    """Rectangular coordinate domain ``prod [lower_i, upper_i]``.

    Periodic coordinates identify ``lower_i`` with ``upper_i``.  Points on
    the boundary of a non-periodic coordinate are outside the chart (finite
    differences need room on both sides), which is how the poles of the
    spherical chart are excluded.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    periodic: tuple[bool, ...] = ()
    orientation: int = 1
    name: str = "chart"
    degeneracy: str = ""

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * len(lower)
        if len(lower) != len(upper) or len(periodic) != len(lower) or not lower:
            raise ContractViolation("chart bounds and periodicity flags must have one entry per coordinate")
        if any(not lo < hi for lo, hi in zip(lower, upper)):
            raise ContractViolation(f"chart needs lower < upper, got {lower} / {upper}")
        if self.orientation not in (1, -1):
            raise ContractViolation(f"orientation must be +1 or -1, got {self.orientation}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def with_orientation(self, orientation: int) -> "Chart":
        return Chart(self.lower, self.upper, self.periodic, orientation, self.name, self.degeneracy)

    def wrap(self, x):
        """Map periodic coordinates into ``[lower, upper)`` (traceable)."""
        if not any(self.periodic):
            return x
        lo = jnp.asarray(self.lower)
        period = jnp.asarray(self.upper) - lo
        wrapped = lo + jnp.mod(x - lo, period)
        return jnp.where(jnp.asarray(self.periodic), wrapped, x)

    def boundary_distance(self, x):
        """Distance to the nearest non-periodic boundary, per coordinate."""
        lo, hi = jnp.asarray(self.lower), jnp.asarray(self.upper)
        dist = jnp.minimum(x - lo, hi - x)
        return jnp.where(jnp.asarray(self.periodic), jnp.inf, dist)

    def check_points(self, points) -> np.ndarray:
        """Validate a batch of points ``(..., n)``; returns a float array."""
        X = np.asarray(points, dtype=float)
        if X.shape[-1] != self.dimension:
            raise ContractViolation(f"points of dimension {X.shape[-1]} on a {self.dimension}-dimensional chart")
        if not np.all(np.isfinite(X)):
            raise DomainError("non-finite chart coordinates")
        lo, hi = np.array(self.lower), np.array(self.upper)
        per = np.array(self.periodic)
        outside = ~per & ((X <= lo) | (X >= hi))
        if np.any(outside):
            bad = X[np.any(outside, axis=-1)][0]
            raise DomainError(f"point {bad.tolist()} lies outside chart '{self.name}' "
                              f"(interior of {list(zip(self.lower, self.upper))} required)")
        return X

    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def random_points(self, count: int, rng: np.random.Generator, margin: float = 0.05) -> np.ndarray:
        """Uniform random interior points, kept ``margin`` (relative) away from boundaries."""
        lo, hi = np.array(self.lower), np.array(self.upper)
        width = hi - lo
        pad = np.where(np.array(self.periodic), 0.0, margin * width)
        return lo + pad + rng.random((count, self.dimension)) * (width - 2 * pad)


class SmoothField:
    """A tensor field on a chart given by a pointwise jax-traceable callback.

    Parameters
    ----------
    chart:
        Chart the field lives on.
    fn:
        ``fn(x) -> array`` for one point ``x`` of shape ``(n,)``.
    shape:
        Shape of the coefficient array returned by ``fn``.
    slots:
        Optional index signature, one label per axis (e.g. ``("_i", "^k", "_j")``).
    derivative:
        Optional exact derivative callback ``x -> array (n, *shape)``; used
        by an engine in exact mode.
    """

    def __init__(self, chart: Chart, fn: Callable, shape: Sequence[int] = (), *,
                 slots: Sequence[str] | None = None, derivative: Callable | None = None,
                 name: str = "", on_nonfinite: type[Exception] = NumericalBlowup):
        self.chart = chart
        self.fn = fn
        self.shape = tuple(int(s) for s in shape)
        self.slots = tuple(slots) if slots is not None else None
        if self.slots is not None and len(self.slots) != len(self.shape):
            raise ContractViolation(f"{len(self.slots)} slot labels for a field of rank {len(self.shape)}")
        self.derivative = derivative
        self.name = name
        self.on_nonfinite = on_nonfinite
        self._compiled = None

    @classmethod
    def constant(cls, chart: Chart, value, **kw) -> "SmoothField":
        value = jnp.asarray(value, dtype=float)
        zero = jnp.zeros((chart.dimension,) + value.shape)
        return cls(chart, lambda x: value, value.shape, derivative=lambda x: zero, **kw)

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    def _batched(self):
        if self._compiled is None:
            self._compiled = jax.jit(jax.vmap(self.fn))
        return self._compiled

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at a batch of points ``(..., n)``; returns ``(..., *shape)``."""
        X = self.chart.check_points(points)
        lead = X.shape[:-1]
        flat = X.reshape(-1, self.dimension)
        count = flat.shape[0]
        if count == 0:
            return np.zeros(lead + self.shape)
        compiled = self._batched()
        chunk = min(CHUNK, count)
        n_chunks = -(-count // chunk)
        padded = np.concatenate([flat, np.repeat(flat[:1], n_chunks * chunk - count, axis=0)])
        pieces = [padded[c * chunk:(c + 1) * chunk] for c in range(n_chunks)]
        workers = worker_count()
        if workers > 1 and n_chunks > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda p: np.asarray(compiled(p)), pieces))
        else:
            results = [np.asarray(compiled(p)) for p in pieces]
        values = np.concatenate(results)[:count]
        if not np.all(np.isfinite(values)):
            what = self.name or "field"
            if self.on_nonfinite is SingularMetricError:
                raise SingularMetricError(f"{what}: metric is singular or not positive definite at a sample point")
            raise self.on_nonfinite(f"{what}: evaluation produced NaN/inf")
        return values.reshape(lead + self.shape)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def map(self, fn: Callable, shape: Sequence[int], **kw) -> "SmoothField":
        """Pointwise post-composition ``x -> fn(self.fn(x))``."""
        inner = self.fn
        return SmoothField(self.chart, lambda x: fn(inner(x)), shape, **kw)

    def __repr__(self) -> str:
        return f"SmoothField({self.name or 'anonymous'}, shape={self.shape}, chart={self.chart.name})"


class FormField(SmoothField):
    """Field of degree-``p`` forms, stored as increasing-tuple coefficients."""

    def __init__(self, chart: Chart, fn: Callable, degree: int, **kw):
        self.degree = degree
        super().__init__(chart, fn, (len(index_tuples(chart.dimension, degree)),), **kw)

    @classmethod
    def from_components(cls, chart: Chart, fn: Callable, degree: int, **kw) -> "FormField":
        """Wrap a callback returning a dense alternating array ``(n,) * p``."""
        n = chart.dimension
        tuples = index_tuples(n, degree)
        if degree == 0:
            return cls(chart, lambda x: jnp.reshape(fn(x), (1,)), 0, **kw)
        idx = tuple(np.array([t[a] for t in tuples], dtype=int) for a in range(degree))
        return cls(chart, lambda x: fn(x)[idx], degree, **kw)

    def form_at(self, x) -> DifferentialForm:
        return DifferentialForm(self.dimension, self.degree, self.evaluate(np.asarray(x, float)))


@dataclass(frozen=True)
class DerivativeEngine:
    """Differentiation strategy for pointwise callbacks.

    ``mode="fd"``: central differences with step ``step`` (optionally
    Richardson-extrapolated from steps ``h`` and ``h/2``).  Near a
    non-periodic chart boundary the step shrinks to ``boundary_fraction``
    of the distance to the boundary so no sample leaves the chart.

    ``mode="exact"``: a field's own ``derivative`` callback when present,
    automatic differentiation of its callback otherwise.
    """

    mode: str = "fd"
    step: float = 1e-3
    richardson: bool = True
    boundary_fraction: float = 0.02

    def __post_init__(self):
        if self.mode not in ("fd", "exact"):
            raise ContractViolation(f"unknown derivative mode {self.mode!r}")
        if not self.step > 0:
            raise ContractViolation(f"finite-difference step must be positive, got {self.step}")
        if not 0 < self.boundary_fraction < 1:
            raise ContractViolation("boundary_fraction must lie in (0, 1)")

    @property
    def order(self) -> int:
        """Nominal convergence order of the engine (exact mode reports 0)."""
        if self.mode == "exact":
            return 0
        return 4 if self.richardson else 2

    def jacobian(self, fn: Callable, chart: Chart, exact: Callable | None = None) -> Callable:
        """Per-point callback ``x -> (n, *shape)`` of first partial derivatives."""
        if self.mode == "exact":
            if exact is not None:
                return exact
            return lambda x: jnp.moveaxis(jax.jacfwd(fn)(x), -1, 0)
        n = chart.dimension
        h0, frac, rich = self.step, self.boundary_fraction, self.richardson
        # stencil offsets in units of the step: +1, -1 (and +1/2, -1/2 for Richardson)
        scales = jnp.array([1.0, -1.0, 0.5, -0.5] if rich else [1.0, -1.0])
        eye = jnp.eye(n)
        batched = jax.vmap(fn)

        def jac(x):
            steps = jnp.minimum(h0, frac * chart.boundary_distance(x))
            offsets = (scales[None, :, None] * (steps[:, None] * eye)[:, None, :]).reshape(-1, n)
            vals = batched(jax.vmap(chart.wrap)(x[None, :] + offsets))
            vals = vals.reshape((n, scales.shape[0]) + vals.shape[1:])
            bshape = (n,) + (1,) * (vals.ndim - 2)
            h = steps.reshape(bshape)
            d1 = (vals[:, 0] - vals[:, 1]) / (2 * h)
            if not rich:
                return d1
            d2 = (vals[:, 2] - vals[:, 3]) / h
            return (4.0 * d2 - d1) / 3.0

        return jac

    def gradient(self, f: SmoothField) -> SmoothField:
        """Field of partial derivatives ``d_i f`` with shape ``(n, *f.shape)``."""
        fn = self.jacobian(f.fn, f.chart, f.derivative)
        return SmoothField(f.chart, fn, (f.dimension,) + f.shape,
                           name=f"d({f.name})" if f.name else "", on_nonfinite=f.on_nonfinite)

    def describe(self) -> str:
        if self.mode == "exact":
            return "exact"
        return f"fd(h={self.step:g}{', richardson' if self.richardson else ''})"


DEFAULT_ENGINE = DerivativeEngine()


def _engine(engine: DerivativeEngine | None) -> DerivativeEngine:
    return DEFAULT_ENGINE if engine is None else engine


def partial_derivative(f: SmoothField, i: int, x, engine: DerivativeEngine | None = None) -> np.ndarray:
    """``d_i f`` at ``x`` (one point or a batch)."""
    if not 0 <= i < f.dimension:
        raise ContractViolation(f"coordinate index {i} out of range for dimension {f.dimension}")
    grad = _engine(engine).gradient(f)
    return np.take(grad(x), i, axis=-len(f.shape) - 1)


def _exterior_derivative_tables(n: int, p: int):
    """For each increasing (p+1)-tuple list (sign, derivative index, source position)."""
    src = {t: k for k, t in enumerate(index_tuples(n, p))}
    rows = []
    for K in index_tuples(n, p + 1):
        terms = []
        for a, i in enumerate(K):
            rest = K[:a] + K[a + 1:]
            terms.append(((-1) ** a, i, src[rest]))
        rows.append(terms)
    return rows


def exterior_derivative(omega: FormField, engine: DerivativeEngine | None = None) -> FormField:
    """``d omega``; components ``(d w)_{i0..ip} = sum_a (-1)^a d_{ia} w_{..^ia..}``."""
    n, p = omega.dimension, omega.degree
    if p >= n:
        raise ContractViolation(f"exterior derivative of a degree-{p} form in dimension {n} exceeds top degree")
    jac = _engine(engine).jacobian(omega.fn, omega.chart, omega.derivative)
    rows = _exterior_derivative_tables(n, p)
    sign = np.array([[t[0] for t in r] for r in rows], dtype=float)
    dix = np.array([[t[1] for t in r] for r in rows], dtype=int)
    six = np.array([[t[2] for t in r] for r in rows], dtype=int)

    def fn(x):
        d = jac(x)
        return jnp.sum(sign * d[dix, six], axis=1)

    return FormField(omega.chart, fn, p + 1, name=f"d{omega.name}" if omega.name else "")


def _require_surface(chart: Chart, what: str) -> None:
    if chart.dimension != 2:
        raise ContractViolation(f"{what} is defined on surfaces only (n=2), got n={chart.dimension}")


def hodge_star_1(psi: SmoothField, g: SmoothField) -> FormField:
    """Hodge star on 1-forms of an oriented surface: +90 degree rotation.

    ``(*psi)_j = orientation * sqrt(det g) * eps_{ij} g^{ik} psi_k``; in an
    oriented orthonormal coframe ``*e1 = e2`` and ``*e2 = -e1``.
    """
    _require_surface(g.chart, "hodge_star_1")
    eps = jnp.array([[0.0, 1.0], [-1.0, 0.0]]) * g.chart.orientation
    gfn, pfn = g.fn, psi.fn

    def fn(x):
        gx = gfn(x)
        vec = jnp.linalg.solve(gx, pfn(x))
        return jnp.sqrt(jnp.linalg.det(gx)) * (vec @ eps)

    return FormField(g.chart, fn, 1, name="*" + (psi.name or "psi"), on_nonfinite=SingularMetricError)


def hodge_star_2(w: SmoothField, g: SmoothField) -> SmoothField:
    """Hodge star of a 2-form ``w = f du^dv`` on a surface: ``f / sqrt(det g)``."""
    _require_surface(g.chart, "hodge_star_2")
    gfn, wfn, o = g.fn, w.fn, g.chart.orientation
    return SmoothField(g.chart, lambda x: o * wfn(x)[0] / jnp.sqrt(jnp.linalg.det(gfn(x))), (),
                       on_nonfinite=SingularMetricError)


def codifferential_1(psi: SmoothField, g: SmoothField, engine: DerivativeEngine | None = None) -> SmoothField:
    """``d*_g psi = -nabla^i psi_i`` (minus the Levi-Civita divergence)."""
    eng = _engine(engine)
    gfn, pfn = g.fn, psi.fn
    dg = eng.jacobian(gfn, g.chart, g.derivative)
    dpsi = eng.jacobian(pfn, psi.chart, psi.derivative)

    def fn(x):
        gx = gfn(x)
        gam = T.christoffel(gx, dg(x))
        cov = T.covariant_derivative_1form(dpsi(x), gam, pfn(x))
        return -jnp.einsum("ij,ij->", jnp.linalg.inv(gx), cov)

    return SmoothField(g.chart, fn, (), name="d*" + (psi.name or "psi"), on_nonfinite=SingularMetricError)


def lie_derivative_metric(phi: SmoothField, g: SmoothField, engine: DerivativeEngine | None = None) -> SmoothField:
    """``(L_{phi#} g)_ij = nabla_i phi_j + nabla_j phi_i`` (Levi-Civita)."""
    eng = _engine(engine)
    gfn, pfn = g.fn, phi.fn
    dg = eng.jacobian(gfn, g.chart, g.derivative)
    dphi = eng.jacobian(pfn, phi.chart, phi.derivative)

    def fn(x):
        gam = T.christoffel(gfn(x), dg(x))
        cov = T.covariant_derivative_1form(dphi(x), gam, pfn(x))
        return cov + cov.T

    n = g.dimension
    return SmoothField(g.chart, fn, (n, n), slots=("_i", "_j"), name="L_phi g", on_nonfinite=SingularMetricError)


def volume_form(g: SmoothField) -> FormField:
    """Riemannian volume form ``orientation * sqrt(det g) du^1 ^ ... ^ du^n``."""
    gfn, o = g.fn, g.chart.orientation
    return FormField(g.chart, lambda x: jnp.reshape(o * jnp.sqrt(jnp.linalg.det(gfn(x))), (1,)),
                     g.dimension, name="dV_g", on_nonfinite=SingularMetricError)


# quadrature -----------------------------------------------------------------

def _leggauss(nodes: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gauss_legendre(chart: Chart, nodes: int | Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss-Legendre points ``(N, n)`` and weights ``(N,)``."""
    n = chart.dimension
    counts = [int(nodes)] * n if np.isscalar(nodes) else [int(k) for k in nodes]
    if len(counts) != n or min(counts) < 1:
        raise ContractViolation(f"need one positive node count per coordinate, got {nodes}")
    rules = [_leggauss(k, lo, hi) for k, lo, hi in zip(counts, chart.lower, chart.upper)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    points = np.stack([gr.ravel() for gr in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return points, weights


def quadrature_samples(field: SmoothField, nodes: int | Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points, weights and field values at the tensor Gauss-Legendre nodes."""
    points, weights = gauss_legendre(field.chart, nodes)
    return points, weights, field.evaluate(points)


def _pairwise_sum(values: np.ndarray) -> float:
    # numpy reduces contiguous float64 arrays pairwise, in a fixed order
    return float(np.sum(np.ascontiguousarray(values, dtype=np.float64)))


def integrate_form(omega: FormField | Sequence[FormField], nodes: int | Sequence[int] = 64) -> float:
    """Integral of a top-degree form over its chart (or a sum over an atlas).

    The chart orientation multiplies the coordinate integral.
    """
    if isinstance(omega, (list, tuple)):
        return float(sum(integrate_form(w, nodes) for w in omega))
    if not isinstance(omega, FormField) or omega.degree != omega.dimension:
        deg = getattr(omega, "degree", None)
        raise ContractViolation(f"integrate_form needs a top-degree form, got degree {deg} "
                                f"in dimension {omega.dimension}")
    _, weights, values = quadrature_samples(omega, nodes)
    return omega.chart.orientation * _pairwise_sum(weights * values[:, 0])


def integrate_function(f: SmoothField, g: SmoothField | None = None, nodes: int | Sequence[int] = 64) -> float:
    """``int f dV_g`` (``g=None``: coordinate measure)."""
    if f.shape != ():
        raise ContractViolation(f"integrate_function needs a scalar field, got shape {f.shape}")
    points, weights = gauss_legendre(f.chart, nodes)
    values = f.evaluate(points)
    if g is not None:
        values = values * sqrt_det(g.evaluate(points))
    return _pairwise_sum(weights * values)


# curves -----------------------------------------------------------------------

_PARAMETER_CHART = Chart((-1.0,), (2.0,), name="curve-parameter")


@dataclass(frozen=True, eq=False)
class CurveSegment:
    """Parametric curve ``t -> point`` for ``t`` in ``[0, 1]`` inside a chart.

    ``fn`` must be jax-traceable and defined slightly beyond ``[0, 1]`` so
    that finite differences can be taken at the end points.
    """

    chart: Chart
    fn: Callable
    name: str = ""
    smooth: bool = True
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _jets(self, engine: DerivativeEngine):
        key = engine
        if key not in self._cache:
            point = lambda t: self.fn(t[0])
            vel = engine.jacobian(point, _PARAMETER_CHART)
            acc = engine.jacobian(lambda t: vel(t)[0], _PARAMETER_CHART)

            def jet(t):
                tt = jnp.reshape(t, (1,))
                return point(tt), vel(tt)[0], acc(tt)[0]

            self._cache[key] = jax.jit(jax.vmap(jet))
        return self._cache[key]

    def jet(self, ts, engine: DerivativeEngine | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points, velocities and accelerations at parameters ``ts``."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        p, v, a = (np.asarray(z) for z in self._jets(_engine(engine))(ts))
        return p, v, a

    def point(self, t) -> np.ndarray:
        return np.asarray(self.fn(jnp.asarray(float(t))))

    def start(self) -> np.ndarray:
        return self.point(0.0)

    def end(self) -> np.ndarray:
        return self.point(1.0)


def sqrt_det(g_values: np.ndarray) -> np.ndarray:
    """``sqrt(det g)`` for a batch of metrics; raises if any is not positive definite."""
    det = np.linalg.det(g_values)
    if not np.all(det > 0):
        raise SingularMetricError("metric is singular or not positive definite at a sample point")
    return np.sqrt(det)


def curve_speed(g_values: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    sq = np.einsum("ni,nij,nj->n", velocities, g_values, velocities)
    if np.any(sq < 0):
        raise SingularMetricError("metric is not positive definite along the curve")
    return np.sqrt(sq)


def integrate_along_curve(f: SmoothField | None, gamma: CurveSegment, g: SmoothField,
                          nodes: int = 128, engine: DerivativeEngine | None = None) -> float:
    """Line integral along ``gamma`` with Gauss-Legendre nodes in ``t``.

    * ``f`` scalar field: ``int f ds`` (arclength measure of ``g``);
    * ``f`` 1-form field: ``int f(gamma')`` dt;
    * ``f=None``: the ``g``-length of the curve.
    """
    ts, weights = _leggauss(nodes, 0.0, 1.0)
    points, vel, _ = gamma.jet(ts, engine)
    points = gamma.chart.check_points(points)
    speed = curve_speed(g.evaluate(points), vel)
    if np.min(speed) <= 1e-12 * max(1.0, float(np.max(speed))):
        raise DegenerateCurveError(f"curve '{gamma.name}' has vanishing speed at a quadrature node")
    if f is None:
        integrand = speed
    elif f.shape == ():
        integrand = f.evaluate(points) * speed
    elif f.shape == (gamma.chart.dimension,):
        integrand = np.einsum("ni,ni->n", f.evaluate(points), vel)
    else:
        raise ContractViolation(f"curve integrand must be a scalar or 1-form field, got shape {f.shape}")
    return _pairwise_sum(weights * integrand)
