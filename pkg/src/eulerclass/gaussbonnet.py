"""Gauss-Bonnet on the tangent bundle of a surface for a general connection.

For a connection ``nabla = nabla_g - D`` on a surface, the canonical metric
connection is ``nabla^g = nabla_g - D_A`` where ``D_A`` is the
g-antisymmetric part of ``D``.  Its single trace ``B_i`` gives the
divergence correction

    2 pi e(TM) = (K_g - d*_g B) dV_g,

and the local version adds the boundary term ``kappa_N + B(N)`` and the
exterior angles of a curved polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import _tensor as T
from .bundle import euler_form, tangent_bundle
from .errors import ContractViolation, DegenerateCurveError, GeometryError, SingularMetricError
from .fields import (
    DEFAULT_ENGINE,
    Chart,
    CurveSegment,
    DerivativeEngine,
    FormField,
    SmoothField,
    _leggauss,
    _pairwise_sum,
    codifferential_1,
    curve_speed,
    sqrt_det,
    hodge_star_1,
    integrate_form,
)

__all__ = [
    "SurfaceGeometry",
    "DifferenceTensor",
    "CurvedPolygon",
    "GlobalGBReport",
    "LocalGBReport",
    "levi_civita",
    "gauss_curvature",
    "difference_tensor",
    "split_difference",
    "b_trace",
    "metric_difference_from_trace",
    "gb_density",
    "global_gb",
    "signed_curvature",
    "local_gb",
    "curvature_relation_check",
    "b_dual_check",
]

_PATCH_CHART = Chart((-1.0, -1.0), (2.0, 2.0), name="patch-parameter")


def _fd(engine):
    return DEFAULT_ENGINE if engine is None else engine


def levi_civita(g: SmoothField, engine: DerivativeEngine | None = None) -> SmoothField:
    """Christoffel symbols ``Gamma[i, k, j]`` of the Levi-Civita connection."""
    eng = _fd(engine)
    gfn, dg = g.fn, eng.jacobian(g.fn, g.chart, g.derivative)
    n = g.dimension
    return SmoothField(g.chart, lambda x: T.christoffel(gfn(x), dg(x)), (n, n, n),
                       slots=("_i", "^k", "_j"), name="levi-civita", on_nonfinite=SingularMetricError)


def _riemann_lc_fn(g: SmoothField, eng: DerivativeEngine):
    gam = levi_civita(g, eng)
    dgam = eng.jacobian(gam.fn, g.chart)
    return lambda x: T.curvature(gam.fn(x), dgam(x))


def gauss_curvature(g: SmoothField, engine: DerivativeEngine | None = None) -> SmoothField:
    """``K_g = R_1212 / det g`` on a surface."""
    if g.dimension != 2:
        raise ContractViolation(f"Gauss curvature needs a surface, got dimension {g.dimension}")
    eng = _fd(engine)
    riem, gfn = _riemann_lc_fn(g, eng), g.fn

    def fn(x):
        gx = gfn(x)
        R = T.lower_curvature(gx, riem(x))
        return R[0, 1, 0, 1] / jnp.linalg.det(gx)

    return SmoothField(g.chart, fn, (), name="K_g", on_nonfinite=SingularMetricError)


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    """Surface metric with an optional connection (Levi-Civita when omitted)."""

    metric: SmoothField
    connection: SmoothField | None = None
    engine: DerivativeEngine = DEFAULT_ENGINE
    name: str = ""

    def __post_init__(self):
        if self.metric.dimension != 2 or self.metric.shape != (2, 2):
            raise ContractViolation("SurfaceGeometry needs a 2x2 metric on a 2-dimensional chart")
        if self.connection is not None and self.connection.shape != (2, 2, 2):
            raise ContractViolation(f"surface connection must have shape (2, 2, 2), got {self.connection.shape}")

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @property
    def levi_civita(self) -> SmoothField:
        return levi_civita(self.metric, self.engine)

    @property
    def gamma(self) -> SmoothField:
        return self.connection if self.connection is not None else self.levi_civita

    def bundle(self):
        return tangent_bundle(self.metric, self.gamma, self.engine, self.name)


@dataclass(frozen=True, eq=False)
class DifferenceTensor:
    """``D = nabla_g - nabla`` with its g-symmetric/antisymmetric parts and trace."""

    full: SmoothField
    symmetric: SmoothField
    antisymmetric: SmoothField
    trace: SmoothField


def difference_tensor(S: SurfaceGeometry) -> DifferenceTensor:
    lc, gam = S.levi_civita, S.gamma
    D = SmoothField(S.chart, lambda x: lc.fn(x) - gam.fn(x), (2, 2, 2), slots=("_i", "^k", "_j"), name="D",
                    on_nonfinite=SingularMetricError)
    DS, DA = split_difference(D, S.metric)
    return DifferenceTensor(D, DS, DA, b_trace(D, S.metric))


def _transpose_fn(Dfn, gfn):
    """``(g^-1 D^T g)[i, k, j] = g^kl D[i, m, l] g_mj``."""
    def fn(x):
        gx = gfn(x)
        return jnp.einsum("kl,iml,mj->ikj", jnp.linalg.inv(gx), Dfn(x), gx)

    return fn


def split_difference(D: SmoothField, g: SmoothField) -> tuple[SmoothField, SmoothField]:
    """``D_S = (D + g^-1 D^T g)/2`` and ``D_A = (D - g^-1 D^T g)/2``."""
    Dfn = D.fn
    tr = _transpose_fn(Dfn, g.fn)
    kw = dict(slots=("_i", "^k", "_j"), on_nonfinite=SingularMetricError)
    DS = SmoothField(D.chart, lambda x: 0.5 * (Dfn(x) + tr(x)), D.shape, name="D_S", **kw)
    DA = SmoothField(D.chart, lambda x: 0.5 * (Dfn(x) - tr(x)), D.shape, name="D_A", **kw)
    return DS, DA


def b_trace(D: SmoothField, g: SmoothField) -> SmoothField:
    """``B_i = (D_jji - D_jij) / 2`` with repeated lower indices contracted by ``g^-1``."""
    Dfn, gfn = D.fn, g.fn

    def fn(x):
        gx = gfn(x)
        Dx = Dfn(x)
        first = jnp.einsum("jji->i", Dx)
        second = jnp.einsum("jl,im,jml->i", jnp.linalg.inv(gx), gx, Dx)
        return 0.5 * (first - second)

    return SmoothField(D.chart, fn, (D.dimension,), slots=("_i",), name="B", on_nonfinite=SingularMetricError)


def metric_difference_from_trace(b_form: SmoothField, g: SmoothField) -> SmoothField:
    """The g-antisymmetric difference tensor on a surface whose trace is ``b_form``.

    ``B_ikj = b_i (dV_g)_kj`` with ``b = -* B``, so that ``nabla_g - B``
    is a metric connection with ``B_kki = b_form``.
    """
    star = hodge_star_1(b_form, g)
    gfn, sfn, o = g.fn, star.fn, g.chart.orientation
    eps = jnp.array([[0.0, 1.0], [-1.0, 0.0]])

    def fn(x):
        gx = gfn(x)
        b = -sfn(x)
        vol = o * jnp.sqrt(jnp.linalg.det(gx)) * eps
        lowered = jnp.einsum("i,kj->ikj", b, vol)
        return jnp.einsum("km,imj->ikj", jnp.linalg.inv(gx), lowered)

    return SmoothField(g.chart, fn, (2, 2, 2), slots=("_i", "^k", "_j"), name="B(b)",
                       on_nonfinite=SingularMetricError)


def _density_fn(S: SurfaceGeometry, b_form: SmoothField | None):
    K = gauss_curvature(S.metric, S.engine)
    gfn, o = S.metric.fn, S.chart.orientation
    if b_form is None:
        return lambda x: o * K.fn(x) * jnp.sqrt(jnp.linalg.det(gfn(x)))
    dstar = codifferential_1(b_form, S.metric, S.engine)
    return lambda x: o * (K.fn(x) - dstar.fn(x)) * jnp.sqrt(jnp.linalg.det(gfn(x)))


def _trace_form(S: SurfaceGeometry) -> SmoothField | None:
    if S.connection is None:
        return None
    return difference_tensor(S).trace


def gb_density(S: SurfaceGeometry, b_form: SmoothField | None = None) -> FormField:
    """``(K_g - d*_g B) dV_g`` as a 2-form, ``B`` from the connection (or given)."""
    b = b_form if b_form is not None else _trace_form(S)
    fn = _density_fn(S, b)
    return FormField(S.chart, lambda x: jnp.reshape(fn(x), (1,)), 2, name="gb density",
                     on_nonfinite=SingularMetricError)


@dataclass(frozen=True)
class GlobalGBReport:
    integral: float
    euler_characteristic: int
    residual: float

    @property
    def target(self) -> float:
        return 2.0 * math.pi * self.euler_characteristic


def global_gb(S: SurfaceGeometry | Sequence[SurfaceGeometry], nodes: int = 64) -> GlobalGBReport:
    """Integrate the Gauss-Bonnet density; snap to ``2 pi chi`` with ``chi`` even."""
    pieces = [S] if isinstance(S, SurfaceGeometry) else list(S)
    total = integrate_form([gb_density(p) for p in pieces], nodes)
    chi = 2 * int(round(total / (4.0 * math.pi)))
    return GlobalGBReport(total, chi, total - 2.0 * math.pi * chi)


# curves and polygons ----------------------------------------------------------

def _rotation(gx, o):
    """Matrix ``J`` with ``J v`` the +90 degree rotation of ``v`` (batched)."""
    eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
    root = sqrt_det(gx)
    return o * np.einsum("nkl,nil->nki", np.linalg.inv(gx), root[:, None, None] * eps[None])


def _frames(g: SmoothField, points, vel):
    gx = g.evaluate(points)
    speed = curve_speed(gx, vel)
    if np.min(speed) <= 1e-12 * max(1.0, float(np.max(speed))):
        raise DegenerateCurveError("curve has vanishing speed")
    J = _rotation(gx, g.chart.orientation)
    normal = np.einsum("nki,ni->nk", J, vel) / speed[:, None]
    return gx, speed, normal


def signed_curvature(S: SurfaceGeometry, connection: SmoothField | None, gamma: CurveSegment, t) -> np.ndarray:
    """``g(nabla'_{c'} c', N) / |c'|^2`` with ``N`` the left (inward) unit normal.

    ``connection=None`` uses the Levi-Civita connection.  For a boundary
    traversed positively the left normal is the inward normal; the value is
    the curvature per unit arclength.
    """
    conn = connection if connection is not None else S.levi_civita
    points, vel, acc = gamma.jet(np.atleast_1d(t), S.engine)
    points = S.chart.check_points(points)
    gx, speed, normal = _frames(S.metric, points, vel)
    G = conn.evaluate(points)
    cov = acc + np.einsum("nikj,ni,nj->nk", G, vel, vel)
    return np.einsum("nk,nkl,nl->n", cov, gx, normal) / speed ** 2


@dataclass(frozen=True, eq=False)
class CurvedPolygon:
    """Closed piecewise-smooth boundary with a parametrization of its interior.

    ``interior(s, t)`` maps ``[0, 1]^2`` onto the enclosed domain; it must be
    jax-traceable.  Exterior angles are computed from one-sided tangents.
    """

    segments: tuple[CurveSegment, ...]
    interior: Callable
    name: str = ""
    closure_tol: float = 1e-9
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise GeometryError("a curved polygon needs at least one segment")
        chart = segs[0].chart
        for s in segs:
            if s.chart != chart:
                raise GeometryError("polygon segments live on different charts")
        for k, s in enumerate(segs):
            nxt = segs[(k + 1) % len(segs)]
            gap = float(np.max(np.abs(s.end() - nxt.start())))
            if gap > self.closure_tol:
                raise GeometryError(f"polygon '{self.name}' does not close between segments {k} and "
                                    f"{(k + 1) % len(segs)} (gap {gap:.3g})")

    @property
    def chart(self) -> Chart:
        return self.segments[0].chart

    def signed_coordinate_area(self, nodes: int = 128) -> float:
        """``1/2 int (u dv - v du)`` around the boundary in chart coordinates."""
        ts, w = _leggauss(nodes, 0.0, 1.0)
        total = 0.0
        for s in self.segments:
            p, v, _ = s.jet(ts, DerivativeEngine("exact"))
            total += 0.5 * float(np.sum(w * (p[:, 0] * v[:, 1] - p[:, 1] * v[:, 0])))
        return total

    def exterior_angles(self, g: SmoothField, engine: DerivativeEngine | None = None) -> np.ndarray:
        """Signed turning angles in ``(-pi, pi)`` at each vertex."""
        eng = _fd(engine)
        angles = []
        for k, s in enumerate(self.segments):
            nxt = self.segments[(k + 1) % len(self.segments)]
            p, vin, _ = s.jet([1.0], eng)
            _, vout, _ = nxt.jet([0.0], eng)
            p = self.chart.check_points(p)
            gx = g.evaluate(p)
            J = _rotation(gx, g.chart.orientation)
            dot = float(np.einsum("ni,nij,nj->n", vin, gx, vout)[0])
            cross = float(np.einsum("nki,ni,nkl,nl->n", J, vin, gx, vout)[0])
            angles.append(math.atan2(cross, dot))
        return np.array(angles)

    def _patch(self, engine: DerivativeEngine):
        if engine not in self._cache:
            F = lambda st: self.interior(st[0], st[1])
            jac = engine.jacobian(F, _PATCH_CHART)
            self._cache[engine] = jax.jit(jax.vmap(lambda st: (F(st), jnp.linalg.det(jac(st).T))))
        return self._cache[engine]

    def integrate(self, density: SmoothField, g: SmoothField, nodes: int = 64,
                  engine: DerivativeEngine | None = None) -> float:
        """``int_D density dA_g`` through the interior parametrization."""
        s, ws = _leggauss(nodes, 0.0, 1.0)
        S, Tt = np.meshgrid(s, s, indexing="ij")
        W = np.outer(ws, ws).ravel()
        st = np.stack([S.ravel(), Tt.ravel()], axis=-1)
        pts, jdet = (np.asarray(z) for z in self._patch(_fd(engine))(st))
        pts = self.chart.check_points(pts)
        area = sqrt_det(g.evaluate(pts)) * np.abs(jdet)
        return _pairwise_sum(W * density.evaluate(pts) * area)


@dataclass(frozen=True)
class LocalGBReport:
    interior: float
    boundary: float
    angles: float
    residual: float
    interior_curvature: float
    interior_divergence: float
    boundary_geodesic: float
    boundary_normal: float
    exterior_angles: tuple[float, ...]

    @property
    def total(self) -> float:
        return self.interior + self.boundary + self.angles


def local_gb(S: SurfaceGeometry, connection: SmoothField | None, P: CurvedPolygon,
             b_form: SmoothField | None = None, nodes: int = 64, curve_nodes: int = 128) -> LocalGBReport:
    """Local Gauss-Bonnet terms for a curved polygon.

    The divergence 1-form ``B`` is the trace of ``D_A`` for ``connection``
    (so the metric connection actually used is the canonical one), or
    ``b_form`` when given directly.  ``connection=None`` and
    ``b_form=None`` is the classical Levi-Civita statement.
    """
    if P.chart != S.chart:
        raise GeometryError("polygon and surface live on different charts")
    if P.signed_coordinate_area() * S.chart.orientation <= 0:
        raise GeometryError(f"polygon '{P.name}' is not positively oriented")
    if b_form is None and connection is not None:
        b_form = difference_tensor(SurfaceGeometry(S.metric, connection, S.engine)).trace
    eng = S.engine
    K = gauss_curvature(S.metric, eng)
    interior_k = P.integrate(K, S.metric, nodes, eng)
    interior_b = 0.0
    if b_form is not None:
        dstar = codifferential_1(b_form, S.metric, eng)
        interior_b = -P.integrate(dstar, S.metric, nodes, eng)
    ts, w = _leggauss(curve_nodes, 0.0, 1.0)
    geo = normal_term = 0.0
    lc = S.levi_civita
    for seg in P.segments:
        points, vel, acc = seg.jet(ts, eng)
        points = S.chart.check_points(points)
        gx, speed, normal = _frames(S.metric, points, vel)
        G = lc.evaluate(points)
        cov = acc + np.einsum("nikj,ni,nj->nk", G, vel, vel)
        kappa = np.einsum("nk,nkl,nl->n", cov, gx, normal) / speed ** 2
        geo += _pairwise_sum(w * kappa * speed)
        if b_form is not None:
            normal_term += _pairwise_sum(w * np.einsum("ni,ni->n", b_form.evaluate(points), normal) * speed)
    eps = P.exterior_angles(S.metric, eng)
    interior = interior_k + interior_b
    boundary = geo + normal_term
    angles = float(np.sum(eps))
    return LocalGBReport(interior, boundary, angles, interior + boundary + angles - 2.0 * math.pi,
                         interior_k, interior_b, geo, normal_term, tuple(float(e) for e in eps))


# appendix identities -----------------------------------------------------------

def curvature_relation_check(S: SurfaceGeometry, B: SmoothField, x,
                             base: SmoothField | None = None) -> dict[str, float]:
    """Residuals of the curvature relation between ``nabla'`` and ``nabla' - B``.

    Checks ``Omega(nabla' - B) = Omega(nabla') - nabla' o B + B ^ B`` with
    ``(nabla' o B)_ij = nabla'_i B_j - nabla'_j B_i + T(nabla')_i^m_j B_m``.
    When ``base`` is omitted ``nabla'`` is Levi-Civita and the all-lowered
    form with ``g^-1`` contractions is checked as well.
    """
    eng = S.engine
    X = np.atleast_2d(np.asarray(x, dtype=float))
    prime = base if base is not None else S.levi_civita
    pfn, Bfn, gfn = prime.fn, B.fn, S.metric.fn
    dprime = eng.jacobian(pfn, S.chart)
    dB = eng.jacobian(Bfn, S.chart, B.derivative)
    new = lambda y: pfn(y) - Bfn(y)
    dnew = eng.jacobian(new, S.chart)

    def residuals(y):
        Gp, Bx = pfn(y), Bfn(y)
        Rp = T.curvature(Gp, dprime(y))
        Rn = T.curvature(new(y), dnew(y))
        cov = T.covariant_derivative_difference(dB(y), Gp, Bx)
        tors = T.torsion(Gp)
        comp = cov - jnp.transpose(cov, (1, 0, 2, 3)) + jnp.einsum("imj,mkl->ijkl", tors, Bx)
        BB = jnp.einsum("ikm,jml->ijkl", Bx, Bx)
        BB = BB - jnp.transpose(BB, (1, 0, 2, 3))
        general = jnp.max(jnp.abs(Rn - (Rp - comp + BB)))
        gx = gfn(y)
        gi = jnp.linalg.inv(gx)
        Bl = jnp.einsum("km,imj->ikj", gx, Bx)
        covl = jnp.einsum("km,ijml->ijkl", gx, cov)
        Hl = T.lower_curvature(gx, Rn)
        Rl = T.lower_curvature(gx, Rp)
        quad = (jnp.einsum("ikm,mn,jnl->ijkl", Bl, gi, Bl) - jnp.einsum("jkm,mn,inl->ijkl", Bl, gi, Bl))
        lowered = jnp.max(jnp.abs(Hl - (Rl - covl + jnp.transpose(covl, (1, 0, 2, 3)) + quad)))
        return jnp.stack([general, lowered])

    out = np.asarray(jax.jit(jax.vmap(residuals))(S.chart.check_points(X)))
    report = {"general": float(np.max(out[:, 0]))}
    if base is None:
        report["lowered"] = float(np.max(out[:, 1]))
    return report


def b_dual_check(S: SurfaceGeometry, b_form: SmoothField, x) -> dict[str, float]:
    """Residuals of ``*b = B`` and ``Pf(H) = (K_g - d*_g B) dV_g``.

    ``b`` is read off the metric difference tensor ``B_i^k_j`` built from
    the 1-form ``B`` as its ``(1, 2)`` entry in the oriented orthonormal
    frame, and ``H`` is the curvature of ``nabla_g - B_i^k_j``.
    """
    eng = S.engine
    X = S.chart.check_points(np.atleast_2d(np.asarray(x, dtype=float)))
    Btensor = metric_difference_from_trace(b_form, S.metric)
    lc = S.levi_civita
    conn = SmoothField(S.chart, lambda y: lc.fn(y) - Btensor.fn(y), (2, 2, 2), name="nabla_g - B")
    geom = tangent_bundle(S.metric, conn, eng)
    pf = euler_form(geom, corrected=False)
    density = gb_density(S, b_form)
    gfn, Bfn, o = S.metric.fn, Btensor.fn, S.chart.orientation

    def b_of(y):
        P = T.orthonormal_frame(gfn(y), o)
        Bon = jnp.einsum("ab,ibc,cd->iad", jnp.linalg.inv(P), Bfn(y), P)
        return Bon[:, 0, 1]

    bfield = SmoothField(S.chart, b_of, (2,), name="b")
    star_b = hodge_star_1(bfield, S.metric)
    dual = float(np.max(np.abs(star_b.evaluate(X) - b_form.evaluate(X))))
    pf_res = float(np.max(np.abs(2.0 * math.pi * pf.evaluate(X) - density.evaluate(X))))
    return {"star_b": dual, "pfaffian": pf_res}
