"""Vector-bundle geometry in a local frame over one chart.

A :class:`BundleGeometry` carries a fibre metric ``g[a, b]`` and connection
forms ``w[i, a, b]`` (``nabla_{d_i} E_b = w[i, a, b] E_a``).  From these we
build the non-metricity, the endomorphism-valued correction 2-form
``(g^-1 nabla g)^2``, the curvature, the canonical metric connection
``nabla + 1/2 g^-1 nabla g`` and the Euler form

    e = (2 pi)^-k Pf(Omega - 1/4 (g^-1 nabla g)^2)

evaluated in an oriented orthonormal frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import jax.numpy as jnp
import numpy as np

from . import _tensor as T
from .errors import ContractViolation, SingularMetricError
from .exterior import FormMatrix, matrix_wedge, pfaffian, symmetric_antisymmetric_split
from .fields import (
    DEFAULT_ENGINE,
    Chart,
    DerivativeEngine,
    FormField,
    SmoothField,
    integrate_form,
)

__all__ = [
    "BundleGeometry",
    "ConnectionDistanceMetric",
    "EulerNumberReport",
    "tangent_bundle",
    "non_metricity",
    "error_term",
    "curvature",
    "split_identities_check",
    "canonical_metric_connection",
    "connection_distance",
    "endomorphism_norm",
    "orthonormalize_frame",
    "euler_form",
    "euler_number",
]


@dataclass(frozen=True, eq=False)
class BundleGeometry:
    """Fibre metric and connection of a rank-``r`` bundle over a chart.

    ``orientation`` is the sign of the local frame relative to the bundle
    orientation; for a tangent bundle it equals the chart orientation.
    ``frame``, when set, records the frame change ``P`` (columns are the new
    frame vectors in the original frame) that produced this geometry.
    """

    metric: SmoothField
    connection: SmoothField
    orientation: int = 1
    engine: DerivativeEngine = DEFAULT_ENGINE
    name: str = ""
    frame: SmoothField | None = None

    def __post_init__(self):
        r = self.metric.shape[0] if self.metric.shape else 0
        n = self.metric.dimension
        if self.metric.shape != (r, r) or r == 0:
            raise ContractViolation(f"fibre metric must be square, got shape {self.metric.shape}")
        if self.connection.shape != (n, r, r):
            raise ContractViolation(f"connection forms must have shape {(n, r, r)}, got {self.connection.shape}")
        if self.connection.chart != self.metric.chart:
            raise ContractViolation("metric and connection live on different charts")
        if self.orientation not in (1, -1):
            raise ContractViolation(f"frame orientation must be +1 or -1, got {self.orientation}")

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @property
    def rank(self) -> int:
        return self.metric.shape[0]

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    def with_engine(self, engine: DerivativeEngine) -> "BundleGeometry":
        return replace(self, engine=engine)

    def with_connection(self, connection: SmoothField, name: str = "") -> "BundleGeometry":
        return replace(self, connection=connection, name=name or self.name, frame=None)

    # pointwise callbacks shared by the operations below
    def _dg(self):
        return self.engine.jacobian(self.metric.fn, self.chart, self.metric.derivative)

    def _dw(self):
        return self.engine.jacobian(self.connection.fn, self.chart, self.connection.derivative)

    def _field(self, fn, shape, name, **kw) -> SmoothField:
        return SmoothField(self.chart, fn, shape, name=name, on_nonfinite=SingularMetricError, **kw)


def tangent_bundle(metric: SmoothField, connection: SmoothField, engine: DerivativeEngine | None = None,
                   name: str = "") -> BundleGeometry:
    """Tangent bundle in the coordinate frame; ``connection[i, k, j] = Gamma_i^k_j``."""
    n = metric.dimension
    if metric.shape != (n, n):
        raise ContractViolation(f"tangent-bundle metric must be {n}x{n}, got {metric.shape}")
    return BundleGeometry(metric, connection, metric.chart.orientation, engine or DEFAULT_ENGINE, name)


@dataclass(frozen=True, eq=False)
class ConnectionDistanceMetric:
    """Metric ``h^-1 (x) g (x) g^-1`` on endomorphism-valued 1-forms."""

    base_metric: SmoothField
    fibre_metric: SmoothField


@dataclass(frozen=True)
class EulerNumberReport:
    """Integrated Euler form with its nearest integer."""

    value: float
    nearest: int
    deviation: float
    nodes: int

    def __float__(self) -> float:
        return self.value


def _nonmetricity_fn(B: BundleGeometry):
    gfn, wfn, dg = B.metric.fn, B.connection.fn, B._dg()
    return lambda x: T.non_metricity(gfn(x), dg(x), wfn(x))


def _gig_fn(B: BundleGeometry):
    """``A[i] = g^-1 nabla_i g`` as an endomorphism-valued 1-form."""
    gfn, q = B.metric.fn, _nonmetricity_fn(B)
    return lambda x: jnp.einsum("ac,icb->iab", jnp.linalg.inv(gfn(x)), q(x))


def _error_fn(B: BundleGeometry):
    a = _gig_fn(B)

    def fn(x):
        A = a(x)
        AA = jnp.einsum("iac,jcb->ijab", A, A)
        return AA - jnp.transpose(AA, (1, 0, 2, 3))

    return fn


def _curvature_fn(B: BundleGeometry):
    wfn, dw = B.connection.fn, B._dw()
    return lambda x: T.curvature(wfn(x), dw(x))


def non_metricity(B: BundleGeometry) -> SmoothField:
    """``nabla_i g_ab = d_i g_ab - w_i^c_a g_cb - w_i^c_b g_ac`` (symmetric in a, b)."""
    n, r = B.dimension, B.rank
    return B._field(_nonmetricity_fn(B), (n, r, r), "nabla g")


def error_term(B: BundleGeometry) -> SmoothField:
    """Components ``E[i, j, a, b]`` of ``(g^-1 nabla g)^2``.

    ``E_ij = A_i A_j - A_j A_i`` with ``A_i = g^-1 nabla_i g``; alternating
    in ``i, j``.
    """
    n, r = B.dimension, B.rank
    return B._field(_error_fn(B), (n, n, r, r), "(g^-1 nabla g)^2")


def curvature(B: BundleGeometry) -> SmoothField:
    """Curvature ``Omega = dw + w ^ w`` as components ``[i, j, a, b]``."""
    n, r = B.dimension, B.rank
    return B._field(_curvature_fn(B), (n, n, r, r), "Omega")


def canonical_metric_connection(B: BundleGeometry) -> BundleGeometry:
    """The metric connection ``nabla + 1/2 g^-1 nabla g`` nearest to ``nabla``."""
    wfn, a = B.connection.fn, _gig_fn(B)
    conn = B._field(lambda x: wfn(x) + 0.5 * a(x), B.connection.shape, "nabla^g")
    return B.with_connection(conn, name=f"canonical({B.name})" if B.name else "canonical")


def _frame_fn(B: BundleGeometry):
    gfn, o = B.metric.fn, B.orientation
    return lambda x: T.orthonormal_frame(gfn(x), o)


def orthonormalize_frame(B: BundleGeometry) -> BundleGeometry:
    """Re-express ``B`` in the Gram-Schmidt frame of its metric.

    Frame vectors are orthonormalized in fibre-index order and the last one
    is flipped when the geometry's frame orientation is negative, so the
    result is always positively oriented.  The connection transforms as
    ``w' = P^-1 w P + P^-1 dP``; the new metric is the identity.
    """
    pfn = _frame_fn(B)
    dp = B.engine.jacobian(pfn, B.chart)
    wfn = B.connection.fn

    def conn(x):
        P = pfn(x)
        Pi = jnp.linalg.inv(P)
        return jnp.einsum("ab,ibc,cd->iad", Pi, wfn(x), P) + jnp.einsum("ab,ibc->iac", Pi, dp(x))

    r = B.rank
    eye = SmoothField.constant(B.chart, np.eye(r), name="delta")
    frame = B._field(pfn, (r, r), "P")
    return BundleGeometry(eye, B._field(conn, B.connection.shape, "w'"), 1, B.engine,
                          name=f"orthonormal({B.name})" if B.name else "orthonormal", frame=frame)


def _require_even(B: BundleGeometry) -> int:
    if B.rank % 2:
        raise ContractViolation(f"Euler form needs even rank, got rank {B.rank}")
    k = B.rank // 2
    if 2 * k > B.dimension:
        raise ContractViolation(f"Euler form of rank {B.rank} vanishes on a {B.dimension}-dimensional base")
    return k


def _euler_fn(B: BundleGeometry, corrected: bool):
    k = _require_even(B)
    curv, err, pfn = _curvature_fn(B), _error_fn(B), _frame_fn(B)
    scale = (2.0 * math.pi) ** (-k)

    def fn(x):
        Om = curv(x)
        if corrected:
            Om = Om - 0.25 * err(x)
        P = pfn(x)
        Om = jnp.einsum("ab,ijbc,cd->ijad", jnp.linalg.inv(P), Om, P)
        return pfaffian(FormMatrix.from_two_form_components(Om)).coefficients * scale

    return fn


def euler_form(B: BundleGeometry, corrected: bool = True) -> FormField:
    """``(2 pi)^-k Pf(Omega - 1/4 (g^-1 nabla g)^2)`` in an oriented orthonormal frame.

    With ``corrected=False`` the correction term is dropped, giving the
    plain curvature Pfaffian (which equals the Euler form only for
    connections with ``(g^-1 nabla g)^2 = 0``).
    """
    k = _require_even(B)
    return FormField(B.chart, _euler_fn(B, corrected), 2 * k, name="euler form",
                     on_nonfinite=SingularMetricError)


def euler_number(B: BundleGeometry | Sequence[BundleGeometry], nodes: int | Sequence[int] = 64,
                 corrected: bool = True) -> EulerNumberReport:
    """Integral of the Euler form over a chart (or an atlas of charts)."""
    pieces = [B] if isinstance(B, BundleGeometry) else list(B)
    if not pieces:
        raise ContractViolation("euler_number needs at least one chart")
    for piece in pieces:
        if piece.rank != piece.dimension:
            raise ContractViolation(
                f"euler_number needs rank equal to base dimension, got rank {piece.rank} "
                f"over dimension {piece.dimension}")
    value = integrate_form([euler_form(p, corrected) for p in pieces], nodes)
    nearest = int(round(value))
    count = int(nodes) if np.isscalar(nodes) else int(min(nodes))
    return EulerNumberReport(value, nearest, abs(value - nearest), count)


def _at(points) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float))


def split_identities_check(B: BundleGeometry, x, atol: float = 1e-10) -> dict[str, float]:
    """Residuals of the antisymmetric/symmetric curvature splitting.

    In an orthonormal frame, with ``w = w_A + w_S``:
    ``Omega_A = d w_A + w_A ^ w_A + w_S ^ w_S`` and
    ``Omega_S = d w_S + w_A ^ w_S + w_S ^ w_A``.
    Returns the max-abs residual of each identity over the given point(s).
    """
    X = _at(x)
    n, r = B.dimension, B.rank
    g = B.metric.evaluate(X)
    if np.max(np.abs(g - np.eye(r))) > atol:
        raise ContractViolation("split identities need an orthonormal frame (call orthonormalize_frame first)")
    w = B.connection.evaluate(X)
    dw = SmoothField(B.chart, B._dw(), (n, n, r, r)).evaluate(X)
    Om = curvature(B).evaluate(X)
    res_a = res_s = 0.0
    for p in range(len(X)):
        W = FormMatrix.from_one_form_components(w[p])
        WA, WS = symmetric_antisymmetric_split(W)
        dd = dw[p] - np.transpose(dw[p], (1, 0, 2, 3))
        dW = FormMatrix.from_two_form_components(dd)
        dWA, dWS = symmetric_antisymmetric_split(dW)
        OmA, OmS = symmetric_antisymmetric_split(FormMatrix.from_two_form_components(Om[p]))
        lhs_a = dWA + matrix_wedge(WA, WA) + matrix_wedge(WS, WS)
        lhs_s = dWS + matrix_wedge(WA, WS) + matrix_wedge(WS, WA)
        res_a = max(res_a, (OmA - lhs_a).max_abs())
        res_s = max(res_s, (OmS - lhs_s).max_abs())
    return {"antisymmetric": res_a, "symmetric": res_s}


def connection_distance(B: BundleGeometry, other: SmoothField, mu: ConnectionDistanceMetric, x) -> np.ndarray:
    """``|w - w'|_mu`` at ``x`` with ``mu = h^-1 (x) g (x) g^-1``.

    ``other`` holds the connection forms of the second connection in the
    same frame.  Returns one value per point.
    """
    if other.shape != B.connection.shape or other.chart != B.chart:
        raise ContractViolation("connections must share chart and rank")
    X = _at(x)
    delta = B.connection.evaluate(X) - other.evaluate(X)
    return endomorphism_norm(delta, mu.base_metric.evaluate(X), mu.fibre_metric.evaluate(X))


def endomorphism_norm(delta, h, g) -> np.ndarray:
    """Pointwise ``|delta|`` of endomorphism-valued 1-forms ``delta[p, i, a, b]``.

    ``h`` and ``g`` are batches of base and fibre metrics; the norm uses
    ``h^-1 (x) g (x) g^-1``.
    """
    delta, h, g = (np.asarray(a, dtype=float) for a in (delta, h, g))
    hi, gi = np.linalg.inv(h), np.linalg.inv(g)
    sq = np.einsum("pij,pac,pbd,piab,pjcd->p", hi, g, gi, delta, delta)
    return np.sqrt(np.maximum(sq, 0.0))
