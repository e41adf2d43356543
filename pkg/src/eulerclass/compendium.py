"""Curvature compendium for the Levi-Civita connection plus pure-trace terms.

The connection family is

    Gamma_i^k_j = Gamma_g_i^k_j + alpha_i delta^k_j + beta_j delta^k_i + gamma^k g_ij

for 1-forms ``alpha, beta, gamma`` (often ``a phi, b phi, c phi``).  Every
tensor below has a closed-form evaluator built from Levi-Civita data of
``g`` and first derivatives of the 1-forms, and a direct twin computed by
differentiating the connection itself.  ``verify`` compares the two.

Conventions: ``(d psi)_ij = d_i psi_j - d_j psi_i``; the Lie derivative is
``(L_X g)_ij = nabla_i X_j + nabla_j X_i``; ``d* psi = -g^ij nabla_i psi_j``;
``u . v`` is the symmetrized product ``(u v + v u) / 2``; the
Kulkarni-Nomizu product is ``(h o k)_ijkl = h_ik k_jl + h_jl k_ik - h_il k_jk - h_jk k_il``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import _tensor as T
from .errors import ContractViolation, DomainError, RegistryError, SingularMetricError
from .fields import DEFAULT_ENGINE, DerivativeEngine, SmoothField, integrate_function
from .gaussbonnet import levi_civita

__all__ = [
    "AnsatzConnection",
    "QuasiEinsteinParams",
    "CoefficientSolution",
    "TensorReport",
    "build_ansatz",
    "torsion",
    "ansatz_torsion_closed_form",
    "ansatz_nonmetricity_closed_form",
    "ansatz_canonical_metric_closed_form",
    "TENSOR_NAMES",
    "closed_form_tensor",
    "direct_tensor",
    "verify",
    "solve_coefficients",
    "gmqe_residual",
    "averaged_tensors",
    "averaged_tensors_direct",
    "functionals",
    "nonmetricity_norm_squared",
]


# ---------------------------------------------------------------------------
# connection family

@dataclass(frozen=True, eq=False)
class AnsatzConnection:
    """Levi-Civita connection of ``metric`` shifted by three pure-trace 1-forms.

    ``coefficients`` and ``phi`` are recorded when the 1-forms are multiples
    of a single form (``alpha = a phi`` and so on); the specialized closed
    forms need them.
    """

    metric: SmoothField
    alpha: SmoothField
    beta: SmoothField
    gamma: SmoothField
    engine: DerivativeEngine = DEFAULT_ENGINE
    phi: SmoothField | None = None
    coefficients: tuple[float, float, float] | None = None

    def __post_init__(self):
        n = self.metric.dimension
        if self.metric.shape != (n, n):
            raise ContractViolation(f"metric must have shape ({n}, {n}), got {self.metric.shape}")
        for f in (self.alpha, self.beta, self.gamma):
            if f.shape != (n,) or f.chart != self.metric.chart:
                raise ContractViolation("ansatz 1-forms must be (n,)-shaped fields on the metric's chart")

    @classmethod
    def from_coefficients(cls, g: SmoothField, phi: SmoothField, a: float, b: float, c: float,
                          engine: DerivativeEngine | None = None) -> "AnsatzConnection":
        a, b, c = float(a), float(b), float(c)
        pf = phi.fn
        scaled = lambda s, nm: SmoothField(phi.chart, lambda x: s * pf(x), phi.shape, slots=("_i",), name=nm)
        return cls(g, scaled(a, "alpha"), scaled(b, "beta"), scaled(c, "gamma"),
                   engine if engine is not None else DEFAULT_ENGINE, phi, (a, b, c))

    @property
    def dimension(self) -> int:
        return self.metric.dimension

    @property
    def chart(self):
        return self.metric.chart

    def with_engine(self, engine: DerivativeEngine) -> "AnsatzConnection":
        return AnsatzConnection(self.metric, self.alpha, self.beta, self.gamma, engine, self.phi, self.coefficients)

    @property
    def connection(self) -> SmoothField:
        """Coefficients ``Gamma[i, k, j]`` of the shifted connection."""
        lc = levi_civita(self.metric, self.engine)
        gfn, lfn = self.metric.fn, lc.fn
        af, bf, cf = self.alpha.fn, self.beta.fn, self.gamma.fn
        n = self.dimension
        eye = jnp.eye(n)

        def fn(x):
            gx = gfn(x)
            up = jnp.linalg.solve(gx, cf(x))
            return (lfn(x) + jnp.einsum("i,kj->ikj", af(x), eye) + jnp.einsum("j,ki->ikj", bf(x), eye)
                    + jnp.einsum("k,ij->ikj", up, gx))

        return SmoothField(self.chart, fn, (n, n, n), slots=("_i", "^k", "_j"), name="ansatz",
                           on_nonfinite=SingularMetricError)


def build_ansatz(g: SmoothField, phi: SmoothField, a: float, b: float, c: float,
                 engine: DerivativeEngine | None = None) -> SmoothField:
    """Connection coefficients of ``Gamma_g + a phi_i delta + b phi_j delta + c phi^k g_ij``."""
    return AnsatzConnection.from_coefficients(g, phi, a, b, c, engine).connection


def torsion(connection: SmoothField) -> SmoothField:
    """``T_i^k_j = Gamma_i^k_j - Gamma_j^k_i``."""
    cfn = connection.fn
    return SmoothField(connection.chart, lambda x: T.torsion(cfn(x)), connection.shape,
                       slots=("_i", "^k", "_j"), name="torsion")


def ansatz_torsion_closed_form(alpha: SmoothField, beta: SmoothField) -> SmoothField:
    """``(alpha - beta)_i delta^k_j - (alpha - beta)_j delta^k_i``."""
    af, bf, n = alpha.fn, beta.fn, alpha.dimension
    eye = jnp.eye(n)

    def fn(x):
        d = af(x) - bf(x)
        t = jnp.einsum("i,kj->ikj", d, eye)
        return t - jnp.transpose(t, (2, 1, 0))

    return SmoothField(alpha.chart, fn, (n, n, n), slots=("_i", "^k", "_j"), name="torsion (closed form)")


def ansatz_nonmetricity_closed_form(alpha: SmoothField, beta: SmoothField, gamma: SmoothField,
                                    g: SmoothField) -> SmoothField:
    """``nabla_i g_jk = -2 alpha_i g_jk - (beta + gamma)_j g_ik - (beta + gamma)_k g_ij``."""
    af, bf, cf, gfn, n = alpha.fn, beta.fn, gamma.fn, g.fn, g.dimension

    def fn(x):
        gx, s = gfn(x), bf(x) + cf(x)
        return (-2.0 * jnp.einsum("i,jk->ijk", af(x), gx) - jnp.einsum("j,ik->ijk", s, gx)
                - jnp.einsum("k,ij->ijk", s, gx))

    return SmoothField(g.chart, fn, (n, n, n), slots=("_i", "_j", "_k"), name="non-metricity (closed form)")


def ansatz_canonical_metric_closed_form(beta: SmoothField, gamma: SmoothField, g: SmoothField,
                                        engine: DerivativeEngine | None = None) -> dict[str, SmoothField]:
    """Canonical metric connection ``nabla_g - B`` of the family.

    Returns the difference tensor ``B_i^k_j = -(psi_j/2) delta^k_i +
    (psi^k/2) g_ij`` with ``psi = beta - gamma``, its trace
    ``B_j = -(n-1)/2 psi_j`` and the resulting connection coefficients.
    """
    bf, cf, gfn, n = beta.fn, gamma.fn, g.fn, g.dimension
    lc = levi_civita(g, engine)
    eye = jnp.eye(n)

    def diff(x):
        gx, psi = gfn(x), bf(x) - cf(x)
        return (-0.5 * jnp.einsum("j,ki->ikj", psi, eye)
                + 0.5 * jnp.einsum("k,ij->ikj", jnp.linalg.solve(gx, psi), gx))

    kw = dict(slots=("_i", "^k", "_j"), on_nonfinite=SingularMetricError)
    return {
        "difference": SmoothField(g.chart, diff, (n, n, n), name="B", **kw),
        "trace": SmoothField(g.chart, lambda x: -0.5 * (n - 1) * (bf(x) - cf(x)), (n,), slots=("_i",), name="B trace"),
        "connection": SmoothField(g.chart, lambda x: lc.fn(x) - diff(x), (n, n, n), name="canonical", **kw),
    }


# ---------------------------------------------------------------------------
# pointwise algebra

class _Jet:
    """A 1-form value with its coordinate Jacobian ``d[i, j] = d_i psi_j``."""

    __slots__ = ("v", "d")

    def __init__(self, v, d):
        self.v, self.d = v, d

    def __add__(self, other):
        return _Jet(self.v + other.v, self.d + other.d)

    def __sub__(self, other):
        return _Jet(self.v - other.v, self.d - other.d)

    def __rmul__(self, s):
        return _Jet(s * self.v, s * self.d)

    def __neg__(self):
        return _Jet(-self.v, -self.d)


class _Point:
    """Levi-Civita data of ``g`` at one point plus helpers on 1-form jets."""

    def __init__(self, g, dg, lc, dlc):
        self.n = g.shape[0]
        self.g = g
        self.gi = jnp.linalg.inv(g)
        self.lc = lc
        self.eye = jnp.eye(self.n)
        self.Rbar = T.curvature(lc, dlc)
        self.Rbar_low = T.lower_curvature(g, self.Rbar)
        self.rbar = T.ricci_trace(self.Rbar)
        self.sbar = jnp.einsum("jl,jl->", self.gi, self.rbar)

    def nabla(self, p: _Jet):
        """``nabla_i psi_j``."""
        return T.covariant_derivative_1form(p.d, self.lc, p.v)

    def nabla_up(self, p: _Jet):
        """``nabla_i psi^k`` as ``[i, k]``."""
        return self.nabla(p) @ self.gi

    def d(self, p: _Jet):
        return p.d - p.d.T

    def lie(self, p: _Jet):
        nb = self.nabla(p)
        return nb + nb.T

    def codiff(self, p: _Jet):
        return -jnp.einsum("ij,ij->", self.gi, self.nabla(p))

    def up(self, p: _Jet):
        return self.gi @ p.v

    def inner(self, p: _Jet, q: _Jet):
        return p.v @ self.gi @ q.v

    def norm2(self, p: _Jet):
        return self.inner(p, p)

    @staticmethod
    def outer(p: _Jet, q: _Jet):
        return jnp.outer(p.v, q.v)

    @staticmethod
    def sym_product(p: _Jet, q: _Jet):
        return 0.5 * (jnp.outer(p.v, q.v) + jnp.outer(q.v, p.v))

    def trace(self, t):
        return jnp.einsum("ij,ij->", self.gi, t)

    def traceless(self, t):
        return t - self.trace(t) / self.n * self.g


# closed-form curvature of the family --------------------------------------

def _curvature_13(P: _Point, al: _Jet, be: _Jet, ga: _Jet):
    I, g = P.eye, P.g
    nb, ngu = P.nabla(be), P.nabla_up(ga)
    b, c, cu = be.v, ga.v, P.up(ga)
    R = P.Rbar + jnp.einsum("ij,kl->ijkl", P.d(al), I)
    R = R + jnp.einsum("il,kj->ijkl", nb, I) - jnp.einsum("jl,ki->ijkl", nb, I)
    R = R + jnp.einsum("ik,jl->ijkl", ngu, g) - jnp.einsum("jk,il->ijkl", ngu, g)
    R = R + jnp.einsum("ki,j,l->ijkl", I, b, b) - jnp.einsum("kj,i,l->ijkl", I, b, b)
    R = R + jnp.einsum("i,jl,k->ijkl", c, g, cu) - jnp.einsum("j,il,k->ijkl", c, g, cu)
    R = R + P.inner(be, ga) * (jnp.einsum("ki,jl->ijkl", I, g) - jnp.einsum("kj,il->ijkl", I, g))
    return R


def _curvature_04(P: _Point, al: _Jet, be: _Jet, ga: _Jet):
    g = P.g
    nb, ng = P.nabla(be), P.nabla(ga)
    b, c = be.v, ga.v
    R = P.Rbar_low + jnp.einsum("ij,kl->ijkl", P.d(al), g)
    R = R + jnp.einsum("il,kj->ijkl", nb, g) - jnp.einsum("jl,ki->ijkl", nb, g)
    R = R + jnp.einsum("ik,jl->ijkl", ng, g) - jnp.einsum("jk,il->ijkl", ng, g)
    R = R + jnp.einsum("ik,j,l->ijkl", g, b, b) - jnp.einsum("jk,i,l->ijkl", g, b, b)
    R = R + jnp.einsum("i,jl,k->ijkl", c, g, c) - jnp.einsum("j,il,k->ijkl", c, g, c)
    R = R + P.inner(be, ga) * (jnp.einsum("ik,jl->ijkl", g, g) - jnp.einsum("jk,il->ijkl", g, g))
    return R


def _ricci(P, al, be, ga):
    n = P.n
    X = (n - 1) * be + ga
    sym = (P.rbar - 0.5 * P.lie(X) + (n - 1) * P.outer(be, be) - P.outer(ga, ga)
           + (-P.codiff(ga) + P.inner(X, ga)) * P.g)
    # the antisymmetric part enters with -d(alpha): tracing the d(alpha) delta^k_l
    # term of the curvature over i=k gives d_l alpha_j - d_j alpha_l
    anti = -P.d(al) - 0.5 * P.d(X)
    return sym, anti


def _scalar(P, al, be, ga):
    n = P.n
    return (P.sbar + (n - 1) * P.codiff(be - ga)
            + (n - 1) * (P.norm2(be) + n * P.inner(be, ga) + P.norm2(ga)))


def _ricci_traceless(P, al, be, ga):
    n = P.n
    X = (n - 1) * be + ga
    return (P.rbar - 0.5 * P.lie(X) + (n - 1) * P.outer(be, be) - P.outer(ga, ga)
            - (P.sbar + P.codiff(X) + (n - 1) * P.norm2(be) - P.norm2(ga)) / n * P.g)


def _rho(P, al, be, ga):
    n = P.n
    Y = be + (n - 1) * ga
    sym = (-P.rbar - 0.5 * P.lie(Y) + P.outer(be, be) - (n - 1) * P.outer(ga, ga)
           + (-P.codiff(be) - P.inner(be, Y)) * P.g)
    anti = -P.d(al) - 0.5 * P.d(Y)
    return sym, anti


def _rho_traceless(P, al, be, ga):
    n = P.n
    Y = be + (n - 1) * ga
    return (-P.rbar - 0.5 * P.lie(Y) + P.outer(be, be) - (n - 1) * P.outer(ga, ga)
            - (-P.sbar + P.codiff(Y) + P.norm2(be) - (n - 1) * P.norm2(ga)) / n * P.g)


def _half_difference_traceless(P, al, be, ga):
    n = P.n
    psi = be - ga
    k = 0.5 * (n - 2)
    return (P.rbar + k * (-0.5 * P.lie(psi) + P.outer(be, be) + P.outer(ga, ga))
            - (P.sbar + k * (P.codiff(psi) + P.norm2(be) + P.norm2(ga))) / n * P.g)


def _half_difference_anti(P, al, be, ga):
    return -0.25 * (P.n - 2) * P.d(be - ga)


def _half_sum_sym(P, al, be, ga):
    n = P.n
    s, dlt = be + ga, be - ga
    return (-0.25 * n * P.lie(s) + 0.5 * n * P.sym_product(s, dlt)
            - 0.5 * (P.codiff(s) + P.inner(s, dlt)) * P.g)


def _half_sum_anti(P, al, be, ga):
    return -P.d(al) - 0.25 * P.n * P.d(be + ga)


def _zeta(P, al, be, ga):
    return P.n * P.d(al) + P.d(be + ga)


def _canonical_13(P, al, be, ga):
    psi = be - ga
    half = 0.5 * psi
    zero = _Jet(jnp.zeros_like(psi.v), jnp.zeros_like(psi.d))
    return _curvature_13(P, zero, half, -half)


def _canonical_04(P, al, be, ga):
    psi = be - ga
    nb, g = P.nabla(psi), P.g
    H = (P.Rbar_low + 0.5 * (jnp.einsum("il,kj->ijkl", nb, g) - jnp.einsum("jl,ki->ijkl", nb, g)
                             - jnp.einsum("ik,jl->ijkl", nb, g) + jnp.einsum("jk,il->ijkl", nb, g)))
    # with the standard Kulkarni-Nomizu product, g o g = 2 (g_ik g_jl - g_il g_jk),
    # so the |psi|^2 term carries 1/8
    return H + 0.25 * T.kulkarni_nomizu(g, P.outer(psi, psi)) - 0.125 * P.norm2(psi) * T.kulkarni_nomizu(g, g)


def _canonical_ricci(P, al, be, ga):
    n = P.n
    psi = be - ga
    k = 0.25 * (n - 2)
    sym = P.rbar - k * P.lie(psi) + k * P.outer(psi, psi) + (0.5 * P.codiff(psi) - k * P.norm2(psi)) * P.g
    return sym, -k * P.d(psi)


def _canonical_scalar(P, al, be, ga):
    n = P.n
    psi = be - ga
    return P.sbar + (n - 1) * P.codiff(psi) - 0.25 * (n - 1) * (n - 2) * P.norm2(psi)


def _canonical_traceless(P, al, be, ga):
    n = P.n
    psi = be - ga
    k = 0.25 * (n - 2)
    return (P.rbar - k * P.lie(psi) + k * P.outer(psi, psi)
            - (P.sbar + 0.5 * (n - 2) * P.codiff(psi) + k * P.norm2(psi)) / n * P.g)


_GENERAL: dict[str, Callable] = {
    "curvature": _curvature_13,
    "curvature_lowered": _curvature_04,
    "ricci": lambda *a: sum(_ricci(*a)),
    "ricci_sym": lambda *a: _ricci(*a)[0],
    "ricci_anti": lambda *a: _ricci(*a)[1],
    "scalar": _scalar,
    "ricci_traceless": _ricci_traceless,
    "rho": lambda *a: sum(_rho(*a)),
    "rho_sym": lambda *a: _rho(*a)[0],
    "rho_anti": lambda *a: _rho(*a)[1],
    "rho_trace": lambda *a: -_scalar(*a),
    "rho_traceless": _rho_traceless,
    "half_difference_traceless": _half_difference_traceless,
    "half_difference_anti": _half_difference_anti,
    "half_sum_sym": _half_sum_sym,
    "half_sum_anti": _half_sum_anti,
    "zeta": _zeta,
    "canonical_curvature": _canonical_13,
    "canonical_curvature_lowered": _canonical_04,
    "canonical_ricci": lambda *a: sum(_canonical_ricci(*a)),
    "canonical_ricci_sym": lambda *a: _canonical_ricci(*a)[0],
    "canonical_ricci_anti": lambda *a: _canonical_ricci(*a)[1],
    "canonical_scalar": _canonical_scalar,
    "canonical_ricci_traceless": _canonical_traceless,
}


# specialized closed forms (alpha = a phi, beta = b phi, gamma = c phi) ------

def _s_curvature_13(P, f, a, b, c):
    I, g = P.eye, P.g
    nb, nu, v, vu = P.nabla(f), P.nabla_up(f), f.v, P.up(f)
    R = P.Rbar + a * jnp.einsum("ij,kl->ijkl", P.d(f), I)
    R = R + b * (jnp.einsum("il,kj->ijkl", nb, I) - jnp.einsum("jl,ki->ijkl", nb, I))
    R = R + c * (jnp.einsum("ik,jl->ijkl", nu, g) - jnp.einsum("jk,il->ijkl", nu, g))
    R = R + b * b * (jnp.einsum("ki,j,l->ijkl", I, v, v) - jnp.einsum("kj,i,l->ijkl", I, v, v))
    R = R + c * c * (jnp.einsum("i,jl,k->ijkl", v, g, vu) - jnp.einsum("j,il,k->ijkl", v, g, vu))
    return R + b * c * P.norm2(f) * (jnp.einsum("ki,jl->ijkl", I, g) - jnp.einsum("kj,il->ijkl", I, g))


def _s_curvature_04(P, f, a, b, c):
    g = P.g
    nb, v = P.nabla(f), f.v
    R = P.Rbar_low + a * jnp.einsum("ij,kl->ijkl", P.d(f), g)
    R = R + b * (jnp.einsum("il,kj->ijkl", nb, g) - jnp.einsum("jl,ki->ijkl", nb, g))
    R = R + c * (jnp.einsum("ik,jl->ijkl", nb, g) - jnp.einsum("jk,il->ijkl", nb, g))
    R = R + b * b * (jnp.einsum("ik,j,l->ijkl", g, v, v) - jnp.einsum("jk,i,l->ijkl", g, v, v))
    R = R + c * c * (jnp.einsum("i,jl,k->ijkl", v, g, v) - jnp.einsum("j,il,k->ijkl", v, g, v))
    return R + b * c * P.norm2(f) * (jnp.einsum("ik,jl->ijkl", g, g) - jnp.einsum("jk,il->ijkl", g, g))


def _s_ricci(P, f, a, b, c):
    n = P.n
    x = (n - 1) * b + c
    sym = (P.rbar - 0.5 * x * P.lie(f) + ((n - 1) * b * b - c * c) * P.outer(f, f)
           + c * (-P.codiff(f) + x * P.norm2(f)) * P.g)
    return sym, (-a - 0.5 * x) * P.d(f)


def _s_scalar(P, f, a, b, c):
    n = P.n
    return P.sbar + (n - 1) * (b - c) * P.codiff(f) + (n - 1) * (b * b + n * b * c + c * c) * P.norm2(f)


def _s_ricci_traceless(P, f, a, b, c):
    n = P.n
    x, q = (n - 1) * b + c, (n - 1) * b * b - c * c
    return (P.rbar - 0.5 * x * P.lie(f) + q * P.outer(f, f)
            - (P.sbar + x * P.codiff(f) + q * P.norm2(f)) / n * P.g)


def _s_rho(P, f, a, b, c):
    n = P.n
    y = b + (n - 1) * c
    sym = (-P.rbar - 0.5 * y * P.lie(f) + (b * b - (n - 1) * c * c) * P.outer(f, f)
           + b * (-P.codiff(f) - y * P.norm2(f)) * P.g)
    return sym, (-a - 0.5 * y) * P.d(f)


def _s_rho_traceless(P, f, a, b, c):
    n = P.n
    y, q = b + (n - 1) * c, b * b - (n - 1) * c * c
    return (-P.rbar - 0.5 * y * P.lie(f) + q * P.outer(f, f)
            - (-P.sbar + y * P.codiff(f) + q * P.norm2(f)) / n * P.g)


def _s_half_difference_traceless(P, f, a, b, c):
    n = P.n
    k = 0.5 * (n - 2)
    return (P.rbar + k * (-(b - c) * 0.5 * P.lie(f) + (b * b + c * c) * P.outer(f, f))
            - (P.sbar + k * ((b - c) * P.codiff(f) + (b * b + c * c) * P.norm2(f))) / n * P.g)


def _s_half_sum_sym(P, f, a, b, c):
    n = P.n
    return (b + c) * (-0.25 * n * P.lie(f) + 0.5 * n * (b - c) * P.outer(f, f)
                      - 0.5 * (P.codiff(f) + (b - c) * P.norm2(f)) * P.g)


def _s_canonical_13(P, f, a, b, c):
    I, g = P.eye, P.g
    nb, nu, v, vu = P.nabla(f), P.nabla_up(f), f.v, P.up(f)
    k, q = 0.5 * (b - c), 0.25 * (b - c) ** 2
    H = P.Rbar + k * (jnp.einsum("il,kj->ijkl", nb, I) - jnp.einsum("jl,ki->ijkl", nb, I)
                      - jnp.einsum("ik,jl->ijkl", nu, g) + jnp.einsum("jk,il->ijkl", nu, g))
    H = H + q * (jnp.einsum("ki,j,l->ijkl", I, v, v) - jnp.einsum("kj,i,l->ijkl", I, v, v))
    H = H + q * (jnp.einsum("i,jl,k->ijkl", v, g, vu) - jnp.einsum("j,il,k->ijkl", v, g, vu))
    return H - q * P.norm2(f) * (jnp.einsum("ki,jl->ijkl", I, g) - jnp.einsum("kj,il->ijkl", I, g))


def _s_canonical_04(P, f, a, b, c):
    g, nb = P.g, P.nabla(f)
    k, q = 0.5 * (b - c), 0.25 * (b - c) ** 2
    H = P.Rbar_low + k * (jnp.einsum("il,kj->ijkl", nb, g) - jnp.einsum("jl,ki->ijkl", nb, g)
                          - jnp.einsum("ik,jl->ijkl", nb, g) + jnp.einsum("jk,il->ijkl", nb, g))
    return (H + q * T.kulkarni_nomizu(g, P.outer(f, f))
            - 0.5 * q * P.norm2(f) * T.kulkarni_nomizu(g, g))


def _s_canonical_ricci(P, f, a, b, c):
    n = P.n
    k, e = 0.25 * (n - 2), b - c
    sym = (P.rbar - k * e * P.lie(f) + k * e * e * P.outer(f, f)
           + (0.5 * e * P.codiff(f) - k * e * e * P.norm2(f)) * P.g)
    return sym, -k * e * P.d(f)


def _s_canonical_scalar(P, f, a, b, c):
    n, e = P.n, b - c
    return P.sbar + (n - 1) * e * P.codiff(f) - 0.25 * (n - 1) * (n - 2) * e * e * P.norm2(f)


def _s_canonical_traceless(P, f, a, b, c):
    n = P.n
    k, e = 0.25 * (n - 2), b - c
    return (P.rbar - k * e * P.lie(f) + k * e * e * P.outer(f, f)
            - (P.sbar + 0.5 * (n - 2) * e * P.codiff(f) + k * e * e * P.norm2(f)) / n * P.g)


_SPECIALIZED: dict[str, Callable] = {
    "curvature": _s_curvature_13,
    "curvature_lowered": _s_curvature_04,
    "ricci": lambda *a: sum(_s_ricci(*a)),
    "ricci_sym": lambda *a: _s_ricci(*a)[0],
    "ricci_anti": lambda *a: _s_ricci(*a)[1],
    "scalar": _s_scalar,
    "ricci_traceless": _s_ricci_traceless,
    "rho": lambda *a: sum(_s_rho(*a)),
    "rho_sym": lambda *a: _s_rho(*a)[0],
    "rho_anti": lambda *a: _s_rho(*a)[1],
    "rho_trace": lambda *a: -_s_scalar(*a),
    "rho_traceless": _s_rho_traceless,
    "half_difference_traceless": _s_half_difference_traceless,
    "half_difference_anti": lambda P, f, a, b, c: -0.25 * (P.n - 2) * (b - c) * P.d(f),
    "half_sum_sym": _s_half_sum_sym,
    "half_sum_anti": lambda P, f, a, b, c: (-a - 0.25 * P.n * (b + c)) * P.d(f),
    "zeta": lambda P, f, a, b, c: (P.n * a + b + c) * P.d(f),
    "canonical_curvature": _s_canonical_13,
    "canonical_curvature_lowered": _s_canonical_04,
    "canonical_ricci": lambda *a: sum(_s_canonical_ricci(*a)),
    "canonical_ricci_sym": lambda *a: _s_canonical_ricci(*a)[0],
    "canonical_ricci_anti": lambda *a: _s_canonical_ricci(*a)[1],
    "canonical_scalar": _s_canonical_scalar,
    "canonical_ricci_traceless": _s_canonical_traceless,
}

TENSOR_NAMES: tuple[str, ...] = tuple(_GENERAL)

_DESCRIPTIONS: dict[str, str] = {
    "curvature": "R_ij^k_l of the shifted connection",
    "curvature_lowered": "R_ijkl = g_km R_ij^m_l",
    "ricci": "Ricci trace r_jl = R_ij^i_l",
    "ricci_sym": "symmetric part of r",
    "ricci_anti": "antisymmetric part of r",
    "scalar": "s = g^jl r_jl",
    "ricci_traceless": "traceless symmetric part of r",
    "rho": "second trace rho_jk = g^il R_ijkl",
    "rho_sym": "symmetric part of rho",
    "rho_anti": "antisymmetric part of rho",
    "rho_trace": "sigma = g^jk rho_jk (equals -s)",
    "rho_traceless": "traceless symmetric part of rho",
    "half_difference_traceless": "(r - rho)/2, traceless symmetric part",
    "half_difference_anti": "(r - rho)/2, antisymmetric part",
    "half_sum_sym": "(r + rho)/2, symmetric part (already traceless)",
    "half_sum_anti": "(r + rho)/2, antisymmetric part",
    "zeta": "zeta_ij = R_ij^k_k",
    "canonical_curvature": "curvature H_ij^k_l of the canonical metric connection",
    "canonical_curvature_lowered": "H_ijkl = g_km H_ij^m_l",
    "canonical_ricci": "h_jl = H_ij^i_l",
    "canonical_ricci_sym": "symmetric part of h",
    "canonical_ricci_anti": "antisymmetric part of h",
    "canonical_scalar": "tau = g^jl h_jl",
    "canonical_ricci_traceless": "traceless symmetric part of h",
}


def describe_tensor(name: str) -> str:
    _check_name(name)
    return _DESCRIPTIONS[name]


def _check_name(name: str) -> None:
    if name not in _GENERAL:
        raise RegistryError(f"unknown tensor {name!r}; known: {', '.join(TENSOR_NAMES)}")


def _jet_fns(A: AnsatzConnection):
    eng, chart = A.engine, A.chart
    lc = levi_civita(A.metric, eng)
    dlc = eng.jacobian(lc.fn, chart)
    dg = eng.jacobian(A.metric.fn, chart, A.metric.derivative)
    forms = [(f.fn, eng.jacobian(f.fn, chart, f.derivative)) for f in (A.alpha, A.beta, A.gamma)]
    phi = None
    if A.phi is not None:
        phi = (A.phi.fn, eng.jacobian(A.phi.fn, chart, A.phi.derivative))
    gfn, lfn = A.metric.fn, lc.fn

    def point(x):
        return _Point(gfn(x), dg(x), lfn(x), dlc(x))

    return point, forms, phi


def _closed_all(A: AnsatzConnection, names: Sequence[str], specialized: bool):
    """Per-point callback returning ``{name: closed form}`` for ``names``."""
    for name in names:
        _check_name(name)
    point, forms, phi = _jet_fns(A)
    if specialized:
        if A.coefficients is None or phi is None:
            raise ContractViolation("specialized closed forms need an ansatz built from (phi, a, b, c)")
        a, b, c = A.coefficients

        def fn(x):
            P, f = point(x), _Jet(phi[0](x), phi[1](x))
            return {name: _SPECIALIZED[name](P, f, a, b, c) for name in names}

        return fn

    def fn(x):
        P = point(x)
        jets = [_Jet(v(x), d(x)) for v, d in forms]
        return {name: _GENERAL[name](P, *jets) for name in names}

    return fn


def _shape(name: str, n: int) -> tuple[int, ...]:
    if name in ("scalar", "rho_trace", "canonical_scalar"):
        return ()
    if "curvature" in name:
        return (n, n, n, n)
    return (n, n)


def closed_form_tensor(A: AnsatzConnection, name: str, x=None, specialized: bool = False):
    """Closed-form evaluator for a registered tensor.

    Returns the field when ``x`` is ``None``, otherwise its values at ``x``.
    ``specialized=True`` uses the forms written in terms of ``(phi, a, b, c)``.
    """
    allf = _closed_all(A, (name,), specialized)
    field = SmoothField(A.chart, lambda y: allf(y)[name], _shape(name, A.dimension), name=name,
                        on_nonfinite=SingularMetricError)
    return field if x is None else field.evaluate(x)


def _trace_table(gx, R, with_rho: bool):
    gi = jnp.linalg.inv(gx)
    n = gx.shape[0]
    Rl = T.lower_curvature(gx, R)
    ric = T.ricci_trace(R)
    tr = lambda t: jnp.einsum("ij,ij->", gi, t)
    tless = lambda t: t - tr(t) / n * gx
    sym, anti = T.sym(ric), T.antisym(ric)
    table = {"curvature": R, "curvature_lowered": Rl, "ricci": ric, "ricci_sym": sym, "ricci_anti": anti,
             "scalar": tr(ric), "ricci_traceless": tless(sym)}
    if with_rho:
        rho = jnp.einsum("il,ijkl->jk", gi, Rl)
        rsym, ranti = T.sym(rho), T.antisym(rho)
        table.update({
            "rho": rho, "rho_sym": rsym, "rho_anti": ranti, "rho_trace": tr(rho), "rho_traceless": tless(rsym),
            "half_difference_traceless": 0.5 * (tless(sym) - tless(rsym)),
            "half_difference_anti": 0.5 * (anti - ranti),
            "half_sum_sym": 0.5 * (sym + rsym),
            "half_sum_anti": 0.5 * (anti + ranti),
            "zeta": jnp.einsum("ijkk->ij", R),
        })
    return table


def _direct_all(A: AnsatzConnection, names: Sequence[str]):
    """Per-point callback returning ``{name: direct value}`` for ``names``."""
    for name in names:
        _check_name(name)
    eng, chart = A.engine, A.chart
    cfn, gfn = A.connection.fn, A.metric.fn
    dg = eng.jacobian(gfn, chart, A.metric.derivative)
    want_plain = any(not nm.startswith("canonical") for nm in names)
    want_canon = any(nm.startswith("canonical") for nm in names)

    def eta(x):
        gx = gfn(x)
        q = T.non_metricity(gx, dg(x), cfn(x))
        return cfn(x) + 0.5 * jnp.einsum("ac,icb->iab", jnp.linalg.inv(gx), q)

    dconn = eng.jacobian(cfn, chart) if want_plain else None
    deta = eng.jacobian(eta, chart) if want_canon else None

    def fn(x):
        gx = gfn(x)
        out = {}
        if want_plain:
            table = _trace_table(gx, T.curvature(cfn(x), dconn(x)), True)
            out.update({nm: table[nm] for nm in names if nm in table})
        if want_canon:
            table = _trace_table(gx, T.curvature(eta(x), deta(x)), False)
            out.update({nm: table[nm.removeprefix("canonical_") if nm != "canonical_curvature" else "curvature"]
                        for nm in names if nm.startswith("canonical")})
        return out

    return fn


def direct_tensor(A: AnsatzConnection, name: str, x=None):
    """Direct twin: differentiate the connection, then take traces and parts."""
    allf = _direct_all(A, (name,))
    field = SmoothField(A.chart, lambda y: allf(y)[name], _shape(name, A.dimension), name=f"{name} (direct)",
                        on_nonfinite=SingularMetricError)
    return field if x is None else field.evaluate(x)


@dataclass(frozen=True)
class TensorReport:
    """Closed-form and direct values of one tensor at a batch of points."""

    name: str
    closed: np.ndarray
    direct: np.ndarray
    residual: float
    specialized: bool = False


def verify(A: AnsatzConnection, x, names: Iterable[str] | None = None,
           specialized: bool = False) -> list[TensorReport]:
    """Compare closed forms against their direct twins at the points ``x``.

    All requested tensors are evaluated by one compiled function.
    """
    X = A.chart.check_points(np.atleast_2d(np.asarray(x, dtype=float)))
    names = tuple(names) if names is not None else TENSOR_NAMES
    closed, direct = _closed_all(A, names, specialized), _direct_all(A, names)
    both = jax.jit(jax.vmap(lambda y: (closed(y), direct(y))))
    cv, dv = both(X)
    reports = []
    for name in names:
        c, d = np.asarray(cv[name]), np.asarray(dv[name])
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise SingularMetricError(f"{name}: non-finite values (singular metric?)")
        reports.append(TensorReport(name, c, d, float(np.max(np.abs(c - d))), specialized))
    return reports


# ---------------------------------------------------------------------------
# quasi-Einstein coefficients

@dataclass(frozen=True)
class QuasiEinsteinParams:
    """Dimension ``n >= 2`` and weight ``m`` stored as ``1/m`` (0 means ``m = +-inf``)."""

    n: int
    inv_m: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ContractViolation(f"dimension must be an integer >= 2, got {self.n}")
        if not math.isfinite(self.inv_m):
            raise DomainError("m = 0 is excluded (1/m is infinite)")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "inv_m", float(self.inv_m))

    @classmethod
    def from_weight(cls, n: int, m) -> "QuasiEinsteinParams":
        """Accepts a real ``m`` or the strings ``"inf"``, ``"+inf"``, ``"-inf"``."""
        if isinstance(m, str):
            text = m.strip().lower()
            if text in ("inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"):
                return cls(n, 0.0)
            m = float(text)
        m = float(m)
        if math.isinf(m):
            return cls(n, 0.0)
        if m == 0:
            raise DomainError("m = 0 is excluded: that case is Einstein by convention and needs no connection")
        return cls(n, 1.0 / m)

    @property
    def m(self) -> float:
        return math.inf if self.inv_m == 0 else 1.0 / self.inv_m

    @property
    def discriminant(self) -> float:
        """``4 (n-1) (1 + (n-2)/m)`` of the quadratic in ``b`` (n > 2)."""
        n = self.n
        return 4.0 * (n - 1) * (1.0 + (n - 2) * self.inv_m)


@dataclass(frozen=True)
class CoefficientSolution:
    params: QuasiEinsteinParams
    solutions: tuple[tuple[float, float], ...]
    multiplicity: tuple[int, ...]
    status: str

    def residuals(self) -> list[tuple[float, float]]:
        """Residuals of ``(n-1) b + c = -1`` and ``(n-1) b^2 - c^2 = -1/m`` per solution."""
        n, im = self.params.n, self.params.inv_m
        return [(abs((n - 1) * b + c + 1.0), abs((n - 1) * b * b - c * c + im)) for b, c in self.solutions]


def solve_coefficients(n: int, m) -> CoefficientSolution:
    """Torsion-free ansatz coefficients ``(b, c)`` (with ``a = b``) reproducing the quasi-Einstein form.

    Solves ``(n-1) b + c = -1`` and ``(n-1) b^2 - c^2 = -1/m``.  The two
    roots for ``n > 2`` come back ordered ``(b+, c+), (b-, c-)``.
    """
    p = m if isinstance(m, QuasiEinsteinParams) else QuasiEinsteinParams.from_weight(n, m)
    n, im = p.n, p.inv_m
    if n == 2:
        b, c = -0.5 * (1.0 - im), -0.5 * (1.0 + im)
        return CoefficientSolution(p, ((b, c),), (1,), "unique (surface)")
    disc = p.discriminant
    if disc < 0:
        return CoefficientSolution(p, (), (), f"no real solutions: discriminant {disc:.6g} < 0")
    if disc == 0:
        b = -1.0 / (n - 2)
        return CoefficientSolution(p, ((b, -1.0 - (n - 1) * b),), (2,), "unique (double root)")
    root = math.sqrt((1.0 + (n - 2) * im) / (n - 1))
    sols = []
    for sign in (1.0, -1.0):
        b = (-1.0 + sign * root) / (n - 2)
        sols.append((b, -1.0 - (n - 1) * b))
    return CoefficientSolution(p, tuple(sols), (1, 1), "two real solutions")


def gmqe_residual(g: SmoothField, phi: SmoothField, m, engine: DerivativeEngine | None = None) -> SmoothField:
    """Traceless part of ``r_g + (1/2) L_phi g - (1/m) phi phi`` (zero iff quasi-Einstein)."""
    p = m if isinstance(m, QuasiEinsteinParams) else QuasiEinsteinParams.from_weight(g.dimension, m)
    im = p.inv_m
    A = AnsatzConnection.from_coefficients(g, phi, 0.0, 0.0, 0.0, engine)
    point, _, jet = _jet_fns(A)

    def fn(x):
        P = point(x)
        f = _Jet(jet[0](x), jet[1](x))
        return P.traceless(P.rbar + 0.5 * P.lie(f) - im * P.outer(f, f))

    n = g.dimension
    return SmoothField(g.chart, fn, (n, n), slots=("_i", "_j"), name="quasi-Einstein residual",
                       on_nonfinite=SingularMetricError)


def averaged_tensors(g: SmoothField, phi: SmoothField, m,
                     engine: DerivativeEngine | None = None) -> dict[str, SmoothField]:
    """Closed forms for the averages over the two coefficient branches.

    ``ricci_sym``: mean symmetric Ricci tensor; ``scalar``: mean scalar
    curvature; ``weighted_scalar``: the part of the scalar average that does
    not depend on ``n - 2``.  Needs ``n > 2`` and two real branches.
    """
    n = g.dimension
    p = m if isinstance(m, QuasiEinsteinParams) else QuasiEinsteinParams.from_weight(n, m)
    sol = solve_coefficients(n, p)
    if n <= 2 or len(sol.solutions) != 2:
        raise DomainError(f"averaged tensors need two real coefficient branches ({sol.status})")
    im = p.inv_m
    A = AnsatzConnection.from_coefficients(g, phi, 0.0, 0.0, 0.0, engine)
    point, _, jet = _jet_fns(A)
    mid = 1.0 / (n - 2)

    def ricci(x):
        P, f = point(x), _Jet(jet[0](x), jet[1](x))
        return (P.rbar + 0.5 * P.lie(f) - im * P.outer(f, f)
                + mid * (-P.codiff(f) - P.norm2(f)) * P.g)

    def weighted(x):
        P, f = point(x), _Jet(jet[0](x), jet[1](x))
        return P.sbar - 2.0 * P.codiff(f) - (1.0 + im) * P.norm2(f)

    def scalar(x):
        P, f = point(x), _Jet(jet[0](x), jet[1](x))
        return weighted(x) - 2.0 * mid * (P.codiff(f) + P.norm2(f))

    kw = dict(on_nonfinite=SingularMetricError)
    return {
        "ricci_sym": SmoothField(g.chart, ricci, (n, n), name="mean symmetric Ricci", **kw),
        "scalar": SmoothField(g.chart, scalar, (), name="mean scalar curvature", **kw),
        "weighted_scalar": SmoothField(g.chart, weighted, (), name="weighted scalar curvature", **kw),
    }


def averaged_tensors_direct(g: SmoothField, phi: SmoothField, m,
                            engine: DerivativeEngine | None = None) -> dict[str, SmoothField]:
    """Numerical average of the two branch connections' symmetric Ricci and scalar curvature."""
    n = g.dimension
    sol = solve_coefficients(n, m)
    if len(sol.solutions) != 2:
        raise DomainError(f"averaged tensors need two real coefficient branches ({sol.status})")
    branches = [AnsatzConnection.from_coefficients(g, phi, b, b, c, engine) for b, c in sol.solutions]
    fns = [_direct_all(A, ("ricci_sym", "scalar")) for A in branches]
    return {
        "ricci_sym": SmoothField(g.chart, lambda x: 0.5 * (fns[0](x)["ricci_sym"] + fns[1](x)["ricci_sym"]), (n, n)),
        "scalar": SmoothField(g.chart, lambda x: 0.5 * (fns[0](x)["scalar"] + fns[1](x)["scalar"]), ()),
    }


# ---------------------------------------------------------------------------
# scale-invariant functionals

def nonmetricity_norm_squared(connection: SmoothField, g: SmoothField,
                              engine: DerivativeEngine | None = None) -> SmoothField:
    """``|nabla g|^2 = g^ii' g^jj' g^kk' nabla_i g_jk nabla_i' g_j'k'``."""
    eng = engine if engine is not None else DEFAULT_ENGINE
    gfn, cfn = g.fn, connection.fn
    dg = eng.jacobian(gfn, g.chart, g.derivative)

    def fn(x):
        gx = gfn(x)
        gi = jnp.linalg.inv(gx)
        q = T.non_metricity(gx, dg(x), cfn(x))
        return jnp.einsum("ia,jb,kc,ijk,abc->", gi, gi, gi, q, q)

    return SmoothField(g.chart, fn, (), name="|nabla g|^2", on_nonfinite=SingularMetricError)


def functionals(connection: SmoothField | Sequence[SmoothField], g: SmoothField | Sequence[SmoothField],
                nodes: int = 64, engine: DerivativeEngine | None = None) -> dict[str, float]:
    """``F = int |nabla g|^n dV``, ``K = int |nabla g|^2 dV`` and the volume over an atlas."""
    conns = [connection] if isinstance(connection, SmoothField) else list(connection)
    metrics = [g] if isinstance(g, SmoothField) else list(g)
    if len(conns) != len(metrics):
        raise ContractViolation("one connection per chart metric is required")
    F = K = vol = 0.0
    for conn, gm in zip(conns, metrics):
        n = gm.dimension
        sq = nonmetricity_norm_squared(conn, gm, engine)
        sfn = sq.fn
        power = SmoothField(gm.chart, lambda x: jnp.maximum(sfn(x), 0.0) ** (0.5 * n), ())
        K += integrate_function(sq, gm, nodes)
        F += integrate_function(power, gm, nodes)
        vol += integrate_function(SmoothField.constant(gm.chart, 1.0), gm, nodes)
    return {"F": F, "K": K, "volume": vol}
