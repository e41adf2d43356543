"""Standard charts, metrics and seeded random smooth forms.

Spheres use spherical coordinates ``(theta, phi)`` on ``(0, pi) x [0, 2 pi)``
with the poles excluded; Gauss-Legendre nodes never touch them and every
integrand used here stays bounded there.  The stereographic chart
(projection from the south pole) covers a neighbourhood of the north pole
and is used for regions that contain it.
"""

from __future__ import annotations

import math
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .fields import Chart, SmoothField

TWO_PI = 2.0 * math.pi


def sphere_chart(orientation: int = 1) -> Chart:
    return Chart((0.0, 0.0), (math.pi, TWO_PI), (False, True), orientation, "sphere",
                 "area element vanishes at the poles theta=0, pi (excluded)")


def torus_chart(dimension: int = 2) -> Chart:
    return Chart((0.0,) * dimension, (TWO_PI,) * dimension, (True,) * dimension, 1, "torus")


def plane_chart(lower=(-1.0, -1.0), upper=(1.0, 1.0), name: str = "plane") -> Chart:
    return Chart(tuple(lower), tuple(upper), (False,) * len(lower), 1, name)


def stereographic_chart(radius: float = 3.0) -> Chart:
    return plane_chart((-radius, -radius), (radius, radius), "stereographic")


def product_spheres_chart() -> Chart:
    return Chart((0.0, 0.0, 0.0, 0.0), (math.pi, TWO_PI, math.pi, TWO_PI),
                 (False, True, False, True), 1, "sphere x sphere", "poles of either factor excluded")


def sphere_embedding(x):
    """Unit-sphere point ``(X, Y, Z)`` of spherical coordinates ``(theta, phi)``."""
    th, ph = x[0], x[1]
    return jnp.array([jnp.sin(th) * jnp.cos(ph), jnp.sin(th) * jnp.sin(ph), jnp.cos(th)])


def stereographic_embedding(x):
    """Unit-sphere point of stereographic coordinates (projection from the south pole)."""
    r2 = x[0] ** 2 + x[1] ** 2
    return jnp.array([2 * x[0], 2 * x[1], 1.0 - r2]) / (1.0 + r2)


def induced_metric(chart: Chart, embedding: Callable, name: str = "induced") -> SmoothField:
    """Pullback of the Euclidean metric along ``embedding``."""
    jac = jax.jacfwd(embedding)
    n = chart.dimension

    def fn(x):
        J = jac(x)
        return J.T @ J

    return SmoothField(chart, fn, (n, n), slots=("_i", "_j"), name=name)


def round_sphere_metric(chart: Chart | None = None, radius: float = 1.0) -> SmoothField:
    chart = chart or sphere_chart()
    r2 = radius ** 2
    return SmoothField(chart, lambda x: r2 * jnp.diag(jnp.array([1.0, jnp.sin(x[0]) ** 2])), (2, 2),
                       slots=("_i", "_j"), name="round")


def ellipsoid_metric(axes=(1.0, 1.0, 1.3), chart: Chart | None = None) -> SmoothField:
    """Metric induced on the sphere chart by the ellipsoid with semi-axes ``axes``."""
    a = jnp.asarray(axes, dtype=float)
    return induced_metric(chart or sphere_chart(), lambda x: a * sphere_embedding(x), "ellipsoid")


def flat_metric(chart: Chart) -> SmoothField:
    n = chart.dimension
    return SmoothField.constant(chart, np.eye(n), slots=("_i", "_j"), name="flat")


def stereographic_sphere_metric(chart: Chart | None = None) -> SmoothField:
    chart = chart or stereographic_chart()
    return SmoothField(chart, lambda x: 4.0 / (1.0 + x[0] ** 2 + x[1] ** 2) ** 2 * jnp.eye(2), (2, 2),
                       slots=("_i", "_j"), name="stereographic round")


def conformal_metric(base: SmoothField, log_factor: Callable, name: str = "conformal") -> SmoothField:
    """``exp(2 u) * base`` for a scalar callback ``u``."""
    bfn = base.fn
    return SmoothField(base.chart, lambda x: jnp.exp(2.0 * log_factor(x)) * bfn(x), base.shape,
                       slots=base.slots, name=name)


def product_spheres_metric(chart: Chart | None = None) -> SmoothField:
    chart = chart or product_spheres_chart()

    def fn(x):
        return jnp.diag(jnp.array([1.0, jnp.sin(x[0]) ** 2, 1.0, jnp.sin(x[2]) ** 2]))

    return SmoothField(chart, fn, (4, 4), slots=("_i", "_j"), name="round x round")


# seeded random smooth data ---------------------------------------------------

def random_fourier_function(dimension: int, rng: np.random.Generator, modes: int = 2,
                            amplitude: float = 0.3) -> Callable:
    """Smooth periodic function ``sum a_k cos(k.x) + b_k sin(k.x)`` over ``|k|_inf <= modes``."""
    ks = [k for k in np.ndindex(*(2 * modes + 1,) * dimension)]
    ks = np.array(ks, dtype=float) - modes
    ks = ks[np.any(ks != 0, axis=1)]
    decay = 1.0 / (1.0 + np.sum(ks ** 2, axis=1))
    a = amplitude * rng.standard_normal(len(ks)) * decay
    b = amplitude * rng.standard_normal(len(ks)) * decay
    K, A, Bc = jnp.asarray(ks), jnp.asarray(a), jnp.asarray(b)

    def f(x):
        phase = K @ x
        return jnp.sum(A * jnp.cos(phase) + Bc * jnp.sin(phase))

    return f


def random_fourier_form(chart: Chart, rng: np.random.Generator, modes: int = 2,
                        amplitude: float = 0.3, name: str = "phi") -> SmoothField:
    """Random smooth periodic 1-form (independent Fourier series per component)."""
    comps = [random_fourier_function(chart.dimension, rng, modes, amplitude) for _ in range(chart.dimension)]
    return SmoothField(chart, lambda x: jnp.stack([c(x) for c in comps]), (chart.dimension,),
                       slots=("_i",), name=name)


def random_quadratic(rng: np.random.Generator, amplitude: float = 0.3, variables: int = 3) -> Callable:
    """Random polynomial of degree <= 2 in ``variables`` ambient coordinates."""
    lin = amplitude * rng.standard_normal(variables)
    quad = amplitude * rng.standard_normal((variables, variables))
    quad = 0.5 * (quad + quad.T)
    L, Q = jnp.asarray(lin), jnp.asarray(quad)
    return lambda p: L @ p + p @ Q @ p


def _star_gradient_fn(metric_fn, h):
    """``*dh`` on an oriented surface chart: ``(*dh)_j = sqrt(det g) eps_ij g^ik d_k h``."""
    eps = jnp.array([[0.0, 1.0], [-1.0, 0.0]])

    def fn(x):
        gx = metric_fn(x)
        grad = jax.grad(h)(x)
        return jnp.sqrt(jnp.linalg.det(gx)) * (jnp.linalg.solve(gx, grad) @ eps)

    return fn


def random_sphere_form(chart: Chart, metric: SmoothField, embedding: Callable, rng: np.random.Generator,
                       amplitude: float = 0.3, name: str = "phi") -> SmoothField:
    """Random globally smooth 1-form ``df + *dh`` on a sphere chart.

    ``f`` and ``h`` are random quadratics in the ambient coordinates, so the
    form extends smoothly over points the chart omits (the poles).
    """
    fq, hq = random_quadratic(rng, amplitude), random_quadratic(rng, amplitude)
    f = lambda x: fq(embedding(x))
    h = lambda x: hq(embedding(x))
    star = _star_gradient_fn(metric.fn, h)
    return SmoothField(chart, lambda x: jax.grad(f)(x) + star(x), (2,), slots=("_i",), name=name)


def random_product_sphere_form(chart: Chart, rng: np.random.Generator, amplitude: float = 0.3,
                               name: str = "phi") -> SmoothField:
    """Random smooth 1-form on the product of two unit spheres.

    Exact part ``df`` with ``f`` quadratic in both factors' ambient
    coordinates, plus ``*dh`` pieces tangent to each factor.
    """
    f6 = random_quadratic(rng, amplitude, variables=6)
    h1, h2 = random_quadratic(rng, amplitude), random_quadratic(rng, amplitude)
    round2 = lambda y: jnp.diag(jnp.array([1.0, jnp.sin(y[0]) ** 2]))
    s1 = _star_gradient_fn(round2, lambda y: h1(sphere_embedding(y)))
    s2 = _star_gradient_fn(round2, lambda y: h2(sphere_embedding(y)))
    f = lambda x: f6(jnp.concatenate([sphere_embedding(x[:2]), sphere_embedding(x[2:])]))

    def fn(x):
        return jax.grad(f)(x) + jnp.concatenate([s1(x[:2]), s2(x[2:])])

    return SmoothField(chart, fn, (4,), slots=("_i",), name=name)


def exact_form(chart: Chart, potential: Callable, name: str = "df") -> SmoothField:
    """``d f`` of a scalar callback (differentiated exactly)."""
    return SmoothField(chart, jax.grad(potential), (chart.dimension,), slots=("_i",), name=name)
