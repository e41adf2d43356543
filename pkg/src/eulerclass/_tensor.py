"""Pointwise tensor algebra on coefficient arrays (jax-traceable).

Every function acts on the arrays of a single point.  Index layouts follow
:mod:`eulerclass.fields`: derivative index first, connection ``w[i, a, b]``
with ``nabla_i E_b = w[i, a, b] E_a``, curvature ``R[i, j, a, b]``.
"""

import jax.numpy as jnp


def christoffel(g, dg):
    """Levi-Civita symbols ``G[i, k, j]`` from ``g`` and ``dg[i] = d_i g``."""
    t = dg + jnp.transpose(dg, (2, 1, 0)) - jnp.transpose(dg, (1, 0, 2))
    return 0.5 * jnp.einsum("kl,ilj->ikj", jnp.linalg.inv(g), t)


def curvature(w, dw):
    """``R[i, j] = d_i w_j - d_j w_i + w_i w_j - w_j w_i`` (matrix products)."""
    dd = dw - jnp.transpose(dw, (1, 0, 2, 3))
    ww = jnp.einsum("iac,jcb->ijab", w, w)
    return dd + ww - jnp.transpose(ww, (1, 0, 2, 3))


def non_metricity(g, dg, w):
    """``Q[i, a, b] = d_i g_ab - w_i^c_a g_cb - w_i^c_b g_ac``."""
    t = jnp.einsum("ica,cb->iab", w, g)
    return dg - t - jnp.transpose(t, (0, 2, 1))


def covariant_derivative_1form(dpsi, gam, psi):
    """``nabla_i psi_j = d_i psi_j - G[i, k, j] psi_k``."""
    return dpsi - jnp.einsum("ikj,k->ij", gam, psi)


def covariant_derivative_vector(dv, gam, v):
    """``nabla_i v^k = d_i v^k + G[i, k, m] v^m``."""
    return dv + jnp.einsum("ikm,m->ik", gam, v)


def covariant_derivative_difference(dB, gam, B):
    """Covariant derivative of a (1,2) tensor ``B[j, k, l] = B_j^k_l``.

    Returns ``C[i, j, k, l] = nabla_i B_j^k_l``.
    """
    return (dB
            - jnp.einsum("imj,mkl->ijkl", gam, B)
            + jnp.einsum("ikm,jml->ijkl", gam, B)
            - jnp.einsum("iml,jkm->ijkl", gam, B))


def torsion(gam):
    """``T[i, k, j] = G[i, k, j] - G[j, k, i]``."""
    return gam - jnp.transpose(gam, (2, 1, 0))


def ricci_trace(R):
    """``r_jl = R_ij^i_l``."""
    return jnp.einsum("ijil->jl", R)


def lower_curvature(g, R):
    """``R_ijkl = g_km R_ij^m_l``."""
    return jnp.einsum("km,ijml->ijkl", g, R)


def raise_curvature(g, Rl):
    """Inverse of :func:`lower_curvature`."""
    return jnp.einsum("km,ijml->ijkl", jnp.linalg.inv(g), Rl)


def sym(a):
    return 0.5 * (a + a.T)


def antisym(a):
    return 0.5 * (a - a.T)


def kulkarni_nomizu(h, k):
    """``(h o k)_ijkl = h_ik k_jl + h_jl k_ik - h_il k_jk - h_jk k_il``."""
    return (jnp.einsum("ik,jl->ijkl", h, k) + jnp.einsum("jl,ik->ijkl", h, k)
            - jnp.einsum("il,jk->ijkl", h, k) - jnp.einsum("jk,il->ijkl", h, k))


def orthonormal_frame(g, orientation=1):
    """Upper-triangular ``P`` with ``P^T g P = I`` (Gram-Schmidt in index order).

    Columns are the frame vectors in the old frame.  ``orientation=-1``
    flips the last vector so the frame change has negative determinant.
    """
    L = jnp.linalg.cholesky(g)
    P = jnp.linalg.inv(L).T
    if orientation == -1:
        P = P.at[:, -1].multiply(-1.0)
    return P
