"""Pointwise exterior algebra and Pfaffians of matrices of even-degree forms.

A :class:`DifferentialForm` stores one coefficient per strictly increasing
index tuple, in the order produced by :func:`itertools.combinations`.  The
wedge product follows the determinant convention

    (a ^ b)(e_i, e_j) = a_i b_j - a_j b_i

for 1-forms, i.e. ``dx ^ dy`` has coefficient 1 on ``(0, 1)`` and no factor
1/2 appears anywhere.  Coefficient arrays may be numpy arrays or jax arrays
(including tracers), so the same code runs eagerly and inside ``jax.jit``.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Mapping, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ContractViolation

__all__ = [
    "DifferentialForm",
    "FormMatrix",
    "wedge",
    "matrix_wedge",
    "symmetric_antisymmetric_split",
    "pfaffian",
    "pfaffian_multi",
    "permutation_sign",
]


def _xp(*arrays):
    """Return jax.numpy if any argument is a jax array or tracer, else numpy."""
    for a in arrays:
        if isinstance(a, jax.Array):
            return jnp
    return np


@lru_cache(maxsize=None)
def index_tuples(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing ``p``-tuples of ``range(n)`` in storage order."""
    if p < 0:
        raise ContractViolation(f"negative form degree {p}")
    return tuple(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def _positions(n: int, p: int) -> dict[tuple[int, ...], int]:
    return {t: k for k, t in enumerate(index_tuples(n, p))}


def permutation_sign(perm: Sequence[int]) -> int:
    """Sign of a permutation given as a sequence of distinct integers."""
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
            elif perm[i] == perm[j]:
                return 0
    return sign


def _sort_with_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    sign = permutation_sign(idx)
    return sign, tuple(sorted(idx))


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, q: int) -> np.ndarray:
    """Dense structure constants W[k, a, b] with (x ^ y)_k = W[k,a,b] x_a y_b."""
    out_pos = _positions(n, p + q)
    left, right = index_tuples(n, p), index_tuples(n, q)
    table = np.zeros((len(out_pos), len(left), len(right)))
    for a, I in enumerate(left):
        for b, J in enumerate(right):
            if set(I) & set(J):
                continue
            sign, K = _sort_with_sign(I + J)
            table[out_pos[K], a, b] = sign
    return table


class DifferentialForm:
    """A degree-``p`` alternating form on an ``n``-dimensional cotangent space.

    Degrees above ``n`` are permitted and represent the zero form (their
    coefficient array is empty); this is what a wedge with ``p + q > n``
    returns.
    """

    __slots__ = ("dimension", "degree", "coefficients")

    def __init__(self, dimension: int, degree: int, coefficients=None):
        if dimension < 1:
            raise ContractViolation(f"dimension must be positive, got {dimension}")
        if degree < 0:
            raise ContractViolation(f"degree must be non-negative, got {degree}")
        size = len(index_tuples(dimension, degree))
        if coefficients is None:
            coefficients = np.zeros(size)
        elif not isinstance(coefficients, jax.Array):
            coefficients = np.array(coefficients, dtype=float).reshape(-1)
            coefficients.setflags(write=False)
        if coefficients.shape != (size,):
            raise ContractViolation(
                f"degree-{degree} form in dimension {dimension} needs {size} "
                f"coefficients, got shape {tuple(coefficients.shape)}"
            )
        self.dimension = dimension
        self.degree = degree
        self.coefficients = coefficients

    # construction -----------------------------------------------------------

    @classmethod
    def scalar(cls, value, dimension: int = 1) -> "DifferentialForm":
        return cls(dimension, 0, [value] if not isinstance(value, jax.Array) else jnp.reshape(value, (1,)))

    @classmethod
    def from_dict(cls, dimension: int, degree: int,
                  mapping: Mapping[tuple[int, ...], float]) -> "DifferentialForm":
        """Build a form from ``{index tuple: value}``; tuples in any order.

        Unordered tuples are sorted with the permutation sign; tuples with a
        repeated index contribute nothing.  Entries naming the same increasing
        tuple accumulate.
        """
        pos = _positions(dimension, degree)
        coeffs = np.zeros(len(pos))
        for idx, value in mapping.items():
            idx = tuple(idx)
            if len(idx) != degree or any(not 0 <= i < dimension for i in idx):
                raise ContractViolation(f"bad index tuple {idx} for degree {degree}, dimension {dimension}")
            sign, key = _sort_with_sign(idx)
            if sign:
                coeffs[pos[key]] += sign * value
        return cls(dimension, degree, coeffs)

    @classmethod
    def basis(cls, dimension: int, *indices: int) -> "DifferentialForm":
        """``dx^{i1} ^ ... ^ dx^{ip}`` (signed if the indices are unordered)."""
        return cls.from_dict(dimension, len(indices), {tuple(indices): 1.0})

    @classmethod
    def from_antisymmetric(cls, tensor, degree: int | None = None) -> "DifferentialForm":
        """Read the increasing-tuple components off a dense alternating array."""
        xp = _xp(tensor)
        tensor = xp.asarray(tensor)
        p = tensor.ndim if degree is None else degree
        n = tensor.shape[0] if p else 1
        tuples = index_tuples(n, p)
        if p == 0:
            return cls(n, 0, xp.reshape(tensor, (1,)))
        idx = tuple(np.array([t[a] for t in tuples]) for a in range(p))
        return cls(n, p, tensor[idx])

    # access -----------------------------------------------------------------

    def __getitem__(self, idx) -> float:
        if isinstance(idx, int):
            idx = (idx,)
        idx = tuple(idx)
        if len(idx) != self.degree:
            raise ContractViolation(f"form of degree {self.degree} evaluated on {len(idx)} indices")
        sign, key = _sort_with_sign(idx)
        if sign == 0:
            return 0.0
        return sign * self.coefficients[_positions(self.dimension, self.degree)[key]]

    def to_dict(self) -> dict[tuple[int, ...], float]:
        return {t: float(c) for t, c in zip(index_tuples(self.dimension, self.degree),
                                            np.asarray(self.coefficients)) if c != 0}

    def full(self):
        """Dense alternating array of shape ``(n,) * p``."""
        n, p = self.dimension, self.degree
        xp = _xp(self.coefficients)
        if p == 0:
            return self.coefficients[0]
        out = np.zeros((n,) * p) if xp is np else jnp.zeros((n,) * p)
        for k, t in enumerate(index_tuples(n, p)):
            for perm in itertools.permutations(range(p)):
                s = permutation_sign(perm)
                target = tuple(t[i] for i in perm)
                if xp is np:
                    out[target] = s * self.coefficients[k]
                else:
                    out = out.at[target].set(s * self.coefficients[k])
        return out

    @property
    def is_top(self) -> bool:
        return self.degree == self.dimension

    # algebra ----------------------------------------------------------------

    def _check_same(self, other: "DifferentialForm") -> None:
        if not isinstance(other, DifferentialForm):
            raise ContractViolation(f"expected a DifferentialForm, got {type(other).__name__}")
        if other.dimension != self.dimension or other.degree != self.degree:
            raise ContractViolation(
                f"cannot add a degree-{other.degree} form in dimension {other.dimension} "
                f"to a degree-{self.degree} form in dimension {self.dimension}")

    def __add__(self, other):
        self._check_same(other)
        return DifferentialForm(self.dimension, self.degree, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check_same(other)
        return DifferentialForm(self.dimension, self.degree, self.coefficients - other.coefficients)

    def __neg__(self):
        return DifferentialForm(self.dimension, self.degree, -self.coefficients)

    def __mul__(self, scalar):
        if isinstance(scalar, DifferentialForm):
            return wedge(self, scalar)
        return DifferentialForm(self.dimension, self.degree, self.coefficients * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return DifferentialForm(self.dimension, self.degree, self.coefficients / scalar)

    def __xor__(self, other):
        return wedge(self, other)

    def max_abs(self) -> float:
        c = np.asarray(self.coefficients)
        return float(np.max(np.abs(c))) if c.size else 0.0

    def allclose(self, other: "DifferentialForm", atol: float = 1e-12) -> bool:
        self._check_same(other)
        return (self - other).max_abs() <= atol

    def __repr__(self) -> str:
        terms = []
        for t, c in zip(index_tuples(self.dimension, self.degree), np.asarray(self.coefficients)):
            if c != 0:
                basis = "^".join(f"dx{i}" for i in t) or "1"
                terms.append(f"{c:+.6g}*{basis}")
        body = " ".join(terms) or "0"
        return f"DifferentialForm(n={self.dimension}, p={self.degree}: {body})"


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    """Exterior product; bilinear and graded-commutative."""
    if a.dimension != b.dimension:
        raise ContractViolation(f"wedge of forms on dimensions {a.dimension} and {b.dimension}")
    n, p, q = a.dimension, a.degree, b.degree
    table = _wedge_table(n, p, q)
    xp = _xp(a.coefficients, b.coefficients)
    return DifferentialForm(n, p + q, xp.einsum("kab,a,b->k", table, a.coefficients, b.coefficients))


class FormMatrix:
    """Square matrix whose entries are forms of one degree and dimension.

    Entries live in a dense array ``coefficients[row, col, k]`` where ``k``
    runs over increasing index tuples.
    """

    __slots__ = ("dimension", "degree", "coefficients")

    def __init__(self, dimension: int, degree: int, coefficients):
        if not isinstance(coefficients, jax.Array):
            coefficients = np.array(coefficients, dtype=float)
            coefficients.setflags(write=False)
        size = len(index_tuples(dimension, degree))
        if coefficients.ndim != 3 or coefficients.shape[0] != coefficients.shape[1] \
                or coefficients.shape[2] != size:
            raise ContractViolation(
                f"FormMatrix of degree-{degree} forms in dimension {dimension} needs shape "
                f"(m, m, {size}), got {tuple(coefficients.shape)}")
        self.dimension = dimension
        self.degree = degree
        self.coefficients = coefficients

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[DifferentialForm]]) -> "FormMatrix":
        m = len(entries)
        if m == 0 or any(len(row) != m for row in entries):
            raise ContractViolation("FormMatrix entries must form a non-empty square table")
        first = entries[0][0]
        for row in entries:
            for e in row:
                if e.dimension != first.dimension or e.degree != first.degree:
                    raise ContractViolation("FormMatrix entries must share degree and dimension")
        xp = _xp(*(e.coefficients for row in entries for e in row))
        coeffs = xp.stack([xp.stack([e.coefficients for e in row]) for row in entries])
        return cls(first.dimension, first.degree, coeffs)

    @classmethod
    def from_scalars(cls, matrix, dimension: int = 1) -> "FormMatrix":
        """Matrix of 0-forms (ordinary scalar matrix)."""
        xp = _xp(matrix)
        matrix = xp.asarray(matrix, dtype=float)
        return cls(dimension, 0, matrix[..., None])

    @classmethod
    def from_two_form_components(cls, omega) -> "FormMatrix":
        """Matrix of 2-forms from a dense array ``omega[i, j, a, b]``.

        ``omega`` is alternating in the base indices ``i, j``; entry ``(a, b)``
        of the result is ``sum_{i<j} omega[i, j, a, b] dx^i ^ dx^j``.
        """
        xp = _xp(omega)
        n = omega.shape[0]
        tuples = index_tuples(n, 2)
        ii = np.array([t[0] for t in tuples], dtype=int)
        jj = np.array([t[1] for t in tuples], dtype=int)
        coeffs = xp.moveaxis(omega[ii, jj], 0, -1)
        return cls(n, 2, coeffs)

    @classmethod
    def from_one_form_components(cls, omega) -> "FormMatrix":
        """Matrix of 1-forms from ``omega[i, a, b]`` (base index first)."""
        xp = _xp(omega)
        return cls(omega.shape[0], 1, xp.moveaxis(omega, 0, -1))

    @property
    def size(self) -> int:
        return self.coefficients.shape[0]

    def __getitem__(self, rc) -> DifferentialForm:
        r, c = rc
        return DifferentialForm(self.dimension, self.degree, self.coefficients[r, c])

    def _like(self, coeffs) -> "FormMatrix":
        return FormMatrix(self.dimension, self.degree, coeffs)

    def _check_same(self, other: "FormMatrix") -> None:
        if (other.dimension, other.degree, other.size) != (self.dimension, self.degree, self.size):
            raise ContractViolation("FormMatrix operands differ in size, degree or dimension")

    @property
    def T(self) -> "FormMatrix":
        xp = _xp(self.coefficients)
        return self._like(xp.swapaxes(self.coefficients, 0, 1))

    def __add__(self, other: "FormMatrix") -> "FormMatrix":
        self._check_same(other)
        return self._like(self.coefficients + other.coefficients)

    def __sub__(self, other: "FormMatrix") -> "FormMatrix":
        self._check_same(other)
        return self._like(self.coefficients - other.coefficients)

    def __neg__(self) -> "FormMatrix":
        return self._like(-self.coefficients)

    def __mul__(self, scalar) -> "FormMatrix":
        return self._like(self.coefficients * scalar)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        c = np.asarray(self.coefficients)
        return float(np.max(np.abs(c))) if c.size else 0.0

    def __repr__(self) -> str:
        return f"FormMatrix(size={self.size}, degree={self.degree}, dimension={self.dimension})"


def matrix_wedge(A: FormMatrix, B: FormMatrix) -> FormMatrix:
    """``(A ^ B)[i, j] = sum_m A[i, m] ^ B[m, j]``."""
    if A.size != B.size:
        raise ContractViolation(f"matrix_wedge of sizes {A.size} and {B.size}")
    if A.dimension != B.dimension:
        raise ContractViolation(f"matrix_wedge on dimensions {A.dimension} and {B.dimension}")
    table = _wedge_table(A.dimension, A.degree, B.degree)
    xp = _xp(A.coefficients, B.coefficients)
    coeffs = xp.einsum("kab,ima,mjb->ijk", table, A.coefficients, B.coefficients)
    return FormMatrix(A.dimension, A.degree + B.degree, coeffs)


def symmetric_antisymmetric_split(M: FormMatrix) -> tuple[FormMatrix, FormMatrix]:
    """Return ``(M_A, M_S)`` with ``M_A = (M - M^T)/2`` and ``M_S = (M + M^T)/2``."""
    Mt = M.T
    return (M - Mt) * 0.5, (M + Mt) * 0.5


@lru_cache(maxsize=None)
def _pfaffian_terms(size: int) -> tuple[tuple[int, tuple[tuple[int, int], ...]], ...]:
    terms = []
    for perm in itertools.permutations(range(size)):
        pairs = tuple((perm[2 * s], perm[2 * s + 1]) for s in range(size // 2))
        terms.append((permutation_sign(perm), pairs))
    return tuple(terms)


def pfaffian_multi(Ms: Sequence[FormMatrix]) -> DifferentialForm:
    """Polarized Pfaffian ``Pf(M_1, ..., M_k)`` of ``k`` matrices of size ``2k``.

    Computed by direct enumeration of the symmetric group; entries must be
    forms of even degree so that the wedge products commute.
    """
    Ms = list(Ms)
    k = len(Ms)
    if k == 0:
        raise ContractViolation("pfaffian_multi needs at least one matrix")
    first = Ms[0]
    for M in Ms:
        if M.size != 2 * k:
            raise ContractViolation(f"pfaffian_multi with {k} slots needs {2 * k}x{2 * k} matrices, got {M.size}")
        if M.degree % 2:
            raise ContractViolation("Pfaffian entries must have even degree (odd-degree forms do not commute)")
        if M.dimension != first.dimension or M.degree != first.degree:
            raise ContractViolation("pfaffian_multi matrices must share degree and dimension")
    n, p = first.dimension, first.degree
    xp = _xp(*(M.coefficients for M in Ms))
    total = None
    for sign, pairs in _pfaffian_terms(2 * k):
        acc = Ms[0].coefficients[pairs[0]]
        deg = p
        for M, pair in zip(Ms[1:], pairs[1:]):
            acc = xp.einsum("kab,a,b->k", _wedge_table(n, deg, p), acc, M.coefficients[pair])
            deg += p
        total = sign * acc if total is None else total + sign * acc
    return DifferentialForm(n, k * p, total / (2 ** k * math.factorial(k)))


def pfaffian(M: FormMatrix) -> DifferentialForm:
    """``Pf(M)`` for a ``2k x 2k`` matrix of even-degree forms."""
    if M.size % 2:
        raise ContractViolation(f"Pfaffian of odd-size ({M.size}) matrix")
    return pfaffian_multi([M] * (M.size // 2))


def scalar_pfaffian(matrix) -> float:
    """Pfaffian of an ordinary (scalar) even-size matrix."""
    return float(np.asarray(pfaffian(FormMatrix.from_scalars(np.asarray(matrix))).coefficients)[0])
