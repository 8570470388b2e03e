"""Finite-dimensional ordered inner-product spaces.

Every space is kept in a normal form: a finite set of classical points
together with a Hilbert dimension ``d``.  An element is a Hermitian
``d x d`` block per point, stored as real coordinates in a fixed
orthonormal basis of Hermitian matrices (point-major).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidSpaceError, SpaceMismatchError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Classical:
    labels: tuple[str, ...]


@dataclass(frozen=True)
class Quantum:
    dim: int


Atom = Union[Classical, Quantum]


@dataclass(frozen=True)
class StateSpace:
    """A space of generalized boundary conditions.

    ``atoms`` records how the space was built so that it can be printed
    back; ``points`` and ``hdim`` are the normal form used for all
    numerics.
    """

    atoms: tuple[Atom, ...] = ()

    @functools.cached_property
    def points(self) -> tuple[tuple[str, ...], ...]:
        return tuple(itertools.product(*(a.labels for a in self.atoms if isinstance(a, Classical))))

    @functools.cached_property
    def num_points(self) -> int:
        return math.prod(len(a.labels) for a in self.atoms if isinstance(a, Classical))

    @functools.cached_property
    def hdim(self) -> int:
        return math.prod(a.dim for a in self.atoms if isinstance(a, Quantum))

    @property
    def block_dim(self) -> int:
        return self.hdim * self.hdim

    @property
    def basis_dim(self) -> int:
        return self.num_points * self.hdim * self.hdim

    @property
    def is_classical(self) -> bool:
        return self.hdim == 1

    @property
    def is_quantum(self) -> bool:
        """True when there is no classical label set (a single point)."""
        return all(isinstance(a, Quantum) for a in self.atoms)

    def __str__(self):
        if not self.atoms:
            return "unit"
        parts = []
        for a in self.atoms:
            if isinstance(a, Classical):
                parts.append("C(" + ",".join(a.labels) + ")")
            else:
                parts.append(f"Q({a.dim})")
        return "⊗".join(parts)


def make_classical(labels: Iterable) -> StateSpace:
    labels = tuple(str(x) for x in labels)
    if not labels:
        raise InvalidSpaceError("classical space needs at least one label")
    if len(set(labels)) != len(labels):
        raise InvalidSpaceError(f"duplicate labels in {labels}")
    return StateSpace((Classical(labels),))


def make_quantum(d: int) -> StateSpace:
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise InvalidSpaceError(f"Hilbert dimension must be a positive integer, got {d!r}")
    return StateSpace((Quantum(int(d)),))


def unit_space() -> StateSpace:
    return StateSpace(())


def tensor(*spaces: StateSpace) -> StateSpace:
    """Tensor product; points multiply (first factor major), dims multiply."""
    atoms: list[Atom] = []
    for s in spaces:
        atoms.extend(s.atoms)
    return StateSpace(tuple(atoms))


@functools.lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian basis of d x d matrices, shape (d*d, d, d).

    Diagonal units first, then for each i < j (lexicographic) the
    symmetric unit followed by the antisymmetric one.
    """
    out = np.zeros((d * d, d, d), dtype=complex)
    for i in range(d):
        out[i, i, i] = 1.0
    k = d
    r = 1 / math.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            out[k, i, j] = out[k, j, i] = r
            out[k + 1, i, j] = 1j * r
            out[k + 1, j, i] = -1j * r
            k += 2
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=None)
def transpose_signs(d: int) -> np.ndarray:
    """Action of matrix transposition on basis coordinates (+1 or -1)."""
    signs = np.ones(d * d)
    signs[d + 1 :: 2] = -1.0
    signs.flags.writeable = False
    return signs


def _blocks_to_coeffs(blocks: np.ndarray, d: int) -> np.ndarray:
    basis = hermitian_basis(d)
    # tr(xi_k X) = sum_ab xi_k[a,b] X[b,a]
    return np.einsum("kab,sba->sk", basis, blocks).real.reshape(-1)


class Element:
    """A vector of a :class:`StateSpace` in canonical coordinates."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space: StateSpace, coeffs):
        arr = np.array(coeffs, dtype=float).reshape(-1)
        if arr.size != space.basis_dim:
            raise SpaceMismatchError(
                f"expected {space.basis_dim} coefficients for {space}, got {arr.size}"
            )
        arr.flags.writeable = False
        self.space = space
        self.coeffs = arr

    @classmethod
    def from_blocks(cls, space: StateSpace, blocks) -> "Element":
        blocks = np.asarray(blocks, dtype=complex)
        d = space.hdim
        if blocks.ndim == 2:
            blocks = blocks[None]
        if blocks.shape != (space.num_points, d, d):
            raise SpaceMismatchError(
                f"blocks of shape {blocks.shape} do not fit {space}"
            )
        return cls(space, _blocks_to_coeffs(blocks, d))

    @classmethod
    def from_matrix(cls, space: StateSpace, matrix) -> "Element":
        """Element of a single-point space from a Hermitian matrix."""
        return cls.from_blocks(space, np.asarray(matrix)[None])

    def blocks(self) -> np.ndarray:
        d = self.space.hdim
        c = self.coeffs.reshape(self.space.num_points, d * d)
        return np.einsum("sk,kab->sab", c, hermitian_basis(d))

    def matrix(self) -> np.ndarray:
        if self.space.num_points != 1:
            raise SpaceMismatchError("matrix() needs a single-point space")
        return self.blocks()[0]

    def _check(self, other: "Element"):
        if not isinstance(other, Element):
            return NotImplemented
        if other.space != self.space:
            raise SpaceMismatchError(f"{self.space} vs {other.space}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Element(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Element(self.space, self.coeffs - other.coeffs)

    def __neg__(self):
        return Element(self.space, -self.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Element(self.space, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Element(self.space, self.coeffs / float(scalar))

    def __repr__(self):
        return f"Element({self.space}, {np.array2string(self.coeffs, precision=6)})"


def zero(space: StateSpace) -> Element:
    return Element(space, np.zeros(space.basis_dim))


def basis_element(space: StateSpace, k: int) -> Element:
    c = np.zeros(space.basis_dim)
    c[k] = 1.0
    return Element(space, c)


def inner(x: Element, y: Element) -> float:
    if x.space != y.space:
        raise SpaceMismatchError(f"{x.space} vs {y.space}")
    return float(np.dot(x.coeffs, y.coeffs))


def _eigvals(x: Element) -> np.ndarray:
    return np.linalg.eigvalsh(x.blocks())


def is_positive(x: Element, tol: float = DEFAULT_TOL) -> bool:
    """Every block has min eigenvalue >= -tol * max(1, spectral norm)."""
    ev = _eigvals(x)
    scale = np.maximum(1.0, np.abs(ev).max(axis=1))
    return bool(np.all(ev.min(axis=1) >= -tol * scale))


def is_leq(x: Element, y: Element, tol: float = DEFAULT_TOL) -> bool:
    return is_positive(y - x, tol)


def max_uncertainty(space: StateSpace) -> Element:
    d = space.hdim
    block = np.zeros(d * d)
    block[:d] = 1.0
    return Element(space, np.tile(block, space.num_points))


def order_unit_norm(x: Element) -> float:
    """Smallest lambda with -lambda e <= x <= lambda e."""
    return float(np.abs(_eigvals(x)).max())


def _spectral_part(x: Element, sign: float) -> Element:
    w, v = np.linalg.eigh(x.blocks())
    w = np.clip(sign * w, 0.0, None)
    blocks = np.einsum("sai,si,sbi->sab", v, w, v.conj())
    return Element.from_blocks(x.space, blocks)


def positive_part(x: Element) -> Element:
    return _spectral_part(x, 1.0)


def negative_part(x: Element) -> Element:
    """x = positive_part(x) - negative_part(x), both positive."""
    return _spectral_part(x, -1.0)


class NotALattice:
    """Returned by meet/join when no order-theoretic bound exists."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotALattice"

    def __bool__(self):
        return False


NOT_A_LATTICE = NotALattice()


def lattice_meet(x: Element, y: Element, tol: float = DEFAULT_TOL):
    """Greatest lower bound, or ``NOT_A_LATTICE``.

    Classical spaces are lattices and the meet is the pointwise minimum.
    Quantum spaces are anti-lattices: a meet exists only for comparable
    pairs, where it is the smaller element.
    """
    if x.space != y.space:
        raise SpaceMismatchError(f"{x.space} vs {y.space}")
    if x.space.hdim == 1:
        return Element(x.space, np.minimum(x.coeffs, y.coeffs))
    if is_leq(x, y, tol):
        return x
    if is_leq(y, x, tol):
        return y
    return NOT_A_LATTICE


def lattice_join(x: Element, y: Element, tol: float = DEFAULT_TOL):
    if x.space != y.space:
        raise SpaceMismatchError(f"{x.space} vs {y.space}")
    if x.space.hdim == 1:
        return Element(x.space, np.maximum(x.coeffs, y.coeffs))
    if is_leq(x, y, tol):
        return y
    if is_leq(y, x, tol):
        return x
    return NOT_A_LATTICE


def tensor_elements(*xs: Element) -> Element:
    """Tensor product of elements, expressed in the composite basis."""
    return join_product(_outer(*(x.coeffs for x in xs)), [x.space for x in xs])


def _outer(*vecs: np.ndarray) -> np.ndarray:
    out = np.array(1.0)
    for v in vecs:
        out = np.multiply.outer(out, v)
    return out


def join_product(t: np.ndarray, spaces: Sequence[StateSpace]) -> Element:
    """Convert a product-basis tensor into an element of the tensor space.

    ``t`` has one axis per factor, indexed by that factor's canonical
    basis.  The result is expressed in the canonical basis of
    ``tensor(*spaces)``.
    """
    spaces = list(spaces)
    target = tensor(*spaces)
    n = len(spaces)
    t = np.asarray(t, dtype=float)
    if t.shape != tuple(s.basis_dim for s in spaces):
        raise SpaceMismatchError(f"tensor shape {t.shape} does not fit {spaces}")
    if n == 0:
        return Element(target, t.reshape(1))
    shape = []
    for s in spaces:
        shape += [s.num_points, s.block_dim]
    t = t.reshape(shape)
    # index ids: point i -> 4i, basis i -> 4i+1, row i -> 4i+2, col i -> 4i+3
    ops: list = [t, [x for i in range(n) for x in (4 * i, 4 * i + 1)]]
    for i, s in enumerate(spaces):
        ops += [hermitian_basis(s.hdim), [4 * i + 1, 4 * i + 2, 4 * i + 3]]
    out_idx = [4 * i for i in range(n)] + [4 * i + 2 for i in range(n)] + [4 * i + 3 for i in range(n)]
    blocks = np.einsum(*ops, out_idx, optimize=True)
    d = target.hdim
    return Element.from_blocks(target, blocks.reshape(target.num_points, d, d))


def split_product(x: Element, spaces: Sequence[StateSpace]) -> np.ndarray:
    """Inverse of :func:`join_product`."""
    spaces = list(spaces)
    n = len(spaces)
    if x.space != tensor(*spaces):
        raise SpaceMismatchError(f"{x.space} is not the tensor of {spaces}")
    if n == 0:
        return x.coeffs.reshape(())
    shape = [s.num_points for s in spaces] + [s.hdim for s in spaces] * 2
    blocks = x.blocks().reshape(shape)
    ops: list = [blocks, [4 * i for i in range(n)] + [4 * i + 2 for i in range(n)] + [4 * i + 3 for i in range(n)]]
    for i, s in enumerate(spaces):
        ops += [hermitian_basis(s.hdim), [4 * i + 1, 4 * i + 3, 4 * i + 2]]
    out_idx = [x for i in range(n) for x in (4 * i, 4 * i + 1)]
    t = np.einsum(*ops, out_idx, optimize=True).real
    return np.ascontiguousarray(t.reshape([s.basis_dim for s in spaces]))


def conjugate(x: Element) -> Element:
    """Blockwise transpose (complex conjugation of every block)."""
    s = x.space
    return Element(s, x.coeffs * np.tile(transpose_signs(s.hdim), s.num_points))


def conjugation_signs(space: StateSpace) -> np.ndarray:
    return np.tile(transpose_signs(space.hdim), space.num_points)
