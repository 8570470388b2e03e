"""Finite-dimensional amplitudes and their modulus square.

An amplitude is a complex multilinear form on a tensor product of
Hilbert spaces, stored as its coefficient tensor in the standard bases.
A factor flagged ``dual`` is an orientation-reversed copy whose
coordinates are those of the complex-conjugate space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SignatureError, SpaceMismatchError
from .operational import Outcome, boundary_probability, oriented, quotient
from .probes import Port, Probe, orient
from .spaces import DEFAULT_TOL, Element, make_quantum, split_product, tensor


@dataclass(frozen=True)
class HilbertSpace:
    dim: int
    name: str
    dual: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise SpaceMismatchError(f"Hilbert dimension must be positive, got {self.dim}")

    def reversed(self) -> "HilbertSpace":
        return HilbertSpace(self.dim, self.name, not self.dual)


class Amplitude:
    __slots__ = ("region", "factors", "tensor")

    def __init__(self, region: str, factors: Sequence[HilbertSpace], tensor_):
        factors = tuple(factors)
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise SignatureError(f"duplicate factor names {names}")
        t = np.array(tensor_, dtype=complex)
        shape = tuple(f.dim for f in factors)
        if t.shape != shape:
            if t.size != int(np.prod(shape)):
                raise SpaceMismatchError(f"tensor of size {t.size} does not fit {shape}")
            t = t.reshape(shape)
        t.flags.writeable = False
        self.region = region
        self.factors = factors
        self.tensor = t

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod([f.dim for f in self.factors]))

    def vector(self) -> np.ndarray:
        """Coefficients ``r`` with value ``sum_i r_i psi_i`` on a composite vector."""
        return self.tensor.reshape(-1)

    def __call__(self, *vectors) -> complex:
        t = self.tensor
        for v in vectors:
            t = np.tensordot(np.asarray(v, dtype=complex), t, axes=(0, 0))
        return complex(t)


def slice_amplitude(dim: int, names=("a", "b"), region: str = "slice") -> Amplitude:
    """Inner-product form of a thin slice: first factor reversed."""
    a, b = names
    return Amplitude(region, (HilbertSpace(dim, a, True), HilbertSpace(dim, b)), np.eye(dim))


def transition_amplitude(u, names=("in", "out"), region: str = "M") -> Amplitude:
    """Amplitude ``psi ⊗ conj(eta) -> <eta, U psi>`` (outgoing factor reversed)."""
    u = np.asarray(u, dtype=complex)
    a, b = names
    return Amplitude(region, (HilbertSpace(u.shape[1], a), HilbertSpace(u.shape[0], b, True)), u.T)


def amp_glue_disjoint(r1: Amplitude, r2: Amplitude, region: str | None = None) -> Amplitude:
    clash = set(r1.names) & set(r2.names)
    if clash:
        raise SignatureError(f"duplicate factor names {sorted(clash)}")
    return Amplitude(region or f"{r1.region}+{r2.region}", r1.factors + r2.factors,
                     np.multiply.outer(r1.tensor, r2.tensor))


def amp_self_glue(r: Amplitude, name_a: str, name_b: str, region: str | None = None) -> Amplitude:
    """Sum over ``zeta_k ⊗ iota(zeta_k)`` on two oppositely oriented factors."""
    try:
        i, j = r.names.index(name_a), r.names.index(name_b)
    except ValueError:
        raise SignatureError(f"unknown factors {name_a!r}, {name_b!r}") from None
    fa, fb = r.factors[i], r.factors[j]
    if i == j or fa.dim != fb.dim:
        raise SpaceMismatchError(f"cannot glue {fa} to {fb}")
    if fa.dual == fb.dual:
        raise SpaceMismatchError("glued factors must carry opposite orientations")
    # the standard basis is real, so iota acts trivially on coordinates
    t = np.trace(r.tensor, axis1=i, axis2=j)
    factors = [f for k, f in enumerate(r.factors) if k not in (i, j)]
    return Amplitude(region or r.region, factors, t)


def _ports(r: Amplitude) -> list[Port]:
    return [Port(f.name, make_quantum(f.dim), f.dual) for f in r.factors]


def msq(r: Amplitude) -> Probe:
    """Probe with ``pair(msq(r), sigma) = sum_k conj(r(zeta_k)) r(sigma zeta_k)``."""
    ports = _ports(r)
    spaces = [p.space for p in ports]
    v = r.vector().conj()
    gram = np.outer(v, v.conj())
    el = Element.from_matrix(tensor(*spaces), gram)
    t = orient(split_product(el, spaces), ports)
    return Probe(r.region, ports, t)


def boundary_element(r: Amplitude, operator) -> Element:
    """Boundary element for an operator on the amplitude's composite space."""
    ports = _ports(r)
    x = Element.from_matrix(tensor(*(p.space for p in ports)), np.asarray(operator, dtype=complex))
    return oriented(x, ports)


def _form(r: Amplitude, o: Amplitude, op) -> complex:
    return complex(o.vector() @ np.asarray(op, dtype=complex) @ r.vector().conj())


def boundary_measure_prob(r: Amplitude, s_projector, a_projector, tol: float = DEFAULT_TOL) -> Outcome:
    """Probability of observing ``A`` given knowledge ``S`` (basis-sum form)."""
    den = _form(r, r, s_projector).real
    num = _form(r, r, a_projector).real
    scale = float(np.linalg.norm(r.tensor)) ** 2 * float(np.linalg.norm(s_projector))
    return quotient(num, den, scale, "probability", tol)


def boundary_measure_prob_msq(r: Amplitude, s_projector, a_projector, tol: float = DEFAULT_TOL) -> Outcome:
    """The same probability through the modulus-square probe."""
    return boundary_probability(msq(r), boundary_element(r, a_projector), boundary_element(r, s_projector), tol)


def expectation_map(r: Amplitude, observable: Amplitude, s_projector, tol: float = 1e-12) -> Outcome:
    """Generalized expectation value of an observable amplitude.

    The value is complex in general; it is returned as a ``float`` when
    the imaginary part vanishes to ``tol`` relative precision and as a
    ``complex`` otherwise (see :attr:`Outcome.is_real`).
    """
    if observable.factors != r.factors:
        raise SpaceMismatchError("observable map and amplitude must share boundary factors")
    den = _form(r, r, s_projector)
    num = _form(r, observable, s_projector)
    scale = float(np.linalg.norm(r.tensor)) ** 2 * float(np.linalg.norm(s_projector))
    if abs(den) <= 1e-12 * scale or den == 0:
        return Outcome("undefined", None, "denominator_zero")
    v = num / den
    if abs(v.imag) <= tol * max(1.0, abs(v)):
        return Outcome("expectation", float(v.real))
    return Outcome("expectation", complex(v))
