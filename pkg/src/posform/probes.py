"""Probes: multilinear functionals on boundary spaces.

A probe stores its pairing tensor in the product of the canonical bases
of its ports, so ``pair(p, b1 ⊗ ... ⊗ bn)`` is a full contraction of
``p.tensor`` with the coefficient vectors ``b_i``.

Each port also carries an orientation flag.  A port marked ``dual``
is read through the conjugation (blockwise transpose) when the probe is
viewed as an element of the ordered boundary space.  This is what makes
the identity channel a positive element (the unnormalized maximally
entangled state) and the transpose map a non-positive one.  Pairings and
gluing never look at the flags.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import SignatureError, SpaceMismatchError
from .spaces import (
    DEFAULT_TOL,
    Element,
    StateSpace,
    conjugation_signs,
    hermitian_basis,
    is_positive,
    join_product,
    split_product,
    tensor,
)


@dataclass(frozen=True)
class Port:
    link: str
    space: StateSpace
    dual: bool = False


class Probe:
    """A region label, an ordered list of ports and a pairing tensor."""

    __slots__ = ("region", "ports", "tensor")

    def __init__(self, region: str, ports: Sequence[Port], tensor_):
        ports = tuple(ports)
        links = [p.link for p in ports]
        if len(set(links)) != len(links):
            raise SignatureError(f"duplicate link ids in signature: {links}")
        t = np.array(tensor_, dtype=float)
        shape = tuple(p.space.basis_dim for p in ports)
        if t.shape != shape:
            if t.size != int(np.prod(shape, dtype=np.int64)):
                raise SpaceMismatchError(
                    f"probe {region}: expected {int(np.prod(shape))} coefficients, got {t.size}"
                )
            t = t.reshape(shape)
        t.flags.writeable = False
        self.region = region
        self.ports = ports
        self.tensor = t

    @property
    def links(self) -> tuple[str, ...]:
        return tuple(p.link for p in self.ports)

    @property
    def spaces(self) -> tuple[StateSpace, ...]:
        return tuple(p.space for p in self.ports)

    @property
    def signature(self) -> tuple[tuple[str, StateSpace], ...]:
        return tuple((p.link, p.space) for p in self.ports)

    @property
    def boundary_space(self) -> StateSpace:
        return tensor(*self.spaces)

    def axis(self, link: str) -> int:
        try:
            return self.links.index(link)
        except ValueError:
            raise SignatureError(f"probe {self.region} has no link {link!r}") from None

    def port(self, link: str) -> Port:
        return self.ports[self.axis(link)]

    def element(self) -> Element:
        """The probe as an element of the ordered boundary space."""
        return join_product(orient(self.tensor, self.ports), self.spaces)

    def pairing_element(self) -> Element:
        """Element ``x`` with ``pair(p, b) = inner(x, b)``."""
        return join_product(self.tensor, self.spaces)

    def with_region(self, region: str) -> "Probe":
        return Probe(region, self.ports, self.tensor)

    def relabel(self, mapping: Mapping[str, str]) -> "Probe":
        ports = [Port(mapping.get(p.link, p.link), p.space, p.dual) for p in self.ports]
        return Probe(self.region, ports, self.tensor)

    def __repr__(self):
        sig = ", ".join(f"{'~' if p.dual else ''}{p.link}:{p.space}" for p in self.ports)
        return f"Probe({self.region}; {sig})"


def orient(t: np.ndarray, ports: Sequence[Port]) -> np.ndarray:
    """Apply the conjugation on every dual port axis (an involution)."""
    out = np.array(t, dtype=float)
    for i, p in enumerate(ports):
        if p.dual and p.space.hdim > 1:
            shape = [1] * out.ndim
            shape[i] = -1
            out = out * conjugation_signs(p.space).reshape(shape)
    return out


def unit_probe(region: str = "unit") -> Probe:
    """Probe on the empty boundary with value 1."""
    return Probe(region, (), np.array(1.0))


def _as_factors(p: Probe, b) -> list[np.ndarray] | np.ndarray:
    if isinstance(b, Element):
        if b.space != p.boundary_space:
            raise SpaceMismatchError(f"boundary {b.space} does not match {p.boundary_space}")
        if len(p.ports) == 1:
            return [b.coeffs]
        return split_product(b, p.spaces)
    b = list(b)
    if len(b) != len(p.ports):
        raise SpaceMismatchError(f"{len(b)} boundary factors for {len(p.ports)} ports")
    for x, port in zip(b, p.ports):
        if x.space != port.space:
            raise SpaceMismatchError(f"link {port.link}: {x.space} vs {port.space}")
    return [x.coeffs for x in b]


def pair(p: Probe, b) -> float:
    """Value of ``p`` on boundary ``b``.

    ``b`` is either an :class:`Element` of the tensor of the port spaces
    or a sequence of per-port elements standing for their tensor product.
    """
    f = _as_factors(p, b)
    if isinstance(f, np.ndarray):
        return float(np.tensordot(p.tensor, f, axes=p.tensor.ndim))
    t = p.tensor
    for v in f:
        t = np.tensordot(v, t, axes=(0, 0))
    return float(t)


def null_probe_slice(space: StateSpace, links=("a", "b"), region: str = "slice") -> Probe:
    """No-intervention probe of a thin slice; its pairing is the inner product."""
    a, b = links
    n = space.basis_dim
    return Probe(region, (Port(a, space, True), Port(b, space, False)), np.eye(n))


def boundary_to_probe(b: Element, link: str = "b", region: str = "exterior") -> Probe:
    """Single-port probe whose pairing is ``inner(b, .)``."""
    return Probe(region, (Port(link, b.space, False),), b.coeffs)


PortSpec = Union[StateSpace, Sequence[tuple[str, StateSpace]]]


def _port_list(spec: PortSpec, default: str, dual: bool) -> list[Port]:
    if isinstance(spec, StateSpace):
        return [Port(default, spec, dual)]
    return [Port(link, sp, dual) for link, sp in spec]


@functools.lru_cache(maxsize=64)
def product_basis_matrices(dims: tuple[int, ...]) -> np.ndarray:
    """Kronecker products of canonical bases, shape (prod d^2, D, D)."""
    out = np.ones((1, 1, 1), dtype=complex)
    for d in dims:
        b = hermitian_basis(d)
        out = np.einsum("kab,lcd->klacbd", out, b).reshape(
            out.shape[0] * b.shape[0], out.shape[1] * d, out.shape[2] * d
        )
    out.flags.writeable = False
    return out


def superoperator_tensor(channel, in_dims: Sequence[int], out_dims: Sequence[int]) -> np.ndarray:
    """Real matrix T[i, j] = tr(xi_j channel(xi_i)) over product bases."""
    bin_ = product_basis_matrices(tuple(in_dims))
    bout = product_basis_matrices(tuple(out_dims))
    images = np.array([channel(x) for x in bin_])
    return np.einsum("jab,iba->ij", bout, images).real


def from_kraus(ins: PortSpec, outs: PortSpec, kraus, region: str = "M") -> Probe:
    """Probe of the quantum operation ``sigma -> sum_k K sigma K^dagger``.

    ``ins``/``outs`` are quantum spaces, or lists of ``(link, space)``
    whose tensor product is the matrix domain/codomain.  In-ports are
    dual, so ``element()`` is the Choi matrix of the operation.
    """
    in_ports = _port_list(ins, "in", True)
    out_ports = _port_list(outs, "out", False)
    for p in in_ports + out_ports:
        if not p.space.is_quantum:
            raise SpaceMismatchError(f"link {p.link}: Kraus data needs a quantum space, got {p.space}")
    din = int(np.prod([p.space.hdim for p in in_ports]))
    dout = int(np.prod([p.space.hdim for p in out_ports]))
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    for k in ks:
        if k.shape != (dout, din):
            raise SpaceMismatchError(f"Kraus operator of shape {k.shape}, expected {(dout, din)}")
    ports = in_ports + out_ports
    shape = [p.space.basis_dim for p in ports]
    if not ks:
        warnings.warn("empty Kraus family gives the zero probe", stacklevel=2)
        return Probe(region, ports, np.zeros(shape))
    stack = np.array(ks)

    def channel(x):
        return np.einsum("kab,bc,kdc->ad", stack, x, stack.conj())

    in_dims = _flat_dims(in_ports)
    out_dims = _flat_dims(out_ports)
    t = superoperator_tensor(channel, in_dims, out_dims)
    return Probe(region, ports, t.reshape(shape))


def _flat_dims(ports: Sequence[Port]) -> list[int]:
    return [p.space.hdim for p in ports]


def is_primitive(p: Probe, tol: float = DEFAULT_TOL) -> bool:
    return is_positive(p.element(), tol)


@dataclass(frozen=True)
class ProbeMap:
    """Linear map induced by a probe and an in/out split of its links.

    ``matrix[j, i] = pair(p, xi_i ⊗ xi_j)`` with ``i`` running over the
    product basis of the in-links and ``j`` over that of the out-links.
    """

    probe: Probe
    in_links: tuple[str, ...]
    out_links: tuple[str, ...]
    matrix: np.ndarray

    @property
    def in_spaces(self) -> tuple[StateSpace, ...]:
        return tuple(self.probe.port(l).space for l in self.in_links)

    @property
    def out_spaces(self) -> tuple[StateSpace, ...]:
        return tuple(self.probe.port(l).space for l in self.out_links)

    def __call__(self, x) -> Element:
        if isinstance(x, Element):
            if x.space != tensor(*self.in_spaces):
                raise SpaceMismatchError(f"input {x.space} does not match {self.in_spaces}")
            v = split_product(x, self.in_spaces).reshape(-1)
        else:
            v = np.asarray(x, dtype=float).reshape(-1)
        y = self.matrix @ v
        return join_product(y.reshape([s.basis_dim for s in self.out_spaces]), self.out_spaces)

    def transpose(self) -> "ProbeMap":
        return ProbeMap(self.probe, self.out_links, self.in_links, self.matrix.T)


def probe_map(p: Probe, in_links: Iterable[str], out_links: Iterable[str]) -> ProbeMap:
    in_links, out_links = tuple(in_links), tuple(out_links)
    if sorted(in_links + out_links) != sorted(p.links) or len(set(in_links + out_links)) != len(p.links):
        raise SignatureError(
            f"split {in_links} | {out_links} is not a partition of {p.links}"
        )
    axes = [p.axis(l) for l in in_links + out_links]
    t = np.transpose(p.tensor, axes)
    din = int(np.prod([p.port(l).space.basis_dim for l in in_links], dtype=np.int64))
    dout = int(np.prod([p.port(l).space.basis_dim for l in out_links], dtype=np.int64))
    return ProbeMap(p, in_links, out_links, np.ascontiguousarray(t.reshape(din, dout).T))


def combine(coeffs: Sequence[float], probes: Sequence[Probe], region: str | None = None) -> Probe:
    """Linear combination of probes sharing a signature."""
    coeffs, probes = list(coeffs), list(probes)
    if len(coeffs) != len(probes) or not probes:
        raise SignatureError("need one coefficient per probe and at least one probe")
    first = probes[0]
    t = np.zeros(first.tensor.shape)
    for c, p in zip(coeffs, probes):
        if p.ports != first.ports:
            raise SignatureError(f"signature mismatch: {p.ports} vs {first.ports}")
        t = t + float(c) * p.tensor
    return Probe(region or first.region, first.ports, t)


class Instrument:
    """Outcome-labelled family of probes on a common signature."""

    def __init__(self, members: Mapping[Hashable, Probe]):
        members = dict(members)
        if not members:
            raise SignatureError("an instrument needs at least one outcome")
        ports = next(iter(members.values())).ports
        for label, p in members.items():
            if p.ports != ports:
                raise SignatureError(f"outcome {label!r} has a different signature")
        self.members = members

    @property
    def labels(self) -> list:
        return list(self.members)

    def member(self, labels: Iterable[Hashable]) -> Probe:
        """Probe for the event that the outcome lies in ``labels``."""
        labels = list(labels)
        ref = next(iter(self.members.values()))
        if not labels:
            return Probe(ref.region, ref.ports, np.zeros(ref.tensor.shape))
        return combine([1.0] * len(labels), [self.members[l] for l in labels])

    @property
    def total(self) -> Probe:
        return self.member(self.members)

    def __getitem__(self, label) -> Probe:
        return self.members[label]


def luders_instrument(
    projectors: Mapping[Hashable, np.ndarray],
    space: StateSpace | None = None,
    links=("in", "out"),
    region: str = "M",
    tol: float = 1e-9,
) -> Instrument:
    """Instrument with members ``sigma -> P_k sigma P_k``."""
    projectors = {k: np.asarray(v, dtype=complex) for k, v in projectors.items()}
    if not projectors:
        raise SpaceMismatchError("empty projector family")
    d = next(iter(projectors.values())).shape[0]
    if space is None:
        from .spaces import make_quantum

        space = make_quantum(d)
    total = np.zeros((d, d), dtype=complex)
    for k, p in projectors.items():
        if p.shape != (d, d):
            raise SpaceMismatchError(f"projector {k!r} has shape {p.shape}")
        if np.abs(p - p.conj().T).max() > tol or np.abs(p @ p - p).max() > tol:
            raise SpaceMismatchError(f"{k!r} is not an orthogonal projector")
        total += p
    if np.abs(total - np.eye(d)).max() > tol:
        raise SpaceMismatchError("projectors do not sum to the identity")
    a, b = links
    return Instrument(
        {k: from_kraus([(a, space)], [(b, space)], [p], region=region) for k, p in projectors.items()}
    )
