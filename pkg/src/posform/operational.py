"""Probabilities, expectation values, states and causality diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import HierarchyError, NormalizationError, SignatureError, SpaceMismatchError
from .probes import Instrument, Port, Probe, ProbeMap, combine, orient, pair, probe_map
from .spaces import (
    DEFAULT_TOL,
    Element,
    is_positive,
    join_product,
    make_classical,
    max_uncertainty,
    split_product,
)

DENOMINATOR_RTOL = 1e-12


class HierarchyWarning(UserWarning):
    """A probability was requested for probes that are not ordered 0 <= p <= q."""


@dataclass(frozen=True)
class Outcome:
    kind: str  # "probability", "expectation" or "undefined"
    value: float | complex | None = None
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.kind != "undefined"

    @property
    def is_real(self) -> bool:
        return not isinstance(self.value, complex) or self.value.imag == 0.0


def undefined(reason: str = "denominator_zero") -> Outcome:
    return Outcome("undefined", None, reason)


def quotient(num, den, scale: float, kind: str = "probability", tol: float = DEFAULT_TOL) -> Outcome:
    """Outcome of ``num / den``, undefined when ``den`` is negligible."""
    if abs(den) <= DENOMINATOR_RTOL * scale or den == 0:
        return undefined()
    v = num / den
    if kind == "probability":
        v = float(v)
        if -tol <= v <= 1 + tol:
            v = min(max(v, 0.0), 1.0)
    return Outcome(kind, v)


def _norm(b) -> float:
    if isinstance(b, Element):
        return float(np.linalg.norm(b.coeffs))
    return math.prod(float(np.linalg.norm(x.coeffs)) for x in b)


def _same_signature(p: Probe, q: Probe):
    if p.signature != q.signature:
        raise SpaceMismatchError(f"{p} and {q} live on different boundaries")


def check_hierarchy(p: Probe, q: Probe, tol: float = DEFAULT_TOL) -> bool:
    """True when 0 <= p <= q in the probe order."""
    _same_signature(p, q)
    diff = Probe(q.region, q.ports, q.tensor - p.tensor)
    p_ = Probe(q.region, q.ports, p.tensor)
    return is_positive(p_.element(), tol) and is_positive(diff.element(), tol)


def probability(p: Probe, q: Probe, b, tol: float = DEFAULT_TOL) -> Outcome:
    """Probability that ``p`` occurs given that ``q`` does, on boundary ``b``."""
    _same_signature(p, q)
    if not check_hierarchy(p, q, tol):
        warnings.warn("probability requested without 0 <= p <= q", HierarchyWarning, stacklevel=2)
    scale = float(np.linalg.norm(q.tensor)) * _norm(b)
    return quotient(pair(p, b), pair(q, b), scale, "probability", tol)


def expectation(p: Probe, q: Probe, b, tol: float = DEFAULT_TOL) -> Outcome:
    _same_signature(p, q)
    scale = float(np.linalg.norm(q.tensor)) * _norm(b)
    return quotient(pair(p, b), pair(q, b), scale, "expectation", tol)


def oriented(x: Element, ports: Sequence[Port]) -> Element:
    """Read a boundary element through the orientation of ``ports``."""
    spaces = [p.space for p in ports]
    return join_product(orient(split_product(x, spaces), ports), spaces)


def boundary_probability(q: Probe, b: Element, c: Element, tol: float = DEFAULT_TOL) -> Outcome:
    """Probability of the sharper boundary condition ``b`` given ``c``."""
    if b.space != q.boundary_space or c.space != q.boundary_space:
        raise SpaceMismatchError("boundary conditions must live on the probe's boundary")
    if not is_positive(oriented(b, q.ports), tol) or not is_positive(oriented(c - b, q.ports), tol):
        raise HierarchyError("boundary conditions are not ordered 0 <= b <= c")
    scale = float(np.linalg.norm(q.tensor)) * float(np.linalg.norm(c.coeffs))
    return quotient(pair(q, b), pair(q, c), scale, "probability", tol)


@dataclass(frozen=True)
class RealInstrument:
    """Instrument whose outcomes are the cells of a partition of [r, s]."""

    r: float
    s: float
    instrument: Instrument
    scale_probe: Probe

    @property
    def n(self) -> int:
        return len(self.instrument.members)

    @property
    def width(self) -> float:
        return (self.s - self.r) / self.n

    @property
    def cells(self) -> list[tuple[float, float]]:
        l = self.width
        return [(self.r + k * l, self.r + (k + 1) * l) for k in range(self.n)]

    @property
    def total(self) -> Probe:
        return self.instrument.total


def cell_instrument(
    inst: Instrument, values: Mapping[Hashable, float], r: float, s: float, n: int
) -> Instrument:
    """Coarse-grain an instrument with real outcomes into ``n`` equal cells.

    Cells are half-open ``[x, y)`` except the last, which is closed.
    """
    if n < 1:
        raise ValueError("need at least one cell")
    if s <= r:
        raise ValueError("empty interval")
    l = (s - r) / n
    cells: dict[int, list] = {k: [] for k in range(n)}
    for label in inst.labels:
        v = values[label]
        if not r <= v <= s:
            raise ValueError(f"outcome {label!r} = {v} lies outside [{r}, {s}]")
        k = min(int((v - r) // l), n - 1)
        cells[k].append(label)
    return Instrument({k: inst.member(ls) for k, ls in cells.items()})


def build_scale_probe(inst: Instrument, r: float, s: float, n: int | None = None) -> RealInstrument:
    """Attach the midpoint-weighted probe to an instrument over ``n`` cells.

    Members must be labelled ``0 .. n-1`` by cell index.
    """
    if n is None:
        n = len(inst.members)
    if n == 0:
        raise ValueError("the partition needs at least one cell")
    if sorted(inst.labels) != list(range(n)):
        raise SignatureError(f"instrument members must be the cells 0..{n - 1}")
    l = (s - r) / n
    mids = [r + (k + 0.5) * l for k in range(n)]
    p = combine(mids, [inst[k] for k in range(n)])
    return RealInstrument(float(r), float(s), inst, p)


def bayes_update(b, selective: ProbeMap) -> Element:
    """Unnormalized state after the selective operation was observed."""
    return selective(b)


def normalize_state(b: Element) -> Element:
    z = float(np.dot(max_uncertainty(b.space).coeffs, b.coeffs))
    if not z > 0:
        raise NormalizationError(f"normalizer {z} is not positive")
    return b / z


@dataclass(frozen=True)
class CausalityFlags:
    forward_preserving: bool
    forward_decreasing: bool
    backward_preserving: bool
    backward_decreasing: bool

    def as_dict(self) -> dict[str, bool]:
        return dict(self.__dict__)


def _unit_vector(spaces) -> np.ndarray:
    v = np.array(1.0)
    for s in spaces:
        v = np.multiply.outer(v, max_uncertainty(s).coeffs)
    return v.reshape(-1)


def _preserves(m: np.ndarray, e_in: np.ndarray, e_out: np.ndarray, tol: float) -> bool:
    row = e_out @ m
    return bool(np.all(np.abs(row - e_in) <= tol * np.maximum(1.0, np.abs(e_in))))


def _decreases(m, e_in, e_out, in_spaces, tol) -> bool:
    gap = e_in - e_out @ m
    return is_positive(join_product(gap.reshape([s.basis_dim for s in in_spaces]), in_spaces), tol)


def causality_class(
    p: Probe, in_links: Iterable[str], out_links: Iterable[str], tol: float = DEFAULT_TOL
) -> CausalityFlags:
    """Normalization behaviour of a probe read forward and backward in time."""
    pm = probe_map(p, in_links, out_links)
    e_in = _unit_vector(pm.in_spaces)
    e_out = _unit_vector(pm.out_spaces)
    m = pm.matrix
    return CausalityFlags(
        _preserves(m, e_in, e_out, tol),
        _decreases(m, e_in, e_out, pm.in_spaces, tol),
        _preserves(m.T, e_out, e_in, tol),
        _decreases(m.T, e_out, e_in, pm.out_spaces, tol),
    )


def hybrid_probe(inst: Instrument, link: str = "outcome", region: str | None = None) -> Probe:
    """Single probe recording the outcome of ``inst`` on a classical link.

    Pairing with ``b ⊗ indicator(E)`` gives the member for the event ``E``.
    """
    labels = inst.labels
    ref = inst[labels[0]]
    if link in ref.links:
        raise SignatureError(f"link {link!r} already used by the instrument")
    space = make_classical([str(x) for x in labels])
    t = np.stack([inst[x].tensor for x in labels], axis=-1)
    return Probe(region or ref.region, ref.ports + (Port(link, space),), t)
