"""Finite classical theories and their probes.

A theory assigns a finite label set to each hypersurface and a finite
solution set to each region, with a restriction map sending a solution
to the labels it induces on the boundary components.  All measures are
counting measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import ExactnessError, SignatureError
from .network import self_glue
from .operational import Outcome, quotient
from .probes import Port, Probe, pair
from .spaces import DEFAULT_TOL, Element, StateSpace, make_classical

Observable = Union[Callable[[Hashable], float], Mapping[Hashable, float]]


@dataclass(frozen=True)
class Region:
    """Region with boundary components ``(link, hypersurface)`` and solutions."""

    name: str
    boundary: tuple[tuple[str, str], ...]
    solutions: tuple[Hashable, ...]
    restriction: Mapping[Hashable, tuple[str, ...]] = field(hash=False)

    @property
    def links(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.boundary)


@dataclass(frozen=True)
class Gluing:
    """Declared self-gluing of ``source`` along two boundary links.

    ``injection`` maps each solution of ``target`` to the solution of
    ``source`` it comes from.
    """

    source: str
    link_a: str
    link_b: str
    target: str
    injection: Mapping[Hashable, Hashable] = field(hash=False)


class ClassicalTheory:
    def __init__(
        self,
        hypersurfaces: Mapping[str, Sequence[str]],
        regions: Iterable[Region] = (),
        gluings: Iterable[Gluing] = (),
    ):
        self.hypersurfaces = {h: tuple(str(x) for x in ls) for h, ls in hypersurfaces.items()}
        self.regions: dict[str, Region] = {}
        self.gluings: list[Gluing] = []
        for r in regions:
            self.add_region(r)
        for g in gluings:
            self.gluings.append(g)

    def space(self, hypersurface: str) -> StateSpace:
        return make_classical(self.hypersurfaces[hypersurface])

    def add_region(self, r: Region) -> Region:
        if r.name in self.regions:
            raise SignatureError(f"region {r.name!r} declared twice")
        links = r.links
        if len(set(links)) != len(links):
            raise SignatureError(f"region {r.name!r} repeats a boundary link")
        for h in (h for _, h in r.boundary):
            if h not in self.hypersurfaces:
                raise SignatureError(f"unknown hypersurface {h!r}")
        if len(set(r.solutions)) != len(r.solutions):
            raise SignatureError(f"region {r.name!r} has duplicate solutions")
        for phi in r.solutions:
            lab = tuple(r.restriction[phi])
            if len(lab) != len(r.boundary):
                raise SignatureError(f"solution {phi!r} restricts to {len(lab)} components")
            for x, (_, h) in zip(lab, r.boundary):
                if x not in self.hypersurfaces[h]:
                    raise SignatureError(f"label {x!r} is not a solution on {h!r}")
        self.regions[r.name] = r
        return r

    def ports(self, region: str) -> list[Port]:
        r = self.regions[region]
        return [Port(l, self.space(h)) for l, h in r.boundary]

    def disjoint_union(self, a: str, b: str, name: str) -> Region:
        """Region whose solutions are pairs, restricting componentwise."""
        ra, rb = self.regions[a], self.regions[b]
        sols = tuple((x, y) for x in ra.solutions for y in rb.solutions)
        res = {(x, y): tuple(ra.restriction[x]) + tuple(rb.restriction[y]) for x, y in sols}
        return self.add_region(Region(name, ra.boundary + rb.boundary, sols, res))

    def glue(self, source: str, link_a: str, link_b: str, target: str) -> Gluing:
        """Declare the self-gluing by building its solution set as an equalizer."""
        r = self.regions[source]
        i, j = r.links.index(link_a), r.links.index(link_b)
        keep = [k for k in range(len(r.boundary)) if k not in (i, j)]
        sols = tuple(phi for phi in r.solutions if r.restriction[phi][i] == r.restriction[phi][j])
        res = {phi: tuple(r.restriction[phi][k] for k in keep) for phi in sols}
        self.add_region(Region(target, tuple(r.boundary[k] for k in keep), sols, res))
        g = Gluing(source, link_a, link_b, target, {phi: phi for phi in sols})
        self.gluings.append(g)
        return g


def _values(F: Observable, solutions) -> list[float]:
    if callable(F):
        return [float(F(phi)) for phi in solutions]
    return [float(F[phi]) for phi in solutions]


def observable_probe(theory: ClassicalTheory, region: str, F: Observable = lambda _: 1.0) -> Probe:
    """Probe whose entry at boundary data ``s`` sums ``F`` over the fiber of ``s``."""
    r = theory.regions[region]
    ports = theory.ports(region)
    index = [{x: k for k, x in enumerate(theory.hypersurfaces[h])} for _, h in r.boundary]
    t = np.zeros([p.space.basis_dim for p in ports])
    for phi, v in zip(r.solutions, _values(F, r.solutions)):
        t[tuple(ix[x] for ix, x in zip(index, r.restriction[phi]))] += v
    return Probe(region, ports, t)


def null_observable_probe(theory: ClassicalTheory, region: str) -> Probe:
    return observable_probe(theory, region, lambda _: 1.0)


def measure_probe(
    ports: Sequence[tuple[str, StateSpace]],
    weights: Union[Callable[[tuple], float], Mapping[tuple, float]],
    region: str = "M",
) -> Probe:
    """Probe given by a density on boundary data (counting reference measure)."""
    ports = [Port(l, s) for l, s in ports]
    for p in ports:
        if not p.space.is_classical:
            raise SignatureError(f"link {p.link} is not classical")
    # a point of a single-atom space is keyed by its bare label
    points = [[pt[0] if len(pt) == 1 else pt for pt in p.space.points] for p in ports]
    t = np.zeros([len(ps) for ps in points])
    for idx in np.ndindex(*t.shape):
        key = tuple(ps[k] for ps, k in zip(points, idx))
        t[idx] = float(weights(key) if callable(weights) else weights.get(key, 0.0))
    return Probe(region, ports, t)


@dataclass(frozen=True)
class GluingReport:
    gluing: Gluing
    max_abs_diff: float
    ok: bool


def check_exactness(theory: ClassicalTheory, g: Gluing) -> None:
    """Raise :class:`ExactnessError` with a witness if the gluing is not exact."""
    src, tgt = theory.regions[g.source], theory.regions[g.target]
    i, j = src.links.index(g.link_a), src.links.index(g.link_b)
    keep = [k for k in range(len(src.boundary)) if k not in (i, j)]
    if tuple(src.boundary[k] for k in keep) != tgt.boundary:
        raise ExactnessError("glued region has the wrong boundary", witness=None)
    if src.boundary[i][1] != src.boundary[j][1]:
        raise ExactnessError("glued links carry different hypersurfaces", witness=None)
    image = {}
    for phi1 in tgt.solutions:
        if phi1 not in g.injection:
            raise ExactnessError("solution without image", witness=phi1)
        phi = g.injection[phi1]
        if phi not in src.restriction:
            raise ExactnessError("image is not a solution of the source region", witness=phi1)
        if phi in image:
            raise ExactnessError("injection is not injective", witness=phi1)
        image[phi] = phi1
        rs = src.restriction[phi]
        if rs[i] != rs[j]:
            raise ExactnessError("image does not agree on the glued links", witness=phi1)
        if tuple(rs[k] for k in keep) != tuple(tgt.restriction[phi1]):
            raise ExactnessError("restriction maps do not commute", witness=phi1)
    for phi in src.solutions:
        rs = src.restriction[phi]
        if rs[i] == rs[j] and phi not in image:
            raise ExactnessError("matching solution missing from the glued region", witness=phi)


def verify_gluing(
    theory: ClassicalTheory, g: Gluing, F: Observable = lambda _: 1.0, tol: float = 1e-12
) -> GluingReport:
    """Compare the glued observable's probe with the self-glued probe."""
    check_exactness(theory, g)
    src, tgt = theory.regions[g.source], theory.regions[g.target]
    f_src = dict(zip(src.solutions, _values(F, src.solutions)))
    glued = observable_probe(theory, g.target, {phi1: f_src[g.injection[phi1]] for phi1 in tgt.solutions})
    via_probe = self_glue(observable_probe(theory, g.source, f_src), g.link_a, g.link_b)
    diff = float(np.abs(glued.tensor - via_probe.tensor).max(initial=0.0))
    return GluingReport(g, diff, diff <= tol)


def classical_probability(
    F: Observable, theory: ClassicalTheory, region: str, b, tol: float = DEFAULT_TOL
) -> Outcome:
    """Fraction of ``b``-weighted admissible solutions on which ``F`` holds."""
    r = theory.regions[region]
    vals = _values(F, r.solutions)
    if any(v not in (0.0, 1.0) for v in vals):
        raise ValueError("F must be a binary observable")
    p = observable_probe(theory, region, dict(zip(r.solutions, vals)))
    q = null_observable_probe(theory, region)
    scale = float(np.linalg.norm(q.tensor)) * (
        float(np.linalg.norm(b.coeffs)) if isinstance(b, Element)
        else float(np.prod([np.linalg.norm(x.coeffs) for x in b]))
    )
    return quotient(pair(p, b), pair(q, b), scale, "probability", tol)
