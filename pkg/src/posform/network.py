"""Gluing of probes, networks, contraction planning and evaluation."""

from __future__ import annotations

import itertools
import math
import random as _random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import (
    CyclicOrientationError,
    MissingBoundaryError,
    NetworkError,
    SignatureError,
    SpaceMismatchError,
)
from .probes import Port, Probe, probe_map
from .spaces import Element, StateSpace


def glue_disjoint(p: Probe, q: Probe, region: str | None = None) -> Probe:
    """Probe of the disjoint union of two regions (tensor product)."""
    if p.region == q.region:
        raise SignatureError(f"cannot glue region {p.region!r} with itself disjointly")
    clash = set(p.links) & set(q.links)
    if clash:
        raise SignatureError(f"duplicate link ids: {sorted(clash)}")
    t = np.multiply.outer(p.tensor, q.tensor)
    return Probe(region or f"{p.region}+{q.region}", p.ports + q.ports, t)


def self_glue(p: Probe, link_a: str, link_b: str, region: str | None = None) -> Probe:
    """Identify two ports of one probe by summing over a basis of the link."""
    i, j = p.axis(link_a), p.axis(link_b)
    if i == j:
        raise SignatureError("self-gluing needs two distinct ports")
    if p.ports[i].space != p.ports[j].space:
        raise SpaceMismatchError(
            f"cannot glue {link_a}:{p.ports[i].space} to {link_b}:{p.ports[j].space}"
        )
    t = np.trace(p.tensor, axis1=i, axis2=j)
    ports = [pt for k, pt in enumerate(p.ports) if k not in (i, j)]
    return Probe(region or p.region, ports, t)


def compose(p: Probe, q: Probe, region: str | None = None) -> Probe:
    """Glue two probes along all the links they share.

    Done literally as a disjoint gluing followed by one self-gluing per
    shared link.
    """
    shared = [l for l in p.links if l in q.links]
    rename = {l: f"{l}'" for l in shared}
    while any(v in p.links or v in q.links for v in rename.values()):
        rename = {l: v + "'" for l, v in rename.items()}
    g = glue_disjoint(p, q.relabel(rename), region=region or f"{p.region}+{q.region}")
    for l in shared:
        g = self_glue(g, l, rename[l])
    return g


@dataclass(frozen=True)
class Link:
    id: str
    space: StateSpace
    endpoints: tuple[tuple[str, int], ...]
    boundary: Optional[Element] = None

    @property
    def is_open(self) -> bool:
        return len(self.endpoints) == 1


class Network:
    """Probes keyed by region id, wired by shared link ids.

    A link used by two probes is internal.  A link used by one probe is
    open and may carry a boundary element.
    """

    def __init__(self, probes: Iterable[Probe] | Mapping[str, Probe], boundaries: Mapping[str, Element] | None = None):
        if isinstance(probes, Mapping):
            probes = list(probes.values())
        self.probes: dict[str, Probe] = {}
        for p in probes:
            if p.region in self.probes:
                raise NetworkError(f"region {p.region!r} appears twice")
            self.probes[p.region] = p
        boundaries = dict(boundaries or {})
        ends: dict[str, list[tuple[str, int]]] = {}
        spaces: dict[str, StateSpace] = {}
        for r, p in self.probes.items():
            for k, port in enumerate(p.ports):
                if port.link in spaces and spaces[port.link] != port.space:
                    raise SpaceMismatchError(
                        f"link {port.link}: {spaces[port.link]} vs {port.space}"
                    )
                spaces[port.link] = port.space
                ends.setdefault(port.link, []).append((r, k))
        self.links: dict[str, Link] = {}
        for l, e in ends.items():
            if len(e) > 2:
                raise NetworkError(f"link {l!r} has {len(e)} endpoints")
            b = boundaries.pop(l, None)
            if b is not None:
                if len(e) == 2:
                    raise NetworkError(f"boundary given for internal link {l!r}")
                if b.space != spaces[l]:
                    raise SpaceMismatchError(f"boundary on {l}: {b.space} vs {spaces[l]}")
            self.links[l] = Link(l, spaces[l], tuple(e), b)
        if boundaries:
            raise NetworkError(f"boundaries for unknown links: {sorted(boundaries)}")

    @property
    def open_links(self) -> list[str]:
        return [l for l, k in self.links.items() if k.is_open and k.boundary is None]

    @property
    def internal_links(self) -> list[str]:
        return [l for l, k in self.links.items() if not k.is_open]

    @property
    def is_closed(self) -> bool:
        return not self.open_links

    def with_probe(self, p: Probe) -> "Network":
        """Copy with the probe of region ``p.region`` replaced."""
        probes = dict(self.probes)
        probes[p.region] = p
        return Network(probes, self.boundaries)

    @property
    def boundaries(self) -> dict[str, Element]:
        return {l: k.boundary for l, k in self.links.items() if k.boundary is not None}

    def with_boundaries(self, boundaries: Mapping[str, Element]) -> "Network":
        b = self.boundaries
        b.update(boundaries)
        return Network(self.probes, b)

    def factors(self) -> dict[str, tuple[np.ndarray, list[str]]]:
        """Probe tensors with boundary elements already absorbed."""
        out = {}
        for r, p in self.probes.items():
            t = p.tensor
            links = list(p.links)
            for l in list(links):
                b = self.links[l].boundary
                if b is not None:
                    ax = links.index(l)
                    t = np.tensordot(t, b.coeffs, axes=(ax, 0))
                    links.pop(ax)
            out[r] = (t, links)
        return out


@dataclass(frozen=True)
class Step:
    left: tuple[str, ...]
    right: tuple[str, ...]
    links: tuple[str, ...]
    size: int


@dataclass(frozen=True)
class Plan:
    steps: tuple[Step, ...]
    initial_sizes: tuple[int, ...]
    order: tuple[str, ...] = ()

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.steps)

    @property
    def peak(self) -> int:
        return max(self.initial_sizes + self.sizes, default=1)

    def describe(self) -> list[str]:
        lines = [f"steps: {len(self.steps)}"]
        for i, s in enumerate(self.steps, 1):
            lines.append(
                f"step {i}: ({' '.join(s.left)}) x ({' '.join(s.right)})"
                f" over [{' '.join(s.links)}] -> {s.size}"
            )
        lines.append(f"peak: {self.peak}")
        return lines


def _dims(n: Network) -> dict[str, int]:
    return {l: k.space.basis_dim for l, k in n.links.items()}


def _initial_groups(n: Network) -> dict[tuple[str, ...], frozenset]:
    groups = {}
    for r, p in n.probes.items():
        groups[(r,)] = frozenset(l for l in p.links if n.links[l].boundary is None)
    return groups


def _size(links, dims) -> int:
    return math.prod(dims[l] for l in links)


def _merge(a: frozenset, b: frozenset) -> frozenset:
    return a ^ b


def _make_plan(n: Network, choose) -> Plan:
    dims = _dims(n)
    groups = _initial_groups(n)
    initial = tuple(_size(v, dims) for v in groups.values())
    steps = []
    while len(groups) > 1:
        keys = sorted(groups)
        a, b = choose(keys, groups, dims)
        la, lb = groups.pop(a), groups.pop(b)
        merged = _merge(la, lb)
        key = tuple(sorted(a + b))
        groups[key] = merged
        steps.append(Step(a, b, tuple(sorted(la & lb)), _size(merged, dims)))
    return Plan(tuple(steps), initial, tuple(n.probes))


def _greedy_choice(keys, groups, dims):
    best = None
    for a, b in itertools.combinations(keys, 2):
        score = (_size(_merge(groups[a], groups[b]), dims), a, b)
        if best is None or score < best:
            best = score
    return best[1], best[2]


def plan_contraction(n: Network, strategy: str = "greedy") -> Plan:
    """Contraction order for ``n``.

    ``greedy`` repeatedly merges the pair with the smallest result,
    ties broken by region ids; ``baseline`` contracts in declaration
    order; ``random:<seed>`` picks pairs uniformly at random.
    """
    if strategy == "greedy":
        return _make_plan(n, _greedy_choice)
    if strategy == "baseline":
        order = list(n.probes)

        def left_to_right(keys, groups, dims):
            by_first = sorted(keys, key=lambda k: min(order.index(r) for r in k))
            return by_first[0], by_first[1]

        return _make_plan(n, left_to_right)
    if strategy.startswith("random:"):
        try:
            seed = int(strategy.split(":", 1)[1])
        except ValueError:
            raise NetworkError(f"bad plan strategy {strategy!r}") from None
        rng = _random.Random(seed)

        def pick(keys, groups, dims):
            a, b = rng.sample(keys, 2)
            return (a, b) if a < b else (b, a)

        return _make_plan(n, pick)
    raise NetworkError(f"unknown plan strategy {strategy!r}")


def optimal_peak(n: Network) -> int:
    """Smallest achievable peak over all pairwise orders (exhaustive)."""
    dims = _dims(n)
    groups = _initial_groups(n)
    floor = max((_size(v, dims) for v in groups.values()), default=1)
    memo: dict[frozenset, int] = {}

    def best(state: frozenset) -> int:
        if len(state) <= 1:
            return 0
        if state in memo:
            return memo[state]
        result = None
        for a, b in itertools.combinations(sorted(state, key=lambda g: sorted(g[0])), 2):
            merged = (a[0] | b[0], _merge(a[1], b[1]))
            cand = max(_size(merged[1], dims), best(state - {a, b} | {merged}))
            if result is None or cand < result:
                result = cand
        memo[state] = result
        return result

    start = frozenset((frozenset(k), v) for k, v in groups.items())
    return max(floor, best(start))


def _contract(a, b):
    ta, la = a
    tb, lb = b
    shared = [l for l in la if l in lb]
    ax_a = [la.index(l) for l in shared]
    ax_b = [lb.index(l) for l in shared]
    t = np.tensordot(ta, tb, axes=(ax_a, ax_b))
    links = [l for l in la if l not in shared] + [l for l in lb if l not in shared]
    return t, links


def _execute(factors, plan: Plan):
    tensors = {(r,): f for r, f in factors.items()}
    for s in plan.steps:
        a = tensors.pop(s.left)
        b = tensors.pop(s.right)
        tensors[tuple(sorted(s.left + s.right))] = _contract(a, b)
    if len(tensors) != 1:
        raise NetworkError("plan does not reduce the network to one tensor")
    return next(iter(tensors.values()))


def contract_network(n: Network, plan: Plan | None = None) -> tuple[np.ndarray, list[str]]:
    """Contract all internal links; returns a tensor over the open links."""
    if not n.probes:
        return np.array(1.0), []
    plan = plan or plan_contraction(n)
    return _execute(n.factors(), plan)


def evaluate(n: Network, plan: Plan | None = None, parallel: int = 1) -> float:
    """Value of a closed network.

    ``parallel > 1`` splits the basis sum of the widest internal link
    across threads.  Partial sums are added in a fixed order, but the
    regrouping can still move the result by float rounding (well below
    1e-9 relative); the serial default is bit-reproducible.
    """
    if not n.is_closed:
        raise MissingBoundaryError(n.open_links)
    if not n.probes:
        return 1.0
    plan = plan or plan_contraction(n)
    factors = n.factors()
    internal = n.internal_links
    if parallel <= 1 or not internal:
        t, _ = _execute(factors, plan)
        return float(t)
    dims = _dims(n)
    link = max(internal, key=lambda l: (dims[l], l))
    chunks = [c for c in np.array_split(np.arange(dims[link]), parallel) if c.size]
    (ra, _), (rb, _) = n.links[link].endpoints

    def run(idx):
        fs = dict(factors)
        for r in (ra, rb):
            t, ls = fs[r]
            fs[r] = (np.take(t, idx, axis=ls.index(link)), ls)
        t, _ = _execute(fs, plan)
        return float(t)

    with ThreadPoolExecutor(max_workers=parallel) as pool:
        parts = list(pool.map(run, chunks))
    return float(sum(parts))


def evaluate_einsum(n: Network) -> float:
    """Single ``einsum`` call over every probe and boundary element."""
    if not n.is_closed:
        raise MissingBoundaryError(n.open_links)
    ids = {l: i for i, l in enumerate(n.links)}
    ops: list = []
    for p in n.probes.values():
        ops += [p.tensor, [ids[l] for l in p.links]]
    for l, b in n.boundaries.items():
        ops += [b.coeffs, [ids[l]]]
    if not ops:
        return 1.0
    return float(np.einsum(*ops, [], optimize="greedy"))


def evaluate_by_gluing(n: Network) -> float:
    """Value obtained by composing probes one at a time.

    Boundary elements are turned into single-port probes; the network is
    then folded with :func:`compose` (disjoint gluing plus self-gluings).
    """
    if not n.is_closed:
        raise MissingBoundaryError(n.open_links)
    probes = list(n.probes.values())
    for l, b in n.boundaries.items():
        probes.append(Probe(f"@{l}", (Port(l, b.space),), b.coeffs))
    if not probes:
        return 1.0
    acc = probes.pop(0)
    while probes:
        # glue next the probe that leaves the fewest open coefficients
        k = min(range(len(probes)), key=lambda i: (_glued_size(acc, probes[i]), i))
        acc = compose(acc, probes.pop(k), region="acc")
    return float(acc.tensor)


def _glued_size(p: Probe, q: Probe) -> int:
    keep = set(p.links) ^ set(q.links)
    return math.prod(pt.space.basis_dim for pt in p.ports + q.ports if pt.link in keep)


def evaluate_sliced(n: Network, orientation: Mapping[str, Optional[str]]) -> float:
    """Evaluate by pushing a state through the network in causal order.

    ``orientation[link]`` names the region a link flows out of; ``None``
    means the link flows in from the boundary.  Open links flowing out of
    a region end on their boundary element, used as an effect.
    """
    if not n.is_closed:
        raise MissingBoundaryError(n.open_links)
    missing = [l for l in n.links if l not in orientation]
    if missing:
        raise NetworkError(f"no direction given for links {missing}")
    ins: dict[str, list[str]] = {r: [] for r in n.probes}
    outs: dict[str, list[str]] = {r: [] for r in n.probes}
    sources, sinks = [], []
    for l, link in n.links.items():
        src = orientation[l]
        regions = [r for r, _ in link.endpoints]
        if link.is_open:
            (r,) = regions
            if src is None:
                sources.append(l)
                ins[r].append(l)
            elif src == r:
                sinks.append(l)
                outs[r].append(l)
            else:
                raise NetworkError(f"link {l!r} cannot flow out of {src!r}")
        else:
            if src not in regions:
                raise NetworkError(f"link {l!r} cannot flow out of {src!r}")
            dst = regions[1] if regions[0] == src else regions[0]
            outs[src].append(l)
            ins[dst].append(l)
    # Kahn's algorithm, deterministic by region id
    indeg = {r: sum(1 for l in ins[r] if not n.links[l].is_open) for r in n.probes}
    ready = sorted(r for r, d in indeg.items() if d == 0)
    order = []
    while ready:
        r = ready.pop(0)
        order.append(r)
        for l in outs[r]:
            link = n.links[l]
            if link.is_open:
                continue
            dst = next(x for x, _ in link.endpoints if x != r)
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
                ready.sort()
    if len(order) != len(n.probes):
        raise CyclicOrientationError("link orientation has a cycle; use evaluate()")
    state = np.array(1.0)
    live: list[str] = []
    for l in sources:
        state = np.multiply.outer(state, n.links[l].boundary.coeffs)
        live.append(l)
    for r in order:
        m = probe_map(n.probes[r], ins[r], outs[r]).matrix
        rest = [l for l in live if l not in ins[r]]
        state = np.transpose(state, [live.index(l) for l in rest + ins[r]])
        rest_shape = state.shape[: len(rest)]
        state = state.reshape(math.prod(rest_shape), -1) @ m.T
        state = state.reshape(rest_shape + tuple(n.links[l].space.basis_dim for l in outs[r]))
        live = rest + outs[r]
        for l in outs[r]:
            if n.links[l].is_open:
                ax = live.index(l)
                state = np.tensordot(state, n.links[l].boundary.coeffs, axes=(ax, 0))
                live.pop(ax)
    return float(state)
