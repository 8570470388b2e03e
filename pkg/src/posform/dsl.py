"""Line-oriented text format for spaces, probes, networks and queries.

Parsing is purely syntactic plus identifier/arity checks; no tensors are
built until :func:`build` is called.  Every diagnostic carries a source
position.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .amplitude import Amplitude, HilbertSpace, msq
from .classical import ClassicalTheory, Region, observable_probe
from .errors import PosformError
from .network import Network
from .probes import Port, Probe, from_kraus
from .spaces import (
    Classical,
    Element,
    Quantum,
    StateSpace,
    make_classical,
    make_quantum,
    max_uncertainty,
    tensor,
)

# tensors larger than this are refused at build time
MAX_ENTRIES = 1 << 24

KEYWORDS = frozenset(
    "space link probe boundary theory amplitude query region links data in out kraus on "
    "maxuncertainty observable values dual solution classical quantum tensor".split()
)

_ID = re.compile(r"[A-Za-z0-9_]+")
_UREAL = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_REAL = re.compile(rf"[+-]?{_UREAL}")
_COMPLEX = re.compile(
    rf"(?P<re>[+-]?{_UREAL})(?:(?P<sign>[+-])(?P<im>{_UREAL})i)?|(?P<imo>[+-]?{_UREAL})i"
)
_DIM = re.compile(r"[1-9][0-9]*")


class DSLError(PosformError, ValueError):
    """Syntax or semantic error at ``line``/``col`` (1-based), spanning ``length`` chars."""

    def __init__(self, message: str, line: int, col: int, length: int = 1):
        self.message = message
        self.line = line
        self.col = col
        self.length = max(1, length)
        super().__init__(f"line {line}, col {col}: {message}")


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0


_NOPOS = field(default=Pos(), compare=False, repr=False)


@dataclass(frozen=True)
class SpaceDecl:
    id: str
    kind: str  # classical | quantum | tensor
    labels: tuple[str, ...] = ()
    dim: int = 0
    factors: tuple[str, ...] = ()
    pos: Pos = _NOPOS


@dataclass(frozen=True)
class LinkDecl:
    id: str
    space: str
    pos: Pos = _NOPOS


@dataclass(frozen=True)
class TheoryRegionDecl:
    theory: str
    region: str
    links: tuple[str, ...]
    pos: Pos = _NOPOS


@dataclass(frozen=True)
class SolutionDecl:
    theory: str
    region: str
    id: str
    labels: tuple[str, ...]
    pos: Pos = _NOPOS


@dataclass(frozen=True)
class ProbeDecl:
    """One probe.  ``form`` is ``links``, ``inout``, ``kraus`` or ``observable``.

    In the ``inout`` and ``kraus`` forms the ``in`` links are dual ports.
    """

    id: str
    region: str
    form: str
    links: tuple[str, ...] = ()
    in_links: tuple[str, ...] = ()
    out_links: tuple[str, ...] = ()
    data: tuple[float, ...] = ()
    kraus: tuple[tuple[tuple[complex, ...], ...], ...] = ()
    theory: str = ""
    pos: Pos = _NOPOS

    @property
    def all_links(self) -> tuple[str, ...]:
        return self.links if self.form in ("links", "observable") else self.in_links + self.out_links


@dataclass(frozen=True)
class AmplitudeDecl:
    id: str
    region: str
    links: tuple[str, ...]
    dual: tuple[str, ...]
    data: tuple[complex, ...]
    pos: Pos = _NOPOS

    @property
    def all_links(self) -> tuple[str, ...]:
        return self.links


@dataclass(frozen=True)
class BoundaryDecl:
    id: str
    link: str
    data: Optional[tuple[float, ...]]  # None means the order unit
    pos: Pos = _NOPOS


@dataclass(frozen=True)
class QueryDecl:
    kind: str  # value | prob | expect | causality
    probes: tuple[str, ...] = ()
    in_links: tuple[str, ...] = ()
    out_links: tuple[str, ...] = ()
    pos: Pos = _NOPOS


Decl = Union[SpaceDecl, LinkDecl, TheoryRegionDecl, SolutionDecl, ProbeDecl, AmplitudeDecl, BoundaryDecl, QueryDecl]

_RANK = {
    SpaceDecl: 0,
    LinkDecl: 1,
    TheoryRegionDecl: 2,
    SolutionDecl: 2,
    ProbeDecl: 3,
    AmplitudeDecl: 3,
    BoundaryDecl: 4,
    QueryDecl: 5,
}


@dataclass(frozen=True)
class Document:
    decls: tuple[Decl, ...]
    comments: int = field(default=0, compare=False)

    def of(self, kind) -> list:
        return [d for d in self.decls if isinstance(d, kind)]


# --- parsing -------------------------------------------------------------


@dataclass(frozen=True)
class _Tok:
    text: str
    col: int


class _Line:
    def __init__(self, number: int, raw: str, tokens: list[_Tok]):
        self.number = number
        self.raw = raw
        self.toks = tokens
        self.i = 0

    def error(self, msg: str, tok: Optional[_Tok] = None) -> DSLError:
        if tok is None:
            col = len(self.raw.rstrip()) + 1
            return DSLError(msg, self.number, col)
        return DSLError(msg, self.number, tok.col, len(tok.text))

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        t = self.peek()
        if t is None:
            raise self.error(f"expected {what}")
        self.i += 1
        return t

    def keyword(self, word: str) -> _Tok:
        t = self.next(f"'{word}'")
        if t.text != word:
            raise self.error(f"expected '{word}', found {t.text!r}", t)
        return t

    def ident(self, what: str) -> _Tok:
        t = self.next(what)
        if not _ID.fullmatch(t.text):
            raise self.error(f"invalid {what} {t.text!r}", t)
        if t.text in KEYWORDS:
            raise self.error(f"keyword {t.text!r} cannot be used as {what}", t)
        return t

    def idents_until(self, stops: frozenset, what: str, min_count: int = 1) -> list[_Tok]:
        out = []
        while self.peek() is not None and self.peek().text not in stops:
            out.append(self.ident(what))
        if len(out) < min_count:
            raise self.error(f"expected at least {min_count} {what}", self.peek())
        return out

    def rest(self) -> list[_Tok]:
        out = self.toks[self.i :]
        self.i = len(self.toks)
        return out

    def end(self):
        t = self.peek()
        if t is not None:
            raise self.error(f"unexpected {t.text!r}", t)


def parse_real(text: str) -> float:
    if not _REAL.fullmatch(text):
        raise ValueError(f"malformed real {text!r}")
    x = float(text)
    if not math.isfinite(x):
        raise ValueError(f"real {text!r} is out of range")
    return x


def parse_complex(text: str) -> complex:
    m = _COMPLEX.fullmatch(text)
    if not m:
        raise ValueError(f"malformed complex literal {text!r}")
    if m.group("imo") is not None:
        re_, im = 0.0, float(m.group("imo"))
    else:
        re_ = float(m.group("re"))
        im = 0.0
        if m.group("im") is not None:
            im = float(m.group("im"))
            if m.group("sign") == "-":
                im = -im
    if not (math.isfinite(re_) and math.isfinite(im)):
        raise ValueError(f"complex literal {text!r} is out of range")
    return complex(re_, im)


class _Checker:
    """Identifier tables used for semantic checks while parsing."""

    def __init__(self):
        self.spaces: dict[str, StateSpace] = {}
        self.links: dict[str, StateSpace] = {}
        self.link_regions: dict[str, list[str]] = {}
        self.theories: dict[tuple[str, str], TheoryRegionDecl] = {}
        self.solutions: dict[tuple[str, str], list[str]] = {}
        self.used_theory: set[tuple[str, str]] = set()
        self.probes: dict[str, Union[ProbeDecl, AmplitudeDecl]] = {}
        self.region_links: dict[str, frozenset] = {}
        self.boundaries: dict[str, str] = {}
        self.boundary_links: set[str] = set()

    def space(self, ln: _Line, t: _Tok) -> StateSpace:
        if t.text not in self.spaces:
            raise ln.error(f"unknown space {t.text!r}", t)
        return self.spaces[t.text]

    def link(self, ln: _Line, t: _Tok) -> StateSpace:
        if t.text not in self.links:
            raise ln.error(f"unknown link {t.text!r}", t)
        return self.links[t.text]

    def distinct_links(self, ln: _Line, toks: list[_Tok]) -> list[StateSpace]:
        seen = set()
        out = []
        for t in toks:
            out.append(self.link(ln, t))
            if t.text in seen:
                raise ln.error(f"link {t.text!r} listed twice", t)
            seen.add(t.text)
        return out

    def attach(self, ln: _Line, t_id: _Tok, region: _Tok, links: list[_Tok]):
        """Register a probe of ``region``; alternatives must share the link set."""
        if t_id.text in self.probes:
            raise ln.error(f"probe {t_id.text!r} already defined", t_id)
        names = frozenset(t.text for t in links)
        known = self.region_links.get(region.text)
        if known is not None and known != names:
            raise ln.error(f"region {region.text!r} already has probes on links {sorted(known)}", region)
        if known is None:
            for t in links:
                rs = self.link_regions.setdefault(t.text, [])
                if len(rs) == 2:
                    raise ln.error(f"link {t.text!r} already joins regions {rs[0]!r} and {rs[1]!r}", t)
                rs.append(region.text)
            self.region_links[region.text] = names


def _numbers(ln: _Line, toks: list[_Tok], conv, what: str) -> tuple:
    out = []
    for t in toks:
        try:
            out.append(conv(t.text))
        except ValueError as e:
            raise ln.error(str(e), t) from None
    if not out:
        raise ln.error(f"expected at least one {what}")
    return tuple(out)


def _count(ln: _Line, got: int, want: int, anchor: _Tok, what: str):
    if got != want:
        raise ln.error(f"expected {want} {what}, got {got}", anchor)


def _label_ok(space: StateSpace, label: str) -> bool:
    parts = label.split(".")
    atoms = [a for a in space.atoms if isinstance(a, Classical)]
    if len(parts) != len(atoms):
        return False
    return all(p in a.labels for p, a in zip(parts, atoms))


def _parse_space(ln: _Line, ck: _Checker) -> SpaceDecl:
    t_id = ln.ident("space id")
    if t_id.text in ck.spaces:
        raise ln.error(f"space {t_id.text!r} already defined", t_id)
    kind = ln.next("space kind")
    pos = Pos(ln.number, ln.toks[0].col)
    if kind.text == "classical":
        labels = ln.rest()
        if not labels:
            raise ln.error("expected at least one label")
        seen = set()
        for t in labels:
            if not _ID.fullmatch(t.text):
                raise ln.error(f"invalid label {t.text!r}", t)
            if t.text in seen:
                raise ln.error(f"duplicate label {t.text!r}", t)
            seen.add(t.text)
        d = SpaceDecl(t_id.text, "classical", labels=tuple(t.text for t in labels), pos=pos)
        ck.spaces[d.id] = make_classical(d.labels)
    elif kind.text == "quantum":
        t = ln.next("dimension")
        if not _DIM.fullmatch(t.text):
            raise ln.error(f"dimension must be a positive integer, found {t.text!r}", t)
        ln.end()
        d = SpaceDecl(t_id.text, "quantum", dim=int(t.text), pos=pos)
        ck.spaces[d.id] = make_quantum(d.dim)
    elif kind.text == "tensor":
        a, b = ln.ident("space id"), ln.ident("space id")
        ln.end()
        d = SpaceDecl(t_id.text, "tensor", factors=(a.text, b.text), pos=pos)
        ck.spaces[d.id] = tensor(ck.space(ln, a), ck.space(ln, b))
    else:
        raise ln.error(f"unknown space kind {kind.text!r} (classical, quantum, tensor)", kind)
    return d


def _parse_link(ln: _Line, ck: _Checker) -> LinkDecl:
    t_id = ln.ident("link id")
    if t_id.text in ck.links:
        raise ln.error(f"link {t_id.text!r} already defined", t_id)
    ln.keyword(":")
    s = ln.ident("space id")
    ln.end()
    ck.links[t_id.text] = ck.space(ln, s)
    return LinkDecl(t_id.text, s.text, Pos(ln.number, ln.toks[0].col))


def _parse_theory(ln: _Line, ck: _Checker) -> Decl:
    tid = ln.ident("theory id")
    what = ln.next("'region' or 'solution'")
    pos = Pos(ln.number, ln.toks[0].col)
    if what.text == "region":
        rid = ln.ident("region id")
        key = (tid.text, rid.text)
        if key in ck.theories:
            raise ln.error(f"region {rid.text!r} of theory {tid.text!r} already defined", rid)
        ln.keyword("links")
        links = ln.idents_until(frozenset(), "link id")
        for t, s in zip(links, ck.distinct_links(ln, links)):
            if not s.is_classical:
                raise ln.error(f"link {t.text!r} is not classical", t)
        d = TheoryRegionDecl(tid.text, rid.text, tuple(t.text for t in links), pos)
        ck.theories[key] = d
        ck.solutions[key] = []
        return d
    if what.text == "solution":
        rid = ln.ident("region id")
        key = (tid.text, rid.text)
        if key not in ck.theories:
            raise ln.error(f"unknown region {rid.text!r} of theory {tid.text!r}", rid)
        if key in ck.used_theory:
            raise ln.error("solutions must be declared before probes that use the region", rid)
        sid = ln.ident("solution id")
        if sid.text in ck.solutions[key]:
            raise ln.error(f"solution {sid.text!r} already defined", sid)
        colon = ln.keyword(":")
        labels = ln.rest()
        region = ck.theories[key]
        _count(ln, len(labels), len(region.links), colon, "labels")
        for t, l in zip(labels, region.links):
            if not _label_ok(ck.links[l], t.text):
                raise ln.error(f"{t.text!r} is not a point of link {l!r}", t)
        ck.solutions[key].append(sid.text)
        return SolutionDecl(tid.text, rid.text, sid.text, tuple(t.text for t in labels), pos)
    raise ln.error(f"expected 'region' or 'solution', found {what.text!r}", what)


def _split_kraus(ln: _Line, start: int) -> list[tuple[str, int]]:
    """Tokenize the matrix list after ``kraus``: brackets, commas, semicolons, words."""
    out = []
    for m in re.finditer(r"[\[\],;]|[^\s\[\],;]+", ln.raw[start:]):
        out.append((m.group(), start + m.start() + 1))
    return out


def _parse_kraus(ln: _Line, kw: _Tok) -> tuple[tuple[tuple[complex, ...], ...], ...]:
    toks = _split_kraus(ln, kw.col - 1 + len(kw.text))
    ln.i = len(ln.toks)
    mats = []
    k = 0

    def err(msg, j):
        if j < len(toks):
            return DSLError(msg, ln.number, toks[j][1], len(toks[j][0]))
        return DSLError(msg, ln.number, len(ln.raw.rstrip()) + 1)

    while True:
        if k >= len(toks) or toks[k][0] != "[":
            raise err("expected '[' to start a matrix", k)
        k += 1
        rows, row = [], []
        while True:
            if k >= len(toks):
                raise err("unterminated matrix", k)
            tok, col = toks[k]
            if tok in ("]", ","):
                if not row:
                    raise err("empty matrix row", k)
                rows.append(tuple(row))
                row = []
                k += 1
                if tok == "]":
                    break
            elif tok in ("[", ";"):
                raise err(f"unexpected {tok!r} inside a matrix", k)
            else:
                try:
                    row.append(parse_complex(tok))
                except ValueError as e:
                    raise err(str(e), k) from None
                k += 1
        if any(len(r) != len(rows[0]) for r in rows):
            raise err("matrix rows have different lengths", k - 1)
        mats.append(tuple(rows))
        if k >= len(toks):
            break
        if toks[k][0] != ";":
            raise err(f"expected ';' between matrices, found {toks[k][0]!r}", k)
        k += 1
    return tuple(mats)


def _parse_probe(ln: _Line, ck: _Checker) -> ProbeDecl:
    t_id = ln.ident("probe id")
    ln.keyword("region")
    rid = ln.ident("region id")
    form = ln.next("'links', 'in' or 'observable'")
    pos = Pos(ln.number, ln.toks[0].col)
    if form.text == "links":
        links = ln.idents_until(frozenset({"data"}), "link id")
        spaces = ck.distinct_links(ln, links)
        kw = ln.keyword("data")
        data = _numbers(ln, ln.rest(), parse_real, "real")
        _count(ln, len(data), math.prod(s.basis_dim for s in spaces), kw, "coefficients")
        ck.attach(ln, t_id, rid, links)
        return ProbeDecl(t_id.text, rid.text, "links", links=tuple(t.text for t in links), data=data, pos=pos)
    if form.text == "in":
        ins = ln.idents_until(frozenset({"out"}), "link id")
        ln.keyword("out")
        outs = ln.idents_until(frozenset({"data", "kraus"}), "link id", min_count=0)
        spaces = ck.distinct_links(ln, ins + outs)
        kw = ln.next("'data' or 'kraus'")
        in_ids, out_ids = tuple(t.text for t in ins), tuple(t.text for t in outs)
        if kw.text == "data":
            data = _numbers(ln, ln.rest(), parse_real, "real")
            _count(ln, len(data), math.prod(s.basis_dim for s in spaces), kw, "coefficients")
            ck.attach(ln, t_id, rid, ins + outs)
            return ProbeDecl(t_id.text, rid.text, "inout", in_links=in_ids, out_links=out_ids, data=data, pos=pos)
        if kw.text != "kraus":
            raise ln.error(f"expected 'data' or 'kraus', found {kw.text!r}", kw)
        if not outs:
            raise ln.error("a Kraus probe needs at least one out link", kw)
        for t, s in zip(ins + outs, spaces):
            if not s.is_quantum:
                raise ln.error(f"Kraus probes need quantum links; {t.text!r} is {s}", t)
        mats = _parse_kraus(ln, kw)
        din = math.prod(s.hdim for s in spaces[: len(ins)])
        dout = math.prod(s.hdim for s in spaces[len(ins) :])
        for m in mats:
            if len(m) != dout or len(m[0]) != din:
                raise ln.error(f"Kraus matrices must be {dout}x{din}, got {len(m)}x{len(m[0])}", kw)
        ck.attach(ln, t_id, rid, ins + outs)
        return ProbeDecl(t_id.text, rid.text, "kraus", in_links=in_ids, out_links=out_ids, kraus=mats, pos=pos)
    if form.text == "observable":
        tid = ln.ident("theory id")
        key = (tid.text, rid.text)
        if key not in ck.theories:
            raise ln.error(f"theory {tid.text!r} has no region {rid.text!r}", tid)
        kw = ln.keyword("values")
        vals = _numbers(ln, ln.rest(), parse_real, "real")
        _count(ln, len(vals), len(ck.solutions[key]), kw, "values (one per solution)")
        region = ck.theories[key]
        toks = [_Tok(l, rid.col) for l in region.links]
        ck.attach(ln, t_id, rid, toks)
        ck.used_theory.add(key)
        return ProbeDecl(t_id.text, rid.text, "observable", links=region.links, data=vals, theory=tid.text, pos=pos)
    raise ln.error(f"expected 'links', 'in' or 'observable', found {form.text!r}", form)


def _parse_amplitude(ln: _Line, ck: _Checker) -> AmplitudeDecl:
    t_id = ln.ident("amplitude id")
    ln.keyword("region")
    rid = ln.ident("region id")
    ln.keyword("links")
    links = ln.idents_until(frozenset({"dual", "data"}), "link id")
    spaces = ck.distinct_links(ln, links)
    for t, s in zip(links, spaces):
        if not s.is_quantum:
            raise ln.error(f"amplitudes need quantum links; {t.text!r} is {s}", t)
    dual = []
    if ln.peek() is not None and ln.peek().text == "dual":
        ln.next("'dual'")
        dual = ln.idents_until(frozenset({"data"}), "link id")
        names = [t.text for t in links]
        seen = set()
        for t in dual:
            if t.text not in names:
                raise ln.error(f"dual link {t.text!r} is not one of the amplitude's links", t)
            if t.text in seen:
                raise ln.error(f"link {t.text!r} listed twice", t)
            seen.add(t.text)
    kw = ln.keyword("data")
    data = _numbers(ln, ln.rest(), parse_complex, "complex number")
    _count(ln, len(data), math.prod(s.hdim for s in spaces), kw, "amplitude coefficients")
    ck.attach(ln, t_id, rid, links)
    # dual links are kept in declared link order, which is canonical
    order = {t.text: k for k, t in enumerate(links)}
    dual_ids = tuple(sorted((t.text for t in dual), key=order.__getitem__))
    return AmplitudeDecl(t_id.text, rid.text, tuple(t.text for t in links), dual_ids, data,
                         Pos(ln.number, ln.toks[0].col))


def _parse_boundary(ln: _Line, ck: _Checker) -> BoundaryDecl:
    t_id = ln.ident("boundary id")
    if t_id.text in ck.boundaries:
        raise ln.error(f"boundary {t_id.text!r} already defined", t_id)
    ln.keyword("on")
    lt = ln.ident("link id")
    space = ck.link(ln, lt)
    if lt.text in ck.boundary_links:
        raise ln.error(f"link {lt.text!r} already has a boundary", lt)
    kw = ln.next("'data' or 'maxuncertainty'")
    if kw.text == "maxuncertainty":
        ln.end()
        data = None
    elif kw.text == "data":
        data = _numbers(ln, ln.rest(), parse_real, "real")
        _count(ln, len(data), space.basis_dim, kw, "coefficients")
    else:
        raise ln.error(f"expected 'data' or 'maxuncertainty', found {kw.text!r}", kw)
    ck.boundaries[t_id.text] = lt.text
    ck.boundary_links.add(lt.text)
    return BoundaryDecl(t_id.text, lt.text, data, Pos(ln.number, ln.toks[0].col))


def _parse_query(ln: _Line, ck: _Checker) -> QueryDecl:
    kind = ln.next("query kind")
    pos = Pos(ln.number, ln.toks[0].col)

    def probe_ref():
        t = ln.ident("probe id")
        if t.text not in ck.probes:
            raise ln.error(f"unknown probe {t.text!r}", t)
        return t

    if kind.text == "value":
        ln.end()
        return QueryDecl("value", pos=pos)
    if kind.text in ("prob", "expect"):
        p, q = probe_ref(), probe_ref()
        ln.end()
        return QueryDecl(kind.text, (p.text, q.text), pos=pos)
    if kind.text == "causality":
        p = probe_ref()
        ln.keyword("in")
        ins = ln.idents_until(frozenset({"out"}), "link id", min_count=0)
        ln.keyword("out")
        outs = ln.idents_until(frozenset(), "link id", min_count=0)
        ck.distinct_links(ln, ins + outs)
        have = set(ck.probes[p.text].all_links)
        for t in ins + outs:
            if t.text not in have:
                raise ln.error(f"probe {p.text!r} has no link {t.text!r}", t)
        if len(ins) + len(outs) != len(have):
            raise ln.error(f"in and out links must partition the links of {p.text!r}", p)
        return QueryDecl("causality", (p.text,), tuple(t.text for t in ins), tuple(t.text for t in outs), pos)
    raise ln.error(f"unknown query {kind.text!r} (value, prob, expect, causality)", kind)


_PARSERS = {
    "space": _parse_space,
    "link": _parse_link,
    "theory": _parse_theory,
    "probe": _parse_probe,
    "amplitude": _parse_amplitude,
    "boundary": _parse_boundary,
    "query": _parse_query,
}


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        head = data[: e.start]
        line = head.count(b"\n") + 1
        col = len(head[head.rfind(b"\n") + 1 :].decode("utf-8", "replace")) + 1
        raise DSLError("input is not valid UTF-8", line, col) from None


def parse(text: Union[str, bytes]) -> Document:
    """Parse a document.  Raises :class:`DSLError` on the first problem."""
    if isinstance(text, (bytes, bytearray)):
        text = _decode(bytes(text))
    ck = _Checker()
    decls: list[Decl] = []
    comments = 0
    for number, raw in enumerate(text.split("\n"), 1):
        raw = raw.rstrip("\r")
        if "#" in raw:
            comments += 1
            raw = raw[: raw.index("#")]
        toks = [_Tok(m.group(), m.start() + 1) for m in re.finditer(r"\S+", raw)]
        if not toks:
            continue
        ln = _Line(number, raw, toks)
        head = ln.next("declaration")
        fn = _PARSERS.get(head.text)
        if fn is None:
            raise ln.error(f"unknown declaration {head.text!r}", head)
        d = fn(ln, ck)
        if isinstance(d, (ProbeDecl, AmplitudeDecl)):
            ck.probes[d.id] = d
        decls.append(d)
    return Document(tuple(decls), comments)


# --- serialization -------------------------------------------------------


def format_real(x: float) -> str:
    return format(float(x), ".17g")


def format_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0.0 and math.copysign(1.0, z.imag) > 0:
        return format_real(z.real)
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"{format_real(z.real)}{sign}{format_real(abs(z.imag))}i"


def canonical(doc: Document) -> Document:
    """Declarations regrouped in dependency order (stable within a group)."""
    decls = sorted(doc.decls, key=lambda d: _RANK[type(d)])
    return Document(tuple(decls), doc.comments)


def _render(d: Decl) -> str:
    if isinstance(d, SpaceDecl):
        if d.kind == "classical":
            return f"space {d.id} classical {' '.join(d.labels)}"
        if d.kind == "quantum":
            return f"space {d.id} quantum {d.dim}"
        return f"space {d.id} tensor {d.factors[0]} {d.factors[1]}"
    if isinstance(d, LinkDecl):
        return f"link {d.id} : {d.space}"
    if isinstance(d, TheoryRegionDecl):
        return f"theory {d.theory} region {d.region} links {' '.join(d.links)}"
    if isinstance(d, SolutionDecl):
        return f"theory {d.theory} solution {d.region} {d.id} : {' '.join(d.labels)}"
    if isinstance(d, ProbeDecl):
        head = f"probe {d.id} region {d.region}"
        nums = " ".join(map(format_real, d.data))
        if d.form == "links":
            return f"{head} links {' '.join(d.links)} data {nums}"
        if d.form == "observable":
            return f"{head} observable {d.theory} values {nums}"
        io = f"in {' '.join(d.in_links)} out" + "".join(" " + l for l in d.out_links)
        if d.form == "inout":
            return f"{head} {io} data {nums}"
        mats = "; ".join(
            "[" + ", ".join(" ".join(map(format_complex, row)) for row in m) + "]" for m in d.kraus
        )
        return f"{head} {io} kraus {mats}"
    if isinstance(d, AmplitudeDecl):
        dual = f" dual {' '.join(d.dual)}" if d.dual else ""
        return (f"amplitude {d.id} region {d.region} links {' '.join(d.links)}{dual} "
                f"data {' '.join(map(format_complex, d.data))}")
    if isinstance(d, BoundaryDecl):
        if d.data is None:
            return f"boundary {d.id} on {d.link} maxuncertainty"
        return f"boundary {d.id} on {d.link} data {' '.join(map(format_real, d.data))}"
    if isinstance(d, QueryDecl):
        if d.kind == "value":
            return "query value"
        if d.kind == "causality":
            out = "".join(" " + l for l in d.out_links)
            inn = "".join(" " + l for l in d.in_links)
            return f"query causality {d.probes[0]} in{inn} out{out}"
        return f"query {d.kind} {d.probes[0]} {d.probes[1]}"
    raise TypeError(f"unknown declaration {d!r}")


def serialize(doc: Document) -> str:
    """Canonical text: dependency order, 17 significant digits, no comments."""
    return "".join(_render(d) + "\n" for d in canonical(doc).decls)


# --- building numerics ---------------------------------------------------


@dataclass
class Model:
    """Numerical objects built from a document.

    Each region's active probe is the first one declared for it; other
    probes of the region are alternatives used by queries.
    """

    spaces: dict[str, StateSpace]
    links: dict[str, StateSpace]
    probes: dict[str, Probe]
    defaults: dict[str, str]
    boundaries: dict[str, Element]
    queries: list[QueryDecl]

    def network(self, substitute: Mapping[str, Probe] | None = None) -> Network:
        active = {r: self.probes[pid] for r, pid in self.defaults.items()}
        for p in (substitute or {}).values():
            active[p.region] = p
        used = {l for p in active.values() for l in p.links}
        return Network(active, {l: b for l, b in self.boundaries.items() if l in used})

    def orientation(self, n: Network) -> Optional[dict[str, Optional[str]]]:
        """Link directions read off the port flags, or ``None`` if ambiguous.

        A non-dual port is where a link leaves its region; a link whose
        only port is dual enters from the boundary.
        """
        out: dict[str, Optional[str]] = {}
        for l, link in n.links.items():
            ends = [(r, n.probes[r].ports[k].dual) for r, k in link.endpoints]
            sources = [r for r, dual in ends if not dual]
            if link.is_open:
                out[l] = sources[0] if sources else None
            elif len(sources) == 1:
                out[l] = sources[0]
            else:
                return None
        return out


def _guard(size: int, what: str, pos: Pos):
    if size > MAX_ENTRIES:
        raise DSLError(f"{what} would need {size} entries (limit {MAX_ENTRIES})", pos.line, pos.col)


def build(doc: Document) -> Model:
    """Construct spaces, probes and boundary elements for a parsed document."""
    spaces: dict[str, StateSpace] = {}
    for d in doc.of(SpaceDecl):
        if d.kind == "classical":
            spaces[d.id] = make_classical(d.labels)
        elif d.kind == "quantum":
            spaces[d.id] = make_quantum(d.dim)
        else:
            spaces[d.id] = tensor(spaces[d.factors[0]], spaces[d.factors[1]])
    links = {d.id: spaces[d.space] for d in doc.of(LinkDecl)}
    regions = {(d.theory, d.region): d for d in doc.of(TheoryRegionDecl)}
    sols: dict[tuple[str, str], list[SolutionDecl]] = {k: [] for k in regions}
    for d in doc.of(SolutionDecl):
        sols[d.theory, d.region].append(d)
    probes: dict[str, Probe] = {}
    defaults: dict[str, str] = {}
    for d in doc.decls:
        if not isinstance(d, (ProbeDecl, AmplitudeDecl)):
            continue
        size = math.prod(links[l].basis_dim for l in d.all_links)
        _guard(size, f"probe {d.id!r}", d.pos)
        try:
            probes[d.id] = _build_probe(d, links, regions, sols)
        except PosformError as e:
            raise DSLError(str(e), d.pos.line, d.pos.col) from None
        defaults.setdefault(d.region, d.id)
    boundaries = {}
    for d in doc.of(BoundaryDecl):
        s = links[d.link]
        _guard(s.basis_dim, f"boundary {d.id!r}", d.pos)
        boundaries[d.link] = max_uncertainty(s) if d.data is None else Element(s, d.data)
    return Model(spaces, links, probes, defaults, boundaries, doc.of(QueryDecl))


def _build_probe(d, links, regions, sols) -> Probe:
    if isinstance(d, AmplitudeDecl):
        factors = [HilbertSpace(links[l].hdim, l, l in d.dual) for l in d.links]
        return msq(Amplitude(d.region, factors, np.array(d.data, dtype=complex)))
    if d.form == "links":
        return Probe(d.region, [Port(l, links[l]) for l in d.links], np.array(d.data))
    if d.form == "inout":
        ports = [Port(l, links[l], True) for l in d.in_links] + [Port(l, links[l]) for l in d.out_links]
        return Probe(d.region, ports, np.array(d.data))
    if d.form == "kraus":
        ins = [(l, links[l]) for l in d.in_links]
        outs = [(l, links[l]) for l in d.out_links]
        return from_kraus(ins, outs, [np.array(m, dtype=complex) for m in d.kraus], region=d.region)
    tr = regions[d.theory, d.region]
    hyper = {l: [".".join(pt) for pt in links[l].points] for l in tr.links}
    solutions = sols[d.theory, d.region]
    region = Region(
        d.region,
        tuple((l, l) for l in tr.links),
        tuple(s.id for s in solutions),
        {s.id: s.labels for s in solutions},
    )
    theory = ClassicalTheory(hyper, [region])
    p = observable_probe(theory, d.region, dict(zip(region.solutions, d.data)))
    # the theory's hypersurface spaces flatten composite links; restore them
    return Probe(d.region, [Port(l, links[l]) for l in tr.links], p.tensor)


# --- documents from networks ---------------------------------------------


def network_document(n: Network, queries: tuple[QueryDecl, ...] = (QueryDecl("value"),)) -> Document:
    """Describe a network (probes as data, boundaries as data) as a document."""
    decls: list[Decl] = []
    names: dict[object, str] = {}

    def space_id(s: StateSpace) -> str:
        key = s.atoms
        if key in names:
            return names[key]
        if len(s.atoms) == 0:
            raise ValueError("the unit space has no textual form")
        if len(s.atoms) == 1:
            a = s.atoms[0]
            sid = f"s{len(names) + 1}"
            if isinstance(a, Quantum):
                decls.append(SpaceDecl(sid, "quantum", dim=a.dim))
            else:
                decls.append(SpaceDecl(sid, "classical", labels=a.labels))
        else:
            left = space_id(StateSpace(s.atoms[:-1]))
            right = space_id(StateSpace(s.atoms[-1:]))
            sid = f"s{len(names) + 1}"
            decls.append(SpaceDecl(sid, "tensor", factors=(left, right)))
        names[key] = sid
        return sid

    for l, link in n.links.items():
        if not _ID.fullmatch(l) or l in KEYWORDS:
            raise ValueError(f"link id {l!r} has no textual form")
        decls.append(LinkDecl(l, space_id(link.space)))
    for r, p in n.probes.items():
        ins = [k for k, pt in enumerate(p.ports) if pt.dual]
        if not ins:
            decls.append(ProbeDecl(r, r, "links", links=p.links, data=tuple(p.tensor.reshape(-1).tolist())))
            continue
        outs = [k for k, pt in enumerate(p.ports) if not pt.dual]
        t = np.transpose(p.tensor, ins + outs)
        decls.append(ProbeDecl(
            r, r, "inout",
            in_links=tuple(p.links[k] for k in ins),
            out_links=tuple(p.links[k] for k in outs),
            data=tuple(t.reshape(-1).tolist()),
        ))
    for l, b in n.boundaries.items():
        decls.append(BoundaryDecl(f"b_{l}", l, tuple(b.coeffs.tolist())))
    decls.extend(queries)
    return Document(tuple(decls))
