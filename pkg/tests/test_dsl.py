import math
import pathlib
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posform.dsl import (
    BoundaryDecl,
    Document,
    DSLError,
    LinkDecl,
    ProbeDecl,
    QueryDecl,
    SpaceDecl,
    build,
    canonical,
    format_complex,
    format_real,
    network_document,
    parse,
    parse_complex,
    serialize,
)
from posform.examples import teleportation_network
from posform.network import evaluate

DOCS = sorted((pathlib.Path(__file__).parent / "documents").glob("*.pf"))


def test_suite_is_present():
    assert len(DOCS) >= 8


@pytest.mark.parametrize("path", DOCS, ids=lambda p: p.stem)
def test_suite_round_trip(path):
    d = parse(path.read_bytes())
    text = serialize(d)
    again = parse(text)
    assert again == canonical(d)
    assert serialize(again) == text


def test_real_formatting():
    assert format_real(1 / 3) == "0.33333333333333331"
    assert format_real(0.1) == "0.10000000000000001"
    assert format_real(1.0) == "1"
    assert format_real(-0.0) == "-0"
    assert format_real(1e-300) == "1e-300"
    assert format_real(1e-5) == "1.0000000000000001e-05"


def test_complex_literals():
    assert parse_complex("1+2i") == 1 + 2j
    assert parse_complex("-1.5e-3-2i") == complex(-1.5e-3, -2)
    assert parse_complex("2i") == 2j
    assert parse_complex("-1i") == -1j
    for bad in ["1+2j", "1+i", "i", "1 + 2i", "nan", "inf", "1e999", "--1", "1+-2i"]:
        with pytest.raises(ValueError):
            parse_complex(bad)
    for z in [1 + 2j, -0.5 - 0.25j, complex(0.0, -0.0), 3.0, 1e-300j]:
        assert parse_complex(format_complex(z)) == z


def test_malformed_complex_has_position():
    text = "space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b kraus [1 0, 0 1+2j]\n"
    with pytest.raises(DSLError) as e:
        parse(text)
    assert (e.value.line, e.value.col) == (4, 43)
    assert e.value.length == 4


def test_comments_are_counted_and_dropped():
    d = parse("# head\nspace q quantum 2  # trailing\n\n")
    assert d.comments == 2
    assert serialize(d) == "space q quantum 2\n"


def test_canonical_order():
    text = (
        "space c classical x y\nlink a : c\nprobe P region M links a data 1 2\n"
        "boundary b on a data 1 1\nspace q quantum 2\nquery value\n"
    )
    lines = serialize(parse(text)).splitlines()
    assert [l.split()[0] for l in lines] == ["space", "space", "link", "probe", "boundary", "query"]


BAD = [
    ("space q quantum 0", 1, 17, "positive integer"),
    ("space q qubit 2", 1, 9, "unknown space kind"),
    ("link a : q", 1, 10, "unknown space"),
    ("space q quantum 2\nspace q quantum 3", 2, 7, "already defined"),
    ("space q quantum 2\nlink a q", 2, 8, "expected ':'"),
    ("space q quantum 2\nlink a : q\nprobe P region M links a data 1 2 3", 3, 26, "expected 4 coefficients"),
    ("space q quantum 2\nlink a : q\nprobe P region M links a a data 1", 3, 26, "listed twice"),
    ("space q quantum 2\nlink data : q", 2, 6, "keyword"),
    ("space c classical x\nlink a : c\nprobe P region M in a out a kraus [1]", 3, 27, "listed twice"),
    ("space c classical x\nlink a : c\nlink b : c\nprobe P region M in a out b kraus [1]", 4, 21, "quantum links"),
    ("space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b kraus [1 0]", 4, 29, "2x2"),
    ("space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b kraus [1 0, 0]", 4, 42, "different lengths"),
    ("space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b kraus [1 0, 0 1] [1 0, 0 1]", 4, 46, "expected ';'"),
    ("space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b kraus [1 0, 0 1", 4, 44, "unterminated"),
    ("space c classical x\nlink a : c\nboundary e on a maxuncertainty\nboundary f on a data 1", 4, 15, "already has a boundary"),
    ("space c classical x\nlink a : c\nboundary e on a data 1 2", 3, 17, "expected 1 coefficients"),
    ("query prob P Q", 1, 12, "unknown probe"),
    ("query maybe", 1, 7, "unknown query"),
    ("frobnicate", 1, 1, "unknown declaration"),
    ("space c classical x y\nlink a : c\nprobe P region M links a data 1 nan", 3, 33, "malformed real"),
    ("space c classical x y\nlink a : c\nprobe P region M links a data 1 1e400", 3, 33, "out of range"),
    (
        "space c classical x\nlink a : c\nprobe P region A links a data 1\nprobe Q region B links a data 1\n"
        "probe R region C links a data 1",
        5, 24, "already joins",
    ),
    ("space c classical x\nlink a : c\nlink b : c\nprobe P region A links a data 1\nprobe Q region A links b data 1", 5, 16, "already has probes"),
    (
        "space c classical x y\nlink a : c\nlink b : c\nprobe P region M links a b data 1 2 3 4\n"
        "query causality P in a out",
        5, 17, "partition",
    ),
    ("space c classical x y\nlink a : c\ntheory T region M links a\ntheory T solution M s : z", 4, 25, "not a point"),
    (
        "space c classical x y\nlink a : c\ntheory T region M links a\ntheory T solution M s : x\n"
        "probe F region M observable T values 1 2",
        5, 31, "expected 1 values",
    ),
    (
        "space c classical x y\nlink a : c\ntheory T region M links a\nprobe F region M observable T values\n",
        4, 37, "at least one",
    ),
    ("space c classical x y\nlink a : c\namplitude A region M links a data 1", 3, 28, "quantum links"),
    ("space q quantum 2\nlink a : q\namplitude A region M links a dual b data 1 0", 3, 35, "not one of"),
]


@pytest.mark.parametrize("text,line,col,fragment", BAD)
def test_diagnostics_carry_positions(text, line, col, fragment):
    with pytest.raises(DSLError) as e:
        parse(text)
    assert fragment in e.value.message
    assert (e.value.line, e.value.col) == (line, col)


def test_invalid_utf8_position():
    with pytest.raises(DSLError) as e:
        parse(b"space q quantum 2\nlink \xff : q\n")
    assert (e.value.line, e.value.col) == (2, 6)


def test_solutions_must_precede_probes():
    text = (
        "space c classical x y\nlink a : c\ntheory T region M links a\ntheory T solution M s : x\n"
        "probe F region M observable T values 1\ntheory T solution M t : y\n"
    )
    with pytest.raises(DSLError):
        parse(text)


def test_observable_probe_build():
    text = (
        "space c classical x y\nspace cc tensor c c\nlink a : cc\nlink b : c\n"
        "theory T region M links a b\n"
        "theory T solution M s1 : x.y x\ntheory T solution M s2 : x.y x\ntheory T solution M s3 : y.y y\n"
        "probe F region M observable T values 1 2 5\n"
    )
    p = build(parse(text)).probes["F"]
    assert p.tensor.shape == (4, 2)
    assert p.tensor[1, 0] == 3.0 and p.tensor[3, 1] == 5.0
    assert p.tensor.sum() == 8.0


def test_inout_probe_ports_are_dual():
    text = "space q quantum 2\nlink a : q\nlink b : q\nprobe P region M in a out b data " + " ".join(["0"] * 16)
    p = build(parse(text)).probes["P"]
    assert [pt.dual for pt in p.ports] == [True, False]


def test_network_document_round_trip():
    psi = np.array([0.6, 0.8j])
    pure = np.outer(psi, psi.conj())
    n = teleportation_network(2, pure, pure)
    doc = network_document(n)
    model = build(parse(serialize(doc)))
    assert evaluate(model.network()) == pytest.approx(evaluate(n), abs=1e-14)


# --- generated documents ---------------------------------------------------

finite = st.floats(allow_nan=False, allow_infinity=False)


@st.composite
def documents(draw):
    decls = []
    spaces = []
    for i in range(draw(st.integers(1, 3))):
        kind = draw(st.sampled_from(["classical", "quantum", "tensor"] if spaces else ["classical", "quantum"]))
        sid = f"s{i}"
        if kind == "classical":
            n = draw(st.integers(1, 3))
            decls.append(SpaceDecl(sid, "classical", labels=tuple(f"v{k}" for k in range(n))))
            spaces.append((sid, n, 1))
        elif kind == "quantum":
            d = draw(st.integers(1, 2))
            decls.append(SpaceDecl(sid, "quantum", dim=d))
            spaces.append((sid, d * d, d))
        else:
            a, b = draw(st.sampled_from(spaces)), draw(st.sampled_from(spaces))
            if a[1] * b[1] > 16:
                continue
            decls.append(SpaceDecl(sid, "tensor", factors=(a[0], b[0])))
            spaces.append((sid, a[1] * b[1], a[2] * b[2]))
    links = []
    for i in range(draw(st.integers(1, 3))):
        s = draw(st.sampled_from(spaces))
        decls.append(LinkDecl(f"l{i}", s[0]))
        links.append((f"l{i}", s[1], s[2]))
    # each link is used by exactly one probe so the region wiring stays valid
    free = list(links)
    k = 0
    while free:
        take = free[: draw(st.integers(1, len(free)))]
        free = free[len(take):]
        size = math.prod(x[1] for x in take)
        if size > 64:
            continue
        data = tuple(draw(st.lists(finite, min_size=size, max_size=size)))
        if draw(st.booleans()):
            decls.append(ProbeDecl(f"p{k}", f"R{k}", "links", links=tuple(x[0] for x in take), data=data))
        else:
            cut = draw(st.integers(1, len(take)))
            decls.append(ProbeDecl(
                f"p{k}", f"R{k}", "inout",
                in_links=tuple(x[0] for x in take[:cut]), out_links=tuple(x[0] for x in take[cut:]), data=data,
            ))
        k += 1
    for name, dim, _ in links:
        if draw(st.booleans()):
            data = None if draw(st.booleans()) else tuple(draw(st.lists(finite, min_size=dim, max_size=dim)))
            decls.append(BoundaryDecl(f"b_{name}", name, data))
    decls.append(QueryDecl("value"))
    return Document(tuple(decls))


@settings(max_examples=200, deadline=None)
@given(documents())
def test_generated_round_trip(doc):
    text = serialize(doc)
    again = parse(text)
    assert again == canonical(doc)
    assert serialize(again) == text


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(data):
    try:
        parse(data)
    except DSLError as e:
        assert e.line >= 1 and e.col >= 1


def test_mutation_fuzz_short():
    rng = random.Random(0)
    seeds = [p.read_bytes()[:1500] for p in DOCS]
    alphabet = b" \n#[],;:+-.eij0123456789abcdefklmnopqrstuvxyz\xff"
    for _ in range(3000):
        b = bytearray(rng.choice(seeds))
        for _ in range(rng.randint(1, 6)):
            i = rng.randrange(len(b) + 1)
            if rng.random() < 0.5 and b:
                b[min(i, len(b) - 1)] = rng.choice(alphabet)
            else:
                b[i:i] = bytes([rng.choice(alphabet)])
        try:
            parse(bytes(b))
        except DSLError:
            pass
