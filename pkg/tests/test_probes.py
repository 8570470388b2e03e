import numpy as np
import pytest

from helpers import rand_density, rand_kraus, rand_positive_element
from posform.errors import SignatureError, SpaceMismatchError
from posform.probes import (
    Instrument,
    Port,
    Probe,
    boundary_to_probe,
    combine,
    from_kraus,
    is_primitive,
    luders_instrument,
    null_probe_slice,
    pair,
    probe_map,
    superoperator_tensor,
)
from posform.spaces import Element, is_positive, make_classical, make_quantum, max_uncertainty, tensor


def apply_kraus(ks, rho):
    return sum(k @ rho @ k.conj().T for k in ks)


def test_probe_validation():
    q = make_quantum(2)
    with pytest.raises(SignatureError):
        Probe("M", [Port("a", q), Port("a", q)], np.zeros((4, 4)))
    with pytest.raises(SpaceMismatchError):
        Probe("M", [Port("a", q)], np.zeros(5))
    p = Probe("M", [Port("a", q)], np.arange(4.0))
    assert not p.tensor.flags.writeable


def test_kraus_pairing_is_trace_of_channel_output():
    rng = np.random.default_rng(0)
    for din, dout in [(2, 2), (2, 3), (3, 2)]:
        ks = rand_kraus(rng, din, dout)
        p = from_kraus(make_quantum(din), make_quantum(dout), ks)
        rho = rand_density(rng, din)
        eff = rand_positive_element(rng, make_quantum(dout)).matrix()
        got = pair(p, [Element.from_matrix(make_quantum(din), rho), Element.from_matrix(make_quantum(dout), eff)])
        want = np.trace(eff @ apply_kraus(ks, rho)).real
        assert got == pytest.approx(want, rel=1e-12)


def test_kraus_element_is_choi_matrix():
    rng = np.random.default_rng(1)
    ks = rand_kraus(rng, 2, 2)
    p = from_kraus(make_quantum(2), make_quantum(2), ks)
    choi = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            eij = np.zeros((2, 2))
            eij[i, j] = 1
            choi += np.kron(eij, apply_kraus(ks, eij))
    assert np.allclose(p.element().matrix(), choi, atol=1e-12)
    assert is_primitive(p)


def test_transpose_map_not_primitive():
    q = make_quantum(2)
    t = superoperator_tensor(lambda x: x.T, (2,), (2,))
    p = Probe("T", [Port("in", q, True), Port("out", q)], t)
    assert not is_primitive(p)
    # yet it is positive: positive inputs go to positive outputs
    rng = np.random.default_rng(2)
    m = probe_map(p, ["in"], ["out"])
    for _ in range(20):
        assert is_positive(m(rand_positive_element(rng, q)))


def test_null_slice_is_identity():
    for s in [make_quantum(3), make_classical("abc"), tensor(make_classical("xy"), make_quantum(2))]:
        p = null_probe_slice(s)
        m = probe_map(p, ["a"], ["b"])
        assert np.allclose(m.matrix, np.eye(s.basis_dim))
        assert is_primitive(p)
        rng = np.random.default_rng(0)
        x, y = rand_positive_element(rng, s), rand_positive_element(rng, s)
        assert pair(p, [x, y]) == pytest.approx(float(x.coeffs @ y.coeffs))


def test_probe_map_matches_channel():
    rng = np.random.default_rng(3)
    ks = rand_kraus(rng, 3, 2, trace_preserving=True)
    p = from_kraus(make_quantum(3), make_quantum(2), ks)
    rho = rand_density(rng, 3)
    out = probe_map(p, ["in"], ["out"])(Element.from_matrix(make_quantum(3), rho))
    assert np.allclose(out.matrix(), apply_kraus(ks, rho), atol=1e-12)


def test_probe_map_needs_partition():
    p = null_probe_slice(make_quantum(2))
    with pytest.raises(SignatureError):
        probe_map(p, ["a"], ["a"])
    with pytest.raises(SignatureError):
        probe_map(p, ["a"], [])


def test_boundary_to_probe_pairs_with_inner_product():
    q = make_quantum(2)
    rng = np.random.default_rng(4)
    b = rand_positive_element(rng, q)
    x = rand_positive_element(rng, q)
    assert pair(boundary_to_probe(b), x) == pytest.approx(float(b.coeffs @ x.coeffs))


def test_combine_and_instrument():
    projectors = {0: np.diag([1.0, 0.0]), 1: np.diag([0.0, 1.0])}
    inst = luders_instrument(projectors)
    identity = from_kraus(make_quantum(2), make_quantum(2), [np.eye(2)])
    dephase = from_kraus(make_quantum(2), make_quantum(2), list(projectors.values()))
    assert np.allclose(inst.total.tensor, dephase.tensor, atol=1e-12)
    half = combine([0.5, 0.5], [identity, dephase])
    assert is_primitive(half)
    with pytest.raises(SignatureError):
        Instrument({})
    with pytest.raises(SpaceMismatchError):
        luders_instrument({0: np.diag([1.0, 0.0])})


def test_empty_kraus_family_warns():
    with pytest.warns(UserWarning):
        p = from_kraus(make_quantum(2), make_quantum(2), [])
    assert not p.tensor.any()


def test_relabel_keeps_tensor():
    p = null_probe_slice(make_quantum(2))
    r = p.relabel({"a": "x"})
    assert r.links == ("x", "b")
    assert np.array_equal(r.tensor, p.tensor)
    assert pair(p, [max_uncertainty(make_quantum(2))] * 2) == pytest.approx(2.0)
