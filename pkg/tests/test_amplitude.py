import numpy as np
import pytest

from helpers import rand_unitary
from posform.amplitude import (
    Amplitude,
    HilbertSpace,
    amp_glue_disjoint,
    amp_self_glue,
    boundary_measure_prob,
    boundary_measure_prob_msq,
    expectation_map,
    msq,
    slice_amplitude,
    transition_amplitude,
)
from posform.errors import SignatureError, SpaceMismatchError
from posform.network import glue_disjoint, self_glue
from posform.probes import from_kraus, is_primitive, null_probe_slice
from posform.spaces import make_quantum


def rand_amplitude(rng, dims, names, duals, region="M"):
    factors = [HilbertSpace(d, n, u) for d, n, u in zip(dims, names, duals)]
    t = rng.normal(size=dims) + 1j * rng.normal(size=dims)
    return Amplitude(region, factors, t)


def test_amplitude_evaluation():
    u = rand_unitary(np.random.default_rng(0), 3)
    r = transition_amplitude(u)
    psi, eta = np.eye(3)[0], np.eye(3)[2]
    assert r(psi, eta.conj()) == pytest.approx(eta.conj() @ u @ psi)


def test_msq_of_slice_is_null_probe():
    for d in (2, 3):
        p = msq(slice_amplitude(d))
        assert np.allclose(p.tensor, null_probe_slice(make_quantum(d)).tensor, atol=1e-13)


def test_msq_of_unitary_matches_kraus_probe():
    u = rand_unitary(np.random.default_rng(1), 2)
    p = msq(transition_amplitude(u))
    q = from_kraus([("in", make_quantum(2))], [("out", make_quantum(2))], [u])
    assert np.allclose(p.tensor, q.tensor, atol=1e-13)
    assert is_primitive(p)


def test_msq_commutes_with_disjoint_gluing():
    rng = np.random.default_rng(2)
    for _ in range(10):
        r1 = rand_amplitude(rng, (2, 3), ("a", "b"), (False, True), "A")
        r2 = rand_amplitude(rng, (2,), ("c",), (True,), "B")
        lhs = msq(amp_glue_disjoint(r1, r2))
        rhs = glue_disjoint(msq(r1), msq(r2))
        assert np.allclose(lhs.tensor, rhs.tensor, atol=1e-10)


def test_msq_commutes_with_self_gluing():
    rng = np.random.default_rng(3)
    for _ in range(10):
        r = rand_amplitude(rng, (2, 3, 2), ("a", "b", "c"), (False, False, True))
        lhs = msq(amp_self_glue(r, "a", "c"))
        rhs = self_glue(msq(r), "a", "c")
        assert np.allclose(lhs.tensor, rhs.tensor, atol=1e-10)


def test_self_glue_needs_opposite_orientation():
    rng = np.random.default_rng(4)
    r = rand_amplitude(rng, (2, 2), ("a", "b"), (False, False))
    with pytest.raises(SpaceMismatchError):
        amp_self_glue(r, "a", "b")
    with pytest.raises(SignatureError):
        amp_glue_disjoint(r, r)


def test_boundary_measurement_routes_agree():
    rng = np.random.default_rng(5)
    u = rand_unitary(rng, 3)
    r = transition_amplitude(u)
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi /= np.linalg.norm(psi)
    eta = rng.normal(size=3) + 1j * rng.normal(size=3)
    eta /= np.linalg.norm(eta)
    # knowledge: psi prepared; question: eta observed
    s = np.kron(np.outer(psi, psi.conj()), np.eye(3))
    a = np.kron(np.outer(psi, psi.conj()), np.outer(eta.conj(), eta))
    direct = boundary_measure_prob(r, s, a)
    via_msq = boundary_measure_prob_msq(r, s, a)
    assert abs(direct.value - via_msq.value) <= 1e-12
    assert direct.value == pytest.approx(abs(eta.conj() @ u @ psi) ** 2, abs=1e-12)


def test_expectation_map_on_slice():
    rng = np.random.default_rng(6)
    d = 3
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = h + h.conj().T
    r = slice_amplitude(d)
    obs = Amplitude("slice", r.factors, h.T)
    s = np.kron(np.outer(psi, psi.conj()), np.eye(d))
    out = expectation_map(r, obs, s)
    assert isinstance(out.value, float)
    assert out.value == pytest.approx((psi.conj() @ h @ psi).real, abs=1e-12)


def test_expectation_map_reports_complex_values():
    rng = np.random.default_rng(7)
    d = 2
    r = slice_amplitude(d)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    obs = Amplitude("slice", r.factors, m.T)
    psi = np.array([1.0, 1j]) / np.sqrt(2)
    out = expectation_map(r, obs, np.kron(np.outer(psi, psi.conj()), np.eye(d)))
    assert isinstance(out.value, complex)
    assert not out.is_real


def test_expectation_map_zero_denominator():
    r = slice_amplitude(2)
    out = expectation_map(r, r, np.zeros((4, 4)))
    assert not out.defined and out.reason == "denominator_zero"
