"""Worked scenarios: three coupled laboratories, teleportation, process matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .network import Network, contract_network, evaluate, evaluate_sliced, glue_disjoint
from .operational import Outcome, quotient, undefined
from .probes import (
    Instrument,
    Port,
    Probe,
    ProbeMap,
    combine,
    from_kraus,
    probe_map,
    product_basis_matrices,
)
from .spaces import Element, StateSpace, make_classical, make_quantum, max_uncertainty, split_product, tensor

# --- teleportation -------------------------------------------------------


def bell_vectors(n: int) -> dict[tuple[int, int], np.ndarray]:
    """Maximally entangled basis ``psi_nm`` of ``C^n ⊗ C^n``."""
    w = np.exp(2j * np.pi / n)
    out = {}
    for a in range(n):
        for m in range(n):
            v = np.zeros((n, n), dtype=complex)
            for j in range(n):
                v[j, (j + m) % n] = w ** (j * a)
            out[a, m] = v.reshape(-1) / np.sqrt(n)
    return out


def correction_unitaries(n: int) -> dict[tuple[int, int], np.ndarray]:
    """``U_nm = sum_j w^(jn) |j><j+m|``."""
    w = np.exp(2j * np.pi / n)
    out = {}
    for a in range(n):
        for m in range(n):
            u = np.zeros((n, n), dtype=complex)
            for j in range(n):
                u[j, (j + m) % n] = w ** (j * a)
            out[a, m] = u
    return out


def outcome_label(a: int, m: int) -> str:
    return f"x{a}_{m}"


@dataclass(frozen=True)
class TeleportationSetup:
    n: int
    measurement: Probe  # links 1, 2 -> c
    source: Probe  # entangled pair on links 2, 3
    correction: Probe  # links c, 3 -> 4

    @property
    def probes(self) -> list[Probe]:
        return [self.measurement, self.source, self.correction]


def teleportation_setup(n: int) -> TeleportationSetup:
    if n < 1:
        raise ValueError("dimension must be positive")
    q = make_quantum(n)
    labels = [(a, m) for a in range(n) for m in range(n)]
    c = make_classical([outcome_label(a, m) for a, m in labels])
    psi = bell_vectors(n)
    units = correction_unitaries(n)
    # measurement: pair(A, sigma ⊗ chi_x) = tr(P_x sigma)
    basis12 = product_basis_matrices((n, n))
    proj = np.array([np.outer(psi[x], psi[x].conj()) for x in labels])
    ta = np.einsum("xab,kba->kx", proj, basis12).real.reshape(n * n, n * n, n * n)
    meas = Probe("A", [Port("1", q, True), Port("2", q, True), Port("c", c)], ta)
    p00 = Element.from_matrix(tensor(q, q), np.outer(psi[0, 0], psi[0, 0].conj()))
    src = Probe("E", [Port("2", q), Port("3", q)], split_product(p00, [q, q]))
    # correction: pair(B, chi_x ⊗ sigma ⊗ tau) = tr(tau U_x sigma U_x^dagger)
    basis = product_basis_matrices((n,))
    tb = np.empty((n * n, n * n, n * n))
    for i, x in enumerate(labels):
        u = units[x]
        img = np.einsum("ab,kbc,dc->kad", u, basis, u.conj())
        tb[i] = np.einsum("jab,kba->kj", basis, img).real
    corr = Probe("B", [Port("c", c, True), Port("3", q, True), Port("4", q)], tb)
    return TeleportationSetup(n, meas, src, corr)


def teleport_channel(n: int) -> ProbeMap:
    """Composite map from the input link 1 to the output link 4."""
    s = teleportation_setup(n)
    t, links = contract_network(Network(s.probes))
    q = make_quantum(n)
    ports = {"1": Port("1", q, True), "4": Port("4", q)}
    composite = Probe("teleport", [ports[l] for l in links], t)
    return probe_map(composite, ["1"], ["4"])


def teleportation_network(n: int, state, effect) -> Network:
    """Closed network: ``state`` enters on link 1, ``effect`` is tested on link 4."""
    q = make_quantum(n)
    s = teleportation_setup(n)
    return Network(s.probes, {"1": Element.from_matrix(q, state), "4": Element.from_matrix(q, effect)})


# --- process matrices ----------------------------------------------------


@dataclass(frozen=True)
class ProcessSetting:
    """Exterior probe ``W`` around two labs with instruments.

    Links: ``ai``/``ao`` into and out of Alice's lab, ``bi``/``bo`` for Bob.
    """

    w: Probe
    alice: Instrument
    bob: Instrument

    def network(self, pa: Probe, pb: Probe) -> Network:
        return Network([self.w, pa, pb])


def _state_probe(region: str, link: str, rho) -> Probe:
    rho = np.asarray(rho, dtype=complex)
    q = make_quantum(rho.shape[0])
    return Probe(region, [Port(link, q)], Element.from_matrix(q, rho).coeffs)


def _trace_probe(region: str, link: str, d: int) -> Probe:
    q = make_quantum(d)
    return Probe(region, [Port(link, q, True)], max_uncertainty(q).coeffs)


def _reorder(p: Probe, links: Sequence[str]) -> Probe:
    axes = [p.axis(l) for l in links]
    return Probe(p.region, [p.ports[k] for k in axes], np.transpose(p.tensor, axes))


def causal_chain_w(rho, kraus, d_bob_out: int) -> Probe:
    """``W`` preparing ``rho`` for Alice and sending her output to Bob."""
    rho = np.asarray(rho, dtype=complex)
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    da_out, db_in = kraus[0].shape[1], kraus[0].shape[0]
    ch = from_kraus([("ao", make_quantum(da_out))], [("bi", make_quantum(db_in))], kraus, region="W2")
    w = glue_disjoint(_state_probe("W1", "ai", rho), ch)
    w = glue_disjoint(w, _trace_probe("W3", "bo", d_bob_out), region="W")
    return _reorder(w, ["ai", "ao", "bi", "bo"])


def spacelike_w(rho_a, rho_b, d_alice_out: int, d_bob_out: int) -> Probe:
    """``W`` with independent preparations and discarded outputs."""
    parts = [
        _state_probe("W1", "ai", rho_a),
        _trace_probe("W2", "ao", d_alice_out),
        _state_probe("W3", "bi", rho_b),
        _trace_probe("W4", "bo", d_bob_out),
    ]
    w = parts[0]
    for k, p in enumerate(parts[1:]):
        w = glue_disjoint(w, p, region="W" if k == 2 else f"w{k}")
    return w


def kraus_instrument(families: Mapping, links: tuple[str, str], dims: tuple[int, int], region: str) -> Instrument:
    a, b = links
    qa, qb = make_quantum(dims[0]), make_quantum(dims[1])
    return Instrument({k: from_kraus([(a, qa)], [(b, qb)], ks, region=region) for k, ks in families.items()})


def process_probability(setting: ProcessSetting, i, j) -> Outcome:
    """Joint probability of Alice's outcome ``i`` and Bob's outcome ``j``."""
    num = evaluate(setting.network(setting.alice[i], setting.bob[j]))
    den = evaluate(setting.network(setting.alice.total, setting.bob.total))
    scale = float(np.linalg.norm(setting.w.tensor) * np.linalg.norm(setting.alice.total.tensor)
                  * np.linalg.norm(setting.bob.total.tensor))
    return quotient(num, den, scale)


def default_process_setting(d: int = 2) -> ProcessSetting:
    """Alice measures and reprepares in the computational basis and a
    depolarizing channel carries her output to Bob, who measures in the
    same basis.  Outcomes agree with probability ``1 - p + p/d``."""
    rho = np.full((d, d), 0.5 / d) + np.eye(d) * (0.5 / d)
    p = 0.2
    dep = [np.sqrt(1 - p) * np.eye(d)] + [
        np.sqrt(p / d) * np.outer(np.eye(d)[i], np.eye(d)[j]) for i in range(d) for j in range(d)
    ]
    w = causal_chain_w(rho, dep, d)
    alice = kraus_instrument(
        {k: [np.outer(np.eye(d)[k], np.eye(d)[k])] for k in range(d)}, ("ai", "ao"), (d, d), "A"
    )
    bob = kraus_instrument(
        {k: [np.outer(np.eye(d)[k], np.eye(d)[k])] for k in range(d)}, ("bi", "bo"), (d, d), "B"
    )
    return ProcessSetting(w, alice, bob)


# --- three laboratories --------------------------------------------------

THREELAB_ORIENTATION: dict[str, Optional[str]] = {
    "b1": None,
    "s12": "M1",
    "s13": "M1",
    "b2": None,
    "s23": "M2",
    "b3": "M3",
}


@dataclass
class ThreeLabReport:
    items: dict[str, Outcome]
    mu: float
    independence_gap: Optional[float]
    item7_matches_item6: Optional[bool]
    values: dict[str, float] = field(default_factory=dict)


def threelab_example(
    probes: Mapping[str, Probe],
    b: Mapping[str, Element],
    mu: float = 0.5,
    tol: float = 1e-9,
) -> ThreeLabReport:
    """The seven quantities of the light / switch / pointer setup.

    ``probes`` has keys ``P*``, ``Pg`` (optionally ``Pr``, default
    ``P* - Pg``) on region ``M1``; ``QA``, ``QB`` on ``M2``; ``R*`` and
    ``R`` on ``M3``.  ``b`` maps the external links to boundary elements.
    """
    pr = probes.get("Pr") or combine([1.0, -1.0], [probes["P*"], probes["Pg"]])
    light = {"*": probes["P*"], "g": probes["Pg"], "r": pr}
    switch = {"A": probes["QA"], "B": probes["QB"]}
    pointer = {"*": probes["R*"], "R": probes["R"]}
    cache: dict[tuple[str, str, str], float] = {}

    def V(p, q, r):
        key = (p, q, r)
        if key not in cache:
            cache[key] = evaluate(Network([light[p], switch[q], pointer[r]], b))
        return cache[key]

    bnorm = float(np.prod([np.linalg.norm(x.coeffs) for x in b.values()]))
    scale = bnorm * max(
        float(np.linalg.norm(x.tensor) * np.linalg.norm(y.tensor) * np.linalg.norm(z.tensor))
        for x in light.values() for y in switch.values() for z in pointer.values()
    )

    def frac(num, den):
        if abs(den) <= 1e-12 * scale:
            return None
        return num / den

    items: dict[str, Outcome] = {}

    def put(key, kind, v):
        if v is None:
            items[key] = undefined()
        else:
            if kind == "probability" and -tol <= v <= 1 + tol:
                v = min(max(v, 0.0), 1.0)
            items[key] = Outcome(kind, float(v))

    gA = frac(V("g", "A", "*"), V("*", "A", "*"))
    gB = frac(V("g", "B", "*"), V("*", "B", "*"))
    rB = frac(V("r", "B", "*"), V("*", "B", "*"))
    RgA = frac(V("g", "A", "R"), V("*", "A", "*"))
    RrB = frac(V("r", "B", "R"), V("*", "B", "*"))
    put("1", "probability", gA)
    put("2", "expectation", frac(V("*", "A", "R"), V("*", "A", "*")))
    put("3", "expectation", frac(V("g", "A", "R"), V("g", "A", "*")))
    put("4", "probability", None if gA is None or gB is None else mu * gA + (1 - mu) * gB)
    p5 = None if gA is None or rB is None else mu * gA + (1 - mu) * rB
    put("5", "probability", p5)
    v6 = None
    if p5 is not None and RgA is not None and RrB is not None:
        v6 = frac(mu * RgA + (1 - mu) * RrB, p5)
    put("6", "expectation", v6)
    v7 = None if RgA is None or RrB is None else RgA + RrB
    put("7", "expectation", v7)
    gap = None if gA is None or gB is None else abs(gA - gB)
    match = None
    if gap is not None and gap <= tol and p5 is not None and v7 is not None:
        half = 0.5 * gA + 0.5 * rB
        v6h = frac(0.5 * RgA + 0.5 * RrB, half)
        match = v6h is not None and abs(v6h - v7) <= tol * max(1.0, abs(v7))
    return ThreeLabReport(items, mu, gap, match, {"/".join(k): v for k, v in cache.items()})


def threelab_links(d: int = 2) -> dict[str, StateSpace]:
    q = make_quantum(d)
    return {l: q for l in ("b1", "b2", "b3", "s12", "s13", "s23")}


def _tp_kraus(rng, din, dout, n):
    ks = rng.normal(size=(n, dout, din)) + 1j * rng.normal(size=(n, dout, din))
    s = np.einsum("kab,kac->bc", ks.conj(), ks)
    w, v = np.linalg.eigh(s)
    return ks @ (v @ np.diag(w ** -0.5) @ v.conj().T)


def _density(rng, d):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = g @ g.conj().T
    return r / np.trace(r).real


def threelab_quantum_instance(seed: int = 0, d: int = 2, pointer_values=(-1.0, 0.5, 2.0)):
    """Quantum probes for the three labs in which the light is read before
    the switch acts and nothing is post-selected, so the light statistics
    cannot depend on the switch."""
    rng = np.random.default_rng(seed)
    q = make_quantum(d)
    light = _tp_kraus(rng, d, d * d, 4)
    P = {
        "P*": from_kraus([("b1", q)], [("s12", q), ("s13", q)], light, region="M1"),
        "Pg": from_kraus([("b1", q)], [("s12", q), ("s13", q)], light[:2], region="M1"),
    }
    P["Pr"] = from_kraus([("b1", q)], [("s12", q), ("s13", q)], light[2:], region="M1")
    Q = {
        k: from_kraus([("s12", q), ("b2", q)], [("s23", q)], _tp_kraus(rng, d * d, d, 3), region="M2")
        for k in ("QA", "QB")
    }
    ks = _tp_kraus(rng, d * d, d, len(pointer_values))
    cells = [from_kraus([("s13", q), ("s23", q)], [("b3", q)], [k], region="M3") for k in ks]
    R = {
        "R*": combine([1.0] * len(cells), cells),
        "R": combine(list(pointer_values), cells),
    }
    b = {
        "b1": Element.from_matrix(q, _density(rng, d)),
        "b2": Element.from_matrix(q, _density(rng, d)),
        "b3": max_uncertainty(q),
    }
    return {**P, **Q, **R}, b


def threelab_sliced_value(probes: Mapping[str, Probe], b: Mapping[str, Element], p="P*", q="QA", r="R*") -> float:
    """Value of one probe combination pushed through in causal order."""
    return evaluate_sliced(Network([probes[p], probes[q], probes[r]], b), THREELAB_ORIENTATION)
