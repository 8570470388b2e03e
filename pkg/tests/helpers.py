"""Random instance generators shared by the test modules."""

import numpy as np

from posform.probes import Port, Probe
from posform.spaces import Element, make_classical, make_quantum, tensor

LABELS = "abcdefghi"


def space_palette():
    """Link spaces with basis_dim <= 9: classical, quantum and hybrid."""
    return [
        make_classical(LABELS[:2]),
        make_classical(LABELS[:3]),
        make_classical(LABELS[:5]),
        make_quantum(2),
        make_quantum(3),
        tensor(make_classical("xy"), make_quantum(2)),
        tensor(make_quantum(2), make_classical("xy")),
    ]


def rand_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


def rand_density(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def rand_positive_element(rng, space):
    d = space.hdim
    blocks = []
    for _ in range(space.num_points):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        blocks.append(g @ g.conj().T)
    return Element.from_blocks(space, np.array(blocks))


def rand_element(rng, space):
    return Element(space, rng.normal(size=space.basis_dim))


def rand_kraus(rng, din, dout, n=None, trace_preserving=False):
    n = n or int(rng.integers(1, 4))
    ks = rng.normal(size=(n, dout, din)) + 1j * rng.normal(size=(n, dout, din))
    if trace_preserving:
        s = np.einsum("kab,kac->bc", ks.conj(), ks)
        w, v = np.linalg.eigh(s)
        ks = ks @ (v @ np.diag(w ** -0.5) @ v.conj().T)
    return ks


def rand_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def rand_network_spec(rng, max_probes=5, max_probe_size=729):
    """Random wiring: list of (region, [(link, space)]) and boundary links."""
    palette = space_palette()
    n = int(rng.integers(2, max_probes + 1))
    regions = [f"R{i}" for i in range(n)]
    ports = {r: [] for r in regions}
    count = 0
    def size(r):
        return int(np.prod([s.basis_dim for _, s in ports[r]] or [1]))
    # spanning tree plus a few extra edges
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(n, 2, replace=False))
        edges.append((int(a), int(b)))
    for a, b in edges:
        sp = palette[int(rng.integers(len(palette)))]
        ra, rb = regions[a], regions[b]
        if size(ra) * sp.basis_dim > max_probe_size or size(rb) * sp.basis_dim > max_probe_size:
            continue
        l = f"l{count}"
        count += 1
        ports[ra].append((l, sp))
        ports[rb].append((l, sp))
    boundary = []
    for r in regions:
        for _ in range(int(rng.integers(0, 3))):
            sp = palette[int(rng.integers(len(palette)))]
            if size(r) * sp.basis_dim > max_probe_size:
                continue
            l = f"l{count}"
            count += 1
            ports[r].append((l, sp))
            boundary.append((l, sp))
    return ports, boundary


def rand_network(rng, max_probes=5, max_probe_size=729):
    from posform.network import Network

    ports, boundary = rand_network_spec(rng, max_probes, max_probe_size)
    probes = []
    for r, ps in ports.items():
        perm = rng.permutation(len(ps))
        ps = [ps[i] for i in perm]
        shape = [s.basis_dim for _, s in ps]
        probes.append(Probe(r, [Port(l, s) for l, s in ps], rng.normal(size=shape)))
    bounds = {l: rand_element(rng, s) for l, s in boundary}
    return Network(probes, bounds)
