import numpy as np
import pytest

from meshgen.mesh import Mesh, QuantizedMesh, canonical_order, normalize, quantize
from meshgen.primitives import make_primitive


def random_quantized(rng: np.random.Generator, bits: int = 8,
                     n_lo: int = 4, n_hi: int = 30) -> QuantizedMesh:
    """A random valid canonical quantized mesh (faces are arbitrary index
    cycles, not necessarily planar or manifold — the sequence layer does
    not care)."""
    hi = 1 << bits
    while True:
        n = int(rng.integers(n_lo, n_hi + 1))
        pool = rng.integers(0, hi, size=(4 * n, 3))
        uniq = sorted({tuple(int(c) for c in row) for row in pool})
        if len(uniq) < max(n, 3):
            continue
        verts = uniq[:n] if len(uniq) >= n else uniq
        n = len(verts)
        faces = set()
        for _ in range(int(rng.integers(1, 12))):
            size = int(rng.integers(3, min(6, n) + 1))
            f = rng.choice(n, size=size, replace=False)
            k = int(np.argmin(f))
            faces.add(tuple(int(i) for i in np.roll(f, -k)))
        q = canonical_order(QuantizedMesh(verts, sorted(faces), bits=bits))
        if q.num_vertices >= 3:
            return q


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def primitive_dataset(bits: int = 8, count: int = 12, seed: int = 0):
    names = ("box", "pyramid", "prism", "lgon", "table", "stool")
    out = []
    for i in range(count):
        g = np.random.default_rng(seed * 1000 + i)
        m = make_primitive(names[i % len(names)], g)
        out.append(quantize(normalize(m), bits))
    return out
