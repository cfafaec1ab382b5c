"""Mesh data types, normalization, 8-bit quantization and canonical ordering.

Two representations are used throughout:

* ``Mesh`` -- continuous coordinates, (x, y, z) per vertex, n-gon faces.
  This is the external interchange form (OBJ files).
* ``QuantizedMesh`` -- integer bins, stored as (z, y, x) triples so that
  plain tuple comparison gives the modeling sort order.  This is the
  substrate the sequence models operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BITS = 8


class MeshError(ValueError):
    """Invalid mesh data or a degenerate geometric operation."""


@dataclass
class Mesh:
    """An n-gon mesh with continuous vertex coordinates.

    vertices: (N, 3) float array of (x, y, z) positions.
    faces: list of index tuples, each of length >= 3, indices 0-based.
    class_id: optional integer class label.
    """

    vertices: np.ndarray
    faces: list[tuple[int, ...]]
    class_id: int | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = [tuple(int(i) for i in f) for f in self.faces]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def validate(self) -> None:
        n = self.num_vertices
        if n == 0:
            raise MeshError("mesh has no vertices")
        for f in self.faces:
            if len(f) < 3:
                raise MeshError(f"face {f} has fewer than 3 indices")
            if len(set(f)) != len(f):
                raise MeshError(f"face {f} has duplicate indices")
            for i in f:
                if not (0 <= i < n):
                    raise MeshError(f"face index {i} out of range [0, {n})")


@dataclass
class QuantizedMesh:
    """Canonicalized integer mesh.

    vertices: list of (z, y, x) integer triples, strictly increasing in
    lexicographic order, each component in [0, 2**bits - 1].
    faces: list of index tuples in canonical order: each face cyclically
    rotated so its minimum index is first, faces sorted lexicographically,
    no duplicate faces, every vertex referenced.
    """

    vertices: list[tuple[int, int, int]]
    faces: list[tuple[int, ...]]
    bits: int = DEFAULT_BITS
    class_id: int | None = None

    def __post_init__(self):
        self.vertices = [tuple(int(c) for c in v) for v in self.vertices]
        self.faces = [tuple(int(i) for i in f) for f in self.faces]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def validate(self) -> None:
        n = len(self.vertices)
        hi = (1 << self.bits) - 1
        if n == 0:
            raise MeshError("quantized mesh has no vertices")
        for v in self.vertices:
            if len(v) != 3 or any(not (0 <= c <= hi) for c in v):
                raise MeshError(f"vertex {v} outside [0, {hi}]^3")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if not a < b:
                raise MeshError(f"vertices not strictly increasing: {a} !< {b}")
        referenced: set[int] = set()
        for f in self.faces:
            if len(f) < 3 or len(set(f)) != len(f):
                raise MeshError(f"invalid face {f}")
            if f[0] != min(f):
                raise MeshError(f"face {f} not rotated to minimum index")
            for i in f:
                if not (0 <= i < n):
                    raise MeshError(f"face index {i} out of range")
            referenced.update(f)
        for a, b in zip(self.faces, self.faces[1:]):
            if not a < b:
                raise MeshError(f"faces not strictly increasing: {a} !< {b}")
        if referenced != set(range(n)):
            missing = sorted(set(range(n)) - referenced)
            raise MeshError(f"unreferenced vertices: {missing}")


def normalize(mesh: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale its diagonal to 1.

    All output coordinates lie in [-0.5, 0.5].
    """
    if mesh.num_vertices < 1:
        raise MeshError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0.0:
        raise MeshError("degenerate mesh: zero-diagonal bounding box")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) / diag
    return Mesh(verts, mesh.faces, class_id=mesh.class_id)


def _bin(coords: np.ndarray, bits: int) -> np.ndarray:
    n = 1 << bits
    b = np.floor((coords + 0.5) * n).astype(np.int64)
    return np.clip(b, 0, n - 1)


@dataclass
class QuantizeReport:
    """Counts of what quantization dropped or merged."""

    merged_vertices: int = 0
    dropped_faces: int = 0
    duplicate_faces: int = 0
    dropped_unreferenced: int = 0


def quantize(mesh: Mesh, bits: int = DEFAULT_BITS,
             report: QuantizeReport | None = None) -> QuantizedMesh:
    """Quantize a normalized mesh to an integer grid and canonicalize.

    Coordinates must lie in [-0.5, 0.5].  Vertices that land in the same
    bin are merged (first occurrence wins); faces that collapse below 3
    distinct indices are dropped; duplicate faces are dropped;
    unreferenced vertices are dropped.
    """
    mesh.validate()
    if np.abs(mesh.vertices).max() > 0.5 + 1e-9:
        raise MeshError("coordinates outside [-0.5, 0.5]: normalize first")
    if report is None:
        report = QuantizeReport()
    bins = _bin(mesh.vertices, bits)
    # store (z, y, x)
    zyx = bins[:, ::-1]

    seen: dict[tuple[int, int, int], int] = {}
    remap = np.empty(len(zyx), dtype=np.int64)
    for i, v in enumerate(map(tuple, zyx.tolist())):
        if v in seen:
            remap[i] = seen[v]
            report.merged_vertices += 1
        else:
            seen[v] = len(seen)
            remap[i] = seen[v]
    verts = list(seen.keys())

    faces = []
    for f in mesh.faces:
        g = [int(remap[i]) for i in f]
        # remove consecutive duplicates, including the cyclic wrap
        dedup = [g[0]]
        for i in g[1:]:
            if i != dedup[-1]:
                dedup.append(i)
        if len(dedup) > 1 and dedup[0] == dedup[-1]:
            dedup.pop()
        if len(set(dedup)) < 3 or len(dedup) != len(set(dedup)):
            report.dropped_faces += 1
            continue
        faces.append(tuple(dedup))

    if not faces:
        raise MeshError("degenerate after quantization: no faces survive")

    q = QuantizedMesh(verts, faces, bits=bits, class_id=mesh.class_id)
    return canonical_order(q, _report=report)


def canonical_order(qmesh: QuantizedMesh,
                    _report: QuantizeReport | None = None) -> QuantizedMesh:
    """Sort vertices by (z, y, x), remap and rotate faces, sort faces.

    Duplicate faces (after rotation) are collapsed to one; vertices left
    unreferenced are dropped.  Idempotent.
    """
    if _report is None:
        _report = QuantizeReport()
    if len(set(qmesh.vertices)) != len(qmesh.vertices):
        raise MeshError("duplicate vertices: merge before canonical ordering")
    order = sorted(range(len(qmesh.vertices)), key=lambda i: qmesh.vertices[i])
    remap = {old: new for new, old in enumerate(order)}
    verts = [qmesh.vertices[i] for i in order]

    faces = []
    for f in qmesh.faces:
        g = tuple(remap[i] for i in f)
        k = g.index(min(g))
        faces.append(g[k:] + g[:k])
    before = len(faces)
    faces = sorted(set(faces))
    _report.duplicate_faces += before - len(faces)

    referenced = sorted({i for f in faces for i in f})
    if len(referenced) != len(verts):
        _report.dropped_unreferenced += len(verts) - len(referenced)
        keep = {old: new for new, old in enumerate(referenced)}
        verts = [verts[i] for i in referenced]
        faces = sorted(tuple(keep[i] for i in f) for f in faces)
        # rotation is preserved: keep is monotone, so min stays first

    out = QuantizedMesh(verts, faces, bits=qmesh.bits, class_id=qmesh.class_id)
    out.validate()
    return out


def dequantize(qmesh: QuantizedMesh, bits: int | None = None) -> Mesh:
    """Map bins back to bin-center coordinates in [-0.5, 0.5]."""
    if bits is None:
        bits = qmesh.bits
    n = 1 << bits
    zyx = np.asarray(qmesh.vertices, dtype=np.float64)
    coords = (zyx + 0.5) / n - 0.5
    xyz = coords[:, ::-1]
    return Mesh(xyz, list(qmesh.faces), class_id=qmesh.class_id)
