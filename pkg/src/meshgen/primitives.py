"""Parameterized triangle-mesh primitives for the synthetic corpus.

All generators return triangulated meshes with consistent winding (shared
edges traversed in opposite directions), which planar decimation relies on.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, MeshError


def _ear_clip(polygon: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW 2D polygon by ear clipping."""
    n = len(polygon)
    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []

    def cross(o, a, b):
        return ((polygon[a][0] - polygon[o][0]) * (polygon[b][1] - polygon[o][1])
                - (polygon[a][1] - polygon[o][1]) * (polygon[b][0] - polygon[o][0]))

    def inside(p, a, b, c):
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise MeshError("ear clipping failed: polygon may not be simple/CCW")
        found = False
        for k in range(len(idx)):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            if cross(a, b, c) <= 0:
                continue  # reflex corner
            if any(inside(p, a, b, c) for p in idx if p not in (a, b, c)):
                continue
            tris.append((a, b, c))
            idx.pop(k)
            found = True
            break
        if not found:
            raise MeshError("ear clipping failed: no ear found")
    tris.append(tuple(idx))
    return tris


def extrude(polygon_xy: np.ndarray, depth: float) -> Mesh:
    """Extrude a simple CCW polygon along +z into a triangulated solid."""
    polygon_xy = np.asarray(polygon_xy, dtype=np.float64)
    n = len(polygon_xy)
    bottom = np.column_stack([polygon_xy, np.zeros(n)])
    top = np.column_stack([polygon_xy, np.full(n, depth)])
    verts = np.vstack([bottom, top])
    cap = _ear_clip(polygon_xy)
    faces: list[tuple[int, ...]] = []
    # bottom cap faces downward: reverse winding
    faces.extend((a, c, b) for a, b, c in cap)
    faces.extend((n + a, n + b, n + c) for a, b, c in cap)
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, j, n + j))
        faces.append((i, n + j, n + i))
    return Mesh(verts, faces)


def _merge(meshes: list[Mesh]) -> Mesh:
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.extend(tuple(i + offset for i in f) for f in m.faces)
        offset += m.num_vertices
    return Mesh(np.vstack(verts), faces)


def _translate(mesh: Mesh, dx, dy, dz) -> Mesh:
    return Mesh(mesh.vertices + np.array([dx, dy, dz]), mesh.faces)


def box(rng: np.random.Generator) -> Mesh:
    w, d, h = rng.uniform(0.4, 1.6, size=3)
    rect = np.array([[0, 0], [w, 0], [w, d], [0, d]])
    return extrude(rect, h)


def pyramid(rng: np.random.Generator) -> Mesh:
    w, d = rng.uniform(0.5, 1.5, size=2)
    h = rng.uniform(0.5, 1.8)
    verts = np.array([
        [-w / 2, -d / 2, 0], [w / 2, -d / 2, 0],
        [w / 2, d / 2, 0], [-w / 2, d / 2, 0],
        [0, 0, h],
    ])
    faces = [(0, 2, 1), (0, 3, 2),  # base, facing down
             (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    return Mesh(verts, faces)


def prism(rng: np.random.Generator, sides: int | None = None) -> Mesh:
    if sides is None:
        sides = int(rng.integers(5, 9))
    r = rng.uniform(0.4, 0.9)
    h = rng.uniform(0.5, 1.8)
    ang = 2 * np.pi * np.arange(sides) / sides
    poly = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    return extrude(poly, h)


def l_extrusion(rng: np.random.Generator) -> Mesh:
    a = rng.uniform(0.8, 1.6)   # total width
    b = rng.uniform(0.8, 1.6)   # total height
    t = rng.uniform(0.2, 0.45) * b  # bottom-arm thickness
    s = rng.uniform(0.2, 0.45) * a  # vertical-arm thickness
    depth = rng.uniform(0.3, 1.0)
    poly = np.array([[0, 0], [a, 0], [a, t], [s, t], [s, b], [0, b]])
    return extrude(poly, depth)


def _slab_with_legs(rng: np.random.Generator, n_legs: int) -> Mesh:
    w, d = rng.uniform(0.9, 1.6, size=2)
    slab_t = rng.uniform(0.06, 0.14)
    leg_h = rng.uniform(0.5, 1.0)
    leg_t = rng.uniform(0.07, 0.15)
    slab = _translate(extrude(np.array([[0, 0], [w, 0], [w, d], [0, d]]), slab_t),
                      0, 0, leg_h)
    leg_rect = np.array([[0, 0], [leg_t, 0], [leg_t, leg_t], [0, leg_t]])
    inset = leg_t * 0.5
    if n_legs == 4:
        spots = [(inset, inset), (w - leg_t - inset, inset),
                 (w - leg_t - inset, d - leg_t - inset), (inset, d - leg_t - inset)]
    else:
        spots = [(inset, inset), (w - leg_t - inset, inset),
                 (w / 2 - leg_t / 2, d - leg_t - inset)]
    legs = [_translate(extrude(leg_rect, leg_h), sx, sy, 0) for sx, sy in spots]
    return _merge([slab] + legs)


def table(rng: np.random.Generator) -> Mesh:
    return _slab_with_legs(rng, 4)


def stool(rng: np.random.Generator) -> Mesh:
    return _slab_with_legs(rng, 3)


GENERATORS = {
    "box": box,
    "pyramid": pyramid,
    "prism": prism,
    "lgon": l_extrusion,
    "table": table,
    "stool": stool,
}

DEFAULT_CLASSES = list(GENERATORS)


def make_primitive(name: str, rng: np.random.Generator) -> Mesh:
    if name not in GENERATORS:
        raise KeyError(f"unknown primitive class {name!r}; "
                       f"available: {sorted(GENERATORS)}")
    return GENERATORS[name](rng)
