"""Mesh augmentations: per-axis scaling, piecewise-linear warping, and
planar decimation (greedy merging of near-coplanar adjacent faces)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, normalize


@dataclass
class AugmentConfig:
    scale_lo: float = 0.75
    scale_hi: float = 1.25
    warp_segments: int = 5
    warp_log_variance: float = 0.5
    decimate_tol_lo: float = 1.0
    decimate_tol_hi: float = 20.0
    copies_per_mesh: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.scale_lo > self.scale_hi:
            raise ValueError("scale_lo must be <= scale_hi")
        if self.warp_segments < 1:
            raise ValueError("warp_segments must be >= 1")
        for t in (self.decimate_tol_lo, self.decimate_tol_hi):
            if not (0.0 < t < 90.0):
                raise ValueError("decimation tolerance must be in (0, 90) degrees")


def axis_scale(mesh: Mesh, rng: np.random.Generator,
               lo: float = 0.75, hi: float = 1.25) -> Mesh:
    """Multiply each axis by an independent uniform factor, then re-normalize."""
    factors = rng.uniform(lo, hi, size=3)
    return normalize(Mesh(mesh.vertices * factors, mesh.faces,
                          class_id=mesh.class_id))


def _warp_breakpoints(gradients: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear w: [0,1] -> [0,1] over even sub-intervals with the
    given positive gradients, rescaled so w(0)=0 and w(1)=1."""
    k = len(gradients)
    xs = np.linspace(0.0, 1.0, k + 1)
    ys = np.concatenate([[0.0], np.cumsum(gradients) / k])
    ys = ys / ys[-1]
    return xs, ys


def warp_function(rng: np.random.Generator, segments: int,
                  log_variance: float, symmetric: bool) -> tuple[np.ndarray, np.ndarray]:
    """Sample warp breakpoints.  Gradients are log-normal (variance of the
    underlying normal = log_variance).  For symmetric warps, gradients for
    three sub-intervals on [0, 0.5] are drawn and reflected about 0.5, which
    makes the centered warp odd: warp(-c) = -warp(c)."""
    sigma = np.sqrt(log_variance)
    if symmetric:
        half = np.exp(rng.normal(0.0, sigma, size=3))
        grads = np.concatenate([half, half[::-1]])
    else:
        grads = np.exp(rng.normal(0.0, sigma, size=segments))
    return _warp_breakpoints(grads)


def piecewise_warp(mesh: Mesh, rng: np.random.Generator,
                   segments: int = 5, log_variance: float = 0.5) -> Mesh:
    """Warp each axis with an independent piecewise-linear map on [0, 1].

    x and y use a symmetric (odd about the center) warp; z uses the plain
    unreflected warp.  Coordinates must already be in [-0.5, 0.5]; output
    is re-normalized.
    """
    verts = mesh.vertices.copy()
    # vertices are stored (x, y, z)
    for axis, symmetric in ((0, True), (1, True), (2, False)):
        xs, ys = warp_function(rng, segments, log_variance, symmetric)
        c = np.clip(verts[:, axis] + 0.5, 0.0, 1.0)
        verts[:, axis] = np.interp(c, xs, ys) - 0.5
    return normalize(Mesh(verts, mesh.faces, class_id=mesh.class_id))


# ---------------------------------------------------------------------------
# planar decimation


def _newell_normal(vertices: np.ndarray, face: tuple[int, ...]) -> np.ndarray:
    pts = vertices[list(face)]
    nxt = np.roll(pts, -1, axis=0)
    n = np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])
    norm = np.linalg.norm(n)
    if norm == 0:
        return np.zeros(3)
    return n / norm


def _has_directed_edge(face: tuple[int, ...], a: int, b: int) -> bool:
    if a not in face:
        return False
    k = face.index(a)
    return face[(k + 1) % len(face)] == b


def _merge_cycles(f1: tuple[int, ...], f2: tuple[int, ...],
                  a: int, b: int) -> tuple[int, ...] | None:
    """Splice two boundary cycles sharing the directed edge a->b in f1
    (and b->a in f2).  Returns None if the result is not a simple cycle."""
    i = f1.index(b)
    r1 = f1[i:] + f1[:i]  # starts at b, ends at a
    j = f2.index(a)
    r2 = f2[j:] + f2[:j]  # starts at a, ends at b
    merged = r1 + r2[1:-1]
    if len(set(merged)) != len(merged):
        return None
    return merged


def planar_decimate(mesh: Mesh, tol_degrees: float,
                    warnings: list[str] | None = None) -> Mesh:
    """Greedily merge edge-adjacent faces whose normals differ by less than
    the tolerance, repeated to a fixed point.  Requires consistent face
    orientations; edges shared by more than two faces are skipped."""
    mesh.validate()
    cos_tol = np.cos(np.radians(tol_degrees))
    faces: dict[int, tuple[int, ...]] = dict(enumerate(mesh.faces))
    normals = {i: _newell_normal(mesh.vertices, f) for i, f in faces.items()}

    changed = True
    while changed:
        changed = False
        edge_map: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
        for fi, f in faces.items():
            for k in range(len(f)):
                a, b = f[k], f[(k + 1) % len(f)]
                edge_map.setdefault((min(a, b), max(a, b)), []).append((fi, a, b))
        for edge in sorted(edge_map):
            users = edge_map[edge]
            if len(users) != 2:
                if len(users) > 2 and warnings is not None:
                    warnings.append(f"non-manifold edge {edge} in {len(users)} faces")
                continue
            (f1, a1, b1), (f2, a2, b2) = users
            if f1 == f2 or f1 not in faces or f2 not in faces:
                continue
            if (a1, b1) == (a2, b2):
                if warnings is not None:
                    warnings.append(f"inconsistent winding at edge {edge}")
                continue
            # earlier merges this pass may have rewritten either face
            if not _has_directed_edge(faces[f1], a1, b1):
                continue
            if not _has_directed_edge(faces[f2], b1, a1):
                continue
            if float(np.dot(normals[f1], normals[f2])) < cos_tol:
                continue
            merged = _merge_cycles(faces[f1], faces[f2], a1, b1)
            if merged is None:
                continue
            del faces[f2]
            faces[f1] = merged
            normals[f1] = _newell_normal(mesh.vertices, merged)
            changed = True

    out_faces = [faces[i] for i in sorted(faces)]
    # drop vertices no longer referenced by any face
    referenced = sorted({i for f in out_faces for i in f})
    remap = {old: new for new, old in enumerate(referenced)}
    verts = mesh.vertices[referenced]
    out_faces = [tuple(remap[i] for i in f) for f in out_faces]
    return Mesh(verts, out_faces, class_id=mesh.class_id)


def augment(mesh: Mesh, cfg: AugmentConfig, rng: np.random.Generator) -> Mesh:
    """One augmentation draw: scale, warp, then decimate at a random tolerance."""
    m = axis_scale(normalize(mesh), rng, cfg.scale_lo, cfg.scale_hi)
    m = piecewise_warp(m, rng, cfg.warp_segments, cfg.warp_log_variance)
    tol = rng.uniform(cfg.decimate_tol_lo, cfg.decimate_tol_hi)
    return planar_decimate(m, tol)
