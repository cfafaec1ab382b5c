"""Wavefront OBJ reading/writing plus the JSON class-label sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshError


class ObjParseError(MeshError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def load_obj(path) -> Mesh:
    """Parse v/f records; other record types are ignored.

    Face entries of the form ``i/j/k`` use only the vertex index.  Negative
    (relative) indices are resolved against the vertices seen so far.
    """
    vertices: list[list[float]] = []
    faces: list[tuple[int, ...]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(path, line_no, "vertex needs 3 coordinates")
                try:
                    vertices.append([float(p) for p in parts[1:4]])
                except ValueError:
                    raise ObjParseError(path, line_no, f"bad vertex record: {line}")
            elif tag == "f":
                if len(parts) < 4:
                    raise ObjParseError(path, line_no, "face needs at least 3 indices")
                idx = []
                for p in parts[1:]:
                    head = p.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ObjParseError(path, line_no, f"bad face index {p!r}")
                    if i == 0:
                        raise ObjParseError(path, line_no, "face index 0 is invalid")
                    if i < 0:
                        i = len(vertices) + i
                    else:
                        i = i - 1
                    if not (0 <= i < len(vertices)):
                        raise ObjParseError(
                            path, line_no,
                            f"face index {p} out of range (have {len(vertices)} vertices)")
                    idx.append(i)
                faces.append(tuple(idx))
    if not vertices:
        raise ObjParseError(path, 0, "no vertices in file")
    return Mesh(np.asarray(vertices), faces)


def save_obj(mesh: Mesh, path) -> None:
    """Write one ``v x y z`` per vertex and one 1-based ``f ...`` per face.

    Floats are printed with shortest round-trip repr so load(save(m))
    reproduces coordinates exactly.
    """
    mesh.validate()
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for f in mesh.faces:
        lines.append("f " + " ".join(str(i + 1) for i in f))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sidecar_path(obj_path) -> Path:
    return Path(obj_path).with_suffix(".json")


def save_sidecar(obj_path, class_id: int, class_name: str) -> None:
    payload = {"class_id": int(class_id), "class_name": class_name}
    sidecar_path(obj_path).write_text(
        json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_sidecar(obj_path) -> dict | None:
    p = sidecar_path(obj_path)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))
