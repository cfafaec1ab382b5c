"""Synthetic labeled mesh corpus: generation, on-disk layout, and loading.

Layout:

    root/
      manifest.json                 counts, seed, config echo, config hash
      {train,val,test}/{class}/{id}.obj  + {id}.json label sidecar

Stored meshes are canonical quantized meshes written back at bin centers,
so re-quantizing a loaded example reproduces the integer mesh exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment, planar_decimate
from .mesh import Mesh, MeshError, QuantizedMesh, dequantize, normalize, quantize
from .objio import load_obj, load_sidecar, save_obj, save_sidecar
from .primitives import DEFAULT_CLASSES, make_primitive

SPLITS = ("train", "val", "test")


@dataclass
class CorpusSpec:
    classes: list[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    examples_per_class: int = 8
    split_fractions: tuple[float, float, float] = (0.925, 0.025, 0.05)
    seed: int = 0
    bits: int = 8
    max_vertices: int = 800
    max_face_tokens: int = 2800
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, "
                             f"got {self.split_fractions}")
        if not self.classes:
            raise ValueError("need at least one class")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _allocate_splits(ids: list[str], fractions) -> dict[str, str]:
    """Deterministic split by hashing ids: sort by hash, slice by counts
    (largest-remainder rounding, so each split is within 1 of exact)."""
    n = len(ids)
    exact = [f * n for f in fractions]
    counts = [int(x) for x in exact]
    rem = n - sum(counts)
    order = sorted(range(3), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in range(rem):
        counts[order[i % 3]] += 1
    hashed = sorted(ids, key=lambda s: hashlib.sha256(s.encode()).hexdigest())
    out = {}
    k = 0
    for split, c in zip(SPLITS, counts):
        for ex in hashed[k:k + c]:
            out[ex] = split
        k += c
    return out


def _face_token_count(q: QuantizedMesh) -> int:
    return sum(len(f) for f in q.faces) + len(q.faces)  # separators + stop


def _passes_caps(q: QuantizedMesh, spec: CorpusSpec) -> bool:
    return q.num_vertices <= spec.max_vertices and \
        _face_token_count(q) <= spec.max_face_tokens


def _example_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def make_corpus(spec: CorpusSpec, root) -> dict:
    """Generate the corpus on disk; returns the manifest dict.

    Training examples get ``copies_per_mesh`` augmented copies each;
    validation and test examples are decimated at the midpoint tolerance
    without scale/warp so evaluation targets stay stable.
    """
    root = Path(root)
    counts = {s: {c: 0 for c in spec.classes} for s in SPLITS}
    dropped = 0
    for ci, cls in enumerate(spec.classes):
        ids = [f"{cls}_{k:04d}" for k in range(spec.examples_per_class)]
        split_of = _allocate_splits(ids, spec.split_fractions)
        for k, ex_id in enumerate(ids):
            split = split_of[ex_id]
            base_rng = _example_rng(spec.seed, ci, k)
            base = make_primitive(cls, base_rng)
            base.class_id = ci
            if split == "train":
                variants = [
                    (f"{ex_id}_a{j:02d}",
                     augment(base, spec.augment, _example_rng(spec.seed, ci, k, j)))
                    for j in range(spec.augment.copies_per_mesh)
                ]
            else:
                mid_tol = 0.5 * (spec.augment.decimate_tol_lo
                                 + spec.augment.decimate_tol_hi)
                variants = [(ex_id, planar_decimate(normalize(base), mid_tol))]
            for var_id, mesh in variants:
                try:
                    q = quantize(normalize(mesh), spec.bits)
                except MeshError:
                    dropped += 1
                    continue
                q.class_id = ci
                if not _passes_caps(q, spec):
                    dropped += 1
                    continue
                out_dir = root / split / cls
                out_dir.mkdir(parents=True, exist_ok=True)
                path = out_dir / f"{var_id}.obj"
                save_obj(dequantize(q), path)
                save_sidecar(path, ci, cls)
                counts[split][cls] += 1
    for split in SPLITS:
        for cls in spec.classes:
            if sum(counts[s][cls] for s in SPLITS) == 0:
                raise MeshError(f"class {cls!r} empty after filtering")
    manifest = {
        "spec": spec.to_dict(),
        "spec_hash": spec.hash(),
        "counts": counts,
        "dropped": dropped,
        "classes": list(spec.classes),
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_manifest(root) -> dict:
    return json.loads((Path(root) / "manifest.json").read_text(encoding="utf-8"))


def load_split(root, split: str, bits: int) -> list[QuantizedMesh]:
    """Load and re-quantize every example of a split, sorted by path."""
    root = Path(root) / split
    out = []
    for path in sorted(root.glob("*/*.obj")):
        mesh = load_obj(path)
        meta = load_sidecar(path)
        q = quantize(mesh, bits)
        q.class_id = meta["class_id"] if meta else None
        out.append(q)
    return out
