"""Masked autoregressive sampling: nucleus filtering, constrained decoding
with backtracking, and the end-to-end mesh generation pipeline.

The validity masks admit prefixes with no legal continuation (e.g. a face
whose first index leaves too few larger indices to finish the face).  The
sampler therefore backtracks: when the mask at some step allows nothing,
the previous token is banned at its position and resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .mesh import Mesh, QuantizedMesh, dequantize
from .sequences import (FACE_STOP, VERTEX_STOP, FaceMaskState, VertexMaskState,
                        decode_faces, decode_vertices)


@dataclass
class SamplerConfig:
    top_p: float = 0.9
    temperature: float = 1.0
    max_vertex_tokens: int = 2401
    max_face_tokens: int = 2801
    seed: int = 0
    apply_masks: bool = True

    def __post_init__(self):
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def nucleus_filter(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Keep the minimal descending-probability prefix with mass >= top_p,
    zero the rest, renormalize.  Ties are broken by token id ascending."""
    probs = np.asarray(probs, dtype=np.float64)
    order = np.lexsort((np.arange(len(probs)), -probs))
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, top_p, side="left"))
    k = min(k, len(probs) - 1)
    out = np.zeros_like(probs)
    keep = order[:k + 1]
    out[keep] = probs[keep]
    return out / out.sum()


def _sample_constrained(logits_fn, mask_factory, stop_token: int,
                        max_tokens: int, cfg: SamplerConfig,
                        rng: np.random.Generator) -> tuple[list[int], bool]:
    """Sample until the stop token or the budget; returns (tokens, truncated)."""
    tokens: list[int] = []
    banned: list[set[int]] = [set()]

    def rebuild_state():
        st = mask_factory()
        for t in tokens:
            st.push(t)
        return st

    state = mask_factory() if cfg.apply_masks else None
    while len(tokens) < max_tokens:
        logits = np.asarray(logits_fn(tokens), dtype=np.float64)
        logits = logits / cfg.temperature
        if cfg.apply_masks:
            allowed = state.allowed().copy()
            for t in banned[-1]:
                allowed[t] = False
            if not allowed.any():
                if not tokens:
                    raise RuntimeError("no valid token at the empty prefix")
                last = tokens.pop()
                banned.pop()
                banned[-1].add(last)
                state = rebuild_state()
                continue
            logits = np.where(allowed, logits, -np.inf)
        m = logits.max()
        probs = np.exp(logits - m)
        probs /= probs.sum()
        probs = nucleus_filter(probs, cfg.top_p)
        token = int(rng.choice(len(probs), p=probs))
        tokens.append(token)
        banned.append(set())
        if cfg.apply_masks:
            state.push(token)
        if token == stop_token:
            return tokens, False
    return tokens, True


def sample_vertices(model, class_id=None, cfg: SamplerConfig | None = None,
                    rng: np.random.Generator | None = None) -> tuple[list[int], bool]:
    """Sample a vertex token sequence; returns (tokens, truncated)."""
    cfg = cfg or SamplerConfig()
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    bits = model.cfg.bits
    class_ids = None if class_id is None else np.array([class_id])
    max_tokens = min(cfg.max_vertex_tokens, model.cfg.max_vertex_tokens)

    def logits_fn(tokens):
        inp = np.array([tokens + [0]], dtype=np.int64)
        with ad.no_grad():
            out = model.forward(inp, class_ids)
        return out.data[0, -1]

    return _sample_constrained(logits_fn, lambda: VertexMaskState(bits),
                               VERTEX_STOP, max_tokens, cfg, rng)


def sample_faces(model, vertices: list[tuple[int, int, int]], class_id=None,
                 cfg: SamplerConfig | None = None,
                 rng: np.random.Generator | None = None) -> tuple[list[int], bool]:
    """Sample a face token sequence for a canonical vertex list."""
    cfg = cfg or SamplerConfig()
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    n = len(vertices)
    varr = np.array([vertices], dtype=np.int64)
    counts = np.array([n], dtype=np.int64)
    class_ids = None if class_id is None else np.array([class_id])
    max_tokens = min(cfg.max_face_tokens, model.cfg.max_face_tokens + 1)

    def logits_fn(tokens):
        inp = np.array([tokens + [0]], dtype=np.int64)
        with ad.no_grad():
            out = model.forward(varr, counts, inp, class_ids)
        return out.data[0, -1]

    return _sample_constrained(logits_fn, lambda: FaceMaskState(n),
                               FACE_STOP, max_tokens, cfg, rng)


def generate_mesh(vertex_model, face_model, class_id=None,
                  cfg: SamplerConfig | None = None,
                  sample_index: int = 0) -> tuple[Mesh | None, dict]:
    """Vertex sampling -> decode -> face sampling -> decode -> dequantize.

    Returns (mesh or None, report).  The mesh is None when either stage hit
    its token budget without stopping; the report carries the flags so the
    caller can apply its own discard policy.
    """
    cfg = cfg or SamplerConfig()
    if vertex_model.cfg.bits != face_model.cfg.bits:
        raise ValueError("vertex and face models disagree on quantization bits")
    report: dict = {"sample_index": sample_index, "class_id": class_id,
                    "truncated_vertices": False, "truncated_faces": False}
    vrng = np.random.default_rng(np.random.SeedSequence([cfg.seed, sample_index, 0]))
    frng = np.random.default_rng(np.random.SeedSequence([cfg.seed, sample_index, 1]))
    vtoks, vtrunc = sample_vertices(vertex_model, class_id, cfg, vrng)
    report["vertex_tokens"] = len(vtoks)
    report["truncated_vertices"] = vtrunc
    if vtrunc:
        return None, report
    triples = decode_vertices(vtoks, vertex_model.cfg.bits)
    report["num_vertices"] = len(triples)
    ftoks, ftrunc = sample_faces(face_model, triples, class_id, cfg, frng)
    report["face_tokens"] = len(ftoks)
    report["truncated_faces"] = ftrunc
    if ftrunc:
        return None, report
    faces = decode_faces(ftoks, len(triples))
    report["num_faces"] = len(faces)
    q = QuantizedMesh(triples, [tuple(f) for f in faces],
                      bits=vertex_model.cfg.bits, class_id=class_id)
    q.validate()
    return dequantize(q), report
