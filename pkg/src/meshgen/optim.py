"""Parameter store, Adam with global-norm clipping, warmup+cosine schedule,
and a deterministic binary checkpoint format.

Checkpoint layout (version 1), little-endian:

    magic:   b"MGCKPT1\\n"
    header:  8-byte big-endian length, then UTF-8 JSON with sorted keys:
             {"arrays": [{"name", "dtype", "shape", "offset", "nbytes"}...],
              "meta": {...user metadata, includes step and config hash...}}
    body:    raw array bytes, C order, concatenated at the given offsets.

Adam moments are stored as arrays named "adam_m/<param>" and
"adam_v/<param>".  No timestamps anywhere, so identical state produces
byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"MGCKPT1\n"


class ParamStore:
    """Named trainable parameters plus Adam moments and a step counter."""

    def __init__(self, dtype=np.float32):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.dtype = dtype

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in self.params.items()}

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())


def clip_global_norm(grads: dict[str, np.ndarray],
                     max_norm: float = 1.0) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by max_norm/g when the global L2 norm g exceeds it."""
    sq = sum(float(np.sum(np.asarray(g, dtype=np.float64) ** 2)) for g in grads.values())
    norm = math.sqrt(sq)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class LrSchedule:
    max_lr: float = 3e-4
    warmup_steps: int = 500
    total_steps: int = 10000

    def __post_init__(self):
        if self.warmup_steps >= self.total_steps:
            raise ValueError("warmup_steps must be < total_steps")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup to max_lr, then cosine annealing to zero."""
    if step < schedule.warmup_steps:
        return schedule.max_lr * step / schedule.warmup_steps
    t = (step - schedule.warmup_steps) / (schedule.total_steps - schedule.warmup_steps)
    t = min(t, 1.0)
    return schedule.max_lr * 0.5 * (1.0 + math.cos(math.pi * t))


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = np.asarray(grads[name], dtype=p.data.dtype)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, store: ParamStore, meta: dict) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for name in sorted(store.params):
        arrays.append((name, store.params[name].data))
        arrays.append((f"adam_m/{name}", store.m[name]))
        arrays.append((f"adam_v/{name}", store.v[name]))
    index = []
    offset = 0
    for name, arr in arrays:
        nbytes = arr.nbytes
        index.append({"name": name, "dtype": str(arr.dtype),
                      "shape": list(arr.shape), "offset": offset,
                      "nbytes": nbytes})
        offset += nbytes
    meta = dict(meta)
    meta["step"] = store.step
    header = json.dumps({"arrays": index, "meta": meta},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "big"))
        fh.write(header)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ({array name: ndarray}, meta)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a meshgen checkpoint")
    n = int.from_bytes(raw[len(MAGIC):len(MAGIC) + 8], "big")
    header_start = len(MAGIC) + 8
    header = json.loads(raw[header_start:header_start + n].decode("utf-8"))
    body = raw[header_start + n:]
    arrays = {}
    for rec in header["arrays"]:
        buf = body[rec["offset"]:rec["offset"] + rec["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"])
        arrays[rec["name"]] = arr.copy()
    return arrays, header["meta"]


def restore_store(store: ParamStore, arrays: dict[str, np.ndarray],
                  meta: dict) -> None:
    """Load checkpoint arrays into an already-built ParamStore in place."""
    for name, p in store.params.items():
        if name not in arrays:
            raise KeyError(f"checkpoint missing parameter {name!r}")
        if arrays[name].shape != p.data.shape:
            raise ValueError(f"shape mismatch for {name!r}: "
                             f"{arrays[name].shape} vs {p.data.shape}")
        p.data = arrays[name].astype(store.dtype)
        store.m[name] = arrays[f"adam_m/{name}"].astype(store.dtype)
        store.v[name] = arrays[f"adam_v/{name}"].astype(store.dtype)
    store.step = int(meta["step"])
