"""Teacher-forced training for the vertex and face models.

Each step draws its RNG stream from (seed, step), so an interrupted run
resumed from a checkpoint replays the identical trajectory.
"""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .mesh import QuantizedMesh
from .model import FaceModel, ModelConfig, VertexModel
from .optim import (LrSchedule, adam_step, clip_global_norm, load_checkpoint,
                    lr_at, restore_store, save_checkpoint)
from .sequences import encode_faces, encode_vertices

LN2 = math.log(2.0)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    max_lr: float = 3e-4
    warmup_steps: int = 500
    clip_norm: float = 1.0
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 50
    stop_at_bits: float | None = None  # early stop on train bits/vertex
    # cosine-schedule horizon; set when a run is planned longer than `steps`
    # (e.g. resuming an interrupted run) so the lr trajectory is unchanged
    schedule_steps: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def pack_dataset(qmeshes: list[QuantizedMesh]) -> dict:
    """Pad-encode a dataset into fixed arrays for batched teacher forcing."""
    if not qmeshes:
        raise ValueError("empty dataset")
    vseqs = [encode_vertices(q) for q in qmeshes]
    fseqs = [encode_faces(q) for q in qmeshes]
    n = len(qmeshes)
    lv = max(len(s) for s in vseqs)
    lf = max(len(s) for s in fseqs)
    vmax = max(q.num_vertices for q in qmeshes)
    out = {
        "vertex_tokens": np.zeros((n, lv), dtype=np.int64),
        "vertex_lengths": np.array([len(s) for s in vseqs], dtype=np.int64),
        "face_tokens": np.zeros((n, lf), dtype=np.int64),
        "face_lengths": np.array([len(s) for s in fseqs], dtype=np.int64),
        "vertices": np.zeros((n, vmax, 3), dtype=np.int64),
        "v_counts": np.array([q.num_vertices for q in qmeshes], dtype=np.int64),
        "class_ids": np.array(
            [q.class_id if q.class_id is not None else -1 for q in qmeshes],
            dtype=np.int64),
    }
    for i, (vs, fs, q) in enumerate(zip(vseqs, fseqs, qmeshes)):
        out["vertex_tokens"][i, :len(vs)] = vs
        out["face_tokens"][i, :len(fs)] = fs
        out["vertices"][i, :q.num_vertices] = q.vertices
    return out


def _batch_loss(kind: str, model, data: dict, idx: np.ndarray,
                conditioned: bool, train: bool, rng):
    cids = data["class_ids"][idx] if conditioned else None
    if kind == "vertex":
        toks = data["vertex_tokens"][idx]
        lens = data["vertex_lengths"][idx]
        toks = toks[:, :lens.max()]
        return model.loss(toks, lens, cids, train=train, rng=rng)
    toks = data["face_tokens"][idx]
    lens = data["face_lengths"][idx]
    vmax = data["v_counts"][idx].max()
    return model.loss(data["vertices"][idx][:, :vmax], data["v_counts"][idx],
                      toks[:, :lens.max()], lens, cids, train=train, rng=rng)


def eval_bits(kind: str, model, data: dict, batch_size: int = 32) -> float:
    """Teacher-forced bits/vertex over a packed dataset, dropout off."""
    n = len(data["v_counts"])
    conditioned = model.cfg.condition_mode == "class"
    total = 0.0
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        _, bits, _ = _batch_loss(kind, model, data, idx, conditioned,
                                 train=False, rng=None)
        total += bits * len(idx)
    return total / n


def build_model(kind: str, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
    if kind == "vertex":
        return VertexModel(cfg, seed=seed, dtype=dtype)
    if kind == "face":
        return FaceModel(cfg, seed=seed, dtype=dtype)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(path, kind: str, model, extra_meta: dict | None = None) -> None:
    meta = {"model": kind, "config": model.cfg.to_dict(),
            "config_hash": model.cfg.hash()}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, model.store, meta)


def load_model(path, dtype=np.float32):
    """Rebuild a model from a checkpoint; returns (kind, model, meta)."""
    arrays, meta = load_checkpoint(path)
    cfg = ModelConfig.from_dict(meta["config"])
    model = build_model(meta["model"], cfg, dtype=dtype)
    restore_store(model.store, arrays, meta)
    return meta["model"], model, meta


def train_model(kind: str, model_cfg: ModelConfig, train_set: list[QuantizedMesh],
                val_set: list[QuantizedMesh] | None, train_cfg: TrainConfig,
                out_dir=None, resume: bool = False, quiet: bool = True):
    """Train one model; returns (model, history).

    Writes last.ckpt / best.ckpt (by validation bits, falling back to train
    bits) and a train_log.jsonl under out_dir when given.
    """
    model = build_model(kind, model_cfg, seed=train_cfg.seed)
    data = pack_dataset(train_set)
    val_data = pack_dataset(val_set) if val_set else None
    conditioned = model_cfg.condition_mode == "class"
    horizon = train_cfg.schedule_steps or train_cfg.steps
    schedule = LrSchedule(max_lr=train_cfg.max_lr,
                          warmup_steps=train_cfg.warmup_steps,
                          total_steps=max(horizon, train_cfg.warmup_steps + 1))
    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / f"{kind}_train_log.jsonl"
        last = out_dir / f"{kind}_last.ckpt"
        if resume and last.exists():
            arrays, meta = load_checkpoint(last)
            restore_store(model.store, arrays, meta)
        elif log_path.exists():
            log_path.unlink()

    n = len(train_set)
    history = []
    best_bits = math.inf

    def checkpoint(step):
        nonlocal best_bits
        if out_dir is None:
            return None
        val_bits = eval_bits(kind, model, val_data) if val_data else None
        save_model(out_dir / f"{kind}_last.ckpt", kind, model,
                   {"train_config": train_cfg.to_dict(),
                    "val_bits": val_bits, "train_step": step})
        rank = val_bits if val_bits is not None else history[-1]["loss_bits"]
        if rank < best_bits:
            best_bits = rank
            shutil.copyfile(out_dir / f"{kind}_last.ckpt",
                            out_dir / f"{kind}_best.ckpt")
        return val_bits

    start = model.store.step
    for step in range(start, train_cfg.steps):
        rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, step]))
        idx = rng.choice(n, size=min(train_cfg.batch_size, n), replace=False)
        model.store.zero_grad()
        loss, bits, acc = _batch_loss(kind, model, data, idx, conditioned,
                                      train=True, rng=rng)
        loss.backward()
        grads, gnorm = clip_global_norm(model.store.grads(), train_cfg.clip_norm)
        lr = lr_at(schedule, step)
        logging = step % train_cfg.log_every == 0 or step == train_cfg.steps - 1
        stopping = (logging and train_cfg.stop_at_bits is not None
                    and bits < train_cfg.stop_at_bits)
        if not stopping:
            # when the pre-update loss already meets the target, keep the
            # parameters that achieved it: near a memorized minimum one more
            # Adam step can bounce the loss well above the threshold
            adam_step(model.store, grads, lr)
        if logging:
            rec = {"step": step, "loss_bits": bits, "acc": acc,
                   "lr": lr, "grad_norm": gnorm}
            history.append(rec)
            if log_path is not None:
                with open(log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if not quiet:
                print(f"[{kind}] step {step} bits/vertex {bits:.4f} acc {acc:.3f}")
            if stopping:
                break
        if (step + 1) % train_cfg.checkpoint_every == 0:
            checkpoint(step + 1)
    checkpoint(model.store.step)
    return model, history
