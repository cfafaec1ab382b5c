"""Vertex and face sequence models.

Both are decoder-style Transformers with layer normalization inside the
residual path:

    H <- H + MaskedMultiHead(LN(H))
    H <- H + Linear(ReLU(Linear(LN(H))))      (dropout after the ReLU)

Class conditioning projects a learned class embedding and adds it,
broadcast over positions, right after the self-attention residual.

The face model embeds the vertex set (plus stop / new-face slots) with a
bidirectional encoder and decodes faces with a pointer head: the decoder
emits a pointer vector per step whose dot products with the contextual
slot embeddings are the logits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, NEG_INF
from .optim import ParamStore

LN2 = math.log(2.0)


@dataclass
class ModelConfig:
    embed_dim: int = 128
    fc_dim: int = 512
    vertex_layers: int = 4
    face_layers: int = 3
    heads: int = 4
    dropout: float = 0.2
    bits: int = 8
    max_vertices: int = 800
    max_face_tokens: int = 2800
    num_classes: int | None = None
    use_face_cross_attention: bool = False
    condition_mode: str = "none"  # "none" | "class"

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.condition_mode not in ("none", "class"):
            raise ValueError(f"unknown condition_mode {self.condition_mode!r}")
        if self.condition_mode == "class" and not self.num_classes:
            raise ValueError("condition_mode='class' requires num_classes")

    @property
    def vertex_alphabet(self) -> int:
        return (1 << self.bits) + 1

    @property
    def max_vertex_tokens(self) -> int:
        return 3 * self.max_vertices + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, e = x.shape
    x = ad.reshape(x, (b, t, heads, e // heads))
    return ad.transpose(x, (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    x = ad.transpose(x, (0, 2, 1, 3))
    return ad.reshape(x, (b, t, h * dh))


class _Torso:
    """A stack of Transformer blocks sharing a ParamStore prefix."""

    def __init__(self, store: ParamStore, prefix: str, layers: int,
                 cfg: ModelConfig, rng: np.random.Generator,
                 conditioned: bool, cross: bool = False):
        self.store = store
        self.prefix = prefix
        self.layers = layers
        self.cfg = cfg
        self.conditioned = conditioned
        self.cross = cross
        e, f = cfg.embed_dim, cfg.fc_dim
        for l in range(layers):
            p = f"{prefix}/l{l}"
            for tag in ("ln1", "ln2"):
                store.add(f"{p}/{tag}_g", np.ones(e))
                store.add(f"{p}/{tag}_b", np.zeros(e))
            for tag in ("wq", "wk", "wv", "wo"):
                store.add(f"{p}/{tag}", _trunc_normal(rng, (e, e)))
                store.add(f"{p}/{tag}_b", np.zeros(e))
            store.add(f"{p}/w1", _trunc_normal(rng, (e, f)))
            store.add(f"{p}/b1", np.zeros(f))
            store.add(f"{p}/w2", _trunc_normal(rng, (f, e)))
            store.add(f"{p}/b2", np.zeros(e))
            if conditioned:
                store.add(f"{p}/cond_w", _trunc_normal(rng, (e, e)))
                store.add(f"{p}/cond_b", np.zeros(e))
            if cross:
                store.add(f"{p}/lnx_g", np.ones(e))
                store.add(f"{p}/lnx_b", np.zeros(e))
                for tag in ("xq", "xk", "xv", "xo"):
                    store.add(f"{p}/{tag}", _trunc_normal(rng, (e, e)))
                    store.add(f"{p}/{tag}_b", np.zeros(e))

    def _attend(self, p: str, x: Tensor, kv: Tensor, mask, tags) -> Tensor:
        s = self.store
        wq, wk, wv, wo = tags
        q = _split_heads(_linear(x, s[f"{p}/{wq}"], s[f"{p}/{wq}_b"]), self.cfg.heads)
        k = _split_heads(_linear(kv, s[f"{p}/{wk}"], s[f"{p}/{wk}_b"]), self.cfg.heads)
        v = _split_heads(_linear(kv, s[f"{p}/{wv}"], s[f"{p}/{wv}_b"]), self.cfg.heads)
        out = _merge_heads(ad.scaled_dot_attention(q, k, v, mask))
        return _linear(out, s[f"{p}/{wo}"], s[f"{p}/{wo}_b"])

    def __call__(self, h: Tensor, attn_mask, cond: Tensor | None,
                 rng: np.random.Generator | None, train: bool,
                 cross_kv: Tensor | None = None, cross_mask=None) -> Tensor:
        s = self.store
        for l in range(self.layers):
            p = f"{self.prefix}/l{l}"
            x = ad.layer_norm(h, s[f"{p}/ln1_g"], s[f"{p}/ln1_b"])
            h = ad.add(h, self._attend(p, x, x, attn_mask, ("wq", "wk", "wv", "wo")))
            if self.conditioned and cond is not None:
                r = _linear(cond, s[f"{p}/cond_w"], s[f"{p}/cond_b"])
                h = ad.add(h, ad.reshape(r, (r.shape[0], 1, r.shape[1])))
            if self.cross and cross_kv is not None:
                x = ad.layer_norm(h, s[f"{p}/lnx_g"], s[f"{p}/lnx_b"])
                h = ad.add(h, self._attend(p, x, cross_kv, cross_mask,
                                           ("xq", "xk", "xv", "xo")))
            x = ad.layer_norm(h, s[f"{p}/ln2_g"], s[f"{p}/ln2_b"])
            x = ad.relu(_linear(x, s[f"{p}/w1"], s[f"{p}/b1"]))
            x = ad.dropout(x, self.cfg.dropout, rng, train)
            x = _linear(x, s[f"{p}/w2"], s[f"{p}/b2"])
            h = ad.add(h, x)
        return h


def _causal_mask(t: int, dtype) -> np.ndarray:
    m = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)
    return m[None, None]


def _pad_mask(counts: np.ndarray, total: int, dtype) -> np.ndarray:
    """Additive key mask [B, 1, 1, total]: NEG_INF on padded slots."""
    idx = np.arange(total)[None, :]
    bad = idx >= counts[:, None]
    m = np.where(bad, NEG_INF, 0.0).astype(dtype)
    return m[:, None, None, :]


class VertexModel:
    """Autoregressive model over flattened (z, y, x) coordinate tokens."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.store = ParamStore(dtype=dtype)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E]))
        e = cfg.embed_dim
        s = self.store
        s.add("vertex/value_embed", _trunc_normal(rng, (cfg.vertex_alphabet, e)))
        s.add("vertex/coord_embed", _trunc_normal(rng, (3, e)))
        s.add("vertex/pos_embed", _trunc_normal(rng, (cfg.max_vertices + 1, e)))
        s.add("vertex/start", _trunc_normal(rng, (1, e)))
        if cfg.condition_mode == "class":
            s.add("vertex/class_embed", _trunc_normal(rng, (cfg.num_classes, e)))
        self.torso = _Torso(s, "vertex", cfg.vertex_layers, cfg, rng,
                            conditioned=cfg.condition_mode == "class")
        s.add("vertex/ln_f_g", np.ones(e))
        s.add("vertex/ln_f_b", np.zeros(e))
        s.add("vertex/out_w", np.zeros((e, cfg.vertex_alphabet)))
        s.add("vertex/out_b", np.zeros(cfg.vertex_alphabet))

    def _cond(self, class_ids) -> Tensor | None:
        if self.cfg.condition_mode != "class":
            return None
        if class_ids is None:
            raise ValueError("class-conditional model requires class_ids")
        return ad.embedding(self.store["vertex/class_embed"],
                            np.asarray(class_ids, dtype=np.int64))

    def forward(self, tokens: np.ndarray, class_ids=None,
                train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """tokens [B, L] -> logits [B, L, alphabet]; row i predicts token i.

        Input slot 0 is a learned start embedding; slot i >= 1 embeds
        tokens[:, i-1] with value + coordinate-type + vertex-position
        embeddings.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        b, length = tokens.shape
        if length > self.cfg.max_vertex_tokens:
            raise ValueError(f"sequence length {length} exceeds "
                             f"{self.cfg.max_vertex_tokens}")
        s = self.store
        start = ad.embedding(s["vertex/start"], np.zeros((b, 1), dtype=np.int64))
        if length > 1:
            pos = np.arange(length - 1)
            val = ad.embedding(s["vertex/value_embed"], tokens[:, :-1])
            coord = ad.embedding(s["vertex/coord_embed"], (pos % 3)[None, :].repeat(b, 0))
            vpos = ad.embedding(s["vertex/pos_embed"], (pos // 3)[None, :].repeat(b, 0))
            body = ad.add(ad.add(val, coord), vpos)
            h = ad.concat([start, body], axis=1)
        else:
            h = start
        mask = _causal_mask(length, s.dtype)
        h = self.torso(h, mask, self._cond(class_ids), rng, train)
        h = ad.layer_norm(h, s["vertex/ln_f_g"], s["vertex/ln_f_b"])
        return _linear(h, s["vertex/out_w"], s["vertex/out_b"])

    def loss(self, tokens: np.ndarray, lengths: np.ndarray, class_ids=None,
             train: bool = False, rng=None):
        """Mean over batch of (sequence NLL in nats / N_V); also bits and accuracy.

        Returns (loss_nats Tensor, bits_per_vertex float, accuracy float).
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        b, length = tokens.shape
        if b == 0:
            raise ValueError("empty batch")
        logits = self.forward(tokens, class_ids, train=train, rng=rng)
        valid = np.arange(length)[None, :] < lengths[:, None]
        n_v = (lengths - 1) / 3.0
        weights = valid / (n_v[:, None] * b)
        loss = ad.cross_entropy_logits(logits, tokens, weights)
        pred = logits.data.argmax(axis=-1)
        acc = float((pred == tokens)[valid].mean())
        return loss, float(loss.data) / LN2, acc


class FaceModel:
    """Pointer-network face model conditioned on a vertex set."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.store = ParamStore(dtype=dtype)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA]))
        e = cfg.embed_dim
        s = self.store
        n_val = 1 << cfg.bits
        for axis in "zyx":
            s.add(f"face/coord_embed_{axis}", _trunc_normal(rng, (n_val, e)))
        s.add("face/vpos_embed", _trunc_normal(rng, (cfg.max_vertices, e)))
        s.add("face/special_embed", _trunc_normal(rng, (2, e)))
        s.add("face/face_idx_embed", _trunc_normal(rng, (cfg.max_face_tokens + 1, e)))
        s.add("face/inface_embed", _trunc_normal(rng, (cfg.max_face_tokens + 1, e)))
        s.add("face/start", _trunc_normal(rng, (1, e)))
        if cfg.condition_mode == "class":
            s.add("face/class_embed", _trunc_normal(rng, (cfg.num_classes, e)))
        conditioned = cfg.condition_mode == "class"
        self.encoder = _Torso(s, "face/enc", cfg.face_layers, cfg, rng, conditioned)
        self.decoder = _Torso(s, "face/dec", cfg.face_layers, cfg, rng, conditioned,
                              cross=cfg.use_face_cross_attention)
        s.add("face/enc_ln_g", np.ones(e))
        s.add("face/enc_ln_b", np.zeros(e))
        s.add("face/ln_f_g", np.ones(e))
        s.add("face/ln_f_b", np.zeros(e))
        s.add("face/ptr_w", np.zeros((e, e)))
        s.add("face/ptr_b", np.zeros(e))

    def _cond(self, class_ids) -> Tensor | None:
        if self.cfg.condition_mode != "class":
            return None
        if class_ids is None:
            raise ValueError("class-conditional model requires class_ids")
        return ad.embedding(self.store["face/class_embed"],
                            np.asarray(class_ids, dtype=np.int64))

    def encode_vertices(self, vertices: np.ndarray, v_counts: np.ndarray,
                        class_ids=None, train: bool = False, rng=None):
        """vertices [B, Vmax, 3] of (z, y, x) bins -> slot embeddings [B, Vmax+2, E].

        Slot 0 is the stop token, slot 1 the new-face token, slot k+2
        vertex k.  Returns (enc_out Tensor, additive key mask ndarray).
        """
        vertices = np.asarray(vertices, dtype=np.int64)
        v_counts = np.asarray(v_counts, dtype=np.int64)
        b, vmax, _ = vertices.shape
        s = self.store
        special = ad.embedding(s["face/special_embed"],
                               np.tile(np.arange(2), (b, 1)))
        emb = ad.embedding(s["face/coord_embed_z"], vertices[:, :, 0])
        emb = ad.add(emb, ad.embedding(s["face/coord_embed_y"], vertices[:, :, 1]))
        emb = ad.add(emb, ad.embedding(s["face/coord_embed_x"], vertices[:, :, 2]))
        emb = ad.add(emb, ad.embedding(s["face/vpos_embed"],
                                       np.tile(np.arange(vmax), (b, 1))))
        h = ad.concat([special, emb], axis=1)
        key_mask = _pad_mask(v_counts + 2, vmax + 2, s.dtype)
        h = self.encoder(h, key_mask, self._cond(class_ids), rng, train)
        h = ad.layer_norm(h, s["face/enc_ln_g"], s["face/enc_ln_b"])
        return h, key_mask

    @staticmethod
    def _face_positions(tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per token: index of the face it belongs to and position in the face."""
        b, length = tokens.shape
        face_idx = np.zeros((b, length), dtype=np.int64)
        inface = np.zeros((b, length), dtype=np.int64)
        for i in range(b):
            fi = 0
            pos = 0
            for j in range(length):
                face_idx[i, j] = fi
                inface[i, j] = pos
                if tokens[i, j] == 1:  # new-face
                    fi += 1
                    pos = 0
                else:
                    pos += 1
        return face_idx, inface

    def forward(self, vertices: np.ndarray, v_counts: np.ndarray,
                face_tokens: np.ndarray, class_ids=None,
                train: bool = False, rng=None) -> Tensor:
        """face_tokens [B, L] -> logits [B, L, Vmax+2]; padded slots get -1e9."""
        face_tokens = np.asarray(face_tokens, dtype=np.int64)
        v_counts = np.asarray(v_counts, dtype=np.int64)
        b, length = face_tokens.shape
        if length > self.cfg.max_face_tokens + 1:
            raise ValueError(f"face sequence length {length} exceeds "
                             f"{self.cfg.max_face_tokens + 1}")
        if (face_tokens >= (v_counts[:, None] + 2)).any():
            raise ValueError("face token out of range for its vertex count")
        s = self.store
        enc_out, key_mask = self.encode_vertices(
            vertices, v_counts, class_ids, train=train, rng=rng)
        start = ad.embedding(s["face/start"], np.zeros((b, 1), dtype=np.int64))
        if length > 1:
            prev = face_tokens[:, :-1]
            val = ad.take_along(enc_out, prev)
            fidx, infc = self._face_positions(prev)
            val = ad.add(val, ad.embedding(s["face/face_idx_embed"], fidx))
            val = ad.add(val, ad.embedding(s["face/inface_embed"], infc))
            h = ad.concat([start, val], axis=1)
        else:
            h = start
        mask = _causal_mask(length, s.dtype)
        h = self.decoder(h, mask, self._cond(class_ids), rng, train,
                         cross_kv=enc_out if self.cfg.use_face_cross_attention else None,
                         cross_mask=key_mask)
        h = ad.layer_norm(h, s["face/ln_f_g"], s["face/ln_f_b"])
        ptr = _linear(h, s["face/ptr_w"], s["face/ptr_b"])
        logits = ad.matmul(ptr, ad.transpose(enc_out, (0, 2, 1)))
        slot_pad = key_mask[:, 0, :, :]  # [B, 1, S]
        return ad.add(logits, Tensor(slot_pad))

    def loss(self, vertices, v_counts, face_tokens, lengths, class_ids=None,
             train: bool = False, rng=None):
        """Mean over batch of (face-sequence NLL in nats / N_V), bits, accuracy."""
        face_tokens = np.asarray(face_tokens, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        v_counts = np.asarray(v_counts, dtype=np.int64)
        b, length = face_tokens.shape
        if b == 0:
            raise ValueError("empty batch")
        logits = self.forward(vertices, v_counts, face_tokens, class_ids,
                              train=train, rng=rng)
        valid = np.arange(length)[None, :] < lengths[:, None]
        weights = valid / (v_counts[:, None].astype(np.float64) * b)
        loss = ad.cross_entropy_logits(logits, face_tokens, weights)
        pred = logits.data.argmax(axis=-1)
        acc = float((pred == face_tokens)[valid].mean())
        return loss, float(loss.data) / LN2, acc
