import json

import numpy as np
import pytest

from meshgen.model import ModelConfig
from meshgen.training import (TrainConfig, build_model, eval_bits, load_model,
                              pack_dataset, save_model, train_model)

from conftest import primitive_dataset


def tiny_cfg(**kw):
    base = dict(embed_dim=32, fc_dim=64, vertex_layers=2, face_layers=2,
                heads=2, dropout=0.1, bits=6, max_vertices=80,
                max_face_tokens=300)
    base.update(kw)
    return ModelConfig(**base)


class TestPackDataset:
    def test_shapes_and_padding(self):
        data = primitive_dataset(bits=6, count=5)
        packed = pack_dataset(data)
        n = len(data)
        assert packed["vertex_tokens"].shape[0] == n
        for i, q in enumerate(data):
            lv = packed["vertex_lengths"][i]
            assert packed["vertex_tokens"][i, lv - 1] == 0  # stop token
            assert np.all(packed["vertex_tokens"][i, lv:] == 0)
            assert packed["v_counts"][i] == q.num_vertices

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pack_dataset([])


class TestTrainLoop:
    def test_vertex_loss_decreases(self, tmp_path):
        data = primitive_dataset(bits=6, count=8)
        tc = TrainConfig(steps=60, batch_size=4, warmup_steps=10,
                         log_every=10, checkpoint_every=30, seed=0)
        model, history = train_model("vertex", tiny_cfg(), data, None, tc,
                                     out_dir=tmp_path)
        assert history[-1]["loss_bits"] < history[0]["loss_bits"] - 0.3
        assert (tmp_path / "vertex_last.ckpt").exists()
        assert (tmp_path / "vertex_best.ckpt").exists()
        log = (tmp_path / "vertex_train_log.jsonl").read_text().splitlines()
        assert json.loads(log[0])["step"] == 0

    def test_face_loss_decreases(self):
        data = primitive_dataset(bits=6, count=8)
        tc = TrainConfig(steps=60, batch_size=4, warmup_steps=10, log_every=10)
        _, history = train_model("face", tiny_cfg(), data, None, tc)
        assert history[-1]["loss_bits"] < history[0]["loss_bits"] - 1.0

    def test_training_deterministic(self, tmp_path):
        data = primitive_dataset(bits=6, count=6)
        tc = TrainConfig(steps=20, batch_size=4, warmup_steps=5, log_every=5)
        m1, h1 = train_model("vertex", tiny_cfg(), data, None, tc)
        m2, h2 = train_model("vertex", tiny_cfg(), data, None, tc)
        assert h1 == h2
        for k in m1.store.params:
            assert np.array_equal(m1.store[k].data, m2.store[k].data)

    def test_resume_matches_uninterrupted(self, tmp_path):
        data = primitive_dataset(bits=6, count=6)
        cfg = tiny_cfg()
        full = TrainConfig(steps=20, batch_size=4, warmup_steps=5,
                           log_every=5, checkpoint_every=10)
        m_full, _ = train_model("vertex", cfg, data, None, full,
                                out_dir=tmp_path / "full")
        half = TrainConfig(steps=10, batch_size=4, warmup_steps=5,
                           log_every=5, checkpoint_every=10,
                           schedule_steps=20)  # same planned horizon
        train_model("vertex", cfg, data, None, half, out_dir=tmp_path / "part")
        m_res, _ = train_model("vertex", cfg, data, None, full,
                               out_dir=tmp_path / "part", resume=True)
        for k in m_full.store.params:
            assert np.array_equal(m_full.store[k].data, m_res.store[k].data), k

    def test_early_stop(self):
        data = primitive_dataset(bits=6, count=4)
        tc = TrainConfig(steps=5000, batch_size=4, warmup_steps=5,
                         log_every=5, stop_at_bits=17.0)
        model, history = train_model("vertex", tiny_cfg(dropout=0.0), data,
                                     None, tc)
        assert history[-1]["step"] < 4999
        assert history[-1]["loss_bits"] < 17.0
        # the returned parameters are the ones that met the threshold: with
        # dropout off and a full batch, eval reproduces the stop measurement
        # (up to float32 summation order — training batches are permuted)
        bits = eval_bits("vertex", model, pack_dataset(data))
        assert abs(bits - history[-1]["loss_bits"]) < 1e-4

    def test_eval_bits_dropout_off_deterministic(self):
        data = pack_dataset(primitive_dataset(bits=6, count=4))
        m = build_model("vertex", tiny_cfg())
        assert eval_bits("vertex", m, data) == eval_bits("vertex", m, data)


class TestModelIO:
    def test_save_load_roundtrip(self, tmp_path):
        m = build_model("face", tiny_cfg(), seed=3)
        save_model(tmp_path / "f.ckpt", "face", m, {"note": "hi"})
        kind, m2, meta = load_model(tmp_path / "f.ckpt")
        assert kind == "face" and meta["note"] == "hi"
        assert meta["config_hash"] == m.cfg.hash()
        for k in m.store.params:
            assert np.array_equal(m.store[k].data, m2.store[k].data)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            build_model("edge", tiny_cfg())
