import hashlib
import json
from pathlib import Path

import pytest

from meshgen.cli import main


CFG = {
    "corpus": {"classes": ["box", "pyramid"], "examples_per_class": 4,
               "split_fractions": [0.5, 0.25, 0.25], "bits": 6,
               "augment": {"copies_per_mesh": 2}},
    "model": {"embed_dim": 32, "fc_dim": 64, "vertex_layers": 2,
              "face_layers": 2, "heads": 2, "bits": 6, "dropout": 0.1,
              "max_vertices": 100, "max_face_tokens": 400},
    "train": {"steps": 8, "batch_size": 4, "warmup_steps": 4,
              "checkpoint_every": 4, "log_every": 4},
    "sampler": {"seed": 3, "max_vertex_tokens": 301, "max_face_tokens": 401},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(CFG))
    data = root / "data"
    ckpt = root / "ckpt"
    assert main(["--config", str(cfg), "make-data", "--out", str(data)]) == 0
    for kind in ("vertex", "face"):
        assert main(["--config", str(cfg), "train", "--model", kind,
                     "--data", str(data), "--out", str(ckpt), "--quiet"]) == 0
    return {"root": root, "cfg": cfg, "data": data, "ckpt": ckpt}


def test_make_data_layout(workspace):
    assert (workspace["data"] / "manifest.json").exists()
    assert list(workspace["data"].glob("train/*/*.obj"))


def test_train_artifacts(workspace):
    for kind in ("vertex", "face"):
        assert (workspace["ckpt"] / f"{kind}_last.ckpt").exists()
        assert (workspace["ckpt"] / f"{kind}_best.ckpt").exists()
        assert (workspace["ckpt"] / f"{kind}_train_log.jsonl").exists()


def test_sample_writes_objs_and_reports(workspace):
    out = workspace["root"] / "samples"
    rc = main(["--config", str(workspace["cfg"]), "sample",
               "--vertex-ckpt", str(workspace["ckpt"] / "vertex_best.ckpt"),
               "--face-ckpt", str(workspace["ckpt"] / "face_best.ckpt"),
               "--out", str(out), "-n", "3"])
    assert rc == 0
    reports = sorted(out.glob("*.report.json"))
    assert len(reports) == 3
    rep = json.loads(reports[0].read_text())
    assert "truncated_vertices" in rep


def test_eval_report(workspace):
    out = workspace["root"] / "eval"
    rc = main(["--config", str(workspace["cfg"]), "eval",
               "--vertex-ckpt", str(workspace["ckpt"] / "vertex_best.ckpt"),
               "--face-ckpt", str(workspace["ckpt"] / "face_best.ckpt"),
               "--data", str(workspace["data"]), "--split", "test",
               "--out", str(out), "--chamfer-targets", "1",
               "--chamfer-k", "2", "--stats-samples", "2"])
    assert rc == 0
    rep = json.loads((out / "eval_report.json").read_text())
    assert set(rep) >= {"model", "uniform", "config_hash", "chamfer_best_of_k"}
    assert rep["uniform"]["bits_per_vertex_vertices"] > 0
    curve = rep["chamfer_best_of_k"][0]["running_min"]
    assert all(a >= b for a, b in zip(curve, curve[1:]))


def test_inspect_dumps_tokens(workspace, capsys):
    obj = sorted(workspace["data"].glob("test/*/*.obj"))[0]
    rc = main(["inspect", str(obj), "--bits", "6", "--dump-tokens"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    payload = json.loads(lines[-1])
    assert payload["vertex_tokens"][-1] == 0
    assert payload["face_tokens"][-1] == 0


def test_set_overrides_config(workspace, tmp_path):
    out = tmp_path / "d2"
    rc = main(["--config", str(workspace["cfg"]),
               "--set", "corpus.examples_per_class=2",
               "--set", "corpus.augment.copies_per_mesh=1",
               "make-data", "--out", str(out)])
    assert rc == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["spec"]["examples_per_class"] == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["--config", str(tmp_path / "no.json"),
                 "make-data", "--out", str(tmp_path / "x")]) == 2


def test_bad_override_exit_2(workspace, tmp_path):
    assert main(["--config", str(workspace["cfg"]),
                 "--set", "corpus.split_fractions=[0.5,0.5,0.5]",
                 "make-data", "--out", str(tmp_path / "x")]) == 2


def test_missing_data_exit_3(workspace, tmp_path):
    rc = main(["--config", str(workspace["cfg"]), "train", "--model", "vertex",
               "--data", str(tmp_path / "nowhere"),
               "--out", str(tmp_path / "o")])
    assert rc == 3


def test_bits_mismatch_exit_2(workspace, tmp_path):
    cfg2 = dict(CFG)
    cfg2["model"] = dict(CFG["model"], bits=8)
    p = tmp_path / "cfg8.json"
    p.write_text(json.dumps(cfg2))
    rc = main(["--config", str(p), "train", "--model", "vertex",
               "--data", str(workspace["data"]), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_class_flag_requires_conditional_checkpoint(workspace, tmp_path):
    rc = main(["--config", str(workspace["cfg"]), "sample",
               "--vertex-ckpt", str(workspace["ckpt"] / "vertex_best.ckpt"),
               "--face-ckpt", str(workspace["ckpt"] / "face_best.ckpt"),
               "--out", str(tmp_path / "s"), "-n", "1", "--class", "box",
               "--data", str(workspace["data"])])
    assert rc == 2


def test_swapped_checkpoints_exit_2(workspace, tmp_path):
    rc = main(["--config", str(workspace["cfg"]), "sample",
               "--vertex-ckpt", str(workspace["ckpt"] / "face_best.ckpt"),
               "--face-ckpt", str(workspace["ckpt"] / "vertex_best.ckpt"),
               "--out", str(tmp_path / "s"), "-n", "1"])
    assert rc == 2
