"""Command-line surface: make-data, train, sample, eval, inspect.

Configuration comes from one JSON file (sections: corpus, model, train,
sampler) plus ``--set section.key=value`` overrides; flags win.  Exit
codes: 0 success, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .corpus import CorpusSpec, load_manifest, load_split, make_corpus
from .evaluation import best_of_k_chamfer, evaluate, stats_summary, write_stats_csv
from .mesh import MeshError, quantize, normalize
from .model import ModelConfig
from .objio import ObjParseError, load_obj, save_obj, save_sidecar
from .sampling import SamplerConfig, generate_mesh
from .sequences import SequenceError, encode_faces, encode_vertices
from .training import TrainConfig, load_model, train_model


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_run_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = json.loads(p.read_text(encoding="utf-8"))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_value(raw)
    return cfg


def _build(cls, section: dict, label: str):
    try:
        return cls(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {label} config: {e}") from e


def _corpus_spec(cfg: dict) -> CorpusSpec:
    section = dict(cfg.get("corpus", {}))
    if "augment" in section and isinstance(section["augment"], dict):
        section["augment"] = _build(AugmentConfig, section["augment"], "augment")
    return _build(CorpusSpec, section, "corpus")


def cmd_make_data(args) -> int:
    cfg = load_run_config(args.config, args.set)
    spec = _corpus_spec(cfg)
    manifest = make_corpus(spec, args.out)
    total = {s: sum(c.values()) for s, c in manifest["counts"].items()}
    print(f"corpus written to {args.out}")
    print(f"classes: {', '.join(manifest['classes'])}")
    for split, n in total.items():
        print(f"  {split}: {n} examples")
    print(f"dropped by caps/degeneracy: {manifest['dropped']}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    model_cfg = _build(ModelConfig, cfg.get("model", {}), "model")
    train_cfg = _build(TrainConfig, cfg.get("train", {}), "train")
    manifest = load_manifest(args.data)
    bits = manifest["spec"]["bits"]
    if model_cfg.bits != bits:
        raise ConfigError(f"model bits {model_cfg.bits} != corpus bits {bits}")
    if model_cfg.condition_mode == "class" and model_cfg.num_classes is None:
        model_cfg.num_classes = len(manifest["classes"])
    train_set = load_split(args.data, "train", bits)
    val_set = load_split(args.data, "val", bits)
    if not train_set:
        raise DataError("empty training split")
    # reject sequences the model cannot hold before burning any compute
    for q in train_set + val_set:
        if q.num_vertices > model_cfg.max_vertices:
            raise DataError(f"example with {q.num_vertices} vertices exceeds "
                            f"max_vertices={model_cfg.max_vertices}")
    model, history = train_model(args.model, model_cfg, train_set,
                                 val_set or None, train_cfg,
                                 out_dir=args.out, resume=args.resume,
                                 quiet=args.quiet)
    if history:
        print(f"final train bits/vertex: {history[-1]['loss_bits']:.4f} "
              f"acc {history[-1]['acc']:.3f}")
    print(f"checkpoints in {args.out}")
    return 0


def _load_models(vertex_ckpt, face_ckpt):
    kind_v, vm, meta_v = load_model(vertex_ckpt)
    kind_f, fm, meta_f = load_model(face_ckpt)
    if kind_v != "vertex" or kind_f != "face":
        raise ConfigError(f"checkpoint kinds are {kind_v}/{kind_f}, "
                          "expected vertex/face")
    if vm.cfg.bits != fm.cfg.bits:
        raise ConfigError("vertex and face checkpoints disagree on bits")
    return vm, fm


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config, args.set)
    sampler = _build(SamplerConfig, cfg.get("sampler", {}), "sampler")
    vm, fm = _load_models(args.vertex_ckpt, args.face_ckpt)
    class_id = None
    if args.class_name is not None:
        if vm.cfg.condition_mode != "class":
            raise ConfigError("--class requires a class-conditional checkpoint")
        if args.data is None:
            raise ConfigError("--class requires --data to resolve class names")
        classes = load_manifest(args.data)["classes"]
        if args.class_name not in classes:
            raise ConfigError(f"unknown class {args.class_name!r}; "
                              f"trained classes: {classes}")
        class_id = classes.index(args.class_name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = 0
    for i in range(args.n):
        mesh, report = generate_mesh(vm, fm, class_id, sampler, sample_index=i)
        stem = out / f"sample_{i:04d}"
        if mesh is not None:
            save_obj(mesh, stem.with_suffix(".obj"))
            if class_id is not None:
                save_sidecar(stem.with_suffix(".obj"), class_id, args.class_name)
            ok += 1
        (out / f"sample_{i:04d}.report.json").write_text(
            json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{ok}/{args.n} samples completed (others truncated); output in {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config, args.set)
    sampler = _build(SamplerConfig, cfg.get("sampler", {}), "sampler")
    vm, fm = _load_models(args.vertex_ckpt, args.face_ckpt)
    manifest = load_manifest(args.data)
    bits = manifest["spec"]["bits"]
    if vm.cfg.bits != bits:
        raise ConfigError(f"checkpoint bits {vm.cfg.bits} != corpus bits {bits}")
    dataset = load_split(args.data, args.split, bits)
    if not dataset:
        raise DataError(f"empty split {args.split!r}")
    if vm.cfg.condition_mode != "class":
        for q in dataset:
            q.class_id = None
    report = {
        "model": evaluate(dataset, vm, fm, apply_masks=True).to_dict(),
        "uniform": evaluate(dataset, baseline="uniform", apply_masks=True).to_dict(),
        "config_hash": {"vertex": vm.cfg.hash(), "face": fm.cfg.hash()},
        "split": args.split,
        "num_examples": len(dataset),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.chamfer_targets > 0:
        curves = []
        for t, q in enumerate(dataset[:args.chamfer_targets]):
            from .mesh import dequantize
            curves.append(best_of_k_chamfer(
                vm, fm, dequantize(q), args.chamfer_k, sampler,
                class_id=q.class_id, seed=sampler.seed + t))
        report["chamfer_best_of_k"] = curves
    (out / "eval_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.stats_samples > 0:
        from .mesh import dequantize
        samples = []
        for i in range(args.stats_samples):
            mesh, _ = generate_mesh(vm, fm,
                                    dataset[i % len(dataset)].class_id
                                    if vm.cfg.condition_mode == "class" else None,
                                    sampler, sample_index=i)
            if mesh is not None:
                samples.append(mesh)
        if samples:
            summary = stats_summary(samples, [dequantize(q) for q in dataset])
            write_stats_csv(summary, out / "mesh_stats.csv")
    m = report["model"]
    u = report["uniform"]
    print(f"bits/vertex (vertices): model {m['bits_per_vertex_vertices']:.3f} "
          f"masked {m['masked_bits_per_vertex_vertices']:.3f} "
          f"uniform {u['bits_per_vertex_vertices']:.3f} "
          f"valid-uniform {u['masked_bits_per_vertex_vertices']:.3f}")
    print(f"bits/vertex (faces):    model {m['bits_per_vertex_faces']:.3f} "
          f"masked {m['masked_bits_per_vertex_faces']:.3f} "
          f"uniform {u['bits_per_vertex_faces']:.3f} "
          f"valid-uniform {u['masked_bits_per_vertex_faces']:.3f}")
    print(f"accuracy: vertices {m['accuracy_vertices']:.3f} "
          f"faces {m['accuracy_faces']:.3f}")
    print(f"report written to {out / 'eval_report.json'}")
    return 0


def cmd_inspect(args) -> int:
    mesh = load_obj(args.obj)
    q = quantize(normalize(mesh), args.bits)
    print(f"{args.obj}: {q.num_vertices} vertices, {len(q.faces)} faces "
          f"at {args.bits} bits")
    if args.dump_tokens:
        payload = {
            "vertex_tokens": encode_vertices(q),
            "face_tokens": encode_faces(q),
            "n_vertices": q.num_vertices,
        }
        print(json.dumps(payload))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="meshgen",
        description="n-gon mesh generation: corpus synthesis, training, "
                    "sampling, evaluation.")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. model.bits=6")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (current implementation is serial)")
    p.add_argument("--deterministic", action="store_true",
                   help="force serial bit-stable mode")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-data", help="generate the synthetic corpus")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_make_data)

    s = sub.add_parser("train", help="train the vertex or face model")
    s.add_argument("--model", choices=("vertex", "face"), required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate meshes from checkpoints")
    s.add_argument("--vertex-ckpt", required=True)
    s.add_argument("--face-ckpt", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("-n", type=int, default=10)
    s.add_argument("--class", dest="class_name")
    s.add_argument("--data", help="corpus dir, needed to resolve --class names")
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("eval", help="evaluate checkpoints on a split")
    s.add_argument("--vertex-ckpt", required=True)
    s.add_argument("--face-ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--out", required=True)
    s.add_argument("--chamfer-targets", type=int, default=1)
    s.add_argument("--chamfer-k", type=int, default=10)
    s.add_argument("--stats-samples", type=int, default=0)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("inspect", help="dump tokens for one OBJ file")
    s.add_argument("obj")
    s.add_argument("--bits", type=int, default=8)
    s.add_argument("--dump-tokens", action="store_true")
    s.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, MeshError, ObjParseError, SequenceError,
            FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
