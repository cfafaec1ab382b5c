"""Autoregressive generation of n-gon meshes.

Two-stage pipeline: a vertex model emits quantized coordinate tokens, a
face model emits pointers into the sampled vertex list.  Supporting
pieces: canonical mesh preprocessing, token codecs with validity masks,
a small numpy autodiff engine, synthetic corpus tooling, constrained
sampling, and evaluation metrics.
"""

from .mesh import (Mesh, MeshError, QuantizedMesh, QuantizeReport,
                   canonical_order, dequantize, normalize, quantize)
from .objio import ObjParseError, load_obj, save_obj
from .sequences import (FACE_INDEX_OFFSET, FACE_NEW, FACE_STOP, VERTEX_STOP,
                        FaceMaskState, SequenceError, VertexMaskState,
                        decode_faces, decode_vertices, encode_faces,
                        encode_vertices, face_mask, vertex_mask)
from .model import FaceModel, ModelConfig, VertexModel
from .augment import AugmentConfig, augment, piecewise_warp, planar_decimate
from .primitives import DEFAULT_CLASSES, make_primitive
from .corpus import CorpusSpec, load_manifest, load_split, make_corpus
from .sampling import SamplerConfig, generate_mesh, nucleus_filter, sample_faces, sample_vertices
from .evaluation import (EvalReport, best_of_k_chamfer, chamfer, evaluate,
                         mesh_statistics, sample_surface_points, stats_summary)
from .training import TrainConfig, build_model, load_model, save_model, train_model

__version__ = "0.1.0"

__all__ = [
    "Mesh", "MeshError", "QuantizedMesh", "QuantizeReport",
    "canonical_order", "dequantize", "normalize", "quantize",
    "ObjParseError", "load_obj", "save_obj",
    "FACE_INDEX_OFFSET", "FACE_NEW", "FACE_STOP", "VERTEX_STOP",
    "FaceMaskState", "SequenceError", "VertexMaskState",
    "decode_faces", "decode_vertices", "encode_faces", "encode_vertices",
    "face_mask", "vertex_mask",
    "FaceModel", "ModelConfig", "VertexModel",
    "AugmentConfig", "augment", "piecewise_warp", "planar_decimate",
    "DEFAULT_CLASSES", "make_primitive",
    "CorpusSpec", "load_manifest", "load_split", "make_corpus",
    "SamplerConfig", "generate_mesh", "nucleus_filter",
    "sample_faces", "sample_vertices",
    "EvalReport", "best_of_k_chamfer", "chamfer", "evaluate",
    "mesh_statistics", "sample_surface_points", "stats_summary",
    "TrainConfig", "build_model", "load_model", "save_model", "train_model",
]
