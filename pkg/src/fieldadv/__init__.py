"""Adversarial textures for meshes extracted from hash-grid radiance fields."""
from ._kernels import BACKEND
from .attack import AttackResult, clamp_geometry, export_adversarial, run_attack
from .classifiers import ConvClassifier, ShapeDataset, train_classifier, zoo
from .evaluation import EvalReport, asr, beta_study, psnr, ssim, transfer_matrix
from .fields import FieldConfig, GridConfig, RadianceField
from .meshing import TriMesh, colorize, extract_isosurface, mesh_stats, read_obj, write_obj
from .objective import AttackConfig, TransformSpec, ViewSampler, total_objective
from .rasterizer import RenderSettings, rasterize, render
from .reconstruct import MultiViewDataset, load_dataset, train_field

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AttackResult", "clamp_geometry", "export_adversarial", "run_attack", "ConvClassifier",
    "ShapeDataset", "train_classifier", "zoo", "EvalReport", "asr", "beta_study", "psnr", "ssim",
    "transfer_matrix", "FieldConfig", "GridConfig", "RadianceField", "TriMesh", "colorize",
    "extract_isosurface", "mesh_stats", "read_obj", "write_obj", "AttackConfig", "TransformSpec",
    "ViewSampler", "total_objective", "RenderSettings", "rasterize", "render", "MultiViewDataset",
    "load_dataset", "train_field",
]
