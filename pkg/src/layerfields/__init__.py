"""Layered radiance manifolds: train, export, and play back dynamic scenes
as a small stack of textured meshes.

A single smooth scalar field carves the scene into nested manifold layers;
a texture field paints them with per-frame RGBA atlases.  The exported
asset (meshes + atlases) renders in any classical rasterization pipeline.
"""

from .appearance import TextureField, interpolate_codes, texture_eval
from .datasets import MultiViewDataset, generate_synthetic, load_dataset
from .errors import (ConfigError, DataError, DegeneratePointError,
                     ExportError, LayerFieldsError, NumericalError,
                     OutOfChartError)
from .exporter import (ExportConfig, LayeredMeshAsset, export_asset,
                       read_asset, write_asset)
from .geometry import Camera, Ray, UvMapper, uv_project, uv_unproject
from .manifold import (IntersectionSample, ManifoldField, TraceConfig,
                       eval_field, init_sphere_field, intersect,
                       intersect_batch)
from .rastercomp import QualityReport, psnr, rasterize_layers, ssim
from .trainer import (TrainConfig, desk_config, evaluate, load_checkpoint,
                      train)
from .volren import composite, loss_batch, render_image, render_rays

__all__ = [
    "Camera", "ConfigError", "DataError", "DegeneratePointError",
    "ExportConfig", "ExportError", "IntersectionSample", "LayerFieldsError",
    "LayeredMeshAsset", "ManifoldField", "MultiViewDataset",
    "NumericalError", "OutOfChartError", "QualityReport", "Ray",
    "TextureField", "TraceConfig", "TrainConfig", "UvMapper", "composite",
    "desk_config", "eval_field", "evaluate", "export_asset",
    "generate_synthetic", "init_sphere_field", "interpolate_codes",
    "intersect", "intersect_batch", "load_checkpoint", "load_dataset",
    "loss_batch", "psnr", "rasterize_layers", "read_asset", "render_image",
    "render_rays", "ssim", "texture_eval", "train", "uv_project",
    "uv_unproject", "write_asset",
]

__version__ = "0.1.0"
