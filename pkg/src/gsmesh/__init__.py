"""Hybrid 3D Gaussian splatting + textured mesh scene toolkit."""

from .config import TrainConfig
from .scene import (
    Camera,
    GaussianSet,
    NormalMap,
    RenderOutputs,
    SceneError,
    TexturedMesh,
    camera_extent,
)

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "GaussianSet",
    "NormalMap",
    "RenderOutputs",
    "SceneError",
    "TexturedMesh",
    "TrainConfig",
    "camera_extent",
    "__version__",
]
