"""Differentiable tile-based Gaussian splatting."""

from .project import (
    ALPHA_CLAMP,
    COV_FLOOR,
    EARLY_STOP_T,
    SH_C0,
    SH_C1,
    SIGMA_SKIP,
    SUPPORT_MAHAL2,
    ProjectedGaussians,
    project,
)
from .render import (
    GaussianGrads,
    MeshLayer,
    RenderCtx,
    rasterize_backward,
    rasterize_forward,
    render,
    render_depth,
)
from .tiles import TILE_PX, TileBins, build_tiles

__all__ = [
    "ALPHA_CLAMP", "COV_FLOOR", "EARLY_STOP_T", "SIGMA_SKIP", "SUPPORT_MAHAL2",
    "SH_C0", "SH_C1", "TILE_PX",
    "ProjectedGaussians", "TileBins", "MeshLayer", "RenderCtx", "GaussianGrads",
    "project", "build_tiles", "rasterize_forward", "rasterize_backward",
    "render", "render_depth",
]
