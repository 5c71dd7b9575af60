"""Geometry kernel: TSDF fusion, marching cubes, decimation, topology
queries, hole closing, subdivision smoothing, UV atlas generation."""

from .adjacency import (
    MeshAdjacency,
    MeshOpsError,
    audit_mesh,
    build_adjacency,
    compact_mesh,
    connected_components,
    dihedral_angles,
    drop_small_components,
)
from .decimate import decimate_qslim
from .filters import filter_large_gaussians
from .holes import close_holes
from .subdivide import subdivide_smooth
from .tsdf import TsdfVolume, extract_mesh, tsdf_fuse
from .uvatlas import build_uv_atlas

__all__ = [
    "MeshAdjacency", "MeshOpsError", "TsdfVolume",
    "audit_mesh", "build_adjacency", "build_uv_atlas", "close_holes",
    "compact_mesh", "connected_components", "decimate_qslim",
    "dihedral_angles", "drop_small_components", "extract_mesh",
    "filter_large_gaussians", "subdivide_smooth", "tsdf_fuse",
]
