"""Mesh pruning: pixel-to-triangle voting from normal-map total variation,
dihedral-angle and area-percentile masks, and the full cleanup pipeline
(decimate, mask, drop islands, close holes, smooth, atlas, texture init).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .config import TrainConfig
from .meshops import (
    MeshOpsError,
    build_adjacency,
    build_uv_atlas,
    close_holes,
    compact_mesh,
    decimate_qslim,
    dihedral_angles,
    drop_small_components,
    subdivide_smooth,
)
from .meshraster import init_texture, rasterize_fragments
from .scene import Camera, NormalMap, TexturedMesh


@dataclass
class PruneMasks:
    """Per-triangle removal votes from the three signals and their
    combination (True = remove)."""

    normal: np.ndarray
    angle: np.ndarray
    area: np.ndarray
    combined: np.ndarray


def normal_total_variation(nm: NormalMap) -> np.ndarray:
    """L1 total variation of the normal image over valid 4-neighbors;
    zero at invalid pixels."""
    n = nm.normals
    valid = nm.valid
    tv = np.zeros(valid.shape)
    shifts = (((1, 0), (slice(1, None), slice(None)), (slice(None, -1), slice(None))),
              ((-1, 0), (slice(None, -1), slice(None)), (slice(1, None), slice(None))),
              ((0, 1), (slice(None), slice(1, None)), (slice(None), slice(None, -1))),
              ((0, -1), (slice(None), slice(None, -1)), (slice(None), slice(1, None))))
    for _, dst, src in shifts:
        both = valid[dst] & valid[src]
        diff = np.abs(n[dst] - n[src]).sum(axis=-1)
        tv[dst] += np.where(both, diff, 0.0)
    tv[~valid] = 0.0
    return tv


def mark_normal_prune(mesh: TexturedMesh, cameras: Sequence[Camera],
                      normal_maps: Sequence[NormalMap], alpha_normal: float,
                      fragments=None) -> np.ndarray:
    """Mark triangles voted by high-TV pixels.

    Per view, mesh-covered pixels whose TV exceeds the (100 - alpha)th
    percentile of TV over covered pixels vote to remove their mapped
    triangle; one vote in one view suffices. The strict inequality keeps
    zero-variation regions unmarked even when they dominate the percentile.
    """
    if len(cameras) != len(normal_maps):
        raise ValueError(f"{len(cameras)} cameras but {len(normal_maps)} normal maps")
    mask = np.zeros(mesh.n_faces, dtype=bool)
    if alpha_normal <= 0:
        return mask
    for vi, (cam, nm) in enumerate(zip(cameras, normal_maps)):
        frags = fragments[vi] if fragments is not None else rasterize_fragments(mesh, cam)
        covered = frags.valid & nm.valid
        if not covered.any():
            continue
        tv = normal_total_variation(nm)
        vals = tv[covered]
        thresh = np.percentile(vals, 100.0 - alpha_normal)
        voters = covered & (tv > thresh)
        mask[np.unique(frags.triangle_id[voters])] = True
    return mask


def mark_angle_prune(mesh: TexturedMesh, threshold_deg: float = 45.0,
                     adj=None) -> np.ndarray:
    """Mark every triangle with an incident dihedral angle above threshold."""
    if adj is None:
        adj = build_adjacency(mesh)
    ang = dihedral_angles(mesh, adj)
    mask = np.zeros(mesh.n_faces, dtype=bool)
    sharp = np.nonzero(np.isfinite(ang) & (ang > threshold_deg))[0]
    for e in sharp:
        mask[adj.edge_faces[e, 0]] = True
        mask[adj.edge_faces[e, 1]] = True
    return mask


def area_percentile_mask(mesh: TexturedMesh, alpha_area: float) -> np.ndarray:
    """Mark the floor(alpha/100 * F) smallest triangles, ties broken by
    ascending index."""
    f = mesh.n_faces
    k = int(np.floor(alpha_area / 100.0 * f))
    mask = np.zeros(f, dtype=bool)
    if k > 0:
        order = np.argsort(mesh.face_areas(), kind="stable")
        mask[order[:k]] = True
    return mask


def combine_masks(normal: np.ndarray, angle: np.ndarray, area: np.ndarray,
                  mode: str = "union") -> PruneMasks:
    if mode == "union":
        combined = normal | angle | area
    elif mode == "intersection":
        combined = normal & angle & area
    else:
        raise ValueError(f"unknown mask_combine mode {mode!r}")
    return PruneMasks(normal, angle, area, combined)


@dataclass
class PruneReport:
    stages: List[dict]
    face_parents: np.ndarray  # output face -> raw-mesh face index, -1 = filler

    def to_json_dict(self) -> dict:
        return {"stages": self.stages}


def prune_pipeline(raw_mesh: TexturedMesh, cameras: Sequence[Camera],
                   normal_maps: Sequence[NormalMap],
                   images: Optional[Sequence[np.ndarray]],
                   config: TrainConfig,
                   texture_init_mode: str = "optimized"):
    """Stage-1 pipeline: decimate, mask, remove, drop islands, close holes,
    smooth, build the UV atlas, and initialize the texture.

    Returns (mesh, PruneReport). The report tracks triangle counts per stage
    and a parent map from output faces back to raw-mesh faces.
    """
    stages: List[dict] = []
    parents = np.arange(raw_mesh.n_faces, dtype=np.int64)

    def log(name, mesh_now, extra=None):
        entry = {"stage": name, "faces": int(mesh_now.n_faces)}
        if extra:
            entry.update(extra)
        stages.append(entry)

    log("input", raw_mesh)

    mesh, kept = decimate_qslim(raw_mesh, config.decim_target_faces)
    parents = parents[kept]
    mesh.audit()
    log("decimate", mesh)

    m_n = mark_normal_prune(mesh, cameras, normal_maps, config.alpha_normal)
    m_a = mark_angle_prune(mesh, config.angle_deg)
    m_s = area_percentile_mask(mesh, config.alpha_area)
    masks = combine_masks(m_n, m_a, m_s, config.mask_combine)
    mesh, kept = compact_mesh(mesh, ~masks.combined)
    parents = parents[kept]
    log("mask_prune", mesh, {
        "normal_marked": int(masks.normal.sum()),
        "angle_marked": int(masks.angle.sum()),
        "area_marked": int(masks.area.sum()),
        "removed": int(masks.combined.sum()),
    })
    if mesh.n_faces == 0:
        raise MeshOpsError(
            "pruning removed every triangle; relax alpha_normal/alpha_area "
            "or raise the dihedral threshold")

    mesh, kept = drop_small_components(mesh, config.alpha_group)
    parents = parents[kept]
    log("drop_components", mesh)
    if mesh.n_faces == 0:
        raise MeshOpsError(
            "component filtering removed every triangle; lower alpha_group")

    before = mesh.n_faces
    mesh = close_holes(mesh, config.max_hole_boundary)
    parents = np.concatenate([parents,
                              np.full(mesh.n_faces - before, -1, dtype=np.int64)])
    mesh.audit()
    log("close_holes", mesh, {"added": int(mesh.n_faces - before)})

    mesh, sub_parents = subdivide_smooth(mesh, config.subdiv_iterations)
    parents = parents[sub_parents]
    mesh.audit()
    log("subdivide", mesh)

    mesh = build_uv_atlas(mesh, config.texture_size)
    log("uv_atlas", mesh)

    if images is not None:
        mesh = init_texture(mesh, list(images), list(cameras),
                            iters=config.tex_init_iters, mode=texture_init_mode,
                            lr=config.tex_init_lr)
    log("texture_init", mesh, {"mode": texture_init_mode if images is not None else "skipped"})

    return mesh, PruneReport(stages=stages, face_parents=parents)
