"""Weighted TSDF fusion of depth maps and surface extraction.

Node-centered grid: sample (i, j, k) sits at origin + (i, j, k) * voxel.
Truncation is 5 voxels; each valid observation contributes weight 1, so
fusion is an order-invariant running average.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.ndimage import minimum_filter
from skimage import measure

from ..scene import Camera, TexturedMesh
from .adjacency import MeshOpsError

TRUNC_VOXELS = 5.0


@dataclass
class TsdfVolume:
    origin: np.ndarray      # (3,)
    voxel_size: float
    dims: tuple             # (nx, ny, nz)
    tsdf: np.ndarray        # (nx, ny, nz) in [-1, 1]
    weights: np.ndarray     # (nx, ny, nz) >= 0; 0 means unobserved

    @property
    def truncation(self) -> float:
        return TRUNC_VOXELS * self.voxel_size


def _unproject_valid(depth: np.ndarray, cam: Camera, max_depth: float) -> np.ndarray:
    valid = np.isfinite(depth) & (depth > 0) & (depth <= max_depth)
    if not valid.any():
        return np.zeros((0, 3))
    iy, ix = np.nonzero(valid)
    z = depth[iy, ix]
    x = (ix + 0.5 - cam.cx) / cam.fx * z
    y = (iy + 0.5 - cam.cy) / cam.fy * z
    pts_cam = np.stack([x, y, z], axis=1)
    return (pts_cam - cam.translation) @ cam.rotation


def tsdf_fuse(depths: Sequence[np.ndarray], cameras: Sequence[Camera],
              voxel_size: float, max_depth: float = 100.0) -> TsdfVolume:
    """Fuse per-camera depth maps (NaN/inf = invalid) into a TSDF volume.

    Volume bounds are the AABB of all valid unprojected depth points padded
    by the truncation band.
    """
    if len(depths) != len(cameras):
        raise MeshOpsError("depth/camera count mismatch")
    if voxel_size <= 0:
        raise MeshOpsError("voxel_size must be positive")

    pts = [_unproject_valid(d, c, max_depth) for d, c in zip(depths, cameras)]
    all_pts = np.concatenate(pts) if pts else np.zeros((0, 3))
    if len(all_pts) == 0:
        raise MeshOpsError("no valid depth observations; empty volume")

    trunc = TRUNC_VOXELS * voxel_size
    lo = all_pts.min(axis=0) - trunc
    hi = all_pts.max(axis=0) + trunc
    dims = tuple(int(np.ceil((hi[k] - lo[k]) / voxel_size)) + 1 for k in range(3))
    if np.prod(dims) > 4e8:
        raise MeshOpsError(f"volume of {dims} voxels is unreasonably large; "
                           "increase voxel_size or lower max_depth")

    ii, jj, kk = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    nodes = lo + np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) * voxel_size

    acc = np.zeros(len(nodes))
    wsum = np.zeros(len(nodes))
    for depth, cam in zip(depths, cameras):
        p_cam = nodes @ cam.rotation.T + cam.translation
        z = p_cam[:, 2]
        ok = z > cam.near
        u = np.full(len(nodes), -1.0)
        v = np.full(len(nodes), -1.0)
        u[ok] = cam.fx * p_cam[ok, 0] / z[ok] + cam.cx
        v[ok] = cam.fy * p_cam[ok, 1] / z[ok] + cam.cy
        ix = np.floor(u).astype(np.int64)
        iy = np.floor(v).astype(np.int64)
        ok &= (ix >= 0) & (ix < cam.width) & (iy >= 0) & (iy < cam.height)
        d = np.zeros(len(nodes))
        d[ok] = depth[iy[ok], ix[ok]]
        ok &= np.isfinite(d) & (d > 0) & (d <= max_depth)
        sdf = d - z
        ok &= sdf >= -trunc
        obs = np.clip(sdf[ok] / trunc, -1.0, 1.0)
        idx = np.nonzero(ok)[0]
        acc[idx] += obs
        wsum[idx] += 1.0

    tsdf = np.where(wsum > 0, acc / np.maximum(wsum, 1.0), 1.0)
    return TsdfVolume(origin=lo, voxel_size=voxel_size, dims=dims,
                      tsdf=tsdf.reshape(dims), weights=wsum.reshape(dims))


def extract_mesh(vol: TsdfVolume) -> TexturedMesh:
    """Zero-level surface via marching cubes over observed voxels, with
    vertices welded at 1e-6 * voxel tolerance."""
    observed = vol.weights > 0
    if not observed.any():
        raise MeshOpsError("volume has no observed voxels")
    # the marcher visits any cube touching a True voxel, so erode by a full
    # 3x3x3 window: cubes with unobserved corners would otherwise produce
    # phantom walls against the +1 default of unobserved space
    safe = minimum_filter(observed.astype(np.uint8), size=3,
                          mode="constant", cval=0) > 0
    inside = vol.tsdf < 0
    if not (safe & inside).any() or not (safe & ~inside).any():
        raise MeshOpsError("no zero crossing in the observed volume")
    # tsdf is positive in observed free space: "descent" orients the face
    # winding so normals point out of the surface toward the cameras
    verts, faces, _, _ = measure.marching_cubes(
        vol.tsdf, level=0.0, spacing=(vol.voxel_size,) * 3,
        mask=safe, gradient_direction="descent")
    verts = verts + vol.origin

    # weld coincident vertices
    tol = 1e-6 * vol.voxel_size
    key = np.round(verts / tol).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    verts = verts[first]
    faces = inv[faces]

    # drop degenerate faces
    good = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2]))
    v0 = verts[faces[:, 0]]
    areas = 0.5 * np.linalg.norm(
        np.cross(verts[faces[:, 1]] - v0, verts[faces[:, 2]] - v0), axis=1)
    good &= areas > 1e-14
    return TexturedMesh(verts, faces[good].astype(np.int32))
