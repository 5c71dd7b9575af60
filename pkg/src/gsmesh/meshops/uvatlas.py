"""UV atlas generation: near-planar region growing into charts, per-chart
planar projection, shelf packing with a texel gutter.

Charts are grown by BFS from the largest unassigned face, accepting
neighbors whose normal deviates less than 30 degrees from the seed normal.
Every chart keeps its world-space aspect ratio (one global uniform scale).
"""

from __future__ import annotations

from collections import deque
from typing import List

import numpy as np

from ..scene import TexturedMesh
from .adjacency import MeshOpsError, build_adjacency

CHART_ANGLE_DEG = 30.0
GUTTER_TEXELS = 2.0


def _grow_charts(mesh: TexturedMesh) -> List[np.ndarray]:
    adj = build_adjacency(mesh)
    nf = mesh.n_faces
    normals = mesh.face_normals()
    areas = mesh.face_areas()
    cos_lim = np.cos(np.radians(CHART_ANGLE_DEG))

    neighbors: list = [[] for _ in range(nf)]
    two = adj.edge_n_faces == 2
    for f0, f1 in adj.edge_faces[two]:
        neighbors[f0].append(f1)
        neighbors[f1].append(f0)

    assigned = np.full(nf, -1, dtype=np.int64)
    order = np.lexsort((np.arange(nf), -areas))  # biggest face first
    charts: List[List[int]] = []
    for seed in order:
        if assigned[seed] >= 0:
            continue
        cid = len(charts)
        seed_n = normals[seed]
        chart = [int(seed)]
        assigned[seed] = cid
        queue = deque([int(seed)])
        while queue:
            cur = queue.popleft()
            for nb in sorted(neighbors[cur]):
                if assigned[nb] >= 0:
                    continue
                if float(normals[nb] @ seed_n) >= cos_lim:
                    assigned[nb] = cid
                    chart.append(nb)
                    queue.append(nb)
        charts.append(np.array(sorted(chart), dtype=np.int64))
    return charts


def _flatten_chart(mesh: TexturedMesh, faces: np.ndarray):
    """Project chart corners onto the area-weighted mean plane; returns
    per-corner 2D coords (len(faces), 3, 2) shifted to start at 0."""
    normals = mesh.face_normals(normalized=False)[faces]
    n = normals.sum(axis=0)
    ln = np.linalg.norm(n)
    if ln < 1e-16:
        n = mesh.face_normals()[faces[0]]
    else:
        n = n / ln
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    corners = mesh.vertices[mesh.triangles[faces]]  # (Fc, 3, 3)
    local = np.stack([corners @ e1, corners @ e2], axis=-1)
    local -= local.reshape(-1, 2).min(axis=0)
    return local


def _shelf_pack(sizes: np.ndarray, gutter: float):
    """Shelf packing of (w, h) boxes into the unit square at scale 1; boxes
    are placed in height-descending order with `gutter` spacing. Returns
    per-box origins or None if they do not fit."""
    order = np.lexsort((np.arange(len(sizes)), -sizes[:, 1]))
    pos = np.zeros((len(sizes), 2))
    x = y = gutter
    shelf_h = 0.0
    for i in order:
        w, h = sizes[i]
        if x + w + gutter > 1.0:
            y += shelf_h + gutter
            x = gutter
            shelf_h = 0.0
        if x + w + gutter > 1.0 or y + h + gutter > 1.0:
            return None
        pos[i] = (x, y)
        x += w + gutter
        shelf_h = max(shelf_h, h)
    return pos


def build_uv_atlas(mesh: TexturedMesh, texture_size: int) -> TexturedMesh:
    """Returns the mesh with per-corner UVs and a 0.5-filled texture of the
    requested size. Charts never overlap and keep a 2-texel gutter."""
    if mesh.n_faces == 0:
        raise MeshOpsError("cannot build an atlas for an empty mesh")
    charts = _grow_charts(mesh)
    locals_ = [_flatten_chart(mesh, c) for c in charts]
    sizes = np.array([loc.reshape(-1, 2).max(axis=0) if loc.size else (0, 0)
                      for loc in locals_])
    sizes = np.maximum(sizes, 1e-12)
    gutter = GUTTER_TEXELS / texture_size

    # binary search the largest uniform scale that packs
    hi = (1.0 - 2 * gutter) / sizes.max()
    lo = 0.0
    best = None
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        placed = _shelf_pack(sizes * mid, gutter)
        if placed is not None:
            best = (mid, placed)
            lo = mid
        else:
            hi = mid
    if best is None:
        raise MeshOpsError(
            f"texture_size {texture_size} too small to pack {len(charts)} charts; "
            f"need at least {_required_size(sizes, texture_size)}")
    scale, origins = best

    # refuse atlases where a chart's long side falls under one texel
    long_sides = scale * sizes.max(axis=1)
    if (long_sides * texture_size < 1.0).any():
        raise MeshOpsError(
            f"texture_size {texture_size} too small to pack at minimum resolution; "
            f"need at least {_required_size(sizes, texture_size, scale)}")

    uvs = np.zeros((mesh.n_faces, 3, 2))
    for chart, loc, org in zip(charts, locals_, origins):
        uvs[chart] = org + scale * loc
    # u right, v up: flip the packing's y so v=0 is the bottom row
    uvs[:, :, 1] = 1.0 - uvs[:, :, 1]

    texture = np.full((texture_size, texture_size, 3), 0.5)
    out = TexturedMesh(mesh.vertices.copy(), mesh.triangles.copy(), uvs, texture)
    return out


def _required_size(sizes: np.ndarray, texture_size: int, scale: float | None = None) -> int:
    if scale is None or scale <= 0:
        factor = 4.0
    else:
        factor = 1.0 / min(scale * sizes.max(axis=1).min() * texture_size, 0.5)
    need = int(2 ** np.ceil(np.log2(texture_size * max(factor, 1.1))))
    return max(need, 2 * texture_size)
