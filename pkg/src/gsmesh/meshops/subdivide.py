"""4-to-1 subdivision with least-squares smoothing.

Edge vertices are midpoints; after the split, every interior original
vertex moves halfway toward the least-squares plane of its new 1-ring (the
midpoints of its incident edges). Planar regions are exact fixed points;
boundary vertices stay put. Per-corner UVs interpolate linearly.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..scene import TexturedMesh
from .adjacency import build_adjacency

SMOOTH_FACTOR = 0.5


def _ls_plane_offset(point: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Displacement of `point` onto the least-squares plane of `ring`."""
    if len(ring) < 3:
        return np.zeros(3)
    c = ring.mean(axis=0)
    d = ring - c
    cov = d.T @ d
    w, vecs = np.linalg.eigh(cov)
    # plane is degenerate if the ring is (near) collinear
    if w[1] < 1e-12 * max(w[2], 1e-300):
        return np.zeros(3)
    n = vecs[:, 0]
    return -float((point - c) @ n) * n


def subdivide_smooth(mesh: TexturedMesh, iterations: int = 1
                     ) -> Tuple[TexturedMesh, np.ndarray]:
    """Returns (subdivided mesh, parent face index per output face)."""
    out = mesh.copy()
    parents = np.arange(mesh.n_faces, dtype=np.int64)
    for _ in range(max(iterations, 0)):
        out, step_parents = _subdivide_once(out)
        parents = parents[step_parents]
    return out, parents


def _subdivide_once(mesh: TexturedMesh) -> Tuple[TexturedMesh, np.ndarray]:
    nf = mesh.n_faces
    nv = len(mesh.vertices)
    if nf == 0:
        return mesh.copy(), np.zeros(0, dtype=np.int64)
    adj = build_adjacency(mesh)
    edges = adj.edges
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    mid_index = nv + np.arange(len(edges))

    f = mesh.triangles.astype(np.int64)
    # face_edges slot k is edge (v_k, v_{k+1})
    m01 = mid_index[adj.face_edges[:, 0]]
    m12 = mid_index[adj.face_edges[:, 1]]
    m20 = mid_index[adj.face_edges[:, 2]]
    children = np.stack([
        np.stack([f[:, 0], m01, m20], axis=1),
        np.stack([m01, f[:, 1], m12], axis=1),
        np.stack([m20, m12, f[:, 2]], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ], axis=1).reshape(-1, 3)
    parents = np.repeat(np.arange(nf, dtype=np.int64), 4)

    verts = np.concatenate([mesh.vertices, midpoints])

    # reposition original interior vertices using incident-edge midpoints
    on_boundary = np.zeros(nv, dtype=bool)
    b = adj.boundary_edges
    on_boundary[edges[b].reshape(-1)] = True
    ring_of: list = [[] for _ in range(nv)]
    for e, (a, bb) in enumerate(edges):
        ring_of[a].append(e)
        ring_of[bb].append(e)
    for vtx in range(nv):
        if on_boundary[vtx] or len(ring_of[vtx]) < 3:
            continue
        ring = midpoints[ring_of[vtx]]
        verts[vtx] = mesh.vertices[vtx] + SMOOTH_FACTOR * _ls_plane_offset(mesh.vertices[vtx], ring)

    uvs = texture = None
    if mesh.uvs is not None:
        u = mesh.uvs
        u01 = 0.5 * (u[:, 0] + u[:, 1])
        u12 = 0.5 * (u[:, 1] + u[:, 2])
        u20 = 0.5 * (u[:, 2] + u[:, 0])
        uvs = np.stack([
            np.stack([u[:, 0], u01, u20], axis=1),
            np.stack([u01, u[:, 1], u12], axis=1),
            np.stack([u20, u12, u[:, 2]], axis=1),
            np.stack([u01, u12, u20], axis=1),
        ], axis=1).reshape(-1, 3, 2)
        texture = mesh.texture.copy()

    return TexturedMesh(verts, children.astype(np.int32), uvs, texture), parents
