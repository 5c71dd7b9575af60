"""Hole closing: small boundary loops are filled by a centroid fan with
orientation matching the surrounding faces."""

from __future__ import annotations

from typing import List

import numpy as np

from ..scene import TexturedMesh
from .adjacency import build_adjacency


def _directed_boundary_edges(mesh: TexturedMesh) -> dict:
    """start vertex -> end vertex for every boundary edge, directed as it
    appears in its single incident face. Vertices with multiple outgoing
    boundary edges (pinched) map to None and their loops are skipped."""
    adj = build_adjacency(mesh)
    boundary = set(map(tuple, adj.edges[adj.boundary_edges]))
    nxt: dict = {}
    for a, b, c in mesh.triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            if (min(u, v), max(u, v)) in boundary:
                if u in nxt:
                    nxt[u] = None
                else:
                    nxt[u] = v
    return {k: v for k, v in nxt.items()}


def close_holes(mesh: TexturedMesh, max_boundary_len: int) -> TexturedMesh:
    """Fill every boundary loop of at most max_boundary_len edges with a fan
    around the loop centroid; longer or pinched loops are left open.

    New faces carry no UVs; on textured meshes the result drops UVs (hole
    closing runs before atlas generation in the pipeline).
    """
    nxt = _directed_boundary_edges(mesh)
    visited = set()
    loops: List[List[int]] = []
    for start in sorted(nxt):
        if start in visited or nxt[start] is None:
            continue
        loop = [start]
        visited.add(start)
        cur = nxt[start]
        ok = True
        while cur is not None and cur != start:
            if cur in visited or cur not in nxt:
                ok = False
                break
            loop.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        if ok and cur == start and len(loop) >= 3:
            loops.append(loop)

    to_close = [lp for lp in loops if len(lp) <= max_boundary_len]
    if not to_close:
        return TexturedMesh(mesh.vertices.copy(), mesh.triangles.copy())

    verts = [mesh.vertices]
    new_faces = []
    next_idx = len(mesh.vertices)
    for loop in to_close:
        centroid = mesh.vertices[loop].mean(axis=0)
        verts.append(centroid[None])
        ci = next_idx
        next_idx += 1
        # boundary edge u->v belongs to the existing face; the patch triangle
        # (v, u, centroid) gives the shared edge the opposite direction
        for i, u in enumerate(loop):
            v = loop[(i + 1) % len(loop)]
            new_faces.append((v, u, ci))

    all_faces = np.concatenate([mesh.triangles,
                                np.array(new_faces, dtype=np.int32)])
    return TexturedMesh(np.concatenate(verts), all_faces)
