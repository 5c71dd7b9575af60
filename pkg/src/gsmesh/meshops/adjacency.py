"""Edge/face adjacency queries: dihedral angles, connected components,
component filtering, plus the shared compaction helper used by every
topology-editing pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from ..scene import SceneError, TexturedMesh


class MeshOpsError(ValueError):
    pass


@dataclass
class MeshAdjacency:
    """edges            (E, 2) sorted vertex pairs
    edge_faces          (E, 2) incident faces, -1 padding for boundary edges
    edge_n_faces        (E,) true incidence count (>2 marks non-manifold)
    face_edges          (F, 3) edge index per face corner-opposite slot
    non_manifold_edges  (E,) bool
    """

    edges: np.ndarray
    edge_faces: np.ndarray
    edge_n_faces: np.ndarray
    face_edges: np.ndarray
    non_manifold_edges: np.ndarray

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_n_faces == 1


def build_adjacency(mesh: TexturedMesh) -> MeshAdjacency:
    f = mesh.triangles.astype(np.int64)
    nf = len(f)
    if nf == 0:
        z = np.zeros
        return MeshAdjacency(z((0, 2), dtype=np.int64), z((0, 2), dtype=np.int64),
                             z(0, dtype=np.int64), z((0, 3), dtype=np.int64),
                             z(0, dtype=bool))
    raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    raw.sort(axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    ne = len(edges)
    face_of = np.tile(np.arange(nf), 3)

    counts = np.bincount(inverse, minlength=ne)
    edge_faces = np.full((ne, 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    sorted_edges = inverse[order]
    sorted_faces = face_of[order]
    starts = np.searchsorted(sorted_edges, np.arange(ne))
    for e in range(ne):
        s = starts[e]
        c = counts[e]
        edge_faces[e, 0] = sorted_faces[s]
        if c >= 2:
            edge_faces[e, 1] = sorted_faces[s + 1]

    face_edges = inverse.reshape(3, nf).T  # slot k = edge (v_k, v_{k+1})
    return MeshAdjacency(edges, edge_faces, counts, face_edges, counts > 2)


def dihedral_angles(mesh: TexturedMesh, adj: MeshAdjacency | None = None) -> np.ndarray:
    """Per-edge angle in degrees between oriented face normals; 0 means
    coplanar. Boundary and non-manifold edges come back NaN."""
    if adj is None:
        adj = build_adjacency(mesh)
    normals = mesh.face_normals()
    out = np.full(len(adj.edges), np.nan)
    two = adj.edge_n_faces == 2
    if two.any():
        f0 = adj.edge_faces[two, 0]
        f1 = adj.edge_faces[two, 1]
        d = np.clip(np.einsum("ij,ij->i", normals[f0], normals[f1]), -1.0, 1.0)
        out[two] = np.degrees(np.arccos(d))
    return out


def connected_components(mesh: TexturedMesh, adj: MeshAdjacency | None = None):
    """(component id per face, component sizes); faces connect via shared
    edges (including non-manifold ones)."""
    if adj is None:
        adj = build_adjacency(mesh)
    nf = mesh.n_faces
    if nf == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    share = adj.edge_n_faces >= 2
    rows = adj.edge_faces[share, 0]
    cols = adj.edge_faces[share, 1]
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nf, nf))
    n, labels = _cc(g, directed=False)
    sizes = np.bincount(labels, minlength=n)
    return labels.astype(np.int64), sizes.astype(np.int64)


def compact_mesh(mesh: TexturedMesh, face_mask: np.ndarray) -> Tuple[TexturedMesh, np.ndarray]:
    """Keep masked faces, drop now-unreferenced vertices.

    Returns (new mesh, kept original face indices)."""
    kept_faces = np.nonzero(face_mask)[0]
    tris = mesh.triangles[kept_faces]
    used = np.zeros(len(mesh.vertices), dtype=bool)
    used[tris.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    new_tris = remap[tris].astype(np.int32)
    uvs = mesh.uvs[kept_faces] if mesh.uvs is not None else None
    out = TexturedMesh(mesh.vertices[used], new_tris, uvs,
                       None if uvs is None else mesh.texture)
    return out, kept_faces


def drop_small_components(mesh: TexturedMesh, alpha_group: int):
    """Remove every edge-connected component with fewer than alpha_group
    triangles. Returns (mesh, kept original face indices)."""
    labels, sizes = connected_components(mesh)
    keep = sizes[labels] >= alpha_group if len(labels) else np.zeros(0, dtype=bool)
    return compact_mesh(mesh, keep)


def audit_mesh(mesh: TexturedMesh) -> None:
    try:
        mesh.audit()
    except SceneError as e:
        raise MeshOpsError(f"mesh audit failed: {e}") from e
