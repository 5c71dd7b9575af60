"""Quadric error edge-collapse simplification (Garland-Heckbert).

Plane quadrics are area-weighted; boundary edges contribute strongly
weighted perpendicular constraint quadrics so open outlines keep their
shape. Collapse placement solves the 3x3 quadric system and falls back to
the edge midpoint when it is ill-conditioned. Candidates are processed in
(error, edge id) order; collapses that would flip a surviving face normal,
create a degenerate face, or break the link condition are rejected.
"""

from __future__ import annotations

import heapq
from typing import Dict, Set, Tuple

import numpy as np

from ..scene import TexturedMesh
from .adjacency import MeshOpsError

BOUNDARY_WEIGHT = 1e3
COND_LIMIT = 1e8


def _plane_quadric(n: np.ndarray, d: float, w: float) -> np.ndarray:
    p = np.array([n[0], n[1], n[2], d])
    return w * np.outer(p, p)


def _optimal_placement(q: np.ndarray, va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    A = q[:3, :3]
    b = -q[:3, 3]
    try:
        if np.linalg.cond(A) < COND_LIMIT:
            return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pass
    return 0.5 * (va + vb)


def _error(q: np.ndarray, v: np.ndarray) -> float:
    h = np.array([v[0], v[1], v[2], 1.0])
    return max(float(h @ q @ h), 0.0)


class _Collapser:
    def __init__(self, mesh: TexturedMesh):
        self.v = mesh.vertices.copy()
        self.faces = [tuple(int(x) for x in t) for t in mesh.triangles]
        self.alive_face = [True] * len(self.faces)
        self.alive_vert = np.ones(len(self.v), dtype=bool)
        self.vert_faces: list[Set[int]] = [set() for _ in range(len(self.v))]
        for fi, (a, b, c) in enumerate(self.faces):
            self.vert_faces[a].add(fi)
            self.vert_faces[b].add(fi)
            self.vert_faces[c].add(fi)
        self.n_alive = len(self.faces)
        self.quadrics = self._initial_quadrics()
        self.version = np.zeros(len(self.v), dtype=np.int64)
        self.heap: list = []
        for e in self._all_edges():
            self._push(e)

    def _face_plane(self, fi: int):
        a, b, c = self.faces[fi]
        n = np.cross(self.v[b] - self.v[a], self.v[c] - self.v[a])
        area2 = np.linalg.norm(n)
        if area2 < 1e-16:
            return None
        n = n / area2
        return n, -float(n @ self.v[a]), 0.5 * area2

    def _initial_quadrics(self):
        qs = [np.zeros((4, 4)) for _ in range(len(self.v))]
        edge_count: Dict[Tuple[int, int], int] = {}
        for fi, (a, b, c) in enumerate(self.faces):
            plane = self._face_plane(fi)
            if plane is None:
                continue
            n, d, area = plane
            k = _plane_quadric(n, d, area)
            qs[a] += k
            qs[b] += k
            qs[c] += k
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        # boundary constraints: plane through the edge, perpendicular to the face
        for fi, (a, b, c) in enumerate(self.faces):
            plane = self._face_plane(fi)
            if plane is None:
                continue
            n, _, _ = plane
            for u, w in ((a, b), (b, c), (c, a)):
                if edge_count[(min(u, w), max(u, w))] != 1:
                    continue
                edge = self.v[w] - self.v[u]
                nc = np.cross(edge, n)
                ln = np.linalg.norm(nc)
                if ln < 1e-16:
                    continue
                nc /= ln
                k = _plane_quadric(nc, -float(nc @ self.v[u]),
                                   BOUNDARY_WEIGHT * float(edge @ edge))
                qs[u] += k
                qs[w] += k
        return qs

    def _all_edges(self):
        seen = set()
        for fi, (a, b, c) in enumerate(self.faces):
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                if key not in seen:
                    seen.add(key)
                    yield key
        return

    def _push(self, edge: Tuple[int, int]):
        a, b = edge
        q = self.quadrics[a] + self.quadrics[b]
        pos = _optimal_placement(q, self.v[a], self.v[b])
        err = _error(q, pos)
        heapq.heappush(self.heap, (err, a, b, self.version[a], self.version[b], pos))

    def _neighbors(self, a: int) -> Set[int]:
        out = set()
        for fi in self.vert_faces[a]:
            out.update(self.faces[fi])
        out.discard(a)
        return out

    def _edge_faces(self, a: int, b: int) -> Set[int]:
        return self.vert_faces[a] & self.vert_faces[b]

    def _collapse_ok(self, a: int, b: int, pos: np.ndarray) -> bool:
        shared_faces = self._edge_faces(a, b)
        if not shared_faces or len(shared_faces) > 2:
            return False  # stale edge or non-manifold fan
        # link condition: common neighbors must be exactly the shared faces'
        # opposite vertices
        opposite = set()
        for fi in shared_faces:
            for vtx in self.faces[fi]:
                if vtx not in (a, b):
                    opposite.add(vtx)
        if self._neighbors(a) & self._neighbors(b) != opposite:
            return False
        # no surviving face may flip or collapse
        for vtx in (a, b):
            for fi in self.vert_faces[vtx]:
                if fi in shared_faces:
                    continue
                tri = self.faces[fi]
                old = [self.v[i] for i in tri]
                new = [pos if i in (a, b) else self.v[i] for i in tri]
                n_old = np.cross(old[1] - old[0], old[2] - old[0])
                n_new = np.cross(new[1] - new[0], new[2] - new[0])
                nn = np.linalg.norm(n_new)
                if nn < 1e-16:
                    return False
                if float(n_old @ n_new) <= 0.0:
                    return False
        return True

    def run(self, target_faces: int) -> None:
        while self.n_alive > target_faces and self.heap:
            err, a, b, va, vb, pos = heapq.heappop(self.heap)
            if not (self.alive_vert[a] and self.alive_vert[b]):
                continue
            if self.version[a] != va or self.version[b] != vb:
                continue
            if not self._collapse_ok(a, b, pos):
                continue
            dead = self._edge_faces(a, b)
            if self.n_alive - len(dead) < target_faces:
                # collapsing would overshoot; try other candidates
                continue
            # merge b into a at the optimal position
            self.v[a] = pos
            self.quadrics[a] = self.quadrics[a] + self.quadrics[b]
            self.alive_vert[b] = False
            for fi in dead:
                self.alive_face[fi] = False
                for vtx in self.faces[fi]:
                    self.vert_faces[vtx].discard(fi)
                self.n_alive -= 1
            for fi in list(self.vert_faces[b]):
                tri = self.faces[fi]
                self.faces[fi] = tuple(a if x == b else x for x in tri)
                self.vert_faces[b].discard(fi)
                self.vert_faces[a].add(fi)
            # only a's quadric and position changed: refresh its edges;
            # entries mentioning b die via alive_vert
            self.version[a] += 1
            self.version[b] += 1
            for nb in sorted(self._neighbors(a)):
                self._push((min(a, nb), max(a, nb)))


def decimate_qslim(mesh: TexturedMesh, target_faces: int):
    """Collapse edges by ascending quadric error until the face count
    reaches target_faces. Returns (mesh, kept original face indices); UVs
    and texture are dropped (decimation runs before atlas generation)."""
    if target_faces < 4:
        raise MeshOpsError(f"target_faces must be >= 4, got {target_faces}")
    if mesh.n_faces <= target_faces:
        out = TexturedMesh(mesh.vertices.copy(), mesh.triangles.copy())
        return out, np.arange(mesh.n_faces)

    c = _Collapser(mesh)
    c.run(target_faces)

    kept = np.nonzero(c.alive_face)[0]
    tris = np.array([c.faces[i] for i in kept], dtype=np.int64)
    used = np.zeros(len(c.v), dtype=bool)
    used[tris.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    out = TexturedMesh(c.v[used], remap[tris].astype(np.int32))
    return out, kept
