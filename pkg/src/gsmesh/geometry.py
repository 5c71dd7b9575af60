"""Procedural geometry builders for the synthetic harness and tests."""

from __future__ import annotations

import numpy as np

from .scene import Camera, TexturedMesh


def make_plane(half: float = 1.0, z: float = 0.0, axis: str = "z",
               subdiv: int = 0) -> TexturedMesh:
    """Square plane of 2 * 4^subdiv triangles; `axis` is the plane normal."""
    verts = np.array([[-half, -half, 0.0], [half, -half, 0.0],
                      [half, half, 0.0], [-half, half, 0.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    for _ in range(subdiv):
        verts, tris = _midpoint_split(verts, tris)
    if axis == "z":
        verts[:, 2] += z
    elif axis == "y":
        verts = verts[:, [0, 2, 1]]
        verts[:, 1] += z
    elif axis == "x":
        verts = verts[:, [2, 0, 1]]
        verts[:, 0] += z
    else:
        raise ValueError(f"axis must be x, y, or z, got {axis!r}")
    return TexturedMesh(verts, tris)


def _midpoint_split(verts: np.ndarray, tris: np.ndarray):
    cache = {}
    verts = list(map(np.asarray, verts))

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = len(verts)
            verts.append(0.5 * (verts[a] + verts[b]))
        return cache[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return np.asarray(verts, dtype=np.float64), np.asarray(out, dtype=np.int32)


def make_grid_plane(nx: int, ny: int, half: float = 1.0, z: float = 0.0) -> TexturedMesh:
    """Regular triangulated grid in the z = const plane, 2 * nx * ny faces."""
    xs = np.linspace(-half, half, nx + 1)
    ys = np.linspace(-half, half, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return TexturedMesh(verts, np.asarray(faces, dtype=np.int32))


def make_icosphere(subdiv: int = 2, radius: float = 1.0,
                   center=(0.0, 0.0, 0.0)) -> TexturedMesh:
    """Subdivided icosahedron: 20 * 4^subdiv outward-wound faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v[0])
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int32)
    for _ in range(subdiv):
        v, f = _midpoint_split(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    v = v * radius + np.asarray(center, dtype=np.float64)
    return TexturedMesh(v, f)


def make_cube(half: float = 1.0, center=(0.0, 0.0, 0.0)) -> TexturedMesh:
    """Axis-aligned cube, 12 outward-wound triangles."""
    c = np.asarray(center, dtype=np.float64)
    s = half
    v = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ]) + c
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # z-
        [4, 5, 6], [4, 6, 7],  # z+
        [0, 1, 5], [0, 5, 4],  # y-
        [2, 3, 7], [2, 7, 6],  # y+
        [1, 2, 6], [1, 6, 5],  # x+
        [3, 0, 4], [3, 4, 7],  # x-
    ], dtype=np.int32)
    return TexturedMesh(v, f)


def make_prism(radius: float = 0.05, height: float = 1.0, sides: int = 6,
               center=(0.0, 0.0, 0.0), segments: int = 6, axis: str = "z",
               caps: bool = True) -> TexturedMesh:
    """Thin prism (a pole). Side dihedrals are 360/sides degrees."""
    c = np.asarray(center, dtype=np.float64)
    ang = 2 * np.pi * np.arange(sides) / sides
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    zs = np.linspace(-height / 2, height / 2, segments + 1)
    verts = [np.column_stack([ring[:, 0], ring[:, 1], np.full(sides, z)]) for z in zs]
    verts = np.concatenate(verts)
    faces = []
    for seg in range(segments):
        for k in range(sides):
            a = seg * sides + k
            b = seg * sides + (k + 1) % sides
            a2 = a + sides
            b2 = b + sides
            faces.append((a, b, b2))
            faces.append((a, b2, a2))
    if caps:
        n = len(verts)
        bot_c, top_c = n, n + 1
        verts = np.concatenate([verts, [[0, 0, zs[0]], [0, 0, zs[-1]]]])
        for k in range(sides):
            faces.append((bot_c, (k + 1) % sides, k))
            faces.append((top_c, segments * sides + k, segments * sides + (k + 1) % sides))
    verts = np.asarray(verts)
    if axis == "x":
        verts = verts[:, [2, 0, 1]]
    elif axis == "y":
        verts = verts[:, [1, 2, 0]]
    return TexturedMesh(verts + c, np.asarray(faces, dtype=np.int32))


def merge_meshes(meshes) -> TexturedMesh:
    """Concatenate geometry (UVs dropped); face order follows input order."""
    verts = []
    tris = []
    off = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += len(m.vertices)
    return TexturedMesh(np.concatenate(verts), np.concatenate(tris))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera matrix, camera z toward target, y down."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    if np.linalg.norm(right) < 1e-9:
        upv = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, upv)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    w2c = np.eye(4)
    w2c[:3, :3] = np.stack([right, down, fwd])
    w2c[:3, 3] = -w2c[:3, :3] @ eye
    return w2c


def camera_ring(n: int, radius: float, height: float, target=(0, 0, 0),
                width: int = 96, height_px: int = 96, f: float | None = None,
                up=(0.0, 0.0, 1.0), near: float = 0.05, far: float = 100.0,
                phase: float = 0.0, height_wobble: float = 0.0):
    """n inward-facing cameras on a circle at z = height around `target`."""
    cams = []
    if f is None:
        f = 0.85 * width
    for k in range(n):
        a = 2 * np.pi * k / n + phase
        dz = height_wobble * np.sin(3 * a)
        eye = np.array([radius * np.cos(a), radius * np.sin(a), height + dz])
        cams.append(Camera(fx=f, fy=f, cx=width / 2, cy=height_px / 2,
                           width=width, height=height_px,
                           world_to_camera=look_at(eye, target, up),
                           near=near, far=far))
    return cams
