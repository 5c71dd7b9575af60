"""Synthetic scenes with exact ground truth: geometry with region labels,
procedurally textured via the UV atlas, rendered to images/depths/normals by
the package's own mesh rasterizer (the renderer is the data generator, so
optimization claims are isolated from rendering-model mismatch).

Camera rings hold out every 8th view as the test split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import fileio
from .geometry import (
    camera_ring, look_at, make_cube, make_grid_plane, make_icosphere,
    make_plane, make_prism, merge_meshes,
)
from .meshops import build_uv_atlas
from .meshraster import rasterize_fragments, sample_texture
from .scene import Camera, NormalMap, TexturedMesh

PRESETS = ("plane", "plane_sphere_pole", "box_room", "occluder_plane")


@dataclass
class SyntheticScene:
    preset: str
    seed: int
    mesh: TexturedMesh               # ground-truth textured scene geometry
    labels: np.ndarray               # per-face region label (str)
    cameras: List[Camera]
    train_idx: List[int]
    test_idx: List[int]
    images: List[np.ndarray]
    depths: List[np.ndarray]         # NaN = no surface
    normals: List[NormalMap]         # world-frame face normals

    @property
    def train_cameras(self) -> List[Camera]:
        return [self.cameras[i] for i in self.train_idx]

    @property
    def train_images(self) -> List[np.ndarray]:
        return [self.images[i] for i in self.train_idx]

    def faces_with_label(self, label: str) -> np.ndarray:
        return np.nonzero(self.labels == label)[0]

    def mesh_subset(self, labels) -> TexturedMesh:
        """Sub-mesh of the labeled faces, keeping UVs and texture."""
        keep = np.isin(self.labels, list(labels))
        from .meshops import compact_mesh
        sub, _ = compact_mesh(self.mesh, keep)
        return sub


def _value_noise(rng, size: int, octaves: int = 4, persistence: float = 0.55) -> np.ndarray:
    out = np.zeros((size, size))
    amp = 1.0
    total = 0.0
    for o in range(octaves):
        cells = min(4 * 2 ** o, size)
        grid = rng.random((cells + 1, cells + 1))
        idx = np.linspace(0, cells, size)
        i0 = np.clip(idx.astype(int), 0, cells - 1)
        f = idx - i0
        g = (grid[i0][:, i0] * np.outer(1 - f, 1 - f)
             + grid[i0 + 1][:, i0] * np.outer(f, 1 - f)
             + grid[i0][:, i0 + 1] * np.outer(1 - f, f)
             + grid[i0 + 1][:, i0 + 1] * np.outer(f, f))
        out += amp * g
        total += amp
        amp *= persistence
    return out / total


def _checker(size: int, cells: int) -> np.ndarray:
    idx = (np.arange(size) * cells // size) % 2
    return (idx[:, None] ^ idx[None, :]).astype(np.float64)


def _paint_texture(rng, size: int) -> np.ndarray:
    """Texture-rich procedural pattern: colored checker plus noise octaves."""
    c = _checker(size, 24)[..., None]
    col_a = rng.uniform(0.15, 0.45, 3)
    col_b = rng.uniform(0.55, 0.9, 3)
    base = c * col_a + (1 - c) * col_b
    noise = np.stack([_value_noise(rng, size, 5) for _ in range(3)], axis=-1)
    tex = 0.65 * base + 0.35 * noise
    return np.clip(tex, 0.02, 0.98)


def _paint_labeled(mesh: TexturedMesh, labels: np.ndarray, colors: dict,
                   size: int) -> np.ndarray:
    """Flat colors per label region, rasterized into texture space."""
    tex = np.full((size, size, 3), 0.5)
    for f in range(mesh.n_faces):
        tri = mesh.uvs[f]
        color = colors[str(labels[f])]
        lo = np.floor(tri.min(axis=0) * size).astype(int) - 1
        hi = np.ceil(tri.max(axis=0) * size).astype(int) + 1
        d = tri[1] - tri[0]
        e = tri[2] - tri[0]
        den = d[0] * e[1] - d[1] * e[0]
        if abs(den) < 1e-15:
            continue
        # texel row ty holds v = 1 - (ty + 0.5)/size (uv v runs bottom-up)
        vy_lo = int(np.floor((1.0 - tri[:, 1].max()) * size)) - 1
        vy_hi = int(np.ceil((1.0 - tri[:, 1].min()) * size)) + 1
        ys = np.arange(max(vy_lo, 0), min(vy_hi, size))
        xs = np.arange(max(lo[0], 0), min(hi[0], size))
        if not len(ys) or not len(xs):
            continue
        u = (xs + 0.5) / size - tri[0, 0]
        v = 1.0 - (ys + 0.5) / size - tri[0, 1]
        uu, vv = np.meshgrid(u, v)
        b1 = (uu * e[1] - vv * e[0]) / den
        b2 = (d[0] * vv - d[1] * uu) / den
        # dilate by a texel so bilinear taps at face borders stay in-region
        inside = (b1 >= -0.08) & (b2 >= -0.08) & (b1 + b2 <= 1.08)
        block = tex[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1]
        block[inside] = color
    return tex


def _render_ground_truth(scene_mesh: TexturedMesh, cameras) -> tuple:
    images, depths, normals = [], [], []
    fnormals = scene_mesh.face_normals()
    for cam in cameras:
        frags = rasterize_fragments(scene_mesh, cam)
        color = sample_texture(scene_mesh.texture, frags.uv, frags.valid)
        images.append(color)
        depth = np.where(frags.valid, frags.depth, np.nan)
        depths.append(depth)
        n_img = np.zeros((cam.height, cam.width, 3))
        n_img[frags.valid] = fnormals[frags.triangle_id[frags.valid]]
        normals.append(NormalMap(n_img, frags.valid.copy()))
    return images, depths, normals


def make_scene(preset: str, seed: int = 0) -> SyntheticScene:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    rng = np.random.default_rng(seed + 1000003 * (PRESETS.index(preset) + 1))
    builder = {
        "plane": _build_plane,
        "plane_sphere_pole": _build_plane_sphere_pole,
        "box_room": _build_box_room,
        "occluder_plane": _build_occluder_plane,
    }[preset]
    mesh, labels, cameras = builder(rng)
    n = len(cameras)
    test_idx = list(range(0, n, 8))
    train_idx = [i for i in range(n) if i not in test_idx]
    images, depths, normals = _render_ground_truth(mesh, cameras)
    return SyntheticScene(preset=preset, seed=seed, mesh=mesh,
                          labels=np.asarray(labels, dtype=object),
                          cameras=cameras, train_idx=train_idx, test_idx=test_idx,
                          images=images, depths=depths, normals=normals)


def _build_plane(rng):
    geo = make_plane(half=1.0, z=0.0)
    mesh = build_uv_atlas(geo, texture_size=192)
    mesh.texture = _paint_texture(rng, 192)
    labels = ["plane"] * mesh.n_faces
    cams = camera_ring(12, radius=2.6, height=1.8, target=(0, 0, 0),
                       width=64, height_px=64)
    return mesh, labels, cams


def _build_plane_sphere_pole(rng):
    plane = make_plane(half=1.2, z=0.0, subdiv=3)           # 128 faces
    sphere = make_icosphere(subdiv=2, radius=0.22, center=(-0.45, 0.0, 0.95))
    pole = make_prism(radius=0.03, height=0.7, sides=6, segments=5,
                      center=(0.5, 0.3, 1.0))               # 72 faces, 60 deg sides
    geo = merge_meshes([plane, sphere, pole])
    labels = (["plane"] * plane.n_faces + ["curved"] * sphere.n_faces
              + ["thin"] * pole.n_faces)
    mesh = build_uv_atlas(geo, texture_size=256)
    mesh.texture = _paint_texture(rng, 256)
    # objects float above the camera height so their silhouettes never touch
    # the plane in image space
    cams = camera_ring(12, radius=2.6, height=0.55, target=(0.0, 0.0, 0.45),
                       width=96, height_px=96, height_wobble=0.08)
    return mesh, np.asarray(labels, dtype=object), cams


def _build_box_room(rng):
    walls = []
    half, zlo, zhi = 1.5, 0.0, 2.4
    # floor, ceiling, four walls (grids so decimation has slack)
    floor = make_grid_plane(4, 4, half=half, z=zlo)
    ceil = make_grid_plane(4, 4, half=half, z=zhi)
    walls.extend([floor, ceil])
    for axis, sign in (("x", -half), ("x", half), ("y", -half), ("y", half)):
        w = grid = make_grid_plane(4, 4, half=half, z=0.0)
        u_axis = grid.vertices[:, 0]
        height_axis = (grid.vertices[:, 1] + half) * (zhi - zlo) / (2 * half) + zlo
        v = np.empty_like(grid.vertices)
        if axis == "x":
            v[:, 0] = sign
            v[:, 1] = u_axis
        else:
            v[:, 0] = u_axis
            v[:, 1] = sign
        v[:, 2] = height_axis
        walls.append(TexturedMesh(v, w.triangles))
    s1 = make_icosphere(subdiv=2, radius=0.34, center=(0.62, 0.45, 0.62))
    s2 = make_icosphere(subdiv=2, radius=0.30, center=(-0.58, -0.48, 1.62))
    geo = merge_meshes(walls + [s1, s2])
    n_wall = sum(w.n_faces for w in walls)
    labels = ["plane"] * n_wall + ["curved"] * (s1.n_faces + s2.n_faces)
    mesh = build_uv_atlas(geo, texture_size=384)
    mesh.texture = _paint_texture(rng, 384)
    cams = camera_ring(16, radius=0.82, height=1.2, target=(0.0, 0.0, 1.2),
                       width=96, height_px=96, f=0.72 * 96, height_wobble=0.18)
    return mesh, np.asarray(labels, dtype=object), cams


def _build_occluder_plane(rng):
    wall = make_plane(half=1.6, z=2.5, subdiv=2)            # 32 faces
    box = make_cube(half=0.22, center=(0.0, 0.0, 1.3))
    geo = merge_meshes([wall, box])
    labels = np.asarray(["plane"] * wall.n_faces + ["curved"] * box.n_faces,
                        dtype=object)
    mesh = build_uv_atlas(geo, texture_size=256)
    mesh.texture = _paint_labeled(mesh, labels, {
        "plane": np.array([1.0, 1.0, 1.0]),
        "curved": np.array([0.85, 0.08, 0.08]),
    }, 256)
    cams = []
    n = 12
    for k in range(n):
        theta = 2 * np.pi * k / n
        phi = np.radians(14 + 12 * ((k * 5) % 3))
        r = 2.6
        eye = np.array([r * np.sin(phi) * np.cos(theta),
                        r * np.sin(phi) * np.sin(theta),
                        2.5 - r * np.cos(phi)])
        cams.append(Camera(fx=0.9 * 80, fy=0.9 * 80, cx=40, cy=40,
                           width=80, height=80,
                           world_to_camera=look_at(eye, (0, 0, 2.5), up=(0, 1, 0)),
                           near=0.05, far=50.0))
    return mesh, labels, cams


# ---------------------------------------------------------------------------
# scene directory IO (layout consumed by the CLI pipeline)
# ---------------------------------------------------------------------------

def save_scene(scene: SyntheticScene, out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "depths").mkdir(exist_ok=True)
    (out / "normals").mkdir(exist_ok=True)
    fileio.save_cameras(scene.cameras, out / "cameras.json")
    fileio.save_mesh(scene.mesh, out / "gt_mesh.obj")
    meta = {
        "preset": scene.preset,
        "seed": scene.seed,
        "labels": [str(x) for x in scene.labels],
        "train_idx": scene.train_idx,
        "test_idx": scene.test_idx,
    }
    (out / "labels.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
    for i, (img, depth, nm) in enumerate(zip(scene.images, scene.depths, scene.normals)):
        fileio.save_image(img, out / "images" / f"view_{i:03d}.png")
        fileio.save_depth(depth, out / "depths" / f"view_{i:03d}.npy")
        fileio.save_normal_map(nm, out / "normals" / f"view_{i:03d}.png")


def load_scene(scene_dir) -> SyntheticScene:
    d = Path(scene_dir)
    meta = json.loads((d / "labels.json").read_text(encoding="utf-8"))
    cameras = fileio.load_cameras(d / "cameras.json")
    mesh = fileio.load_mesh(d / "gt_mesh.obj")
    images, depths, normals = [], [], []
    for i in range(len(cameras)):
        images.append(fileio.load_image(d / "images" / f"view_{i:03d}.png"))
        depths.append(fileio.load_depth(d / "depths" / f"view_{i:03d}.npy"))
        normals.append(fileio.load_normal_map(d / "normals" / f"view_{i:03d}.png"))
    return SyntheticScene(preset=meta["preset"], seed=meta["seed"], mesh=mesh,
                          labels=np.asarray(meta["labels"], dtype=object),
                          cameras=cameras, train_idx=meta["train_idx"],
                          test_idx=meta["test_idx"], images=images,
                          depths=depths, normals=normals)
