"""Core scene data model: Gaussian sets, cameras, textured meshes, render outputs.

Conventions used across the package:

* world and camera frames are right-handed; camera looks down +z, y points
  down, x right (COLMAP-style), so points in front of the camera have
  positive camera-space z.
* pixel (row iy, col ix) samples the image plane at (ix + 0.5, iy + 0.5).
* all color values are linear RGB in [0, 1]; PNG IO applies no transfer
  function.
* in-memory arrays are float64; disk interchange is float32 (PLY) or 8/16-bit
  PNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Max tolerated orthonormality defect of a pose rotation before rejection.
ROTATION_REJECT_TOL = 1e-4


class SceneError(ValueError):
    """Raised for invalid scene data (bad indices, malformed poses, ...)."""


def _as_f64(a, shape_tail, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise SceneError(f"{name}: expected shape (N, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    return arr


@dataclass
class GaussianSet:
    """Optimizable anisotropic Gaussian primitives (struct of arrays).

    centers          (N, 3) world-space means
    rotations        (N, 4) quaternions (w, x, y, z); renormalized after each
                     optimizer step, not necessarily unit in between
    log_scales       (N, 3) log of per-axis standard deviations (world units)
    logit_opacities  (N,)   pre-sigmoid opacity
    colors_dc        (N, 3) degree-0 color coefficients (linear RGB basis)
    colors_rest      (N, 3, 3) optional degree-1 coefficients, channel-major
                     along the last axis: [:, k, c] is coefficient k of
                     channel c; None when the set carries degree 0 only
    """

    centers: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    logit_opacities: np.ndarray
    colors_dc: np.ndarray
    colors_rest: Optional[np.ndarray] = None

    def __post_init__(self):
        self.centers = _as_f64(self.centers, (3,), "centers")
        n = len(self.centers)
        self.rotations = _as_f64(self.rotations, (4,), "rotations")
        self.log_scales = _as_f64(self.log_scales, (3,), "log_scales")
        self.logit_opacities = np.asarray(self.logit_opacities, dtype=np.float64).reshape(-1)
        self.colors_dc = _as_f64(self.colors_dc, (3,), "colors_dc")
        if self.colors_rest is not None:
            self.colors_rest = np.asarray(self.colors_rest, dtype=np.float64)
            if self.colors_rest.shape != (n, 3, 3):
                raise SceneError(f"colors_rest: expected shape ({n}, 3, 3), got {self.colors_rest.shape}")
        for name in ("rotations", "log_scales", "logit_opacities", "colors_dc"):
            if len(getattr(self, name)) != n:
                raise SceneError(f"{name} has length {len(getattr(self, name))}, centers has {n}")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def sh_degree(self) -> int:
        return 1 if self.colors_rest is not None else 0

    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logit_opacities))

    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def normalize_rotations(self) -> None:
        """Renormalize quaternions in place (run after every optimizer step)."""
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise SceneError("zero-norm quaternion cannot be normalized")
        self.rotations /= norms

    def select(self, mask_or_idx) -> "GaussianSet":
        """New set with rows selected by a boolean mask or index array."""
        rest = None if self.colors_rest is None else self.colors_rest[mask_or_idx]
        return GaussianSet(
            self.centers[mask_or_idx],
            self.rotations[mask_or_idx],
            self.log_scales[mask_or_idx],
            self.logit_opacities[mask_or_idx],
            self.colors_dc[mask_or_idx],
            rest,
        )

    def copy(self) -> "GaussianSet":
        rest = None if self.colors_rest is None else self.colors_rest.copy()
        return GaussianSet(
            self.centers.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.logit_opacities.copy(),
            self.colors_dc.copy(),
            rest,
        )

    @staticmethod
    def empty(sh_degree: int = 0) -> "GaussianSet":
        rest = np.zeros((0, 3, 3)) if sh_degree >= 1 else None
        return GaussianSet(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
            np.zeros((0,)), np.zeros((0, 3)), rest,
        )


def quaternions_to_rotations(q: np.ndarray) -> np.ndarray:
    """(N, 4) quaternions (w, x, y, z), not necessarily unit -> (N, 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    qn = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = qn[..., 0], qn[..., 1], qn[..., 2], qn[..., 3]
    R = np.empty(qn.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a world-to-camera pose.

    The rotation block of ``world_to_camera`` must be orthonormal; defects up
    to 1e-4 are repaired by SVD projection, larger ones are rejected.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray  # (4, 4) row-major
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        W = np.asarray(self.world_to_camera, dtype=np.float64)
        if W.shape != (4, 4):
            raise SceneError(f"world_to_camera must be 4x4, got {W.shape}")
        R = W[:3, :3]
        defect = float(np.abs(R @ R.T - np.eye(3)).max())
        if defect > ROTATION_REJECT_TOL:
            raise SceneError(f"rotation block not orthonormal (defect {defect:.3g} > {ROTATION_REJECT_TOL:g})")
        if defect > 1e-12:
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
            W = W.copy()
            W[:3, :3] = R
        W.setflags(write=False)
        object.__setattr__(self, "world_to_camera", W)
        if not (0.0 < self.near < self.far):
            raise SceneError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if self.width <= 0 or self.height <= 0:
            raise SceneError("image dimensions must be positive")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_cam_points(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.translation

    def project_points(self, pts_cam: np.ndarray) -> np.ndarray:
        """Camera-space points -> (x_pix, y_pix). Caller culls z <= 0."""
        z = pts_cam[..., 2]
        return np.stack([
            self.fx * pts_cam[..., 0] / z + self.cx,
            self.fy * pts_cam[..., 1] / z + self.cy,
        ], axis=-1)


@dataclass
class TexturedMesh:
    """Indexed triangle mesh with optional per-corner UVs and texture image.

    vertices   (V, 3) float64
    triangles  (F, 3) int32 vertex indices
    uvs        (F, 3, 2) per-corner texture coordinates in [0, 1]^2, or None
    texture    (Ht, Wt, 3) float64 linear RGB in [0, 1], or None

    UVs and texture are present together or not at all. v runs bottom-up
    (OBJ convention): texel row = (1 - v) * Ht - 0.5.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uvs: Optional[np.ndarray] = None
    texture: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise SceneError("triangle index out of range")
        if (self.uvs is None) != (self.texture is None):
            raise SceneError("uvs and texture must be present together")
        if self.uvs is not None:
            self.uvs = np.asarray(self.uvs, dtype=np.float64)
            if self.uvs.shape != (len(self.triangles), 3, 2):
                raise SceneError(f"uvs must be (F, 3, 2), got {self.uvs.shape}")
            self.texture = np.asarray(self.texture, dtype=np.float64)
            if self.texture.ndim != 3 or self.texture.shape[2] != 3:
                raise SceneError("texture must be (H, W, 3)")

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        if normalized:
            ln = np.linalg.norm(n, axis=1, keepdims=True)
            n = np.divide(n, ln, out=np.zeros_like(n), where=ln > 0)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalized=False), axis=1)

    def copy(self) -> "TexturedMesh":
        return TexturedMesh(
            self.vertices.copy(), self.triangles.copy(),
            None if self.uvs is None else self.uvs.copy(),
            None if self.texture is None else self.texture.copy(),
        )

    def audit(self) -> None:
        """Raise SceneError if internal consistency is broken."""
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise SceneError("triangle index out of range")
            areas = self.face_areas()
            if np.any(areas <= 0.0):
                bad = int(np.argmin(areas))
                raise SceneError(f"degenerate (zero-area) triangle at index {bad}")
        if self.uvs is not None and self.uvs.shape != (len(self.triangles), 3, 2):
            raise SceneError("uvs out of sync with triangles")
        if not np.isfinite(self.vertices).all():
            raise SceneError("non-finite vertex coordinates")


@dataclass
class RenderOutputs:
    """Per-pixel results of a render pass.

    color          (H, W, 3)
    depth          (H, W) camera-z; NaN where undefined
    transmittance  (H, W) residual T in [0, 1]
    triangle_id    (H, W) int32 mesh triangle per pixel, -1 where no mesh;
                   None when the pass had no mesh layer
    """

    color: np.ndarray
    depth: np.ndarray
    transmittance: np.ndarray
    triangle_id: Optional[np.ndarray] = None


@dataclass
class NormalMap:
    """Unit normal image with validity mask. Frame is world unless noted."""

    normals: np.ndarray  # (H, W, 3)
    valid: np.ndarray    # (H, W) bool

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.normals.shape[:2] != self.valid.shape or self.normals.shape[2:] != (3,):
            raise SceneError("normal map shape mismatch")

    def check_unit(self, tol: float = 1e-3) -> bool:
        if not self.valid.any():
            return True
        n = np.linalg.norm(self.normals[self.valid], axis=-1)
        return bool(np.abs(n - 1.0).max() <= tol)


def camera_extent(cameras) -> float:
    """Scene-scale estimate: 1.1 x max distance from the mean camera center
    to any camera center. Deterministic; invariant under rigid translation.
    """
    if not cameras:
        raise SceneError("camera_extent needs at least one camera")
    centers = np.stack([c.center() for c in cameras])
    mean = centers.mean(axis=0)
    return 1.1 * float(np.linalg.norm(centers - mean, axis=1).max())
