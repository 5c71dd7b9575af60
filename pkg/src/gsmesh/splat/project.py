"""Projection of 3D Gaussians to screen space.

The 3D covariance is assembled as R S S^T R^T from the quaternion and the
activated scales, pushed through the world-to-camera rotation and the local
affine Jacobian of the pinhole projection, and floored by +0.3 px^2 on the
diagonal. Gaussians behind the near plane, beyond the far plane, with
negligible peak opacity, or whose 3-sigma screen extent misses the image are
culled here and never reach blending.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scene import Camera, GaussianSet, quaternions_to_rotations

COV_FLOOR = 0.3           # px^2 diagonal low-pass floor
ALPHA_CLAMP = 0.99        # max per-sample opacity
SIGMA_SKIP = 1.0 / 255.0  # contributions below this are skipped
SUPPORT_MAHAL2 = 9.0      # hard 3-sigma elliptical support cutoff
EARLY_STOP_T = 1e-4       # stop blending once transmittance would drop below
FRUSTUM_LIMIT = 1.3       # x/z, y/z clamp factor used when building J

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199


@dataclass
class ProjectedGaussians:
    """Screen-space Gaussians that survived culling (struct of arrays).

    ``kept`` maps rows back into the originating GaussianSet. ``cov2d`` and
    ``conic`` store the symmetric 2x2 matrices as (xx, xy, yy).
    """

    kept: np.ndarray       # (M,) int64
    mean2d: np.ndarray     # (M, 2) pixels
    depth: np.ndarray      # (M,) camera z
    cov2d: np.ndarray      # (M, 3)
    conic: np.ndarray      # (M, 3) inverse covariance
    alpha: np.ndarray      # (M,)
    color: np.ndarray      # (M, 3) view-evaluated, clamped at 0
    radius: np.ndarray     # (M,) 3-sigma screen radius in pixels
    # retained intermediates for the backward chain
    t_cam: np.ndarray          # (M, 3) camera-space centers
    color_pre: np.ndarray      # (M, 3) pre-clamp color
    view_dir: np.ndarray | None  # (M, 3) unit dirs (degree-1 sets only)
    view_dist: np.ndarray | None

    def __len__(self) -> int:
        return len(self.kept)


def evaluate_colors(gs: GaussianSet, cam_center: np.ndarray):
    """View-dependent color per Gaussian; returns (color, pre-clamp, dir, dist)."""
    pre = 0.5 + SH_C0 * gs.colors_dc
    view_dir = view_dist = None
    if gs.colors_rest is not None:
        delta = gs.centers - cam_center
        view_dist = np.linalg.norm(delta, axis=1)
        view_dir = delta / np.maximum(view_dist, 1e-12)[:, None]
        x, y, z = view_dir[:, 0:1], view_dir[:, 1:2], view_dir[:, 2:3]
        rest = gs.colors_rest  # (N, 3 coeffs, 3 channels)
        pre = pre + SH_C1 * (-y * rest[:, 0] + z * rest[:, 1] - x * rest[:, 2])
    return np.maximum(pre, 0.0), pre, view_dir, view_dist


def project(gs: GaussianSet, cam: Camera) -> ProjectedGaussians:
    n = len(gs)
    if n == 0:
        z = np.zeros
        return ProjectedGaussians(z(0, dtype=np.int64), z((0, 2)), z(0), z((0, 3)),
                                  z((0, 3)), z(0), z((0, 3)), z(0), z((0, 3)),
                                  z((0, 3)), None, None)

    t = gs.centers @ cam.rotation.T + cam.translation
    depth = t[:, 2]
    alive = (depth > cam.near) & (depth < cam.far)

    alpha = gs.opacities()
    alive &= alpha >= SIGMA_SKIP

    # screen means (raw, unclamped projection)
    tz = np.where(alive, depth, 1.0)
    mean2d = np.stack([cam.fx * t[:, 0] / tz + cam.cx,
                       cam.fy * t[:, 1] / tz + cam.cy], axis=1)

    # 3D covariance
    R = quaternions_to_rotations(gs.rotations)
    s = gs.scales()
    M = R * s[:, None, :]
    sigma = M @ M.transpose(0, 2, 1)

    # Jacobian of the pinhole projection at the (frustum-clamped) center
    limx = FRUSTUM_LIMIT * (cam.width / (2.0 * cam.fx))
    limy = FRUSTUM_LIMIT * (cam.height / (2.0 * cam.fy))
    rx = np.clip(t[:, 0] / tz, -limx, limx)
    ry = np.clip(t[:, 1] / tz, -limy, limy)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / tz
    J[:, 0, 2] = -cam.fx * rx / tz
    J[:, 1, 1] = cam.fy / tz
    J[:, 1, 2] = -cam.fy * ry / tz

    A = J @ cam.rotation[None, :, :]
    cov = A @ sigma @ A.transpose(0, 2, 1)
    cxx = cov[:, 0, 0] + COV_FLOOR
    cxy = cov[:, 0, 1]
    cyy = cov[:, 1, 1] + COV_FLOOR

    det = cxx * cyy - cxy * cxy
    mid = 0.5 * (cxx + cyy)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))

    alive &= (mean2d[:, 0] + radius > 0) & (mean2d[:, 0] - radius < cam.width)
    alive &= (mean2d[:, 1] + radius > 0) & (mean2d[:, 1] - radius < cam.height)

    color, color_pre, view_dir, view_dist = evaluate_colors(gs, cam.center())

    kept = np.nonzero(alive)[0].astype(np.int64)
    inv_det = 1.0 / det[kept]
    conic = np.stack([cyy[kept] * inv_det, -cxy[kept] * inv_det, cxx[kept] * inv_det], axis=1)

    return ProjectedGaussians(
        kept=kept,
        mean2d=np.ascontiguousarray(mean2d[kept]),
        depth=np.ascontiguousarray(depth[kept]),
        cov2d=np.stack([cxx[kept], cxy[kept], cyy[kept]], axis=1),
        conic=np.ascontiguousarray(conic),
        alpha=np.ascontiguousarray(alpha[kept]),
        color=np.ascontiguousarray(color[kept]),
        radius=np.ascontiguousarray(radius[kept]),
        t_cam=np.ascontiguousarray(t[kept]),
        color_pre=np.ascontiguousarray(color_pre[kept]),
        view_dir=None if view_dir is None else np.ascontiguousarray(view_dir[kept]),
        view_dist=None if view_dist is None else np.ascontiguousarray(view_dist[kept]),
    )
