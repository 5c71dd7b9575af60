import numpy as np
import pytest

from gsmesh.scene import Camera, GaussianSet


def look_at_camera(eye, target, up=(0, 1, 0), width=64, height=64, f=None,
                   near=0.05, far=100.0):
    """Camera at `eye` looking toward `target` (camera z forward, y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    if np.linalg.norm(right) < 1e-8:
        upv = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, upv)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])  # world -> camera rows
    w2c = np.eye(4)
    w2c[:3, :3] = R
    w2c[:3, 3] = -R @ eye
    if f is None:
        f = 0.9 * width
    return Camera(fx=f, fy=f, cx=width / 2, cy=height / 2, width=width,
                  height=height, world_to_camera=w2c, near=near, far=far)


def random_gaussians(rng, n, *, center_box=1.0, depth_range=(2.0, 6.0),
                     scale_range=(-3.2, -1.2), logit_range=(-2.0, 1.5),
                     sh_degree=0):
    """Gaussians scattered in front of an identity-pose camera at the origin."""
    centers = np.column_stack([
        rng.uniform(-center_box, center_box, n),
        rng.uniform(-center_box, center_box, n),
        rng.uniform(*depth_range, n),
    ])
    rest = rng.normal(size=(n, 3, 3)) * 0.2 if sh_degree else None
    return GaussianSet(
        centers,
        rng.normal(size=(n, 4)) + np.array([1.5, 0, 0, 0]),
        rng.uniform(*scale_range, (n, 3)),
        rng.uniform(*logit_range, n),
        rng.uniform(-0.4, 0.6, (n, 3)),
        rest,
    )


def identity_camera(width=64, height=64, f=60.0, near=0.05, far=100.0):
    return Camera(fx=f, fy=f, cx=width / 2, cy=height / 2, width=width,
                  height=height, world_to_camera=np.eye(4), near=near, far=far)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
