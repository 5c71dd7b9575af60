import numpy as np
import pytest

from gsmesh.scene import GaussianSet
from gsmesh.splat import COV_FLOOR, build_tiles, project

from conftest import identity_camera, random_gaussians


def single_gaussian(center, log_scale=-2.0, logit=0.0):
    return GaussianSet(np.array([center], dtype=float),
                       np.array([[1.0, 0, 0, 0]]),
                       np.full((1, 3), log_scale, dtype=float),
                       np.array([logit]),
                       np.zeros((1, 3)))


class TestProject:
    def test_on_axis_hits_principal_point(self):
        cam = identity_camera()
        proj = project(single_gaussian([0, 0, 3.0]), cam)
        assert len(proj) == 1
        np.testing.assert_allclose(proj.mean2d[0], [cam.cx, cam.cy], atol=1e-12)
        assert proj.depth[0] == pytest.approx(3.0)

    def test_isotropic_cov_closed_form(self):
        # scale s at depth z on axis: cov2d = diag((f s / z)^2) + floor
        cam = identity_camera(f=80.0)
        s = np.exp(-2.0)
        z = 4.0
        proj = project(single_gaussian([0, 0, z], log_scale=-2.0), cam)
        expected = (cam.fx * s / z) ** 2
        assert proj.cov2d[0, 0] == pytest.approx(expected + COV_FLOOR, rel=1e-12)
        assert proj.cov2d[0, 2] == pytest.approx(expected + COV_FLOOR, rel=1e-12)
        assert proj.cov2d[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_cov_matches_numerical_jacobian(self, rng):
        # push the 3D covariance through a numerically estimated projection
        # Jacobian and compare (general pose, off-axis Gaussian)
        from conftest import look_at_camera
        cam = look_at_camera([0.5, 0.8, -3.0], [0.1, 0.0, 0.0])
        gs = random_gaussians(rng, 1, center_box=0.4, depth_range=(2.5, 3.5))
        # place the center in front of this camera
        gs.centers[0] = np.array([0.2, -0.1, 0.3])
        proj = project(gs, cam)
        assert len(proj) == 1

        def pix(p_world):
            t = cam.rotation @ p_world + cam.translation
            return np.array([cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy])

        h = 1e-6
        Jnum = np.zeros((2, 3))
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            Jnum[:, k] = (pix(gs.centers[0] + dp) - pix(gs.centers[0] - dp)) / (2 * h)

        from gsmesh.scene import quaternions_to_rotations
        R = quaternions_to_rotations(gs.rotations)[0]
        S = np.diag(np.exp(gs.log_scales[0]))
        sigma = (R @ S) @ (R @ S).T
        expected = Jnum @ sigma @ Jnum.T + COV_FLOOR * np.eye(2)
        got = np.array([[proj.cov2d[0, 0], proj.cov2d[0, 1]],
                        [proj.cov2d[0, 1], proj.cov2d[0, 2]]])
        np.testing.assert_allclose(got, expected, rtol=1e-4, atol=1e-8)

    def test_behind_near_plane_culled(self):
        cam = identity_camera(near=0.5)
        proj = project(single_gaussian([0, 0, 0.2]), cam)
        assert len(proj) == 0

    def test_beyond_far_culled(self):
        cam = identity_camera(far=10.0)
        proj = project(single_gaussian([0, 0, 50.0]), cam)
        assert len(proj) == 0

    def test_negligible_opacity_culled(self):
        proj = project(single_gaussian([0, 0, 3.0], logit=-12.0), identity_camera())
        assert len(proj) == 0

    def test_far_offscreen_culled(self):
        proj = project(single_gaussian([50.0, 0, 3.0]), identity_camera())
        assert len(proj) == 0

    def test_cov_eigenvalues_positive(self, rng):
        gs = random_gaussians(rng, 200)
        proj = project(gs, identity_camera())
        det = proj.cov2d[:, 0] * proj.cov2d[:, 2] - proj.cov2d[:, 1] ** 2
        trace = proj.cov2d[:, 0] + proj.cov2d[:, 2]
        assert np.all(det > 0) and np.all(trace > 0)


class TestTileBins:
    def test_gaussian_inside_one_tile(self):
        cam = identity_camera(width=64, height=64)
        # tiny gaussian projecting to (24, 24), the middle of tile (1, 1)
        proj = project(single_gaussian([-8 / 6.0, -8 / 6.0, 10.0], log_scale=-5.0), cam)
        np.testing.assert_allclose(proj.mean2d[0], [24.0, 24.0], atol=1e-9)
        assert proj.radius[0] < 8.0
        tiles = build_tiles(proj, 64, 64)
        hits = [(tx, ty) for ty in range(tiles.tiles_y) for tx in range(tiles.tiles_x)
                if len(tiles.tile_list(tx, ty))]
        assert hits == [(1, 1)]

    def test_gaussian_spanning_four_tiles(self):
        cam = identity_camera(width=64, height=64)
        gs = single_gaussian([0, 0, 2.0], log_scale=-2.5)  # radius of a few px at center
        proj = project(gs, cam)
        assert 1.0 < proj.radius[0] < 16.0
        tiles = build_tiles(proj, 64, 64)
        hits = {(tx, ty) for ty in range(tiles.tiles_y) for tx in range(tiles.tiles_x)
                if len(tiles.tile_list(tx, ty))}
        assert hits == {(1, 1), (2, 1), (1, 2), (2, 2)}

    def test_equal_depth_ordered_by_index(self):
        gs = GaussianSet(np.array([[0.1, 0, 3.0], [-0.1, 0, 3.0], [0, 0.1, 3.0]]),
                         np.tile([1.0, 0, 0, 0], (3, 1)),
                         np.full((3, 3), -1.0),
                         np.zeros(3), np.zeros((3, 3)))
        cam = identity_camera()
        proj = project(gs, cam)
        tiles = build_tiles(proj, 64, 64)
        for ty in range(tiles.tiles_y):
            for tx in range(tiles.tiles_x):
                lst = tiles.tile_list(tx, ty)
                orig = proj.kept[lst]
                assert np.all(np.diff(orig) > 0)

    def test_every_tile_list_depth_sorted(self, rng):
        gs = random_gaussians(rng, 300)
        cam = identity_camera()
        proj = project(gs, cam)
        tiles = build_tiles(proj, 64, 64)
        for ty in range(tiles.tiles_y):
            for tx in range(tiles.tiles_x):
                d = proj.depth[tiles.tile_list(tx, ty)]
                assert np.all(np.diff(d) >= 0)
