import json

import numpy as np
import pytest

from gsmesh import fileio
from gsmesh.scene import Camera, GaussianSet, NormalMap, TexturedMesh


def f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def small_set(n=3, sh_degree=0, seed=0):
    rng = np.random.default_rng(seed)
    rest = f32(rng.normal(size=(n, 3, 3))) if sh_degree else None
    return GaussianSet(
        f32(rng.normal(size=(n, 3))), f32(rng.normal(size=(n, 4)) + 0.2),
        f32(rng.normal(size=(n, 3))), f32(rng.normal(size=n)),
        f32(rng.normal(size=(n, 3))), rest,
    )


class TestGaussianPly:
    @pytest.mark.parametrize("sh_degree", [0, 1])
    def test_round_trip_identity(self, tmp_path, sh_degree):
        gs = small_set(sh_degree=sh_degree)
        p = tmp_path / "g.ply"
        fileio.save_gaussians(gs, p)
        back = fileio.load_gaussians(p)
        np.testing.assert_array_equal(gs.centers, back.centers)
        np.testing.assert_array_equal(gs.rotations, back.rotations)
        np.testing.assert_array_equal(gs.log_scales, back.log_scales)
        np.testing.assert_array_equal(gs.logit_opacities, back.logit_opacities)
        np.testing.assert_array_equal(gs.colors_dc, back.colors_dc)
        if sh_degree:
            np.testing.assert_array_equal(gs.colors_rest, back.colors_rest)

    def test_save_load_save_bit_identical(self, tmp_path):
        gs = small_set(7, sh_degree=1, seed=4)
        p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
        fileio.save_gaussians(gs, p1)
        fileio.save_gaussians(fileio.load_gaussians(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_set(self, tmp_path):
        p = tmp_path / "e.ply"
        fileio.save_gaussians(GaussianSet.empty(), p)
        assert len(fileio.load_gaussians(p)) == 0

    def test_missing_opacity_named(self, tmp_path):
        gs = small_set()
        p = tmp_path / "g.ply"
        fileio.save_gaussians(gs, p)
        raw = p.read_bytes().replace(b"property float opacity", b"property float odacity")
        bad = tmp_path / "bad.ply"
        bad.write_bytes(raw)
        with pytest.raises(fileio.FormatError, match="opacity"):
            fileio.load_gaussians(bad)

    def test_truncated_body(self, tmp_path):
        gs = small_set()
        p = tmp_path / "g.ply"
        fileio.save_gaussians(gs, p)
        (tmp_path / "t.ply").write_bytes(p.read_bytes()[:-8])
        with pytest.raises(fileio.FormatError, match="truncated"):
            fileio.load_gaussians(tmp_path / "t.ply")


def unit_quad(textured=True):
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    if not textured:
        return TexturedMesh(verts, tris)
    uvs = np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], dtype=np.float64)
    tex = np.linspace(0, 1, 8 * 8 * 3).reshape(8, 8, 3)
    return TexturedMesh(verts, tris, uvs, tex)


class TestMeshObj:
    def test_round_trip_topology_and_uvs(self, tmp_path):
        mesh = unit_quad()
        p = tmp_path / "quad.obj"
        fileio.save_mesh(mesh, p)
        back = fileio.load_mesh(p)
        np.testing.assert_array_equal(mesh.triangles, back.triangles)
        np.testing.assert_allclose(mesh.vertices, back.vertices, atol=1e-6)
        np.testing.assert_allclose(mesh.uvs, back.uvs, atol=1e-6)
        assert back.texture is not None
        # 8-bit texture round trip
        np.testing.assert_allclose(mesh.texture, back.texture, atol=1.0 / 255.0)

    def test_quad_face_rejected(self, tmp_path):
        p = tmp_path / "q.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(fileio.FormatError, match="non-triangular"):
            fileio.load_mesh(p)

    def test_dangling_index(self, tmp_path):
        p = tmp_path / "d.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 9\n")
        with pytest.raises(fileio.FormatError, match="dangling"):
            fileio.load_mesh(p)

    def test_mesh_without_vt_loads_untextured(self, tmp_path):
        p = tmp_path / "u.obj"
        fileio.save_mesh(unit_quad(textured=False), p)
        back = fileio.load_mesh(p)
        assert back.uvs is None and back.texture is None
        assert back.n_faces == 2


class TestCamerasJson:
    def test_round_trip_order_preserved(self, tmp_path):
        cams = []
        for k in range(2):
            w2c = np.eye(4)
            w2c[:3, 3] = [k, 0, 5]
            cams.append(Camera(fx=60, fy=61, cx=32, cy=24, width=64, height=48,
                               world_to_camera=w2c, near=0.1, far=50))
        p = tmp_path / "cams.json"
        fileio.save_cameras(cams, p)
        back = fileio.load_cameras(p)
        assert len(back) == 2
        for a, b in zip(cams, back):
            assert (a.fx, a.fy, a.cx, a.cy, a.width, a.height) == (b.fx, b.fy, b.cx, b.cy, b.width, b.height)
            np.testing.assert_allclose(a.world_to_camera, b.world_to_camera)

    def test_identity_pose_accepted(self, tmp_path):
        p = tmp_path / "c.json"
        entry = {"fx": 50, "fy": 50, "cx": 32, "cy": 24, "width": 64, "height": 48,
                 "world_to_camera": list(np.eye(4).reshape(-1)), "near": 0.1, "far": 10}
        p.write_text(json.dumps([entry]))
        cams = fileio.load_cameras(p)
        assert np.allclose(cams[0].center(), 0)

    def test_bad_rotation_rejected_with_index(self, tmp_path):
        good = np.eye(4)
        bad = np.eye(4) * 1.1
        bad[3, 3] = 1.0
        entries = []
        for m in (good, bad):
            entries.append({"fx": 50, "fy": 50, "cx": 32, "cy": 24, "width": 64, "height": 48,
                            "world_to_camera": list(m.reshape(-1)), "near": 0.1, "far": 10})
        p = tmp_path / "c.json"
        p.write_text(json.dumps(entries))
        with pytest.raises(fileio.FormatError, match="entry 1"):
            fileio.load_cameras(p)


class TestNormalMaps:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        n = rng.normal(size=(16, 12, 3))
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        valid = rng.random((16, 12)) > 0.3
        nm = NormalMap(n, valid)
        p = tmp_path / "n.png"
        fileio.save_normal_map(nm, p)
        back = fileio.load_normal_map(p)
        np.testing.assert_array_equal(valid, back.valid)
        assert back.check_unit(1e-3)
        err = np.linalg.norm(back.normals[valid] - n[valid], axis=-1).max()
        assert err < 2e-4  # 16-bit quantization


class TestDepth:
    def test_round_trip_with_nan(self, tmp_path):
        d = np.array([[1.0, np.nan], [2.5, np.inf]])
        p = tmp_path / "d.npy"
        fileio.save_depth(d, p)
        back = fileio.load_depth(p)
        assert np.isnan(back[0, 1]) and np.isinf(back[1, 1])
        assert back[0, 0] == pytest.approx(1.0)
