import numpy as np
import pytest

from gsmesh.geometry import make_cube, make_icosphere, make_plane
from gsmesh.meshops import MeshOpsError, build_uv_atlas
from gsmesh.meshops.uvatlas import _grow_charts


def uv_area(uvs):
    """Signed per-triangle area in texture space."""
    a, b, c = uvs[:, 0], uvs[:, 1], uvs[:, 2]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def texel_owners(mesh, charts, size):
    """Chart id owning each texel center, -1 if none (point-in-triangle)."""
    owner = np.full((size, size), -1, dtype=np.int64)
    chart_of_face = np.full(mesh.n_faces, -1, dtype=np.int64)
    for cid, faces in enumerate(charts):
        chart_of_face[faces] = cid
    xs = (np.arange(size) + 0.5) / size
    for f in range(mesh.n_faces):
        tri = mesh.uvs[f]
        lo = np.floor(tri.min(axis=0) * size).astype(int)
        hi = np.ceil(tri.max(axis=0) * size).astype(int)
        for ty in range(max(lo[1], 0), min(hi[1], size)):
            v = (ty + 0.5) / size
            for tx in range(max(lo[0], 0), min(hi[0], size)):
                u = xs[tx]
                d = tri[1] - tri[0]
                e = tri[2] - tri[0]
                den = d[0] * e[1] - d[1] * e[0]
                if abs(den) < 1e-15:
                    continue
                pu, pv = u - tri[0, 0], v - tri[0, 1]
                b1 = (pu * e[1] - pv * e[0]) / den
                b2 = (d[0] * pv - d[1] * pu) / den
                if b1 >= -1e-9 and b2 >= -1e-9 and b1 + b2 <= 1 + 1e-9:
                    prev = owner[ty, tx]
                    cur = chart_of_face[f]
                    assert prev in (-1, cur), f"texel ({tx},{ty}) shared by charts {prev} and {cur}"
                    owner[ty, tx] = cur
    return owner


class TestUvAtlas:
    def test_single_quad_one_chart_fills_atlas(self):
        mesh = make_plane(half=1.0)
        out = build_uv_atlas(mesh, texture_size=64)
        charts = _grow_charts(mesh)
        assert len(charts) == 1
        span = out.uvs.reshape(-1, 2).max(axis=0) - out.uvs.reshape(-1, 2).min(axis=0)
        # square quad: both spans equal (aspect preserved) and near full
        assert abs(span[0] - span[1]) < 0.01 * max(span)
        assert span.min() > 0.85
        assert np.all(uv_area(out.uvs) != 0)

    def test_cube_six_charts_non_overlapping(self):
        mesh = make_cube()
        charts = _grow_charts(mesh)
        assert len(charts) == 6
        out = build_uv_atlas(mesh, texture_size=128)
        assert np.all(np.abs(uv_area(out.uvs)) > 0)
        assert out.uvs.min() >= 0.0 and out.uvs.max() <= 1.0
        texel_owners(out, charts, 128)  # raises on any shared texel

    def test_random_meshes_zero_texel_overlap(self, rng):
        for mesh in (make_icosphere(subdiv=1), make_cube(half=0.7)):
            out = build_uv_atlas(mesh, texture_size=96)
            charts = _grow_charts(mesh)
            texel_owners(out, charts, 96)
            assert np.all(np.abs(uv_area(out.uvs)) > 0)

    def test_texture_filled_half(self):
        out = build_uv_atlas(make_cube(), texture_size=32)
        assert out.texture.shape == (32, 32, 3)
        assert np.all(out.texture == 0.5)

    def test_too_small_texture_errors_with_size(self):
        mesh = make_icosphere(subdiv=2)  # 320 faces, many charts
        with pytest.raises(MeshOpsError, match="need at least"):
            build_uv_atlas(mesh, texture_size=4)
