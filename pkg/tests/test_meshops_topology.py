import numpy as np
import pytest

from gsmesh.geometry import (
    make_cube, make_grid_plane, make_icosphere, make_plane, make_prism, merge_meshes,
)
from gsmesh.meshops import (
    build_adjacency, close_holes, connected_components, dihedral_angles,
    drop_small_components, subdivide_smooth,
)
from gsmesh.scene import TexturedMesh

from geom_oracles import euler_characteristic, union_find_components


class TestDihedral:
    def test_coplanar_zero(self):
        mesh = make_plane(subdiv=1)
        ang = dihedral_angles(mesh)
        finite = ang[np.isfinite(ang)]
        assert len(finite) > 0
        assert np.abs(finite).max() < 1e-9

    def test_cube_edges_ninety(self):
        mesh = make_cube()
        adj = build_adjacency(mesh)
        ang = dihedral_angles(mesh, adj)
        finite = ang[np.isfinite(ang)]
        assert len(finite) == 18  # 12 cube edges + 6 face diagonals
        ninety = np.isclose(finite, 90.0, atol=1e-7)
        zero = np.abs(finite) < 1e-7
        assert ninety.sum() == 12 and zero.sum() == 6

    def test_matches_acos_oracle(self, rng):
        mesh = make_icosphere(subdiv=1, radius=1.3)
        adj = build_adjacency(mesh)
        ang = dihedral_angles(mesh, adj)
        normals = mesh.face_normals()
        two = adj.edge_n_faces == 2
        for e in np.nonzero(two)[0][::7]:
            f0, f1 = adj.edge_faces[e]
            oracle = np.arccos(np.clip(normals[f0] @ normals[f1], -1, 1))
            assert abs(np.radians(ang[e]) - oracle) < 1e-9

    def test_boundary_excluded(self):
        mesh = make_plane()
        ang = dihedral_angles(mesh)
        # 5 edges: 4 boundary (NaN) + 1 diagonal
        assert np.isnan(ang).sum() == 4
        assert np.isfinite(ang).sum() == 1

    def test_rigid_motion_invariance(self, rng):
        mesh = make_icosphere(subdiv=1)
        ang0 = dihedral_angles(mesh)
        from gsmesh.scene import quaternions_to_rotations
        R = quaternions_to_rotations(rng.normal(size=(1, 4)))[0]
        moved = TexturedMesh(mesh.vertices @ R.T + np.array([3.0, -2.0, 5.0]),
                             mesh.triangles)
        ang1 = dihedral_angles(moved)
        finite = np.isfinite(ang0)
        assert np.abs(np.radians(ang0[finite]) - np.radians(ang1[finite])).max() < 1e-9


class TestComponents:
    def test_sphere_single_component_kept(self):
        mesh = make_icosphere(subdiv=2)
        labels, sizes = connected_components(mesh)
        assert len(sizes) == 1
        out, kept = drop_small_components(mesh, alpha_group=100)
        assert out.n_faces == mesh.n_faces
        np.testing.assert_array_equal(kept, np.arange(mesh.n_faces))

    def test_small_island_removed(self):
        sphere = make_icosphere(subdiv=2)
        quad = make_plane(half=0.2, z=5.0)
        mesh = merge_meshes([sphere, quad])
        out, kept = drop_small_components(mesh, alpha_group=100)
        assert out.n_faces == sphere.n_faces
        assert kept.max() < sphere.n_faces

    def test_matches_union_find_oracle(self, rng):
        mesh = make_icosphere(subdiv=2)
        keep = rng.random(mesh.n_faces) > 0.35
        sub = TexturedMesh(mesh.vertices, mesh.triangles[keep])
        labels, _ = connected_components(sub)
        oracle = union_find_components(sub)
        # same partition up to label renaming
        pairs = set(zip(labels.tolist(), oracle.tolist()))
        assert len(pairs) == len(set(labels.tolist()))
        assert len(pairs) == len(set(oracle.tolist()))


class TestCloseHoles:
    def test_single_triangle_hole_restored(self):
        mesh = make_grid_plane(5, 5)
        area0 = mesh.face_areas().sum()
        # remove an interior triangle
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        interior = np.argmin(np.linalg.norm(centroids[:, :2], axis=1))
        mask = np.ones(mesh.n_faces, dtype=bool)
        mask[interior] = False
        holed = TexturedMesh(mesh.vertices, mesh.triangles[mask])
        closed = close_holes(holed, max_boundary_len=10)
        assert closed.face_areas().sum() == pytest.approx(area0, abs=1e-6)
        adj = build_adjacency(closed)
        # only the outer rectangle boundary remains
        assert adj.boundary_edges.sum() == 20

    def test_open_cylinder_untouched(self):
        cyl = make_prism(radius=0.5, height=2.0, sides=12, segments=3, caps=False)
        out = close_holes(cyl, max_boundary_len=8)  # rims have 12 edges
        assert out.n_faces == cyl.n_faces
        assert len(out.vertices) == len(cyl.vertices)

    def test_punctured_sphere_euler_restored(self, rng):
        mesh = make_icosphere(subdiv=2)
        assert euler_characteristic(mesh) == 2
        # puncture 5 pairwise non-adjacent faces
        removed = []
        banned = set()
        for fi in rng.permutation(mesh.n_faces):
            tri = set(mesh.triangles[fi])
            if banned & tri:
                continue
            removed.append(fi)
            banned |= tri
            if len(removed) == 5:
                break
        mask = np.ones(mesh.n_faces, dtype=bool)
        mask[removed] = False
        holed = TexturedMesh(mesh.vertices, mesh.triangles[mask])
        assert euler_characteristic(holed) != 2
        closed = close_holes(holed, max_boundary_len=6)
        assert euler_characteristic(closed) == 2
        adj = build_adjacency(closed)
        assert adj.boundary_edges.sum() == 0


class TestSubdivideSmooth:
    def test_plane_fixed_point(self):
        mesh = make_grid_plane(4, 4, z=1.5)
        out, parents = subdivide_smooth(mesh, iterations=1)
        assert np.abs(out.vertices[:, 2] - 1.5).max() < 1e-12

    def test_face_count_quadruples(self):
        mesh = make_icosphere(subdiv=1)
        for iters, factor in ((1, 4), (2, 16)):
            out, parents = subdivide_smooth(mesh, iterations=iters)
            assert out.n_faces == factor * mesh.n_faces
            assert len(parents) == out.n_faces
            assert parents.max() == mesh.n_faces - 1

    def test_icosahedron_moves_toward_sphere(self):
        ico = make_icosphere(subdiv=0)
        # worst input surface point: face centroids (the inradius)
        cent = ico.vertices[ico.triangles].mean(axis=1)
        input_dev = np.abs(np.linalg.norm(cent, axis=1) - 1.0).max()
        out, _ = subdivide_smooth(ico, iterations=1)
        out_dev = np.abs(np.linalg.norm(out.vertices, axis=1) - 1.0).max()
        assert out_dev < input_dev

    def test_uvs_interpolated(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
        tris = np.array([[0, 1, 2]], dtype=np.int32)
        uvs = np.array([[[0, 0], [1, 0], [0, 1.0]]])
        tex = np.full((4, 4, 3), 0.5)
        mesh = TexturedMesh(verts, tris, uvs, tex)
        out, _ = subdivide_smooth(mesh, 1)
        assert out.uvs.shape == (4, 3, 2)
        # child 0 keeps corner (0,0) and gains the two adjacent midpoints
        np.testing.assert_allclose(sorted(map(tuple, out.uvs[0])),
                                   [(0, 0), (0, 0.5), (0.5, 0)])

    def test_consistency_audit(self):
        mesh = make_icosphere(subdiv=1)
        out, _ = subdivide_smooth(mesh, 2)
        out.audit()
        adj = build_adjacency(out)
        assert not adj.non_manifold_edges.any()
        assert adj.boundary_edges.sum() == 0
