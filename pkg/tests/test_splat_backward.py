import numpy as np
import pytest

from gsmesh.oracles import gradient_matches
from gsmesh.splat import MeshLayer, rasterize_backward, render

from conftest import identity_camera, random_gaussians


def one_hot_grad(cam, py, px, ch):
    g = np.zeros((cam.height, cam.width, 3))
    g[py, px, ch] = 1.0
    return g


def pixel_value(gs, cam, mesh, bg, py, px, ch):
    out, _ = render(gs, cam, background=bg, mesh=mesh)
    return out.color[py, px, ch]


def analytic(gs, cam, mesh, bg, py, px, ch):
    _, ctx = render(gs, cam, background=bg, mesh=mesh)
    return rasterize_backward(ctx, one_hot_grad(cam, py, px, ch))


def stable_fd(f, h):
    """Central difference with a Richardson consistency guard; returns
    (value, ok). ok is False when the function is locally non-smooth
    (a clamp/skip/support boundary was crossed within the stencil)."""
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    ok = abs(d1 - d2) <= max(2e-6, 2e-3 * max(abs(d1), abs(d2)))
    return d2, ok


PARAM_SPECS = {
    "centers": ("centers", 3, 1e-5),
    "log_scales": ("log_scales", 3, 1e-5),
    "rotations": ("rotations", 4, 1e-5),
    "logit_opacities": ("logit_opacities", 1, 1e-5),
    "colors_dc": ("colors_dc", 3, 1e-5),
}


def run_group_check(rng, group, n_pairs, sh_degree=0, with_mesh=False,
                    size=48, n_gauss=12):
    """Compare analytic and finite-difference gradients for one parameter
    group over n_pairs sampled (gaussian, pixel, channel) triples.
    Returns (checked, failed) counts."""
    attr, comps, h = PARAM_SPECS[group]
    cam = identity_camera(width=size, height=size)
    checked = failed = 0
    guard_skips = 0
    while checked < n_pairs:
        gs = random_gaussians(rng, n_gauss, center_box=0.9, depth_range=(2.0, 5.0),
                              logit_range=(-2.0, 1.2), sh_degree=sh_degree)
        mesh = None
        if with_mesh:
            depth = np.full((size, size), 3.5)
            tri = np.zeros((size, size), dtype=np.int32)
            tri[:, size // 2:] = -1  # half-covered frame
            depth[:, size // 2:] = np.inf
            mesh = MeshLayer(color=rng.uniform(0, 1, (size, size, 3)),
                             depth=depth, triangle_id=tri)
        bg = rng.uniform(0, 1, 3)
        out, ctx = render(gs, cam, background=bg, mesh=mesh)
        if not len(ctx.proj):
            continue
        for _ in range(4):
            if checked >= n_pairs:
                break
            row = int(rng.integers(0, len(ctx.proj)))
            gi = int(ctx.proj.kept[row])
            mx, my = ctx.proj.mean2d[row]
            px = int(np.clip(mx + rng.integers(-2, 3), 0, size - 1))
            py = int(np.clip(my + rng.integers(-2, 3), 0, size - 1))
            ch = int(rng.integers(0, 3))
            grads = rasterize_backward(ctx, one_hot_grad(cam, py, px, ch))
            comp = int(rng.integers(0, comps))

            def f(delta, gi=gi, comp=comp, py=py, px=px, ch=ch):
                g2 = gs.copy()
                arr = getattr(g2, attr)
                if arr.ndim == 1:
                    arr[gi] += delta
                else:
                    arr[gi, comp] += delta
                return pixel_value(g2, cam, mesh, bg, py, px, ch)

            fd, ok = stable_fd(f, h)
            if not ok:
                guard_skips += 1
                continue
            g_arr = getattr(grads, attr)
            a = g_arr[gi] if g_arr.ndim == 1 else g_arr[gi, comp]
            checked += 1
            if not gradient_matches(a, fd, rel_tol=1e-3, abs_tol=1e-6):
                failed += 1
    assert guard_skips < n_pairs, "too many non-smooth samples; bad scene setup"
    return checked, failed


class TestGradientsVsFiniteDifferences:
    @pytest.mark.parametrize("group", list(PARAM_SPECS))
    def test_group_no_mesh(self, rng, group):
        checked, failed = run_group_check(rng, group, 25)
        assert failed == 0, f"{failed}/{checked} gradient mismatches in {group}"

    @pytest.mark.parametrize("group", ["centers", "logit_opacities", "colors_dc"])
    def test_group_with_mesh(self, rng, group):
        checked, failed = run_group_check(rng, group, 15, with_mesh=True)
        assert failed == 0, f"{failed}/{checked} gradient mismatches in {group} (mesh)"

    def test_sh_degree1_coefficients(self, rng):
        cam = identity_camera(width=48, height=48)
        checked = failed = 0
        while checked < 20:
            gs = random_gaussians(rng, 10, sh_degree=1)
            out, ctx = render(gs, cam)
            if not len(ctx.proj):
                continue
            row = int(rng.integers(0, len(ctx.proj)))
            gi = int(ctx.proj.kept[row])
            mx, my = ctx.proj.mean2d[row]
            px = int(np.clip(mx, 0, 47))
            py = int(np.clip(my, 0, 47))
            ch = int(rng.integers(0, 3))
            k = int(rng.integers(0, 3))
            c = int(rng.integers(0, 3))
            grads = rasterize_backward(ctx, one_hot_grad(cam, py, px, ch))

            def f(delta):
                g2 = gs.copy()
                g2.colors_rest[gi, k, c] += delta
                return pixel_value(g2, cam, None, (0, 0, 0), py, px, ch)

            fd, ok = stable_fd(f, 1e-5)
            if not ok:
                continue
            checked += 1
            if not gradient_matches(grads.colors_rest[gi, k, c], fd):
                failed += 1
        assert failed == 0

    def test_sh_degree1_center_includes_viewdir_term(self, rng):
        # center gradients must include the color-through-view-direction path
        cam = identity_camera(width=48, height=48)
        checked = failed = 0
        while checked < 12:
            gs = random_gaussians(rng, 8, sh_degree=1)
            out, ctx = render(gs, cam)
            if not len(ctx.proj):
                continue
            row = int(rng.integers(0, len(ctx.proj)))
            gi = int(ctx.proj.kept[row])
            mx, my = ctx.proj.mean2d[row]
            px = int(np.clip(mx + rng.integers(-1, 2), 0, 47))
            py = int(np.clip(my + rng.integers(-1, 2), 0, 47))
            ch = int(rng.integers(0, 3))
            comp = int(rng.integers(0, 3))
            grads = rasterize_backward(ctx, one_hot_grad(cam, py, px, ch))

            def f(delta):
                g2 = gs.copy()
                g2.centers[gi, comp] += delta
                return pixel_value(g2, cam, None, (0, 0, 0), py, px, ch)

            fd, ok = stable_fd(f, 1e-5)
            if not ok:
                continue
            checked += 1
            if not gradient_matches(grads.centers[gi, comp], fd):
                failed += 1
        assert failed == 0


class TestBackwardContracts:
    def test_zero_grad_in_zero_grads_out(self, rng):
        gs = random_gaussians(rng, 30)
        cam = identity_camera()
        _, ctx = render(gs, cam)
        grads = rasterize_backward(ctx, np.zeros((64, 64, 3)))
        for arr in (grads.centers, grads.rotations, grads.log_scales,
                    grads.logit_opacities, grads.colors_dc, grads.densify_norm):
            assert np.all(arr == 0.0)

    def test_mesh_pixel_no_gaussians_full_gradient(self):
        from gsmesh.scene import GaussianSet
        cam = identity_camera(width=16, height=16)
        depth = np.full((16, 16), 2.0)
        tri = np.zeros((16, 16), dtype=np.int32)
        mesh = MeshLayer(color=np.full((16, 16, 3), 0.7), depth=depth, triangle_id=tri)
        _, ctx = render(GaussianSet.empty(), cam, mesh=mesh)
        g = np.ones((16, 16, 3)) * 0.5
        grads = rasterize_backward(ctx, g)
        np.testing.assert_allclose(grads.mesh_color, g)  # T = 1 everywhere

    def test_mesh_gradient_is_t_weighted(self, rng):
        gs = random_gaussians(rng, 40, depth_range=(1.5, 3.0))
        cam = identity_camera(width=32, height=32)
        depth = np.full((32, 32), 3.5)
        tri = np.zeros((32, 32), dtype=np.int32)
        mesh = MeshLayer(color=rng.uniform(0, 1, (32, 32, 3)), depth=depth, triangle_id=tri)
        out, ctx = render(gs, cam, mesh=mesh)
        g = rng.uniform(-1, 1, (32, 32, 3))
        grads = rasterize_backward(ctx, g)
        np.testing.assert_allclose(grads.mesh_color, g * out.transmittance[..., None],
                                   atol=1e-12)

    def test_shape_mismatch_rejected(self, rng):
        gs = random_gaussians(rng, 5)
        _, ctx = render(gs, identity_camera())
        with pytest.raises(ValueError):
            rasterize_backward(ctx, np.zeros((10, 10, 3)))
