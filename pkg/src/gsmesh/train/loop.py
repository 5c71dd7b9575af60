"""Joint optimization loop for Gaussians and (optionally) a mesh texture.

Without a mesh, this is the vanilla splatting trainer: the mesh branches
are never entered and never touch the mesh rasterizer. With a mesh, its
per-camera fragment buffers are rasterized once and cached; per iteration
only the texture lookup changes.

Checkpoint layout (directory): gaussians.ply, mesh.obj (+ .mtl/texture) when
training hybrid, optimizer_state.bin, metrics.jsonl, config.json.

optimizer_state.bin format (little-endian): magic "GSOPT001", uint32 step
count, uint32 group count; per group: uint16 name length, utf-8 name,
uint8 ndim, uint32 dims, then float64 param, m, v arrays back to back.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .. import fileio
from ..config import TrainConfig
from ..scene import Camera, GaussianSet, TexturedMesh, camera_extent
from ..splat import rasterize_backward, render
from .adam import Adam, exponential_lr
from .densify import DensifyState, densify_and_prune, inverse_sigmoid, reset_opacity
from .losses import LossBreakdown, composite_loss


def init_gaussians_from_mesh(mesh: TexturedMesh, n: int, seed: int = 0,
                             jitter: float = 0.01) -> GaussianSet:
    """Surface-sampled initialization standing in for an SfM point cloud:
    positions on the mesh (jittered), colors from the texture when present,
    scales from nearest-neighbor spacing, opacity 0.1."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    probs = areas / areas.sum()
    idx = rng.choice(mesh.n_faces, size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    b = np.stack([1 - r1, r1 * (1 - r2), r1 * r2], axis=1)
    tri = mesh.triangles[idx]
    pts = np.einsum("nk,nkd->nd", b, mesh.vertices[tri])
    pts += rng.normal(0, jitter, pts.shape)

    if mesh.texture is not None:
        uv = np.einsum("nk,nkd->nd", b, mesh.uvs[idx])
        th, tw = mesh.texture.shape[:2]
        tx = np.clip((uv[:, 0] * tw).astype(int), 0, tw - 1)
        ty = np.clip(((1 - uv[:, 1]) * th).astype(int), 0, th - 1)
        rgb = mesh.texture[ty, tx]
    else:
        rgb = np.full((n, 3), 0.5)
    # invert the color head: c = 0.5 + C0 * dc
    from ..splat import SH_C0
    colors_dc = (np.clip(rgb, 0.01, 0.99) - 0.5) / SH_C0

    d_nn, _ = cKDTree(pts).query(pts, k=2)
    spacing = np.maximum(d_nn[:, 1], 1e-4)
    log_scales = np.tile(np.log(spacing)[:, None], (1, 3))

    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    return GaussianSet(pts, quats, log_scales,
                       np.full(n, inverse_sigmoid(np.array(0.1))), colors_dc)


@dataclass
class TrainResult:
    gaussians: GaussianSet
    mesh: Optional[TexturedMesh]
    metrics: List[dict]

    @property
    def final(self) -> dict:
        return self.metrics[-1]


class GaussianTrainer:
    """Owns the optimizable arrays and the optimizer state."""

    def __init__(self, init: GaussianSet, config: TrainConfig, extent: float,
                 mesh: Optional[TexturedMesh] = None):
        self.config = config
        self.extent = extent
        params: Dict[str, np.ndarray] = {
            "centers": init.centers.copy(),
            "rotations": init.rotations.copy(),
            "log_scales": init.log_scales.copy(),
            "logit_opacities": init.logit_opacities.copy(),
            "colors_dc": init.colors_dc.copy(),
        }
        lrs = {
            "centers": config.lr_position,
            "rotations": config.lr_rotation,
            "log_scales": config.lr_scale,
            "logit_opacities": config.lr_opacity,
            "colors_dc": config.lr_color,
        }
        if init.colors_rest is not None:
            params["colors_rest"] = init.colors_rest.copy()
            lrs["colors_rest"] = config.lr_color / 20.0
        self.opt = Adam(params, lrs)
        self.pos_lr = exponential_lr(config.lr_position, config.lr_position_final,
                                     config.max_iters)
        self.mesh = mesh.copy() if mesh is not None else None
        self.tex_opt = None
        if self.mesh is not None and self.mesh.texture is not None:
            self.tex_opt = Adam({"texture": self.mesh.texture},
                                {"texture": config.lr_texture})
            self.mesh.texture = self.tex_opt.params["texture"]

    @property
    def n_gaussians(self) -> int:
        return len(self.opt.params["centers"])

    def snapshot(self) -> GaussianSet:
        p = self.opt.params
        return GaussianSet(p["centers"].copy(), p["rotations"].copy(),
                           p["log_scales"].copy(), p["logit_opacities"].copy(),
                           p["colors_dc"].copy(),
                           p["colors_rest"].copy() if "colors_rest" in p else None)

    def view(self) -> GaussianSet:
        p = self.opt.params
        return GaussianSet(p["centers"], p["rotations"], p["log_scales"],
                           p["logit_opacities"], p["colors_dc"],
                           p.get("colors_rest"))

    def step(self, grads: Dict[str, np.ndarray], iteration: int) -> None:
        self.opt.lrs["centers"] = self.pos_lr(iteration)
        self.opt.step(grads)
        q = self.opt.params["rotations"]
        q /= np.linalg.norm(q, axis=1, keepdims=True)

    def texture_step(self, grad_texture: np.ndarray) -> None:
        self.tex_opt.step({"texture": grad_texture})
        np.clip(self.tex_opt.params["texture"], 0.0, 1.0,
                out=self.tex_opt.params["texture"])


def train(cameras: List[Camera], images: List[np.ndarray], config: TrainConfig,
          mesh: Optional[TexturedMesh] = None,
          init: Optional[GaussianSet] = None,
          init_points: int = 1500,
          out_dir=None,
          log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Optimize a GaussianSet (and the mesh texture in hybrid mode) against
    the training images. Deterministic for a fixed config.seed."""
    if len(cameras) != len(images):
        raise ValueError(f"{len(cameras)} cameras but {len(images)} images")
    if not cameras:
        raise ValueError("no training views")

    rng = np.random.default_rng(config.seed)
    extent = camera_extent(cameras) if len(cameras) > 1 else 1.0

    if init is None:
        if mesh is None:
            raise ValueError("either an initial GaussianSet or a mesh to sample is required")
        init = init_gaussians_from_mesh(mesh, init_points, seed=config.seed)

    trainer = GaussianTrainer(init, config, extent, mesh=mesh)
    state = DensifyState.zeros(trainer.n_gaussians)

    fragments = None
    if trainer.mesh is not None:
        from ..meshraster import rasterize_fragments, sample_texture
        fragments = [rasterize_fragments(trainer.mesh, cam) for cam in cameras]

    metrics: List[dict] = []
    order = np.zeros(0, dtype=np.int64)
    bg = np.asarray(config.background, dtype=np.float64)

    for it in range(1, config.max_iters + 1):
        if len(order) == 0:
            order = rng.permutation(len(cameras))
        vi = int(order[0])
        order = order[1:]
        cam = cameras[vi]
        target = images[vi]

        mesh_layer_obj = None
        covered = None
        i_m = None
        if trainer.mesh is not None:
            from ..meshraster import sample_texture
            from ..splat import MeshLayer
            frags = fragments[vi]
            i_m = sample_texture(trainer.mesh.texture, frags.uv, frags.valid)
            mesh_layer_obj = MeshLayer(color=i_m, depth=frags.depth,
                                       triangle_id=frags.triangle_id)
            covered = frags.valid

        outputs, ctx = render(trainer.view(), cam, background=bg, mesh=mesh_layer_obj)

        breakdown, grad_ih, grad_im_tex, grad_t = composite_loss(
            target, outputs.color, i_m, covered, outputs.transmittance, it, config)

        grads = rasterize_backward(ctx, grad_ih, grad_transmittance=grad_t)

        trainer.step({
            "centers": grads.centers,
            "rotations": grads.rotations,
            "log_scales": grads.log_scales,
            "logit_opacities": grads.logit_opacities,
            "colors_dc": grads.colors_dc,
            **({"colors_rest": grads.colors_rest} if grads.colors_rest is not None else {}),
        }, it)

        if trainer.mesh is not None:
            from ..meshraster import texture_backward
            grad_im_total = grads.mesh_color
            if grad_im_tex is not None:
                grad_im_total = grad_im_total + grad_im_tex
            tex_shape = trainer.mesh.texture.shape[:2]
            grad_tex = texture_backward(fragments[vi], grad_im_total, tex_shape)
            trainer.texture_step(grad_tex)

        # density control
        if it < config.densify_until_iter:
            state.update(grads.visible, grads.densify_norm)
            if it >= config.densify_from_iter and it % config.densify_interval == 0:
                densify_and_prune(trainer.opt.params, trainer.opt, state,
                                  extent, config, rng)
            if it % config.opacity_reset_interval == 0:
                reset_opacity(trainer.opt)

        if it % config.log_every == 0 or it == config.max_iters:
            rec = {"iter": it, "n_gaussians": trainer.n_gaussians,
                   **breakdown.to_dict()}
            metrics.append(rec)
            if log:
                log(json.dumps(rec, sort_keys=True))

    # end-of-training summary: mean transmittance over every train view
    if trainer.mesh is not None:
        total_t = []
        for vi, cam in enumerate(cameras):
            from ..meshraster import sample_texture
            from ..splat import MeshLayer
            frags = fragments[vi]
            i_m = sample_texture(trainer.mesh.texture, frags.uv, frags.valid)
            layer = MeshLayer(color=i_m, depth=frags.depth, triangle_id=frags.triangle_id)
            out, _ = render(trainer.view(), cam, background=bg, mesh=layer)
            if frags.valid.any():
                total_t.append(float(out.transmittance[frags.valid].mean()))
        summary_t = float(np.mean(total_t)) if total_t else float("nan")
    else:
        summary_t = float("nan")
    metrics.append({"iter": config.max_iters, "final": True,
                    "n_gaussians": trainer.n_gaussians,
                    "mean_T_on_mesh": summary_t})

    result = TrainResult(trainer.snapshot(), trainer.mesh, metrics)
    if out_dir is not None:
        save_checkpoint(result, trainer, config, out_dir)
    return result


def save_checkpoint(result: TrainResult, trainer: GaussianTrainer,
                    config: TrainConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_gaussians(result.gaussians, out / "gaussians.ply")
    if result.mesh is not None:
        fileio.save_mesh(result.mesh, out / "mesh.obj")
    config.save(out / "config.json")
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as f:
        for rec in result.metrics:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    _save_optimizer_state(trainer.opt, out / "optimizer_state.bin")


def _save_optimizer_state(opt: Adam, path) -> None:
    with open(path, "wb") as f:
        f.write(b"GSOPT001")
        f.write(struct.pack("<II", opt.step_count, len(opt.params)))
        for name in sorted(opt.params):
            arr = opt.params[name]
            nm = name.encode("utf-8")
            f.write(struct.pack("<H", len(nm)))
            f.write(nm)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            for a in (arr, opt.m[name], opt.v[name]):
                f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_optimizer_state(path) -> dict:
    """Parse optimizer_state.bin back into {name: (param, m, v)} + step."""
    raw = Path(path).read_bytes()
    if raw[:8] != b"GSOPT001":
        raise ValueError("not a gsmesh optimizer state file")
    off = 8
    step, n_groups = struct.unpack_from("<II", raw, off)
    off += 8
    groups = {}
    for _ in range(n_groups):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + ln].decode("utf-8")
        off += ln
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrs = []
        for _ in range(3):
            arrs.append(np.frombuffer(raw, dtype="<f8", count=size, offset=off)
                        .reshape(shape).copy())
            off += 8 * size
        groups[name] = tuple(arrs)
    return {"step": step, "groups": groups}
