"""Command-line front end: synth, extract-mesh, prune-mesh, train, render,
eval, bench.

Every run writes a manifest (config snapshot, input hashes, timestamps)
into the output directory before doing work and finalizes it afterwards.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fileio
from .config import ConfigError, TrainConfig


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(path) -> dict:
    p = Path(path)
    if p.is_file():
        return {p.name: _hash_file(p)}
    out = {}
    for f in sorted(p.rglob("*")):
        if f.is_file():
            out[str(f.relative_to(p))] = _hash_file(f)
    return out


class Manifest:
    def __init__(self, out_dir, subcommand: str, config: dict, inputs: dict):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {
            "tool": "gsmesh",
            "version": __version__,
            "subcommand": subcommand,
            "config": config,
            "inputs": {k: _hash_tree(v) for k, v in inputs.items() if v is not None},
            "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "status": "running",
            "outputs": [],
        }
        self._write()

    def _write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.data, indent=1, sort_keys=True) + "\n",
                       encoding="utf-8")
        tmp.replace(self.path)

    def finalize(self, outputs):
        self.data["status"] = "done"
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        self.data["outputs"] = [str(o) for o in outputs]
        self._write()


def _load_config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if getattr(args, "config", None) else TrainConfig()
    overrides = {}
    for name in ("seed", "max_iters", "warmup_iters", "densify_until_iter",
                 "texture_weight", "mask_variant", "tsdf_voxel", "tsdf_max_depth",
                 "decim_target_faces", "alpha_normal", "alpha_area", "alpha_group",
                 "angle_deg", "texture_size", "mask_combine"):
        v = getattr(args, name.replace("-", "_"), None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "desk_scale", False):
        return TrainConfig.desk_scale(**overrides)
    return cfg.replace(**overrides) if overrides else cfg


def _log_emitter(args):
    if getattr(args, "log_json", False):
        return lambda s: print(s, file=sys.stderr)
    return lambda s: print(s, file=sys.stderr)


# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import PRESETS, make_scene, save_scene
    man = Manifest(args.out, "synth", {"preset": args.preset, "seed": args.seed}, {})
    scene = make_scene(args.preset, seed=args.seed)
    save_scene(scene, args.out)
    man.finalize([args.out])
    print(f"wrote scene '{args.preset}' (seed {args.seed}) with "
          f"{len(scene.cameras)} cameras to {args.out}")
    return 0


def cmd_extract_mesh(args) -> int:
    from .meshops import extract_mesh, filter_large_gaussians, tsdf_fuse
    from .splat import render_depth
    from .synth import load_scene
    cfg = _load_config(args)
    if args.voxel is not None and args.voxel <= 0:
        raise UsageError("--voxel must be positive")
    voxel = args.voxel if args.voxel is not None else cfg.tsdf_voxel
    if args.source == "gs-depth" and not args.gaussians:
        raise UsageError("--source gs-depth requires --gaussians")

    out_dir = Path(args.out).parent
    man = Manifest(out_dir if str(out_dir) != "" else ".", "extract-mesh",
                   {"voxel": voxel, "source": args.source, "max_depth": cfg.tsdf_max_depth},
                   {"scene": args.scene, "gaussians": args.gaussians})
    scene = load_scene(args.scene)
    cams = scene.train_cameras
    if args.source == "gt-depth":
        depths = [scene.depths[i] for i in scene.train_idx]
    else:
        gs = fileio.load_gaussians(args.gaussians)
        gs = filter_large_gaussians(gs, cams, frac=cfg.scale_filter_frac)
        depths = [render_depth(gs, c) for c in cams]
    vol = tsdf_fuse(depths, cams, voxel_size=voxel, max_depth=cfg.tsdf_max_depth)
    mesh = extract_mesh(vol)
    fileio.save_mesh(mesh, args.out)
    man.finalize([args.out])
    print(f"extracted {mesh.n_faces} faces -> {args.out}")
    return 0


def cmd_prune_mesh(args) -> int:
    from .prune import prune_pipeline
    from .synth import load_scene
    cfg = _load_config(args)
    man = Manifest(args.out, "prune-mesh", cfg.to_dict(),
                   {"scene": args.scene, "mesh": args.mesh})
    scene = load_scene(args.scene)
    raw = fileio.load_mesh(args.mesh)
    cams = scene.train_cameras
    normals = [scene.normals[i] for i in scene.train_idx]
    images = scene.train_images
    mesh, report = prune_pipeline(raw, cams, normals, images, cfg,
                                  texture_init_mode=args.texture_init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_mesh(mesh, out / "pruned_mesh.obj")
    (out / "prune_report.json").write_text(
        json.dumps(report.to_json_dict(), indent=1, sort_keys=True) + "\n",
        encoding="utf-8")
    man.finalize([str(out / "pruned_mesh.obj"), str(out / "prune_report.json")])
    for st in report.stages:
        print(json.dumps(st, sort_keys=True), file=sys.stderr)
    print(f"pruned mesh: {mesh.n_faces} faces -> {out / 'pruned_mesh.obj'}")
    return 0


def cmd_train(args) -> int:
    from .synth import load_scene
    from .train import init_gaussians_from_mesh, train
    cfg = _load_config(args)
    man = Manifest(args.out, "train", cfg.to_dict(),
                   {"scene": args.scene, "mesh": args.mesh})
    scene = load_scene(args.scene)
    cams = scene.train_cameras
    images = scene.train_images
    mesh = None
    if not args.no_mesh:
        if args.mesh is None:
            raise UsageError("provide --mesh or pass --no-mesh for the pure baseline")
        mesh = fileio.load_mesh(args.mesh)
        if mesh.texture is None:
            raise UsageError("training mesh must carry UVs and a texture")
    init = init_gaussians_from_mesh(scene.mesh, args.init_points, seed=cfg.seed)
    log = _log_emitter(args)
    res = train(cams, images, cfg, mesh=mesh, init=init, out_dir=args.out, log=log)
    man.finalize([str(Path(args.out) / "gaussians.ply"),
                  str(Path(args.out) / "metrics.jsonl")])
    print(f"trained {res.metrics[-1]['n_gaussians']} gaussians -> {args.out}")
    return 0


def _load_checkpoint(ckpt_dir):
    ckpt = Path(ckpt_dir)
    gs = fileio.load_gaussians(ckpt / "gaussians.ply")
    mesh = None
    if (ckpt / "mesh.obj").exists():
        mesh = fileio.load_mesh(ckpt / "mesh.obj")
    return gs, mesh


def cmd_render(args) -> int:
    from .meshraster import mesh_layer
    from .splat import render
    from .synth import load_scene
    man = Manifest(args.out, "render", {}, {"scene": args.scene, "checkpoint": args.checkpoint})
    scene = load_scene(args.scene)
    gs, mesh = _load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, cam in enumerate(scene.cameras):
        layer = mesh_layer(mesh, cam) if mesh is not None else None
        outputs, _ = render(gs, cam, mesh=layer)
        p = out / f"render_{i:03d}.png"
        fileio.save_image(outputs.color, p)
        written.append(str(p))
    man.finalize(written)
    print(f"rendered {len(written)} views -> {out}")
    return 0


def cmd_eval(args) -> int:
    from .meshraster import mesh_layer
    from .metrics import bench_fps, evaluate_views
    from .synth import load_scene
    man = Manifest(args.out, "eval", {}, {"scene": args.scene, "checkpoint": args.checkpoint})
    scene = load_scene(args.scene)
    gs, mesh = _load_checkpoint(args.checkpoint)
    idx = scene.test_idx if args.split == "test" else scene.train_idx
    cams = [scene.cameras[i] for i in idx]
    imgs = [scene.images[i] for i in idx]
    layers = [mesh_layer(mesh, c) for c in cams] if mesh is not None else None
    agg, renders = evaluate_views(gs, cams, imgs, mesh_layers=layers)
    bench = bench_fps(gs, cams[0], mesh=layers[0] if layers else None,
                      frames=args.frames)
    report = {"psnr": agg["psnr"], "ssim": agg["ssim"],
              "n_gaussians": agg["n_gaussians"], "fps": bench.fps,
              "per_view": agg["per_view"]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n",
                                   encoding="utf-8")
    for i, (r, gt) in enumerate(zip(renders, imgs)):
        side = np.concatenate([gt, r], axis=1)
        fileio.save_image(side, out / f"side_by_side_{i:03d}.png")
    man.finalize([str(out / "eval.json")])
    print(json.dumps({k: report[k] for k in ("psnr", "ssim", "n_gaussians", "fps")},
                     sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    from .meshraster import mesh_layer
    from .metrics import bench_fps
    from .synth import load_scene
    scene = load_scene(args.scene)
    gs, mesh = _load_checkpoint(args.checkpoint)
    cam = scene.cameras[args.view]
    layer = mesh_layer(mesh, cam) if mesh is not None else None
    res = bench_fps(gs, cam, mesh=layer, frames=args.frames)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0


class UsageError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gsmesh",
        description="Hybrid Gaussian-splatting + textured-mesh pipeline")
    p.add_argument("--log-json", action="store_true",
                   help="emit line-delimited JSON progress to stderr")
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker threads used by the kernels")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="materialize a synthetic scene")
    sp.add_argument("--preset", required=True,
                    help="plane | plane_sphere_pole | box_room | occluder_plane")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_synth)

    ep = sub.add_parser("extract-mesh", help="TSDF-fuse depth and extract a mesh")
    ep.add_argument("--scene", required=True)
    ep.add_argument("--source", choices=("gt-depth", "gs-depth"), default="gt-depth")
    ep.add_argument("--gaussians", help="PLY for --source gs-depth")
    ep.add_argument("--voxel", type=float, default=None,
                    help="voxel size (paper default 0.01 of scene scale)")
    ep.add_argument("--config", help="TrainConfig JSON")
    ep.add_argument("--out", required=True, help="output OBJ path")
    ep.set_defaults(fn=cmd_extract_mesh)

    pp = sub.add_parser("prune-mesh", help="run the pruning pipeline (stage 1)")
    pp.add_argument("--scene", required=True)
    pp.add_argument("--mesh", required=True, help="raw OBJ from extract-mesh")
    pp.add_argument("--out", required=True, help="output directory")
    pp.add_argument("--config", help="TrainConfig JSON")
    pp.add_argument("--desk-scale", action="store_true",
                    help="use the 10x-shrunk desk schedule/targets")
    pp.add_argument("--texture-init", choices=("constant", "optimized"),
                    default="optimized",
                    help="texture initialization mode (paper default: optimized)")
    pp.add_argument("--decim-target-faces", dest="decim_target_faces", type=int,
                    help="QSlim face target (paper default 500000)")
    pp.add_argument("--alpha-normal", dest="alpha_normal", type=float,
                    help="top TV percent voting for removal (paper default 20)")
    pp.add_argument("--alpha-area", dest="alpha_area", type=float,
                    help="smallest-area percent removed (paper default 50)")
    pp.add_argument("--alpha-group", dest="alpha_group", type=int,
                    help="min component size kept (paper default 100)")
    pp.add_argument("--angle-deg", dest="angle_deg", type=float,
                    help="dihedral threshold in degrees (paper default 45)")
    pp.add_argument("--mask-combine", dest="mask_combine",
                    choices=("union", "intersection"))
    pp.add_argument("--texture-size", dest="texture_size", type=int,
                    help="atlas texture size (paper default 2048)")
    pp.set_defaults(fn=cmd_prune_mesh)

    tp = sub.add_parser("train", help="joint optimization (stage 2)")
    tp.add_argument("--scene", required=True)
    tp.add_argument("--mesh", help="pruned textured OBJ")
    tp.add_argument("--no-mesh", action="store_true", help="pure splatting baseline")
    tp.add_argument("--out", required=True)
    tp.add_argument("--config", help="TrainConfig JSON")
    tp.add_argument("--desk-scale", action="store_true")
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--init-points", type=int, default=1500)
    tp.add_argument("--max-iters", dest="max_iters", type=int,
                    help="total iterations (paper default 30000)")
    tp.add_argument("--warmup-iters", dest="warmup_iters", type=int,
                    help="photometric-only warm-up (paper default 3000)")
    tp.add_argument("--densify-until-iter", dest="densify_until_iter", type=int,
                    help="densification end (paper default 15000)")
    tp.add_argument("--texture-weight", dest="texture_weight", type=float,
                    help="texture loss weight (paper default 0.1)")
    tp.add_argument("--mask-variant", dest="mask_variant",
                    choices=("sigmoid", "identity_t", "constant_one", "constant_zero"),
                    help="transmittance mask (paper default sigmoid, k=20)")
    tp.set_defaults(fn=cmd_train)

    rp = sub.add_parser("render", help="render a checkpoint over scene cameras")
    rp.add_argument("--scene", required=True)
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--out", required=True)
    rp.set_defaults(fn=cmd_render)

    vp = sub.add_parser("eval", help="PSNR/SSIM/FPS report on a checkpoint")
    vp.add_argument("--scene", required=True)
    vp.add_argument("--checkpoint", required=True)
    vp.add_argument("--split", choices=("test", "train"), default="test")
    vp.add_argument("--frames", type=int, default=10)
    vp.add_argument("--out", required=True)
    vp.set_defaults(fn=cmd_eval)

    bp = sub.add_parser("bench", help="rasterizer-only FPS benchmark")
    bp.add_argument("--scene", required=True)
    bp.add_argument("--checkpoint", required=True)
    bp.add_argument("--view", type=int, default=0)
    bp.add_argument("--frames", type=int, default=20)
    bp.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be >= 1")
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.get_num_threads())))
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
