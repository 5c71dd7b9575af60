"""On-disk interchange: 3DGS-convention PLY, OBJ+MTL+PNG meshes, cameras JSON.

All binary formats are little-endian; PLY payload is float32. Images are
8-bit PNG in linear RGB (no transfer function applied either way); normal
maps use 16-bit PNG with n = pixel / 32767.5 - 1 followed by renormalization.
Depth maps travel as .npy (float, NaN = invalid).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

import cv2
import numpy as np
from PIL import Image

from .scene import Camera, GaussianSet, NormalMap, SceneError, TexturedMesh


class FormatError(ValueError):
    """Malformed input file."""


# ---------------------------------------------------------------------------
# Gaussian PLY (reference 3DGS property naming)
# ---------------------------------------------------------------------------

_BASE_PROPS = ["x", "y", "z", "nx", "ny", "nz",
               "f_dc_0", "f_dc_1", "f_dc_2",
               "opacity",
               "scale_0", "scale_1", "scale_2",
               "rot_0", "rot_1", "rot_2", "rot_3"]


def save_gaussians(gs: GaussianSet, path) -> None:
    n = len(gs)
    props = list(_BASE_PROPS)
    n_rest = 0
    if gs.colors_rest is not None:
        n_rest = gs.colors_rest.shape[1] * 3
        # channel-major: all coefficients of R, then G, then B
        props = props[:9] + [f"f_rest_{i}" for i in range(n_rest)] + props[9:]

    cols = [gs.centers[:, 0], gs.centers[:, 1], gs.centers[:, 2],
            np.zeros(n), np.zeros(n), np.zeros(n),
            gs.colors_dc[:, 0], gs.colors_dc[:, 1], gs.colors_dc[:, 2]]
    if n_rest:
        rest = gs.colors_rest.transpose(0, 2, 1).reshape(n, -1)  # (N, 3*K) channel-major
        cols.extend(rest[:, i] for i in range(n_rest))
    cols.extend([gs.logit_opacities,
                 gs.log_scales[:, 0], gs.log_scales[:, 1], gs.log_scales[:, 2],
                 gs.rotations[:, 0], gs.rotations[:, 1], gs.rotations[:, 2], gs.rotations[:, 3]])

    data = np.stack([np.asarray(c, dtype=np.float32) for c in cols], axis=1) if n else \
        np.zeros((0, len(props)), dtype=np.float32)

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_gaussians(path) -> GaussianSet:
    with open(path, "rb") as f:
        raw = f.read()
    end = raw.find(b"end_header\n")
    if end < 0:
        raise FormatError("malformed PLY: missing end_header")
    header_lines = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end + len(b"end_header\n"):]

    if not header_lines or header_lines[0].strip() != "ply":
        raise FormatError("malformed PLY: missing 'ply' magic")
    fmt = next((l for l in header_lines if l.startswith("format")), "")
    if "binary_little_endian" not in fmt:
        raise FormatError(f"unsupported PLY format line: {fmt!r}")

    n = None
    props: List[str] = []
    in_vertex = False
    for line in header_lines[1:]:
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] != "float":
                raise FormatError(f"property {parts[2]!r} has unsupported type {parts[1]!r}")
            props.append(parts[2])
    if n is None:
        raise FormatError("malformed PLY: no vertex element")

    required = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    for p in required:
        if p not in props:
            raise FormatError(f"PLY missing required property {p!r}")

    expected = n * len(props) * 4
    if len(body) < expected:
        raise FormatError(f"PLY body truncated: {len(body)} bytes < {expected} expected")
    table = np.frombuffer(body[:expected], dtype="<f4").reshape(n, len(props)).astype(np.float64)
    col = {p: table[:, i] for i, p in enumerate(props)}

    rest_names = sorted((p for p in props if p.startswith("f_rest_")),
                        key=lambda s: int(s.split("_")[-1]))
    colors_rest = None
    if rest_names:
        if len(rest_names) % 3:
            raise FormatError(f"f_rest_* count {len(rest_names)} not divisible by 3")
        k = len(rest_names) // 3
        flat = np.stack([col[p] for p in rest_names], axis=1)  # (N, 3*K) channel-major
        colors_rest = flat.reshape(n, 3, k).transpose(0, 2, 1)
        if k != 3:
            raise FormatError(f"only degree-1 SH supported (3 rest coefficients), file has {k}")

    return GaussianSet(
        np.stack([col["x"], col["y"], col["z"]], axis=1),
        np.stack([col["rot_0"], col["rot_1"], col["rot_2"], col["rot_3"]], axis=1),
        np.stack([col["scale_0"], col["scale_1"], col["scale_2"]], axis=1),
        col["opacity"],
        np.stack([col["f_dc_0"], col["f_dc_1"], col["f_dc_2"]], axis=1),
        colors_rest,
    )


# ---------------------------------------------------------------------------
# OBJ / MTL meshes
# ---------------------------------------------------------------------------

def save_mesh(mesh: TexturedMesh, path) -> None:
    """Write OBJ (+ MTL and texture PNG when the mesh is textured).

    The MTL and texture are placed next to the OBJ with matching stem.
    """
    path = Path(path)
    lines = ["# gsmesh OBJ export"]
    has_tex = mesh.uvs is not None
    if has_tex:
        mtl_path = path.with_suffix(".mtl")
        tex_path = path.with_name(path.stem + "_texture.png")
        lines.append(f"mtllib {mtl_path.name}")
    for v in mesh.vertices.astype(np.float32):
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    if has_tex:
        uv_flat = mesh.uvs.reshape(-1, 2).astype(np.float32)
        for uv in uv_flat:
            lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
        lines.append("usemtl material0")
        for i, t in enumerate(mesh.triangles):
            a, b, c = (int(x) + 1 for x in t)
            ta, tb, tc = 3 * i + 1, 3 * i + 2, 3 * i + 3
            lines.append(f"f {a}/{ta} {b}/{tb} {c}/{tc}")
    else:
        for t in mesh.triangles:
            lines.append(f"f {int(t[0]) + 1} {int(t[1]) + 1} {int(t[2]) + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    if has_tex:
        mtl_path.write_text(
            f"newmtl material0\nKd 1 1 1\nmap_Kd {tex_path.name}\n", encoding="ascii")
        save_image(mesh.texture, tex_path)


def load_mesh(path) -> TexturedMesh:
    path = Path(path)
    vertices: List[List[float]] = []
    uvs_pool: List[List[float]] = []
    tris: List[List[int]] = []
    tri_uv_idx: List[List[int]] = []
    mtl_file = None

    for ln, line in enumerate(path.read_text(encoding="utf-8", errors="replace").splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            uvs_pool.append([float(parts[1]), float(parts[2])])
        elif tag == "mtllib":
            mtl_file = parts[1]
        elif tag == "f":
            corners = parts[1:]
            if len(corners) != 3:
                raise FormatError(f"{path.name}:{ln}: non-triangular face ({len(corners)} corners)")
            vi, ti = [], []
            for c in corners:
                sub = c.split("/")
                vi.append(int(sub[0]))
                ti.append(int(sub[1]) if len(sub) > 1 and sub[1] else 0)
            tris.append(vi)
            tri_uv_idx.append(ti)

    nv, nt = len(vertices), len(uvs_pool)

    def resolve(idx, count, what, ln_hint):
        i = idx - 1 if idx > 0 else count + idx
        if not (0 <= i < count):
            raise FormatError(f"{path.name}: dangling {what} index {idx}")
        return i

    tri_arr = np.array([[resolve(i, nv, "vertex", 0) for i in t] for t in tris],
                       dtype=np.int32).reshape(-1, 3)
    has_uv = nt > 0 and all(all(i != 0 for i in t) for t in tri_uv_idx)

    uvs = texture = None
    if has_uv:
        uv_idx = np.array([[resolve(i, nt, "uv", 0) for i in t] for t in tri_uv_idx], dtype=np.int64)
        uvs = np.asarray(uvs_pool, dtype=np.float64)[uv_idx]
        texture = None
        if mtl_file is not None:
            tex_name = _texture_from_mtl(path.parent / mtl_file)
            if tex_name is not None:
                texture = load_image(path.parent / tex_name)
        if texture is None:
            # UVs without a resolvable texture: keep geometry only
            uvs = None
    return TexturedMesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3), tri_arr, uvs, texture)


def _texture_from_mtl(mtl_path: Path) -> Optional[str]:
    if not mtl_path.exists():
        return None
    for line in mtl_path.read_text(encoding="utf-8", errors="replace").splitlines():
        parts = line.split()
        if parts and parts[0] == "map_Kd":
            return parts[1]
    return None


# ---------------------------------------------------------------------------
# Images / depth / normal maps
# ---------------------------------------------------------------------------

def save_image(img: np.ndarray, path) -> None:
    """(H, W, 3) floats in [0, 1] -> 8-bit PNG (linear values, no gamma)."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_depth(depth: np.ndarray, path) -> None:
    np.save(path, np.asarray(depth, dtype=np.float32))


def load_depth(path) -> np.ndarray:
    return np.load(path).astype(np.float64)


def save_normal_map(nm: NormalMap, path) -> None:
    """16-bit PNG, n encoded as pixel = (n + 1) * 32767.5; invalid pixels
    encode the zero vector (pixel 32767/32768, decodes to ~zero norm)."""
    n = np.where(nm.valid[..., None], nm.normals, 0.0)
    enc = np.clip(np.rint((n + 1.0) * 32767.5), 0, 65535).astype(np.uint16)
    # cv2 writes BGR; flip so the file stores conventional RGB channel order
    if not cv2.imwrite(str(path), enc[..., ::-1]):
        raise FormatError(f"failed to write normal map {path}")


def load_normal_map(path) -> NormalMap:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot read normal map {path}")
    if raw.dtype != np.uint16 or raw.ndim != 3 or raw.shape[2] != 3:
        raise FormatError(f"normal map must be 16-bit RGB PNG, got {raw.dtype} shape {raw.shape}")
    n = raw[..., ::-1].astype(np.float64) / 32767.5 - 1.0
    norm = np.linalg.norm(n, axis=-1)
    valid = norm > 0.5
    n = np.divide(n, norm[..., None], out=np.zeros_like(n), where=valid[..., None])
    return NormalMap(n, valid)


# ---------------------------------------------------------------------------
# Cameras JSON
# ---------------------------------------------------------------------------

def save_cameras(cameras, path) -> None:
    entries = []
    for c in cameras:
        entries.append({
            "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "width": c.width, "height": c.height,
            "world_to_camera": [float(x) for x in np.asarray(c.world_to_camera).reshape(-1)],
            "near": c.near, "far": c.far,
        })
    Path(path).write_text(json.dumps(entries, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_cameras(path) -> List[Camera]:
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    if not isinstance(entries, list):
        raise FormatError("cameras file must be a JSON array")
    cams = []
    for i, e in enumerate(entries):
        try:
            w2c = np.asarray(e["world_to_camera"], dtype=np.float64)
            if w2c.size != 16:
                raise SceneError(f"world_to_camera must have 16 elements, got {w2c.size}")
            cams.append(Camera(
                fx=float(e["fx"]), fy=float(e["fy"]), cx=float(e["cx"]), cy=float(e["cy"]),
                width=int(e["width"]), height=int(e["height"]),
                world_to_camera=w2c.reshape(4, 4),
                near=float(e.get("near", 0.01)), far=float(e.get("far", 100.0)),
            ))
        except KeyError as k:
            raise FormatError(f"camera entry {i}: missing field {k}") from None
        except SceneError as err:
            raise FormatError(f"camera entry {i}: {err}") from None
    return cams
