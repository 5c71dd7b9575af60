"""Training and pipeline configuration.

Every field has a default matching the published hyperparameters; the
``desk_scale`` preset divides the iteration schedule by 10 and shrinks
mesh-processing targets so full runs finish on a CPU in minutes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

MASK_VARIANTS = ("sigmoid", "identity_t", "constant_one", "constant_zero")
MASK_COMBINE_MODES = ("union", "intersection")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # schedule
    max_iters: int = 30000
    warmup_iters: int = 3000            # photometric-only warm-up length
    densify_until_iter: int = 15000     # texture loss window also ends here
    densify_from_iter: int = 500
    densify_interval: int = 100
    opacity_reset_interval: int = 3000

    # losses
    dssim_weight: float = 0.2           # lambda of the photometric mix
    texture_weight: float = 0.1         # lambda of the texture loss term
    mask_sharpness: float = 20.0        # k of the transmittance sigmoid
    mask_variant: str = "sigmoid"       # sigmoid | identity_t | constant_one | constant_zero
    zero_dssim_after_densify: bool = False

    # densification / pruning of Gaussians
    densify_grad_threshold: float = 2e-4
    opacity_prune_threshold: float = 0.005
    percent_dense: float = 0.01

    # learning rates
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_opacity: float = 0.05
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_color: float = 2.5e-3
    lr_texture: float = 1e-2

    # rendering
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    sh_degree: int = 0

    # mesh pruning pipeline
    alpha_normal: float = 20.0          # percent of highest-TV pixels
    angle_deg: float = 45.0             # dihedral threshold
    alpha_area: float = 50.0            # percent of smallest triangles
    alpha_group: int = 100              # min component size kept
    decim_target_faces: int = 500000
    scale_filter_frac: float = 0.01
    tsdf_voxel: float = 0.01
    tsdf_max_depth: float = 100.0
    mask_combine: str = "union"
    max_hole_boundary: int = 16
    subdiv_iterations: int = 1

    # texture
    texture_size: int = 2048
    tex_init_iters: int = 500
    tex_init_lr: float = 0.05

    # bookkeeping
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0 <= self.warmup_iters < self.densify_until_iter <= self.max_iters):
            raise ConfigError(
                f"need warmup_iters < densify_until_iter <= max_iters, got "
                f"{self.warmup_iters} / {self.densify_until_iter} / {self.max_iters}")
        for name in ("alpha_normal", "alpha_area"):
            v = getattr(self, name)
            if not (0.0 <= v <= 100.0):
                raise ConfigError(f"{name} must be in [0, 100], got {v}")
        if not (0.0 <= self.dssim_weight <= 1.0):
            raise ConfigError(f"dssim_weight must be in [0, 1], got {self.dssim_weight}")
        if self.mask_variant not in MASK_VARIANTS:
            raise ConfigError(f"mask_variant must be one of {MASK_VARIANTS}, got {self.mask_variant!r}")
        if self.mask_combine not in MASK_COMBINE_MODES:
            raise ConfigError(f"mask_combine must be one of {MASK_COMBINE_MODES}, got {self.mask_combine!r}")
        if self.sh_degree not in (0, 1):
            raise ConfigError(f"sh_degree must be 0 or 1, got {self.sh_degree}")
        if self.tsdf_voxel <= 0:
            raise ConfigError("tsdf_voxel must be positive")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """10x-shrunk schedule and small mesh targets for CPU-scale runs."""
        base = dict(
            max_iters=3000, warmup_iters=300, densify_until_iter=1500,
            densify_from_iter=50, densify_interval=10, opacity_reset_interval=300,
            decim_target_faces=5000, texture_size=256, tex_init_iters=300,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["background"] = list(d["background"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "background" in d:
            d = dict(d)
            d["background"] = tuple(float(x) for x in d["background"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
