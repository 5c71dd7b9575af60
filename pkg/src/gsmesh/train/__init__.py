"""Joint optimization of Gaussians and mesh texture."""

from .adam import Adam, exponential_lr
from .densify import DensifyState, densify_and_prune, reset_opacity
from .loop import (
    GaussianTrainer,
    TrainResult,
    init_gaussians_from_mesh,
    load_optimizer_state,
    train,
)
from .losses import (
    LossBreakdown,
    composite_loss,
    dssim,
    l1_loss,
    ssim,
    texture_loss,
    transmittance_mask,
)

__all__ = [
    "Adam", "DensifyState", "GaussianTrainer", "LossBreakdown", "TrainResult",
    "composite_loss", "densify_and_prune", "dssim", "exponential_lr",
    "init_gaussians_from_mesh", "l1_loss", "load_optimizer_state",
    "reset_opacity", "ssim", "texture_loss", "train", "transmittance_mask",
]
