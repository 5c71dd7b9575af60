"""Training losses with analytic gradients: L1, SSIM/D-SSIM (11x11 Gaussian
window, sigma 1.5, zero-padded), the transmittance-aware texture loss, and
the composite schedule gating.

The texture loss is L_t = mean over mesh-covered pixels of
M(T) * |I - I_m|^2 (summed over channels); M is a sigmoid in T by default
and the gradient flows into both the mesh image and, through the mask, the
transmittance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import convolve1d

from ..config import TrainConfig

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5


def _gaussian_window(size: int = _WINDOW_SIZE, sigma: float = _WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(size) - size // 2
    w = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return w / w.sum()

_WIN = _gaussian_window()


def _filt(img: np.ndarray) -> np.ndarray:
    """Separable zero-padded same-size Gaussian filter over H, W axes."""
    out = convolve1d(img, _WIN, axis=0, mode="constant", cval=0.0)
    return convolve1d(out, _WIN, axis=1, mode="constant", cval=0.0)


def l1_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    diff = pred - target
    grad = np.sign(diff) / diff.size
    return float(np.abs(diff).mean()), grad


def ssim(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean SSIM and its gradient with respect to `pred` (H, W, C)."""
    x = pred
    y = target
    ux = _filt(x)
    uy = _filt(y)
    vx = _filt(x * x)
    vy = _filt(y * y)
    vxy = _filt(x * y)

    a1 = 2 * ux * uy + SSIM_C1
    a2 = 2 * (vxy - ux * uy) + SSIM_C2
    b1 = ux * ux + uy * uy + SSIM_C1
    b2 = (vx - ux * ux) + (vy - uy * uy) + SSIM_C2
    q = b1 * b2
    s = (a1 * a2) / q

    ds_dux = 2 * uy * (a2 - a1) / q - 2 * ux * s / b1 + 2 * ux * s / b2
    ds_dvx = -s / b2
    ds_dvxy = 2 * a1 / q

    m = s.size
    grad = (_filt(ds_dux) + 2 * x * _filt(ds_dvx) + y * _filt(ds_dvxy)) / m
    return float(s.mean()), grad


def dssim(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """(1 - SSIM) / 2 with gradient."""
    s, g = ssim(pred, target)
    return (1.0 - s) / 2.0, -0.5 * g


def transmittance_mask(t: np.ndarray, k: float = 20.0,
                       variant: str = "sigmoid") -> np.ndarray:
    """Per-pixel weight for the texture loss as a function of residual
    transmittance. Variants cover the mask ablation."""
    if variant == "sigmoid":
        return 1.0 / (1.0 + np.exp(-k * (t - 0.5)))
    if variant == "identity_t":
        return np.asarray(t, dtype=np.float64).copy()
    if variant == "constant_one":
        return np.ones_like(t)
    if variant == "constant_zero":
        return np.zeros_like(t)
    raise ValueError(f"unknown transmittance mask variant {variant!r}")


def _mask_derivative(t: np.ndarray, k: float, variant: str) -> np.ndarray:
    if variant == "sigmoid":
        m = 1.0 / (1.0 + np.exp(-k * (t - 0.5)))
        return k * m * (1.0 - m)
    if variant == "identity_t":
        return np.ones_like(t)
    return np.zeros_like(t)


def texture_loss(i_gt: np.ndarray, i_m: np.ndarray, covered: np.ndarray,
                 t: np.ndarray, k: float = 20.0, variant: str = "sigmoid"):
    """Returns (L_t, grad wrt I_m, grad wrt T). Uncovered pixels contribute
    nothing; the average is over covered pixels."""
    n = int(covered.sum())
    if n == 0:
        return 0.0, np.zeros_like(i_m), np.zeros_like(t)
    mask = transmittance_mask(t, k, variant)
    diff = np.where(covered[..., None], i_m - i_gt, 0.0)
    sq = (diff ** 2).sum(axis=-1)
    loss = float((mask * sq)[covered].sum() / n)
    grad_im = (2.0 / n) * mask[..., None] * diff
    grad_t = np.where(covered, _mask_derivative(t, k, variant) * sq / n, 0.0)
    return loss, grad_im, grad_t


@dataclass
class LossBreakdown:
    l1: float
    dssim: float
    l_c: float
    l_t: float
    total: float
    mean_t_on_mesh: float

    def to_dict(self) -> dict:
        return {"l1": self.l1, "dssim": self.dssim, "l_c": self.l_c,
                "l_t": self.l_t, "total": self.total,
                "mean_T_on_mesh": self.mean_t_on_mesh}


def texture_loss_active(iteration: int, config: TrainConfig, has_mesh: bool) -> bool:
    return (has_mesh and config.texture_weight > 0.0
            and config.warmup_iters < iteration < config.densify_until_iter)


def composite_loss(i_gt: np.ndarray, i_h: np.ndarray,
                   i_m: Optional[np.ndarray], covered: Optional[np.ndarray],
                   t: np.ndarray, iteration: int, config: TrainConfig):
    """Full training loss for one view.

    Returns (LossBreakdown, grad wrt I_h, grad wrt I_m or None, grad wrt T).
    The photometric term always applies to the hybrid image; the texture
    term only inside the (warmup, densify_until) window.
    """
    lam = config.dssim_weight
    if config.zero_dssim_after_densify and iteration >= config.densify_until_iter:
        lam = 0.0
    v_l1, g_l1 = l1_loss(i_h, i_gt)
    v_ds, g_ds = dssim(i_h, i_gt)
    l_c = (1.0 - lam) * v_l1 + lam * v_ds
    grad_ih = (1.0 - lam) * g_l1 + lam * g_ds

    has_mesh = i_m is not None and covered is not None
    mean_t = float(t[covered].mean()) if (has_mesh and covered.any()) else float("nan")

    l_t = 0.0
    grad_im = None
    grad_t = np.zeros_like(t)
    if texture_loss_active(iteration, config, has_mesh):
        l_t, g_im, g_t = texture_loss(i_gt, i_m, covered, t,
                                      k=config.mask_sharpness,
                                      variant=config.mask_variant)
        grad_im = config.texture_weight * g_im
        grad_t = config.texture_weight * g_t
        total = l_c + config.texture_weight * l_t
    else:
        total = l_c

    return (LossBreakdown(l1=v_l1, dssim=v_ds, l_c=l_c, l_t=l_t, total=total,
                          mean_t_on_mesh=mean_t),
            grad_ih, grad_im, grad_t)
