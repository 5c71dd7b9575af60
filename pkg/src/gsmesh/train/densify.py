"""Adaptive density control: clone small high-gradient Gaussians, split
large ones, prune transparent ones, and periodically reset opacities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..config import TrainConfig
from ..scene import quaternions_to_rotations
from .adam import Adam


def inverse_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.log(x / (1.0 - x))


@dataclass
class DensifyState:
    """Per-Gaussian screen-gradient accumulators, reset after every densify."""

    grad_accum: np.ndarray
    denom: np.ndarray

    @staticmethod
    def zeros(n: int) -> "DensifyState":
        return DensifyState(np.zeros(n), np.zeros(n))

    def update(self, visible: np.ndarray, grad_norm: np.ndarray) -> None:
        self.grad_accum[visible] += grad_norm[visible]
        self.denom[visible] += 1.0

    def average(self) -> np.ndarray:
        avg = np.zeros_like(self.grad_accum)
        seen = self.denom > 0
        avg[seen] = self.grad_accum[seen] / self.denom[seen]
        return avg

    def reset(self, n: int) -> None:
        self.grad_accum = np.zeros(n)
        self.denom = np.zeros(n)


def densify_and_prune(params: Dict[str, np.ndarray], opt: Adam,
                      state: DensifyState, extent: float, config: TrainConfig,
                      rng: np.random.Generator) -> dict:
    """One density-control step (clone, split, opacity prune) applied via the
    optimizer's row surgery. Returns event counts."""
    n0 = len(params["centers"])
    avg = state.average()
    scales = np.exp(params["log_scales"]).max(axis=1)
    hot = avg > config.densify_grad_threshold
    small = scales <= config.percent_dense * extent
    clone_mask = hot & small
    split_mask = hot & ~small
    stats = {"cloned": int(clone_mask.sum()), "split": int(split_mask.sum())}

    clone_rows = ({k: v[clone_mask].copy() for k, v in params.items()}
                  if clone_mask.any() else None)
    split_rows = None
    if split_mask.any():
        reps = 2
        stds = np.repeat(np.exp(params["log_scales"][split_mask]), reps, axis=0)
        samples = rng.normal(0.0, 1.0, stds.shape) * stds
        rots = np.repeat(quaternions_to_rotations(params["rotations"][split_mask]),
                         reps, axis=0)
        split_rows = {k: np.repeat(v[split_mask], reps, axis=0)
                      for k, v in params.items()}
        split_rows["centers"] = (np.einsum("nij,nj->ni", rots, samples)
                                 + split_rows["centers"])
        split_rows["log_scales"] = split_rows["log_scales"] - np.log(1.6)

    if clone_rows is not None:
        opt.append_rows(clone_rows)
    if split_rows is not None:
        opt.append_rows(split_rows)

    # drop split originals and transparent Gaussians in one pass
    n_now = len(opt.params["centers"])
    keep = np.ones(n_now, dtype=bool)
    keep[:n0][split_mask] = False
    alpha = 1.0 / (1.0 + np.exp(-opt.params["logit_opacities"]))
    low = alpha < config.opacity_prune_threshold
    stats["pruned"] = int((low & keep).sum())
    keep &= ~low
    if not keep.all():
        opt.prune_rows(keep)

    state.reset(len(opt.params["centers"]))
    stats["n_after"] = len(opt.params["centers"])
    return stats


def reset_opacity(opt: Adam, ceiling: float = 0.01) -> None:
    """Clamp activated opacities to <= ceiling and clear their moments."""
    logits = opt.params["logit_opacities"]
    alpha = 1.0 / (1.0 + np.exp(-logits))
    new = inverse_sigmoid(np.minimum(alpha, ceiling))
    opt.replace_param("logit_opacities", new)
