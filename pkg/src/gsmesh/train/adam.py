"""Plain Adam with per-group learning rates over numpy arrays.

Supports the row surgery densification needs: pruning rows, appending rows
(fresh zero moments), and resetting a group's moments after a parameter
replacement.
"""

from __future__ import annotations

import math
from typing import Dict

import numpy as np


class Adam:
    def __init__(self, params: Dict[str, np.ndarray], lrs: Dict[str, float],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.params = params
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, g in grads.items():
            if g is None:
                continue
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lrs[name] * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def prune_rows(self, keep_mask: np.ndarray) -> None:
        for k in self.params:
            self.params[k] = self.params[k][keep_mask]
            self.m[k] = self.m[k][keep_mask]
            self.v[k] = self.v[k][keep_mask]

    def append_rows(self, new: Dict[str, np.ndarray]) -> None:
        for k, arr in new.items():
            self.params[k] = np.concatenate([self.params[k], arr])
            self.m[k] = np.concatenate([self.m[k], np.zeros_like(arr)])
            self.v[k] = np.concatenate([self.v[k], np.zeros_like(arr)])

    def replace_param(self, name: str, value: np.ndarray) -> None:
        """Swap in new values and clear the group's moments (opacity reset)."""
        self.params[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)


def exponential_lr(initial: float, final: float, max_steps: int):
    """Log-linear interpolation from initial to final over max_steps."""
    if initial <= 0 or final <= 0:
        raise ValueError("learning rates must be positive")
    ln_i, ln_f = math.log(initial), math.log(final)

    def lr_at(step: int) -> float:
        t = min(max(step / max_steps, 0.0), 1.0)
        return math.exp(ln_i * (1.0 - t) + ln_f * t)

    return lr_at
