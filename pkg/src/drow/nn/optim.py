"""AdaDelta (Zeiler, 2012) without a learning-rate multiplier."""
from __future__ import annotations

import numpy as np


class AdaDelta:
    def __init__(self, rho: float = 0.95, eps: float = 1e-7):
        self.rho, self.eps = rho, eps
        self.sq_grad = {}
        self.sq_update = {}

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        rho, eps = self.rho, self.eps
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
            eg = self.sq_grad.setdefault(name, np.zeros_like(p))
            ex = self.sq_update.setdefault(name, np.zeros_like(p))
            eg *= rho
            eg += (1 - rho) * g * g
            delta = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
            ex *= rho
            ex += (1 - rho) * delta * delta
            p += delta.astype(p.dtype, copy=False)


def adadelta_step(params: dict, grads: dict, state: AdaDelta) -> dict:
    state.step(params, grads)
    return params
