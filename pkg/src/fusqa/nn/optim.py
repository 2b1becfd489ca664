"""SGD with momentum."""
from __future__ import annotations

import numpy as np


def sgd_step(weight, grad, velocity, lr: float, momentum: float):
    """``v <- momentum * v + g; w <- w - lr * v``. Returns ``(weight, velocity)``."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    velocity = momentum * velocity + grad
    return weight - lr * velocity, velocity


class SGD:
    def __init__(self, lr: float = 0.01, momentum: float = 0.9):
        sgd_step(np.zeros(1), np.zeros(1), np.zeros(1), lr, momentum)  # validates
        self.lr, self.momentum = lr, momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict):
        """Update ``params`` in place, in key order; parameters without a gradient are skipped."""
        for name in params:
            if name not in grads:
                continue
            g = grads[name].astype(params[name].dtype, copy=False)
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(params[name])
            params[name], self.velocity[name] = sgd_step(params[name], g, v, self.lr, self.momentum)
