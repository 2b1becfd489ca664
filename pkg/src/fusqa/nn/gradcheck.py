"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

import numpy as np

from .layers import Conv2d, FullyConnected, GlobalAvgPool, MaxPool, ReLU, Sequential, Sigmoid
from .losses import bce_grad, bce_loss


def tiny_classifier(in_ch: int = 3, width: int = 4) -> Sequential:
    """Two conv blocks, a fully-connected layer and a sigmoid."""
    return Sequential([
        Conv2d(in_ch, width), ReLU(), MaxPool(),
        Conv2d(width, width), ReLU(), MaxPool(),
        GlobalAvgPool(), FullyConnected(width, 1), Sigmoid(),
    ], "net")


def _loss(net, params, x, y):
    p, _ = net.forward(params, x)
    return bce_loss(p[:, 0], y)


def analytic_gradients(net: Sequential, params, x, y) -> dict[str, np.ndarray]:
    p, caches = net.forward(params, x)
    _, grads = net.backward(params, caches, bce_grad(p[:, 0], y)[:, None])
    return grads


def max_relative_error(net: Sequential, params, x, y, h: float = 1e-5, floor: float = 1e-8) -> float:
    """Largest ``|analytic - numeric| / max(|analytic| + |numeric|, floor)`` over every parameter.

    Run it in float64: single precision cannot resolve a step of ``h = 1e-5``.
    """
    grads = analytic_gradients(net, params, x, y)
    worst = 0.0
    for name, w in params.items():
        flat = w.reshape(-1)
        g = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _loss(net, params, x, y)
            flat[i] = orig - h
            down = _loss(net, params, x, y)
            flat[i] = orig
            num = (up - down) / (2 * h)
            err = abs(g[i] - num) / max(abs(g[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst
