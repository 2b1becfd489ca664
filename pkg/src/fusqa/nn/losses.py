"""Cross-entropy losses and their gradients."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax

EPS = 1e-7


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy with probabilities clamped to [EPS, 1 - EPS]."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def bce_grad(p, y) -> np.ndarray:
    """d(mean BCE)/dp, using the clamped probability."""
    p = np.asarray(p)
    pc = np.clip(p, EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=p.dtype).reshape(p.shape)
    return ((pc - y) / (pc * (1.0 - pc)) / p.shape[0]).astype(p.dtype)


def bce_with_logits(z, y):
    """Loss and d(loss)/dz for a sigmoid output fed straight into BCE.

    Fusing the two keeps the gradient alive when the sigmoid saturates in
    single precision.
    """
    z = np.asarray(z)
    y = np.asarray(y).reshape(z.shape)
    p = expit(z.astype(np.float64))
    loss = bce_loss(p, y)
    grad = ((p - y) / z.shape[0]).astype(z.dtype)
    return loss, grad


def softmax_cross_entropy(logits, targets):
    """Mean per-pixel cross-entropy; ``logits`` is ``(..., k)``, ``targets`` integer ``(...)``."""
    logits = np.asarray(logits)
    k = logits.shape[-1]
    flat = logits.reshape(-1, k).astype(np.float64)
    t = np.asarray(targets).reshape(-1)
    logp = log_softmax(flat, axis=1)
    loss = float(-logp[np.arange(len(t)), t].mean())
    grad = np.exp(logp)
    grad[np.arange(len(t)), t] -= 1.0
    grad /= len(t)
    return loss, grad.reshape(logits.shape).astype(logits.dtype)
