"""Input checks for the estimators.

Image/mask pairs are passed as an array ``X`` of shape ``(n, 2, H, W)``:
channel 0 holds intensities in [0, 1], channel 1 integer labels 0-4.
"""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .imgcore import PALATE


def check_pairs(X, size: int | None = None) -> np.ndarray:
    X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64)
    if X.ndim != 4 or X.shape[1] != 2:
        raise ValueError(f"expected image/mask pairs of shape (n, 2, H, W), got {X.shape}")
    if size is not None and X.shape[2:] != (size, size):
        raise ValueError(f"model expects {size}x{size} inputs, got {X.shape[2]}x{X.shape[3]}")
    images, labels = X[:, 0], X[:, 1]
    if images.min() < 0.0 or images.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    check_label_values(labels)
    return X


def check_masks(M, size: int | None = None) -> np.ndarray:
    M = check_array(M, ensure_2d=False, allow_nd=True, dtype=np.float64)
    if M.ndim != 3:
        raise ValueError(f"expected masks of shape (n, H, W), got {M.shape}")
    if size is not None and M.shape[1:] != (size, size):
        raise ValueError(f"model expects {size}x{size} masks, got {M.shape[1]}x{M.shape[2]}")
    check_label_values(M)
    return M.astype(np.int64)


def check_label_values(labels):
    if labels.min() < 0 or labels.max() > PALATE or np.any(labels != np.round(labels)):
        raise ValueError("mask labels must be integers in {0, 1, 2, 3, 4}")


def check_binary_target(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("quality labels must be 0 (poor) or 1 (good)")
    return y.astype(np.int64)


def stack_pairs(samples) -> np.ndarray:
    """``(n, 2, H, W)`` array from objects carrying ``.image`` and ``.mask``."""
    return np.stack([np.stack([s.image.data, s.mask.labels.astype(np.float64)]) for s in samples])
