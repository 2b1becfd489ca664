"""Convolutional-autoencoder anomaly baseline.

The autoencoder is trained to reproduce good masks only. At test time a mask
is called good when the fraction of foreground pixels on which it disagrees
with its reconstruction is strictly below ``tau``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, NumericError
from .imgcore import LABELS, LabelMask
from .nn import SGD, Conv2d, MaxPool, ReLU, Sequential, Upsample, read_checkpoint, softmax_cross_entropy
from .nn import write_checkpoint
from .validation import check_masks

N_CLASSES = len(LABELS)


def cae_layers(width=(8, 16)):
    w1, w2 = width
    return [
        Conv2d(N_CLASSES, w1), ReLU(), MaxPool(),
        Conv2d(w1, w2), ReLU(), MaxPool(),
        Upsample(), Conv2d(w2, w1), ReLU(),
        Upsample(), Conv2d(w1, N_CLASSES),
    ]


def one_hot(labels: np.ndarray, dtype=np.float32) -> np.ndarray:
    return np.eye(N_CLASSES, dtype=dtype)[labels]


def difference_ratio(recon: np.ndarray, mask: np.ndarray) -> float:
    """Disagreeing pixels over the union of both foregrounds; 1.0 when that union is empty."""
    union = (recon != 0) | (mask != 0)
    n = int(union.sum())
    if n == 0:
        return 1.0
    return float(((recon != mask) & union).sum()) / n


def _masks_from(X, size=None):
    X = np.asarray(X)
    if X.ndim == 4 and X.shape[1] == 2:
        X = X[:, 1]
    return check_masks(X, size)


class CaeDetector(BaseEstimator):
    """Mask-only quality verdicts from autoencoder reconstruction disagreement.

    ``fit`` takes good masks only, shaped ``(n, H, W)``; the prediction
    methods also accept image/mask pairs ``(n, 2, H, W)`` and ignore the image.
    """

    def __init__(self, tau=0.10, epochs=15, learning_rate=0.05, momentum=0.9, batch_size=16,
                 random_state=0, width=(8, 16), verbose=False):
        self.tau = tau
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.random_state = random_state
        self.width = width
        self.verbose = verbose

    def _init(self, size):
        if size % 4:
            raise ValueError("mask size must be divisible by 4")
        self.network_ = Sequential(cae_layers(tuple(self.width)), "cae")
        self.params_ = self.network_.init_params(np.random.default_rng(self.random_state))
        self.input_size_ = size

    def fit(self, M, y=None):
        if len(M) == 0:
            raise DataError("no good masks to train the autoencoder on")
        M = _masks_from(M)
        if M.shape[1] != M.shape[2]:
            raise ValueError("masks must be square")
        self._init(M.shape[1])
        opt = SGD(self.learning_rate, self.momentum)
        self.history_ = []
        for epoch in range(self.epochs):
            order = np.random.default_rng([self.random_state, 3, epoch]).permutation(len(M))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                logits, caches = self.network_.forward(self.params_, one_hot(M[idx]))
                loss, grad = softmax_cross_entropy(logits, M[idx])
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite autoencoder loss at epoch {epoch}")
                _, grads = self.network_.backward(self.params_, caches, grad)
                opt.step(self.params_, grads)
                total += loss * len(idx)
            self.history_.append({"epoch": epoch + 1, "train_loss": total / len(M)})
            if self.verbose:
                print(f"[cae] epoch={epoch + 1} train_loss={total / len(M):.4f}")
        return self

    def reconstruct(self, M) -> np.ndarray:
        check_is_fitted(self, "params_")
        M = _masks_from(M, self.input_size_)
        out = []
        for start in range(0, len(M), 64):
            logits, _ = self.network_.forward(self.params_, one_hot(M[start:start + 64]))
            out.append(logits.argmax(axis=-1))
        return np.concatenate(out).astype(np.int64) if out else np.zeros((0,) + M.shape[1:], np.int64)

    def score_samples(self, M) -> np.ndarray:
        """Difference ratio per mask (higher means more anomalous)."""
        M = _masks_from(M, getattr(self, "input_size_", None))
        recon = self.reconstruct(M)
        return np.array([difference_ratio(r, m) for r, m in zip(recon, M)])

    def predict(self, M) -> np.ndarray:
        return (self.score_samples(M) < self.tau).astype(np.int64)

    def save(self, path, metadata: dict | None = None):
        check_is_fitted(self, "params_")
        header = {
            "kind": "cae",
            "layers": self.network_.specs(),
            "input_size": self.input_size_,
            "tau": self.tau,
            "seed": self.random_state,
            "estimator_params": {**self.get_params(), "width": list(self.width)},
            "training": {"history": self.history_, **(metadata or {})},
        }
        write_checkpoint(path, header, self.params_)

    @classmethod
    def from_checkpoint(cls, header: dict, params: dict) -> "CaeDetector":
        est = dict(header.get("estimator_params", {}))
        est["width"] = tuple(est.get("width", (8, 16)))
        model = cls(**est)
        model._init(int(header["input_size"]))
        expected = model.network_.param_shapes()
        if list(expected) != list(params) or any(expected[k] != params[k].shape for k in expected):
            raise DataError("checkpoint weights do not match the autoencoder layout")
        model.params_ = dict(params)
        model.history_ = header.get("training", {}).get("history", [])
        return model


def train_cae(good_masks, config: dict | None = None, seed: int = 0) -> CaeDetector:
    masks = [m.labels if isinstance(m, LabelMask) else np.asarray(m) for m in good_masks]
    if not masks:
        raise DataError("no good masks to train the autoencoder on")
    return CaeDetector(random_state=seed, **(config or {})).fit(np.stack(masks))


def cae_score(model: CaeDetector, mask: LabelMask, tau: float | None = None) -> tuple[float, str]:
    """``(difference_ratio, "good" | "poor")``; good only when strictly below ``tau``."""
    tau = model.tau if tau is None else tau
    ratio = float(model.score_samples(mask.labels[None])[0])
    return ratio, ("good" if ratio < tau else "poor")


def load_cae(path) -> CaeDetector:
    header, params = read_checkpoint(path)
    if header.get("kind") != "cae":
        raise DataError(f"{path} is not an autoencoder checkpoint")
    return CaeDetector.from_checkpoint(header, params)
