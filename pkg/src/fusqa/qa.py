"""Segmentation-quality classifiers: single-CNN, Siamese and Synergic topologies."""
from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, NumericError
from .imgcore import GrayImage, LabelMask, PALATE, warp_arrays
from .nn import SGD, Conv2d, FullyConnected, GlobalAvgPool, MaxPool, ReLU, Sequential, Sigmoid
from .nn import bce_loss, bce_with_logits, read_checkpoint, write_checkpoint
from .validation import check_binary_target, check_pairs, stack_pairs

TOPOLOGIES = ("single", "siamese", "synergic")
ENCODER_CHANNELS = (8, 16, 32)
LABEL_DIVISOR = float(PALATE)
SCALE_RANGE = (0.9, 1.1)
ROTATION_RANGE_DEG = (-10.0, 10.0)
HFLIP_P = 0.5


def encoder_layers(in_ch: int = 3, channels=ENCODER_CHANNELS):
    layers, prev = [], in_ch
    for c in channels:
        layers += [Conv2d(prev, c), ReLU(), MaxPool()]
        prev = c
    layers.append(GlobalAvgPool())
    return layers


class QaNetwork:
    """Encoder(s) plus a fully connected sigmoid head.

    ``single`` has one encoder; ``siamese`` runs both branches through the
    same encoder parameters; ``synergic`` gives each branch its own encoder.
    """

    def __init__(self, topology: str = "single", channels=ENCODER_CHANNELS):
        if topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {topology!r}")
        self.topology = topology
        self.channels = tuple(channels)
        latent = self.channels[-1]
        if topology == "single":
            self.encoders = [Sequential(encoder_layers(3, channels), "enc")]
        elif topology == "siamese":
            self.encoders = [Sequential(encoder_layers(3, channels), "enc")]
        else:
            self.encoders = [Sequential(encoder_layers(3, channels), "enc_a"),
                             Sequential(encoder_layers(3, channels), "enc_b")]
        head_in = latent if topology == "single" else 2 * latent
        self.head = Sequential([FullyConnected(head_in, 1), Sigmoid()], "head")

    @property
    def n_branches(self) -> int:
        return 1 if self.topology == "single" else 2

    def _branch_encoders(self):
        if self.topology == "siamese":
            return [self.encoders[0], self.encoders[0]]
        return self.encoders

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for enc in self.encoders:
            shapes.update(enc.param_shapes())
        shapes.update(self.head.param_shapes())
        return shapes

    def init_params(self, rng, dtype=np.float32):
        params = {}
        for enc in self.encoders:
            params.update(enc.init_params(rng, dtype))
        params.update(self.head.init_params(rng, dtype))
        return params

    def specs(self) -> dict:
        return {
            "encoders": {enc.prefix: enc.specs() for enc in self.encoders},
            "head": self.head.specs(),
        }

    def forward_logits(self, params, inputs):
        """Logits ``(n, 1)`` (pre-sigmoid) and the cache needed by :meth:`backward`."""
        if len(inputs) != self.n_branches:
            raise ValueError(f"{self.topology} expects {self.n_branches} input tensor(s)")
        latents, enc_caches = [], []
        for enc, x in zip(self._branch_encoders(), inputs):
            z, c = enc.forward(params, x)
            latents.append(z)
            enc_caches.append(c)
        z = latents[0] if len(latents) == 1 else np.concatenate(latents, axis=1)
        logits, head_cache = self.head.forward(params, z, upto=-1)
        return logits, (enc_caches, head_cache, [l.shape[1] for l in latents])

    def forward(self, params, inputs):
        logits, cache = self.forward_logits(params, inputs)
        return expit(logits), cache

    def backward(self, params, cache, dlogits):
        enc_caches, head_cache, widths = cache
        dz, grads = self.head.backward(params, head_cache, dlogits)
        splits = np.split(dz, np.cumsum(widths)[:-1], axis=1)
        for enc, c, d in zip(self._branch_encoders(), enc_caches, splits):
            _, g = enc.backward(params, c, d)
            for k, v in g.items():
                grads[k] = grads[k] + v if k in grads else v
        return grads


def assemble_batch(images: np.ndarray, labels: np.ndarray, topology: str, dtype=np.float32):
    """Network inputs for a batch of ``(n, H, W)`` images and label maps.

    single: one ``(n, H, W, 3)`` tensor ``(x, x, mask / 4)``;
    siamese/synergic: ``(x, x, x)`` and ``(m, m, m)`` with ``m = mask / 4``.
    """
    x = images.astype(dtype, copy=False)
    m = (labels / LABEL_DIVISOR).astype(dtype)
    if topology == "single":
        return (np.stack([x, x, m], axis=-1),)
    if topology in ("siamese", "synergic"):
        return (np.repeat(x[..., None], 3, axis=-1), np.repeat(m[..., None], 3, axis=-1))
    raise ValueError(f"unknown topology {topology!r}")


def assemble_input(image: GrayImage, mask: LabelMask, topology: str, size: int | None = None):
    if image.data.shape != mask.labels.shape:
        raise DataError("image and mask dimensions differ")
    if size is not None and image.data.shape != (size, size):
        raise DataError(f"model expects {size}x{size} inputs, got {image.data.shape}")
    return assemble_batch(image.data[None], mask.labels[None].astype(np.float64), topology)


def _group_split(groups, val_fraction, seed):
    uniq = sorted(set(groups))
    if val_fraction <= 0 or len(uniq) < 2:
        return np.arange(len(groups)), np.array([], dtype=np.int64)
    n_val = min(len(uniq) - 1, max(1, int(round(val_fraction * len(uniq)))))
    order = np.random.default_rng([seed, 1]).permutation(len(uniq))
    val_groups = {uniq[i] for i in order[:n_val]}
    is_val = np.array([g in val_groups for g in groups])
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)


class QualityClassifier(ClassifierMixin, BaseEstimator):
    """Predicts whether a segmentation mask is good enough to date the pregnancy from.

    ``fit`` trains by mini-batch SGD on binary cross-entropy with on-the-fly
    joint augmentation (scale, horizontal flip, small rotation) of image and
    mask. A fraction of the source groups is held out for validation and the
    epoch with the best validation accuracy is kept (earliest on ties).

    Parameters
    ----------
    topology : {"single", "siamese", "synergic"}
    epochs, learning_rate, momentum, batch_size : training schedule
    augment : bool
        Apply random geometric augmentation each epoch.
    val_fraction : float
        Fraction of source groups (phantoms / patients) used for validation.
    random_state : int
        Seeds initialisation, the split and every augmentation draw.
    """

    def __init__(self, topology="single", epochs=12, learning_rate=0.01, momentum=0.9, batch_size=16,
                 augment=True, val_fraction=0.1, random_state=0, channels=ENCODER_CHANNELS, verbose=False):
        self.topology = topology
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.augment = augment
        self.val_fraction = val_fraction
        self.random_state = random_state
        self.channels = channels
        self.verbose = verbose

    def _network(self):
        return QaNetwork(self.topology, self.channels)

    def _init(self, size):
        self.network_ = self._network()
        self.params_ = self.network_.init_params(np.random.default_rng(self.random_state))
        self.input_size_ = size
        self.classes_ = np.array([0, 1])

    def fit(self, X, y, groups=None):
        X = check_pairs(X)
        y = check_binary_target(y, len(X))
        if len(np.unique(y)) < 2:
            raise DataError("degenerate labels: training data needs both good and poor masks")
        if X.shape[2] != X.shape[3]:
            raise ValueError("inputs must be square")
        if groups is None:
            groups = np.arange(len(X))
        groups = list(groups)
        if len(groups) != len(X):
            raise ValueError("groups must have one entry per sample")

        self._init(X.shape[2])
        images, labels = X[:, 0], X[:, 1]
        train_idx, val_idx = _group_split(groups, self.val_fraction, self.random_state)
        self.history_ = []
        best = (-1.0, dict(self.params_))
        opt = SGD(self.learning_rate, self.momentum)

        for epoch in range(self.epochs):
            rng = np.random.default_rng([self.random_state, 2, epoch])
            order = train_idx[rng.permutation(len(train_idx))]
            scales = rng.uniform(*SCALE_RANGE, size=len(order))
            flips = rng.random(len(order)) < HFLIP_P
            rots = rng.uniform(*ROTATION_RANGE_DEG, size=len(order))
            loss_sum = correct = 0.0
            for start in range(0, len(order), self.batch_size):
                sl = slice(start, start + self.batch_size)
                idx = order[sl]
                if self.augment:
                    pairs = [warp_arrays(images[i], labels[i], s, r, f)
                             for i, s, r, f in zip(idx, scales[sl], rots[sl], flips[sl])]
                    bi = np.stack([p[0] for p in pairs])
                    bl = np.stack([p[1] for p in pairs])
                else:
                    bi, bl = images[idx], labels[idx]
                inputs = assemble_batch(bi, bl, self.topology)
                logits, cache = self.network_.forward_logits(self.params_, inputs)
                loss, dlogits = bce_with_logits(logits[:, 0], y[idx])
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite training loss at epoch {epoch}")
                grads = self.network_.backward(self.params_, cache, dlogits[:, None])
                opt.step(self.params_, grads)
                loss_sum += loss * len(idx)
                correct += float(((logits[:, 0] >= 0) == (y[idx] == 1)).sum())
            record = {"epoch": epoch + 1, "train_loss": loss_sum / len(order), "train_acc": correct / len(order)}
            if len(val_idx):
                p = expit(self._logits(X[val_idx]))
                record["val_loss"] = bce_loss(p, y[val_idx])
                record["val_acc"] = float(((p >= 0.5) == (y[val_idx] == 1)).mean())
                score = record["val_acc"]
            else:
                score = record["train_acc"]
            self.history_.append(record)
            if self.verbose:
                print(f"[{self.topology}] " + " ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                                                       for k, v in record.items()))
            if score > best[0]:
                best = (score, {k: v.copy() for k, v in self.params_.items()})
        if self.epochs > 0:
            self.params_ = best[1]
            self.best_epoch_ = 1 + [r.get("val_acc", r["train_acc"]) for r in self.history_].index(best[0])
        else:
            self.best_epoch_ = 0
        return self

    def _logits(self, X, batch=64):
        out = []
        for start in range(0, len(X), batch):
            chunk = X[start:start + batch]
            logits, _ = self.network_.forward_logits(
                self.params_, assemble_batch(chunk[:, 0], chunk[:, 1], self.topology))
            out.append(logits[:, 0].astype(np.float64))
        return np.concatenate(out) if out else np.zeros(0)

    def decision_function(self, X):
        """Raw logit of the "good" class; positive means good."""
        check_is_fitted(self, "params_")
        return self._logits(check_pairs(X, self.input_size_))

    def predict_proba(self, X):
        """Columns are P(poor), P(good)."""
        p = expit(self.decision_function(X))
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    # persistence

    def save(self, path, metadata: dict | None = None):
        check_is_fitted(self, "params_")
        header = {
            "kind": "qa",
            "topology": self.topology,
            "layers": self.network_.specs(),
            "input_size": self.input_size_,
            "normalization": {"mask_label_divisor": LABEL_DIVISOR},
            "seed": self.random_state,
            "estimator_params": _jsonable(self.get_params()),
            "training": {"history": getattr(self, "history_", []), "best_epoch": getattr(self, "best_epoch_", 0),
                         **(metadata or {})},
        }
        write_checkpoint(path, header, self.params_)

    @classmethod
    def from_checkpoint(cls, header: dict, params: dict) -> "QualityClassifier":
        est_params = dict(header.get("estimator_params", {}))
        est_params["topology"] = header["topology"]
        if "channels" in est_params:
            est_params["channels"] = tuple(est_params["channels"])
        model = cls(**est_params)
        model.network_ = model._network()
        expected = model.network_.param_shapes()
        got = {k: tuple(v.shape) for k, v in params.items()}
        if list(expected) != list(got) or any(expected[k] != got[k] for k in expected):
            raise DataError(f"checkpoint weights do not match the {header['topology']} topology")
        model.params_ = dict(params)
        model.input_size_ = int(header["input_size"])
        model.classes_ = np.array([0, 1])
        model.history_ = header.get("training", {}).get("history", [])
        model.best_epoch_ = header.get("training", {}).get("best_epoch", 0)
        return model


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, tuple):
            v = list(v)
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def train_qa(dataset, topology: str = "single", config: dict | None = None, seed: int = 0):
    """Fit a :class:`QualityClassifier` on a list of samples; returns ``(model, history)``."""
    config = dict(config or {})
    model = QualityClassifier(topology=topology, random_state=seed, **config)
    X = stack_pairs(dataset)
    y = np.array([s.quality for s in dataset])
    model.fit(X, y, groups=[s.source_id for s in dataset])
    return model, model.history_


def predict(model: QualityClassifier, image: GrayImage, mask: LabelMask) -> float:
    """Probability that ``mask`` is a good segmentation of ``image``."""
    X = np.stack([image.data, mask.labels.astype(np.float64)])[None]
    return float(model.predict_proba(X)[0, 1])


def load_qa(path) -> QualityClassifier:
    header, params = read_checkpoint(path)
    if header.get("kind") != "qa":
        raise DataError(f"{path} is not a quality-classifier checkpoint")
    return QualityClassifier.from_checkpoint(header, params)
