"""Layers with explicit forward caches and analytic backward passes.

Activations are NHWC arrays. Each layer is stateless: parameters live in a
flat ``{name: array}`` dict owned by the caller, so one layer stack can be
evaluated against shared (Siamese) or separate (Synergic) weight sets.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


class ShapeError(ValueError):
    pass


class Layer:
    kind = "Layer"

    def param_shapes(self) -> dict[str, tuple]:
        return {}

    def fan_in(self) -> int:
        return 1

    def spec(self) -> dict:
        return {"type": self.kind}

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, dout):
        """Return ``(dx, {param_name: grad})``."""
        raise NotImplementedError


class Conv2d(Layer):
    """3x3 cross-correlation, stride 1, zero padding 1. Weight layout ``(out, in, 3, 3)``."""

    kind = "Conv2d"

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, pad: int = 1):
        if (kernel, stride, pad) != (3, 1, 1):
            raise ValueError("only 3x3 kernels with stride 1 and padding 1 are supported")
        self.in_ch, self.out_ch = in_ch, out_ch

    def param_shapes(self):
        return {"weight": (self.out_ch, self.in_ch, 3, 3), "bias": (self.out_ch,)}

    def fan_in(self):
        return self.in_ch * 9

    def spec(self):
        return {"type": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch, "kernel": 3, "stride": 1, "pad": 1}

    def forward(self, params, x):
        n, h, w, c = x.shape
        if c != self.in_ch:
            raise ShapeError(f"expected {self.in_ch} input channels, got {c}")
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        # (n, h, w, c, 3, 3) -> rows ordered (c, kh, kw) to match the weight layout
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * w, c * 9)
        wmat = params["weight"].reshape(self.out_ch, c * 9)
        out = cols @ wmat.T
        out += params["bias"]
        return out.reshape(n, h, w, self.out_ch), (cols, x.shape)

    def backward(self, params, cache, dout):
        cols, (n, h, w, c) = cache
        d2 = dout.reshape(n * h * w, self.out_ch)
        dw = (d2.T @ cols).reshape(self.out_ch, c, 3, 3)
        db = d2.sum(axis=0)
        dcols = (d2 @ params["weight"].reshape(self.out_ch, c * 9)).reshape(n, h, w, c, 3, 3)
        dxp = np.zeros((n, h + 2, w + 2, c), dtype=dout.dtype)
        for kh in range(3):
            for kw in range(3):
                dxp[:, kh:kh + h, kw:kw + w, :] += dcols[..., kh, kw]
        return dxp[:, 1:-1, 1:-1, :], {"weight": dw, "bias": db}


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, params, x):
        keep = x > 0
        return x * keep, keep

    def backward(self, params, cache, dout):
        return dout * cache, {}


class MaxPool(Layer):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""

    kind = "MaxPool"

    def spec(self):
        return {"type": self.kind, "size": 2, "stride": 2}

    def forward(self, params, x):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        if h2 == 0 or w2 == 0:
            raise ShapeError(f"input {h}x{w} too small to pool")
        win = x[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        win = win.reshape(n, h2, w2, c, 4)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return out, (idx, x.shape)

    def backward(self, params, cache, dout):
        idx, (n, h, w, c) = cache
        h2, w2 = h // 2, w // 2
        # gradient goes to the first maximal element of each window
        onehot = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
        np.put_along_axis(onehot, idx[..., None], dout[..., None], axis=-1)
        dx = np.zeros((n, h, w, c), dtype=dout.dtype)
        dx[:, :2 * h2, :2 * w2, :] = (
            onehot.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
        )
        return dx, {}


class GlobalAvgPool(Layer):
    kind = "GlobalAvgPool"

    def forward(self, params, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, params, cache, dout):
        n, h, w, c = cache
        dx = np.broadcast_to(dout[:, None, None, :] / (h * w), (n, h, w, c))
        return dx.astype(dout.dtype, copy=True), {}


class FullyConnected(Layer):
    kind = "FullyConnected"

    def __init__(self, in_dim: int, out_dim: int):
        self.in_dim, self.out_dim = in_dim, out_dim

    def param_shapes(self):
        return {"weight": (self.in_dim, self.out_dim), "bias": (self.out_dim,)}

    def fan_in(self):
        return self.in_dim

    def spec(self):
        return {"type": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim}

    def forward(self, params, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected (batch, {self.in_dim}) input, got {x.shape}")
        return x @ params["weight"] + params["bias"], x

    def backward(self, params, cache, dout):
        x = cache
        return dout @ params["weight"].T, {"weight": x.T @ dout, "bias": dout.sum(axis=0)}


class Sigmoid(Layer):
    kind = "Sigmoid"

    def forward(self, params, x):
        p = expit(x)
        return p, p

    def backward(self, params, cache, dout):
        p = cache
        return dout * p * (1.0 - p), {}


class Upsample(Layer):
    """Nearest-neighbour x2 upsampling."""

    kind = "Upsample"

    def spec(self):
        return {"type": self.kind, "factor": 2}

    def forward(self, params, x):
        return x.repeat(2, axis=1).repeat(2, axis=2), None

    def backward(self, params, cache, dout):
        n, h, w, c = dout.shape
        return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4)), {}


LAYER_TYPES = {cls.kind: cls for cls in (Conv2d, ReLU, MaxPool, GlobalAvgPool, FullyConnected, Sigmoid, Upsample)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("type")
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}")
    if kind == "Conv2d":
        return Conv2d(spec["in_ch"], spec["out_ch"])
    if kind == "FullyConnected":
        return FullyConnected(spec["in_dim"], spec["out_dim"])
    return LAYER_TYPES[kind]()


class Sequential:
    """A layer stack whose parameters are named ``"{prefix}.{index}.{param}"``."""

    def __init__(self, layers, prefix: str):
        self.layers = list(layers)
        self.prefix = prefix

    def _names(self, i):
        return {k: f"{self.prefix}.{i}.{k}" for k in self.layers[i].param_shapes()}

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for i, layer in enumerate(self.layers):
            for k, shape in layer.param_shapes().items():
                shapes[f"{self.prefix}.{i}.{k}"] = shape
        return shapes

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
        """He-normal weights (std sqrt(2 / fan_in)) and zero biases, in declaration order."""
        params = {}
        for i, layer in enumerate(self.layers):
            for k, shape in layer.param_shapes().items():
                name = f"{self.prefix}.{i}.{k}"
                if k == "bias":
                    params[name] = np.zeros(shape, dtype=dtype)
                else:
                    std = np.sqrt(2.0 / layer.fan_in())
                    params[name] = (rng.standard_normal(shape) * std).astype(dtype)
        return params

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def forward(self, params, x, upto: int | None = None):
        """Run the first ``upto`` layers (all by default); returns ``(out, caches)``."""
        caches = []
        for i, layer in enumerate(self.layers[:upto]):
            local = {k: params[v] for k, v in self._names(i).items()}
            try:
                x, cache = layer.forward(local, x)
            except ShapeError as exc:
                raise ShapeError(f"{self.prefix} layer {i} ({layer.kind}): {exc}") from None
            caches.append(cache)
        return x, caches

    def backward(self, params, caches, dout):
        """Backpropagate through the layers that produced ``caches``; returns ``(dx, grads)``."""
        grads = {}
        for i in reversed(range(len(caches))):
            names = self._names(i)
            local = {k: params[v] for k, v in names.items()}
            dout, g = self.layers[i].backward(local, caches[i], dout)
            for k, v in g.items():
                grads[names[k]] = v
        return dout, grads
