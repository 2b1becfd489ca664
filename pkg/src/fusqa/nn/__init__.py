from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .gradcheck import analytic_gradients, max_relative_error, tiny_classifier
from .layers import (
    Conv2d, FullyConnected, GlobalAvgPool, Layer, MaxPool, ReLU, Sequential, ShapeError, Sigmoid,
    Upsample, layer_from_spec,
)
from .losses import EPS, bce_grad, bce_loss, bce_with_logits, softmax_cross_entropy
from .optim import SGD, sgd_step

__all__ = [
    "CheckpointError", "Conv2d", "EPS", "FullyConnected", "GlobalAvgPool", "Layer", "MaxPool", "ReLU",
    "SGD", "Sequential", "ShapeError", "Sigmoid", "Upsample", "analytic_gradients", "bce_grad", "bce_loss",
    "bce_with_logits", "layer_from_spec", "max_relative_error", "read_checkpoint", "sgd_step",
    "softmax_cross_entropy", "tiny_classifier", "write_checkpoint",
]
