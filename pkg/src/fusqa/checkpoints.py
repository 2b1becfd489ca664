"""Model-level checkpoint save/load for both estimator kinds."""
from __future__ import annotations

from .cae import CaeDetector
from .errors import DataError
from .nn import read_checkpoint
from .qa import QualityClassifier


def save_checkpoint(model, path, metadata: dict | None = None):
    model.save(path, metadata)


def load_checkpoint(path):
    header, params = read_checkpoint(path)
    kind = header.get("kind")
    if kind == "qa":
        return QualityClassifier.from_checkpoint(header, params)
    if kind == "cae":
        return CaeDetector.from_checkpoint(header, params)
    raise DataError(f"{path}: unknown model kind {kind!r}")
