"""Segmentation quality assessment for fetal crown-rump-length masks, on synthetic phantoms."""

from .biometry import DatingModel, CrlMeasurement, downstream_errors, ga_from_crl, measure_crl
from .cae import CaeDetector, cae_score, train_cae
from .checkpoints import load_checkpoint, save_checkpoint
from .dataset import read_dataset, write_dataset
from .degrade import DegradeKind, Sample, make_variant_set
from .errors import DataError, DegradationError, FusqaError, NumericError
from .evaluate import ConfusionCounts, EvalReport, metrics, run_benchmark, write_report
from .imgcore import GrayImage, LabelMask, geometric_transform
from .phantom import PhantomParams, PhantomSample, generate_phantom, generate_phantoms, render_image
from .qa import QualityClassifier, assemble_input, predict, train_qa

__version__ = "0.1.0"

__all__ = [
    "CaeDetector", "ConfusionCounts", "CrlMeasurement", "DataError", "DatingModel", "DegradationError",
    "DegradeKind", "EvalReport", "FusqaError", "GrayImage", "LabelMask", "NumericError", "PhantomParams",
    "PhantomSample", "QualityClassifier", "Sample", "assemble_input", "cae_score", "downstream_errors",
    "ga_from_crl", "generate_phantom", "generate_phantoms", "geometric_transform", "load_checkpoint",
    "make_variant_set", "measure_crl", "metrics", "predict", "read_dataset", "render_image",
    "run_benchmark", "save_checkpoint", "train_cae", "train_qa", "write_dataset", "write_report",
]
