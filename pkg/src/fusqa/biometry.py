"""Crown-rump length measurement and gestational-age dating."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .imgcore import BODY, HEAD, LabelMask, max_pairwise_distance, outer_contour, points


@dataclass(frozen=True)
class CrlMeasurement:
    p1: tuple[int, int]
    p2: tuple[int, int]
    length_mm: float
    contour_size: int


@dataclass(frozen=True)
class DatingModel:
    """``GA = c0 + c1 * sqrt(CRL) + c2 * CRL`` (days, CRL in mm).

    Defaults are the INTERGROWTH-21st first-trimester dating equation,
    valid for CRL between 15 and 95 mm.
    """

    c0: float = 40.9041
    c1: float = 3.21585
    c2: float = 0.348956
    valid_lo_mm: float = 15.0
    valid_hi_mm: float = 95.0

    @classmethod
    def from_config(cls, cfg: dict) -> "DatingModel":
        known = {"c0", "c1", "c2", "valid_lo_mm", "valid_hi_mm"}
        unknown = set(cfg) - known
        if unknown:
            raise DataError(f"unknown dating config keys: {sorted(unknown)}")
        model = cls(**{k: float(v) for k, v in cfg.items()})
        if not model.valid_lo_mm < model.valid_hi_mm or model.valid_lo_mm < 0:
            raise DataError("dating validity range must satisfy 0 <= lo < hi")
        return model

    @classmethod
    def from_file(cls, path) -> "DatingModel":
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read dating config {path}: {exc}") from exc
        return cls.from_config(cfg.get("dating", cfg))

    def to_config(self) -> dict:
        return asdict(self)

    def is_datable(self, crl_mm: float) -> bool:
        return self.valid_lo_mm <= crl_mm <= self.valid_hi_mm


DEFAULT_DATING = DatingModel()


def fetal_support(mask: LabelMask) -> np.ndarray:
    return (mask.labels == HEAD) | (mask.labels == BODY)


def measure_crl(mask: LabelMask) -> CrlMeasurement:
    """Longest chord of the outer contour of the head and body supports."""
    support = fetal_support(mask)
    if support.sum() < 2:
        raise DataError("no measurable fetus")
    contour = points(outer_contour(support))
    p1, p2, dist = max_pairwise_distance(contour)
    return CrlMeasurement(p1, p2, dist * mask.spacing_mm, len(contour))


def ga_from_crl(crl_mm: float, model: DatingModel = DEFAULT_DATING) -> float:
    if not (math.isfinite(crl_mm) and model.is_datable(crl_mm)):
        raise DataError(
            f"CRL outside dating validity: {crl_mm:.3f} mm not in "
            f"[{model.valid_lo_mm}, {model.valid_hi_mm}]"
        )
    return model.c0 + model.c1 * math.sqrt(crl_mm) + model.c2 * crl_mm


@dataclass
class GroupErrors:
    """Mean downstream errors for one predicted-quality group.

    Means are ``None`` when nothing in the group could be measured/dated.
    ``undatable`` counts samples whose measured CRL fell outside the dating
    range (or that had no measurable fetus); they are excluded from the GA mean.
    """

    n: int
    crl_err_mm: float | None
    ga_err_days: float | None
    undatable: int
    unmeasurable: int = 0


def _group_errors(samples, model: DatingModel) -> GroupErrors:
    crl_errs, ga_errs = [], []
    undatable = unmeasurable = 0
    for s in samples:
        try:
            crl = measure_crl(s.mask).length_mm
        except DataError:
            unmeasurable += 1
            undatable += 1
            continue
        crl_errs.append(abs(crl - s.true_crl_mm))
        if model.is_datable(crl):
            ga_errs.append(abs(ga_from_crl(crl, model) - s.true_ga_days))
        else:
            undatable += 1
    return GroupErrors(
        n=len(samples),
        crl_err_mm=float(np.mean(crl_errs)) if crl_errs else None,
        ga_err_days=float(np.mean(ga_errs)) if ga_errs else None,
        undatable=undatable,
        unmeasurable=unmeasurable,
    )


def downstream_errors(predictions, model: DatingModel = DEFAULT_DATING) -> dict[str, GroupErrors]:
    """Split ``(sample, predicted_quality)`` pairs by prediction and average CRL/GA errors."""
    good = [s for s, q in predictions if int(q) == 1]
    poor = [s for s, q in predictions if int(q) == 0]
    return {"good": _group_errors(good, model), "poor": _group_errors(poor, model)}
