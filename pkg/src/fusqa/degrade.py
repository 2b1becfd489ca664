"""Good and poor mask variants: the alteration pipelines used to label training pairs."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegradationError
from .imgcore import (
    BACKGROUND, BODY, FOREGROUND, GAP, HEAD, PALATE, GrayImage, LabelMask, dilate, erode,
)

# lowest first; later classes win contested pixels when over-dilating
DILATE_PAINT_ORDER = (GAP, PALATE, BODY, HEAD)
POOR_PIPELINES = ("OverDilate", "OverErode", "WrongClassPalateToHead", "DeleteClass", "FlipClass")
GOOD_KINDS = ("Original", "GoodDilate", "GoodErode")
MAX_RETRIES = 8

_KIND_RE = re.compile(r"^([A-Za-z]+)(?:\((\d+)\))?$")


@dataclass(frozen=True)
class DegradeKind:
    name: str
    arg: int | None = None

    def __post_init__(self):
        if self.name not in GOOD_KINDS + POOR_PIPELINES:
            raise DataError(f"unknown degradation {self.name!r}")
        if self.name in ("DeleteClass", "FlipClass", "GoodDilate", "GoodErode") and self.arg not in FOREGROUND:
            raise DataError(f"{self.name} needs a foreground class id, got {self.arg}")

    @property
    def is_good(self) -> bool:
        return self.name in GOOD_KINDS

    def __str__(self):
        return self.name if self.arg is None else f"{self.name}({self.arg})"

    @classmethod
    def parse(cls, text: str) -> "DegradeKind":
        m = _KIND_RE.match(text.strip())
        if not m:
            raise DataError(f"cannot parse provenance {text!r}")
        return cls(m.group(1), int(m.group(2)) if m.group(2) else None)


ORIGINAL = DegradeKind("Original")


@dataclass(frozen=True, eq=False)
class Sample:
    """An image/mask pair with its quality label and where the mask came from."""

    image: GrayImage
    mask: LabelMask
    quality: int
    provenance: DegradeKind
    source_id: str
    true_crl_mm: float
    true_ga_days: float
    sample_id: str = ""
    domain: str = "A"
    seed: int = 0

    def __post_init__(self):
        if self.quality not in (0, 1):
            raise DataError("quality must be 0 (poor) or 1 (good)")
        if bool(self.quality) != self.provenance.is_good:
            raise DataError(f"quality {self.quality} inconsistent with provenance {self.provenance}")
        if self.image.data.shape != self.mask.labels.shape:
            raise DataError("image and mask dimensions differ")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return all(getattr(self, f) == getattr(other, f) for f in self.__dataclass_fields__)


def _check_class(class_id):
    if class_id not in FOREGROUND:
        raise DataError(f"class_id must be a foreground class in {FOREGROUND}, got {class_id}")


def over_dilate(mask: LabelMask, iterations: int) -> LabelMask:
    """Dilate every foreground class; head > body > palate > gap on contested pixels."""
    if iterations < 2:
        raise ValueError("over-dilation needs iterations >= 2")
    labels = np.zeros_like(mask.labels)
    for c in DILATE_PAINT_ORDER:
        support = mask.labels == c
        if support.any():
            labels[dilate(support, iterations)] = c
    return mask.with_labels(labels)


def over_erode(mask: LabelMask, iterations: int) -> LabelMask:
    if iterations < 2:
        raise ValueError("over-erosion needs iterations >= 2")
    labels = np.zeros_like(mask.labels)
    for c in FOREGROUND:
        support = mask.labels == c
        if support.any():
            labels[erode(support, iterations)] = c
    return mask.with_labels(labels)


def wrong_class_palate_to_head(mask: LabelMask) -> LabelMask:
    labels = mask.labels.copy()
    labels[labels == PALATE] = HEAD
    return mask.with_labels(labels)


def delete_class(mask: LabelMask, class_id: int) -> LabelMask:
    _check_class(class_id)
    labels = mask.labels.copy()
    labels[labels == class_id] = BACKGROUND
    return mask.with_labels(labels)


def flip_class(mask: LabelMask, class_id: int) -> LabelMask:
    """Mirror one class top-to-bottom within its own bounding box."""
    _check_class(class_id)
    rows, cols = np.nonzero(mask.labels == class_id)
    if len(rows) == 0:
        raise DegradationError("class not present")
    labels = mask.labels.copy()
    labels[rows, cols] = BACKGROUND
    labels[rows.min() + rows.max() - rows, cols] = class_id
    return mask.with_labels(labels)


def good_dilate(mask: LabelMask, class_id: int) -> LabelMask:
    """One 3x3 dilation of a single class, claiming background pixels only."""
    _check_class(class_id)
    support = mask.labels == class_id
    if not support.any():
        raise DegradationError("class not present")
    labels = mask.labels.copy()
    labels[dilate(support) & (labels == BACKGROUND)] = class_id
    return mask.with_labels(labels)


def good_erode(mask: LabelMask, class_id: int) -> LabelMask:
    _check_class(class_id)
    support = mask.labels == class_id
    n = int(support.sum())
    if n == 0:
        raise DegradationError("class not present")
    kept = erode(support)
    if n - int(kept.sum()) > 0.5 * n:
        raise DegradationError("erosion too destructive")
    labels = mask.labels.copy()
    labels[support & ~kept] = BACKGROUND
    return mask.with_labels(labels)


def apply_kind(mask: LabelMask, kind: DegradeKind) -> LabelMask:
    ops = {
        "Original": lambda m, a: m,
        "GoodDilate": good_dilate,
        "GoodErode": good_erode,
        "OverDilate": over_dilate,
        "OverErode": over_erode,
        "WrongClassPalateToHead": lambda m, a: wrong_class_palate_to_head(m),
        "DeleteClass": delete_class,
        "FlipClass": flip_class,
    }
    return ops[kind.name](mask, kind.arg)


def severity_range(mask: LabelMask) -> tuple[int, int]:
    """Iteration range for over-dilation/erosion, 5-10% of the shorter side."""
    side = min(mask.shape)
    lo = max(2, int(round(0.05 * side)))
    return lo, max(lo, int(round(0.10 * side)))


def _present(mask: LabelMask):
    counts = mask.class_counts()
    return [c for c in FOREGROUND if counts[c] > 0]


def _draw_poor(mask, pipeline, rng, flip_random_class):
    present = _present(mask)
    if pipeline in ("OverDilate", "OverErode"):
        lo, hi = severity_range(mask)
        return DegradeKind(pipeline, int(rng.integers(lo, hi + 1)))
    if pipeline == "DeleteClass":
        return DegradeKind(pipeline, int(rng.choice(present)))
    if pipeline == "FlipClass":
        if flip_random_class or HEAD not in present:
            return DegradeKind(pipeline, int(rng.choice(present)))
        return DegradeKind(pipeline, HEAD)
    return DegradeKind(pipeline)


def make_variant_set(sample, seed: int, n_good: int = 4, n_poor: int = 5,
                     flip_random_class: bool = False) -> list[Sample]:
    """The original plus ``n_good`` good and ``n_poor`` poor variants of one phantom.

    Good variants alternate single-class dilation and erosion on distinct random
    classes; poor variants cycle through the five alteration pipelines. Every
    variant shares the phantom's image unmodified.
    """
    if n_good < 1 or n_poor < 1:
        raise ValueError("n_good and n_poor must be >= 1")
    rng = np.random.default_rng(seed)
    mask = sample.mask
    present = _present(mask)
    if not present:
        raise DataError(f"{sample.id}: mask has no foreground")

    def wrap(k, kind, new_mask):
        return Sample(
            image=sample.image, mask=new_mask, quality=int(kind.is_good), provenance=kind,
            source_id=sample.id, true_crl_mm=sample.true_crl_mm, true_ga_days=sample.true_ga_days,
            sample_id=f"{sample.id}-v{k}", domain=sample.domain, seed=sample.seed,
        )

    out = [wrap(0, ORIGINAL, mask)]
    used = {"GoodDilate": set(), "GoodErode": set()}
    for i in range(n_good):
        name = "GoodDilate" if i % 2 == 0 else "GoodErode"
        for _ in range(MAX_RETRIES + 1):
            choices = [c for c in present if c not in used[name]]
            if not choices:
                used[name].clear()
                choices = list(present)
            cls = int(rng.choice(choices))
            used[name].add(cls)
            kind = DegradeKind(name, cls)
            try:
                new = apply_kind(mask, kind)
            except DegradationError:
                continue
            break
        else:
            raise DegradationError(f"{sample.id}: no class accepts {name} after {MAX_RETRIES} retries")
        out.append(wrap(len(out), kind, new))

    for i in range(n_poor):
        pipeline = POOR_PIPELINES[i % len(POOR_PIPELINES)]
        for _ in range(MAX_RETRIES + 1):
            kind = _draw_poor(mask, pipeline, rng, flip_random_class)
            try:
                new = apply_kind(mask, kind)
            except DegradationError:
                continue
            if new != mask:
                break
        else:
            raise DegradationError(f"{sample.id}: {pipeline} left the mask unchanged after {MAX_RETRIES} retries")
        out.append(wrap(len(out), kind, new))
    return out


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    total = a.sum() + b.sum()
    return 1.0 if total == 0 else 2.0 * float((a & b).sum()) / float(total)
