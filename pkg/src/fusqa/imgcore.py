"""Grids, 3x3 binary morphology, contours, diameters and joint geometric transforms.

Pixel sets are boolean arrays shaped like the grid they live on; ``points``
converts one to an ``(n, 2)`` array of ``(row, col)`` coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, radians, sin, sqrt

import numpy as np
from scipy import ndimage

from .errors import DataError

BACKGROUND, BODY, HEAD, GAP, PALATE = 0, 1, 2, 3, 4
LABELS = (BACKGROUND, BODY, HEAD, GAP, PALATE)
FOREGROUND = (BODY, HEAD, GAP, PALATE)
CLASS_NAMES = {BACKGROUND: "background", BODY: "body", HEAD: "head", GAP: "gap", PALATE: "palate"}

MIN_SIZE = 8
BRUTE_FORCE_BELOW = 16


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale intensities in [0, 1], row-major ``(height, width)``."""

    data: np.ndarray
    spacing_mm: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"image must be 2-D, got shape {data.shape}")
        if min(data.shape) < MIN_SIZE:
            raise DataError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise DataError("image intensities must be finite and within [0, 1]")
        if not self.spacing_mm > 0:
            raise DataError("spacing_mm must be positive")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.spacing_mm == other.spacing_mm and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel class labels in {0..4}, row-major ``(height, width)``."""

    labels: np.ndarray
    spacing_mm: float = 1.0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DataError(f"mask must be 2-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > PALATE):
            raise DataError("mask labels must lie in {0, 1, 2, 3, 4}")
        if np.issubdtype(labels.dtype, np.floating) and not np.all(labels == np.round(labels)):
            raise DataError("mask labels must be integers")
        if not self.spacing_mm > 0:
            raise DataError("spacing_mm must be positive")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape

    def with_labels(self, labels) -> "LabelMask":
        return LabelMask(labels, self.spacing_mm)

    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.labels.ravel(), minlength=len(LABELS))
        return {c: int(counts[c]) for c in LABELS}

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.spacing_mm == other.spacing_mm and np.array_equal(self.labels, other.labels)


def points(support: np.ndarray) -> np.ndarray:
    """``(n, 2)`` integer array of the ``(row, col)`` members of a pixel set, in raster order."""
    return np.argwhere(support)


def from_points(pts, grid_h: int, grid_w: int) -> np.ndarray:
    support = np.zeros((grid_h, grid_w), dtype=bool)
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    if len(pts):
        if pts.min() < 0 or pts[:, 0].max() >= grid_h or pts[:, 1].max() >= grid_w:
            raise DataError("point outside grid bounds")
        support[pts[:, 0], pts[:, 1]] = True
    return support


def binary_of_class(mask: LabelMask, class_id: int) -> np.ndarray:
    if class_id not in LABELS:
        raise DataError(f"unknown class id {class_id}")
    return mask.labels == class_id


def _shifted_stack(support: np.ndarray):
    h, w = support.shape
    padded = np.pad(support, 1, constant_values=False)
    for dr in range(3):
        for dc in range(3):
            yield padded[dr:dr + h, dc:dc + w]


def dilate(support: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Dilate by the full 3x3 kernel; growth is clipped at the grid border."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    out = np.asarray(support, dtype=bool)
    for _ in range(iterations):
        grown = np.zeros_like(out)
        for view in _shifted_stack(out):
            grown |= view
        out = grown
    return out


def erode(support: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Erode by the full 3x3 kernel; out-of-grid neighbours count as absent."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    out = np.asarray(support, dtype=bool)
    for _ in range(iterations):
        kept = np.ones_like(out)
        for view in _shifted_stack(out):
            kept &= view
        out = kept
    return out


def outer_contour(support: np.ndarray) -> np.ndarray:
    support = np.asarray(support, dtype=bool)
    return dilate(support, 1) & ~support


def connected_components(support: np.ndarray) -> list[np.ndarray]:
    """8-connected components, ordered by their smallest ``(row, col)`` member."""
    labelled, n = ndimage.label(np.asarray(support, dtype=bool), structure=np.ones((3, 3), dtype=int))
    comps = [labelled == k for k in range(1, n + 1)]
    comps.sort(key=lambda c: tuple(np.argwhere(c)[0]))
    return comps


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(pts) -> list[tuple[int, int]]:
    """Strict convex hull (no collinear vertices) in counter-clockwise order."""
    uniq = sorted(set(map(tuple, pts)))
    if len(uniq) <= 2:
        return uniq
    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _antipodal_pairs(hull):
    n = len(hull)
    if n == 2:
        yield hull[0], hull[1]
        return
    j = 1
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        # advance j while the triangle (a, b, hull[j+1]) beats (a, b, hull[j])
        while _cross(a, b, hull[(j + 1) % n]) > _cross(a, b, hull[j]):
            j = (j + 1) % n
        yield a, hull[j]
        yield b, hull[j]
        if _cross(a, b, hull[(j + 1) % n]) == _cross(a, b, hull[j]):
            # parallel edges: the next vertex is antipodal too
            yield a, hull[(j + 1) % n]
            yield b, hull[(j + 1) % n]


def _best_pair(pairs):
    best = None
    for p, q in pairs:
        if p == q:
            continue
        if q < p:
            p, q = q, p
        d2 = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2
        key = (-d2, p, q)
        if best is None or key < best:
            best = key
    return best


def max_pairwise_distance(pts) -> tuple[tuple[int, int], tuple[int, int], float]:
    """Diameter of an integer point set via convex hull and rotating calipers.

    Returns ``(p1, p2, dist)`` with ``p1 < p2`` lexicographically; among pairs at
    the maximal distance the lexicographically smallest ``(p1, p2)`` wins.
    """
    uniq = sorted(set((int(r), int(c)) for r, c in np.asarray(pts).reshape(-1, 2)))
    if len(uniq) < 2:
        raise ValueError("degenerate point set")
    if len(uniq) < BRUTE_FORCE_BELOW:
        pairs = ((uniq[i], uniq[j]) for i in range(len(uniq)) for j in range(i + 1, len(uniq)))
    else:
        pairs = _antipodal_pairs(convex_hull(uniq))
    neg_d2, p1, p2 = _best_pair(pairs)
    return p1, p2, sqrt(-neg_d2)


def _transform_coords(h, w, scale, rotate_deg, hflip):
    """Source coordinates for every output pixel of the forward map flip -> rotate -> scale."""
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    y, x = rows - cy, cols - cx
    if scale != 1.0:
        y, x = y / scale, x / scale
    if rotate_deg != 0.0:
        t = radians(rotate_deg)
        c, s = cos(t), sin(t)
        y, x = c * y - s * x, s * y + c * x
    if hflip:
        x = -x
    return y + cy, x + cx


def warp_arrays(image: np.ndarray, labels: np.ndarray, scale=1.0, rotate_deg=0.0, hflip=False):
    """Array-level core of :func:`geometric_transform` (used by training augmentation)."""
    if image.shape != labels.shape:
        raise DataError(f"image {image.shape} and mask {labels.shape} dimensions differ")
    if not scale > 0:
        raise ValueError("scale must be positive")
    if scale == 1.0 and rotate_deg == 0.0 and not hflip:
        return image.copy(), labels.copy()
    h, w = image.shape
    sy, sx = _transform_coords(h, w, scale, rotate_deg, hflip)
    coords = np.stack([sy, sx])
    img = ndimage.map_coordinates(image, coords, order=1, mode="constant", cval=0.0)
    np.clip(img, 0.0, 1.0, out=img)
    ri, ci = np.rint(sy).astype(np.int64), np.rint(sx).astype(np.int64)
    inside = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
    lab = np.zeros_like(labels)
    lab[inside] = labels[ri[inside], ci[inside]]
    return img.astype(image.dtype, copy=False), lab


def geometric_transform(image: GrayImage, mask: LabelMask, scale=1.0, rotate_deg=0.0, hflip=False):
    """Apply one scale/rotation/flip about the grid centre to an image and its mask.

    Intensities are resampled bilinearly, labels by nearest neighbour; anything
    mapped from outside the source becomes 0.
    """
    if image.data.shape != mask.labels.shape:
        raise DataError(f"image {image.data.shape} and mask {mask.labels.shape} dimensions differ")
    img, lab = warp_arrays(image.data, mask.labels, scale, rotate_deg, hflip)
    return GrayImage(img, image.spacing_mm), LabelMask(lab, mask.spacing_mm)
