"""Synthetic fetus-like image/mask phantoms with known crown-rump length."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from .biometry import DEFAULT_DATING, DatingModel, ga_from_crl, measure_crl
from .errors import DataError
from .imgcore import BODY, FOREGROUND, GAP, HEAD, PALATE, GrayImage, LabelMask, dilate

DEFAULT_INTENSITY = (0.08, 0.45, 0.6, 0.12, 0.9)
DOMAIN_B_INTENSITY_SHIFT = 0.1
DOMAIN_B_SPECKLE_FACTOR = 1.5
DOMAIN_B_EXTRA_BLUR = 1

HEAD_AXES_RANGE_MM = (11.0, 13.0)
BODY_AXES_RANGE_MM = (11.0, 15.0)
GAP_WIDTH_RANGE_MM = (1.0, 2.0)
PALATE_RADIUS_RANGE_MM = (1.0, 2.0)
POSE_RANGE_DEG = (-30.0, 30.0)

# chin/chest band half-height as a fraction of the thinner semi-axis; 1.0 fills the wedge
GAP_HALF_HEIGHT = 1.0
BORDER_MARGIN_PX = 1


@dataclass(frozen=True)
class PhantomParams:
    image_size: int = 64
    spacing_mm: float = 1.0
    head_axes_mm: tuple[float, float] = (12.0, 11.0)
    body_axes_mm: tuple[float, float] = (13.0, 12.0)
    gap_width_mm: float = 1.5
    palate_radius_mm: float = 1.5
    pose_deg: float = 0.0
    class_intensity: tuple[float, ...] = DEFAULT_INTENSITY
    speckle_strength: float = 0.35
    blur_radius_px: int = 1
    domain: str = "A"

    def __post_init__(self):
        if self.domain not in ("A", "B"):
            raise DataError(f"domain must be 'A' or 'B', got {self.domain!r}")
        if self.image_size < 8 or not self.spacing_mm > 0:
            raise DataError("image_size must be >= 8 and spacing_mm positive")
        if len(self.class_intensity) != 5 or not all(0.0 <= v <= 1.0 for v in self.class_intensity):
            raise DataError("class_intensity needs five values in [0, 1]")
        if self.speckle_strength < 0 or self.blur_radius_px < 0:
            raise DataError("speckle_strength and blur_radius_px must be non-negative")
        for name in ("head_axes_mm", "body_axes_mm"):
            if min(getattr(self, name)) <= 0:
                raise DataError(f"{name} must be positive")
        object.__setattr__(self, "head_axes_mm", tuple(float(v) for v in self.head_axes_mm))
        object.__setattr__(self, "body_axes_mm", tuple(float(v) for v in self.body_axes_mm))
        object.__setattr__(self, "class_intensity", tuple(float(v) for v in self.class_intensity))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("head_axes_mm", "body_axes_mm", "class_intensity"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomParams":
        return cls(**d)

    def for_domain(self, domain: str) -> "PhantomParams":
        """Same geometry rendered with the given domain's profile (A is the reference)."""
        if domain == self.domain:
            return self
        if self.domain != "A" or domain != "B":
            raise DataError("domain profiles are derived from a domain-A reference")
        return replace(
            self,
            domain="B",
            class_intensity=tuple(min(1.0, v + DOMAIN_B_INTENSITY_SHIFT) for v in self.class_intensity),
            speckle_strength=self.speckle_strength * DOMAIN_B_SPECKLE_FACTOR,
            blur_radius_px=self.blur_radius_px + DOMAIN_B_EXTRA_BLUR,
        )


@dataclass(frozen=True, eq=False)
class PhantomSample:
    image: GrayImage
    mask: LabelMask
    true_crl_mm: float
    true_ga_days: float
    seed: int
    params: PhantomParams = field(default_factory=PhantomParams)

    @property
    def id(self) -> str:
        return f"phantom-{self.params.domain}-{self.seed}"

    @property
    def domain(self) -> str:
        return self.params.domain

    def __eq__(self, other):
        if not isinstance(other, PhantomSample):
            return NotImplemented
        return (
            self.image == other.image
            and self.mask == other.mask
            and self.true_crl_mm == other.true_crl_mm
            and self.true_ga_days == other.true_ga_days
            and self.seed == other.seed
            and self.params == other.params
        )


def _ellipse_half_extent(a, b, theta):
    c, s = math.cos(theta), math.sin(theta)
    return math.hypot(a * c, b * s), math.hypot(a * s, b * c)


def _layout(params: PhantomParams):
    """Head/body centres (x, y in mm from grid centre) and the fetal axis frame."""
    a_h, b_h = params.head_axes_mm
    a_b, b_b = params.body_axes_mm
    g = params.gap_width_mm
    theta = math.radians(params.pose_deg)
    ux, uy = math.cos(theta), math.sin(theta)
    # gap centre placed so the crown-to-rump span is centred on the grid
    shift = (a_b - a_h)
    ox, oy = -shift * ux, -shift * uy
    s_head = -(g / 2 + a_h)
    s_body = g / 2 + a_b
    return theta, (ux, uy), (ox, oy), s_head, s_body


def _check_fits(params: PhantomParams):
    theta, (ux, uy), (ox, oy), s_head, s_body = _layout(params)
    half = (params.image_size - 1) / 2.0 * params.spacing_mm
    limit = half - BORDER_MARGIN_PX * params.spacing_mm
    for s_c, (a, b) in ((s_head, params.head_axes_mm), (s_body, params.body_axes_mm)):
        cx, cy = ox + s_c * ux, oy + s_c * uy
        ex, ey = _ellipse_half_extent(a, b, theta)
        if abs(cx) + ex > limit or abs(cy) + ey > limit:
            raise DataError("phantom out of bounds")


def rasterize_mask(params: PhantomParams) -> LabelMask:
    """Label map of body, head, chin/chest gap and palate for the given geometry."""
    _check_fits(params)
    n, sp = params.image_size, params.spacing_mm
    theta, (ux, uy), (ox, oy), s_head, s_body = _layout(params)
    a_h, b_h = params.head_axes_mm
    a_b, b_b = params.body_axes_mm
    centre = (n - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    x = (cols - centre) * sp - ox
    y = (rows - centre) * sp - oy
    s = x * ux + y * uy
    t = -x * uy + y * ux

    head = ((s - s_head) / a_h) ** 2 + (t / b_h) ** 2 <= 1.0
    body = ((s - s_body) / a_b) ** 2 + (t / b_b) ** 2 <= 1.0
    band = GAP_HALF_HEIGHT * min(b_h, b_b)
    gap = (np.abs(t) <= band) & (s >= s_head) & (s <= s_body) & ~head & ~body

    labels = np.zeros((n, n), dtype=np.uint8)
    labels[body] = BODY
    labels[head] = HEAD
    labels[gap] = GAP

    # palate sits on the ventral side of the head, pulled towards the centre until it
    # is enclosed by head pixels on every side
    r = params.palate_radius_mm
    for pull in np.linspace(1.0, 0.0, 11):
        ps = s_head - 0.15 * a_h * pull
        pt = 0.45 * b_h * pull
        palate = (s - ps) ** 2 + (t - pt) ** 2 <= r * r
        if not palate.any():
            d2 = (s - ps) ** 2 + (t - pt) ** 2
            palate = d2 == d2.min()
        if palate.any() and not (dilate(palate) & ~head).any():
            break
    else:
        raise DataError("palate does not fit inside the head")
    labels[palate] = PALATE

    counts = np.bincount(labels.ravel(), minlength=5)
    missing = [c for c in FOREGROUND if counts[c] == 0]
    if missing:
        raise DataError(f"phantom geometry leaves classes {missing} empty")
    return LabelMask(labels, sp)


def render_image(mask: LabelMask, params: PhantomParams, seed: int) -> GrayImage:
    """Class-mean intensities with multiplicative uniform speckle, box blur, clamp.

    The result is quantised to multiples of 1/255 so that it survives the
    8-bit on-disk format unchanged.
    """
    rng = np.random.default_rng(seed)
    means = np.asarray(params.class_intensity, dtype=np.float64)
    values = means[mask.labels]
    noise = rng.uniform(-1.0, 1.0, size=values.shape)
    values = values * (1.0 + params.speckle_strength * noise)
    if params.blur_radius_px > 0:
        values = ndimage.uniform_filter(values, size=2 * params.blur_radius_px + 1, mode="nearest")
    values = np.clip(values, 0.0, 1.0)
    return GrayImage(np.round(values * 255.0) / 255.0, mask.spacing_mm)


def sample_params(seed: int, domain: str = "A", image_size: int = 64, spacing_mm: float = 1.0,
                  base: PhantomParams | None = None, max_tries: int = 50) -> PhantomParams:
    """Draw a random geometry; the draw depends on ``seed`` only, never on ``domain``."""
    base = base or PhantomParams(image_size=image_size, spacing_mm=spacing_mm)
    rng = np.random.default_rng([seed, 0x5EED])
    for _ in range(max_tries):
        head = sorted(rng.uniform(*HEAD_AXES_RANGE_MM, size=2), reverse=True)
        body = sorted(rng.uniform(*BODY_AXES_RANGE_MM, size=2), reverse=True)
        candidate = replace(
            base,
            domain="A",
            head_axes_mm=tuple(float(v) for v in head),
            body_axes_mm=tuple(float(v) for v in body),
            gap_width_mm=float(rng.uniform(*GAP_WIDTH_RANGE_MM)),
            palate_radius_mm=float(rng.uniform(*PALATE_RADIUS_RANGE_MM)),
            pose_deg=float(rng.uniform(*POSE_RANGE_DEG)),
        )
        try:
            _check_fits(candidate)
        except DataError:
            continue
        return candidate.for_domain(domain)
    raise DataError("phantom out of bounds")


def generate_phantom(seed: int, params: PhantomParams, dating: DatingModel = DEFAULT_DATING) -> PhantomSample:
    mask = rasterize_mask(params)
    image = render_image(mask, params, seed)
    crl = measure_crl(mask).length_mm
    return PhantomSample(image, mask, crl, ga_from_crl(crl, dating), int(seed), params)


def generate_phantoms(seeds, domain: str = "A", image_size: int = 64, spacing_mm: float = 1.0,
                      dating: DatingModel = DEFAULT_DATING) -> list[PhantomSample]:
    return [
        generate_phantom(s, sample_params(s, domain, image_size, spacing_mm), dating)
        for s in seeds
    ]
