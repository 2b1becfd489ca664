"""On-disk datasets: 8-bit binary PGM images and masks plus a JSON manifest."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .degrade import DegradeKind, Sample
from .errors import DataError
from .imgcore import GrayImage, LabelMask
from .phantom import PhantomParams, PhantomSample

MANIFEST = "manifest.json"


def write_pgm(path, arr: np.ndarray):
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("PGM writer expects a 2-D uint8 array")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if maxval != 255 or w <= 0 or h <= 0:
        raise DataError(f"{path}: only 8-bit PGM with maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise DataError(f"{path}: PGM pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def quantize(image: GrayImage) -> np.ndarray:
    return np.round(image.data * 255.0).astype(np.uint8)


def _entry(s) -> dict:
    if isinstance(s, PhantomSample):
        return {
            "id": s.id, "spacing_mm": s.mask.spacing_mm, "domain": s.domain, "seed": s.seed,
            "true_crl_mm": s.true_crl_mm, "true_ga_days": s.true_ga_days, "params": s.params.to_dict(),
        }
    if isinstance(s, Sample):
        return {
            "id": s.sample_id, "spacing_mm": s.mask.spacing_mm, "domain": s.domain, "seed": s.seed,
            "true_crl_mm": s.true_crl_mm, "true_ga_days": s.true_ga_days,
            "quality": s.quality, "provenance": str(s.provenance), "source_id": s.source_id,
        }
    raise TypeError(f"cannot serialise {type(s).__name__}")


def write_dataset(samples, directory) -> dict:
    """Write one image and one mask PGM per sample and a manifest; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, seen = [], set()
    for s in samples:
        entry = _entry(s)
        if not entry["id"] or entry["id"] in seen:
            raise DataError(f"sample ids must be unique and non-empty, got {entry['id']!r}")
        seen.add(entry["id"])
        entry["class_counts"] = {str(k): v for k, v in s.mask.class_counts().items()}
        entry["image"] = f"{entry['id']}_image.pgm"
        entry["mask"] = f"{entry['id']}_mask.pgm"
        write_pgm(directory / entry["image"], quantize(s.image))
        write_pgm(directory / entry["mask"], s.mask.labels.astype(np.uint8))
        entries.append(entry)
    manifest = {"samples": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return manifest


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"missing manifest {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("samples"), list):
        raise DataError(f"manifest {path} has no 'samples' list")
    return manifest


def _read_pair(directory: Path, entry: dict):
    try:
        img_path, mask_path = directory / entry["image"], directory / entry["mask"]
        spacing = float(entry["spacing_mm"])
    except KeyError as exc:
        raise DataError(f"manifest entry {entry.get('id')!r} lacks field {exc}") from None
    for p in (img_path, mask_path):
        if not p.is_file():
            raise DataError(f"missing file {p}")
    img, lab = read_pgm(img_path), read_pgm(mask_path)
    if img.shape != lab.shape:
        raise DataError(f"{img_path} and {mask_path} have different dimensions")
    if lab.max(initial=0) > 4:
        raise DataError(f"{mask_path}: mask values must be labels 0-4")
    if "class_counts" in entry:
        counts = {str(k): int(v) for k, v in zip(*np.unique(lab, return_counts=True))}
        if any(counts.get(k, 0) != v for k, v in entry["class_counts"].items()):
            raise DataError(f"{mask_path} does not match the class counts recorded in the manifest")
    return GrayImage(img / 255.0, spacing), LabelMask(lab, spacing)


def read_dataset(directory) -> list:
    """Load a dataset; entries with a ``quality`` field come back as :class:`Sample`."""
    directory = Path(directory)
    out = []
    for entry in load_manifest(directory)["samples"]:
        image, mask = _read_pair(directory, entry)
        try:
            if "quality" in entry:
                out.append(Sample(
                    image=image, mask=mask, quality=int(entry["quality"]),
                    provenance=DegradeKind.parse(entry["provenance"]),
                    source_id=entry.get("source_id", entry["id"]),
                    true_crl_mm=float(entry["true_crl_mm"]), true_ga_days=float(entry["true_ga_days"]),
                    sample_id=entry["id"], domain=entry.get("domain", "A"), seed=int(entry.get("seed", 0)),
                ))
            else:
                params = PhantomParams.from_dict(entry["params"]) if "params" in entry else PhantomParams(
                    image_size=mask.width, spacing_mm=mask.spacing_mm, domain=entry.get("domain", "A"))
                sample = PhantomSample(
                    image, mask, float(entry["true_crl_mm"]), float(entry["true_ga_days"]),
                    int(entry["seed"]), params,
                )
                if sample.id != entry["id"]:
                    raise DataError(f"manifest id {entry['id']!r} does not match seed/domain ({sample.id})")
                out.append(sample)
        except KeyError as exc:
            raise DataError(f"manifest entry {entry.get('id')!r} lacks field {exc}") from None
    return out
