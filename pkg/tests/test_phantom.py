import json

import numpy as np
import pytest

from fusqa.biometry import DEFAULT_DATING, measure_crl
from fusqa.dataset import load_manifest, read_dataset, read_pgm, write_dataset, write_pgm
from fusqa.errors import DataError
from fusqa.imgcore import HEAD, PALATE
from fusqa.phantom import (
    PhantomParams, generate_phantom, generate_phantoms, rasterize_mask, render_image, sample_params,
)


def test_generation_is_deterministic():
    params = sample_params(3)
    assert generate_phantom(3, params) == generate_phantom(3, params)
    assert generate_phantoms([3, 4]) == generate_phantoms([3, 4])


def test_seed_7_contains_every_class_and_palate_inside_head():
    (p,) = generate_phantoms([7])
    counts = p.mask.class_counts()
    assert all(counts[c] >= 1 for c in (1, 2, 3, 4))
    palate = p.mask.labels == PALATE
    head_region = (p.mask.labels == HEAD) | palate
    # strictly inside: the palate does not touch anything outside the head
    grown = np.zeros_like(palate)
    for r, c in zip(*np.nonzero(palate)):
        grown[r - 1:r + 2, c - 1:c + 2] = True
    assert np.all(head_region[grown])


def test_true_crl_within_dating_validity_for_100_seeds():
    for p in generate_phantoms(range(100)):
        assert DEFAULT_DATING.is_datable(p.true_crl_mm)
        assert p.true_crl_mm == measure_crl(p.mask).length_mm
        assert all(v >= 1 for k, v in p.mask.class_counts().items() if k)


def test_out_of_bounds_geometry():
    with pytest.raises(DataError, match="phantom out of bounds"):
        rasterize_mask(PhantomParams(head_axes_mm=(40.0, 30.0), body_axes_mm=(40.0, 30.0)))


def test_noiseless_rendering_is_piecewise_constant():
    params = PhantomParams(speckle_strength=0.0, blur_radius_px=0)
    mask = rasterize_mask(params)
    img = render_image(mask, params, seed=1)
    expected = np.round(np.asarray(params.class_intensity)[mask.labels] * 255) / 255
    assert np.array_equal(img.data, expected)


def test_rendering_is_deterministic_and_seeded():
    params = sample_params(5)
    mask = rasterize_mask(params)
    assert render_image(mask, params, 5) == render_image(mask, params, 5)
    assert render_image(mask, params, 5) != render_image(mask, params, 6)


def test_domain_shift_is_rendering_only():
    a = generate_phantoms(range(20), "A")
    b = generate_phantoms(range(20), "B")
    for pa, pb in zip(a, b):
        assert pa.mask == pb.mask
        assert pa.true_crl_mm == pb.true_crl_mm
        assert pa.image != pb.image
        assert pb.params.speckle_strength == pytest.approx(1.5 * pa.params.speckle_strength)
        assert pb.params.blur_radius_px == pa.params.blur_radius_px + 1


def test_domain_b_render_of_same_mask_keeps_crl():
    params = sample_params(11)
    mask = rasterize_mask(params)
    img_a = render_image(mask, params, 11)
    img_b = render_image(mask, params.for_domain("B"), 11)
    assert img_a != img_b
    assert measure_crl(mask).length_mm == generate_phantom(11, params.for_domain("B")).true_crl_mm


def test_for_domain_only_derives_from_a():
    b = PhantomParams().for_domain("B")
    with pytest.raises(DataError):
        b.for_domain("A")


def test_params_roundtrip_through_dict():
    p = sample_params(9, "B")
    assert PhantomParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_larger_grid_is_supported():
    (p,) = generate_phantoms([0], image_size=128, spacing_mm=0.5)
    assert p.mask.shape == (128, 128)
    assert DEFAULT_DATING.is_datable(p.true_crl_mm)


# --- on-disk format ------------------------------------------------------------

def test_pgm_roundtrip(tmp_path, rng):
    arr = rng.integers(0, 256, size=(13, 17), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", arr)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), arr)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n17 13\n255\n")


def test_pgm_with_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[1, 2]]


def test_pgm_errors_name_file(tmp_path):
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(DataError, match="t.pgm"):
        read_pgm(tmp_path / "t.pgm")
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(DataError, match="x.pgm"):
        read_pgm(tmp_path / "x.pgm")


def test_dataset_roundtrip_is_bit_exact(tmp_path):
    samples = generate_phantoms(range(10), "B")
    manifest = write_dataset(samples, tmp_path)
    assert read_dataset(tmp_path) == samples
    pgms = list(tmp_path.glob("*.pgm"))
    assert len(manifest["samples"]) == len(pgms) / 2 == 10
    entry = manifest["samples"][0]
    for key in ("id", "image", "mask", "spacing_mm", "domain", "seed", "true_crl_mm", "true_ga_days"):
        assert key in entry


def test_missing_mask_file_is_named(tmp_path):
    write_dataset(generate_phantoms([1, 2]), tmp_path)
    (tmp_path / "phantom-A-2_mask.pgm").unlink()
    with pytest.raises(DataError, match="phantom-A-2_mask.pgm"):
        read_dataset(tmp_path)


def test_manifest_file_mismatch(tmp_path):
    write_dataset(generate_phantoms([1]), tmp_path)
    lab = read_pgm(tmp_path / "phantom-A-1_mask.pgm")
    lab[lab == PALATE] = HEAD
    write_pgm(tmp_path / "phantom-A-1_mask.pgm", lab)
    with pytest.raises(DataError, match="class counts"):
        read_dataset(tmp_path)


def test_missing_or_corrupt_manifest(tmp_path):
    with pytest.raises(DataError, match="manifest"):
        load_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DataError, match="manifest"):
        load_manifest(tmp_path)
