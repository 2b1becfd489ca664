import numpy as np
import pytest

from fusqa.biometry import measure_crl
from fusqa.degrade import (
    DegradeKind, Sample, delete_class, dice, flip_class, good_dilate, good_erode, make_variant_set,
    over_dilate, over_erode, severity_range, wrong_class_palate_to_head,
)
from fusqa.errors import DataError, DegradationError
from fusqa.imgcore import BODY, FOREGROUND, GAP, HEAD, PALATE, LabelMask


def counts_mask():
    """A 20x20 mask with class counts {1: 100, 2: 50, 3: 10, 4: 5}."""
    lab = np.zeros((20, 20), dtype=int)
    lab[0:10, 0:10] = BODY
    lab[10:15, 0:10] = HEAD
    lab[15, 0:10] = GAP
    lab[17, 0:5] = PALATE
    return LabelMask(lab)


def counts(mask):
    c = mask.class_counts()
    return {k: c[k] for k in FOREGROUND}


def test_wrong_class_relabel_arithmetic():
    out = wrong_class_palate_to_head(counts_mask())
    assert counts(out) == {1: 100, 2: 55, 3: 10, 4: 0}


def test_wrong_class_without_palate_is_identity():
    m = delete_class(counts_mask(), PALATE)
    assert wrong_class_palate_to_head(m) == m


def test_wrong_class_head_grows_by_palate_support(phantoms):
    m = phantoms[0].mask
    out = wrong_class_palate_to_head(m)
    assert np.array_equal(out.labels == HEAD, (m.labels == HEAD) | (m.labels == PALATE))


def test_delete_class_examples():
    assert counts(delete_class(counts_mask(), GAP)) == {1: 100, 2: 50, 3: 0, 4: 5}
    m = delete_class(counts_mask(), GAP)
    assert delete_class(m, GAP) == m


def test_delete_body_changes_crl(phantoms):
    for p in phantoms:
        assert abs(measure_crl(delete_class(p.mask, BODY)).length_mm - p.true_crl_mm) > 5


def test_delete_class_requires_foreground():
    with pytest.raises(DataError):
        delete_class(counts_mask(), 0)


def test_over_dilate_saturation():
    lab = np.zeros((10, 10), dtype=int)
    lab[5, 5] = HEAD
    lab[0, 0] = GAP
    out = over_dilate(LabelMask(lab), 12)
    assert np.all(out.labels != 0)
    assert set(np.unique(out.labels)) == {HEAD}


def test_over_dilate_priority_head_wins():
    lab = np.zeros((10, 10), dtype=int)
    lab[4, 3] = BODY
    lab[4, 6] = HEAD
    out = over_dilate(LabelMask(lab), 2)
    assert out.labels[4, 4] == HEAD and out.labels[4, 5] == HEAD
    assert out.labels[4, 2] == BODY


def test_over_dilate_grows_and_is_local(phantoms):
    m = phantoms[0].mask
    out = over_dilate(m, 4)
    assert (out.labels > 0).sum() > (m.labels > 0).sum()
    far = np.ones(m.shape, bool)
    rows, cols = np.nonzero(m.labels)
    far[max(rows.min() - 5, 0):rows.max() + 6, max(cols.min() - 5, 0):cols.max() + 6] = False
    assert np.all(out.labels[far] == 0)


def test_over_erode_annihilates_and_never_grows(phantoms):
    assert counts(over_erode(counts_mask(), 6)) == {1: 0, 2: 0, 3: 0, 4: 0}
    m = phantoms[0].mask
    out = over_erode(m, 4)
    assert all(counts(out)[c] <= counts(m)[c] for c in FOREGROUND)
    assert measure_crl(out).length_mm != phantoms[0].true_crl_mm


def test_over_ops_need_two_iterations():
    with pytest.raises(ValueError):
        over_dilate(counts_mask(), 1)
    with pytest.raises(ValueError):
        over_erode(counts_mask(), 1)


def test_flip_symmetric_block_is_fixed_point():
    m = counts_mask()
    assert flip_class(m, BODY) == m


def test_flip_two_row_strip_swaps_rows():
    lab = np.zeros((8, 8), dtype=int)
    lab[3, 1:6] = HEAD
    lab[4, 2:4] = HEAD
    out = flip_class(LabelMask(lab), HEAD).labels
    assert np.array_equal(out[3] == HEAD, lab[4] == HEAD)
    assert np.array_equal(out[4] == HEAD, lab[3] == HEAD)


def test_flip_head_centroid_reflects(phantoms):
    for p in phantoms:
        rows = np.nonzero(p.mask.labels == HEAD)[0]
        out_rows = np.nonzero(flip_class(p.mask, HEAD).labels == HEAD)[0]
        centre = (rows.min() + rows.max()) / 2
        assert abs(out_rows.mean() - (2 * centre - rows.mean())) <= 0.5


def test_flip_absent_class():
    with pytest.raises(DegradationError, match="class not present"):
        flip_class(delete_class(counts_mask(), GAP), GAP)


def test_good_dilate_isolated_block():
    lab = np.zeros((9, 9), dtype=int)
    lab[3:6, 3:6] = HEAD
    lab[2, 2] = BODY
    out = good_dilate(LabelMask(lab), HEAD).labels
    expected = np.zeros((9, 9), bool)
    expected[2:7, 2:7] = True
    expected[2, 2] = False
    assert np.array_equal(out == HEAD, expected)
    assert out[2, 2] == BODY


def test_good_ops_leave_other_classes_untouched(phantoms):
    m = phantoms[1].mask
    for op in (good_dilate, good_erode):
        for c in FOREGROUND:
            try:
                out = op(m, c)
            except DegradationError:
                continue
            for other in FOREGROUND:
                if other != c:
                    assert np.array_equal(out.labels == other, m.labels == other)


def test_good_erode_then_dilate_high_dice(phantoms):
    m = phantoms[2].mask
    out = good_dilate(good_erode(m, BODY), BODY)
    assert dice(out.labels == BODY, m.labels == BODY) >= 0.95


def test_good_erode_too_destructive():
    lab = np.zeros((9, 9), dtype=int)
    lab[3:6, 3:6] = HEAD
    with pytest.raises(DegradationError, match="erosion too destructive"):
        good_erode(LabelMask(lab), HEAD)


def test_severity_range_at_64():
    assert severity_range(LabelMask(np.zeros((64, 64), dtype=int))) == (3, 6)


def test_kind_parse_roundtrip():
    for text in ("Original", "OverDilate(4)", "FlipClass(2)", "WrongClassPalateToHead"):
        assert str(DegradeKind.parse(text)) == text
    with pytest.raises(DataError):
        DegradeKind("DeleteClass", 0)
    with pytest.raises(DataError):
        DegradeKind.parse("Shrink(3)")


def test_sample_quality_must_match_provenance(phantoms):
    p = phantoms[0]
    with pytest.raises(DataError):
        Sample(p.image, p.mask, 1, DegradeKind("DeleteClass", 1), p.id, p.true_crl_mm, p.true_ga_days)


def test_variant_set_defaults(phantoms):
    p = phantoms[0]
    variants = make_variant_set(p, seed=5)
    assert len(variants) == 10
    assert sum(v.quality for v in variants) == 5
    assert variants[0].provenance.name == "Original" and variants[0].mask == p.mask
    assert [v.provenance.name for v in variants[1:5]] == ["GoodDilate", "GoodErode"] * 2
    assert [v.provenance.name for v in variants[5:]] == [
        "OverDilate", "OverErode", "WrongClassPalateToHead", "DeleteClass", "FlipClass"]
    assert variants[-1].provenance == DegradeKind("FlipClass", HEAD)
    assert all(v.image is p.image for v in variants)
    assert len({v.sample_id for v in variants}) == 10


def test_variant_set_good_classes_distinct_per_kind(phantoms):
    for i, p in enumerate(phantoms):
        variants = make_variant_set(p, seed=i)
        for name in ("GoodDilate", "GoodErode"):
            classes = [v.provenance.arg for v in variants if v.provenance.name == name]
            assert len(classes) == len(set(classes))


def test_variant_set_is_deterministic(phantoms):
    a = make_variant_set(phantoms[3], seed=9)
    b = make_variant_set(phantoms[3], seed=9)
    assert a == b
    assert [str(v.provenance) for v in a] == [str(v.provenance) for v in b]


def test_variant_set_random_flip_class(phantoms):
    kinds = {make_variant_set(p, seed=i, flip_random_class=True)[-1].provenance.arg
             for i, p in enumerate(phantoms)}
    assert len(kinds) > 1


def test_variant_set_custom_counts(phantoms):
    variants = make_variant_set(phantoms[0], seed=1, n_good=2, n_poor=7)
    assert len(variants) == 10
    assert sum(v.quality for v in variants) == 3
    with pytest.raises(ValueError):
        make_variant_set(phantoms[0], seed=1, n_good=0)


def test_label_closure_and_dice_on_many_phantoms(phantoms):
    for i, p in enumerate(phantoms):
        for v in make_variant_set(p, seed=100 + i):
            assert set(np.unique(v.mask.labels)) <= {0, 1, 2, 3, 4}
            if v.quality:
                for c in FOREGROUND:
                    assert dice(v.mask.labels == c, p.mask.labels == c) >= 0.8


def test_dice_edge_cases():
    z = np.zeros((3, 3), bool)
    assert dice(z, z) == 1.0
    o = np.ones((3, 3), bool)
    assert dice(o, z) == 0.0
    assert dice(o, o) == 1.0
