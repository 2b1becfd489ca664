import numpy as np
import pytest

from fusqa.cae import CaeDetector, cae_score, difference_ratio, load_cae, train_cae
from fusqa.checkpoints import load_checkpoint
from fusqa.errors import DataError
from fusqa.imgcore import LabelMask

FAST = {"epochs": 3, "learning_rate": 0.05, "width": (4, 8)}


@pytest.fixture(scope="module")
def masks(phantoms):
    return [p.mask for p in phantoms]


@pytest.fixture(scope="module")
def model(masks):
    return train_cae(masks, FAST, seed=2)


def test_ratio_identical_is_zero():
    m = np.zeros((8, 8), dtype=int)
    m[2:5, 2:5] = 1
    assert difference_ratio(m, m) == 0.0


def test_ratio_disjoint_is_one():
    a = np.zeros((8, 8), dtype=int)
    b = np.zeros((8, 8), dtype=int)
    a[0, 0] = 1
    b[7, 7] = 2
    assert difference_ratio(a, b) == 1.0


def test_ratio_empty_union_is_degenerate():
    z = np.zeros((8, 8), dtype=int)
    assert difference_ratio(z, z) == 1.0


def test_ratio_exactly_tau_is_poor(masks):
    # a reconstruction that disagrees on exactly 1 of 10 union pixels
    mask = np.zeros((8, 8), dtype=int)
    mask[0, :8] = 2
    mask[1, :2] = 2
    recon = mask.copy()
    recon[0, 0] = 1
    assert difference_ratio(recon, mask) == 0.1
    assert not difference_ratio(recon, mask) < 0.10


def test_reconstruction_shape_and_labels(model, masks):
    recon = model.reconstruct(np.stack([m.labels for m in masks]))
    assert recon.shape == (len(masks), 64, 64)
    assert set(np.unique(recon)) <= {0, 1, 2, 3, 4}


def test_score_and_verdict(model, masks):
    ratio, verdict = cae_score(model, masks[0])
    assert 0.0 <= ratio <= 1.0
    assert verdict == ("good" if ratio < model.tau else "poor")
    assert cae_score(model, masks[0], tau=1.01)[1] == "good"
    assert cae_score(model, masks[0], tau=0.0)[1] == "poor"


def test_predict_accepts_pairs(model, phantoms):
    M = np.stack([p.mask.labels for p in phantoms])
    X = np.stack([np.stack([p.image.data, p.mask.labels.astype(float)]) for p in phantoms])
    assert np.array_equal(model.predict(M), model.predict(X))
    assert np.array_equal(model.predict(M), (model.score_samples(M) < model.tau).astype(int))


def test_training_is_deterministic(model, masks):
    again = train_cae(masks, FAST, seed=2)
    for k in model.params_:
        assert np.array_equal(model.params_[k], again.params_[k])


def test_training_reduces_loss(model):
    losses = [h["train_loss"] for h in model.history_]
    assert losses[-1] < losses[0]


def test_empty_input():
    with pytest.raises(DataError):
        train_cae([])
    with pytest.raises(DataError):
        CaeDetector().fit(np.zeros((0, 64, 64), dtype=int))


def test_size_mismatch(model):
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 32, 32), dtype=int))


def test_checkpoint_roundtrip(tmp_path, model, masks):
    path = tmp_path / "cae.fqm"
    model.save(path)
    M = np.stack([m.labels for m in masks])
    for loaded in (load_cae(path), load_checkpoint(path)):
        assert isinstance(loaded, CaeDetector)
        assert np.array_equal(loaded.score_samples(M), model.score_samples(M))
        assert loaded.tau == model.tau
