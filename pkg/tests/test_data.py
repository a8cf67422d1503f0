import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseprox import nn, trainer
from sparseprox.data import (
    Dataset,
    load_csv,
    load_idx,
    one_hot,
    synthetic_classification,
    train_test_split,
    write_csv,
    write_idx,
)
from sparseprox.errors import DataFormatError


def write_bytes(path, payload):
    path.write_bytes(payload)
    return path


def idx_pair(tmp_path, pixels=(0, 255, 51, 102, 1, 2, 3, 4), labels=(7, 0)):
    img = write_bytes(tmp_path / "img.idx", struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(pixels))
    lab = write_bytes(tmp_path / "lab.idx", struct.pack(">II", 0x801, len(labels)) + bytes(labels))
    return img, lab


# --------------------------------------------------------------------------
# IDX
# --------------------------------------------------------------------------


def test_idx_hand_built(tmp_path):
    ds = load_idx(*idx_pair(tmp_path))
    assert ds.features.shape == (2, 2, 2, 1)
    np.testing.assert_allclose(ds.features[0, :, :, 0], [[0.0, 1.0], [0.2, 0.4]], atol=1e-15)
    np.testing.assert_allclose(ds.features[1, :, :, 0], np.array([[1, 2], [3, 4]]) / 255.0)
    assert list(ds.labels) == [7, 0]
    assert ds.num_classes == 8


def test_idx_bad_magic_names_values(tmp_path):
    img, _ = idx_pair(tmp_path)
    lab = write_bytes(tmp_path / "bad.idx", struct.pack(">II", 0x803, 2) + bytes([1, 2]))
    with pytest.raises(DataFormatError, match="0x00000801.*0x00000803"):
        load_idx(img, lab)


def test_idx_truncated(tmp_path):
    _, lab = idx_pair(tmp_path)
    img = write_bytes(tmp_path / "short.idx", struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(7))
    with pytest.raises(DataFormatError, match="truncated"):
        load_idx(img, lab)
    img = write_bytes(tmp_path / "hdr.idx", struct.pack(">II", 0x803, 2))
    with pytest.raises(DataFormatError, match="truncated"):
        load_idx(img, lab)


def test_idx_count_mismatch(tmp_path):
    img, _ = idx_pair(tmp_path)
    lab = write_bytes(tmp_path / "lab3.idx", struct.pack(">II", 0x801, 3) + bytes([1, 2, 3]))
    with pytest.raises(DataFormatError, match="count mismatch"):
        load_idx(img, lab)


def test_idx_round_trip_and_files_untouched(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(5, 3, 4), dtype=np.uint8)
    labels = np.array([0, 1, 2, 1, 0], dtype=np.uint8)
    write_idx(tmp_path / "i", tmp_path / "l", images, labels)
    before = (tmp_path / "i").read_bytes()
    a = load_idx(tmp_path / "i", tmp_path / "l")
    b = load_idx(tmp_path / "i", tmp_path / "l")
    assert (tmp_path / "i").read_bytes() == before
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.features[..., 0] * 255, images)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def test_csv_example(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0.5,0.5\n0,0.1,0.9")
    ds = load_csv(path)
    assert ds.features.shape == (2, 2)
    assert ds.num_classes == 2
    assert list(ds.labels) == [1, 0]


@pytest.mark.parametrize(
    "text,pattern",
    [
        ("", "empty"),
        ("label,x1,x2\n1,0.5,0.5\n", ":1:"),
        ("1,0.5,0.5\n0,0.1\n", ":2: ragged"),
        ("1,0.5,0.5\n0,abc,0.2\n", ":2: non-numeric cell 'abc'"),
        ("1,0.5\n-1,0.5\n", ":2: negative"),
        ("1\n", ":1:"),
        ("1,nan\n", ":1: non-finite"),
    ],
)
def test_csv_errors_carry_line_numbers(tmp_path, text, pattern):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataFormatError, match=pattern):
        load_csv(path)


def test_csv_round_trip_nine_digits(tmp_path):
    ds = synthetic_classification(50, 4, 3, 3, seed=2)
    path = tmp_path / "s.csv"
    write_csv(path, ds)
    back = load_csv(path, ds.num_classes)
    np.testing.assert_array_equal(back.labels, ds.labels)
    expected = np.array([[float(f"{v:.9g}") for v in row] for row in ds.features])
    np.testing.assert_array_equal(back.features, expected)
    np.testing.assert_allclose(back.features, ds.features, rtol=5e-9)


# --------------------------------------------------------------------------
# one-hot, dataset, split, synthetic
# --------------------------------------------------------------------------


def test_one_hot_examples():
    np.testing.assert_array_equal(one_hot([2], 4), [[0, 0, 1, 0]])
    np.testing.assert_array_equal(one_hot([0, 0, 0], 1), [[1], [1], [1]])
    with pytest.raises(ValueError):
        one_hot([4], 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=50))
def test_one_hot_rows(labels):
    m = one_hot(labels, 10)
    np.testing.assert_array_equal(m.sum(axis=1), 1.0)
    np.testing.assert_array_equal(m.argmax(axis=1), labels)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), [0, 3], 3)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3)), [], 3)
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf]]), [0], 1)
    ds = Dataset(np.zeros((2, 3)), [0, 1], 2)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_split_is_pure_and_partitions():
    ds = synthetic_classification(101, 3, 1, 2, seed=0)
    tr1, te1 = train_test_split(ds, 0.2, seed=4)
    tr2, te2 = train_test_split(ds, 0.2, seed=4)
    np.testing.assert_array_equal(tr1.features, tr2.features)
    np.testing.assert_array_equal(te1.labels, te2.labels)
    assert len(tr1) == 81 and len(te1) == 20
    assert tr1.split == "train" and te1.split == "test"
    rows = {tuple(r) for r in np.vstack([tr1.features, te1.features])}
    assert rows == {tuple(r) for r in ds.features}
    tr3, _ = train_test_split(ds, 0.2, seed=5)
    assert not np.array_equal(tr1.features, tr3.features)


def test_synthetic_deterministic_and_balanced():
    a = synthetic_classification(103, 4, 6, 4, seed=9)
    b = synthetic_classification(103, 4, 6, 4, seed=9)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    counts = np.bincount(a.labels, minlength=4)
    assert counts.max() - counts.min() <= 1
    assert a.features.shape == (103, 10)


def test_synthetic_separable_reaches_high_accuracy():
    ds = synthetic_classification(300, 4, 0, 4, seed=0, separation=6.0)
    train, test = train_test_split(ds, 0.2, seed=0)
    model = nn.build_network((4,), [{"kind": "dense", "units": 4}], seed=0)
    cfg = trainer.TrainConfig(lam=0.0, regularizer_mode="none", batch_size=16, max_iterations=1500, loss_delta_tol=0)
    _, trace = trainer.train(model, train, cfg, test)
    assert trace.rows[-1].accuracy >= 0.99
