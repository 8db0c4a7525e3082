"""Dataset layer tests: IDX parsing, blob generation, splits, subsampling."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulab.data import (
    LabeledDataset,
    load_idx,
    split_forget_retain,
    subsample,
    synth_blobs,
    synth_blobs_train_test,
)


def write_idx_pair(tmp_path, pixels, labels):
    """Minimal valid IDX image/label pair; pixels is (n, rows, cols) uint8."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    images_path = tmp_path / "images-idx3-ubyte"
    labels_path = tmp_path / "labels-idx1-ubyte"
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    return str(images_path), str(labels_path)


def test_load_idx_scales_pixels_to_unit_range(tmp_path):
    pixels = np.array([[[0, 255], [128, 51]]], dtype=np.uint8)
    images, labels = write_idx_pair(tmp_path, pixels, [3])
    ds = load_idx(images, labels)
    np.testing.assert_allclose(
        ds.features, [[0.0, 1.0, 128 / 255.0, 51 / 255.0]], rtol=1e-15)
    assert ds.labels.tolist() == [3]
    assert ds.num_classes == 4
    assert ds.image_like


def test_load_idx_shapes_and_order(tmp_path):
    pixels = np.arange(2 * 3 * 2, dtype=np.uint8).reshape(2, 3, 2)
    images, labels = write_idx_pair(tmp_path, pixels, [1, 0])
    ds = load_idx(images, labels)
    assert ds.features.shape == (2, 6)
    # row-major flattening preserves pixel order
    np.testing.assert_allclose(ds.features[0] * 255.0, np.arange(6), atol=1e-12)
    assert ds.labels.tolist() == [1, 0]


def test_load_idx_rejects_count_mismatch_between_files(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    images, _ = write_idx_pair(tmp_path, pixels, [0, 1])
    # a self-consistent labels file whose count disagrees with the images
    other = tmp_path / "other-labels"
    with open(other, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, 3))
        f.write(bytes([0, 1, 2]))
    with pytest.raises(ValueError, match="mismatch"):
        load_idx(images, str(other))


def test_load_idx_rejects_truncated_payload(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    images, labels = write_idx_pair(tmp_path, pixels, [0, 1])
    data = open(images, "rb").read()
    clipped = tmp_path / "clipped"
    clipped.write_bytes(data[:-1])
    with pytest.raises(ValueError, match="offset 16"):
        load_idx(str(clipped), labels)


def test_load_idx_rejects_empty_file(tmp_path):
    empty = tmp_path / "empty"
    empty.write_bytes(b"")
    pixels = np.zeros((1, 2, 2), dtype=np.uint8)
    _, labels = write_idx_pair(tmp_path, pixels, [0])
    with pytest.raises(ValueError, match="offset 0"):
        load_idx(str(empty), labels)


def test_load_idx_rejects_every_single_byte_header_corruption(tmp_path):
    """Any one-byte change to either file's 8-byte header must be rejected."""
    pixels = np.arange(8, dtype=np.uint8).reshape(2, 2, 2)
    images, labels = write_idx_pair(tmp_path, pixels, [0, 1])
    img_bytes = open(images, "rb").read()
    lbl_bytes = open(labels, "rb").read()
    for which, original in (("images", img_bytes), ("labels", lbl_bytes)):
        for pos in range(8):
            for flip in (original[pos] ^ 0xFF, (original[pos] + 1) & 0xFF):
                corrupt = bytearray(original)
                corrupt[pos] = flip
                target = tmp_path / f"bad-{which}-{pos}-{flip}"
                target.write_bytes(bytes(corrupt))
                with pytest.raises(ValueError):
                    if which == "images":
                        load_idx(str(target), labels)
                    else:
                        load_idx(images, str(target))


def test_labeled_dataset_validates_labels():
    with pytest.raises(ValueError, match="length"):
        LabeledDataset(np.zeros((3, 2)), np.array([0, 1]), "x", num_classes=2)
    with pytest.raises(ValueError, match=r"\[0, 2\)"):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 5]), "x", num_classes=2)


def test_synth_blobs_shapes_and_label_blocks():
    ds = synth_blobs(3, 10, 4, 0.5, seed=0)
    assert ds.features.shape == (30, 4)
    assert ds.labels.tolist() == [0] * 10 + [1] * 10 + [2] * 10
    assert ds.num_classes == 3
    assert not ds.image_like


def test_synth_blobs_deterministic_per_seed():
    a = synth_blobs(4, 25, 6, 1.0, seed=11)
    b = synth_blobs(4, 25, 6, 1.0, seed=11)
    np.testing.assert_array_equal(a.features, b.features)
    c = synth_blobs(4, 25, 6, 1.0, seed=12)
    assert not np.array_equal(a.features, c.features)


def test_synth_blobs_cluster_separation_invariant():
    """Class centroids sit at least 4 * spread apart (construction: 5x)."""
    spread = 0.5
    ds = synth_blobs(5, 200, 8, spread, seed=3)
    centroids = np.stack([ds.features[ds.labels == k].mean(axis=0)
                          for k in range(5)])
    dists = np.sqrt(((centroids[:, None] - centroids[None]) ** 2).sum(-1))
    off_diag = dists[np.triu_indices(5, k=1)]
    assert off_diag.min() >= 4.0 * spread


@given(num_classes=st.integers(2, 6), dim=st.integers(2, 12),
       spread=st.floats(0.05, 2.0), seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_synth_blobs_separation_property(num_classes, dim, spread, seed):
    ds = synth_blobs(num_classes, 60, dim, spread, seed)
    centroids = np.stack([ds.features[ds.labels == k].mean(axis=0)
                          for k in range(num_classes)])
    dists = np.sqrt(((centroids[:, None] - centroids[None]) ** 2).sum(-1))
    off_diag = dists[np.triu_indices(num_classes, k=1)]
    # construction puts means 5 * spread apart; centroid noise is
    # spread / sqrt(60) per axis, far below the 1 * spread slack
    assert off_diag.min() >= 4.0 * spread


def test_synth_blobs_validates_parameters():
    with pytest.raises(ValueError):
        synth_blobs(0, 5, 2, 1.0, 0)
    with pytest.raises(ValueError):
        synth_blobs(2, 5, 2, 0.0, 0)
    with pytest.raises(ValueError):
        synth_blobs(2, 5, 2, 1.0, 0, min_separation=3.0)


def test_synth_blobs_train_test_share_layout():
    train, test = synth_blobs_train_test(4, 400, 200, 6, 0.2, seed=9)
    assert len(train) == 1600 and len(test) == 800
    for k in range(4):
        tc = train.features[train.labels == k].mean(axis=0)
        sc = test.features[test.labels == k].mean(axis=0)
        assert np.linalg.norm(tc - sc) < 0.1  # same mean, independent noise
    assert not np.array_equal(train.features[:10], test.features[:10])


def test_split_forget_retain_partitions_and_preserves_order():
    ds = synth_blobs(3, 5, 2, 1.0, seed=0)
    split = split_forget_retain(ds, [1])
    assert len(split.forget) + len(split.retain) == len(ds)
    assert set(split.forget.labels.tolist()) == {1}
    assert 1 not in split.retain.labels.tolist()
    np.testing.assert_array_equal(split.forget.features,
                                  ds.features[ds.labels == 1])
    np.testing.assert_array_equal(split.retain.features,
                                  ds.features[ds.labels != 1])
    assert split.forget_classes == frozenset({1})


def test_split_forget_retain_multiple_classes():
    ds = synth_blobs(4, 5, 2, 1.0, seed=0)
    split = split_forget_retain(ds, [0, 3])
    assert set(split.forget.labels.tolist()) == {0, 3}
    assert set(split.retain.labels.tolist()) == {1, 2}


def test_split_forget_retain_validates_classes():
    ds = synth_blobs(3, 5, 2, 1.0, seed=0)
    with pytest.raises(ValueError, match="non-empty"):
        split_forget_retain(ds, [])
    with pytest.raises(ValueError, match=r"\[7\]"):
        split_forget_retain(ds, [7])


def test_subsample_size_rounds_and_floors_at_one():
    ds = synth_blobs(2, 50, 2, 1.0, seed=0)  # 100 samples
    assert len(subsample(ds, 0.5, seed=1)) == 50
    assert len(subsample(ds, 0.1, seed=1)) == 10
    assert len(subsample(ds, 0.004, seed=1)) == 1  # round gives 0, floor is 1
    assert subsample(ds, 1.0, seed=1) is ds


def test_subsample_preserves_original_order_without_replacement():
    features = np.arange(40, dtype=np.float64).reshape(20, 2)
    ds = LabeledDataset(features, np.zeros(20, dtype=np.int64), "seq",
                        num_classes=1)
    sub = subsample(ds, 0.4, seed=5)
    first_col = sub.features[:, 0]
    assert (np.diff(first_col) > 0).all()  # strictly increasing -> ordered, unique
    assert len(sub) == 8


def test_subsample_deterministic_and_ratio_validated():
    ds = synth_blobs(2, 30, 2, 1.0, seed=0)
    a = subsample(ds, 0.5, seed=3)
    b = subsample(ds, 0.5, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
    with pytest.raises(ValueError):
        subsample(ds, 0.0, seed=0)
    with pytest.raises(ValueError):
        subsample(ds, 1.5, seed=0)
