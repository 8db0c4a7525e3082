"""Dataset loading (IDX files), synthetic blob generation, and forget/retain splits."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .nn import Tensor2D, tensor2d

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    """Feature matrix (N, d) with integer class labels of length N.

    Image-derived features are scaled into [0, 1]; image_like marks data
    whose adversarial perturbations should be clipped back into that range.
    """

    features: Tensor2D
    labels: np.ndarray
    name: str
    num_classes: int
    image_like: bool = False

    def __post_init__(self):
        self.features = tensor2d(self.features)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError(
                f"labels length {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError(
                f"labels outside [0, {self.num_classes}): "
                f"min={self.labels.min()}, max={self.labels.max()}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            name=name if name is not None else self.name,
            num_classes=self.num_classes,
            image_like=self.image_like,
        )


@dataclass
class ForgetSplit:
    """Disjoint partition of a dataset into forget and retain halves."""

    forget: LabeledDataset
    retain: LabeledDataset
    forget_classes: frozenset[int] = field(default_factory=frozenset)


def _read_be_u32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise ValueError(
            f"{path}: truncated header, expected 4 bytes at offset {offset}"
        )
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Load an IDX image/label file pair (big endian, pixel bytes / 255)."""
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lbl_buf = f.read()

    magic = _read_be_u32(img_buf, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    n_images = _read_be_u32(img_buf, 4, images_path)
    rows = _read_be_u32(img_buf, 8, images_path)
    cols = _read_be_u32(img_buf, 12, images_path)
    if rows == 0 or cols == 0:
        raise ValueError(f"{images_path}: zero image dimensions at offset 8")
    expected = 16 + n_images * rows * cols
    if len(img_buf) != expected:
        raise ValueError(
            f"{images_path}: payload length {len(img_buf) - 16} at offset 16 "
            f"does not match header count {n_images}x{rows}x{cols}"
        )

    magic = _read_be_u32(lbl_buf, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise ValueError(
            f"{labels_path}: bad magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    n_labels = _read_be_u32(lbl_buf, 4, labels_path)
    if len(lbl_buf) != 8 + n_labels:
        raise ValueError(
            f"{labels_path}: payload length {len(lbl_buf) - 8} at offset 8 "
            f"does not match header count {n_labels}"
        )
    if n_labels != n_images:
        raise ValueError(
            f"count mismatch: {n_images} images vs {n_labels} labels"
        )

    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=16)
    features = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_buf, dtype=np.uint8, offset=8).astype(np.int64)
    num_classes = int(labels.max()) + 1 if labels.size else 1
    return LabeledDataset(
        features=features,
        labels=labels,
        name=images_path,
        num_classes=num_classes,
        image_like=True,
    )


def _blob_means(num_classes: int, dim: int, spread: float, seed: int,
                min_separation: float) -> np.ndarray:
    """Seeded random cluster means rescaled to min_separation * spread apart."""
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    if num_classes > 1:
        diffs = means[:, None, :] - means[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(axis=2))
        d_min = dists[np.triu_indices(num_classes, k=1)].min()
        means = means * (min_separation * spread / d_min)
    return means


def _blob_draw(means: np.ndarray, per_class: int, spread: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    num_classes, dim = means.shape
    features = np.empty((num_classes * per_class, dim))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for k in range(num_classes):
        block = slice(k * per_class, (k + 1) * per_class)
        features[block] = means[k] + spread * rng.normal(size=(per_class, dim))
        labels[block] = k
    return features, labels


def _check_blob_params(num_classes, per_class, dim, spread, min_separation):
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("num_classes, per_class and dim must all be >= 1")
    if spread <= 0:
        raise ValueError(f"spread must be > 0, got {spread}")
    if min_separation < 4.0:
        raise ValueError(f"min_separation must be >= 4, got {min_separation}")


def synth_blobs(num_classes: int, per_class: int, dim: int, spread: float,
                seed: int, min_separation: float = 5.0) -> LabeledDataset:
    """Gaussian class clusters with well-separated seeded means.

    Means are a random arrangement rescaled so the closest pair sits
    min_separation * spread apart (at least 4 * spread).
    """
    _check_blob_params(num_classes, per_class, dim, spread, min_separation)
    means = _blob_means(num_classes, dim, spread, seed, min_separation)
    rng = np.random.default_rng(seed)
    rng.normal(size=(num_classes, dim))  # advance past the means draw
    features, labels = _blob_draw(means, per_class, spread, rng)
    return LabeledDataset(
        features=features,
        labels=labels,
        name=f"blobs-c{num_classes}-n{per_class}-d{dim}-seed{seed}",
        num_classes=num_classes,
    )


def synth_blobs_train_test(num_classes: int, per_class: int, test_per_class: int,
                           dim: int, spread: float, seed: int,
                           min_separation: float = 5.0
                           ) -> tuple[LabeledDataset, LabeledDataset]:
    """Train and test draws around one shared cluster layout (seed, seed + 1)."""
    _check_blob_params(num_classes, per_class, dim, spread, min_separation)
    if test_per_class < 1:
        raise ValueError("test_per_class must be >= 1")
    train = synth_blobs(num_classes, per_class, dim, spread, seed, min_separation)
    means = _blob_means(num_classes, dim, spread, seed, min_separation)
    features, labels = _blob_draw(means, test_per_class, spread,
                                  np.random.default_rng(seed + 1))
    test = LabeledDataset(
        features=features,
        labels=labels,
        name=f"blobs-c{num_classes}-n{test_per_class}-d{dim}-seed{seed + 1}-test",
        num_classes=num_classes,
    )
    return train, test


def split_forget_retain(dataset: LabeledDataset,
                        forget_classes: set[int] | frozenset[int] | list[int]
                        ) -> ForgetSplit:
    """Partition by label membership, preserving sample order on both sides."""
    forget_classes = frozenset(int(c) for c in forget_classes)
    if not forget_classes:
        raise ValueError("forget_classes must be non-empty")
    bad = [c for c in forget_classes if c < 0 or c >= dataset.num_classes]
    if bad:
        raise ValueError(
            f"unknown class indices {sorted(bad)} for a "
            f"{dataset.num_classes}-class dataset"
        )
    mask = np.isin(dataset.labels, sorted(forget_classes))
    forget = dataset.subset(np.flatnonzero(mask), name=dataset.name + "-forget")
    retain = dataset.subset(np.flatnonzero(~mask), name=dataset.name + "-retain")
    return ForgetSplit(forget=forget, retain=retain, forget_classes=forget_classes)


def subsample(dataset: LabeledDataset, ratio: float, seed: int) -> LabeledDataset:
    """Seeded uniform sample without replacement of round(ratio * N) samples."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n = len(dataset)
    size = max(1, round(ratio * n))
    if size == n:
        return dataset
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(n, size=size, replace=False))
    return dataset.subset(indices, name=f"{dataset.name}-x{ratio}")
