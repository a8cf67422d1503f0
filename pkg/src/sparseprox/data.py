"""Dataset loading (IDX, CSV), one-hot encoding, splits and a seeded
synthetic generator."""
import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Features (N, p) or (N, H, W, C), integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.shape[0] == 0:
            raise ValueError("dataset is empty")
        if labels.shape != (feats.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match {feats.shape[0]} samples")
        if np.any(labels < 0) or np.any(labels >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.features.shape[0]

    def subset(self, index, split=None):
        return Dataset(self.features[index], self.labels[index], self.num_classes, split or self.split)

    def reshape(self, sample_shape):
        """Same samples with features reshaped to ``(N, *sample_shape)``."""
        feats = self.features.reshape((len(self),) + tuple(sample_shape))
        return Dataset(feats, self.labels, self.num_classes, self.split)


def _read_idx(path, expected_magic, ndim):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic number, expected 0x{expected_magic:08x}, found 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} < {header} bytes)")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    need = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) < need:
        raise DataFormatError(f"{path}: truncated payload, expected {need} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=need).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None, split="train"):
    """Read an IDX image/label pair; pixels are scaled to [0, 1] by /255.

    Images come back as (N, H, W, 1).
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    feats = images.astype(np.float64)[..., None] / 255.0
    k = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    return Dataset(feats, labels.astype(np.int64), k, split)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 (N, H, W) images and (N,) labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def load_csv(path, num_classes=None, split="train"):
    """Label-first numeric CSV without header or quoting."""
    labels, rows = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DataFormatError(f"{path}:{lineno}: need a label and at least one feature")
            elif len(row) != width:
                raise DataFormatError(f"{path}:{lineno}: ragged row, expected {width} cells, found {len(row)}")
            try:
                lab = int(row[0])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: label {row[0]!r} is not an integer") from None
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                bad = next(c for c in row[1:] if not _is_float(c))
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
            if lab < 0:
                raise DataFormatError(f"{path}:{lineno}: negative label {lab}")
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError(f"{path}:{lineno}: non-finite feature")
            labels.append(lab)
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    k = max(labels) + 1 if num_classes is None else int(num_classes)
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels), k, split)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_csv(path, dataset):
    """Write label-first rows; features flattened, 9 significant digits."""
    flat = dataset.features.reshape(len(dataset), -1)
    with open(path, "w", newline="\n") as fh:
        for lab, row in zip(dataset.labels, flat):
            fh.write(str(int(lab)) + "," + ",".join(f"{v:.9g}" for v in row) + "\n")


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def train_test_split(dataset, test_fraction=0.2, seed=0):
    """Seeded shuffle, then the first ``round(N * (1 - test_fraction))``
    samples train and the rest test."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * (1.0 - test_fraction)))
    if n_train in (0, n):
        raise ValueError(f"split of {n} samples leaves an empty side")
    return dataset.subset(perm[:n_train], "train"), dataset.subset(perm[n_train:], "test")


def synthetic_classification(n, informative, noise, num_classes, seed=0, separation=3.0):
    """Balanced Gaussian clusters.

    Informative column ``j`` carries mean ``separation`` for class
    ``j % num_classes`` and 0 otherwise, plus unit Gaussian noise; the
    ``noise`` trailing columns are pure standard normals. Labels are
    ``arange(n) % num_classes`` in a seeded random order.
    """
    if n < 1 or informative < 0 or noise < 0 or informative + noise < 1 or num_classes < 1:
        raise ValueError("invalid synthetic dataset dimensions")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    centers = np.zeros((num_classes, informative))
    for j in range(informative):
        centers[j % num_classes, j] = separation
    x_inf = centers[labels] + rng.standard_normal((n, informative))
    x_noise = rng.standard_normal((n, noise))
    return Dataset(np.hstack([x_inf, x_noise]), labels, num_classes)
