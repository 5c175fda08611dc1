"""Dataset loading, synthesis, and deterministic splitting.

Datasets are immutable pairs of a feature matrix (rows in [0,1]) and a
one-hot label matrix. Sources: big-endian IDX image/label files (pixels
scaled by 1/255), a synthetic Gaussian-blob generator for controllable
class overlap, and a headerless comma-delimited dump that round-trips
bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError
from .numerics import RngStream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """N feature rows in [0,1] with matching one-hot labels."""

    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labs = np.ascontiguousarray(np.asarray(self.labels, dtype=np.float64))
        if feats.ndim != 2 or labs.ndim != 2:
            raise DomainError(
                f"features and labels must be 2-D, got {feats.shape} and {labs.shape}")
        if feats.shape[0] != labs.shape[0]:
            raise DomainError(
                f"{feats.shape[0]} feature rows but {labs.shape[0]} label rows")
        if feats.size and (not np.all(np.isfinite(feats))
                           or feats.min() < 0.0 or feats.max() > 1.0):
            raise DomainError("features must lie in [0, 1]")
        if labs.size:
            one_hot = np.all((labs == 0.0) | (labs == 1.0)) and np.all(labs.sum(axis=1) == 1.0)
            if not one_hot:
                raise DomainError("labels must be one-hot rows")
        feats.flags.writeable = False
        labs.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def class_count(self) -> int:
        return self.labels.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class SplitSpec:
    """Sizes of the three disjoint parts plus the shuffle seed."""

    n_train: int
    n_val: int
    n_test: int
    seed: int

    def __post_init__(self):
        for label, n in (("n_train", self.n_train), ("n_val", self.n_val),
                         ("n_test", self.n_test)):
            if n < 0:
                raise DomainError(f"{label} must be >= 0, got {n}")


def one_hot(indices, class_count: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= class_count):
        raise DomainError(
            f"label index out of range for {class_count} classes: "
            f"[{idx.min()}, {idx.max()}]")
    out = np.zeros((idx.size, class_count), dtype=np.float64)
    out[np.arange(idx.size), idx] = 1.0
    return out


def _read_exact(data: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(data):
        raise ParseError(f"truncated file: needed {count} bytes for {what}", offset=len(data))
    return data[offset:offset + count]


def load_idx(image_path, label_path, class_count: int | None = None) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Big-endian throughout: images carry magic 0x00000803 then count, rows,
    cols and raw pixel bytes (scaled by 1/255 here); labels carry magic
    0x00000801 then count and one byte per label. ``class_count`` defaults
    to max label + 1.
    """
    with open(image_path, "rb") as f:
        img_data = f.read()
    with open(label_path, "rb") as f:
        lab_data = f.read()

    magic = struct.unpack(">I", _read_exact(img_data, 0, 4, "image magic"))[0]
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(
            f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", offset=0)
    n_img, rows, cols = struct.unpack(">III", _read_exact(img_data, 4, 12, "image header"))
    pixels = _read_exact(img_data, 16, n_img * rows * cols, f"{n_img} images of {rows}x{cols}")

    magic = struct.unpack(">I", _read_exact(lab_data, 0, 4, "label magic"))[0]
    if magic != IDX_LABEL_MAGIC:
        raise ParseError(
            f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}", offset=0)
    n_lab = struct.unpack(">I", _read_exact(lab_data, 4, 4, "label header"))[0]
    raw_labels = _read_exact(lab_data, 8, n_lab, f"{n_lab} labels")

    if n_img != n_lab:
        raise ParseError(f"{n_img} images but {n_lab} labels")

    feats = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64).reshape(
        n_img, rows * cols) / 255.0
    idx = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    if class_count is None:
        class_count = int(idx.max()) + 1 if idx.size else 1
    return Dataset(feats, one_hot(idx, class_count), name=str(image_path))


def select_classes(ds: Dataset, classes) -> Dataset:
    """Keep only the listed classes, relabelled 0..len(classes)-1 in list order."""
    classes = list(classes)
    if len(set(classes)) != len(classes) or not classes:
        raise DomainError(f"class list must be nonempty and unique, got {classes}")
    old_idx = np.argmax(ds.labels, axis=1)
    keep = np.isin(old_idx, classes)
    remap = {c: i for i, c in enumerate(classes)}
    new_idx = np.array([remap[c] for c in old_idx[keep]], dtype=np.int64)
    return Dataset(ds.features[keep], one_hot(new_idx, len(classes)),
                   name=f"{ds.name}[classes={classes}]")


def synth_blobs(n_per_class: int, class_count: int, spread: float, seed: int) -> Dataset:
    """2-D Gaussian clusters centered on the unit circle, one per class.

    Class c sits at angle 2*pi*c/C; points are the center plus isotropic
    noise with standard deviation ``spread``. Features are squeezed into
    [0,1] by a fixed affine map covering +-(1 + 6*spread) around the
    origin, clipping the ~1e-9 tail that falls outside.
    """
    if class_count < 2:
        raise DomainError(f"need at least 2 classes, got {class_count}")
    if not (spread > 0):
        raise DomainError(f"spread must be positive, got {spread}")
    if n_per_class < 1:
        raise DomainError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = RngStream(seed, 0)
    half_width = 1.0 + 6.0 * spread
    feats = []
    idx = []
    for c in range(class_count):
        angle = 2.0 * np.pi * c / class_count
        center = np.array([np.cos(angle), np.sin(angle)])
        noise = rng.child("blob", c).normal((n_per_class, 2)) * spread
        feats.append(center + noise)
        idx.extend([c] * n_per_class)
    raw = np.vstack(feats)
    scaled = np.clip((raw + half_width) / (2.0 * half_width), 0.0, 1.0)
    return Dataset(scaled, one_hot(idx, class_count),
                   name=f"blobs(C={class_count},n={n_per_class},spread={spread})")


def split(ds: Dataset, spec: SplitSpec):
    """Seeded shuffle then contiguous cut into (train, val, test)."""
    total = spec.n_train + spec.n_val + spec.n_test
    if total > len(ds):
        raise DomainError(
            f"split sizes {spec.n_train}+{spec.n_val}+{spec.n_test} exceed {len(ds)} rows")
    perm = RngStream(spec.seed, 0).child("split").permutation(len(ds))
    parts = []
    start = 0
    for part, n in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        sel = perm[start:start + n]
        parts.append(Dataset(ds.features[sel], ds.labels[sel], name=f"{ds.name}/{part}"))
        start += n
    return tuple(parts)


def truncate(ds: Dataset, fraction: float) -> Dataset:
    """Keep the first round(fraction*N) rows (at least 1); the data-reduction knob."""
    if not (0.0 < fraction <= 1.0):
        raise DomainError(f"fraction must be in (0, 1], got {fraction}")
    n = max(1, int(round(fraction * len(ds))))
    return Dataset(ds.features[:n], ds.labels[:n], name=f"{ds.name}[{fraction:g}]")


def write_delimited(path, ds: Dataset):
    """Headerless CSV: C one-hot label columns then D feature columns, LF endings.

    Floats are written with repr so reading the file back reproduces the
    dataset bit-exactly.
    """
    with open(path, "w", newline="\n") as f:
        for lab, feat in zip(ds.labels, ds.features):
            f.write(",".join(repr(float(v)) for v in np.concatenate([lab, feat])) + "\n")


def read_delimited(path, class_count: int) -> Dataset:
    """Inverse of write_delimited; needs the label width to cut the columns."""
    if class_count < 1:
        raise DomainError(f"class_count must be >= 1, got {class_count}")
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) <= class_count:
                raise ParseError(
                    f"line {lineno} has {len(parts)} columns, "
                    f"needs more than {class_count}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise ParseError(f"line {lineno} holds a non-numeric field")
    if not rows:
        raise ParseError(f"{path} holds no data rows")
    arr = np.array(rows, dtype=np.float64)
    return Dataset(arr[:, class_count:], arr[:, :class_count], name=str(path))
