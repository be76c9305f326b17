"""
Dataset ingestion: IDX files and seeded synthetic Gaussian blobs.

All randomness comes from `numpy.random.Generator(PCG64(seed))`.
"""
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.core.exceptions import DatasetFormatError

logger = logging.getLogger(__name__)

# IDX magic: two zero bytes, a type code, and the number of dimensions
IDX_UBYTE = 0x08


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray      # (N, *sample_shape), float32
    labels: np.ndarray      # (N,), int64
    num_classes: int

    def __post_init__(self):
        if len(self.labels) != len(self.inputs):
            raise DatasetFormatError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )
        if self.num_classes < 1:
            raise DatasetFormatError("num_classes must be positive")
        if len(self.labels) and int(self.labels.max()) >= self.num_classes:
            raise DatasetFormatError(
                f"label {int(self.labels.max())} out of range for {self.num_classes} classes"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> 'Dataset':
        indices = np.asarray(indices)
        return Dataset(self.inputs[indices], self.labels[indices], self.num_classes)


def rng_for(seed: int) -> np.random.Generator:
    """The repository's PRNG: PCG64 seeded explicitly."""
    return np.random.Generator(np.random.PCG64(seed))


def _open_binary(path: Path):
    return gzip.open(path, 'rb') if path.suffix == '.gz' else open(path, 'rb')


def read_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file into a uint8 array of its declared dims."""
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"IDX file not found: {path}")
    with _open_binary(path) as handle:
        header = handle.read(4)
        if len(header) != 4 or header[0] != 0 or header[1] != 0:
            raise DatasetFormatError(f"bad IDX magic in {path}")
        if header[2] != IDX_UBYTE:
            raise DatasetFormatError(f"unsupported IDX element type 0x{header[2]:02x} in {path}")
        ndim = header[3]
        if ndim == 0:
            raise DatasetFormatError(f"IDX file {path} declares zero dimensions")
        dims = struct.unpack('>' + 'I' * ndim, handle.read(4 * ndim))
        payload = handle.read()

    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise DatasetFormatError(
            f"IDX file {path} declares {expected} bytes of data, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_dataset(images_path, labels_path, num_classes: int = 0) -> Dataset:
    """
    Load an IDX image/label pair. Pixels are scaled by 1/255 into [0, 1].

    `num_classes` defaults to max(label) + 1.
    """
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if labels.ndim != 1:
        raise DatasetFormatError(f"labels file must be one-dimensional, got {labels.ndim} dims")
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )

    inputs = images.astype(np.float32) / np.float32(255.0)
    labels = labels.astype(np.int64)
    classes = num_classes or (int(labels.max()) + 1 if len(labels) else 1)

    logger.info(
        f"Loaded IDX dataset with {len(labels)} samples",
        extra={'extra_data': {'images': str(images_path), 'sample_shape': list(images.shape[1:])}},
    )
    return Dataset(inputs=inputs, labels=labels, num_classes=classes)


def write_idx(path, array: np.ndarray):
    """Write a uint8 array as an IDX file (used for fixtures and exports)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, IDX_UBYTE, array.ndim]) + struct.pack('>' + 'I' * array.ndim, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def class_means(d: int, classes: int, separation: float) -> np.ndarray:
    """
    Class centres: class c sits at separation * (1 + c // d) along axis c % d.
    """
    means = np.zeros((classes, d), dtype=np.float64)
    for c in range(classes):
        means[c, c % d] = separation * (1 + c // d)
    return means


def gen_synthetic(seed: int, n: int, d: int, classes: int, separation: float) -> Dataset:
    """
    Class-conditional unit-variance Gaussian blobs.

    Labels are balanced (sample i has class i mod classes before shuffling). The result is
    a pure function of the arguments.
    """
    if n < 1 or d < 1 or classes < 1:
        raise DatasetFormatError("n, d and classes must all be >= 1")

    rng = rng_for(seed)
    labels = rng.permutation(np.arange(n) % classes).astype(np.int64)
    noise = rng.standard_normal((n, d))
    inputs = (class_means(d, classes, separation)[labels] + noise).astype(np.float32)
    return Dataset(inputs=inputs, labels=labels, num_classes=classes)


def split_dataset(dataset: Dataset, eval_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic shuffle-split into (train, held-out evaluation)."""
    if not 0.0 < eval_fraction < 1.0:
        raise DatasetFormatError("eval_fraction must lie in (0, 1)")
    order = rng_for(seed).permutation(len(dataset))
    n_eval = max(1, int(round(len(dataset) * eval_fraction)))
    return dataset.subset(np.sort(order[n_eval:])), dataset.subset(np.sort(order[:n_eval]))


def calibration_subset(dataset: Dataset, size: int, seed: int) -> Dataset:
    """A fixed random subset of the training data used for calibration."""
    if size >= len(dataset):
        return dataset
    order = rng_for(seed).permutation(len(dataset))[:size]
    return dataset.subset(np.sort(order))
