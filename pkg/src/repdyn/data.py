"""Dataset generators and loaders for the training experiments.

All generators are deterministic and free of RNG state; the MNIST loader
ingests the standard big-endian IDX binary pair.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, input_dim)
    targets: np.ndarray  # (n, output_dim)
    name: str
    pair_of_interest: Optional[tuple[int, int]] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have equal length")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def two_point(dx: float = 0.5, dy: float = 1.0) -> Dataset:
    """The canonical pair task: 1-d inputs {-1, -1 + dx}, targets
    {0.6, 0.6 + dy}."""
    inputs = np.array([[-1.0], [-1.0 + dx]])
    targets = np.array([[0.6], [0.6 + dy]])
    return Dataset(inputs=inputs, targets=targets, name="two_point",
                   pair_of_interest=(0, 1))


def xor() -> Dataset:
    """The 4-point XOR task on the unit square, 1-d output."""
    inputs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    targets = np.array([[0.0], [1.0], [1.0], [0.0]])
    return Dataset(inputs=inputs, targets=targets, name="xor")


def blobs(grid: int = 30, image: int = 5, variance: float = 1.0) -> Dataset:
    """Two-context Gaussian-bump images with orthogonal target features.

    For each of two contexts and each point on a grid x grid lattice, the
    input is an image x image picture of an isotropic Gaussian bump centered
    at the lattice point (pixel-coordinate variance `variance`), flattened
    and concatenated with a 2-d one-hot context code.  The target is the
    bump's x position in context 1 and its y position in context 2, both
    scaled to [0, 1].  Context 1 occupies the first half of the dataset.
    """
    if grid < 2 or image < 1:
        raise ValueError("grid must be >= 2 and image >= 1")
    lattice = np.arange(grid) / (grid - 1)  # scaled positions in [0, 1]
    pix = lattice * (image - 1)  # bump centers in pixel coordinates
    rows = np.arange(image)
    inputs = []
    targets = []
    labels = []
    for context in (0, 1):
        onehot = np.zeros(2)
        onehot[context] = 1.0
        for ix in range(grid):
            for iy in range(grid):
                gx = np.exp(-((rows - pix[ix]) ** 2) / (2.0 * variance))
                gy = np.exp(-((rows - pix[iy]) ** 2) / (2.0 * variance))
                img = np.outer(gx, gy)  # img[r, c]: r indexes x, c indexes y
                inputs.append(np.concatenate([img.ravel(), onehot]))
                targets.append([lattice[ix] if context == 0 else lattice[iy]])
                labels.append(context)
    return Dataset(inputs=np.array(inputs), targets=np.array(targets),
                   name="blobs", labels=np.array(labels))


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise DataFormatError(f"{path}: truncated image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(f"{path}: bad image magic {magic}")
        payload = fh.read(count * rows * cols)
    if len(payload) < count * rows * cols:
        raise DataFormatError(f"{path}: truncated image payload")
    data = np.frombuffer(payload, dtype=np.uint8)
    return data.reshape(count, rows * cols).astype(float) / 255.0


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise DataFormatError(f"{path}: truncated label header")
        magic, count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(f"{path}: bad label magic {magic}")
        payload = fh.read(count)
    if len(payload) < count:
        raise DataFormatError(f"{path}: truncated label payload")
    return np.frombuffer(payload, dtype=np.uint8).copy()


def load_mnist(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair: pixels scaled to [0, 1], one-hot
    10-class targets, file order preserved."""
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}")
    targets = np.zeros((labels.shape[0], 10))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    return Dataset(inputs=images, targets=targets, name="mnist",
                   labels=labels.astype(int))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path,
              rows: int, cols: int) -> None:
    """Write an IDX image/label pair (uint8 pixels, big-endian headers)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    n = images.shape[0]
    if labels.shape[0] != n:
        raise ValueError("image/label count mismatch")
    pixels = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(labels.astype(np.uint8).tobytes())


def sorted_digit_subset(dataset: Dataset, n: int = 100) -> np.ndarray:
    """Indices of the first `n` items, stably sorted by digit label."""
    if dataset.labels is None:
        raise ValueError("dataset has no labels")
    if len(dataset) < n:
        raise ValueError(f"dataset has only {len(dataset)} items, need {n}")
    head = np.arange(n)
    order = np.argsort(dataset.labels[:n], kind="stable")
    return head[order]


def digit_pair_indices(dataset: Dataset, digit_a: int, digit_b: int,
                       rng: np.random.Generator) -> tuple[int, int]:
    """Pick one index of each digit class by seeded draw."""
    if dataset.labels is None:
        raise ValueError("dataset has no labels")
    idx_a = np.flatnonzero(dataset.labels == digit_a)
    idx_b = np.flatnonzero(dataset.labels == digit_b)
    if idx_a.size == 0 or idx_b.size == 0:
        raise ValueError(f"digits {digit_a}/{digit_b} not both present")
    return int(rng.choice(idx_a)), int(rng.choice(idx_b))


def export_csv(dataset: Dataset, path) -> None:
    """Flat CSV export: one row per item, inputs then targets."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d_in = dataset.inputs.shape[1]
        d_out = dataset.targets.shape[1]
        writer.writerow([f"x{i}" for i in range(d_in)] + [f"y{i}" for i in range(d_out)])
        for x, y in zip(dataset.inputs, dataset.targets):
            writer.writerow([f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in y])


def subset(dataset: Dataset, indices: Sequence[int], name: Optional[str] = None) -> Dataset:
    indices = np.asarray(indices, dtype=int)
    return Dataset(
        inputs=dataset.inputs[indices],
        targets=dataset.targets[indices],
        name=name or f"{dataset.name}_subset",
        labels=None if dataset.labels is None else dataset.labels[indices],
    )
