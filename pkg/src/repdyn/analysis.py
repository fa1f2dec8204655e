"""Representational-structure analytics.

Measured pairwise squared distances at the probed hidden layer, the
rich-regime theory prediction for those distances, exponential weighing to
soften triangle-inequality violations in the pairwise prediction, Pearson
comparison over matrix upper triangles, and classical MDS projection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .network import Network, forward

SYMMETRY_TOL = 1e-12


class Provenance(Enum):
    MEASURED = "measured"
    THEORY = "theory"
    THEORY_WEIGHTED = "theory_weighted"


@dataclass
class DistanceMatrix:
    """Symmetric matrix of pairwise squared representational distances."""

    entries: np.ndarray
    provenance: Provenance
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError("entries must be a square matrix")
        scale = max(1.0, float(np.max(np.abs(self.entries))) if self.entries.size else 1.0)
        if np.max(np.abs(self.entries - self.entries.T)) > SYMMETRY_TOL * scale:
            raise ValueError("entries must be symmetric")
        if np.max(np.abs(np.diag(self.entries))) > SYMMETRY_TOL * scale:
            raise ValueError("diagonal must be zero")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != self.entries.shape[0]:
                raise ValueError("labels length mismatch")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def upper_triangle(self) -> np.ndarray:
        iu = np.triu_indices(self.n, k=1)
        return self.entries[iu]

    def to_csv(self, path) -> None:
        """Row-major CSV; the header carries the labels."""
        labels = self.labels if self.labels is not None else np.arange(self.n)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([str(l) for l in labels])
            for row in self.entries:
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, provenance: Provenance = Provenance.MEASURED) -> "DistanceMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            labels = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        return cls(entries=np.array(rows), provenance=provenance,
                   labels=np.array(labels))


def _squared_distances(points: np.ndarray, block: int = 128) -> np.ndarray:
    """Exact pairwise squared Euclidean distances, computed blockwise from
    explicit differences so the matrix is symmetric to the bit."""
    n = points.shape[0]
    out = np.zeros((n, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        out[start:stop] = np.sum(diff * diff, axis=2)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_distances(net: Network, dataset: Dataset,
                       subset: Optional[Sequence[int]] = None) -> DistanceMatrix:
    """Measured squared distances between hidden representations (eval mode)."""
    idx = np.arange(len(dataset)) if subset is None else np.asarray(subset, dtype=int)
    hidden, _ = forward(net, dataset.inputs[idx], train_mode=False)
    labels = None if dataset.labels is None else dataset.labels[idx]
    return DistanceMatrix(entries=_squared_distances(np.atleast_2d(hidden)),
                          provenance=Provenance.MEASURED, labels=labels)


def theory_distance_matrix(dataset: Dataset,
                           subset: Optional[Sequence[int]] = None,
                           rate_ratio: float = 1.0) -> DistanceMatrix:
    """Rich-regime predicted squared distances for every pair.

    Each entry is ``sqrt(rate_ratio) * ||x_i - x_j|| * ||y_i - y_j||``, the
    data-driven fixed point of the pair dynamics when the initialization
    contribution is negligible.  ``rate_ratio`` is the decoder/encoder time
    constant ratio tau_y / tau_h.
    """
    if rate_ratio <= 0:
        raise ValueError("rate_ratio must be > 0")
    idx = np.arange(len(dataset)) if subset is None else np.asarray(subset, dtype=int)
    dx = np.sqrt(_squared_distances(dataset.inputs[idx]))
    dy = np.sqrt(_squared_distances(dataset.targets[idx]))
    labels = None if dataset.labels is None else dataset.labels[idx]
    return DistanceMatrix(entries=np.sqrt(rate_ratio) * dx * dy,
                          provenance=Provenance.THEORY, labels=labels)


def exponential_weighing(theory: DistanceMatrix) -> DistanceMatrix:
    """Smooth a pairwise prediction by its neighborhood structure.

    ``pred[i, j] = sum_{k, l} exp(-d[i, k]) * exp(-d[l, j]) * d[k, l]``,
    which pulls up predictions between points that are both near a third,
    distant point, reducing triangle-inequality violations.  The diagonal is
    forced back to zero afterwards (self-distance is zero by definition).
    """
    if theory.provenance is not Provenance.THEORY:
        raise ValueError("exponential weighing applies to theory predictions")
    e = np.exp(-theory.entries)
    pred = e @ theory.entries @ e
    pred = 0.5 * (pred + pred.T)
    np.fill_diagonal(pred, 0.0)
    return DistanceMatrix(entries=pred, provenance=Provenance.THEORY_WEIGHTED,
                          labels=theory.labels)


def rescale_to_median(matrix: DistanceMatrix, target_median: float) -> DistanceMatrix:
    """Uniformly rescale so the strict-upper-triangle median matches.

    The weighing formula is scale-sensitive while the downstream Pearson
    comparison is not, so the unknown overall prefactor of the prediction is
    pinned to the measured scale this way.  A zero-median matrix is returned
    unchanged.
    """
    current = float(np.median(matrix.upper_triangle()))
    if current == 0.0:
        return DistanceMatrix(entries=matrix.entries.copy(),
                              provenance=matrix.provenance, labels=matrix.labels)
    return DistanceMatrix(entries=matrix.entries * (target_median / current),
                          provenance=matrix.provenance, labels=matrix.labels)


def pearson(a: DistanceMatrix, b: DistanceMatrix,
            exclude_same_label: bool = False) -> float:
    """Product-moment correlation over strict upper triangles.

    With `exclude_same_label`, pairs whose labels agree are masked out
    (dropping the same-class diagonal blocks of a label-sorted matrix).
    Raises if either masked vector is constant.
    """
    if a.entries.shape != b.entries.shape:
        raise ValueError("matrix shape mismatch")
    iu = np.triu_indices(a.n, k=1)
    va = a.entries[iu]
    vb = b.entries[iu]
    if exclude_same_label:
        labels = a.labels if a.labels is not None else b.labels
        if labels is None:
            raise ValueError("exclude_same_label requires labels")
        keep = labels[iu[0]] != labels[iu[1]]
        va, vb = va[keep], vb[keep]
    if va.size < 2 or np.all(va == va[0]) or np.all(vb == vb[0]):
        raise ValueError("correlation undefined for constant entries")
    return float(np.corrcoef(va, vb)[0, 1])


@dataclass
class MdsResult:
    coords: np.ndarray  # (n, dims)
    eigenvalues: np.ndarray  # all eigenvalues, descending
    padded: bool  # True when negative eigenvalues forced zero axes

    def to_csv(self, path, labels: Optional[Sequence] = None) -> None:
        names = ["x", "y", "z"][: self.coords.shape[1]]
        names += [f"c{i}" for i in range(len(names), self.coords.shape[1])]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label"] + names)
            for i, row in enumerate(self.coords):
                label = labels[i] if labels is not None else i
                writer.writerow([str(label)] + [f"{v:.17g}" for v in row])


def classical_mds(d: DistanceMatrix, dims: int = 2) -> MdsResult:
    """Classical (Torgerson) scaling of a squared-distance matrix.

    Double-centers ``B = -J D J / 2``, takes the top `dims` eigenpairs with
    nonnegative eigenvalues (descending, ties by index), and scales the
    eigenvectors by root-eigenvalue.  Axes whose eigenvalue is negative are
    zero-padded and flagged.  Each axis is flipped so its first nonzero
    coordinate is positive.
    """
    if dims < 1:
        raise ValueError("dims must be >= 1")
    D = d.entries
    n = d.n
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ D @ j
    b = 0.5 * (b + b.T)
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    scale = max(1.0, float(np.max(np.abs(evals))))
    evals[np.abs(evals) <= 1e-12 * scale] = 0.0

    coords = np.zeros((n, dims))
    padded = False
    for k in range(min(dims, n)):
        if evals[k] > 0:
            coords[:, k] = evecs[:, k] * np.sqrt(evals[k])
        elif evals[k] < 0:
            padded = True
    if dims > n:
        padded = True
    for k in range(dims):
        col = coords[:, k]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, np.max(np.abs(col))))
        if nonzero.size and col[nonzero[0]] < 0:
            coords[:, k] = -col
    return MdsResult(coords=coords, eigenvalues=evals, padded=padded)
