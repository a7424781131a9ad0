"""Finite point-mass size laws shared by the packet and frame distributions."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WEIGHT_TOLERANCE = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def merge_point_masses(sizes, weights) -> tuple[np.ndarray, np.ndarray]:
    """Sort atoms, add the weights of coincident sizes and drop zero-weight atoms."""
    sizes = np.asarray(sizes)
    weights = np.asarray(weights, dtype=float)
    uniq, inverse = np.unique(sizes, return_inverse=True)
    merged = np.bincount(inverse, weights=weights, minlength=len(uniq))
    keep = merged > 0
    return uniq[keep], merged[keep]


@dataclass(frozen=True, eq=False)
class PointMassLaw:
    """Discrete law ``F(x) = sum_i w_i 1(x - s_i)`` over strictly increasing sizes in bytes."""

    sizes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.sizes)
        weights = np.asarray(self.weights, dtype=float)
        if sizes.ndim != 1 or sizes.shape != weights.shape or len(sizes) == 0:
            raise ValueError("sizes and weights must be nonempty 1-d arrays of equal length")
        if np.any(np.diff(sizes) <= 0):
            raise ValueError("sizes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "sizes", _frozen(sizes))
        object.__setattr__(self, "weights", _frozen(weights))

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.sizes))

    @property
    def max_size(self):
        """Smallest ``l`` with ``F(l) = 1``."""
        return self.sizes[-1].item()

    def cdf(self, x):
        """Right-continuous step CDF evaluated at ``x`` (scalar or array)."""
        cum = np.concatenate(([0.0], np.cumsum(self.weights)))
        cum[-1] = 1.0
        idx = np.searchsorted(self.sizes, x, side="right")
        out = cum[idx]
        return float(out) if np.ndim(out) == 0 else out

    def shifted(self, offset) -> PointMassLaw:
        return PointMassLaw(self.sizes + offset, self.weights)

    def write_csv(self, path, column: str = "weight") -> Path:
        """Write ``size_bytes,<column>`` rows; ``column='cdf'`` writes cumulative values."""
        path = Path(path)
        values = self.cdf(self.sizes) if column == "cdf" else self.weights
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["size_bytes", column])
            for s, v in zip(self.sizes.tolist(), np.asarray(values).tolist()):
                writer.writerow([s, repr(float(v))])
        return path

    @classmethod
    def read_csv(cls, path) -> PointMassLaw:
        """Inverse of :meth:`write_csv` for either column kind."""
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [(int(s), float(v)) for s, v in reader]
        sizes = np.array([s for s, _ in rows])
        values = np.array([v for _, v in rows])
        if header == ["size_bytes", "cdf"]:
            values = np.diff(values, prepend=0.0)
        elif header != ["size_bytes", "weight"]:
            raise ValueError(f"{path}: unexpected header {header}")
        return cls(sizes, values)


def ks_distance(a: PointMassLaw, b: PointMassLaw) -> float:
    """Kolmogorov-Smirnov distance between two point-mass laws (exact, on the union support)."""
    grid = np.union1d(a.sizes, b.sizes)
    return float(np.max(np.abs(a.cdf(grid) - b.cdf(grid))))
