"""Shared domain types, the deterministic RNG contract, and distance primitives.

Everything downstream (propagation, losses, training, evaluation) builds on
the types and the two distance functions defined here. All distances are
Euclidean with a small smoothing floor added inside the square root:

    dist(a, b) = sqrt(sum_k (a_k - b_k)^2 + EPS_D)

The floor keeps the distance (and its derivative, used by the loss backward
pass) finite at coincident points. It also means the distance between a
point and itself is sqrt(EPS_D) ~ 1e-6, never exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

# Smoothing floor inside the square root. Prevents the gradient singularity
# of ||.|| at zero; chosen small enough to be invisible at data scale.
EPS_D = 1e-12

# Label value reserved for points that carry no class label.
UNLABELED = -1


class ConfigError(ValueError):
    """Bad parameters or violated preconditions (maps to CLI exit code 2)."""


class DataFormatError(ValueError):
    """Malformed input data such as a bad CSV or IDX file (CLI exit code 1)."""


@dataclass(frozen=True)
class PointSet:
    """An immutable set of points with optional class labels.

    coords is an (n, d) float matrix, labels a length-n integer vector where
    UNLABELED (-1) marks points without a class. Point ids are the row
    indices 0..n-1 and stay stable for the lifetime of the object.
    """

    coords: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=np.float64))
        if coords.ndim != 2:
            raise ConfigError(f"coords must be 2-D (n, d), got shape {coords.shape}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != coords.shape[0]:
            raise ConfigError(
                f"labels must be a length-{coords.shape[0]} vector, got shape {labels.shape}"
            )
        if not np.all(np.isfinite(coords)):
            raise ConfigError("coords contain non-finite values")
        if labels.size and labels.min() < UNLABELED:
            raise ConfigError("labels must be >= -1 (-1 means unlabeled)")
        coords.setflags(write=False)
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def unlabeled(cls, coords) -> "PointSet":
        coords = np.asarray(coords, dtype=np.float64)
        return cls(coords, np.full(coords.shape[0], UNLABELED, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)

    def n_classes(self) -> int:
        """Number of classes implied by the labels (max label + 1)."""
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0

    def is_fully_labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    def with_labels(self, labels) -> "PointSet":
        return PointSet(self.coords, labels)

    def subset(self, indices) -> "PointSet":
        indices = np.asarray(indices, dtype=np.int64)
        return PointSet(self.coords[indices], self.labels[indices])


@dataclass(frozen=True)
class Seed:
    """A labeled starting point for propagation."""

    point_id: int
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise ConfigError("a seed must carry a real class label, not UNLABELED")


@dataclass(frozen=True)
class RngState:
    """Deterministic, splittable randomness.

    The project-wide PRNG is numpy's PCG64 seeded through
    ``SeedSequence(seed, spawn_key=key)``. Identical (seed, key) pairs give
    identical streams on every platform; substreams derived through
    ``substream`` are independent of each other and of the parent, and their
    identity depends only on the integers in the key, never on call order.
    """

    seed: int
    key: tuple = field(default_factory=tuple)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, *key) -> "RngState":
        return RngState(self.seed, self.key + tuple(int(k) for k in key))


def _pair_sq(a: np.ndarray, b: np.ndarray) -> float:
    # One-pair pdist call so single distances use the exact same accumulation
    # order as the pairwise matrix; the bit-exactness contract between
    # distance() and pairwise_distances() depends on this.
    return float(pdist(np.stack([a, b]), "sqeuclidean")[0])


def distance(a, b) -> float:
    """Smoothed Euclidean distance between two vectors of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ConfigError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("distance inputs must be finite")
    return math.sqrt(_pair_sq(a, b) + EPS_D)


def _as_coords(points) -> np.ndarray:
    if isinstance(points, PointSet):
        return points.coords
    coords = np.asarray(points, dtype=np.float64)
    if coords.ndim != 2:
        raise ConfigError(f"expected an (n, d) array, got shape {coords.shape}")
    return coords


def pairwise_sq(points) -> np.ndarray:
    """Squared Euclidean distances, zero diagonal, computed once per pair."""
    coords = _as_coords(points)
    if coords.shape[0] < 1:
        raise ConfigError("need at least one point")
    return squareform(pdist(coords, "sqeuclidean"))


def pairwise_distances(points) -> np.ndarray:
    """Full n x n smoothed-distance matrix.

    Each unordered pair is computed once and mirrored, so the matrix is
    symmetric to bit equality; the diagonal is sqrt(EPS_D).
    """
    return np.sqrt(pairwise_sq(points) + EPS_D)
