"""Majority-vote inference protocol, accuracy, and boundary-grid export.

A query is never propagated jointly with other queries: each of the
n_batches reference batches classifies it by plain 1-NN (against a fully
labeled batch, greedy propagation of one extra point reduces to exactly
that), and the modal label over the batches wins. Grid export follows the
same rule, so grid cells are labeled independently of one another.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import ConfigError, PointSet, RngState

_CHUNK = 4096  # query rows per distance block, keeps memory bounded


@dataclass(frozen=True)
class EvalConfig:
    """Majority-vote protocol parameters: n_batches reference batches of
    batch_size points each, sampled from the training set."""

    n_batches: int = 256
    batch_size: int = 2040
    rng_seed: int = 0

    def validate(self, train_size: int) -> None:
        if self.n_batches < 1 or self.batch_size < 1:
            raise ConfigError("n_batches and batch_size must be positive")
        if self.batch_size > train_size:
            raise ConfigError(
                f"batch_size {self.batch_size} exceeds the training set size {train_size}"
            )


def _nn_vote(zq: np.ndarray, zref: np.ndarray, ref_labels: np.ndarray) -> np.ndarray:
    votes = np.empty(zq.shape[0], dtype=np.int64)
    for start in range(0, zq.shape[0], _CHUNK):
        block = zq[start : start + _CHUNK]
        nn = np.argmin(cdist(block, zref, "sqeuclidean"), axis=1)
        votes[start : start + block.shape[0]] = ref_labels[nn]
    return votes


def predict(queries, train: PointSet, embedding, config: EvalConfig) -> np.ndarray:
    """Majority-vote 1-NN prediction for each query row.

    embedding is anything with a transform(X) method (LinearEmbedding,
    TrainedModel, or an identity stand-in). Ties between vote counts go to
    the smaller class index; within a batch, distance ties go to the point
    sampled earlier. Deterministic for a fixed rng_seed.
    """
    if train.n == 0:
        raise ConfigError("training set is empty")
    if not train.is_fully_labeled():
        raise ConfigError("training set must be fully labeled")
    config.validate(train.n)
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2:
        raise ConfigError(f"queries must be (m, d), got shape {queries.shape}")
    if queries.shape[1] != train.dim:
        raise ConfigError(
            f"query dimension {queries.shape[1]} != training dimension {train.dim}"
        )
    zt = np.asarray(embedding.transform(train.coords), dtype=np.float64)
    zq = np.asarray(embedding.transform(queries), dtype=np.float64)
    k = train.n_classes()
    m = zq.shape[0]
    counts = np.zeros((m, k), dtype=np.int64)
    root = RngState(config.rng_seed)
    rows = np.arange(m)
    for bi in range(config.n_batches):
        idx = root.substream(bi).generator().choice(train.n, size=config.batch_size, replace=False)
        votes = _nn_vote(zq, zt[idx], train.labels[idx])
        counts[rows, votes] += 1
    return np.argmax(counts, axis=1)


def accuracy(predictions, truth) -> float:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ConfigError("predictions and truth must have the same length")
    if predictions.size == 0:
        raise ConfigError("cannot compute accuracy of an empty prediction set")
    return float(np.mean(predictions == truth))


def make_grid(bounds, resolution):
    """Row-major 2-D grid over bounds = (xmin, xmax, ymin, ymax); x varies
    fastest. resolution is one int for both axes or a pair (nx, ny)."""
    xmin, xmax, ymin, ymax = (float(v) for v in bounds)
    if np.isscalar(resolution):
        nx = ny = int(resolution)
    else:
        nx, ny = (int(v) for v in resolution)
    if nx < 2 or ny < 2:
        raise ConfigError("grid resolution must be at least 2 per axis")
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError("bounds must satisfy xmax > xmin and ymax > ymin")
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    return np.column_stack([gx.ravel(), gy.ravel()])


def export_boundary_grid(
    train: PointSet, embedding, bounds, resolution, config: EvalConfig, path=None
):
    """Classify every grid cell independently and optionally write the CSV.

    Cells are never propagated jointly: each one is majority-vote classified
    against the sampled training batches on its own. Returns (grid points,
    labels).
    """
    if train.dim != 2:
        raise ConfigError("boundary grids are defined for 2-D input spaces")
    pts = make_grid(bounds, resolution)
    labels = predict(pts, train, embedding, config)
    if path is not None:
        write_grid_csv(path, pts, labels)
    return pts, labels


def write_grid_csv(path, points: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,label\n")
        for (x, y), lab in zip(points, labels):
            fh.write(f"{format(x, '.9g')},{format(y, '.9g')},{lab}\n")


def write_predictions_csv(path, predictions: np.ndarray, truth: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,predicted,truth\n")
        for i, (p, t) in enumerate(zip(predictions, truth)):
            fh.write(f"{i},{p},{t}\n")
