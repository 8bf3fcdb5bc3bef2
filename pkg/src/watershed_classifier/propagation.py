"""Greedy 1-NN label propagation (the watershed classifier) and its diagnostics.

The propagation rule: starting from the labeled points (the seeds),
repeatedly pick the unlabeled point with the smallest distance to the
labeled set, give it the label of its nearest labeled point, and repeat.
The resulting labeling maximizes the margin -- the smallest distance
between any two differently-labeled points -- over all labelings that
agree with the seeds.

All greedy decisions compare squared distances (the smoothing floor is a
monotone shift, so the ordering is identical) and break ties by
(smaller distance, smaller candidate id, smaller source id), which makes
every function here fully deterministic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import (
    EPS_D,
    UNLABELED,
    ConfigError,
    PointSet,
    Seed,
    pairwise_sq,
)


@dataclass(frozen=True)
class PropagationResult:
    """Outcome of one greedy propagation.

    labels: final label of every point (no UNLABELED left).
    order:  (point_id, source_id, edge_weight) per non-seed point, in the
            order points were labeled; edge_weight is the smoothed distance
            to the source at extraction time.
    margin: smallest distance across differently-labeled pairs, recomputed
            from the final labeling.
    seeds:  the seeds the propagation started from.
    """

    labels: np.ndarray
    order: tuple
    margin: float
    seeds: tuple

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("point_id,source_id,edge_weight,label\n")
            for pid, src, w in self.order:
                fh.write(f"{pid},{src},{format(w, '.9g')},{self.labels[pid]}\n")


@dataclass(frozen=True)
class SpanningTree:
    """Edge list (i, j, weight) of the Euclidean MST over a point set."""

    edges: tuple

    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("i,j,weight\n")
            for i, j, w in self.edges:
                fh.write(f"{i},{j},{format(w, '.9g')}\n")


def _grow_greedy(sq: np.ndarray, labels: np.ndarray):
    """Prim-style growth over a squared-distance matrix.

    labels uses UNLABELED for points to be labeled. Returns the completed
    label vector plus parallel arrays (ids, sources, weights) describing the
    attachment order. Ties break by (distance, candidate id, source id).
    """
    n = sq.shape[0]
    out = labels.copy()
    labeled = out != UNLABELED
    seed_ids = np.flatnonzero(labeled)
    m = n - seed_ids.size
    order_ids = np.empty(m, dtype=np.int64)
    order_src = np.empty(m, dtype=np.int64)
    order_w = np.empty(m, dtype=np.float64)
    if m == 0:
        return out, order_ids, order_src, order_w

    # Best attachment per unlabeled point: smallest distance to the labeled
    # set, keeping the smallest source id on ties. argmin returns the first
    # minimum, and seed_ids is ascending, so ties resolve to the smaller id.
    sub = sq[seed_ids]
    pick = np.argmin(sub, axis=0)
    best = sub[pick, np.arange(n)]
    best_src = seed_ids[pick]
    best[labeled] = np.inf

    for step in range(m):
        i = int(np.argmin(best))
        s = int(best_src[i])
        out[i] = out[s]
        labeled[i] = True
        order_ids[step] = i
        order_src[step] = s
        order_w[step] = math.sqrt(best[i] + EPS_D)
        best[i] = np.inf
        row = sq[i]
        upd = ~labeled & ((row < best) | ((row == best) & (i < best_src)))
        best[upd] = row[upd]
        best_src[upd] = i
    return out, order_ids, order_src, order_w


def propagate(points: PointSet, n_classes: int | None = None) -> PropagationResult:
    """Label every point by greedy 1-NN growth from the seeded points.

    Points with a label >= 0 act as seeds; every class 0..K-1 must have at
    least one seed. Deterministic for a fixed input.
    """
    if points.n == 0:
        raise ConfigError("cannot propagate over an empty point set")
    seed_mask = points.labels != UNLABELED
    if not seed_mask.any():
        raise ConfigError("propagation needs at least one seeded point")
    k = n_classes if n_classes is not None else points.n_classes()
    if k < 2:
        raise ConfigError(f"need at least 2 classes, got {k}")
    present = np.unique(points.labels[seed_mask])
    if present.max() >= k:
        raise ConfigError(f"seed label {present.max()} outside 0..{k - 1}")
    for c in range(k):
        if c not in present:
            raise ConfigError(f"class {c} has no seed")
    if points.n < k:
        raise ConfigError(f"need at least {k} points for {k} classes")

    sq = pairwise_sq(points.coords)
    out, oid, osrc, ow = _grow_greedy(sq, points.labels)
    seeds = tuple(Seed(int(i), int(points.labels[i])) for i in np.flatnonzero(seed_mask))
    order = tuple((int(a), int(b), float(w)) for a, b, w in zip(oid, osrc, ow))
    return PropagationResult(labels=out, order=order, margin=margin(points, out), seeds=seeds)


def margin(points, labels=None) -> float:
    """Smallest smoothed distance between differently-labeled points.

    With a single distinct label there is no cross pair; the +inf sentinel
    is returned to flag that case explicitly.
    """
    if isinstance(points, PointSet) and labels is None:
        labels = points.labels
    labels = np.asarray(labels, dtype=np.int64)
    coords = points.coords if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    if labels.shape[0] != coords.shape[0]:
        raise ConfigError("labels length must match the number of points")
    if np.any(labels == UNLABELED):
        raise ConfigError("margin requires a full labeling")
    if np.unique(labels).size < 2:
        return math.inf
    sq = pairwise_sq(coords)
    diff = labels[:, None] != labels[None, :]
    return math.sqrt(sq[diff].min() + EPS_D)


def classify_one(query, reference: PointSet) -> int:
    """Label of the nearest reference point; ties go to the smaller id."""
    if reference.n == 0:
        raise ConfigError("reference set is empty")
    if not reference.is_fully_labeled():
        raise ConfigError("reference set must be fully labeled")
    query = np.asarray(query, dtype=np.float64).reshape(1, -1)
    if query.shape[1] != reference.dim:
        raise ConfigError(f"query dimension {query.shape[1]} != reference dimension {reference.dim}")
    sq = cdist(query, reference.coords, "sqeuclidean")[0]
    return int(reference.labels[int(np.argmin(sq))])


def mst(points: PointSet | np.ndarray) -> SpanningTree:
    """Exact Euclidean MST by Prim growth from point 0.

    Same tie-break as propagate; O(n^2) time, O(n) extra space. Edges are
    reported as (source, attached, weight) in attachment order.
    """
    coords = points.coords if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    n = coords.shape[0]
    if n < 2:
        raise ConfigError("an MST needs at least 2 points")
    sq = pairwise_sq(coords)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = sq[0].copy()
    best_src = np.zeros(n, dtype=np.int64)
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        i = int(np.argmin(best))
        s = int(best_src[i])
        edges.append((s, i, math.sqrt(best[i] + EPS_D)))
        in_tree[i] = True
        best[i] = np.inf
        row = sq[i]
        upd = ~in_tree & ((row < best) | ((row == best) & (i < best_src)))
        best[upd] = row[upd]
        best_src[upd] = i
    return SpanningTree(edges=tuple(edges))


def cross_edge_count(tree: SpanningTree, labels) -> int:
    """Number of tree edges whose endpoints carry different labels."""
    labels = np.asarray(labels, dtype=np.int64)
    count = 0
    for i, j, _ in tree.edges:
        if i >= labels.shape[0] or j >= labels.shape[0]:
            raise ConfigError("labels do not cover all tree vertices")
        if labels[i] != labels[j]:
            count += 1
    return count


@dataclass(frozen=True)
class SeedPlacement:
    """A witnessing seed placement found by shatter_check.

    target_seeds: (target point id, class) pairs for seeds placed on targets.
    far_seeds:    (class, coordinates) pairs for auxiliary distant seeds added
                  for classes that have no target seed.
    """

    target_seeds: tuple
    far_seeds: tuple


def _far_coord(coords: np.ndarray, cls: int, diam: float) -> np.ndarray:
    offset = 2.5 * diam + 1.0
    far = coords.mean(axis=0).copy()
    far[0] = coords[:, 0].max() + (cls + 1) * offset
    return far


def shatter_check(targets, n_seeds: int, config):
    """Can some seed placement make propagation reproduce a binary labeling?

    The search pool is finite: per-class subsets of the target points of size
    at most n_seeds, plus one auxiliary "far" seed (further than twice the
    target diameter from every target) for any class left without a seed.
    Returns (True, placement) on success. A False answer means "not found in
    the pool", not a proof that no ambient placement exists.
    """
    coords = targets.coords if isinstance(targets, PointSet) else np.asarray(targets, dtype=np.float64)
    k = coords.shape[0]
    config = np.asarray(config, dtype=np.int64)
    if config.shape != (k,):
        raise ConfigError(f"config must have length {k}, got shape {config.shape}")
    if not np.all((config == 0) | (config == 1)):
        raise ConfigError("shatter_check handles binary configurations only")
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    sq = pairwise_sq(coords)
    upper = sq[np.triu_indices(k, 1)]
    if k > 1 and np.unique(upper).size < upper.size:
        raise ConfigError("target points must have distinct pairwise distances")
    diam = math.sqrt(upper.max()) if k > 1 else 1.0

    by_class = {c: np.flatnonzero(config == c) for c in (0, 1)}
    subset_pools = {}
    for c in (0, 1):
        ids = by_class[c]
        if ids.size == 0:
            subset_pools[c] = [None]  # far seed required
        else:
            pool = []
            for size in range(1, min(n_seeds, ids.size) + 1):
                pool.extend(itertools.combinations(ids.tolist(), size))
            subset_pools[c] = pool

    for s0 in subset_pools[0]:
        for s1 in subset_pools[1]:
            target_seeds = []
            far_seeds = []
            rows = [coords]
            labels = np.full(k, UNLABELED, dtype=np.int64)
            for c, subset in ((0, s0), (1, s1)):
                if subset is None:
                    far_seeds.append((c, _far_coord(coords, c, diam)))
                else:
                    for pid in subset:
                        labels[pid] = c
                        target_seeds.append((int(pid), c))
            extra_labels = []
            for c, far in far_seeds:
                rows.append(far.reshape(1, -1))
                extra_labels.append(c)
            all_coords = np.vstack(rows)
            all_labels = np.concatenate([labels, np.asarray(extra_labels, dtype=np.int64)])
            result = propagate(PointSet(all_coords, all_labels), n_classes=2)
            if np.array_equal(result.labels[:k], config):
                placement = SeedPlacement(
                    target_seeds=tuple(target_seeds),
                    far_seeds=tuple((c, tuple(f.tolist())) for c, f in far_seeds),
                )
                return True, placement
    return False, None
