"""Independent reference implementations used as test oracles.

Everything here is deliberately brute force and shares no code with the
library paths it checks (beyond the distance smoothing constant).
"""
import math

import numpy as np

EPS_D = 1e-12


def slow_distance(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    return math.sqrt(total + EPS_D)


def brute_force_max_margin(coords, seed_labels, n_classes):
    """Maximum margin over all labelings consistent with the seeds, by
    exhaustive enumeration. Returns (margin, one maximizing labeling)."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    free = np.flatnonzero(np.asarray(seed_labels) < 0)
    diff = coords[:, None, :] - coords[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    total = n_classes ** len(free)
    assignments = np.empty((total, n), dtype=np.int8)
    assignments[:, :] = seed_labels
    idx = np.arange(total)
    for pos, f in enumerate(free):
        assignments[:, f] = (idx // (n_classes ** pos)) % n_classes
    marg = np.full(total, np.inf)
    iu, ju = np.triu_indices(n, 1)
    for i, j in zip(iu, ju):
        cross = assignments[:, i] != assignments[:, j]
        marg[cross] = np.minimum(marg[cross], sq[i, j])
    best = int(marg.argmax())
    return math.sqrt(marg.max() + EPS_D), assignments[best].astype(np.int64)


def double_loop_margin(coords, labels):
    best = math.inf
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] != labels[j]:
                best = min(best, slow_distance(coords[i], coords[j]))
    return best


def linear_scan_nn(query, coords, labels):
    best_d, best_i = math.inf, -1
    for i in range(len(labels)):
        d = slow_distance(query, coords[i])
        if d < best_d:
            best_d, best_i = d, i
    return labels[best_i]


def kruskal_mst_weight(coords):
    """Total MST weight via Kruskal with union-find."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            edges.append((slow_distance(coords[i], coords[j]), i, j))
    edges.sort()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total, used = 0.0, 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
            used += 1
            if used == n - 1:
                break
    return total


def central_difference(f, x, h=1e-5):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
        it.iternext()
    return grad


def relative_gradient_error(analytic, numeric):
    denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / denom)


def paired_targets(gen, n_pairs, min_center_gap=3.0, pair_radius=0.3, box=10.0):
    """Random target sets made of well-separated tight pairs; the geometry
    for which every configuration of 2*n_pairs points is attainable with
    n_pairs seeds per class."""
    while True:
        centers = gen.uniform(0.0, box, size=(n_pairs, 2))
        if n_pairs == 1:
            break
        dd = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        if dd[np.triu_indices(n_pairs, 1)].min() > min_center_gap:
            break
    return np.repeat(centers, 2, axis=0) + gen.uniform(
        -pair_radius, pair_radius, size=(2 * n_pairs, 2)
    )
