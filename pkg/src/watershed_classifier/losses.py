"""Representation-learning losses: the watershed loss plus two baselines.

The watershed loss scores a batch of embedded points by (1) sampling seeds,
(2) greedily propagating their labels, (3) keeping the correctly-propagated
points, and (4) pulling every point toward its nearest correct same-class
point relative to the nearest correct point of each other class, through a
softmax over negative distances. Seed choice, propagation, and neighbor
selection are constants of the forward pass; gradients flow only through
the selected distances.

The baselines share the calling conventions: nca_loss reproduces the
classic neighborhood-component objective (softmax over negative *squared*
distances, summed over same-class neighbors), linear_softmax_loss is plain
K-way cross-entropy on top of a linear head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EPS_D, UNLABELED, ConfigError, RngState, Seed, pairwise_sq
from .propagation import _grow_greedy

# Capped per-point penalty used when a point's own class has no eligible
# correct neighbor (and for singleton classes in nca_loss). Roughly -log of
# a probability floor of e^-30; keeps the loss finite and training stable.
L_CAP = 30.0


@dataclass(frozen=True)
class LossReport:
    """Everything the watershed forward pass computed for one batch.

    probs rows sum to 1 over classes with a valid neighbor; neighbor_ids is
    -1 where a class had no eligible correct point; grad_embed holds
    d(loss)/d(embedded coordinates).
    """

    loss: float
    probs: np.ndarray
    neighbor_ids: np.ndarray
    grad_embed: np.ndarray
    correct_mask: np.ndarray
    seeds: tuple
    labels: np.ndarray
    propagated: np.ndarray

    def to_csv(self, path) -> None:
        n = self.labels.shape[0]
        p_true = self.probs[np.arange(n), self.labels]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("point_id,true_label,propagated_label,correct,p_true\n")
            for i in range(n):
                fh.write(
                    f"{i},{self.labels[i]},{self.propagated[i]},"
                    f"{int(self.correct_mask[i])},{format(p_true[i], '.9g')}\n"
                )


def _check_batch_labels(labels: np.ndarray, n_seeds: int) -> int:
    # a single-class batch is degenerate but well-defined (p = 1, loss = 0)
    k = int(labels.max()) + 1
    for c in range(k):
        count = int(np.sum(labels == c))
        if count < n_seeds + 1:
            raise ConfigError(
                f"class {c} has {count} samples in the batch; "
                f"needs at least n_seeds + 1 = {n_seeds + 1}"
            )
    return k


def _sample_seeds(labels: np.ndarray, n_seeds: int, rng: RngState) -> np.ndarray:
    gen = rng.generator()
    k = int(labels.max()) + 1
    chosen = []
    for c in range(k):
        ids = np.flatnonzero(labels == c)
        chosen.append(np.sort(gen.choice(ids, size=n_seeds, replace=False)))
    return np.concatenate(chosen)


def _nearest_correct(sq: np.ndarray, labels: np.ndarray, correct: np.ndarray, k: int):
    """Per point and class: nearest correctly-propagated point of that class,
    excluding the point itself. Returns (neighbor ids with -1 sentinel,
    squared distances with +inf where invalid)."""
    n = sq.shape[0]
    neighbor = np.full((n, k), -1, dtype=np.int64)
    nbr_sq = np.full((n, k), np.inf)
    rows = np.arange(n)
    for c in range(k):
        cols = np.flatnonzero(correct & (labels == c))
        if cols.size == 0:
            continue
        sub = sq[:, cols].copy()
        sub[cols, np.arange(cols.size)] = np.inf  # exclude self
        j = np.argmin(sub, axis=1)
        v = sub[rows, j]
        ok = np.isfinite(v)
        neighbor[ok, c] = cols[j[ok]]
        nbr_sq[ok, c] = v[ok]
    return neighbor, nbr_sq


def _softmax_losses(dist: np.ndarray, labels: np.ndarray):
    """Softmax of negative distances per row (inf marks an invalid class).

    Returns (probs, per-point negative log likelihood, capped mask)."""
    n = dist.shape[0]
    rows = np.arange(n)
    dmin = dist.min(axis=1)
    e = np.exp(dmin[:, None] - dist)  # invalid: exp(-inf) = 0
    denom = e.sum(axis=1)
    probs = e / denom[:, None]
    capped = ~np.isfinite(dist[rows, labels])
    nll = np.where(capped, L_CAP, dist[rows, labels] - dmin + np.log(denom))
    return probs, nll, capped


def watershed_loss_forward(
    embedded,
    labels,
    n_seeds: int,
    rng: RngState | None = None,
    seed_ids=None,
) -> LossReport:
    """Watershed loss over embedded batch coordinates.

    Seeds are drawn with rng (n_seeds per class, uniformly without
    replacement); pass seed_ids to pin them instead, e.g. for diagnostics.
    The returned loss is the mean negative log likelihood, so smaller is
    better and a trainer minimizes it.
    """
    z = np.asarray(embedded, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ConfigError("embedded must be (n, d) with a length-n label vector")
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    if np.any(labels == UNLABELED):
        raise ConfigError("watershed loss requires a fully labeled batch")
    k = int(labels.max()) + 1
    if seed_ids is None:
        if rng is None:
            raise ConfigError("either rng or seed_ids must be given")
        # the per-class count precondition protects sampling without
        # replacement; pinned seeds skip it (the cap handles tiny classes)
        _check_batch_labels(labels, n_seeds)
        seed_ids = _sample_seeds(labels, n_seeds, rng)
    else:
        seed_ids = np.asarray(seed_ids, dtype=np.int64)
        if np.any(seed_ids < 0) or np.any(seed_ids >= z.shape[0]):
            raise ConfigError("seed_ids out of range")

    n = z.shape[0]
    sq = pairwise_sq(z)
    seeded = np.full(n, UNLABELED, dtype=np.int64)
    seeded[seed_ids] = labels[seed_ids]
    propagated, _, _, _ = _grow_greedy(sq, seeded)
    correct = propagated == labels

    neighbor, nbr_sq = _nearest_correct(sq, labels, correct, k)
    dist = np.sqrt(nbr_sq + EPS_D)  # inf + eps stays inf
    probs, nll, _ = _softmax_losses(dist, labels)
    loss = float(nll.mean())

    seeds = tuple(Seed(int(i), int(labels[i])) for i in seed_ids)
    report = LossReport(
        loss=loss,
        probs=probs,
        neighbor_ids=neighbor,
        grad_embed=np.zeros_like(z),
        correct_mask=correct,
        seeds=seeds,
        labels=labels,
        propagated=propagated,
    )
    grad = watershed_loss_backward(report, z)
    object.__setattr__(report, "grad_embed", grad)
    return report


def watershed_loss_from_report(embedded, report: LossReport) -> float:
    """Loss at new coordinates with the report's selections held fixed.

    This is the function the analytic gradient differentiates; finite
    differences of it validate watershed_loss_backward.
    """
    z = np.asarray(embedded, dtype=np.float64)
    n, k = report.probs.shape
    dist = np.full((n, k), np.inf)
    valid = report.neighbor_ids >= 0
    i_idx, c_idx = np.nonzero(valid)
    j_idx = report.neighbor_ids[i_idx, c_idx]
    diff = z[i_idx] - z[j_idx]
    dist[i_idx, c_idx] = np.sqrt(np.einsum("ij,ij->i", diff, diff) + EPS_D)
    _, nll, _ = _softmax_losses(dist, report.labels)
    return float(nll.mean())


def watershed_loss_backward(report: LossReport, embedded) -> np.ndarray:
    """Gradient of the mean NLL w.r.t. the embedded coordinates.

    For each point i and valid class c with neighbor j: with
    g = (p_ic - [c == y_i]) / n and d the smoothed distance, -g (z_i - z_j)/d
    accumulates at i and +g (z_i - z_j)/d at j. Points whose own class was
    dropped contribute the capped penalty and no gradient.
    """
    z = np.asarray(embedded, dtype=np.float64)
    n, k = report.probs.shape
    rows = np.arange(n)
    onehot = np.zeros((n, k))
    onehot[rows, report.labels] = 1.0
    g = (report.probs - onehot) / n
    capped = report.neighbor_ids[rows, report.labels] < 0
    g[capped] = 0.0

    grad = np.zeros_like(z)
    valid = report.neighbor_ids >= 0
    i_idx, c_idx = np.nonzero(valid)
    j_idx = report.neighbor_ids[i_idx, c_idx]
    diff = z[i_idx] - z[j_idx]
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff) + EPS_D)
    gv = (g[i_idx, c_idx] / d)[:, None] * diff
    np.add.at(grad, i_idx, -gv)
    np.add.at(grad, j_idx, gv)
    return grad


def nca_loss(embedded, labels):
    """Neighborhood-component loss and its exact gradient.

    p_ij is a softmax of negative squared distances over j != i; the loss is
    the mean -log of the same-class probability mass. Points without a
    same-class partner contribute the capped penalty and no gradient.
    """
    z = np.asarray(embedded, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    if n < 2:
        return L_CAP, np.zeros_like(z)
    s = -pairwise_sq(z)
    np.fill_diagonal(s, -np.inf)
    m_all = s.max(axis=1)
    e = np.exp(s - m_all[:, None])
    denom = e.sum(axis=1)
    p = e / denom[:, None]

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    has_mate = same.any(axis=1)
    s_same = np.where(same, s, -np.inf)
    m_same = np.where(has_mate, s_same.max(axis=1), 0.0)
    e_same = np.exp(s_same - m_same[:, None])
    num = e_same.sum(axis=1)

    logp = np.where(has_mate, m_same + np.log(np.where(has_mate, num, 1.0)) - m_all - np.log(denom), 0.0)
    nll = np.where(has_mate, -logp, L_CAP)
    loss = float(nll.mean())

    q = np.where(has_mate[:, None], e_same / np.where(num == 0.0, 1.0, num)[:, None], 0.0)
    a = (p - q) / n
    a[~has_mate] = 0.0
    b = a + a.T
    grad = -2.0 * (z * b.sum(axis=1)[:, None] - b @ z)
    return loss, grad


def linear_softmax_loss(embedded, weights, bias, labels):
    """Mean K-way softmax cross-entropy of a linear head.

    Returns (loss, grad wrt embedded, grad wrt weights, grad wrt bias).
    """
    z = np.asarray(embedded, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    logits = z @ w + b
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1)
    p = e / denom[:, None]
    rows = np.arange(n)
    nll = -(logits[rows, labels] - m[:, 0] - np.log(denom))
    loss = float(nll.mean())
    dlogits = p.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits @ w.T, z.T @ dlogits, dlogits.sum(axis=0)
