"""Linear-embedding trainer: batch sampling, SGD with momentum, early stopping.

One epoch draws n_batches stratified batches of size batch_size, evaluates
the configured loss on each, and applies one SGD step per batch through the
linear map (grad wrt weights = X^T grad_embed over the batch rows). After
every epoch the validation accuracy is measured -- with the majority-vote
protocol for the distance-based losses, with the learned softmax head for
the linear baseline -- and training stops once it has not improved for
`patience` epochs. The reported model carries the best epoch's weights.

Inputs are standardized per feature (mean 0, variance 1, statistics from
the training split); distance-based losses are scale-sensitive, so this is
part of the model and is stored with it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, PointSet, RngState, UNLABELED
from .evaluation import EvalConfig, predict
from .losses import linear_softmax_loss, nca_loss, watershed_loss_forward
from .propagation import cross_edge_count, mst

LOSS_KINDS = ("watershed", "nca", "linear")

# Substream keys under the config seed:
#   (0,)            train/valid split permutation
#   (1,)            weight initialization
#   (2, epoch, b)   seed sampling inside batch b of an epoch (watershed loss)
#   (3, epoch, b)   batch index sampling
#   (4, epoch)      validation-evaluation seed derivation
#   (5, epoch)      coordinate-run seed sampling (train_coordinates)
_SPLIT, _INIT, _SEEDS, _BATCH, _VALEVAL, _COORD = range(6)


@dataclass(frozen=True)
class LinearEmbedding:
    """The trainable map: f(x) = x @ weights, no bias.

    The losses are translation invariant, so a bias would be unidentifiable.
    """

    weights: np.ndarray

    def transform(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainedModel:
    """A trained embedding plus the preprocessing it was trained with.

    transform() standardizes with the stored statistics and projects.
    Models trained with the linear baseline also carry the softmax head and
    predict with it (a linear classifier's inference is its own rule, not
    nearest-neighbor voting).
    """

    embedding: LinearEmbedding
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    loss_kind: str = "watershed"
    head_weights: np.ndarray | None = None
    head_bias: np.ndarray | None = None

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return ((X - self.feature_mean) / self.feature_scale) @ self.embedding.weights

    def predict_linear(self, X) -> np.ndarray:
        if self.head_weights is None:
            raise ConfigError("this model has no linear head")
        logits = self.transform(X) @ self.head_weights + self.head_bias
        return np.argmax(logits, axis=1)

    @classmethod
    def identity(cls, dim: int) -> "TrainedModel":
        return cls(
            embedding=LinearEmbedding(np.eye(dim)),
            feature_mean=np.zeros(dim),
            feature_scale=np.ones(dim),
        )


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "watershed"
    n_seeds: int = 1
    embed_dim: int = 2
    batch_size: int = 256
    n_batches: int = 16
    learning_rate: float = 0.1
    momentum: float = 0.0
    max_epochs: int = 100
    patience: int = 20
    valid_fraction: float = 0.2
    rng_seed: int = 0
    valid_eval_batches: int = 16
    standardize: bool = True

    def validate(self) -> None:
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}; choose from {LOSS_KINDS}")
        if self.n_seeds < 1 or self.embed_dim < 1 or self.batch_size < 1 or self.n_batches < 1:
            raise ConfigError("n_seeds, embed_dim, batch_size and n_batches must be positive")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be positive")
        if not 0.0 < self.valid_fraction < 1.0:
            raise ConfigError("valid_fraction must be in (0, 1)")


@dataclass
class TrainReport:
    """Per-epoch history plus the best model found."""

    config: TrainConfig
    train_losses: list = field(default_factory=list)
    valid_accuracies: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    model: TrainedModel | None = None

    @property
    def best_accuracy(self) -> float:
        return self.valid_accuracies[self.best_epoch - 1]

    def to_csv(self, path) -> None:
        # Timing stays out of the file so reruns are byte-identical.
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,train_loss,valid_accuracy\n")
            for e, (tl, va) in enumerate(zip(self.train_losses, self.valid_accuracies), start=1):
                fh.write(f"{e},{format(tl, '.9g')},{format(va, '.9g')}\n")


def sample_batch(train: PointSet, batch_size: int, n_seeds: int, rng: RngState) -> np.ndarray:
    """Stratified-floor batch: n_seeds + 1 indices per class first, then a
    uniform fill to batch_size, both without replacement."""
    labels = train.labels
    if np.any(labels == UNLABELED):
        raise ConfigError("sample_batch requires fully labeled training data")
    n = train.n
    if batch_size > n:
        raise ConfigError(f"batch_size {batch_size} exceeds training size {n}")
    k = train.n_classes()
    floor = n_seeds + 1
    if batch_size < k * floor:
        raise ConfigError(
            f"batch_size {batch_size} cannot hold {floor} samples for each of {k} classes"
        )
    gen = rng.generator()
    picks = []
    for c in range(k):
        ids = np.flatnonzero(labels == c)
        if ids.size < floor:
            raise ConfigError(
                f"class {c} has {ids.size} training samples; needs at least {floor}"
            )
        picks.append(np.sort(gen.choice(ids, size=floor, replace=False)))
    taken = np.concatenate(picks)
    fill_count = batch_size - taken.size
    if fill_count:
        rest = np.setdiff1d(np.arange(n), taken)
        picks.append(np.sort(gen.choice(rest, size=fill_count, replace=False)))
    return np.concatenate(picks)


def _derived_eval_seed(rng: RngState) -> int:
    return int(rng.generator().integers(2**62))


def train(data: PointSet, config: TrainConfig) -> TrainReport:
    """Train a linear embedding on labeled data per the batch protocol."""
    config.validate()
    if not data.is_fully_labeled():
        raise ConfigError("training data must be fully labeled")
    k = data.n_classes()
    if k < 2:
        raise ConfigError("training needs at least 2 classes")
    n = data.n
    root = RngState(config.rng_seed)

    perm = root.substream(_SPLIT).generator().permutation(n)
    n_valid = int(round(n * config.valid_fraction))
    if n_valid < 1 or n - n_valid < 1:
        raise ConfigError("valid_fraction leaves an empty split")
    valid_idx = perm[:n_valid]
    train_idx = perm[n_valid:]
    if config.batch_size > train_idx.size:
        raise ConfigError(
            f"batch_size {config.batch_size} exceeds the training split size {train_idx.size}"
        )

    if config.standardize:
        mean = data.coords[train_idx].mean(axis=0)
        std = data.coords[train_idx].std(axis=0)
        scale = np.where(std == 0.0, 1.0, std)
    else:
        mean = np.zeros(data.dim)
        scale = np.ones(data.dim)
    x_all = (data.coords - mean) / scale
    x_tr, y_tr = x_all[train_idx], data.labels[train_idx]
    train_points = data.subset(train_idx)

    gen = root.substream(_INIT).generator()
    w = gen.normal(0.0, 1.0 / np.sqrt(data.dim), size=(data.dim, config.embed_dim))
    vel = np.zeros_like(w)
    head_w = np.zeros((config.embed_dim, k))
    head_b = np.zeros(k)
    head_vw = np.zeros_like(head_w)
    head_vb = np.zeros_like(head_b)

    report = TrainReport(config=config)
    best_acc = -1.0
    best = (w.copy(), head_w.copy(), head_b.copy())
    flat_train = PointSet(x_tr, y_tr)  # standardized view for sampling

    for epoch in range(1, config.max_epochs + 1):
        tic = time.perf_counter()
        losses = []
        for b in range(config.n_batches):
            idx = sample_batch(flat_train, config.batch_size, config.n_seeds, root.substream(_BATCH, epoch, b))
            xb, yb = x_tr[idx], y_tr[idx]
            zb = xb @ w
            if config.loss_kind == "watershed":
                rep = watershed_loss_forward(zb, yb, config.n_seeds, root.substream(_SEEDS, epoch, b))
                loss, grad_z = rep.loss, rep.grad_embed
            elif config.loss_kind == "nca":
                loss, grad_z = nca_loss(zb, yb)
            else:
                loss, grad_z, grad_hw, grad_hb = linear_softmax_loss(zb, head_w, head_b, yb)
                head_vw = config.momentum * head_vw + grad_hw
                head_vb = config.momentum * head_vb + grad_hb
                head_w = head_w - config.learning_rate * head_vw
                head_b = head_b - config.learning_rate * head_vb
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite {config.loss_kind} loss at epoch {epoch}, batch {b}"
                )
            losses.append(loss)
            grad_w = xb.T @ grad_z
            vel = config.momentum * vel + grad_w
            w = w - config.learning_rate * vel
            if not np.all(np.isfinite(w)):
                raise RuntimeError(f"non-finite weights at epoch {epoch}, batch {b}")

        model = TrainedModel(
            embedding=LinearEmbedding(w.copy()),
            feature_mean=mean,
            feature_scale=scale,
            loss_kind=config.loss_kind,
            head_weights=head_w.copy() if config.loss_kind == "linear" else None,
            head_bias=head_b.copy() if config.loss_kind == "linear" else None,
        )
        if config.loss_kind == "linear":
            pred = model.predict_linear(data.coords[valid_idx])
        else:
            eval_cfg = EvalConfig(
                n_batches=config.valid_eval_batches,
                batch_size=min(config.batch_size, train_idx.size),
                rng_seed=_derived_eval_seed(root.substream(_VALEVAL, epoch)),
            )
            pred = predict(data.coords[valid_idx], train_points, model, eval_cfg)
        acc = float(np.mean(pred == data.labels[valid_idx]))

        report.train_losses.append(float(np.mean(losses)))
        report.valid_accuracies.append(acc)
        report.epoch_seconds.append(time.perf_counter() - tic)
        if acc > best_acc:
            best_acc = acc
            report.best_epoch = epoch
            best = (w.copy(), head_w.copy(), head_b.copy())
        if epoch - report.best_epoch >= config.patience:
            break

    w_best, head_w_best, head_b_best = best
    report.model = TrainedModel(
        embedding=LinearEmbedding(w_best),
        feature_mean=mean,
        feature_scale=scale,
        loss_kind=config.loss_kind,
        head_weights=head_w_best if config.loss_kind == "linear" else None,
        head_bias=head_b_best if config.loss_kind == "linear" else None,
    )
    return report


@dataclass
class CoordinateTrace:
    """History of a direct coordinate-optimization run."""

    coords: np.ndarray
    losses: np.ndarray
    cross_edges: np.ndarray


def train_coordinates(
    points: PointSet, epochs: int, learning_rate: float, rng: RngState, n_seeds: int = 1
) -> CoordinateTrace:
    """Gradient-descend the watershed loss on the coordinates themselves.

    The points act as their own embedding; after every epoch the number of
    differently-labeled MST edges is recorded as a propagation-quality
    diagnostic.
    """
    if not points.is_fully_labeled():
        raise ConfigError("train_coordinates requires labeled points")
    if epochs < 1 or learning_rate <= 0:
        raise ConfigError("epochs and learning_rate must be positive")
    coords = points.coords.copy()
    labels = points.labels
    losses = np.empty(epochs)
    cross = np.empty(epochs, dtype=np.int64)
    for epoch in range(1, epochs + 1):
        rep = watershed_loss_forward(coords, labels, n_seeds, rng.substream(_COORD, epoch))
        if not np.isfinite(rep.loss):
            raise RuntimeError(f"non-finite coordinate loss at epoch {epoch}")
        coords = coords - learning_rate * rep.grad_embed
        losses[epoch - 1] = rep.loss
        cross[epoch - 1] = cross_edge_count(mst(coords), labels)
    return CoordinateTrace(coords=coords, losses=losses, cross_edges=cross)


_MODEL_MAGIC = "# watershed-model v1"


def save_model(model: TrainedModel, path, meta: dict | None = None) -> None:
    """Plain-text model file: '#'-prefixed header, then CSV numeric rows.

    Row layout after the header: feature_mean, feature_scale, one row per
    input dimension of the embedding matrix, and for linear-head models one
    row per embedding dimension plus the bias row. Values use %.17g so a
    round trip is bit-exact.
    """
    emb = model.embedding
    lines = [_MODEL_MAGIC]
    lines.append(f"# loss: {model.loss_kind}")
    lines.append(f"# input_dim: {emb.input_dim}")
    lines.append(f"# embed_dim: {emb.embed_dim}")
    n_classes = 0 if model.head_weights is None else model.head_weights.shape[1]
    lines.append(f"# head_classes: {n_classes}")
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")

    def row(values):
        return ",".join(format(float(v), ".17g") for v in values)

    lines.append(row(model.feature_mean))
    lines.append(row(model.feature_scale))
    for r in emb.weights:
        lines.append(row(r))
    if model.head_weights is not None:
        for r in model.head_weights:
            lines.append(row(r))
        lines.append(row(model.head_bias))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    """Read a model file back; returns (TrainedModel, header-metadata dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MODEL_MAGIC:
        raise ConfigError(f"{path}: not a watershed model file")
    meta = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            key, _, value = ln[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif ln:
            body.append(np.array([float(tok) for tok in ln.split(",")]))
    input_dim = int(meta["input_dim"])
    embed_dim = int(meta["embed_dim"])
    head_classes = int(meta.get("head_classes", "0"))
    expected = 2 + input_dim + (embed_dim + 1 if head_classes else 0)
    if len(body) != expected:
        raise ConfigError(f"{path}: expected {expected} numeric rows, found {len(body)}")
    mean, scale = body[0], body[1]
    weights = np.vstack(body[2 : 2 + input_dim])
    head_w = head_b = None
    if head_classes:
        head_w = np.vstack(body[2 + input_dim : 2 + input_dim + embed_dim])
        head_b = body[-1]
    model = TrainedModel(
        embedding=LinearEmbedding(weights),
        feature_mean=mean,
        feature_scale=scale,
        loss_kind=meta.get("loss", "watershed"),
        head_weights=head_w,
        head_bias=head_b,
    )
    return model, meta
