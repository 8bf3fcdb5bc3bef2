"""Scikit-learn style estimators wrapping the functional modules.

WatershedKNNClassifier is the user-facing classifier: fit stores (and
optionally embeds) the training data, predict runs the majority-vote 1-NN
protocol. WatershedEmbedding is the matching transformer for representation
learning. Both follow the usual conventions (get_params/set_params via
BaseEstimator, trailing-underscore fitted attributes, check_is_fitted), so
they compose with pipelines and model selection from the wider ecosystem.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .core import ConfigError, PointSet
from .evaluation import EvalConfig, predict
from .training import TrainConfig, TrainedModel, train


def _encode_labels(y):
    classes, encoded = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise ConfigError("need at least 2 classes")
    return classes, encoded.astype(np.int64)


class WatershedKNNClassifier(ClassifierMixin, BaseEstimator):
    """Greedy 1-NN (watershed) classifier, optionally with a learned linear
    embedding.

    With embed_dim=None the classifier is non-parametric: fit memorizes the
    training data and predict majority-votes 1-NN over sampled reference
    batches. With an integer embed_dim, fit first trains a linear embedding
    with the chosen loss (watershed, nca, or linear) and inference runs in
    the embedded space; the linear baseline predicts with its softmax head
    instead, since that is a linear classifier's own inference rule.

    n_seeds is the per-class seed count of the watershed loss and the only
    capacity knob of the classifier itself.
    """

    def __init__(
        self,
        n_seeds=1,
        embed_dim=None,
        loss="watershed",
        batch_size=None,
        n_batches=16,
        learning_rate=0.1,
        momentum=0.0,
        max_epochs=100,
        patience=20,
        valid_fraction=0.2,
        eval_batches=16,
        eval_batch_size=None,
        standardize=True,
        random_state=0,
    ):
        self.n_seeds = n_seeds
        self.embed_dim = embed_dim
        self.loss = loss
        self.batch_size = batch_size
        self.n_batches = n_batches
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.max_epochs = max_epochs
        self.patience = patience
        self.valid_fraction = valid_fraction
        self.eval_batches = eval_batches
        self.eval_batch_size = eval_batch_size
        self.standardize = standardize
        self.random_state = random_state

    def _default_batch(self, n):
        return min(2040, n) if self.batch_size is None else self.batch_size

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = _encode_labels(y)
        self.n_features_in_ = X.shape[1]
        data = PointSet(X, encoded)
        if self.embed_dim is None:
            if self.standardize:
                mean = X.mean(axis=0)
                std = X.std(axis=0)
                scale = np.where(std == 0.0, 1.0, std)
            else:
                mean = np.zeros(X.shape[1])
                scale = np.ones(X.shape[1])
            ident = TrainedModel.identity(X.shape[1])
            self.model_ = TrainedModel(
                embedding=ident.embedding, feature_mean=mean, feature_scale=scale
            )
            self.train_report_ = None
        else:
            config = TrainConfig(
                loss_kind=self.loss,
                n_seeds=self.n_seeds,
                embed_dim=self.embed_dim,
                batch_size=self._default_batch(
                    X.shape[0] - int(round(X.shape[0] * self.valid_fraction))
                ),
                n_batches=self.n_batches,
                learning_rate=self.learning_rate,
                momentum=self.momentum,
                max_epochs=self.max_epochs,
                patience=self.patience,
                valid_fraction=self.valid_fraction,
                rng_seed=self.random_state,
                standardize=self.standardize,
            )
            self.train_report_ = train(data, config)
            self.model_ = self.train_report_.model
        self.train_points_ = data
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        if self.model_.loss_kind == "linear" and self.model_.head_weights is not None:
            encoded = self.model_.predict_linear(X)
        else:
            config = EvalConfig(
                n_batches=self.eval_batches,
                batch_size=(
                    min(2040, self.train_points_.n)
                    if self.eval_batch_size is None
                    else self.eval_batch_size
                ),
                rng_seed=self.random_state,
            )
            encoded = predict(X, self.train_points_, self.model_, config)
        return self.classes_[encoded]


class WatershedEmbedding(TransformerMixin, BaseEstimator):
    """Linear embedding trained to make greedy 1-NN propagation reproduce the
    labels (or with the nca/linear baseline losses). transform projects new
    data into the learned space."""

    def __init__(
        self,
        embed_dim=2,
        loss="watershed",
        n_seeds=1,
        batch_size=None,
        n_batches=16,
        learning_rate=0.1,
        momentum=0.0,
        max_epochs=100,
        patience=20,
        valid_fraction=0.2,
        standardize=True,
        random_state=0,
    ):
        self.embed_dim = embed_dim
        self.loss = loss
        self.n_seeds = n_seeds
        self.batch_size = batch_size
        self.n_batches = n_batches
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.max_epochs = max_epochs
        self.patience = patience
        self.valid_fraction = valid_fraction
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = _encode_labels(y)
        self.n_features_in_ = X.shape[1]
        n_train = X.shape[0] - int(round(X.shape[0] * self.valid_fraction))
        config = TrainConfig(
            loss_kind=self.loss,
            n_seeds=self.n_seeds,
            embed_dim=self.embed_dim,
            batch_size=min(2040, n_train) if self.batch_size is None else self.batch_size,
            n_batches=self.n_batches,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            max_epochs=self.max_epochs,
            patience=self.patience,
            valid_fraction=self.valid_fraction,
            rng_seed=self.random_state,
            standardize=self.standardize,
        )
        self.train_report_ = train(PointSet(X, encoded), config)
        self.model_ = self.train_report_.model
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return self.model_.transform(X)
