"""Watershed (greedy 1-NN) classification and representation learning.

The watershed classifier labels unlabeled points by repeatedly attaching
the globally nearest unlabeled point to the labeled set; the resulting
labeling maximizes the margin between classes. This package implements the
classifier, a loss that trains linear embeddings to be consistent with it,
NCA and linear-softmax baselines, the batch-sampled majority-vote
evaluation protocol, synthetic datasets, diagnostics, and a CLI.
"""
from .core import (
    EPS_D,
    UNLABELED,
    ConfigError,
    DataFormatError,
    PointSet,
    RngState,
    Seed,
    distance,
    pairwise_distances,
)
from .datasets import (
    MoonsSpec,
    SpiralSpec,
    load_csv,
    load_idx,
    make_moons,
    make_spiral,
    save_csv,
)
from .estimator import WatershedEmbedding, WatershedKNNClassifier
from .evaluation import EvalConfig, accuracy, export_boundary_grid, predict
from .losses import (
    L_CAP,
    LossReport,
    linear_softmax_loss,
    nca_loss,
    watershed_loss_backward,
    watershed_loss_forward,
    watershed_loss_from_report,
)
from .propagation import (
    PropagationResult,
    SeedPlacement,
    SpanningTree,
    classify_one,
    cross_edge_count,
    margin,
    mst,
    propagate,
    shatter_check,
)
from .training import (
    CoordinateTrace,
    LinearEmbedding,
    TrainConfig,
    TrainReport,
    TrainedModel,
    load_model,
    sample_batch,
    save_model,
    train,
    train_coordinates,
)

__version__ = "0.1.0"
