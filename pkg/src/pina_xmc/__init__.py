"""Tree-based extreme multi-label text classification with
neighborhood-enhanced features."""

from .cluster import LabelTree, build_label_tree, pifa_label_embeddings
from .errors import ConfigError, FormatError, NotFittedError, ParseError
from .estimators import NeighborAugmenter, TreeClassifier
from .linear import TrainConfig, XmcModel, train
from .metrics import evaluate, paired_t_test, precision_at_k, recall_at_k
from .pina import (
    NeighborPredictor,
    PretrainingTask,
    build_i2i_pretraining_task,
    build_naive_pretraining_task,
    build_pretraining_task,
    threshold_correlations,
    train_neighbor_predictor,
)
from .sparse import SparseMatrix, SparseVector, load_matrix, save_matrix
from .textvec import TextVectorizer

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FormatError",
    "LabelTree",
    "NeighborAugmenter",
    "NeighborPredictor",
    "NotFittedError",
    "ParseError",
    "PretrainingTask",
    "SparseMatrix",
    "SparseVector",
    "TextVectorizer",
    "TrainConfig",
    "TreeClassifier",
    "XmcModel",
    "build_i2i_pretraining_task",
    "build_label_tree",
    "build_naive_pretraining_task",
    "build_pretraining_task",
    "evaluate",
    "load_matrix",
    "paired_t_test",
    "pifa_label_embeddings",
    "precision_at_k",
    "recall_at_k",
    "save_matrix",
    "threshold_correlations",
    "train",
    "train_neighbor_predictor",
]
