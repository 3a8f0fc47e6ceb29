"""Estimator-style wrappers around the model-building functions.

These follow the fit/transform/predict conventions so pipelines can be
composed, cloned, and grid-searched; the heavy lifting stays in the
functional modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import sparse
from .cluster import build_label_tree, pifa_label_embeddings
from .errors import NotFittedError
from .linear import TrainConfig, train
from .metrics import rankings_from_scores
from .pina import (
    build_naive_pretraining_task,
    build_pretraining_task,
    train_neighbor_predictor,
)
from .textvec import TextVectorizer

AUGMENTER_VARIANTS = ("full", "naive")


def check_feature_matrix(x):
    """Validate a feature matrix argument."""
    if not isinstance(x, sparse.SparseMatrix):
        raise TypeError(f"expected a SparseMatrix, got {type(x).__name__}")
    x.validate()
    return x


def check_label_matrix(y, n_rows=None):
    """Validate a binary label matrix argument."""
    if not isinstance(y, sparse.SparseMatrix):
        raise TypeError(f"expected a SparseMatrix, got {type(y).__name__}")
    y.validate()
    if y.nnz and not np.all(y.values == 1.0):
        raise ValueError("label matrix must be binary")
    if n_rows is not None and y.n_rows != n_rows:
        raise ValueError(
            f"label matrix covers {y.n_rows} rows, expected {n_rows}"
        )
    return y


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before use"
        )


class TreeClassifier(BaseEstimator):
    """Hierarchical linear classifier over a clustered label space."""

    def __init__(
        self,
        branching=16,
        max_leaf_size=100,
        loss="squared_hinge",
        regularization=1.0,
        tol=1e-3,
        max_iter=100,
        weight_prune_threshold=1e-4,
        beam=10,
        seed=0,
    ):
        self.branching = branching
        self.max_leaf_size = max_leaf_size
        self.loss = loss
        self.regularization = regularization
        self.tol = tol
        self.max_iter = max_iter
        self.weight_prune_threshold = weight_prune_threshold
        self.beam = beam
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            regularization=self.regularization,
            loss=self.loss,
            weight_prune_threshold=self.weight_prune_threshold,
            tol=self.tol,
            max_iter=self.max_iter,
            seed=self.seed,
        )

    def fit(self, x, y):
        x = check_feature_matrix(x)
        y = check_label_matrix(y, n_rows=x.n_rows)
        config = self._train_config()
        config.validate()
        z = pifa_label_embeddings(y, x)
        tree = build_label_tree(
            z, branching=self.branching, max_leaf_size=self.max_leaf_size, seed=self.seed
        )
        self.model_ = train(x, y, tree, config)
        return self

    def predict_scores(self, x, topk=10):
        """Sparse score matrix holding each row's top predictions."""
        check_is_fitted(self, "model_")
        x = check_feature_matrix(x)
        return self.model_.predict_all(x, beam=self.beam, topk=topk)

    def predict(self, x, topk=10):
        """Ranked label ids per row (score descending, ties to smaller id)."""
        return rankings_from_scores(self.predict_scores(x, topk=topk), topk)


class NeighborAugmenter(BaseEstimator, TransformerMixin):
    """Feature transformer backed by a trained neighbor predictor.

    ``fit`` pretrains the neighbor model from training texts, their
    label matrix, and the label descriptions; ``transform`` then maps
    any texts to enriched features without touching labels.
    """

    def __init__(
        self,
        k=5,
        beam=10,
        branching=16,
        max_leaf_size=100,
        loss="squared_hinge",
        regularization=1.0,
        tol=1e-3,
        max_iter=100,
        weight_prune_threshold=1e-4,
        vectorizer_mode="tfidf",
        min_df=1,
        variant="full",
        seed=0,
    ):
        self.k = k
        self.beam = beam
        self.branching = branching
        self.max_leaf_size = max_leaf_size
        self.loss = loss
        self.regularization = regularization
        self.tol = tol
        self.max_iter = max_iter
        self.weight_prune_threshold = weight_prune_threshold
        self.vectorizer_mode = vectorizer_mode
        self.min_df = min_df
        self.variant = variant
        self.seed = seed

    def fit(self, texts, y=None, label_texts=None, dense_table=None):
        if y is None or label_texts is None:
            raise ValueError("fit requires the label matrix and label texts")
        if self.variant not in AUGMENTER_VARIANTS:
            raise ValueError(
                f"variant must be one of {AUGMENTER_VARIANTS}, got {self.variant!r}"
            )
        texts = list(texts)
        label_texts = list(label_texts)
        y = check_label_matrix(y, n_rows=len(texts))
        builder = (
            build_pretraining_task
            if self.variant == "full"
            else build_naive_pretraining_task
        )
        task = builder(texts, label_texts, y)
        config = TrainConfig(
            regularization=self.regularization,
            loss=self.loss,
            weight_prune_threshold=self.weight_prune_threshold,
            tol=self.tol,
            max_iter=self.max_iter,
            seed=self.seed,
        )
        self.predictor_ = train_neighbor_predictor(
            task,
            config,
            branching=self.branching,
            max_leaf_size=self.max_leaf_size,
            vectorizer=TextVectorizer(mode=self.vectorizer_mode, min_df=self.min_df),
            dense_table=dense_table,
        )
        return self

    def transform(self, texts, dense_rows=None):
        check_is_fitted(self, "predictor_")
        return self.predictor_.augment(
            list(texts), k=self.k, beam=self.beam, dense_rows=dense_rows
        )
