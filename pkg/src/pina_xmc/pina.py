"""Neighborhood-aggregated feature enhancement.

The pretraining stage builds an augmented biadjacency matrix over
instances and labels, organizes both text collections into one corpus,
and trains a hierarchical linear model to predict each row's neighbors.
The enhancement stage then enriches any text's features with a weighted
aggregate of its predicted neighbors' features: ego block and aggregate
block are unit-normalized, concatenated, and renormalized.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import sparse
from .cluster import build_label_tree, pifa_label_embeddings
from .errors import FormatError
from .ioutil import read_json, write_json
from .linear import DEGENERATE_SCORE, TrainConfig, XmcModel, train
from .textvec import TextVectorizer

PREDICTOR_FORMAT_VERSION = 1
DEFAULT_NEIGHBORS = 5
DEFAULT_BEAM = 10


@dataclass
class PretrainingTask:
    """Inputs for neighbor-predictor training.

    ``b_pre`` pairs every pretraining input (rows: corpus_pre order)
    with its target output nodes (columns).  ``output_corpus`` carries
    the text of each output node so the enhancement stage can embed
    neighbors; ``output_row_map`` points output nodes back at their
    corpus_pre row where one exists (-1 otherwise), which routes
    externally supplied dense embeddings.
    """

    b_pre: sparse.SparseMatrix
    corpus_pre: list
    output_corpus: list
    output_row_map: np.ndarray
    n_instances: int
    n_labels: int

    def validate(self):
        if self.b_pre.n_rows != len(self.corpus_pre):
            raise ValueError(
                f"b_pre has {self.b_pre.n_rows} rows but corpus_pre holds "
                f"{len(self.corpus_pre)} texts"
            )
        if self.b_pre.n_cols != len(self.output_corpus):
            raise ValueError(
                f"b_pre has {self.b_pre.n_cols} columns but output_corpus holds "
                f"{len(self.output_corpus)} texts"
            )
        if self.output_row_map.shape != (self.b_pre.n_cols,):
            raise ValueError("output_row_map must have one entry per output node")
        if self.b_pre.nnz and not np.all(self.b_pre.values == 1.0):
            raise ValueError("b_pre must be binary")


def build_pretraining_task(instances, labels, y):
    """Assemble the augmented matrix [[B, I], [I, B^T]] and its corpus.

    Rows are the N instances followed by the L labels; columns are the
    L labels followed by the N instances.
    """
    instances = list(instances)
    labels = list(labels)
    n, l = len(instances), len(labels)
    if y.n_rows != n or y.n_cols != l:
        raise ValueError(
            f"Y has shape {y.shape}, expected ({n} instances, {l} labels)"
        )
    if y.nnz and not np.all(y.values == 1.0):
        raise ValueError("Y must be binary")
    b_pre = sparse.block_2x2(
        y, sparse.identity(n), sparse.identity(l), y.transpose()
    )
    row_map = np.concatenate(
        [np.arange(n, l + n, dtype=np.int64), np.arange(n, dtype=np.int64)]
    )
    return PretrainingTask(
        b_pre=b_pre,
        corpus_pre=instances + labels,
        output_corpus=labels + instances,
        output_row_map=row_map,
        n_instances=n,
        n_labels=l,
    )


def build_naive_pretraining_task(instances, labels, y):
    """Ablation: pretrain against B alone.

    Inputs are the instances only (label text never enters the
    vocabulary) and output nodes are the labels.
    """
    instances = list(instances)
    labels = list(labels)
    if y.n_rows != len(instances) or y.n_cols != len(labels):
        raise ValueError(
            f"Y has shape {y.shape}, expected ({len(instances)}, {len(labels)})"
        )
    if y.nnz and not np.all(y.values == 1.0):
        raise ValueError("Y must be binary")
    return PretrainingTask(
        b_pre=y,
        corpus_pre=instances,
        output_corpus=labels,
        output_row_map=np.full(len(labels), -1, dtype=np.int64),
        n_instances=len(instances),
        n_labels=len(labels),
    )


def build_i2i_pretraining_task(corr, texts):
    """Instance-to-instance variant: the binary correlation matrix is
    the pretraining target as-is and the output space is the instances
    themselves."""
    texts = list(texts)
    if corr.n_rows != len(texts) or corr.n_cols != len(texts):
        raise ValueError(
            f"correlation matrix has shape {corr.shape}, expected square over "
            f"{len(texts)} texts"
        )
    if corr.nnz and not np.all(corr.values == 1.0):
        raise ValueError("correlation matrix must be binary; threshold it first")
    return PretrainingTask(
        b_pre=corr,
        corpus_pre=texts,
        output_corpus=list(texts),
        output_row_map=np.arange(len(texts), dtype=np.int64),
        n_instances=len(texts),
        n_labels=0,
    )


def threshold_correlations(m, tau):
    """Binarize a weighted co-occurrence matrix: keep entries strictly
    above ``tau`` as ones."""
    rows, cols, vals = m.to_coo()
    keep = vals.astype(np.float64) > tau
    return sparse.from_coo(
        rows[keep], cols[keep], np.ones(int(keep.sum())), m.n_rows, m.n_cols
    )


def normalized_edge_weights(scores):
    """L1-normalize kept prediction scores into neighbor edge weights."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size and scores.min() <= 0.0:
        raise ValueError("scores must be positive")
    total = float(scores.sum())
    return scores / total if scores.size else scores


class EmbedderStack:
    """Statistical features plus an optional dense embedding block.

    The dense table is row-aligned to the pretraining corpus; texts
    outside that corpus may supply a per-call dense row, otherwise
    their dense block is zero.
    """

    def __init__(self, vectorizer, dense_table=None):
        self.vectorizer = vectorizer
        self.dense_table = dense_table

    @property
    def dense_dim(self):
        return 0 if self.dense_table is None else int(self.dense_table.shape[1])

    @property
    def dim(self):
        return self.vectorizer.dim + self.dense_dim

    def embed_text(self, text, dense_row=None):
        stat = self.vectorizer.transform_one(text)
        if self.dense_table is None:
            return stat
        if dense_row is None:
            dense_row = np.zeros(self.dense_dim, dtype=np.float32)
        dense_vec = sparse.SparseVector.from_dense(dense_row)
        indices = np.concatenate(
            [
                stat.indices.astype(np.int64),
                dense_vec.indices.astype(np.int64) + stat.dim,
            ]
        )
        values = np.concatenate([stat.values, dense_vec.values])
        return sparse.SparseVector(self.dim, indices.astype(np.int32), values)

    def embed_corpus(self, texts, row_map=None):
        """Embed texts whose dense rows (if any) come from the stored table."""
        stat = self.vectorizer.transform(texts)
        if self.dense_table is None:
            return stat
        dense = np.zeros((len(texts), self.dense_dim), dtype=np.float64)
        if row_map is not None:
            present = row_map >= 0
            dense[present] = self.dense_table[row_map[present]].astype(np.float64)
        return sparse.hstack(stat, sparse.from_dense(dense))


@dataclass
class NeighborPredictor:
    """A trained neighbor model over the pretraining output space."""

    model: XmcModel
    embedder: EmbedderStack
    output_corpus: list
    output_row_map: np.ndarray
    n_instances: int
    n_labels: int

    @property
    def n_outputs(self):
        return len(self.output_corpus)

    def _output_features(self):
        if not hasattr(self, "_f_out"):
            self._f_out = self.embedder.embed_corpus(
                self.output_corpus, self.output_row_map
            )
        return self._f_out

    def predict_neighbors(self, text, k=DEFAULT_NEIGHBORS, beam=DEFAULT_BEAM, dense_row=None):
        """Top-k predicted neighbors as (output node, edge weight).

        Prediction scores at or below the degenerate floor carry no
        signal and are dropped, so a predictor with nothing to say
        returns an empty set.  Kept scores are L1-normalized; the list
        comes back in descending weight order.
        """
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        x = self.embedder.embed_text(text, dense_row)
        ranked = self.model.predict(x, beam=beam, topk=k)
        kept = [(node, score) for node, score in ranked if score > DEGENERATE_SCORE]
        if not kept:
            return []
        weights = normalized_edge_weights([score for _, score in kept])
        return [(node, float(w)) for (node, _), w in zip(kept, weights)]

    def augment(self, texts, k=DEFAULT_NEIGHBORS, beam=DEFAULT_BEAM, dense_rows=None):
        """Enrich texts with aggregated neighbor features.

        Each output row is [normalized ego block ; normalized aggregate
        block], renormalized, so nonzero rows have unit norm and rows
        where both blocks are live put 1/sqrt(2) of their mass in each.
        Ground-truth labels play no part here: only text comes in.
        """
        texts = list(texts)
        if dense_rows is not None and len(dense_rows) != len(texts):
            raise ValueError("dense_rows must align with texts")
        f_out = self._output_features()
        dim = self.embedder.dim
        rows, cols, vals = [], [], []
        buf = np.zeros(dim, dtype=np.float64)
        for i, text in enumerate(texts):
            dense_row = None if dense_rows is None else dense_rows[i]
            ego = self.embedder.embed_text(text, dense_row).l2_normalize()
            neighbors = self.predict_neighbors(text, k=k, beam=beam, dense_row=dense_row)
            for node, weight in neighbors:
                row = f_out.row(node)
                buf[row.indices] += weight * row.values.astype(np.float64)
            agg_idx = np.flatnonzero(buf)
            agg = sparse.SparseVector.from_entries(dim, agg_idx, buf[agg_idx])
            agg = agg.l2_normalize()
            buf[agg_idx] = 0.0
            joint_idx = np.concatenate(
                [ego.indices.astype(np.int64), agg.indices.astype(np.int64) + dim]
            )
            joint_vals = np.concatenate(
                [ego.values.astype(np.float64), agg.values.astype(np.float64)]
            )
            norm = float(np.sqrt(np.sum(joint_vals**2)))
            if norm > 0.0:
                joint_vals /= norm
            rows.append(np.full(joint_idx.size, i, dtype=np.int64))
            cols.append(joint_idx.astype(np.int64))
            vals.append(joint_vals)
        return sparse.from_coo(
            np.concatenate(rows) if rows else [],
            np.concatenate(cols) if cols else [],
            np.concatenate(vals) if vals else [],
            len(texts),
            2 * dim,
        )

    @property
    def feature_dim(self):
        """Width of augmented rows."""
        return 2 * self.embedder.dim

    def save(self, dir_path):
        os.makedirs(dir_path, exist_ok=True)
        manifest = {
            "format_version": PREDICTOR_FORMAT_VERSION,
            "kind": "neighbor_predictor",
            "n_instances": self.n_instances,
            "n_labels": self.n_labels,
            "n_outputs": self.n_outputs,
            "stat_dim": self.embedder.vectorizer.dim,
            "dense_dim": self.embedder.dense_dim,
        }
        write_json(os.path.join(dir_path, "manifest.json"), manifest)
        self.model.save(os.path.join(dir_path, "model"))
        self.embedder.vectorizer.save(os.path.join(dir_path, "vectorizer"))
        with open(
            os.path.join(dir_path, "output_corpus.jsonl"), "w", encoding="utf-8"
        ) as fh:
            for text in self.output_corpus:
                fh.write(json.dumps(text))
                fh.write("\n")
        with open(os.path.join(dir_path, "output_row_map.i64"), "wb") as fh:
            fh.write(self.output_row_map.astype("<i8").tobytes())
        if self.embedder.dense_table is not None:
            with open(os.path.join(dir_path, "dense.f32"), "wb") as fh:
                fh.write(self.embedder.dense_table.astype("<f4").tobytes())

    @classmethod
    def load(cls, dir_path):
        manifest = read_json(os.path.join(dir_path, "manifest.json"))
        if manifest.get("kind") != "neighbor_predictor":
            raise FormatError(f"{dir_path}: not a neighbor-predictor directory")
        if manifest.get("format_version") != PREDICTOR_FORMAT_VERSION:
            raise FormatError(f"{dir_path}: unsupported format version")
        model = XmcModel.load(os.path.join(dir_path, "model"))
        vectorizer = TextVectorizer.load(os.path.join(dir_path, "vectorizer"))
        output_corpus = []
        with open(
            os.path.join(dir_path, "output_corpus.jsonl"), "r", encoding="utf-8"
        ) as fh:
            for line in fh:
                if line.strip():
                    output_corpus.append(json.loads(line))
        with open(os.path.join(dir_path, "output_row_map.i64"), "rb") as fh:
            row_map = np.frombuffer(fh.read(), dtype="<i8").astype(np.int64)
        dense_table = None
        dense_path = os.path.join(dir_path, "dense.f32")
        if manifest["dense_dim"]:
            with open(dense_path, "rb") as fh:
                flat = np.frombuffer(fh.read(), dtype="<f4")
            dense_table = flat.reshape(-1, manifest["dense_dim"]).astype(np.float32)
        embedder = EmbedderStack(vectorizer, dense_table)
        predictor = cls(
            model=model,
            embedder=embedder,
            output_corpus=output_corpus,
            output_row_map=row_map,
            n_instances=manifest["n_instances"],
            n_labels=manifest["n_labels"],
        )
        if len(output_corpus) != manifest["n_outputs"]:
            raise FormatError(f"{dir_path}: output corpus length mismatch")
        if model.n_labels != len(output_corpus):
            raise FormatError(
                f"{dir_path}: model covers {model.n_labels} outputs but the "
                f"corpus holds {len(output_corpus)}"
            )
        if model.feature_dim != embedder.dim:
            raise FormatError(
                f"{dir_path}: model feature dim {model.feature_dim} does not "
                f"match embedder dim {embedder.dim}"
            )
        return predictor


def train_neighbor_predictor(
    task,
    config=None,
    branching=16,
    max_leaf_size=100,
    vectorizer=None,
    dense_table=None,
):
    """Fit the vectorizer on the pretraining corpus, embed it, cluster
    the output space, and train the hierarchical neighbor model."""
    task.validate()
    config = config or TrainConfig()
    config.validate()
    if vectorizer is None:
        vectorizer = TextVectorizer()
    vectorizer.fit(task.corpus_pre)
    embedder = EmbedderStack(vectorizer, dense_table)
    features = embedder.embed_corpus(
        task.corpus_pre, np.arange(len(task.corpus_pre), dtype=np.int64)
    )
    z = pifa_label_embeddings(task.b_pre, features)
    tree = build_label_tree(z, branching, max_leaf_size, seed=config.seed)
    model = train(features, task.b_pre, tree, config)
    return NeighborPredictor(
        model=model,
        embedder=embedder,
        output_corpus=list(task.output_corpus),
        output_row_map=task.output_row_map.copy(),
        n_instances=task.n_instances,
        n_labels=task.n_labels,
    )
