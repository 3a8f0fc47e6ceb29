"""Hierarchical linear one-versus-all classifiers.

Training walks the label tree top-down.  Each tree node owns a binary
classifier trained only on the instances that touch its parent
(teacher-forced candidate sets), solved by cyclic coordinate descent
with a monotone line search.  Inference is beam search over the same
levels; per-node raw margins are squashed through a logistic so path
scores are products in (0, 1].
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import sparse
from .cluster import LabelTree
from .errors import FormatError
from .ioutil import read_json, write_json

MODEL_FORMAT_VERSION = 1
LOSSES = ("squared_hinge", "logistic")

# Columns trained without a single positive instance carry no ranking
# signal; they receive this fixed score so they never win ties.
DEGENERATE_SCORE = 1e-9

FLAG_OK = 0
FLAG_NO_POSITIVES = 1
FLAG_NO_NEGATIVES = 2


@dataclass
class TrainConfig:
    """Solver hyperparameters.

    The objective per column is 0.5 * regularization * ||w||^2 plus the
    sum of per-instance losses.  Convergence is declared when the
    largest coordinate update in a full sweep drops to ``tol``.
    """

    regularization: float = 1.0
    loss: str = "squared_hinge"
    weight_prune_threshold: float = 1e-4
    tol: float = 1e-3
    max_iter: int = 100
    seed: int = 0

    def validate(self):
        if self.regularization <= 0.0:
            raise ValueError(f"regularization must be positive, got {self.regularization}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.weight_prune_threshold < 0.0:
            raise ValueError("weight_prune_threshold must be non-negative")
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _sigmoid_array(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_values(margins, squared_hinge):
    if squared_hinge:
        viol = np.maximum(0.0, 1.0 - margins)
        return viol * viol
    return np.logaddexp(0.0, -margins)


def solver_objective(x, targets, w, config):
    """Full objective value for one or more weight columns (test oracle hook)."""
    w = np.atleast_2d(np.asarray(w, dtype=np.float64).T).T
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64).T).T
    margins = targets * (x.to_dense() @ w)
    losses = _loss_values(margins, config.loss == "squared_hinge").sum(axis=0)
    reg = 0.5 * config.regularization * np.sum(w * w, axis=0)
    out = reg + losses
    return float(out[0]) if out.size == 1 else out


def _solve_group(x_sub, targets, config):
    """Train several columns sharing one candidate-instance set.

    Parameters
    ----------
    x_sub : SparseMatrix
        Candidate instances, n x d.
    targets : ndarray
        (n, c) array of +/-1 labels, one column per classifier.

    Returns
    -------
    ndarray
        (d, c) float64 weight matrix.
    """
    n, c = targets.shape
    w = np.zeros((x_sub.n_cols, c), dtype=np.float64)
    if n == 0 or c == 0:
        return w
    xt = x_sub.transpose()
    lam = config.regularization
    squared_hinge = config.loss == "squared_hinge"
    margins = np.zeros((n, c), dtype=np.float64)
    features = np.flatnonzero(np.diff(xt.row_offsets) > 0)
    offsets = xt.row_offsets
    for _ in range(config.max_iter):
        worst = 0.0
        for j in features:
            s, e = int(offsets[j]), int(offsets[j + 1])
            rows = xt.col_indices[s:e]
            vals = xt.values[s:e].astype(np.float64)
            tj = targets[rows]
            m = tj * margins[rows]
            if squared_hinge:
                viol = 1.0 - m
                active = viol > 0.0
                grad = lam * w[j] - 2.0 * np.sum(
                    np.where(active, viol, 0.0) * tj * vals[:, None], axis=0
                )
                curv = lam + 2.0 * np.sum(
                    (vals * vals)[:, None] * active, axis=0
                )
            else:
                sig = _sigmoid_array(-m)
                grad = lam * w[j] - np.sum(tj * vals[:, None] * sig, axis=0)
                curv = lam + 0.25 * float(np.sum(vals * vals))
            delta = -grad / curv
            if not np.any(delta):
                continue
            # Monotone halving line search on the exact restricted objective.
            tv = tj * vals[:, None]
            base = _loss_values(m, squared_hinge)
            bad = None
            for _ in range(30):
                trial_m = m + tv * delta[None, :]
                df = lam * (w[j] * delta + 0.5 * delta * delta) + np.sum(
                    _loss_values(trial_m, squared_hinge) - base, axis=0
                )
                bad = df > 1e-12
                if not bad.any():
                    break
                delta[bad] *= 0.5
            if bad is not None and bad.any():
                delta[bad] = 0.0
            if not np.any(delta):
                continue
            w[j] += delta
            margins[rows] += vals[:, None] * delta[None, :]
            worst = max(worst, float(np.max(np.abs(delta))))
        if worst <= config.tol:
            break
    return w


def train_binary_classifier(x, targets, config=None):
    """Train one L2-regularized binary classifier.

    Returns ``(weight, degenerate)`` where ``degenerate`` is True when
    the targets contain only one class (the regularized solution is
    still returned and well-defined).
    """
    config = config or TrainConfig()
    config.validate()
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 1 or targets.size != x.n_rows:
        raise ValueError("targets must be a 1-D array with one entry per instance")
    if targets.size and not np.all(np.abs(targets) == 1.0):
        raise ValueError("targets must be +/-1")
    w = _solve_group(x, targets[:, None], config)[:, 0]
    idx = np.flatnonzero(np.abs(w) >= config.weight_prune_threshold)
    weight = sparse.SparseVector.from_entries(x.n_cols, idx, w[idx])
    degenerate = targets.size == 0 or np.all(targets == 1.0) or np.all(targets == -1.0)
    return weight, degenerate


@dataclass
class XmcModel:
    """A trained tree of linear classifiers.

    ``layers[t]`` holds weight columns for the nodes at tree level t
    (the final layer has one column per label).  ``flags[t]`` marks
    degenerate columns: 1 = no positive instances (scored at the fixed
    floor), 2 = no negatives (trained normally, flagged for audit).
    """

    tree: LabelTree
    layers: list
    flags: list
    feature_dim: int
    config: TrainConfig
    _scorers: list = field(default=None, repr=False, compare=False)

    @property
    def n_labels(self):
        return self.tree.n_labels

    def _layer_scorer(self, t):
        if self._scorers is None:
            self._scorers = [None] * len(self.layers)
        if self._scorers[t] is None:
            self._scorers[t] = self.layers[t].transpose()
        return self._scorers[t]

    def _score_nodes(self, t, nodes, x_dense):
        scorer = self._layer_scorer(t)
        flags = self.flags[t]
        offsets = scorer.row_offsets
        out = np.empty(nodes.size, dtype=np.float64)
        for i, node in enumerate(nodes):
            if flags[node] == FLAG_NO_POSITIVES:
                out[i] = DEGENERATE_SCORE
                continue
            s, e = int(offsets[node]), int(offsets[node + 1])
            raw = float(
                np.dot(
                    scorer.values[s:e].astype(np.float64),
                    x_dense[scorer.col_indices[s:e]],
                )
            )
            out[i] = _sigmoid(raw)
        return out

    def predict(self, x, beam=10, topk=10):
        """Beam-search the tree; returns [(label, path_score)] sorted by
        (score desc, label asc), at most ``topk`` entries."""
        if beam is not None and beam < 1:
            raise ValueError(f"beam must be at least 1, got {beam}")
        if topk < 1:
            raise ValueError(f"topk must be at least 1, got {topk}")
        if x.dim != self.feature_dim:
            raise ValueError(
                f"input has dimension {x.dim}, model expects {self.feature_dim}"
            )
        x_dense = np.zeros(self.feature_dim, dtype=np.float64)
        x_dense[x.indices] = x.values.astype(np.float64)
        depth = self.tree.depth
        nodes = np.arange(self.layers[0].n_cols, dtype=np.int32)
        paths = self._score_nodes(0, nodes, x_dense)
        for t in range(1, depth + 1):
            if beam is not None and nodes.size > beam:
                keep = np.lexsort((nodes, -paths))[:beam]
                keep.sort()
                nodes, paths = nodes[keep], paths[keep]
            children = self.tree.children(t - 1)
            child_nodes = np.concatenate([children[p] for p in nodes])
            parent_paths = np.concatenate(
                [np.full(children[p].size, paths[i]) for i, p in enumerate(nodes)]
            )
            nodes = child_nodes
            paths = parent_paths * self._score_nodes(t, nodes, x_dense)
        order = np.lexsort((nodes, -paths))[:topk]
        return [(int(nodes[i]), float(paths[i])) for i in order]

    def predict_exhaustive(self, x, topk=10):
        """Score every label via full level-wise products (no pruning)."""
        return self.predict(x, beam=None, topk=topk)

    def predict_all(self, x_matrix, beam=10, topk=10):
        """Predict each row of a matrix; returns an N x L score matrix."""
        if x_matrix.n_cols != self.feature_dim:
            raise ValueError(
                f"input has dimension {x_matrix.n_cols}, model expects {self.feature_dim}"
            )
        rows, cols, vals = [], [], []
        for i in range(x_matrix.n_rows):
            for label, score in self.predict(x_matrix.row(i), beam=beam, topk=topk):
                rows.append(i)
                cols.append(label)
                vals.append(score)
        return sparse.from_coo(rows, cols, vals, x_matrix.n_rows, self.n_labels)

    def save(self, dir_path):
        save_model(self, dir_path)

    @classmethod
    def load(cls, dir_path):
        return load_model(dir_path)


def _binarize_membership(rows, cols, n_rows, n_cols):
    m = sparse.from_coo(rows, cols, np.ones(len(rows)), n_rows, n_cols)
    m.values[:] = 1.0
    return m


def train(x, y, tree, config=None):
    """Train the full hierarchical model.

    Level 0 classifiers see every instance; deeper classifiers see only
    instances whose ground-truth labels touch the parent node, with
    siblings under the same parent as negatives.
    """
    config = config or TrainConfig()
    config.validate()
    if y.n_rows != x.n_rows:
        raise ValueError(f"X has {x.n_rows} rows but Y has {y.n_rows}")
    if y.n_cols != tree.n_labels:
        raise ValueError(
            f"Y has {y.n_cols} labels but the tree covers {tree.n_labels}"
        )
    if y.nnz and not np.all(y.values == 1.0):
        raise ValueError("Y must be binary")
    n = x.n_rows
    sizes = tree.level_sizes()
    depth = tree.depth
    y_rows, y_cols, _ = y.to_coo()
    layers = []
    flags = []
    prev_members = None
    for t in range(depth + 1):
        n_cols = sizes[t]
        node_of_label = tree.label_nodes(t) if t < depth else None
        node_ids = node_of_label[y_cols] if node_of_label is not None else y_cols
        membership = _binarize_membership(y_rows, node_ids, n, n_cols)
        node_members = membership.transpose()
        if t == 0:
            groups = [(np.arange(n, dtype=np.int64), np.arange(n_cols, dtype=np.int32))]
        else:
            children = tree.children(t - 1)
            groups = [
                (prev_members.row(p).indices.astype(np.int64), children[p])
                for p in range(sizes[t - 1])
            ]
        layer_flags = np.zeros(n_cols, dtype=np.uint8)
        entry_rows, entry_cols, entry_vals = [], [], []
        for group_rows, group_cols in groups:
            targets = np.full((group_rows.size, group_cols.size), -1.0)
            pos_counts = np.zeros(group_cols.size, dtype=np.int64)
            for local, node in enumerate(group_cols):
                pos = node_members.row(int(node)).indices
                locs = np.searchsorted(group_rows, pos)
                targets[locs, local] = 1.0
                pos_counts[local] = pos.size
            no_pos = pos_counts == 0
            no_neg = (~no_pos) & (pos_counts == group_rows.size)
            layer_flags[group_cols[no_pos]] = FLAG_NO_POSITIVES
            layer_flags[group_cols[no_neg]] = FLAG_NO_NEGATIVES
            trainable = np.flatnonzero(~no_pos)
            if trainable.size == 0 or group_rows.size == 0:
                continue
            w = _solve_group(x.take_rows(group_rows), targets[:, trainable], config)
            w[np.abs(w) < config.weight_prune_threshold] = 0.0
            feat_idx, local_idx = np.nonzero(w)
            entry_rows.append(feat_idx)
            entry_cols.append(group_cols[trainable][local_idx])
            entry_vals.append(w[feat_idx, local_idx])
        layer = sparse.from_coo(
            np.concatenate(entry_rows) if entry_rows else [],
            np.concatenate(entry_cols) if entry_cols else [],
            np.concatenate(entry_vals) if entry_vals else [],
            x.n_cols,
            n_cols,
        )
        # A column pruned to nothing carries no signal; give it the floor
        # score so the nnz>0-or-flagged invariant holds.
        empty = np.diff(layer.transpose().row_offsets) == 0
        layer_flags[empty & (layer_flags == FLAG_OK)] = FLAG_NO_POSITIVES
        layers.append(layer)
        flags.append(layer_flags)
        prev_members = node_members
    return XmcModel(tree, layers, flags, x.n_cols, config)


def save_model(model, dir_path):
    os.makedirs(dir_path, exist_ok=True)
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "xmc_model",
        "feature_dim": model.feature_dim,
        "n_labels": model.n_labels,
        "depth": model.tree.depth,
        "layer_sizes": [layer.n_cols for layer in model.layers],
        "config": asdict(model.config),
    }
    write_json(os.path.join(dir_path, "manifest.json"), manifest)
    model.tree.save(os.path.join(dir_path, "tree"))
    layer_dir = os.path.join(dir_path, "layers")
    os.makedirs(layer_dir, exist_ok=True)
    for t, layer in enumerate(model.layers):
        layer.save(os.path.join(layer_dir, f"layer_{t:02d}.xmcm"))
        with open(os.path.join(layer_dir, f"flags_{t:02d}.u8"), "wb") as fh:
            fh.write(model.flags[t].astype(np.uint8).tobytes())


def load_model(dir_path):
    manifest = read_json(os.path.join(dir_path, "manifest.json"))
    if manifest.get("kind") != "xmc_model":
        raise FormatError(f"{dir_path}: not a model directory")
    if manifest.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{dir_path}: unsupported format version")
    tree = LabelTree.load(os.path.join(dir_path, "tree"))
    tree.validate()
    config = TrainConfig(**manifest["config"])
    layers = []
    flags = []
    sizes = tree.level_sizes()
    if manifest["layer_sizes"] != sizes:
        raise FormatError(f"{dir_path}: layer sizes disagree with the tree")
    for t in range(tree.depth + 1):
        layer = sparse.load_matrix(os.path.join(dir_path, "layers", f"layer_{t:02d}.xmcm"))
        if layer.n_rows != manifest["feature_dim"] or layer.n_cols != sizes[t]:
            raise FormatError(
                f"{dir_path}: layer {t} has shape {layer.shape}, expected "
                f"({manifest['feature_dim']}, {sizes[t]})"
            )
        with open(os.path.join(dir_path, "layers", f"flags_{t:02d}.u8"), "rb") as fh:
            flag = np.frombuffer(fh.read(), dtype=np.uint8)
        if flag.size != sizes[t]:
            raise FormatError(f"{dir_path}: flag array {t} has wrong length")
        if flag.size and flag.max() > FLAG_NO_NEGATIVES:
            raise FormatError(f"{dir_path}: flag array {t} has invalid values")
        layers.append(layer)
        flags.append(flag)
    return XmcModel(tree, layers, flags, manifest["feature_dim"], config)
