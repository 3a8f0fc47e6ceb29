"""Label representations and the hierarchical label tree.

Labels are embedded by aggregating the feature rows of their positive
instances (unit-normalized), then recursively partitioned with a
balanced spherical k-means until clusters fit the leaf-size budget.
Every split is deterministic given the master seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import sparse
from .errors import FormatError
from .ioutil import read_json, write_json

TREE_FORMAT_VERSION = 1
MAX_LLOYD_ITERATIONS = 20
OBJECTIVE_TOLERANCE = 1e-4


def pifa_label_embeddings(y, x):
    """Aggregate positive-instance feature rows into one
    unit-normalized embedding per label.

    Parameters
    ----------
    y : SparseMatrix
        N x L binary relevance matrix (every stored value must be 1).
    x : SparseMatrix
        N x d instance feature matrix.

    Returns
    -------
    SparseMatrix
        L x d matrix whose rows are unit vectors, or zero rows for
        labels with no positive instances.
    """
    if y.n_rows != x.n_rows:
        raise ValueError(
            f"row mismatch: Y has {y.n_rows} instances, X has {x.n_rows}"
        )
    if y.nnz and not np.all(y.values == 1.0):
        bad = y.values[y.values != 1.0][0]
        raise ValueError(f"Y must be binary; found stored value {bad}")
    yt = y.transpose()
    rows, cols, vals = [], [], []
    buf = np.zeros(x.n_cols, dtype=np.float64)
    for label in range(yt.n_rows):
        members = yt.row(label).indices
        if members.size == 0:
            continue
        gather = sparse._span_indices(
            x.row_offsets[members], x.row_counts()[members]
        )
        touched = x.col_indices[gather]
        np.add.at(buf, touched, x.values[gather].astype(np.float64))
        idx = np.flatnonzero(buf)
        if idx.size:
            norm = math.sqrt(float(np.sum(buf[idx] ** 2)))
            rows.append(np.full(idx.size, label, dtype=np.int64))
            cols.append(idx.copy())
            vals.append(buf[idx] / norm)
        buf[touched] = 0.0
    return sparse.from_coo(
        np.concatenate(rows) if rows else [],
        np.concatenate(cols) if cols else [],
        np.concatenate(vals) if vals else [],
        y.n_cols,
        x.n_cols,
    )


def _normalized_dense(points):
    dense = points.to_dense()
    norms = np.linalg.norm(dense, axis=1)
    nonzero = norms > 0.0
    dense[nonzero] /= norms[nonzero, None]
    return dense, nonzero


def _farthest_point_centroids(p, candidates, k, seed):
    """Pick k seed rows: a random first pick, then repeatedly the row
    least similar to everything chosen so far (ties toward the smaller
    index).  Missing slots become zero centroids."""
    d = p.shape[1]
    centroids = np.zeros((k, d), dtype=np.float64)
    if candidates.size == 0:
        return centroids
    rng = np.random.default_rng(seed)
    first = candidates[int(rng.integers(candidates.size))]
    centroids[0] = p[first]
    max_sim = p[candidates] @ p[first]
    for j in range(1, min(k, candidates.size)):
        pick = candidates[int(np.argmin(max_sim))]
        centroids[j] = p[pick]
        max_sim = np.maximum(max_sim, p[candidates] @ p[pick])
    return centroids


def _balanced_assign(sims, zero_rows):
    """Greedy best-pair-first assignment under the +/-1 size schedule.

    Rows flagged in ``zero_rows`` are withheld from the greedy pass and
    appended round-robin to clusters with remaining capacity (D8).
    """
    m, k = sims.shape
    quota, remainder = divmod(m, k)
    sizes = np.zeros(k, dtype=np.int64)
    promoted = 0
    assign = np.full(m, -1, dtype=np.int32)

    def can_take(c):
        return sizes[c] < quota or (sizes[c] == quota and promoted < remainder)

    live = np.flatnonzero(~zero_rows)
    if live.size:
        pid = np.repeat(live, k)
        cid = np.tile(np.arange(k), live.size)
        flat = sims[live].ravel()
        order = np.lexsort((cid, pid, -flat))
        remaining = live.size
        for t in order:
            point, cluster = int(pid[t]), int(cid[t])
            if assign[point] != -1 or not can_take(cluster):
                continue
            assign[point] = cluster
            sizes[cluster] += 1
            if sizes[cluster] == quota + 1:
                promoted += 1
            remaining -= 1
            if remaining == 0:
                break
    cursor = 0
    for point in np.flatnonzero(zero_rows):
        while not can_take(cursor % k):
            cursor += 1
        assign[point] = cursor % k
        sizes[cursor % k] += 1
        if sizes[cursor % k] == quota + 1:
            promoted += 1
        cursor += 1
    return assign


def balanced_spherical_kmeans(points, k, seed):
    """Partition rows into k clusters whose sizes differ by at most one.

    Lloyd-style alternation between balanced greedy assignment and
    unit-normalized mean centroids, capped at 20 iterations or a
    relative objective change below 1e-4.
    """
    m = points.n_rows
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > m:
        raise ValueError(f"cannot split {m} points into {k} clusters")
    if k == 1:
        return np.zeros(m, dtype=np.int32)
    p, nonzero = _normalized_dense(points)
    zero_rows = ~nonzero
    centroids = _farthest_point_centroids(p, np.flatnonzero(nonzero), k, seed)
    assign = None
    prev_objective = None
    for _ in range(MAX_LLOYD_ITERATIONS):
        sims = p @ centroids.T
        new_assign = _balanced_assign(sims, zero_rows)
        objective = float(sims[np.arange(m), new_assign].sum())
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        if prev_objective is not None and abs(objective - prev_objective) <= (
            OBJECTIVE_TOLERANCE * max(1.0, abs(prev_objective))
        ):
            break
        prev_objective = objective
        centroids = np.zeros_like(centroids)
        np.add.at(centroids, assign, p)
        norms = np.linalg.norm(centroids, axis=1)
        centroids[norms > 0.0] /= norms[norms > 0.0, None]
    return assign


def _split_seed(seed, round_idx, cluster_idx):
    state = np.random.SeedSequence([seed, round_idx, cluster_idx]).generate_state(1)
    return int(state[0])


@dataclass
class LabelTree:
    """Hierarchy over labels produced by recursive balanced splits.

    ``levels[t]`` maps each node of generation t+1 to its parent at
    generation t; the final array maps labels to leaf clusters.  A
    depth-0 tree has no levels: all labels sit under the root.
    """

    branching: int
    n_labels: int
    levels: list = field(default_factory=list)

    @property
    def depth(self):
        return len(self.levels)

    def level_sizes(self):
        """Node counts per generation, ending with the label count."""
        sizes = [int(arr.max()) + 1 for arr in self.levels]
        return sizes + [self.n_labels]

    def children(self, level):
        """Arrays of child ids per parent node at ``level`` (cached)."""
        if not hasattr(self, "_children_cache"):
            self._children_cache = {}
        if level not in self._children_cache:
            arr = self.levels[level]
            n_parents = int(arr.max()) + 1
            order = np.argsort(arr, kind="stable")
            bounds = np.searchsorted(arr[order], np.arange(n_parents + 1))
            self._children_cache[level] = [
                order[bounds[p] : bounds[p + 1]].astype(np.int32)
                for p in range(n_parents)
            ]
        return self._children_cache[level]

    def label_nodes(self, level):
        """Map every label to its ancestor node at generation ``level``."""
        mapping = self.levels[-1]
        for t in range(self.depth - 2, level - 1, -1):
            mapping = self.levels[t][mapping]
        return mapping

    def validate(self):
        if self.branching < 2:
            raise ValueError("branching must be at least 2")
        if self.n_labels < 1:
            raise ValueError("tree must cover at least one label")
        for t, arr in enumerate(self.levels):
            if arr.size == 0:
                raise ValueError(f"level {t} is empty")
            if arr.min() < 0:
                raise ValueError(f"level {t} has negative parent ids")
            n_parents = int(arr.max()) + 1
            if np.unique(arr).size != n_parents:
                raise ValueError(f"level {t} leaves a parent childless")
            if t > 0 and n_parents != self.levels[t - 1].size:
                raise ValueError(
                    f"level {t} parent count {n_parents} does not match the "
                    f"{self.levels[t - 1].size} nodes above it"
                )
        if self.levels and self.levels[-1].size != self.n_labels:
            raise ValueError("final level must map every label")

    def save(self, dir_path):
        os.makedirs(dir_path, exist_ok=True)
        manifest = {
            "format_version": TREE_FORMAT_VERSION,
            "kind": "label_tree",
            "branching": self.branching,
            "depth": self.depth,
            "n_labels": self.n_labels,
            "level_sizes": self.level_sizes(),
        }
        write_json(os.path.join(dir_path, "manifest.json"), manifest)
        for t, arr in enumerate(self.levels):
            path = os.path.join(dir_path, f"level_{t:02d}.u32")
            with open(path, "wb") as fh:
                fh.write(arr.astype("<u4").tobytes())

    @classmethod
    def load(cls, dir_path):
        manifest = read_json(os.path.join(dir_path, "manifest.json"))
        if manifest.get("kind") != "label_tree":
            raise FormatError(f"{dir_path}: not a label tree directory")
        if manifest.get("format_version") != TREE_FORMAT_VERSION:
            raise FormatError(f"{dir_path}: unsupported format version")
        levels = []
        for t in range(manifest["depth"]):
            path = os.path.join(dir_path, f"level_{t:02d}.u32")
            with open(path, "rb") as fh:
                levels.append(np.frombuffer(fh.read(), dtype="<u4").astype(np.int32))
        tree = cls(manifest["branching"], manifest["n_labels"], levels)
        sizes = tree.level_sizes()
        if sizes != manifest["level_sizes"]:
            raise FormatError(f"{dir_path}: level sizes disagree with manifest")
        return tree


def tree_depth(n_labels, branching, max_leaf_size):
    """Number of split rounds needed: ceil(log_b(L / max_leaf_size))."""
    if n_labels <= max_leaf_size:
        return 0
    return math.ceil(math.log(n_labels / max_leaf_size) / math.log(branching))


def build_label_tree(z, branching=16, max_leaf_size=100, seed=0):
    """Recursively split label embeddings into a balanced tree.

    Every round splits every current cluster into up to ``branching``
    balanced parts; rounds continue until all clusters fit
    ``max_leaf_size``.  Zero-embedding labels are placed round-robin.
    """
    if branching < 2:
        raise ValueError(f"branching must be at least 2, got {branching}")
    if max_leaf_size < 1:
        raise ValueError(f"max_leaf_size must be at least 1, got {max_leaf_size}")
    n_labels = z.n_rows
    if n_labels < 1:
        raise ValueError("cannot build a tree over zero labels")
    clusters = [np.arange(n_labels, dtype=np.int64)]
    parent_arrays = []
    round_idx = 0
    while max(len(c) for c in clusters) > max_leaf_size:
        parents = []
        next_clusters = []
        for ci, members in enumerate(clusters):
            k = min(branching, len(members))
            if k == 1:
                parents.append(ci)
                next_clusters.append(members)
                continue
            assign = balanced_spherical_kmeans(
                z.take_rows(members), k, _split_seed(seed, round_idx, ci)
            )
            for c in range(k):
                parents.append(ci)
                next_clusters.append(members[assign == c])
        if round_idx > 0:
            parent_arrays.append(np.array(parents, dtype=np.int32))
        clusters = next_clusters
        round_idx += 1
    if round_idx == 0:
        return LabelTree(branching, n_labels, [])
    label_assign = np.zeros(n_labels, dtype=np.int32)
    for ci, members in enumerate(clusters):
        label_assign[members] = ci
    return LabelTree(branching, n_labels, parent_arrays + [label_assign])
