"""Solver and hierarchical model tests: grid oracle, beam equivalence,
candidate-set semantics, byte-stable serialization."""

import math

import numpy as np
import pytest

from modelgen import random_input, random_model
from pina_xmc import sparse
from pina_xmc.cluster import LabelTree, build_label_tree
from pina_xmc.errors import FormatError
from pina_xmc.linear import (
    DEGENERATE_SCORE,
    FLAG_NO_NEGATIVES,
    FLAG_NO_POSITIVES,
    TrainConfig,
    XmcModel,
    load_model,
    solver_objective,
    train,
    train_binary_classifier,
)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


class TestBinarySolver:
    def test_separable_points_get_positive_margins(self):
        x = sparse.from_dense([[1.0, 0.0], [0.9, 0.2], [-1.0, 0.1], [-0.8, -0.3]])
        targets = [1.0, 1.0, -1.0, -1.0]
        weight, degenerate = train_binary_classifier(x, targets)
        assert not degenerate
        for i, t in enumerate(targets):
            assert t * sparse.row_dot(weight, x.row(i)) > 0.0

    def test_all_negative_targets(self):
        x = sparse.from_dense([[1.0], [1.0], [1.0]])
        weight, degenerate = train_binary_classifier(x, [-1.0, -1.0, -1.0])
        assert degenerate
        probe = sparse.SparseVector.from_dense([1.0])
        assert sparse.row_dot(weight, probe) < 0.0

    def test_bad_targets_rejected(self):
        x = sparse.from_dense([[1.0]])
        with pytest.raises(ValueError, match=r"\+/-1"):
            train_binary_classifier(x, [0.5])

    @pytest.mark.parametrize("loss", ["squared_hinge", "logistic"])
    def test_objective_within_tolerance_of_grid_optimum(self, loss):
        x = sparse.from_dense(
            [[1.0, 0.0], [2.0, 1.0], [-1.0, 0.5], [0.0, -1.0], [0.5, 0.5]]
        )
        targets = np.array([1.0, 1.0, -1.0, -1.0, 1.0])
        config = TrainConfig(loss=loss, weight_prune_threshold=0.0, tol=1e-5)
        weight, _ = train_binary_classifier(x, targets, config)
        got = solver_objective(x, targets, weight.to_dense(), config)
        grid = np.arange(-3.0, 3.0 + 1e-9, 0.01)
        w0, w1 = np.meshgrid(grid, grid, indexing="ij")
        candidates = np.stack([w0.ravel(), w1.ravel()])
        margins = targets[:, None] * (x.to_dense() @ candidates)
        if loss == "squared_hinge":
            losses = np.maximum(0.0, 1.0 - margins) ** 2
        else:
            losses = np.logaddexp(0.0, -margins)
        objectives = losses.sum(axis=0) + 0.5 * np.sum(candidates**2, axis=0)
        assert got <= objectives.min() + 1e-3

    def test_config_validation(self):
        with pytest.raises(ValueError, match="regularization"):
            TrainConfig(regularization=0.0).validate()
        with pytest.raises(ValueError, match="loss"):
            TrainConfig(loss="perceptron").validate()
        with pytest.raises(ValueError, match="tol"):
            TrainConfig(tol=-1.0).validate()


def manual_model(columns, n_labels):
    """Depth-0 model with the given weight columns (one per label)."""
    tree = LabelTree(branching=2, n_labels=n_labels, levels=[])
    layer = sparse.from_dense(np.array(columns).T)
    flags = [np.zeros(n_labels, dtype=np.uint8)]
    return XmcModel(tree, [layer], flags, layer.n_rows, TrainConfig())


class TestPredict:
    def test_worked_sigmoid_example(self):
        model = manual_model([[1.0, 0.0], [0.0, 1.0]], 2)
        x = sparse.SparseVector.from_dense([1.0, 0.0])
        ranked = model.predict(x, beam=2, topk=2)
        assert ranked[0][0] == 0
        assert ranked[0][1] == pytest.approx(sigmoid(1.0), abs=1e-9)
        assert ranked[1][1] == pytest.approx(0.5, abs=1e-9)

    def test_scores_sorted_and_tie_broken_by_label(self):
        model = manual_model([[1.0, 0.0], [1.0, 0.0], [0.5, 0.0]], 3)
        ranked = model.predict(sparse.SparseVector.from_dense([1.0, 0.0]), topk=3)
        assert [lab for lab, _ in ranked] == [0, 1, 2]

    def test_topk_beyond_label_count(self):
        model = manual_model([[1.0], [2.0]], 2)
        ranked = model.predict(sparse.SparseVector.from_dense([1.0]), topk=10)
        assert len(ranked) == 2

    def test_bad_beam_topk(self):
        model = manual_model([[1.0]], 1)
        x = sparse.SparseVector.from_dense([1.0])
        with pytest.raises(ValueError):
            model.predict(x, beam=0)
        with pytest.raises(ValueError):
            model.predict(x, topk=0)

    def test_dimension_mismatch(self):
        model = manual_model([[1.0]], 1)
        with pytest.raises(ValueError, match="dimension"):
            model.predict(sparse.SparseVector.from_dense([1.0, 2.0]))

    def test_degenerate_column_gets_floor_score(self):
        model = manual_model([[1.0], [1.0]], 2)
        model.flags[0][1] = FLAG_NO_POSITIVES
        ranked = model.predict(sparse.SparseVector.from_dense([5.0]), topk=2)
        assert ranked[0][0] == 0
        assert ranked[1] == (1, DEGENERATE_SCORE)

    def test_beam_full_width_matches_exhaustive(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            model = random_model(rng)
            width = max(model.tree.level_sizes())
            for _ in range(3):
                x = random_input(rng, model.feature_dim)
                a = model.predict(x, beam=width, topk=model.n_labels)
                b = model.predict_exhaustive(x, topk=model.n_labels)
                assert a == b

    def test_mean_recall_non_decreasing_in_beam(self):
        rng = np.random.default_rng(21)
        beams = [1, 2, 4, 8, 64]
        totals = np.zeros(len(beams))
        count = 0
        for _ in range(30):
            model = random_model(rng, flag_rate=0.0)
            for _ in range(4):
                x = random_input(rng, model.feature_dim)
                truth = {lab for lab, _ in model.predict_exhaustive(x, topk=5)}
                for bi, beam in enumerate(beams):
                    got = {lab for lab, _ in model.predict(x, beam=beam, topk=5)}
                    totals[bi] += len(got & truth) / len(truth)
                count += 1
        means = totals / count
        assert np.all(np.diff(means) >= -1e-12)
        assert means[-1] == pytest.approx(1.0)


class TestTrain:
    def test_depth_zero_separable(self):
        x = sparse.from_dense([[1.0, 0.0], [0.0, 1.0]])
        y = sparse.from_dense([[1.0, 0.0], [0.0, 1.0]])
        tree = LabelTree(branching=2, n_labels=2, levels=[])
        model = train(x, y, tree)
        for i in range(2):
            assert model.predict(x.row(i), topk=1)[0][0] == i

    def test_all_zero_targets_degenerate_everywhere(self):
        x = sparse.from_dense([[1.0], [1.0]])
        y = sparse.from_coordinates([], 2, 2)
        tree = LabelTree(branching=2, n_labels=2, levels=[])
        model = train(x, y, tree)
        assert (model.flags[0] == FLAG_NO_POSITIVES).all()
        ranked = model.predict(x.row(0), topk=2)
        assert all(score == DEGENERATE_SCORE for _, score in ranked)

    def test_candidate_sets_are_parent_scoped(self):
        # Instances touching cluster {0,1} all carry label 0, so within
        # the candidate set label 0 has no negatives even though global
        # negatives exist.  The flag proves the solver saw only the
        # parent's instances.
        x = sparse.from_dense(np.eye(4))
        y = sparse.from_dense(
            [
                [1, 0, 0, 0],
                [1, 1, 0, 0],
                [0, 0, 1, 0],
                [0, 0, 1, 1],
            ]
        )
        tree = LabelTree(branching=2, n_labels=4, levels=[np.array([0, 0, 1, 1])])
        model = train(x, y, tree)
        assert model.flags[1][0] == FLAG_NO_NEGATIVES
        assert model.flags[1][1] == 0
        assert model.flags[1][2] == FLAG_NO_NEGATIVES

    def test_hierarchical_model_learns_clustered_data(self):
        rng = np.random.default_rng(22)
        n, n_labels = 120, 12
        centers = rng.normal(size=(n_labels, 8)) * 3.0
        labels = rng.integers(0, n_labels, size=n)
        xd = centers[labels] + rng.normal(size=(n, 8)) * 0.1
        x = sparse.from_dense(xd)
        y = sparse.from_coordinates(
            [(i, int(labels[i]), 1.0) for i in range(n)], n, n_labels
        )
        z = sparse.from_dense(centers)
        tree = build_label_tree(z, branching=2, max_leaf_size=3, seed=0)
        assert tree.depth >= 1
        model = train(x, y, tree)
        hits = sum(
            model.predict(x.row(i), beam=4, topk=1)[0][0] == labels[i]
            for i in range(n)
        )
        assert hits / n >= 0.95

    def test_weight_pruning_threshold_respected(self):
        rng = np.random.default_rng(23)
        x = sparse.from_dense(rng.normal(size=(30, 10)))
        y = sparse.from_coordinates(
            [(i, int(rng.integers(0, 4)), 1.0) for i in range(30)], 30, 4
        )
        tree = LabelTree(branching=2, n_labels=4, levels=[])
        model = train(x, y, tree, TrainConfig(weight_prune_threshold=1e-2))
        assert np.all(np.abs(model.layers[0].values) >= 1e-2)

    def test_shape_mismatch_rejected(self):
        x = sparse.from_dense([[1.0]])
        y = sparse.from_dense([[1.0], [1.0]])
        tree = LabelTree(branching=2, n_labels=1, levels=[])
        with pytest.raises(ValueError, match="rows"):
            train(x, y, tree)


class TestSerialization:
    def build(self, seed=24):
        rng = np.random.default_rng(seed)
        x = sparse.from_dense(rng.normal(size=(40, 9)) * (rng.random((40, 9)) < 0.5))
        y = sparse.from_coordinates(
            [(i, int(rng.integers(0, 10)), 1.0) for i in range(40)], 40, 10
        )
        z = sparse.from_dense(rng.normal(size=(10, 9)))
        tree = build_label_tree(z, branching=2, max_leaf_size=3, seed=1)
        return x, y, train(x, y, tree)

    def test_round_trip_identical_predictions(self, tmp_path):
        x, _, model = self.build()
        model.save(tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        for i in range(5):
            assert loaded.predict(x.row(i)) == model.predict(x.row(i))

    def test_save_load_save_byte_identical(self, tmp_path):
        _, _, model = self.build()
        model.save(tmp_path / "a")
        load_model(tmp_path / "a").save(tmp_path / "b")
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_training_deterministic(self, tmp_path):
        _, _, m1 = self.build()
        _, _, m2 = self.build()
        m1.save(tmp_path / "a")
        m2.save(tmp_path / "b")
        for rel in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_tampered_layer_rejected(self, tmp_path):
        _, _, model = self.build()
        model.save(tmp_path / "m")
        victim = tmp_path / "m" / "layers" / "layer_00.xmcm"
        raw = bytearray(victim.read_bytes())
        raw[:4] = b"JUNK"
        victim.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_model(tmp_path / "m")

    def test_wrong_kind_rejected(self, tmp_path):
        _, _, model = self.build()
        model.save(tmp_path / "m")
        manifest = tmp_path / "m" / "manifest.json"
        manifest.write_text(manifest.read_text().replace("xmc_model", "mystery"))
        with pytest.raises(FormatError, match="model"):
            load_model(tmp_path / "m")
