"""Tests for the synthetic dataset generator."""

import numpy as np
import pytest

from pina_xmc.ingest import parse_xmc_dataset, read_text_corpus
from pina_xmc.synth import (
    main,
    make_synthetic_dataset,
    write_synthetic_dataset,
)


class TestGenerator:
    def test_shapes_and_defaults(self):
        ds = make_synthetic_dataset(seed=0)
        assert len(ds.train_texts) == 200
        assert len(ds.test_texts) == 100
        assert ds.n_labels == 50
        assert len(ds.label_texts) == 50
        assert ds.train_y.shape == (200, 50)
        assert ds.test_y.shape == (100, 50)

    def test_single_label_per_instance(self):
        ds = make_synthetic_dataset(seed=1)
        np.testing.assert_array_equal(ds.train_y.row_counts(), 1)
        np.testing.assert_array_equal(ds.test_y.row_counts(), 1)

    def test_signature_tokens_only_in_label_text(self):
        ds = make_synthetic_dataset(seed=2)
        instance_tokens = set()
        for text in ds.train_texts + ds.test_texts:
            instance_tokens.update(text.split())
        assert not any(tok.startswith("sig") for tok in instance_tokens)
        for l, text in enumerate(ds.label_texts):
            assert f"sig{l}" in text.split()

    def test_held_out_aspect_never_in_training(self):
        ds = make_synthetic_dataset(seed=3)
        train_tokens = set()
        for text in ds.train_texts:
            train_tokens.update(text.split())
        assert not any(
            tok.startswith("asp") and tok.endswith("x2") for tok in train_tokens
        )
        test_tokens = set()
        for text in ds.test_texts:
            test_tokens.update(text.split())
        assert any(tok.endswith("x2") for tok in test_tokens)

    def test_deterministic_per_seed(self):
        a = make_synthetic_dataset(seed=7)
        b = make_synthetic_dataset(seed=7)
        assert a.train_texts == b.train_texts
        assert a.test_texts == b.test_texts
        np.testing.assert_array_equal(a.train_y.col_indices, b.train_y.col_indices)

    def test_seeds_differ(self):
        a = make_synthetic_dataset(seed=0)
        b = make_synthetic_dataset(seed=1)
        assert a.train_texts != b.train_texts

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            make_synthetic_dataset(n_labels=1)


class TestWriter:
    def test_written_files_round_trip(self, tmp_path):
        ds = make_synthetic_dataset(seed=4, n_labels=8)
        write_synthetic_dataset(ds, tmp_path)
        assert read_text_corpus(tmp_path / "train_texts.txt") == ds.train_texts
        assert read_text_corpus(tmp_path / "test_texts.txt") == ds.test_texts
        assert read_text_corpus(tmp_path / "label_texts.txt") == ds.label_texts
        _, train_y = parse_xmc_dataset(tmp_path / "train_labels.txt")
        _, test_y = parse_xmc_dataset(tmp_path / "test_labels.txt")
        np.testing.assert_array_equal(train_y.to_dense(), ds.train_y.to_dense())
        np.testing.assert_array_equal(test_y.to_dense(), ds.test_y.to_dense())

    def test_main_writes_dataset(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path / "ds"), "--seed", "3", "--labels", "6"])
        assert code == 0
        assert "6 labels" in capsys.readouterr().out
        assert (tmp_path / "ds" / "train_texts.txt").exists()
