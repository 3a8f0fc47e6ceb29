"""Deterministic synthetic corpus for end-to-end demos and checks.

The construction gives label text real signal that instance text alone
cannot supply.  Every label has three aspect tokens; training instances
mention only the first two, while half of the test instances mention
the third.  Label descriptions list all three aspects plus a signature
token that never occurs in any instance.  A classifier trained purely
on instance text therefore has no route to the held-out aspect, whereas
a model that reads label descriptions during pretraining can bridge it.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import sparse
from .ingest import write_text_corpus, write_xmc_dataset


@dataclass
class SyntheticDataset:
    train_texts: list
    train_y: sparse.SparseMatrix
    test_texts: list
    test_y: sparse.SparseMatrix
    label_texts: list

    @property
    def n_labels(self):
        return self.train_y.n_cols


def _instance_text(rng, label, aspect, n_noise, noise_per_instance):
    noise = rng.choice(n_noise, size=noise_per_instance, replace=False)
    tokens = [f"asp{label}x{aspect}"] + [f"noise{t}" for t in noise]
    return " ".join(tokens)


def make_synthetic_dataset(
    seed=0,
    n_labels=50,
    train_per_label=4,
    test_per_label=2,
    n_noise=20,
    noise_per_instance=2,
):
    """Build one train/test split; all randomness flows from ``seed``."""
    if n_labels < 2 or train_per_label < 1 or test_per_label < 2:
        raise ValueError("dataset must have at least 2 labels, 1 train and 2 test instances per label")
    rng = np.random.default_rng(seed)
    label_texts = [
        f"sig{l} asp{l}x0 asp{l}x1 asp{l}x2" for l in range(n_labels)
    ]
    train_texts, train_pairs = [], []
    for l in range(n_labels):
        for _ in range(train_per_label):
            aspect = int(rng.integers(0, 2))
            train_pairs.append((len(train_texts), l, 1.0))
            train_texts.append(
                _instance_text(rng, l, aspect, n_noise, noise_per_instance)
            )
    test_texts, test_pairs = [], []
    for l in range(n_labels):
        # half the test instances use the aspect never seen in training
        for j in range(test_per_label):
            aspect = 2 if j % 2 else int(rng.integers(0, 2))
            test_pairs.append((len(test_texts), l, 1.0))
            test_texts.append(
                _instance_text(rng, l, aspect, n_noise, noise_per_instance)
            )
    train_y = sparse.from_coordinates(train_pairs, len(train_texts), n_labels)
    test_y = sparse.from_coordinates(test_pairs, len(test_texts), n_labels)
    return SyntheticDataset(train_texts, train_y, test_texts, test_y, label_texts)


def write_synthetic_dataset(ds, out_dir):
    """Write corpora plus label matrices (as feature-less dataset files)."""
    os.makedirs(out_dir, exist_ok=True)
    write_text_corpus(os.path.join(out_dir, "train_texts.txt"), ds.train_texts)
    write_text_corpus(os.path.join(out_dir, "test_texts.txt"), ds.test_texts)
    write_text_corpus(os.path.join(out_dir, "label_texts.txt"), ds.label_texts)
    empty_train = sparse.from_coo([], [], [], ds.train_y.n_rows, 1)
    empty_test = sparse.from_coo([], [], [], ds.test_y.n_rows, 1)
    write_xmc_dataset(os.path.join(out_dir, "train_labels.txt"), empty_train, ds.train_y)
    write_xmc_dataset(os.path.join(out_dir, "test_labels.txt"), empty_test, ds.test_y)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="python3 -m pina_xmc.synth",
        description="Generate the synthetic demo dataset.",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--labels", type=int, default=50)
    args = parser.parse_args(argv)
    ds = make_synthetic_dataset(seed=args.seed, n_labels=args.labels)
    write_synthetic_dataset(ds, args.out)
    print(
        f"wrote {len(ds.train_texts)} train / {len(ds.test_texts)} test "
        f"instances over {ds.n_labels} labels to {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
