"""Readers and writers for the plain-text dataset formats.

A labeled dataset file starts with a header line ``N D L`` followed by
one line per instance: comma-separated label ids, a space, then
``feature:value`` pairs.  Instances without labels start at the feature
list (the label field is empty), and a fully empty line is an instance
with neither labels nor features.
"""

from __future__ import annotations

import numpy as np

from . import sparse
from .errors import ParseError


def _parse_int(token, what, path, line_no):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"invalid {what} {token!r}", path, line_no) from None


def parse_xmc_dataset(path):
    """Read a labeled dataset; returns (features, labels) matrices."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    header = lines[0].split() if lines else []
    if len(header) != 3:
        raise ParseError("header must be 'N D L'", path, 1)
    n, d, l = (_parse_int(tok, "header field", path, 1) for tok in header)
    if n < 0 or d < 1 or l < 1:
        raise ParseError(
            f"header values ({n}, {d}, {l}) out of range", path, 1
        )
    if len(lines) - 1 < n:
        raise ParseError(f"expected {n} instance lines", path, len(lines))
    for extra in range(n + 1, len(lines)):
        if lines[extra].strip():
            raise ParseError(
                f"unexpected content after {n} instance lines", path, extra + 1
            )

    x_rows, x_cols, x_vals = [], [], []
    y_rows, y_cols = [], []
    for i in range(n):
        line_no = i + 2
        tokens = lines[i + 1].split()
        start = 0
        if tokens and ":" not in tokens[0]:
            seen = set()
            for tok in tokens[0].split(","):
                label = _parse_int(tok, "label id", path, line_no)
                if not 0 <= label < l:
                    raise ParseError(
                        f"label id {label} outside [0, {l})", path, line_no
                    )
                if label not in seen:
                    seen.add(label)
                    y_rows.append(i)
                    y_cols.append(label)
            start = 1
        for tok in tokens[start:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(
                    f"feature token {tok!r} is missing ':'", path, line_no
                )
            col = _parse_int(idx, "feature id", path, line_no)
            if not 0 <= col < d:
                raise ParseError(
                    f"feature id {col} outside [0, {d})", path, line_no
                )
            try:
                value = float(val)
            except ValueError:
                raise ParseError(
                    f"invalid feature value {val!r}", path, line_no
                ) from None
            x_rows.append(i)
            x_cols.append(col)
            x_vals.append(value)
    x = sparse.from_coo(x_rows, x_cols, x_vals, n, d)
    y = sparse.from_coo(y_rows, y_cols, np.ones(len(y_rows)), n, l)
    return x, y


def write_xmc_dataset(path, x, y):
    """Write a labeled dataset in canonical form (sorted ids, shortest
    round-trip float formatting)."""
    if x.n_rows != y.n_rows:
        raise ValueError(
            f"features cover {x.n_rows} instances but labels cover {y.n_rows}"
        )
    if y.nnz and not np.all(y.values == 1.0):
        raise ValueError("label matrix must be binary")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{x.n_rows} {x.n_cols} {y.n_cols}\n")
        for i in range(x.n_rows):
            labels = ",".join(str(c) for c in y.row(i).indices)
            row = x.row(i)
            feats = " ".join(
                f"{c}:{float(v)!r}" for c, v in zip(row.indices, row.values)
            )
            fh.write(f"{labels} {feats}" if feats else labels)
            fh.write("\n")


def read_text_corpus(path):
    """One text per line; the trailing newline is not part of the text."""
    with open(path, "r", encoding="utf-8") as fh:
        data = fh.read()
    if data.endswith("\n"):
        data = data[:-1]
    return data.split("\n") if data else []


def write_text_corpus(path, texts):
    """Write one text per line; embedded newlines would corrupt the
    framing and are rejected."""
    for i, text in enumerate(texts):
        if "\n" in text:
            raise ValueError(f"text {i} contains a newline")
    with open(path, "w", encoding="utf-8") as fh:
        for text in texts:
            fh.write(text)
            fh.write("\n")


def read_pair_filter(path):
    """Tab-separated (instance, label) pairs to exclude from evaluation."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    "expected 'instance<TAB>label'", path, line_no
                )
            inst = _parse_int(parts[0], "instance id", path, line_no)
            label = _parse_int(parts[1], "label id", path, line_no)
            if inst < 0 or label < 0:
                raise ParseError(
                    f"pair ({inst}, {label}) has a negative id", path, line_no
                )
            pairs.append((inst, label))
    return pairs
