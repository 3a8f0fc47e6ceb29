"""Statistical text features: bag-of-words and smoothed TF-IDF.

Tokenization is deliberately small and fixed so that every run of the
pipeline sees the same vocabulary: split on Unicode whitespace,
lowercase, strip leading/trailing punctuation.  Feature ids are
assigned in lexicographic token order.
"""

from __future__ import annotations

import math
import os
import unicodedata
from collections import Counter

import numpy as np

from . import sparse
from .errors import FormatError, NotFittedError
from .ioutil import read_json, write_json

MODES = ("tfidf", "bow")
FORMAT_VERSION = 1


def _is_punctuation(ch):
    return unicodedata.category(ch).startswith("P")


def tokenize(text):
    """Lowercase, split on whitespace, trim punctuation off token edges.

    Tokens that are pure punctuation vanish.
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punctuation(raw[start]):
            start += 1
        while end > start and _is_punctuation(raw[end - 1]):
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


class TextVectorizer:
    """Maps documents to sparse feature rows.

    Parameters
    ----------
    mode : str
        "tfidf" for smoothed-idf weights with L2 row normalization, or
        "bow" for raw term counts.
    min_df : int
        Drop tokens appearing in fewer than this many fitting documents.
    """

    def __init__(self, mode="tfidf", min_df=1):
        self.mode = mode
        self.min_df = min_df

    def get_params(self, deep=True):
        return {"mode": self.mode, "min_df": self.min_df}

    def set_params(self, **params):
        for key, value in params.items():
            if key not in ("mode", "min_df"):
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def _check_params(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.min_df, int) or self.min_df < 1:
            raise ValueError(f"min_df must be a positive integer, got {self.min_df!r}")

    def fit(self, corpus):
        """Learn the vocabulary and document frequencies from ``corpus``."""
        self._check_params()
        corpus = list(corpus)
        if not corpus:
            raise ValueError("cannot fit on an empty corpus")
        df = Counter()
        for doc in corpus:
            df.update(set(tokenize(doc)))
        vocab = sorted(tok for tok, count in df.items() if count >= self.min_df)
        self.vocabulary_ = {tok: i for i, tok in enumerate(vocab)}
        self.doc_freq_ = np.array([df[tok] for tok in vocab], dtype=np.int64)
        self.n_docs_ = len(corpus)
        self._idf = (
            np.log((1.0 + self.n_docs_) / (1.0 + self.doc_freq_.astype(np.float64)))
            + 1.0
        )
        return self

    def fit_transform(self, corpus):
        corpus = list(corpus)
        return self.fit(corpus).transform(corpus)

    @property
    def dim(self):
        self._check_fitted()
        return len(self.vocabulary_)

    def _check_fitted(self):
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError("vectorizer is not fitted; call fit first")

    def _weigh(self, counts):
        """Turn a token->count mapping into (indices, float64 weights)."""
        pairs = sorted(
            (self.vocabulary_[tok], count)
            for tok, count in counts.items()
            if tok in self.vocabulary_
        )
        if not pairs:
            return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.float64)
        idx = np.array([i for i, _ in pairs], dtype=np.int32)
        weights = np.array([c for _, c in pairs], dtype=np.float64)
        if self.mode == "tfidf":
            weights = weights * self._idf[idx]
            norm = math.sqrt(float(np.sum(weights**2)))
            if norm > 0.0:
                weights = weights / norm
        return idx, weights

    def transform_one(self, text):
        """Vectorize a single document; unseen tokens are ignored."""
        self._check_fitted()
        idx, weights = self._weigh(Counter(tokenize(text)))
        stored = weights.astype(np.float32)
        keep = stored != 0.0
        return sparse.SparseVector(self.dim, idx[keep].copy(), stored[keep])

    def transform(self, corpus):
        """Vectorize documents into a matrix with one row per document."""
        self._check_fitted()
        corpus = list(corpus)
        rows, cols, vals = [], [], []
        for i, doc in enumerate(corpus):
            idx, weights = self._weigh(Counter(tokenize(doc)))
            rows.append(np.full(idx.size, i, dtype=np.int64))
            cols.append(idx.astype(np.int64))
            vals.append(weights)
        return sparse.from_coo(
            np.concatenate(rows) if rows else [],
            np.concatenate(cols) if cols else [],
            np.concatenate(vals) if vals else [],
            len(corpus),
            self.dim,
        )

    def save(self, dir_path):
        """Write the manifest and the token table (one "token<TAB>df" per line)."""
        self._check_fitted()
        os.makedirs(dir_path, exist_ok=True)
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "text_vectorizer",
            "mode": self.mode,
            "min_df": self.min_df,
            "num_docs": self.n_docs_,
            "vocab_size": len(self.vocabulary_),
        }
        write_json(os.path.join(dir_path, "manifest.json"), manifest)
        tokens = sorted(self.vocabulary_, key=self.vocabulary_.get)
        with open(os.path.join(dir_path, "tokens.tsv"), "wb") as fh:
            for tok in tokens:
                fh.write(f"{tok}\t{self.doc_freq_[self.vocabulary_[tok]]}\n".encode())

    @classmethod
    def load(cls, dir_path):
        manifest = read_json(os.path.join(dir_path, "manifest.json"))
        if manifest.get("kind") != "text_vectorizer":
            raise FormatError(f"{dir_path}: not a vectorizer directory")
        if manifest.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"{dir_path}: unsupported format version")
        vec = cls(mode=manifest["mode"], min_df=manifest["min_df"])
        vocab = {}
        freqs = []
        table = os.path.join(dir_path, "tokens.tsv")
        with open(table, "rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.decode("utf-8").rstrip("\n")
                if not line:
                    continue
                tok, _, df = line.partition("\t")
                if not df:
                    raise FormatError(f"{table}:{lineno}: missing document frequency")
                vocab[tok] = len(freqs)
                freqs.append(int(df))
        vec.vocabulary_ = vocab
        vec.doc_freq_ = np.array(freqs, dtype=np.int64)
        vec.n_docs_ = manifest["num_docs"]
        vec._idf = (
            np.log((1.0 + vec.n_docs_) / (1.0 + vec.doc_freq_.astype(np.float64)))
            + 1.0
        )
        return vec
