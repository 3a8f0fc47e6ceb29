"""Pipeline configuration with strict schema validation.

Configs are flat JSON objects.  Unknown keys, wrong types, and
out-of-range values are rejected with the offending key named, so a
typo fails fast instead of silently training with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .ioutil import read_json

MODES = ("pina", "baseline", "naive")
FEATURE_MODES = ("stat", "augmented", "concat")
LOSSES = ("squared_hinge", "logistic")
VECTORIZER_MODES = ("tfidf", "bow")


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


@dataclass
class PipelineConfig:
    mode: str = "pina"
    feature_mode: str = "concat"
    neighbors: int = 5
    beam: int = 10
    topk: int = 10
    branching: int = 16
    max_leaf_size: int = 100
    loss: str = "squared_hinge"
    regularization: float = 1.0
    tol: float = 1e-3
    max_iter: int = 100
    weight_prune_threshold: float = 1e-4
    vectorizer_mode: str = "tfidf"
    min_df: int = 1
    seed: int = 0
    train_features: str = None
    test_features: str = None

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


# key -> (expected types, enum or predicate constraint)
_SCHEMA = {
    "mode": (str, MODES),
    "feature_mode": (str, FEATURE_MODES),
    "neighbors": (int, _positive),
    "beam": (int, _positive),
    "topk": (int, _positive),
    "branching": (int, lambda v: v >= 2),
    "max_leaf_size": (int, _positive),
    "loss": (str, LOSSES),
    "regularization": ((int, float), _positive),
    "tol": ((int, float), _positive),
    "max_iter": (int, _positive),
    "weight_prune_threshold": ((int, float), _non_negative),
    "vectorizer_mode": (str, VECTORIZER_MODES),
    "min_df": (int, _positive),
    "seed": (int, lambda v: True),
    "train_features": ((str, type(None)), lambda v: True),
    "test_features": ((str, type(None)), lambda v: True),
}


def validate_config_dict(raw):
    """Check a raw JSON object against the schema, naming offenders."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        expected, constraint = _SCHEMA[key]
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ConfigError(
                f"config key {key!r} has type {type(value).__name__}, "
                f"expected {expected.__name__ if isinstance(expected, type) else 'one of the allowed types'}"
            )
        if isinstance(constraint, tuple):
            if value not in constraint:
                raise ConfigError(
                    f"config key {key!r} must be one of {constraint}, got {value!r}"
                )
        elif not constraint(value):
            raise ConfigError(f"config key {key!r} has invalid value {value!r}")
    if raw.get("mode") == "baseline" and raw.get("feature_mode") in (
        "augmented",
        "concat",
    ):
        raise ConfigError(
            "baseline mode has no augmented features; use feature_mode 'stat'"
        )


def load_pipeline_config(path=None, overrides=None):
    """Build a config from an optional JSON file plus CLI overrides."""
    raw = {}
    if path is not None:
        raw = read_json(path)
    if overrides:
        raw = {**raw, **overrides}
    validate_config_dict(raw)
    config = PipelineConfig(**raw)
    if config.mode == "baseline" and "feature_mode" not in raw:
        config.feature_mode = "stat"
    return config
