"""Command-line interface for training, prediction, and evaluation.

Exit codes: 0 on success, 1 for data or runtime failures, 2 for usage
errors.  Set PINA_XMC_LOG=debug (or info) to get progress logging on
stderr.  The --threads flag is a resource hint only: every code path
computes in a fixed serial order, so artifacts are byte-identical no
matter how many threads are requested.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import sparse
from .config import PipelineConfig, load_pipeline_config
from .errors import ConfigError, FormatError, NotFittedError, ParseError
from .estimators import NeighborAugmenter, TreeClassifier
from .ingest import parse_xmc_dataset, read_pair_filter, read_text_corpus
from .ioutil import hash_tree, read_json, write_json
from .linear import load_model
from .metrics import evaluate as evaluate_rankings
from .pina import NeighborPredictor
from .textvec import TextVectorizer

MODEL_FORMAT_VERSION = 1

log = logging.getLogger("pina_xmc")


def _setup_logging():
    level_name = os.environ.get("PINA_XMC_LOG", "").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO}
    logging.basicConfig(
        stream=sys.stderr,
        level=levels.get(level_name, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_dataset_dir(data_dir, need_label_texts):
    texts = read_text_corpus(os.path.join(data_dir, "train_texts.txt"))
    _, y = parse_xmc_dataset(os.path.join(data_dir, "train_labels.txt"))
    if y.n_rows != len(texts):
        raise FormatError(
            f"{data_dir}: {len(texts)} texts but {y.n_rows} label rows"
        )
    label_path = os.path.join(data_dir, "label_texts.txt")
    label_texts = None
    if os.path.exists(label_path):
        label_texts = read_text_corpus(label_path)
        if len(label_texts) != y.n_cols:
            raise FormatError(
                f"{data_dir}: {len(label_texts)} label texts but the label "
                f"matrix has {y.n_cols} columns"
            )
    elif need_label_texts:
        raise FormatError(f"{data_dir}: label_texts.txt is required for pretraining")
    return texts, y, label_texts


def _stat_features(vectorizer, texts, features_path):
    """Statistical block: a precomputed matrix wins over the vectorizer."""
    if features_path is not None:
        stat = sparse.load_matrix(features_path)
        if stat.n_rows != len(texts):
            raise FormatError(
                f"{features_path}: {stat.n_rows} feature rows for {len(texts)} texts"
            )
        return stat
    return vectorizer.transform(texts)


def _compose_features(feature_mode, augmented, stat):
    if feature_mode == "stat":
        return stat
    if feature_mode == "augmented":
        return augmented
    return sparse.hstack(augmented, stat)


def run_train(data_dir, model_dir, config, variant=None):
    """Train the full pipeline into ``model_dir``; returns a summary."""
    mode = variant or config.mode
    texts, y, label_texts = _load_dataset_dir(data_dir, mode != "baseline")
    log.info("training mode=%s on %d instances, %d labels", mode, y.n_rows, y.n_cols)
    vectorizer = TextVectorizer(mode=config.vectorizer_mode, min_df=config.min_df)
    vectorizer.fit(texts)
    stat = _stat_features(vectorizer, texts, config.train_features)
    feature_mode = config.feature_mode if mode != "baseline" else "stat"
    augmenter = None
    if mode == "baseline":
        features = stat
    else:
        augmenter = NeighborAugmenter(
            k=config.neighbors,
            beam=config.beam,
            branching=config.branching,
            max_leaf_size=config.max_leaf_size,
            loss=config.loss,
            regularization=config.regularization,
            tol=config.tol,
            max_iter=config.max_iter,
            weight_prune_threshold=config.weight_prune_threshold,
            vectorizer_mode=config.vectorizer_mode,
            min_df=config.min_df,
            variant="naive" if mode == "naive" else "full",
            seed=config.seed,
        )
        augmenter.fit(texts, y, label_texts=label_texts)
        augmented = augmenter.transform(texts)
        features = _compose_features(feature_mode, augmented, stat)
    classifier = TreeClassifier(
        branching=config.branching,
        max_leaf_size=config.max_leaf_size,
        loss=config.loss,
        regularization=config.regularization,
        tol=config.tol,
        max_iter=config.max_iter,
        weight_prune_threshold=config.weight_prune_threshold,
        beam=config.beam,
        seed=config.seed,
    )
    classifier.fit(features, y)
    os.makedirs(model_dir, exist_ok=True)
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "xmc_pipeline",
        "mode": mode,
        "feature_mode": feature_mode,
        "neighbors": config.neighbors,
        "beam": config.beam,
        "topk": config.topk,
        "stat_dim": stat.n_cols,
        "feature_dim": features.n_cols,
        "n_labels": y.n_cols,
        "config": config.to_dict(),
    }
    write_json(os.path.join(model_dir, "manifest.json"), manifest)
    classifier.model_.save(os.path.join(model_dir, "classifier"))
    vectorizer.save(os.path.join(model_dir, "vectorizer"))
    if augmenter is not None:
        augmenter.predictor_.save(os.path.join(model_dir, "predictor"))
    return {
        "model_dir": model_dir,
        "mode": mode,
        "n_instances": y.n_rows,
        "n_labels": y.n_cols,
        "feature_dim": features.n_cols,
    }


def run_predict(model_dir, texts_path, out_path, features_path=None, topk=None):
    manifest = read_json(os.path.join(model_dir, "manifest.json"))
    if manifest.get("kind") != "xmc_pipeline":
        raise FormatError(f"{model_dir}: not a pipeline model directory")
    texts = read_text_corpus(texts_path)
    vectorizer = TextVectorizer.load(os.path.join(model_dir, "vectorizer"))
    stat = _stat_features(vectorizer, texts, features_path)
    if manifest["feature_mode"] == "stat":
        features = stat
    else:
        predictor = NeighborPredictor.load(os.path.join(model_dir, "predictor"))
        augmented = predictor.augment(
            texts, k=manifest["neighbors"], beam=manifest["beam"]
        )
        features = _compose_features(manifest["feature_mode"], augmented, stat)
    model = load_model(os.path.join(model_dir, "classifier"))
    if features.n_cols != model.feature_dim:
        raise FormatError(
            f"feature width {features.n_cols} does not match the model's "
            f"{model.feature_dim}; check the vectorizer or --features input"
        )
    scores = model.predict_all(
        features, beam=manifest["beam"], topk=topk or manifest["topk"]
    )
    sparse.save_matrix(scores, out_path)
    log.info("wrote scores for %d texts to %s", len(texts), out_path)
    return scores


def run_evaluate(scores_path, truth_path, ks=(1, 3, 5), filter_path=None):
    scores = sparse.load_matrix(scores_path)
    _, truth = parse_xmc_dataset(truth_path)
    pairs = read_pair_filter(filter_path) if filter_path else None
    return evaluate_rankings(scores, truth, ks=ks, filter_pairs=pairs)


def run_pretrain(data_dir, out_dir, config, variant=None):
    mode = variant or config.mode
    if mode == "baseline":
        raise ConfigError("baseline mode has no pretraining stage")
    texts, y, label_texts = _load_dataset_dir(data_dir, True)
    augmenter = NeighborAugmenter(
        k=config.neighbors,
        beam=config.beam,
        branching=config.branching,
        max_leaf_size=config.max_leaf_size,
        loss=config.loss,
        regularization=config.regularization,
        tol=config.tol,
        max_iter=config.max_iter,
        weight_prune_threshold=config.weight_prune_threshold,
        vectorizer_mode=config.vectorizer_mode,
        min_df=config.min_df,
        variant="naive" if mode == "naive" else "full",
        seed=config.seed,
    )
    augmenter.fit(texts, y, label_texts=label_texts)
    augmenter.predictor_.save(out_dir)
    return {"predictor_dir": out_dir, "n_outputs": augmenter.predictor_.n_outputs}


def run_augment(predictor_dir, texts_path, out_path, k=None):
    predictor = NeighborPredictor.load(predictor_dir)
    texts = read_text_corpus(texts_path)
    k = k or 5
    augmented = predictor.augment(texts, k=k)
    sparse.save_matrix(augmented, out_path)
    write_json(
        out_path + ".manifest.json",
        {
            "kind": "augmented_features",
            "neighbors": k,
            "n_rows": len(texts),
            "n_cols": augmented.n_cols,
            "predictor_hash": hash_tree(predictor_dir),
        },
    )
    return augmented


def _add_common(parser):
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="resource hint; outputs are byte-identical for any value",
    )


def _config_from_args(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_pipeline_config(args.config, overrides)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pina-xmc",
        description="Tree-based extreme multi-label text classification "
        "with neighborhood-enhanced features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a full pipeline")
    p_train.add_argument("--data", required=True, help="dataset directory")
    p_train.add_argument("--model-dir", required=True)
    p_train.add_argument("--config", default=None, help="JSON config path")
    p_train.add_argument("--seed", type=int, default=None)
    _add_common(p_train)

    p_ablate = sub.add_parser(
        "ablate-naive",
        help="train with pretraining restricted to the plain label matrix",
    )
    p_ablate.add_argument("--data", required=True)
    p_ablate.add_argument("--model-dir", required=True)
    p_ablate.add_argument("--config", default=None)
    p_ablate.add_argument("--seed", type=int, default=None)
    _add_common(p_ablate)

    p_pred = sub.add_parser("predict", help="score texts with a trained model")
    p_pred.add_argument("--model-dir", required=True)
    p_pred.add_argument("--texts", required=True)
    p_pred.add_argument("--out", required=True, help="output score matrix path")
    p_pred.add_argument("--features", default=None, help="precomputed feature matrix")
    p_pred.add_argument("--topk", type=int, default=None)
    _add_common(p_pred)

    p_eval = sub.add_parser("evaluate", help="compute ranking metrics as JSON")
    p_eval.add_argument("--scores", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--ks", default="1,3,5")
    p_eval.add_argument("--filter", default=None, help="pair filter file")
    _add_common(p_eval)

    p_pre = sub.add_parser("pina-pretrain", help="train only the neighbor predictor")
    p_pre.add_argument("--data", required=True)
    p_pre.add_argument("--out", required=True, help="predictor directory")
    p_pre.add_argument("--config", default=None)
    p_pre.add_argument("--seed", type=int, default=None)
    _add_common(p_pre)

    p_aug = sub.add_parser("pina-augment", help="write enhanced features for texts")
    p_aug.add_argument("--predictor", required=True)
    p_aug.add_argument("--texts", required=True)
    p_aug.add_argument("--out", required=True)
    p_aug.add_argument("--k", type=int, default=None, help="neighbors per text")
    _add_common(p_aug)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error(f"--threads must be at least 1, got {args.threads}")
    try:
        if args.command == "train":
            summary = run_train(args.data, args.model_dir, _config_from_args(args))
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "ablate-naive":
            summary = run_train(
                args.data, args.model_dir, _config_from_args(args), variant="naive"
            )
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "predict":
            run_predict(
                args.model_dir,
                args.texts,
                args.out,
                features_path=args.features,
                topk=args.topk,
            )
        elif args.command == "evaluate":
            try:
                ks = tuple(int(k) for k in args.ks.split(","))
            except ValueError:
                parser.error(f"--ks must be comma-separated integers, got {args.ks!r}")
            report = run_evaluate(
                args.scores, args.truth, ks=ks, filter_path=args.filter
            )
            print(json.dumps(report, indent=2, sort_keys=True))
        elif args.command == "pina-pretrain":
            summary = run_pretrain(args.data, args.out, _config_from_args(args))
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "pina-augment":
            run_augment(args.predictor, args.texts, args.out, k=args.k)
    except (
        ParseError,
        FormatError,
        ConfigError,
        NotFittedError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        log.debug("failure detail", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
