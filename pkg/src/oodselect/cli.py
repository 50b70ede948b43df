"""Command-line interface.

Subcommands: featurize, train, select, evaluate, reproduce-paper. Every
run takes a single JSON config (all keys optional) plus a few flag
overrides, writes its artifacts under --out, and emits the merged
effective config beside them. Exit codes: 0 success, 1 validation
failure, 2 acceptance thresholds not met.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import harness
from .config import apply_seed_override, load_config, write_effective_config
from .embeddings import load_embeddings, one_hot
from .errors import ValidationError
from .metafeatures import read_features_csv, write_diagnostics, write_features_csv
from .perf import DatasetPair
from .predictor import load_predictor, save_predictor, select as predictor_select
from .resources import resolve_path
from .evaluation import emit_report
from .harness import language_pair_embeddings

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_THRESHOLDS = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; defaults cover every key")
    parser.add_argument("--out", help="output directory (default from config)")
    parser.add_argument("--seed", type=int, help="override every configured seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for featurization (results identical)")


def _prepare(args: argparse.Namespace) -> tuple[dict, str]:
    config = load_config(args.config)
    if args.seed is not None:
        config = apply_seed_override(config, args.seed)
    out_dir = args.out or config["output"]["dir"]
    config["output"]["dir"] = out_dir
    os.makedirs(out_dir, exist_ok=True)
    write_effective_config(config, os.path.join(out_dir, "effective_config.json"))
    return config, out_dir


def _load_features(config: dict, path_flag: str | None):
    path = path_flag or config["data"]["features_csv"]
    if not path:
        return None
    return read_features_csv(resolve_path(path))


def cmd_featurize(args: argparse.Namespace) -> int:
    config, out_dir = _prepare(args)
    _, matrix, _ = harness.load_benchmark(config)
    pairs = list(matrix.pairs)
    feats = harness.featurize_pairs(config, pairs, threads=max(1, args.threads))
    out_csv = os.path.join(out_dir, "features.csv")
    write_features_csv([(p, feats[p]) for p in pairs], out_csv)
    write_diagnostics(
        {p.key(): feats[p].diagnostics for p in pairs},
        os.path.join(out_dir, "feature_diagnostics.json"),
    )
    print(f"featurized {len(pairs)} pairs -> {out_csv}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config, out_dir = _prepare(args)
    _, matrix, split = harness.load_benchmark(config)
    features = _load_features(config, args.features)
    predictor, num_samples = harness.train_route(config, matrix, split, args.route, features)
    out_path = os.path.join(out_dir, "predictor.json")
    save_predictor(predictor, out_path)
    summary = {
        "route": args.route,
        "kind": predictor.kind,
        "target_transform": predictor.target_transform,
        "training_samples": num_samples,
        "train_rmse": getattr(predictor.model, "train_rmse", None),
        "train_loss": getattr(predictor.model, "train_loss", None),
    }
    with open(os.path.join(out_dir, "train_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {args.route} predictor on {num_samples} samples -> {out_path}")
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    config, out_dir = _prepare(args)
    catalog, matrix, _ = harness.load_benchmark(config)
    predictor = load_predictor(args.predictor)
    pair = DatasetPair(args.id, args.ood)
    emb_cfg = config["embeddings"]
    data_table = load_embeddings(resolve_path(emb_cfg["datasets"]), emb_cfg["l2_normalize"])
    if predictor.data_dim == 2 * data_table.dim:
        data_emb = language_pair_embeddings(data_table, [pair])[pair]
        model_table = load_embeddings(resolve_path(emb_cfg["models"]), emb_cfg["l2_normalize"])
        model_embs = {m: model_table[m] for m in catalog.models}
    else:
        features = _load_features(config, args.features)
        if features is None or pair not in features:
            raise ValidationError(
                f"predictor expects meta-features; provide --features covering {pair.key()}"
            )
        data_emb = np.asarray(features[pair])
        model_embs = {m: one_hot(catalog, m) for m in catalog.models}
    chosen, scores = predictor_select(predictor, data_emb, model_embs, catalog.models)
    payload = {"id": pair.id, "ood": pair.ood, "chosen": chosen, "scores": scores}
    out_path = os.path.join(out_dir, "selection.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{pair.key()}: {chosen}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config, out_dir = _prepare(args)
    _, matrix, split = harness.load_benchmark(config)
    features = _load_features(config, args.features)
    records, pw = harness.run_evaluation(config, matrix, split, features)
    emit_report(out_dir, records, pw)
    for name, recs in sorted(records.items()):
        print(f"{name}: mean rank {harness.mean_rank(recs):.4f}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    config, out_dir = _prepare(args)
    _, matrix, split = harness.load_benchmark(config)
    timing: dict[str, float] = {}

    t0 = time.perf_counter()
    pairs = list(matrix.pairs)
    feats = harness.featurize_pairs(config, pairs, threads=max(1, args.threads))
    timing["featurize_seconds"] = time.perf_counter() - t0
    features = {p: feats[p].values for p in pairs}
    write_features_csv([(p, feats[p]) for p in pairs], os.path.join(out_dir, "features.csv"))
    write_diagnostics(
        {p.key(): feats[p].diagnostics for p in pairs},
        os.path.join(out_dir, "feature_diagnostics.json"),
    )

    t0 = time.perf_counter()
    records, pw = harness.run_evaluation(config, matrix, split, features)
    timing["evaluate_seconds"] = time.perf_counter() - t0

    gate = harness.threshold_checks(config, matrix, split, records)
    emit_report(out_dir, records, pw,
                timing=timing if config["evaluation"]["timing"] else None)
    harness.write_projection_csv(
        harness.embedding_projection(config), os.path.join(out_dir, "projection_2d.csv")
    )
    with open(os.path.join(out_dir, "thresholds.json"), "w", encoding="utf-8") as fh:
        json.dump(gate, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for name, value in sorted(
        ((n, harness.mean_rank(r)) for n, r in records.items()), key=lambda t: t[1]
    ):
        print(f"{name}: mean rank {value:.4f}")
    for check in gate["checks"]:
        print(f"[{'PASS' if check['passed'] else 'FAIL'}] {check['name']}: {check['detail']}")
    return EXIT_OK if gate["all_passed"] else EXIT_THRESHOLDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodselect",
        description="Select OOD detectors for new dataset pairs from historical benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="compute meta-features for every benchmark pair")
    _add_common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit the meta-predictor on the train split")
    _add_common(p)
    p.add_argument("--route", choices=("metaood", "metaood_0"), default="metaood")
    p.add_argument("--features", help="features.csv for the metaood_0 route")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick a detector for one new pair")
    _add_common(p)
    p.add_argument("--predictor", required=True, help="serialized predictor file")
    p.add_argument("--id", required=True, help="ID dataset name")
    p.add_argument("--ood", required=True, help="OOD dataset name")
    p.add_argument("--features", help="features.csv when the predictor uses meta-features")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="score configured selectors on the test split")
    _add_common(p)
    p.add_argument("--features", help="features.csv from a previous featurize run")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce-paper", help="full offline benchmark run with gate")
    _add_common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
