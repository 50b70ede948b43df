"""Meta-predictor: regress historical scores onto pair and model embeddings.

Training rows are (data embedding ++ model embedding) -> transformed
score, one row per observed matrix cell. Selection for a new pair scores
every catalog model and takes the argmax, ties to the lowest catalog
index. Models serialize to versioned JSON so a trained predictor is a
portable artifact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .embeddings import pair_input
from .errors import ValidationError
from .gbrt import GBRTConfig, GBRTModel, fit_gbrt, gbrt_from_dict, gbrt_to_dict
from .mlp import MLPConfig, MLPModel, fit_mlp, mlp_from_dict, mlp_to_dict
from .perf import DatasetPair, PerformanceMatrix

SERIALIZATION_VERSION = 1
TARGET_TRANSFORMS = ("raw", "per_pair_rank")


def rank_percentiles(values: np.ndarray) -> np.ndarray:
    """Within-row targets: worst score 0, best 1, ties averaged.

    A row with a single observed value maps to 0.5.
    """
    v = np.asarray(values, dtype=np.float64)
    k = v.size
    if k == 1:
        return np.array([0.5])
    order = np.argsort(v, kind="stable")
    ranks = np.empty(k, dtype=np.float64)
    i = 0
    srt = v[order]
    while i < k:
        j = i
        while j + 1 < k and srt[j + 1] == srt[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return (ranks - 1.0) / (k - 1.0)


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    pairs: list[DatasetPair]
    models: list[str]
    data_dim: int
    model_dim: int
    target_transform: str


def build_training_set(
    matrix: PerformanceMatrix,
    pairs: Sequence[DatasetPair],
    data_embeddings: Mapping[DatasetPair, np.ndarray],
    model_embeddings: Mapping[str, np.ndarray],
    target_transform: str = "raw",
) -> TrainingSet:
    """One training row per observed (pair, model) cell. Missing cells are
    skipped. raw targets are AUROC/100; per_pair_rank replaces each row's
    scores with rank percentiles."""
    if target_transform not in TARGET_TRANSFORMS:
        raise ValidationError(
            f"unknown target_transform {target_transform!r}, expected one of {TARGET_TRANSFORMS}"
        )
    if not pairs:
        raise ValidationError("no training pairs given")
    for model in matrix.catalog.models:
        if model not in model_embeddings:
            raise ValidationError(f"no model embedding for {model!r}")
    data_dims = {np.asarray(v).shape for v in data_embeddings.values()}
    model_dims = {np.asarray(v).shape for v in model_embeddings.values()}
    if len(data_dims) != 1 or len(model_dims) != 1:
        raise ValidationError(
            f"inconsistent embedding dims: data {sorted(data_dims)}, model {sorted(model_dims)}"
        )
    rows: list[np.ndarray] = []
    targets: list[float] = []
    row_pairs: list[DatasetPair] = []
    row_models: list[str] = []
    for pair in pairs:
        if pair not in data_embeddings:
            raise ValidationError(f"no data embedding for pair {pair.key()}")
        data_emb = np.asarray(data_embeddings[pair], dtype=np.float64)
        scores = matrix.row(pair)
        observed = ~np.isnan(scores)
        if not observed.any():
            raise ValidationError(f"pair {pair.key()} has no observed scores")
        if target_transform == "per_pair_rank":
            y_row = np.full(scores.shape, np.nan)
            y_row[observed] = rank_percentiles(scores[observed])
        else:
            y_row = scores / 100.0
        for j, model in enumerate(matrix.catalog.models):
            if not observed[j]:
                continue
            rows.append(pair_input(data_emb, np.asarray(model_embeddings[model], dtype=np.float64)))
            targets.append(float(y_row[j]))
            row_pairs.append(pair)
            row_models.append(model)
    X = np.vstack(rows)
    return TrainingSet(
        X,
        np.asarray(targets),
        row_pairs,
        row_models,
        data_dim=next(iter(data_dims))[0],
        model_dim=next(iter(model_dims))[0],
        target_transform=target_transform,
    )


@dataclass
class MetaPredictor:
    kind: str  # "gbrt" | "mlp"
    model: GBRTModel | MLPModel
    target_transform: str
    data_dim: int
    model_dim: int

    def predict_row(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict(X)


def fit_meta_predictor(
    train_set: TrainingSet,
    kind: str = "gbrt",
    gbrt_config: GBRTConfig | None = None,
    mlp_config: MLPConfig | None = None,
) -> MetaPredictor:
    if kind == "gbrt":
        model: GBRTModel | MLPModel = fit_gbrt(train_set.X, train_set.y, gbrt_config)
    elif kind == "mlp":
        model = fit_mlp(train_set.X, train_set.y, mlp_config)
    else:
        raise ValidationError(f"unknown predictor kind {kind!r}")
    return MetaPredictor(
        kind, model, train_set.target_transform, train_set.data_dim, train_set.model_dim
    )


def predict_scores(
    predictor: MetaPredictor,
    data_embedding: np.ndarray,
    model_embeddings: Mapping[str, np.ndarray],
    model_order: Sequence[str],
) -> np.ndarray:
    """Predicted (transformed) score for every model in the given order."""
    data_embedding = np.asarray(data_embedding, dtype=np.float64)
    if data_embedding.shape != (predictor.data_dim,):
        raise ValidationError(
            f"data embedding has shape {data_embedding.shape}, "
            f"predictor expects ({predictor.data_dim},)"
        )
    X = np.vstack(
        [pair_input(data_embedding, np.asarray(model_embeddings[m], dtype=np.float64))
         for m in model_order]
    )
    if X.shape[1] != predictor.data_dim + predictor.model_dim:
        raise ValidationError(
            f"model embeddings have dim {X.shape[1] - predictor.data_dim}, "
            f"predictor expects {predictor.model_dim}"
        )
    return predictor.predict_row(X)


def select(
    predictor: MetaPredictor,
    data_embedding: np.ndarray,
    model_embeddings: Mapping[str, np.ndarray],
    model_order: Sequence[str],
) -> tuple[str, dict[str, float]]:
    """Pick the best model for a new pair; ties go to the lowest index."""
    scores = predict_scores(predictor, data_embedding, model_embeddings, model_order)
    best = int(np.argmax(scores))
    return model_order[best], {m: float(s) for m, s in zip(model_order, scores)}


def save_predictor(predictor: MetaPredictor, path: str) -> None:
    payload = {
        "version": SERIALIZATION_VERSION,
        "kind": predictor.kind,
        "target_transform": predictor.target_transform,
        "data_dim": predictor.data_dim,
        "model_dim": predictor.model_dim,
        "model": gbrt_to_dict(predictor.model)
        if predictor.kind == "gbrt"
        else mlp_to_dict(predictor.model),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_predictor(path: str) -> MetaPredictor:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    version = raw.get("version")
    if version != SERIALIZATION_VERSION:
        raise ValidationError(
            f"{path}: serialization version {version!r} not supported "
            f"(expected {SERIALIZATION_VERSION})"
        )
    kind = raw.get("kind")
    if kind == "gbrt":
        model: GBRTModel | MLPModel = gbrt_from_dict(raw["model"])
    elif kind == "mlp":
        model = mlp_from_dict(raw["model"])
    else:
        raise ValidationError(f"{path}: unknown predictor kind {kind!r}")
    transform = raw.get("target_transform", "raw")
    if transform not in TARGET_TRANSFORMS:
        raise ValidationError(f"{path}: unknown target_transform {transform!r}")
    return MetaPredictor(kind, model, transform, int(raw["data_dim"]), int(raw["model_dim"]))
