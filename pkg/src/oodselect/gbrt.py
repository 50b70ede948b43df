"""Gradient-boosted regression trees with squared-error loss.

Greedy exact split search over midpoint thresholds. Every tie is broken
deterministically: among equal gains the lowest feature index wins, and
within a feature the lowest threshold. Subsampling fractions of exactly
1 bypass the RNG entirely, so the default configuration is reproducible
bit for bit regardless of draw order.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import ValidationError

# gains below this are treated as zero so constant targets yield leaves
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GBRTConfig:
    num_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 3
    subsample_fraction: float = 1.0
    feature_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 1:
            raise ValidationError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        if not self.learning_rate > 0.0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.min_samples_leaf < 1:
            raise ValidationError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        for name in ("subsample_fraction", "feature_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1], got {v}")


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray  # int64
    threshold: np.ndarray  # float64
    left: np.ndarray  # int64
    right: np.ndarray  # int64
    value: np.ndarray  # float64, leaf mean residual

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = self.feature[node]
            active = feats >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            cur = node[rows]
            x = X[rows, feats[rows]]
            node[rows] = np.where(x <= self.threshold[cur], self.left[cur], self.right[cur])
        return self.value[node]


@dataclass
class GBRTModel:
    config: GBRTConfig
    input_dim: int
    base: float
    trees: list[Tree]
    train_rmse: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X, self.input_dim)
        out = np.full(X.shape[0], self.base)
        for tree in self.trees:
            out += self.config.learning_rate * tree.predict(X)
        return out


def _as_matrix(X: np.ndarray, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValidationError(f"input has shape {X.shape}, model expects (*, {dim})")
    return X


def best_split(
    X: np.ndarray, residual: np.ndarray, min_samples_leaf: int
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) for one node, or None if unsplittable.

    Gain is the decrease in sum of squared errors. Ties resolve to the
    lowest feature index, then the lowest threshold.
    """
    n, d = X.shape
    if n < 2 * min_samples_leaf or n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    rs = residual[order]
    csum = np.cumsum(rs, axis=0)
    total = float(residual.sum())
    cnt_left = np.arange(1, n, dtype=np.float64)[:, None]
    sum_left = csum[:-1, :]
    cnt_right = n - cnt_left
    sum_right = total - sum_left
    score = sum_left**2 / cnt_left + sum_right**2 / cnt_right
    valid = xs[:-1, :] < xs[1:, :]
    valid &= (cnt_left >= min_samples_leaf) & (cnt_right >= min_samples_leaf)
    score = np.where(valid, score, -np.inf)
    pos_per_feature = np.argmax(score, axis=0)  # first max: lowest threshold
    score_per_feature = score[pos_per_feature, np.arange(d)]
    f = int(np.argmax(score_per_feature))  # first max: lowest feature index
    if not np.isfinite(score_per_feature[f]):
        return None
    gain = float(score_per_feature[f]) - total * total / n
    if gain <= MIN_GAIN:
        return None
    pos = int(pos_per_feature[f])
    threshold = float((xs[pos, f] + xs[pos + 1, f]) / 2.0)
    if threshold >= xs[pos + 1, f]:
        # adjacent floats: the midpoint rounded up and would empty the right
        # child, so split exactly at the lower value instead
        threshold = float(xs[pos, f])
    return f, threshold, gain


def _build_tree(
    X: np.ndarray,
    residual: np.ndarray,
    rows: np.ndarray,
    feature_ids: np.ndarray,
    config: GBRTConfig,
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    # depth-first build keeps node ids stable for serialization
    def build(idx: np.ndarray, depth: int) -> int:
        node = add_node()
        sub = X[np.ix_(idx, feature_ids)]
        res = residual[idx]
        split = None
        if depth < config.max_depth:
            split = best_split(sub, res, config.min_samples_leaf)
        if split is None:
            value[node] = float(res.mean())
            return node
        f_local, thr, _ = split
        f_global = int(feature_ids[f_local])
        mask = X[idx, f_global] <= thr
        left_id = build(idx[mask], depth + 1)
        right_id = build(idx[~mask], depth + 1)
        feature[node] = f_global
        threshold[node] = thr
        left[node] = left_id
        right[node] = right_id
        return node

    build(rows, 0)
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def fit_gbrt(X: np.ndarray, y: np.ndarray, config: GBRTConfig | None = None) -> GBRTModel:
    config = config or GBRTConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError(f"bad training shapes X={X.shape} y={y.shape}")
    if X.shape[0] < 1:
        raise ValidationError("training set is empty")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("training data contains non-finite values")
    n, d = X.shape
    rng = np.random.default_rng(config.seed)
    base = float(y.mean())
    pred = np.full(n, base)
    trees: list[Tree] = []
    for _ in range(config.num_trees):
        if config.subsample_fraction < 1.0:
            k = max(1, int(round(config.subsample_fraction * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = np.arange(n)
        if config.feature_fraction < 1.0:
            kf = max(1, int(round(config.feature_fraction * d)))
            feats = np.sort(rng.choice(d, size=kf, replace=False))
        else:
            feats = np.arange(d)
        residual = y - pred
        tree = _build_tree(X, residual, rows, feats, config)
        trees.append(tree)
        pred += config.learning_rate * tree.predict(X)
    rmse = float(np.sqrt(np.mean((y - pred) ** 2)))
    return GBRTModel(config, d, base, trees, rmse)


def gbrt_to_dict(model: GBRTModel) -> dict:
    return {
        "config": asdict(model.config),
        "input_dim": model.input_dim,
        "base": model.base,
        "train_rmse": model.train_rmse,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }


def gbrt_from_dict(raw: dict) -> GBRTModel:
    config = GBRTConfig(**raw["config"])
    trees = [
        Tree(
            np.asarray(t["feature"], dtype=np.int64),
            np.asarray(t["threshold"], dtype=np.float64),
            np.asarray(t["left"], dtype=np.int64),
            np.asarray(t["right"], dtype=np.int64),
            np.asarray(t["value"], dtype=np.float64),
        )
        for t in raw["trees"]
    ]
    return GBRTModel(config, int(raw["input_dim"]), float(raw["base"]), trees,
                     float(raw.get("train_rmse", 0.0)))
