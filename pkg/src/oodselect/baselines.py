"""Baseline selectors the meta-predictor is compared against.

Every selector exposes `name` and `select(pair) -> model name`, with all
fitting done in the constructor. Feature-based baselines consume the
classical meta-feature vectors standardized over the training pairs.
Ties anywhere resolve to the lowest index (catalog order, training-pair
order, or cluster order), which keeps every selector deterministic.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import ValidationError
from .mlp import MLPConfig, MLPModel, fit_mlp
from .perf import DatasetPair, ModelCatalog, PerformanceMatrix


class Selector(Protocol):
    name: str

    def select(self, pair: DatasetPair) -> str: ...


def _nan_argmax(row: np.ndarray) -> int:
    if np.all(np.isnan(row)):
        raise ValidationError("row has no observed scores")
    return int(np.nanargmax(row))


def column_means(values: np.ndarray) -> np.ndarray:
    """Per-model mean over observed cells; models never observed get the
    global observed mean."""
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    if counts.sum() == 0:
        raise ValidationError("matrix block has no observed scores")
    sums = np.where(observed, values, 0.0).sum(axis=0)
    overall = float(sums.sum() / counts.sum())
    return np.where(counts > 0, sums / np.maximum(counts, 1), overall)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


class FeatureLookup:
    """Standardized feature access shared by the feature-based baselines."""

    def __init__(
        self,
        features: Mapping[DatasetPair, np.ndarray],
        train_pairs: Sequence[DatasetPair],
    ) -> None:
        missing = [p for p in train_pairs if p not in features]
        if missing:
            raise ValidationError(f"no features for pair {missing[0].key()}")
        self.features = features
        self.train_pairs = list(train_pairs)
        X = np.vstack([features[p] for p in train_pairs])
        self.standardizer = Standardizer.fit(X)
        self.train_X = self.standardizer.apply(X)

    def query(self, pair: DatasetPair) -> np.ndarray:
        if pair not in self.features:
            raise ValidationError(f"no features for pair {pair.key()}")
        return self.standardizer.apply(self.features[pair])

    def nearest_train_index(self, pair: DatasetPair) -> int:
        d = np.linalg.norm(self.train_X - self.query(pair), axis=1)
        return int(np.argmin(d))


class GlobalBestSelector:
    """Model with the highest mean observed score over the training pairs."""

    def __init__(self, matrix: PerformanceMatrix, train_pairs: Sequence[DatasetPair]) -> None:
        self.name = "gb"
        train = matrix.rows(train_pairs)
        self._choice = matrix.catalog.models[_nan_argmax(column_means(train))]

    def select(self, pair: DatasetPair) -> str:
        return self._choice


class FixedSelector:
    def __init__(self, catalog: ModelCatalog, model: str) -> None:
        catalog.index(model)  # validates membership
        self.name = f"fixed:{model}"
        self._choice = model

    def select(self, pair: DatasetPair) -> str:
        return self._choice


class RandomSelector:
    """Uniform pick, seeded per pair so call order cannot change results."""

    def __init__(self, catalog: ModelCatalog, seed: int = 0) -> None:
        self.name = "random"
        self.catalog = catalog
        self.seed = seed

    def select(self, pair: DatasetPair) -> str:
        rng = np.random.default_rng([self.seed, zlib.crc32(pair.key().encode("utf-8"))])
        return self.catalog.models[int(rng.integers(0, len(self.catalog)))]


class OracleSelector:
    """Upper bound: reads the true row. Diagnostic only, not a baseline."""

    def __init__(self, matrix: PerformanceMatrix) -> None:
        self.name = "oracle"
        self.matrix = matrix

    def select(self, pair: DatasetPair) -> str:
        return self.matrix.catalog.models[_nan_argmax(self.matrix.row(pair))]


class AntiOracleSelector:
    """Lower bound: picks the true worst model."""

    def __init__(self, matrix: PerformanceMatrix) -> None:
        self.name = "anti_oracle"
        self.matrix = matrix

    def select(self, pair: DatasetPair) -> str:
        row = self.matrix.row(pair)
        if np.all(np.isnan(row)):
            raise ValidationError(f"pair {pair.key()} has no observed scores")
        return self.matrix.catalog.models[int(np.nanargmin(row))]


class PrecomputedSelector:
    """Fixed model per pair, read from a selections JSON file."""

    def __init__(self, catalog: ModelCatalog, selections: Mapping[DatasetPair, str],
                 name: str = "precomputed") -> None:
        for pair, model in selections.items():
            catalog.index(model)
        self.name = name
        self._selections = dict(selections)

    @classmethod
    def from_file(cls, catalog: ModelCatalog, path: str, name: str = "precomputed"
                  ) -> "PrecomputedSelector":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if "selections" not in raw or not isinstance(raw["selections"], list):
            raise ValidationError(f"{path}: missing 'selections' list")
        selections: dict[DatasetPair, str] = {}
        for entry in raw["selections"]:
            # entries carry the pair inline or under a "pair" key
            loc = entry.get("pair", entry)
            pair = DatasetPair(loc["id"], loc["ood"])
            if pair in selections:
                raise ValidationError(f"{path}: duplicate selection for {pair.key()}")
            selections[pair] = entry["model"]
        return cls(catalog, selections, name)

    def select(self, pair: DatasetPair) -> str:
        if pair not in self._selections:
            raise ValidationError(f"no recorded selection for pair {pair.key()}")
        return self._selections[pair]


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with seeded distinct-point init.

    Empty clusters are re-seeded with the farthest point among clusters
    that keep at least one member. Returns (centroids, assignments).
    """
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = X[np.sort(rng.choice(n, size=k, replace=False))].copy()
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d = np.linalg.norm(X[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = np.argmin(d, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        for c in range(k):
            if counts[c] == 0:
                # re-seed with the farthest point whose cluster can spare it;
                # n >= k guarantees some cluster still has two members
                dist = d[np.arange(n), new_assign].copy()
                dist[counts[new_assign] <= 1] = -np.inf
                worst = int(np.argmax(dist))
                counts[new_assign[worst]] -= 1
                new_assign[worst] = c
                counts[c] = 1
        if (new_assign == assign).all():
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = X[assign == c].mean(axis=0)
    return centroids, assign


class IsacSelector:
    """Cluster training pairs; each cluster keeps its best-on-average model."""

    def __init__(
        self,
        matrix: PerformanceMatrix,
        lookup: FeatureLookup,
        k: int = 3,
        seed: int = 0,
    ) -> None:
        self.name = "isac"
        self.lookup = lookup
        self.centroids, assign = kmeans(lookup.train_X, k, seed)
        train_values = matrix.rows(lookup.train_pairs)
        choices = []
        for c in range(k):
            members = train_values[assign == c]
            choices.append(matrix.catalog.models[_nan_argmax(column_means(members))])
        self.cluster_models = choices

    def select(self, pair: DatasetPair) -> str:
        d = np.linalg.norm(self.centroids - self.lookup.query(pair), axis=1)
        return self.cluster_models[int(np.argmin(d))]


class ArgosmartSelector:
    """Best model of the single nearest training pair in feature space."""

    def __init__(self, matrix: PerformanceMatrix, lookup: FeatureLookup) -> None:
        self.name = "argosmart"
        self.lookup = lookup
        self._best = [
            matrix.catalog.models[_nan_argmax(matrix.row(p))] for p in lookup.train_pairs
        ]

    def select(self, pair: DatasetPair) -> str:
        return self._best[self.lookup.nearest_train_index(pair)]


def truncated_svd(
    matrix: np.ndarray, rank: int, seed: int = 0, iterations: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Top right singular vectors by seeded orthogonal iteration on M^T M.

    Returns (U, V) with U = M V of shape (n, rank) and V of shape (m, rank),
    columns sign-fixed so the component of largest magnitude is positive.
    """
    m = matrix.shape[1]
    if not 1 <= rank <= min(matrix.shape):
        raise ValidationError(f"rank must be in [1, {min(matrix.shape)}], got {rank}")
    gram = matrix.T @ matrix
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(m, rank))
    q, _ = np.linalg.qr(q)
    for _ in range(iterations):
        q, _ = np.linalg.qr(gram @ q)
    # order columns by Rayleigh quotient, largest singular value first
    lam = np.einsum("ij,ij->j", q, gram @ q)
    order = np.argsort(-lam, kind="stable")
    v = q[:, order]
    peak = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[peak, np.arange(rank)])
    signs = np.where(signs == 0.0, 1.0, signs)
    v = v * signs
    return matrix @ v, v


class AlorsSelector:
    """Latent-factor baseline: SVD of the training matrix plus a 1-NN map
    from pair features to latent rows."""

    def __init__(
        self,
        matrix: PerformanceMatrix,
        lookup: FeatureLookup,
        rank: int = 3,
        seed: int = 0,
        iterations: int = 100,
    ) -> None:
        self.name = "alors"
        self.lookup = lookup
        self.models = matrix.catalog.models
        train_values = matrix.rows(lookup.train_pairs)
        means = column_means(train_values)
        filled = np.where(np.isnan(train_values), means[None, :], train_values)
        self.U, self.V = truncated_svd(filled, rank, seed, iterations)

    def scores(self, pair: DatasetPair) -> np.ndarray:
        u = self.U[self.lookup.nearest_train_index(pair)]
        return self.V @ u

    def select(self, pair: DatasetPair) -> str:
        return self.models[int(np.argmax(self.scores(pair)))]


class NcfSelector:
    """Feed-forward regressor over (pair features ++ model one-hot)."""

    def __init__(
        self,
        matrix: PerformanceMatrix,
        lookup: FeatureLookup,
        config: MLPConfig | None = None,
    ) -> None:
        self.name = "ncf"
        self.lookup = lookup
        self.models = matrix.catalog.models
        m = len(self.models)
        rows: list[np.ndarray] = []
        targets: list[float] = []
        for i, pair in enumerate(lookup.train_pairs):
            values = matrix.row(pair)
            feat = lookup.train_X[i]
            for j in range(m):
                if np.isnan(values[j]):
                    continue
                onehot = np.zeros(m)
                onehot[j] = 1.0
                rows.append(np.concatenate([feat, onehot]))
                targets.append(values[j] / 100.0)
        self.model: MLPModel = fit_mlp(
            np.vstack(rows), np.asarray(targets), config or MLPConfig()
        )

    def select(self, pair: DatasetPair) -> str:
        feat = self.lookup.query(pair)
        m = len(self.models)
        X = np.tile(np.concatenate([feat, np.zeros(m)]), (m, 1))
        X[:, feat.size :] = np.eye(m)
        return self.models[int(np.argmax(self.model.predict(X)))]
