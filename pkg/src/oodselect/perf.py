"""Historical performance store.

Holds the benchmark matrix of detector AUROC scores over ID/OOD dataset
pairs, the model catalog, and train/test splits. The matrix is the
ground truth every selector is scored against.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, order=True)
class DatasetPair:
    """One benchmark task: detect samples of `ood` against ID data `id`."""

    id: str
    ood: str

    def key(self) -> str:
        return f"{self.id}->{self.ood}"


@dataclass(frozen=True)
class ModelCatalog:
    """Ordered detector names plus the text descriptions used for embeddings."""

    models: tuple[str, ...]
    model_descriptions: Mapping[str, str] = field(default_factory=dict)
    dataset_descriptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.models:
            raise ValidationError("catalog must list at least one model")
        if len(set(self.models)) != len(self.models):
            raise ValidationError("catalog contains duplicate model names")

    def index(self, name: str) -> int:
        try:
            return self.models.index(name)
        except ValueError:
            raise ValidationError(f"unknown model name: {name!r}") from None

    def __len__(self) -> int:
        return len(self.models)


def load_catalog(path: str) -> ModelCatalog:
    """Read a catalog JSON file with model and dataset entries."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if "models" not in raw or not isinstance(raw["models"], list):
        raise ValidationError(f"catalog file {path} has no 'models' list")
    names = []
    mdesc = {}
    for entry in raw["models"]:
        names.append(entry["name"])
        mdesc[entry["name"]] = entry.get("description", "")
    ddesc = {e["name"]: e.get("description", "") for e in raw.get("datasets", [])}
    return ModelCatalog(tuple(names), mdesc, ddesc)


class PerformanceMatrix:
    """Dense pair-by-model AUROC matrix with NaN marking missing cells."""

    def __init__(
        self,
        pairs: Sequence[DatasetPair],
        catalog: ModelCatalog,
        values: np.ndarray,
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(pairs), len(catalog)):
            raise ValidationError(
                f"matrix shape {values.shape} does not match "
                f"{len(pairs)} pairs x {len(catalog)} models"
            )
        if len(set(pairs)) != len(pairs):
            raise ValidationError("duplicate dataset pairs in matrix")
        finite = values[~np.isnan(values)]
        if finite.size and (finite.min() < 0.0 or finite.max() > 100.0):
            raise ValidationError("AUROC values must lie in [0, 100]")
        self.pairs: tuple[DatasetPair, ...] = tuple(pairs)
        self.catalog = catalog
        self.values = values
        self._row_index = {p: i for i, p in enumerate(self.pairs)}

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    @property
    def num_models(self) -> int:
        return len(self.catalog)

    def has_pair(self, pair: DatasetPair) -> bool:
        return pair in self._row_index

    def row_index(self, pair: DatasetPair) -> int:
        try:
            return self._row_index[pair]
        except KeyError:
            raise ValidationError(f"pair {pair.key()} not in matrix") from None

    def row(self, pair: DatasetPair) -> np.ndarray:
        return self.values[self.row_index(pair)]

    def value(self, pair: DatasetPair, model: str) -> float:
        return float(self.row(pair)[self.catalog.index(model)])

    def rows(self, pairs: Iterable[DatasetPair]) -> np.ndarray:
        return self.values[[self.row_index(p) for p in pairs]]

    def best_model(self, pair: DatasetPair) -> str:
        """Name of the row argmax; ties go to the lowest catalog index."""
        row = self.row(pair)
        if np.all(np.isnan(row)):
            raise ValidationError(f"pair {pair.key()} has no scores")
        idx = int(np.nanargmax(row))
        return self.catalog.models[idx]

    def dataset_names(self) -> tuple[str, ...]:
        """All dataset names appearing on either side of a pair, in first-seen order."""
        seen: dict[str, None] = {}
        for p in self.pairs:
            seen.setdefault(p.id, None)
            seen.setdefault(p.ood, None)
        return tuple(seen)


def load_performance_matrix(path: str, catalog: ModelCatalog | None = None) -> PerformanceMatrix:
    """Read a matrix CSV: header id_dataset,ood_dataset,<models>; empty cell = missing."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id_dataset" or header[1] != "ood_dataset":
            raise ValidationError(
                f"{path}: header must start with id_dataset,ood_dataset and list models"
            )
        model_names = tuple(header[2:])
        if catalog is None:
            catalog = ModelCatalog(model_names)
        elif catalog.models != model_names:
            raise ValidationError(
                f"{path}: matrix columns {model_names} do not match catalog {catalog.models}"
            )
        pairs: list[DatasetPair] = []
        rows: list[list[float]] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}"
                )
            pairs.append(DatasetPair(rec[0], rec[1]))
            vals = []
            for cell, model in zip(rec[2:], model_names):
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: bad value {cell!r} for {model}"
                    ) from None
                if math.isnan(v):
                    raise ValidationError(f"{path}:{lineno}: literal NaN not allowed")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return PerformanceMatrix(pairs, catalog, np.asarray(rows))


def save_performance_matrix(matrix: PerformanceMatrix, path: str) -> None:
    """Write the CSV form; NaN cells become empty strings. Round-trips exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_dataset", "ood_dataset", *matrix.catalog.models])
        for pair, row in zip(matrix.pairs, matrix.values):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
            writer.writerow([pair.id, pair.ood, *cells])


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/test lists of pairs, both present in the matrix."""

    train: tuple[DatasetPair, ...]
    test: tuple[DatasetPair, ...]


def load_split(path: str, matrix: PerformanceMatrix) -> SplitSpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out: dict[str, tuple[DatasetPair, ...]] = {}
    for side in ("train", "test"):
        if side not in raw or not isinstance(raw[side], list) or not raw[side]:
            raise ValidationError(f"{path}: split needs a non-empty {side!r} list")
        pairs = tuple(DatasetPair(e["id"], e["ood"]) for e in raw[side])
        for p in pairs:
            if not matrix.has_pair(p):
                raise ValidationError(f"{path}: split pair {p.key()} not in matrix")
        if len(set(pairs)) != len(pairs):
            raise ValidationError(f"{path}: duplicate pairs in {side} split")
        out[side] = pairs
    overlap = set(out["train"]) & set(out["test"])
    if overlap:
        names = ", ".join(sorted(p.key() for p in overlap))
        raise ValidationError(f"{path}: train/test overlap: {names}")
    return SplitSpec(out["train"], out["test"])


def save_split(split: SplitSpec, path: str) -> None:
    payload = {
        side: [{"id": p.id, "ood": p.ood} for p in getattr(split, side)]
        for side in ("train", "test")
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def midranks_desc(values: np.ndarray) -> np.ndarray:
    """Midranks of a 1-D array, rank 1 = largest value, ties averaged."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    order = np.argsort(-v, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and v[order[j + 1]] == v[order[i]]:
            j += 1
        # positions i..j (0-based) share the averaged 1-based rank
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def rank_row(matrix: PerformanceMatrix, pair: DatasetPair) -> np.ndarray:
    """Per-model ranks for one pair, best AUROC = 1. Missing cells stay NaN."""
    row = matrix.row(pair)
    valid = ~np.isnan(row)
    if valid.sum() < 2:
        raise ValidationError(f"pair {pair.key()} has fewer than two scores to rank")
    out = np.full(row.shape, np.nan)
    out[valid] = midranks_desc(row[valid])
    return out
