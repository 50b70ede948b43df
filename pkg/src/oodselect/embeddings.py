"""Embedding tables for datasets and models.

Tables are JSON files precomputed by an external encoder (or its offline
mock): {"dim": D, "provenance": str, "entries": {name: [floats]}}. The
data-side input of the meta-predictor for a pair is the ID vector
followed by the OOD vector; the model side is either a table entry or a
catalog one-hot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .perf import DatasetPair, ModelCatalog


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    provenance: str
    entries: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError(f"embedding dim must be positive, got {self.dim}")
        for name, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise ValidationError(
                    f"entry {name!r} has dim {vec.shape[0]}, table declares {self.dim}"
                )

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            known = ", ".join(sorted(self.entries))
            raise ValidationError(f"no embedding for {name!r} (have: {known})") from None

    def __len__(self) -> int:
        return len(self.entries)


def load_embeddings(path: str, l2_normalize: bool = False) -> EmbeddingTable:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("dim", "entries"):
        if key not in raw:
            raise ValidationError(f"{path}: missing {key!r}")
    dim = int(raw["dim"])
    entries: dict[str, np.ndarray] = {}
    for name, vals in raw["entries"].items():
        vec = np.asarray(vals, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise ValidationError(
                f"{path}: entry {name!r} has {vec.size} values, expected {dim}"
            )
        if not np.isfinite(vec).all():
            raise ValidationError(f"{path}: entry {name!r} has non-finite values")
        if l2_normalize:
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec = vec / norm
        entries[name] = vec
    if not entries:
        raise ValidationError(f"{path}: table has no entries")
    return EmbeddingTable(dim, str(raw.get("provenance", "")), entries)


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    payload = {
        "dim": table.dim,
        "provenance": table.provenance,
        "entries": {k: [float(x) for x in v] for k, v in table.entries.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def one_hot(catalog: ModelCatalog, name: str) -> np.ndarray:
    """Indicator vector over the catalog's model order."""
    vec = np.zeros(len(catalog))
    vec[catalog.index(name)] = 1.0
    return vec


def pair_data_embedding(table: EmbeddingTable, pair: DatasetPair) -> np.ndarray:
    """Data-side vector of a pair: ID entry followed by OOD entry."""
    return np.concatenate([table[pair.id], table[pair.ood]])


def pair_input(data_embedding: np.ndarray, model_embedding: np.ndarray) -> np.ndarray:
    """Meta-predictor input row: data block first, then the model block."""
    data_embedding = np.asarray(data_embedding, dtype=np.float64)
    model_embedding = np.asarray(model_embedding, dtype=np.float64)
    if data_embedding.ndim != 1 or model_embedding.ndim != 1:
        raise ValidationError("pair_input expects two 1-D vectors")
    return np.concatenate([data_embedding, model_embedding])
