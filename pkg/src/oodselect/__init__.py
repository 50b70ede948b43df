"""Meta-learned selection of OOD detection models.

Selects a detector for a new ID/OOD dataset pair by regressing historical
detector performance onto embeddings of the pair and of the detectors,
and picking the detector with the highest predicted score. Ships the
historical benchmark matrix, baseline selectors, and an evaluation
harness as fixtures so the whole pipeline runs offline.
"""

__version__ = "0.1.0"

from .errors import TrainingDivergedError, ValidationError
from .perf import (
    DatasetPair,
    ModelCatalog,
    PerformanceMatrix,
    SplitSpec,
    load_performance_matrix,
    load_split,
    rank_row,
)

__all__ = [
    "DatasetPair",
    "ModelCatalog",
    "PerformanceMatrix",
    "SplitSpec",
    "TrainingDivergedError",
    "ValidationError",
    "load_performance_matrix",
    "load_split",
    "rank_row",
    "__version__",
]
