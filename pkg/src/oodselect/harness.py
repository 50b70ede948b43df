"""End-to-end pipeline: featurize pairs, fit selectors, evaluate, gate.

This is the layer the CLI drives. Datasets named in the config are
loaded from disk or synthesized; each benchmark pair is featurized from
its ID train half plus an ID-test/OOD mix; selectors are built per the
config and scored on the test split against the true matrix.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Mapping

import numpy as np

from . import baselines as bl
from .embeddings import EmbeddingTable, load_embeddings, one_hot, pair_data_embedding
from .errors import ValidationError
from .evaluation import (
    SelectionRecord,
    evaluate_selector,
    mean_rank,
    pairwise_tests,
)
from .images import ImageDataset, conform, load_dataset, mix_datasets, synth_dataset
from .metafeatures import (
    FeatureConfig,
    MetaFeatureVector,
    compose_pair_features,
    read_features_csv,
    validate_softmax,
)
from .perf import (
    DatasetPair,
    ModelCatalog,
    PerformanceMatrix,
    SplitSpec,
    load_catalog,
    load_performance_matrix,
    load_split,
)
from .predictor import MetaPredictor, build_training_set, fit_meta_predictor
from .predictor import select as predictor_select
from .gbrt import GBRTConfig
from .mlp import MLPConfig
from .resources import resolve_path


def load_benchmark(config: Mapping[str, Any]) -> tuple[ModelCatalog, PerformanceMatrix, SplitSpec]:
    catalog = load_catalog(resolve_path(config["data"]["catalog"]))
    matrix = load_performance_matrix(resolve_path(config["data"]["matrix"]), catalog)
    split = load_split(resolve_path(config["data"]["split"]), matrix)
    return catalog, matrix, split


def feature_config(config: Mapping[str, Any]) -> FeatureConfig:
    f = config["features"]
    return FeatureConfig(
        glcm_levels=int(f["glcm_levels"]),
        hist_bins=int(f["hist_bins"]),
        sobel_white_threshold=float(f["sobel_white_threshold"]),
        entropy_bins=int(f["entropy_bins"]),
        landmarker_seed=int(f["landmarker_seed"]),
        landmarker_scale=float(f["landmarker_scale"]),
        landmarker_fallback=bool(f["landmarker_fallback"]),
    )


def gbrt_config(config: Mapping[str, Any]) -> GBRTConfig:
    g = config["predictor"]["gbrt"]
    return GBRTConfig(
        num_trees=int(g["num_trees"]),
        max_depth=int(g["max_depth"]),
        learning_rate=float(g["learning_rate"]),
        min_samples_leaf=int(g["min_samples_leaf"]),
        subsample_fraction=float(g["subsample_fraction"]),
        feature_fraction=float(g["feature_fraction"]),
        seed=int(g["seed"]),
    )


def mlp_config(raw: Mapping[str, Any]) -> MLPConfig:
    return MLPConfig(
        hidden=tuple(int(h) for h in raw["hidden"]),
        activation=str(raw["activation"]),
        epochs=int(raw["epochs"]),
        batch_size=int(raw["batch_size"]),
        step_size=float(raw["step_size"]),
        l2=float(raw["l2"]),
        seed=int(raw["seed"]),
    )


def build_named_dataset(name: str, spec: Mapping[str, Any]) -> ImageDataset:
    if "path" in spec and spec["path"]:
        return load_dataset(resolve_path(spec["path"]), name)
    s = spec["synthetic"]
    return synth_dataset(
        seed=int(s["seed"]),
        n=int(s["n"]),
        h=int(s["h"]),
        w=int(s["w"]),
        c=int(s["c"]),
        num_classes=int(s["num_classes"]),
        noise=int(s.get("noise", 25)),
        name=name,
    )


class PairAssembler:
    """Builds the (train half, ID-test + OOD mix) view of each pair."""

    def __init__(self, config: Mapping[str, Any]) -> None:
        self.specs = config["data"]["datasets"]
        self.train_fraction = float(config["data"]["train_fraction"])
        self.ood_sample_size = int(config["data"]["ood_sample_size"])
        self._cache: dict[str, ImageDataset] = {}

    def dataset(self, name: str) -> ImageDataset:
        if name not in self._cache:
            if name not in self.specs:
                raise ValidationError(f"no dataset spec for {name!r}")
            self._cache[name] = build_named_dataset(name, self.specs[name])
        return self._cache[name]

    def halves(self, name: str) -> tuple[ImageDataset, ImageDataset]:
        ds = self.dataset(name)
        cut = int(ds.num_images * self.train_fraction)
        if cut < 2 or ds.num_images - cut < 2:
            raise ValidationError(
                f"dataset {name!r} too small to split at {self.train_fraction}"
            )
        return ds.slice(0, cut, f"{name}-train"), ds.slice(cut, ds.num_images, f"{name}-test")

    def assemble(self, pair: DatasetPair) -> tuple[ImageDataset, ImageDataset]:
        id_train, id_test = self.halves(pair.id)
        _, ood_test = self.halves(pair.ood)
        ood_part = conform(ood_test, id_test.shape, f"{pair.ood}-conf")
        take = min(self.ood_sample_size, ood_part.num_images)
        mix = mix_datasets(id_test, ood_part.slice(0, take), f"{pair.key()}-mix")
        return id_train, mix


def _load_softmax_csv(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [[float(v) for v in rec] for rec in csv.reader(fh) if rec]
    return validate_softmax(np.asarray(rows))


def featurize_pairs(
    config: Mapping[str, Any],
    pairs: list[DatasetPair],
    threads: int = 1,
) -> dict[DatasetPair, MetaFeatureVector]:
    """Meta-features for each pair; thread count never changes the values."""
    assembler = PairAssembler(config)
    fcfg = feature_config(config)
    softmax_files = config["features"]["softmax_files"] or {}
    # warm the dataset cache serially so workers only read shared state
    for pair in pairs:
        assembler.dataset(pair.id)
        assembler.dataset(pair.ood)

    def one(pair: DatasetPair) -> MetaFeatureVector:
        train, mix = assembler.assemble(pair)
        softmax = None
        key = pair.key()
        if key in softmax_files:
            softmax = _load_softmax_csv(resolve_path(softmax_files[key]))
        return compose_pair_features(train, mix, softmax, fcfg)

    if threads <= 1:
        results = [one(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, pairs))
    return dict(zip(pairs, results))


def language_pair_embeddings(
    table: EmbeddingTable, pairs: list[DatasetPair]
) -> dict[DatasetPair, np.ndarray]:
    return {p: pair_data_embedding(table, p) for p in pairs}


def embedding_projection(config: Mapping[str, Any]) -> list[tuple[str, str, float, float]]:
    """2-D PCA view of both embedding tables, one row per named entry.

    Each table is centered and projected onto its own top two principal
    axes (plotting left to external tools). Tables with fewer than three
    entries are skipped since a 2-D projection is meaningless there.
    """
    emb_cfg = config["embeddings"]
    rows: list[tuple[str, str, float, float]] = []
    for kind, key in (("dataset", "datasets"), ("model", "models")):
        table = load_embeddings(resolve_path(emb_cfg[key]), emb_cfg["l2_normalize"])
        names = sorted(table.entries)
        if len(names) < 3:
            continue
        stacked = np.vstack([table[n] for n in names])
        centered = stacked - stacked.mean(axis=0)
        scores, _ = bl.truncated_svd(centered, 2)
        for name, (x, y) in zip(names, scores):
            rows.append((kind, name, float(x), float(y)))
    return rows


def write_projection_csv(rows: list[tuple[str, str, float, float]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "name", "x", "y"])
        for kind, name, x, y in rows:
            writer.writerow([kind, name, repr(x), repr(y)])


def train_route(
    config: Mapping[str, Any],
    matrix: PerformanceMatrix,
    split: SplitSpec,
    route: str,
    features: Mapping[DatasetPair, np.ndarray] | None = None,
) -> tuple[MetaPredictor, int]:
    """Fit the meta-predictor on the train split for one input route.

    route "metaood" uses language embeddings for both sides; "metaood_0"
    uses the classical meta-features with one-hot model vectors.
    """
    if route == "metaood":
        emb_cfg = config["embeddings"]
        data_table = load_embeddings(resolve_path(emb_cfg["datasets"]), emb_cfg["l2_normalize"])
        model_table = load_embeddings(resolve_path(emb_cfg["models"]), emb_cfg["l2_normalize"])
        data_embs: Mapping[DatasetPair, np.ndarray] = language_pair_embeddings(
            data_table, list(split.train)
        )
        model_embs = {m: model_table[m] for m in matrix.catalog.models}
    elif route == "metaood_0":
        if features is None:
            raise ValidationError("route metaood_0 needs meta-features; run featurize first")
        data_embs = {p: features[p] for p in split.train}
        model_embs = {m: one_hot(matrix.catalog, m) for m in matrix.catalog.models}
    else:
        raise ValidationError(f"unknown route {route!r} (expected metaood or metaood_0)")
    train_set = build_training_set(
        matrix,
        list(split.train),
        data_embs,
        model_embs,
        config["predictor"]["target_transform"],
    )
    predictor = fit_meta_predictor(
        train_set,
        kind=config["predictor"]["kind"],
        gbrt_config=gbrt_config(config),
        mlp_config=mlp_config(config["predictor"]["mlp"]),
    )
    return predictor, train_set.X.shape[0]


class MetaSelector:
    """Selector view of a fitted meta-predictor."""

    def __init__(
        self,
        name: str,
        predictor: MetaPredictor,
        data_embeddings: Mapping[DatasetPair, np.ndarray],
        model_embeddings: Mapping[str, np.ndarray],
        model_order: tuple[str, ...],
    ) -> None:
        self.name = name
        self._select = predictor_select
        self.predictor = predictor
        self.data_embeddings = data_embeddings
        self.model_embeddings = model_embeddings
        self.model_order = model_order

    def select(self, pair: DatasetPair) -> str:
        if pair not in self.data_embeddings:
            raise ValidationError(f"no data embedding for pair {pair.key()}")
        chosen, _ = self._select(
            self.predictor, self.data_embeddings[pair], self.model_embeddings, self.model_order
        )
        return chosen


def build_selectors(
    config: Mapping[str, Any],
    matrix: PerformanceMatrix,
    split: SplitSpec,
    features: Mapping[DatasetPair, np.ndarray] | None,
) -> dict[str, bl.Selector]:
    """Construct every selector named in baselines.selectors."""
    catalog = matrix.catalog
    names = list(config["baselines"]["selectors"])
    all_pairs = list(split.train) + list(split.test)

    lookup: bl.FeatureLookup | None = None

    def feature_lookup() -> bl.FeatureLookup:
        nonlocal lookup
        if lookup is None:
            if config["baselines"]["use_language_features"]:
                emb_cfg = config["embeddings"]
                table = load_embeddings(resolve_path(emb_cfg["datasets"]), emb_cfg["l2_normalize"])
                feats: Mapping[DatasetPair, np.ndarray] = language_pair_embeddings(table, all_pairs)
            else:
                if features is None:
                    raise ValidationError(
                        "feature-based baselines need meta-features; run featurize first"
                    )
                feats = features
            lookup = bl.FeatureLookup(feats, list(split.train))
        return lookup

    selectors: dict[str, bl.Selector] = {}
    for name in names:
        if name in selectors:
            raise ValidationError(f"selector {name!r} listed twice")
        if name == "metaood":
            predictor, _ = train_route(config, matrix, split, "metaood")
            emb_cfg = config["embeddings"]
            data_table = load_embeddings(resolve_path(emb_cfg["datasets"]), emb_cfg["l2_normalize"])
            model_table = load_embeddings(resolve_path(emb_cfg["models"]), emb_cfg["l2_normalize"])
            selectors[name] = MetaSelector(
                name,
                predictor,
                language_pair_embeddings(data_table, all_pairs),
                {m: model_table[m] for m in catalog.models},
                catalog.models,
            )
        elif name == "metaood_0":
            predictor, _ = train_route(config, matrix, split, "metaood_0", features)
            assert features is not None
            selectors[name] = MetaSelector(
                name,
                predictor,
                {p: np.asarray(features[p]) for p in all_pairs},
                {m: one_hot(catalog, m) for m in catalog.models},
                catalog.models,
            )
        elif name == "gb":
            selectors[name] = bl.GlobalBestSelector(matrix, split.train)
        elif name == "random":
            selectors[name] = bl.RandomSelector(catalog, int(config["baselines"]["random_seed"]))
        elif name.startswith("fixed:"):
            selectors[name] = bl.FixedSelector(catalog, name.split(":", 1)[1])
        elif name == "isac":
            isac = config["baselines"]["isac"]
            selectors[name] = bl.IsacSelector(
                matrix, feature_lookup(), k=int(isac["k"]), seed=int(isac["seed"])
            )
        elif name == "argosmart":
            selectors[name] = bl.ArgosmartSelector(matrix, feature_lookup())
        elif name == "alors":
            alors = config["baselines"]["alors"]
            selectors[name] = bl.AlorsSelector(
                matrix,
                feature_lookup(),
                rank=int(alors["rank"]),
                seed=int(alors["seed"]),
                iterations=int(alors["iterations"]),
            )
        elif name == "ncf":
            if not config["baselines"]["ncf_enabled"]:
                raise ValidationError(
                    "selector 'ncf' is disabled; set baselines.ncf_enabled to true"
                )
            selectors[name] = bl.NcfSelector(
                matrix, feature_lookup(), mlp_config(config["baselines"]["ncf"])
            )
        elif name == "llm":
            path = config["baselines"]["llm_selections"]
            if not path:
                raise ValidationError("selector 'llm' needs baselines.llm_selections")
            selectors[name] = bl.PrecomputedSelector.from_file(
                catalog, resolve_path(path), name="llm"
            )
        elif name == "oracle":
            selectors[name] = bl.OracleSelector(matrix)
        elif name == "anti_oracle":
            selectors[name] = bl.AntiOracleSelector(matrix)
        else:
            raise ValidationError(f"unknown selector {name!r}")
    return selectors


def run_evaluation(
    config: Mapping[str, Any],
    matrix: PerformanceMatrix,
    split: SplitSpec,
    features: Mapping[DatasetPair, np.ndarray] | None,
) -> tuple[dict[str, list[SelectionRecord]], list[dict]]:
    selectors = build_selectors(config, matrix, split, features)
    records = {
        name: evaluate_selector(sel, matrix, list(split.test))
        for name, sel in selectors.items()
    }
    reference = config["evaluation"]["reference"]
    pw: list[dict] = []
    if reference in records and len(records) > 1:
        pw = pairwise_tests(records, reference, config["evaluation"]["alternative"])
    return records, pw


def random_band_mean(
    config: Mapping[str, Any],
    matrix: PerformanceMatrix,
    split: SplitSpec,
    num_seeds: int,
) -> float:
    """Monte-Carlo mean rank of the random selector over `num_seeds` seeds."""
    means = []
    for seed in range(num_seeds):
        sel = bl.RandomSelector(matrix.catalog, seed)
        means.append(mean_rank(evaluate_selector(sel, matrix, list(split.test))))
    return float(np.mean(means))


def threshold_checks(
    config: Mapping[str, Any],
    matrix: PerformanceMatrix,
    split: SplitSpec,
    records: Mapping[str, list[SelectionRecord]],
) -> dict[str, Any]:
    """Acceptance gate of the reproduction run."""
    thresholds = config["evaluation"]["thresholds"]
    checks: list[dict[str, Any]] = []

    def add(name: str, passed: bool, detail: str) -> None:
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    if "oracle" in records:
        target = float(thresholds["oracle_mean_rank"])
        value = mean_rank(records["oracle"])
        add("oracle_mean_rank", value == target, f"oracle mean rank {value} (target {target})")

    mc = None
    if "metaood" in records and "gb" in records:
        gap = float(thresholds["metaood_minus_gb_max"])
        meta = mean_rank(records["metaood"])
        gb = mean_rank(records["gb"])
        add(
            "metaood_vs_gb",
            meta <= gb + gap,
            f"metaood mean rank {meta}, gb {gb}, allowed gap {gap}",
        )
        lo, hi = (float(v) for v in thresholds["random_band"])
        mc = random_band_mean(config, matrix, split, int(config["evaluation"]["random_band_seeds"]))
        add("random_band", lo <= mc <= hi, f"random MC mean rank {mc}, band [{lo}, {hi}]")
        add(
            "below_random",
            meta < mc and gb < mc,
            f"metaood {meta} and gb {gb} vs random MC {mc}",
        )
    return {
        "checks": checks,
        "random_mc_mean_rank": mc,
        "all_passed": all(c["passed"] for c in checks),
    }
