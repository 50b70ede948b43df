"""Classical meta-feature embedding of an ID/OOD dataset pair.

A pair is described by a fixed-length vector laid out as:

- statistical block over the per-image channel-mean distribution,
  28 features x 3 channels x {train, test}          (168)
- image property block, 45 features x {train, test}  (90)
- dataset-level block                                 (5)
- landmarker block over the test-set softmax         (10)

for a total of 273 values (FEATURE_SCHEMA_LENGTH). Ratios that hit 0/0
are replaced by the sentinel 0 and reported in the diagnostics list, so
degenerate inputs never poison a whole vector.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .images import ImageDataset, convert_channels
from .imagefeatures import IMAGE_FEATURE_NAMES, image_property_features
from .perf import DatasetPair

STAT_FEATURE_NAMES: tuple[str, ...] = (
    "mean", "median", "variance", "min", "max", "std",
    "q1", "q25", "q75", "q99", "iqr",
    "normalized_mean", "normalized_median", "range",
    "gini", "mad", "aad", "quartile_dispersion", "coeff_variation",
    "normality",
    "moment5", "moment6", "moment7", "moment8", "moment9", "moment10",
    "skewness", "kurtosis",
)

LANDMARK_FEATURE_NAMES: tuple[str, ...] = (
    "top1_mean", "top1_std", "top1_min", "top1_max",
    "entropy_mean", "range_mean", "top2_mean", "margin_mean",
    "top1_skewness", "top1_kurtosis",
)

DATASET_FEATURE_NAMES: tuple[str, ...] = (
    "num_samples", "num_features", "image_dim", "num_classes", "emd_intensity",
)


@dataclass(frozen=True)
class FeatureConfig:
    """Constants of the feature extractor. Values here define the schema."""

    glcm_levels: int = 8
    hist_bins: int = 32
    sobel_white_threshold: float = 0.5
    entropy_bins: int = 256
    landmarker_seed: int = 0
    landmarker_scale: float = 4.0
    landmarker_fallback: bool = True


def stat_features(x: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """28 distribution statistics of a 1-D sample (population moments).

    Percentiles use linear interpolation between closest ranks. Undefined
    ratios (zero variance or zero denominators) produce sentinel 0 entries,
    returned alongside their diagnostic notes.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError(f"stat_features needs a 1-D sample of size >= 2, got shape {x.shape}")
    diagnostics: list[str] = []
    out: dict[str, float] = {}

    def sentinel(name: str, reason: str) -> float:
        diagnostics.append(f"{name}: {reason}, sentinel 0")
        return 0.0

    mean = float(x.mean())
    median = float(np.median(x))
    std = float(x.std())
    xmin, xmax = float(x.min()), float(x.max())
    q1, q25, q75, q99 = (float(np.percentile(x, q)) for q in (1, 25, 75, 99))
    out["mean"] = mean
    out["median"] = median
    out["variance"] = float(x.var())
    out["min"] = xmin
    out["max"] = xmax
    out["std"] = std
    out["q1"], out["q25"], out["q75"], out["q99"] = q1, q25, q75, q99
    out["iqr"] = q75 - q25
    out["normalized_mean"] = mean / xmax if xmax != 0.0 else sentinel("normalized_mean", "max is 0")
    out["normalized_median"] = (
        median / xmax if xmax != 0.0 else sentinel("normalized_median", "max is 0")
    )
    out["range"] = xmax - xmin

    total = float(x.sum())
    if total != 0.0:
        ranks = np.arange(1, x.size + 1, dtype=np.float64)
        out["gini"] = float(2.0 * (ranks * np.sort(x)).sum() / (x.size * total) - (x.size + 1) / x.size)
    else:
        out["gini"] = sentinel("gini", "sum is 0")

    abs_dev = np.abs(x - median)
    out["mad"] = float(np.median(abs_dev))
    out["aad"] = float(abs_dev.mean())
    qsum = q75 + q25
    out["quartile_dispersion"] = (
        (q75 - q25) / qsum if qsum != 0.0 else sentinel("quartile_dispersion", "q75+q25 is 0")
    )
    out["coeff_variation"] = std / mean if mean != 0.0 else sentinel("coeff_variation", "mean is 0")

    centered = x - mean
    if std > 0.0:
        z = centered / std
        skew = float((z**3).mean())
        kurt = float((z**4).mean())
        out["skewness"] = skew
        out["kurtosis"] = kurt
        for k in range(5, 11):
            out[f"moment{k}"] = float((z**k).mean())
        out["normality"] = x.size / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)
    else:
        for name in ("skewness", "kurtosis", "normality", *(f"moment{k}" for k in range(5, 11))):
            out[name] = sentinel(name, "zero variance")

    return np.array([out[n] for n in STAT_FEATURE_NAMES]), diagnostics


def validate_softmax(softmax: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    s = np.asarray(softmax, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
        raise ValidationError(f"softmax must be a non-empty 2-D matrix, got shape {s.shape}")
    if (s < 0.0).any():
        bad = int(np.argwhere(s < 0.0)[0][0])
        raise ValidationError(f"softmax row {bad} has a negative entry")
    sums = s.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if off.any():
        bad = int(np.argmax(off))
        raise ValidationError(
            f"softmax row {bad} sums to {sums[bad]!r}, outside 1 +/- {tol}"
        )
    return s


def landmark_features(softmax: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """10 statistics of per-sample prediction confidence on the test set."""
    s = validate_softmax(softmax)
    diagnostics: list[str] = []
    srt = np.sort(s, axis=1)[:, ::-1]
    top1 = srt[:, 0]
    if s.shape[1] >= 2:
        top2 = srt[:, 1]
    else:
        diagnostics.append("top2: single-class softmax, sentinel 0")
        top2 = np.zeros_like(top1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(s > 0.0, np.log(s), 0.0)
    entropy = -(s * logs).sum(axis=1)
    out = {
        "top1_mean": float(top1.mean()),
        "top1_std": float(top1.std()),
        "top1_min": float(top1.min()),
        "top1_max": float(top1.max()),
        "entropy_mean": float(entropy.mean()),
        "range_mean": float((top1 - srt[:, -1]).mean()),
        "top2_mean": float(top2.mean()),
        "margin_mean": float((top1 - top2).mean()),
    }
    std = top1.std()
    if std > 0.0:
        z = (top1 - top1.mean()) / std
        out["top1_skewness"] = float((z**3).mean())
        out["top1_kurtosis"] = float((z**4).mean())
    else:
        diagnostics.append("top1_skewness: zero variance, sentinel 0")
        diagnostics.append("top1_kurtosis: zero variance, sentinel 0")
        out["top1_skewness"] = 0.0
        out["top1_kurtosis"] = 0.0
    return np.array([out[n] for n in LANDMARK_FEATURE_NAMES]), diagnostics


def fallback_softmax(ds: ImageDataset, num_classes: int, seed: int, scale: float = 4.0) -> np.ndarray:
    """Seeded random-projection head standing in for a trained classifier.

    Projects per-image channel means through a fixed Gaussian matrix and
    applies softmax. Deterministic in (dataset, num_classes, seed, scale).
    """
    k = num_classes if num_classes >= 2 else 10
    rgb = convert_channels(ds.images, 3).astype(np.float64)
    feats = rgb.mean(axis=(1, 2)) / 255.0  # (n, 3)
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, k)) * scale
    logits = feats @ w
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def emd_1d(p: np.ndarray, q: np.ndarray, bin_width: float = 1.0) -> float:
    """Earth mover's distance between two aligned 1-D histograms.

    Closed form for unit transport cost per bin step: the sum of absolute
    CDF differences times the bin width. Inputs must have equal length and
    equal total mass.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValidationError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    if (p < 0.0).any() or (q < 0.0).any():
        raise ValidationError("histograms must be non-negative")
    if abs(float(p.sum() - q.sum())) > 1e-9:
        raise ValidationError(
            f"histogram masses differ: {float(p.sum())!r} vs {float(q.sum())!r}"
        )
    return float(np.abs(np.cumsum(p - q)).sum() * bin_width)


def intensity_histogram(ds: ImageDataset, bins: int) -> np.ndarray:
    """Normalized histogram of pixel intensities over the whole dataset."""
    rgb = convert_channels(ds.images, 3).astype(np.float64)
    gray = rgb.mean(axis=3)
    counts, _ = np.histogram(gray, bins=bins, range=(0.0, 256.0))
    return counts / gray.size


def dataset_features(
    train: ImageDataset, test: ImageDataset, config: FeatureConfig
) -> tuple[np.ndarray, list[str]]:
    """Size/shape block: sample count, feature count (h*w*c), pixels per
    channel (h*w), train class count, and train-vs-test intensity EMD."""
    h, w, c = train.shape
    emd = emd_1d(
        intensity_histogram(train, config.hist_bins),
        intensity_histogram(test, config.hist_bins),
        bin_width=1.0,
    )
    values = np.array(
        [
            float(train.num_images + test.num_images),
            float(h * w * c),
            float(h * w),
            float(train.num_classes()),
            emd,
        ]
    )
    return values, []


def channel_means(ds: ImageDataset) -> np.ndarray:
    """Per-image mean of each canonical RGB channel, shape (n, 3), in [0, 255]."""
    rgb = convert_channels(ds.images, 3).astype(np.float64)
    return rgb.mean(axis=(1, 2))


def feature_schema() -> tuple[str, ...]:
    names: list[str] = []
    for role in ("train", "test"):
        for ch in ("r", "g", "b"):
            names.extend(f"stat.{role}.{ch}.{n}" for n in STAT_FEATURE_NAMES)
    for role in ("train", "test"):
        names.extend(f"image.{role}.{n}" for n in IMAGE_FEATURE_NAMES)
    names.extend(f"dataset.{n}" for n in DATASET_FEATURE_NAMES)
    names.extend(f"landmark.{n}" for n in LANDMARK_FEATURE_NAMES)
    return tuple(names)


FEATURE_SCHEMA: tuple[str, ...] = feature_schema()
FEATURE_SCHEMA_LENGTH: int = len(FEATURE_SCHEMA)


@dataclass
class MetaFeatureVector:
    values: np.ndarray
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (FEATURE_SCHEMA_LENGTH,):
            raise ValidationError(
                f"feature vector has shape {self.values.shape}, "
                f"schema expects ({FEATURE_SCHEMA_LENGTH},)"
            )


def compose_pair_features(
    train: ImageDataset,
    test: ImageDataset,
    softmax: np.ndarray | None,
    config: FeatureConfig | None = None,
) -> MetaFeatureVector:
    """Full meta-feature vector of one pair.

    `softmax` is the test-set class-probability matrix of a classifier
    trained on the ID data; when None, a seeded fallback head is used
    unless the config disables it.
    """
    cfg = config or FeatureConfig()
    values: list[np.ndarray] = []
    diagnostics: list[str] = []

    means = {"train": channel_means(train), "test": channel_means(test)}
    for role in ("train", "test"):
        for k, ch in enumerate(("r", "g", "b")):
            vec, diag = stat_features(means[role][:, k])
            values.append(vec)
            diagnostics.extend(f"stat.{role}.{ch}.{d}" for d in diag)
    for role, ds in (("train", train), ("test", test)):
        vec, diag = image_property_features(
            ds,
            glcm_levels=cfg.glcm_levels,
            hist_bins=cfg.hist_bins,
            sobel_white_threshold=cfg.sobel_white_threshold,
            entropy_bins=cfg.entropy_bins,
        )
        values.append(vec)
        diagnostics.extend(f"image.{role}.{d}" for d in diag)

    vec, diag = dataset_features(train, test, cfg)
    values.append(vec)
    diagnostics.extend(f"dataset.{d}" for d in diag)

    if softmax is None:
        if not cfg.landmarker_fallback:
            raise ValidationError(
                f"no softmax provided for test dataset {test.name!r} "
                "and the fallback head is disabled"
            )
        softmax = fallback_softmax(
            test, train.num_classes(), cfg.landmarker_seed, cfg.landmarker_scale
        )
    vec, diag = landmark_features(softmax)
    values.append(vec)
    diagnostics.extend(f"landmark.{d}" for d in diag)

    return MetaFeatureVector(np.concatenate(values), diagnostics)


def write_features_csv(
    rows: Sequence[tuple[DatasetPair, MetaFeatureVector]], path: str
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_dataset", "ood_dataset", *FEATURE_SCHEMA])
        for pair, feat in rows:
            writer.writerow([pair.id, pair.ood, *[repr(float(v)) for v in feat.values]])


def read_features_csv(path: str) -> dict[DatasetPair, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[2:]) != FEATURE_SCHEMA:
            raise ValidationError(f"{path}: header does not match the feature schema")
        out: dict[DatasetPair, np.ndarray] = {}
        for rec in reader:
            if not rec:
                continue
            pair = DatasetPair(rec[0], rec[1])
            if pair in out:
                raise ValidationError(f"{path}: duplicate pair {pair.key()}")
            out[pair] = np.array([float(v) for v in rec[2:]])
    return out


def write_diagnostics(diag: Mapping[str, Sequence[str]], path: str) -> None:
    payload = [{"pair": k, "notes": list(v)} for k, v in diag.items() if v]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
