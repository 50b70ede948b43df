"""Run configuration: defaults, file merging, seed/thread overrides.

A run is described by one JSON document with sections data, features,
embeddings, predictor, baselines, evaluation, and output. Missing keys
take defaults, so an empty config reproduces the shipped benchmark
setup. The merged effective config is emitted next to every run's
outputs and reloads to an identical run.
"""

from __future__ import annotations

import copy
import json
import zlib
from typing import Any, Mapping

from .errors import ValidationError

# canonical dataset shapes for the offline synthetic stand-ins
_SYNTH_SHAPES: dict[str, tuple[int, int, int, int]] = {
    # name: (h, w, c, num_classes)
    "CIFAR-10": (32, 32, 3, 10),
    "CIFAR-100": (32, 32, 3, 100),
    "Imagenet": (64, 64, 3, 1000),
    "FashionMNIST": (28, 28, 1, 10),
    "MNIST": (28, 28, 1, 10),
    "Places365": (32, 32, 3, 365),
    "SVHN": (32, 32, 3, 10),
    "Texture": (48, 48, 3, 47),
    "TIN": (64, 64, 3, 200),
    "SSB_hard": (64, 64, 3, 980),
    "NINCO": (64, 64, 3, 64),
    "iNaturalist": (64, 64, 3, 110),
    "Textures": (48, 48, 3, 47),
    "OpenImage-O": (64, 64, 3, 300),
}

DEFAULT_SELECTORS = (
    "metaood",
    "metaood_0",
    "gb",
    "random",
    "fixed:MSP",
    "fixed:ODIN",
    "isac",
    "argosmart",
    "alors",
    "ncf",
    "llm",
    "oracle",
    "anti_oracle",
)


def _synth_spec(name: str) -> dict[str, Any]:
    h, w, c, classes = _SYNTH_SHAPES[name]
    return {
        "synthetic": {
            "seed": zlib.crc32(name.encode("utf-8")),
            "n": 96,
            "h": h,
            "w": w,
            "c": c,
            "num_classes": classes,
            "noise": 25,
        }
    }


def default_config() -> dict[str, Any]:
    return {
        "data": {
            "matrix": "fixtures/table_b.csv",
            "split": "fixtures/split_default.json",
            "catalog": "fixtures/catalog.json",
            "datasets": {name: _synth_spec(name) for name in _SYNTH_SHAPES},
            "train_fraction": 0.5,
            "ood_sample_size": 48,
            "features_csv": None,
        },
        "features": {
            "glcm_levels": 8,
            "hist_bins": 32,
            "sobel_white_threshold": 0.5,
            "entropy_bins": 256,
            "landmarker_seed": 0,
            "landmarker_scale": 4.0,
            "landmarker_fallback": True,
            "softmax_files": {},
        },
        "embeddings": {
            "datasets": "fixtures/embeddings_datasets.json",
            "models": "fixtures/embeddings_models.json",
            "l2_normalize": False,
        },
        "predictor": {
            "kind": "gbrt",
            "target_transform": "raw",
            "gbrt": {
                "num_trees": 200,
                "max_depth": 4,
                "learning_rate": 0.1,
                "min_samples_leaf": 3,
                "subsample_fraction": 1.0,
                "feature_fraction": 1.0,
                "seed": 0,
            },
            "mlp": {
                "hidden": [64, 32],
                "activation": "tanh",
                "epochs": 200,
                "batch_size": 32,
                "step_size": 0.05,
                "l2": 0.0,
                "seed": 0,
            },
        },
        "baselines": {
            "selectors": list(DEFAULT_SELECTORS),
            "use_language_features": False,
            "isac": {"k": 3, "seed": 0},
            "alors": {"rank": 3, "seed": 0, "iterations": 100},
            "ncf_enabled": True,
            "ncf": {
                "hidden": [32, 16],
                "activation": "tanh",
                "epochs": 100,
                "batch_size": 32,
                "step_size": 0.05,
                "l2": 0.0,
                "seed": 0,
            },
            "random_seed": 0,
            "llm_selections": "fixtures/selections_llm.json",
        },
        "evaluation": {
            "reference": "metaood",
            "alternative": "greater",
            "random_band_seeds": 100,
            "timing": False,
            "thresholds": {
                "oracle_mean_rank": 1.0,
                "metaood_minus_gb_max": 0.5,
                "random_band": [5.0, 7.0],
            },
        },
        "output": {"dir": "out"},
    }


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, Mapping):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


_SECTIONS = ("data", "features", "embeddings", "predictor", "baselines", "evaluation", "output")


def load_config(path: str | None = None, overrides: Mapping | None = None) -> dict[str, Any]:
    """Defaults, then the config file, then programmatic overrides."""
    merged = default_config()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: config root must be an object")
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ValidationError(f"{path}: unknown config sections: {sorted(unknown)}")
        merged = _deep_merge(merged, raw)
    if overrides:
        merged = _deep_merge(merged, overrides)
    validate_config(merged)
    return merged


def validate_config(config: Mapping[str, Any]) -> None:
    if config["predictor"]["kind"] not in ("gbrt", "mlp"):
        raise ValidationError(f"predictor.kind must be gbrt or mlp, got {config['predictor']['kind']!r}")
    if config["predictor"]["target_transform"] not in ("raw", "per_pair_rank"):
        raise ValidationError(
            "predictor.target_transform must be raw or per_pair_rank, "
            f"got {config['predictor']['target_transform']!r}"
        )
    frac = config["data"]["train_fraction"]
    if not 0.0 < frac < 1.0:
        raise ValidationError(f"data.train_fraction must be in (0, 1), got {frac}")
    if config["data"]["ood_sample_size"] < 1:
        raise ValidationError("data.ood_sample_size must be >= 1")
    band = config["evaluation"]["thresholds"]["random_band"]
    if len(band) != 2 or not band[0] <= band[1]:
        raise ValidationError(f"evaluation.thresholds.random_band must be [lo, hi], got {band}")
    alt = config["evaluation"]["alternative"]
    if alt not in ("greater", "less", "two-sided"):
        raise ValidationError(f"evaluation.alternative must be a test alternative, got {alt!r}")
    for name, spec in config["data"]["datasets"].items():
        if "synthetic" not in spec and "path" not in spec:
            raise ValidationError(f"dataset {name!r} needs a 'synthetic' spec or a 'path'")


def apply_seed_override(config: dict[str, Any], seed: int) -> dict[str, Any]:
    """Point every stochastic component at one seed."""
    out = copy.deepcopy(config)
    out["predictor"]["gbrt"]["seed"] = seed
    out["predictor"]["mlp"]["seed"] = seed
    out["baselines"]["isac"]["seed"] = seed
    out["baselines"]["alors"]["seed"] = seed
    out["baselines"]["ncf"]["seed"] = seed
    out["baselines"]["random_seed"] = seed
    out["features"]["landmarker_seed"] = seed
    return out


def write_effective_config(config: Mapping[str, Any], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
