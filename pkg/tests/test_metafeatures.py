import numpy as np
import pytest

from oodselect.errors import ValidationError
from oodselect.images import synth_dataset
from oodselect.metafeatures import (
    DATASET_FEATURE_NAMES,
    FEATURE_SCHEMA,
    FEATURE_SCHEMA_LENGTH,
    FeatureConfig,
    MetaFeatureVector,
    compose_pair_features,
    dataset_features,
    read_features_csv,
    write_features_csv,
)
from oodselect.perf import DatasetPair


def test_schema_shape():
    assert FEATURE_SCHEMA_LENGTH == 273
    assert len(FEATURE_SCHEMA) == 273
    assert len(set(FEATURE_SCHEMA)) == 273
    # block sizes: 2 roles x 3 channels x 28 stats, 2 x 45 image props,
    # 5 dataset scalars, 10 landmarkers
    assert sum(n.startswith("stat.") for n in FEATURE_SCHEMA) == 168
    assert sum(n.startswith("image.") for n in FEATURE_SCHEMA) == 90
    assert sum(n.startswith("dataset.") for n in FEATURE_SCHEMA) == 5
    assert sum(n.startswith("landmark.") for n in FEATURE_SCHEMA) == 10


def test_vector_length_enforced():
    with pytest.raises(ValidationError):
        MetaFeatureVector(np.zeros(272))
    MetaFeatureVector(np.zeros(273))


def test_compose_on_synthetic_pair():
    train = synth_dataset(seed=30, n=16, h=8, w=8, c=3, num_classes=4)
    test = synth_dataset(seed=31, n=12, h=8, w=8, c=3, num_classes=4)
    feat = compose_pair_features(train, test, softmax=None)
    assert feat.values.shape == (273,)
    assert np.isfinite(feat.values).all()

    f = dict(zip(FEATURE_SCHEMA, feat.values))
    assert f["dataset.num_samples"] == 28.0
    assert f["dataset.num_features"] == 8 * 8 * 3
    assert f["dataset.image_dim"] == 64.0
    assert f["dataset.num_classes"] == 4.0
    assert f["dataset.emd_intensity"] >= 0.0


def test_compose_is_deterministic():
    train = synth_dataset(seed=32, n=10, h=6, w=6, c=1, num_classes=3)
    test = synth_dataset(seed=33, n=10, h=6, w=6, c=1, num_classes=3)
    a = compose_pair_features(train, test, softmax=None)
    b = compose_pair_features(train, test, softmax=None)
    assert np.array_equal(a.values, b.values)
    assert a.diagnostics == b.diagnostics


def test_compose_diagnostics_carry_block_prefixes():
    # single-class noiseless data: every image identical, so the channel-mean
    # distribution is constant and gradients vanish
    train = synth_dataset(seed=34, n=8, h=6, w=6, c=3, num_classes=1, noise=0)
    test = synth_dataset(seed=35, n=8, h=6, w=6, c=3, num_classes=1, noise=0)
    feat = compose_pair_features(train, test, softmax=None)
    assert any(d.startswith("stat.train.r.") for d in feat.diagnostics)
    assert any(d.startswith("image.train.hu:") for d in feat.diagnostics)
    assert any(d.startswith("image.test.glcm_correlation:") for d in feat.diagnostics)
    assert np.isfinite(feat.values).all()


def test_compose_with_explicit_softmax():
    train = synth_dataset(seed=36, n=10, h=5, w=5, c=1, num_classes=3)
    test = synth_dataset(seed=37, n=7, h=5, w=5, c=1, num_classes=3)
    softmax = np.full((7, 3), 1.0 / 3.0)
    feat = compose_pair_features(train, test, softmax=softmax)
    f = dict(zip(FEATURE_SCHEMA, feat.values))
    assert f["landmark.top1_mean"] == pytest.approx(1.0 / 3.0)
    assert f["landmark.entropy_mean"] == pytest.approx(np.log(3.0))


def test_compose_fallback_disabled():
    train = synth_dataset(seed=38, n=6, h=4, w=4, c=1, num_classes=2)
    test = synth_dataset(seed=39, n=6, h=4, w=4, c=1, num_classes=2, name="probe")
    cfg = FeatureConfig(landmarker_fallback=False)
    with pytest.raises(ValidationError, match="probe"):
        compose_pair_features(train, test, softmax=None, config=cfg)


def test_dataset_block_emd_zero_for_same_data():
    ds = synth_dataset(seed=40, n=9, h=6, w=6, c=3, num_classes=3)
    values, diag = dataset_features(ds, ds, FeatureConfig())
    f = dict(zip(DATASET_FEATURE_NAMES, values))
    assert f["emd_intensity"] == 0.0
    assert f["num_samples"] == 18.0
    assert diag == []


def test_features_csv_round_trip(tmp_path):
    train = synth_dataset(seed=41, n=8, h=5, w=5, c=3, num_classes=2)
    test = synth_dataset(seed=42, n=8, h=5, w=5, c=3, num_classes=2)
    rows = [
        (DatasetPair("a", "b"), compose_pair_features(train, test, None)),
        (DatasetPair("a", "c"), compose_pair_features(test, train, None)),
    ]
    path = tmp_path / "features.csv"
    write_features_csv(rows, path)
    back = read_features_csv(path)
    assert set(back) == {DatasetPair("a", "b"), DatasetPair("a", "c")}
    for pair, feat in rows:
        # repr round trip preserves every bit
        assert np.array_equal(back[pair], feat.values)


def test_features_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id_dataset,ood_dataset,only_one_feature\na,b,1.0\n")
    with pytest.raises(ValidationError, match="schema"):
        read_features_csv(path)


def test_features_csv_rejects_duplicate_pair(tmp_path):
    train = synth_dataset(seed=43, n=6, h=4, w=4, c=1, num_classes=2)
    feat = compose_pair_features(train, train, None)
    path = tmp_path / "dup.csv"
    write_features_csv([(DatasetPair("a", "b"), feat), (DatasetPair("a", "b"), feat)], path)
    with pytest.raises(ValidationError, match="duplicate"):
        read_features_csv(path)
