import json

import numpy as np
import pytest

from oodselect.baselines import (
    AlorsSelector,
    AntiOracleSelector,
    ArgosmartSelector,
    FeatureLookup,
    FixedSelector,
    GlobalBestSelector,
    IsacSelector,
    NcfSelector,
    OracleSelector,
    PrecomputedSelector,
    RandomSelector,
    Standardizer,
    column_means,
    kmeans,
    truncated_svd,
)
from oodselect.errors import ValidationError
from oodselect.mlp import MLPConfig
from oodselect.perf import (
    DatasetPair,
    ModelCatalog,
    PerformanceMatrix,
    load_performance_matrix,
    load_split,
)
from oodselect.resources import fixture_path


@pytest.fixture(scope="module")
def bench():
    matrix = load_performance_matrix(fixture_path("table_b.csv"))
    split = load_split(fixture_path("split_default.json"), matrix)
    return matrix, split


def random_features(matrix, seed=0, dim=6):
    rng = np.random.default_rng(seed)
    return {p: rng.normal(size=dim) for p in matrix.pairs}


def test_column_means_fills_unobserved_model():
    values = np.array([[10.0, np.nan], [30.0, np.nan]])
    means = column_means(values)
    assert means[0] == 20.0
    assert means[1] == 20.0  # global observed mean stands in
    with pytest.raises(ValidationError):
        column_means(np.full((2, 2), np.nan))


def test_standardizer_zero_variance_column():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(X)
    out = s.apply(np.array([2.0, 5.0]))
    assert out.tolist() == [0.0, 0.0]
    assert s.std[1] == 1.0


def test_global_best_on_fixture_is_openmax(bench):
    matrix, split = bench
    gb = GlobalBestSelector(matrix, split.train)
    for pair in split.test:
        assert gb.select(pair) == "Openmax"


def test_fixed_selector_validates_model(bench):
    matrix, _ = bench
    sel = FixedSelector(matrix.catalog, "MSP")
    assert sel.name == "fixed:MSP"
    assert sel.select(matrix.pairs[0]) == "MSP"
    with pytest.raises(ValidationError):
        FixedSelector(matrix.catalog, "NotAModel")


def test_random_selector_is_per_pair_deterministic(bench):
    matrix, split = bench
    sel = RandomSelector(matrix.catalog, seed=7)
    first = [sel.select(p) for p in split.test]
    # reversed call order changes nothing
    second = [sel.select(p) for p in reversed(split.test)][::-1]
    assert first == second
    other = RandomSelector(matrix.catalog, seed=8)
    assert [other.select(p) for p in split.test] != first


def test_random_selector_spread(bench):
    matrix, _ = bench
    sel = RandomSelector(matrix.catalog, seed=0)
    picks = {sel.select(p) for p in matrix.pairs}
    assert len(picks) >= 5  # 46 draws over 11 models should scatter widely


def test_oracle_and_anti_oracle():
    catalog = ModelCatalog(("m1", "m2", "m3"))
    pair = DatasetPair("a", "b")
    matrix = PerformanceMatrix([pair], catalog, np.array([[60.0, 90.0, np.nan]]))
    assert OracleSelector(matrix).select(pair) == "m2"
    assert AntiOracleSelector(matrix).select(pair) == "m1"


def test_precomputed_selector(tmp_path, bench):
    matrix, split = bench
    path = tmp_path / "sel.json"
    payload = {
        "selections": [
            {"id": p.id, "ood": p.ood, "model": "KNN"} for p in split.test
        ]
    }
    path.write_text(json.dumps(payload))
    sel = PrecomputedSelector.from_file(matrix.catalog, path, name="recorded")
    assert sel.name == "recorded"
    assert sel.select(split.test[0]) == "KNN"
    with pytest.raises(ValidationError, match="no recorded selection"):
        sel.select(split.train[0])

    payload["selections"].append(payload["selections"][0])
    path.write_text(json.dumps(payload))
    with pytest.raises(ValidationError, match="duplicate"):
        PrecomputedSelector.from_file(matrix.catalog, path)

    payload["selections"] = [{"id": "a", "ood": "b", "model": "NotAModel"}]
    path.write_text(json.dumps(payload))
    with pytest.raises(ValidationError, match="NotAModel"):
        PrecomputedSelector.from_file(matrix.catalog, path)

    # entries may carry the pair under a nested key instead of inline
    payload["selections"] = [
        {"pair": {"id": p.id, "ood": p.ood}, "model": "ViM"} for p in split.test
    ]
    path.write_text(json.dumps(payload))
    nested = PrecomputedSelector.from_file(matrix.catalog, path)
    assert all(nested.select(p) == "ViM" for p in split.test)


def test_kmeans_recovers_planted_blobs():
    rng = np.random.default_rng(70)
    centers = np.array([[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0]])
    labels = np.repeat(np.arange(3), 20)
    X = centers[labels] + rng.normal(scale=0.3, size=(60, 2))
    centroids, assign = kmeans(X, 3, seed=0)
    # assignment equals nearest centroid at convergence
    d = np.linalg.norm(X[:, None, :] - centroids[None, :, :], axis=2)
    assert np.array_equal(assign, np.argmin(d, axis=1))
    # every planted blob lands in exactly one cluster
    for lab in range(3):
        assert np.unique(assign[labels == lab]).size == 1
    # and the three clusters are distinct
    assert np.unique(assign).size == 3


def test_kmeans_determinism_and_validation():
    rng = np.random.default_rng(71)
    X = rng.normal(size=(12, 3))
    a = kmeans(X, 4, seed=2)
    b = kmeans(X, 4, seed=2)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])
    with pytest.raises(ValidationError):
        kmeans(X, 0, seed=0)
    with pytest.raises(ValidationError):
        kmeans(X, 13, seed=0)


def test_kmeans_never_leaves_empty_clusters():
    # duplicate points make empty clusters likely without the re-seed rule
    X = np.array([[0.0], [0.0], [0.0], [0.0], [100.0], [100.0]])
    for seed in range(5):
        _, assign = kmeans(X, 3, seed=seed)
        assert np.unique(assign).size == 3


def test_isac_k1_equals_global_best(bench):
    matrix, split = bench
    features = random_features(matrix)
    lookup = FeatureLookup(features, list(split.train))
    isac = IsacSelector(matrix, lookup, k=1, seed=0)
    gb = GlobalBestSelector(matrix, split.train)
    for pair in split.test:
        assert isac.select(pair) == gb.select(pair)


def test_isac_uses_cluster_structure():
    # two pair families with opposite best models and well-separated features
    catalog = ModelCatalog(("m1", "m2"))
    pairs = [DatasetPair("a", str(i)) for i in range(8)]
    values = np.array([[90.0, 10.0]] * 4 + [[10.0, 90.0]] * 4)
    matrix = PerformanceMatrix(pairs, catalog, values)
    features = {}
    for i, p in enumerate(pairs):
        base = np.zeros(3) if i < 4 else np.full(3, 50.0)
        features[p] = base + np.random.default_rng(i).normal(scale=0.1, size=3)
    lookup = FeatureLookup(features, pairs)
    isac = IsacSelector(matrix, lookup, k=2, seed=0)
    assert isac.select(pairs[0]) == "m1"
    assert isac.select(pairs[7]) == "m2"


def test_argosmart_single_train_pair(bench):
    matrix, split = bench
    features = random_features(matrix)
    single = [split.train[0]]
    lookup = FeatureLookup(features, single)
    best = matrix.best_model(single[0])
    sel = ArgosmartSelector(matrix, lookup)
    for pair in split.test:
        assert sel.select(pair) == best


def test_argosmart_matches_bruteforce_nn(bench):
    matrix, split = bench
    features = random_features(matrix, seed=3)
    lookup = FeatureLookup(features, list(split.train))
    sel = ArgosmartSelector(matrix, lookup)
    mean = np.vstack([features[p] for p in split.train]).mean(axis=0)
    std = np.vstack([features[p] for p in split.train]).std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    for pair in split.test:
        q = (features[pair] - mean) / std
        dists = [np.linalg.norm((features[p] - mean) / std - q) for p in split.train]
        nearest = split.train[int(np.argmin(dists))]
        assert sel.select(pair) == matrix.best_model(nearest)


def test_feature_lookup_missing_pair(bench):
    matrix, split = bench
    features = random_features(matrix)
    del features[split.train[0]]
    with pytest.raises(ValidationError, match=split.train[0].key()):
        FeatureLookup(features, list(split.train))
    lookup = FeatureLookup(random_features(matrix), list(split.train))
    with pytest.raises(ValidationError):
        lookup.query(DatasetPair("no", "где"))


def test_truncated_svd_against_numpy():
    # plant a spectrum with a real gap after the third value so the power
    # iterations converge far below the comparison tolerance
    rng = np.random.default_rng(72)
    spectrum = np.array([10.0, 8.0, 6.0, 1.0, 0.5, 0.25, 0.1])
    for _ in range(10):
        A, _ = np.linalg.qr(rng.normal(size=(12, 7)))
        B, _ = np.linalg.qr(rng.normal(size=(7, 7)))
        M = A @ np.diag(spectrum) @ B.T
        rank = 3
        U, V = truncated_svd(M, rank, seed=0)
        _, s_np, vt_np = np.linalg.svd(M, full_matrices=False)
        # compare subspaces via projection operators, which removes any
        # sign and ordering freedom
        P_got = V @ V.T
        P_want = vt_np[:rank].T @ vt_np[:rank]
        assert np.allclose(P_got, P_want, atol=1e-10)
        assert np.allclose(U, M @ V, atol=1e-12)
        # columns ordered by decreasing singular value
        norms = np.linalg.norm(U, axis=0)
        assert np.allclose(norms, spectrum[:rank], atol=1e-9)
        assert (np.diff(norms) <= 1e-9).all()


def test_truncated_svd_full_rank_reconstructs():
    rng = np.random.default_rng(73)
    M = rng.normal(size=(9, 5))
    U, V = truncated_svd(M, 5, seed=0)
    assert np.abs(U @ V.T - M).max() <= 1e-6


def test_truncated_svd_sign_convention_and_validation():
    rng = np.random.default_rng(74)
    M = rng.normal(size=(6, 4))
    _, V = truncated_svd(M, 2, seed=0)
    for k in range(2):
        peak = np.argmax(np.abs(V[:, k]))
        assert V[peak, k] > 0.0
    with pytest.raises(ValidationError):
        truncated_svd(M, 0)
    with pytest.raises(ValidationError):
        truncated_svd(M, 5)


def test_alors_full_rank_reproduces_train_argmax(bench):
    matrix, split = bench
    features = random_features(matrix, seed=4)
    lookup = FeatureLookup(features, list(split.train))
    alors = AlorsSelector(matrix, lookup, rank=11, seed=0)
    # querying a training pair finds itself (distance 0), and at full rank
    # the latent scores reproduce that row up to iteration tolerance
    for pair in split.train:
        got = alors.scores(pair)
        want = matrix.row(pair)
        assert np.abs(got - want).max() < 1e-5
        assert alors.select(pair) == matrix.best_model(pair)


def test_alors_low_rank_returns_catalog_models(bench):
    matrix, split = bench
    features = random_features(matrix, seed=5)
    lookup = FeatureLookup(features, list(split.train))
    alors = AlorsSelector(matrix, lookup, rank=3, seed=0)
    for pair in split.test:
        assert alors.select(pair) in matrix.catalog.models


def test_ncf_trains_and_selects(bench):
    matrix, split = bench
    features = random_features(matrix, seed=6)
    lookup = FeatureLookup(features, list(split.train))
    sel = NcfSelector(matrix, lookup,
                      MLPConfig(hidden=(16, 8), epochs=30, step_size=0.02, seed=0))
    picks = [sel.select(p) for p in split.test]
    assert all(p in matrix.catalog.models for p in picks)
    again = NcfSelector(matrix, lookup,
                        MLPConfig(hidden=(16, 8), epochs=30, step_size=0.02, seed=0))
    assert picks == [again.select(p) for p in split.test]
