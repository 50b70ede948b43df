import json

import pytest

from embed_client import cli, fixture_path
from oodselect.baselines import PrecomputedSelector
from oodselect.embeddings import load_embeddings
from oodselect.evaluation import evaluate_selector
from oodselect.perf import load_performance_matrix, load_split
from oodselect.resources import fixture_path as core_fixture


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_cli_embed_matches_shipped_fixtures(tmp_path):
    for kind, ref in (("datasets", "embeddings_datasets.json"), ("models", "embeddings_models.json")):
        out = tmp_path / f"{kind}.json"
        rc = cli.main(
            ["embed", "--catalog", core_fixture("catalog.json"), "--kind", kind, "--out", str(out)]
        )
        assert rc == cli.EXIT_OK
        assert read_bytes(out) == read_bytes(core_fixture(ref))


def test_cli_embed_subset_and_determinism(tmp_path):
    args = [
        "embed",
        "--catalog", core_fixture("catalog.json"),
        "--kind", "datasets",
        "--names", "CIFAR-10", "CIFAR-100", "Imagenet", "FashionMNIST",
    ]
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(args + ["--out", str(first)]) == cli.EXIT_OK
    assert cli.main(args + ["--out", str(second)]) == cli.EXIT_OK
    assert read_bytes(first) == read_bytes(second)
    table = load_embeddings(str(first))
    assert sorted(table.entries) == ["CIFAR-10", "CIFAR-100", "FashionMNIST", "Imagenet"]


def test_cli_embed_unknown_name_fails(tmp_path, capsys):
    rc = cli.main(
        [
            "embed",
            "--catalog", core_fixture("catalog.json"),
            "--kind", "datasets",
            "--names", "NoSuchDataset",
            "--out", str(tmp_path / "x.json"),
        ]
    )
    assert rc == cli.EXIT_ERROR
    assert "NoSuchDataset" in capsys.readouterr().err


def test_cli_embed_missing_catalog_fails(tmp_path, capsys):
    rc = cli.main(
        ["embed", "--catalog", str(tmp_path / "nope.json"), "--kind", "models",
         "--out", str(tmp_path / "x.json")]
    )
    assert rc == cli.EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_cli_select_recorded_and_harness_roundtrip(tmp_path):
    out = tmp_path / "selections.json"
    rc = cli.main(
        [
            "select",
            "--catalog", core_fixture("catalog.json"),
            "--split", core_fixture("split_default.json"),
            "--which", "test",
            "--responses", fixture_path("responses_openmax.json"),
            "--out", str(out),
        ]
    )
    assert rc == cli.EXIT_OK
    payload = json.loads(read_bytes(out))
    assert len(payload["selections"]) == 20
    assert all(set(e) == {"pair", "model"} for e in payload["selections"])

    matrix = load_performance_matrix(core_fixture("table_b.csv"))
    split = load_split(core_fixture("split_default.json"), matrix)
    selector = PrecomputedSelector.from_file(matrix.catalog, str(out), name="llm")
    records = evaluate_selector(selector, matrix, split.test)
    assert len(records) == 20
    assert all(r.chosen == "Openmax" and not r.flagged for r in records)


def test_cli_select_needs_responses_or_url(tmp_path, capsys):
    rc = cli.main(
        [
            "select",
            "--catalog", core_fixture("catalog.json"),
            "--split", core_fixture("split_default.json"),
            "--out", str(tmp_path / "x.json"),
        ]
    )
    assert rc == cli.EXIT_ERROR
    assert "--responses or --url" in capsys.readouterr().err


def test_cli_select_rejects_malformed_split(tmp_path, capsys):
    bad = tmp_path / "split.json"
    bad.write_text(json.dumps({"test": [{"id": "CIFAR-10"}]}))
    rc = cli.main(
        [
            "select",
            "--catalog", core_fixture("catalog.json"),
            "--split", str(bad),
            "--responses", fixture_path("responses_openmax.json"),
            "--out", str(tmp_path / "x.json"),
        ]
    )
    assert rc == cli.EXIT_ERROR
    assert "'id' and 'ood'" in capsys.readouterr().err


def test_cli_rejects_unknown_kind():
    with pytest.raises(SystemExit):
        cli.main(["embed", "--catalog", "c.json", "--kind", "recipes", "--out", "x.json"])
