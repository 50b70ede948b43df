"""Acceptance checks for the client package, one [PASS]/[FAIL] line each.

Run with `pytest embed_client/tests/test_secondary_acceptance.py -v -s`.
"""

import json

from embed_client import (
    embed_texts,
    fixture_path,
    llm_select,
    load_description_set,
    load_responses,
    select_descriptions,
    write_embedding_table,
    write_selections,
)
from oodselect.baselines import FixedSelector, GlobalBestSelector, PrecomputedSelector
from oodselect.embeddings import load_embeddings
from oodselect.evaluation import evaluate_selector, mean_rank
from oodselect.perf import load_performance_matrix, load_split
from oodselect.resources import fixture_path as core_fixture


def criterion(name, ok, detail):
    marker = "PASS" if ok else "FAIL"
    print(f"[{marker}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_mock_embedding_table_loads_and_repeats(tmp_path):
    catalog = load_description_set(core_fixture("catalog.json"))
    merged = dict(
        select_descriptions(
            catalog, "datasets", ("CIFAR-10", "CIFAR-100", "Imagenet", "FashionMNIST")
        )
    )
    merged.update(catalog["models"])
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    write_embedding_table(embed_texts(merged), str(first))
    write_embedding_table(embed_texts(merged), str(second))
    table = load_embeddings(str(first))
    dims = {len(v) for v in json.loads(read_bytes(first))["entries"].values()}
    criterion(
        "mock embedding table",
        len(table.entries) == 15 and dims == {table.dim} and read_bytes(first) == read_bytes(second),
        f"{len(table.entries)} entries, dims {sorted(dims)}, "
        f"byte-identical reruns: {read_bytes(first) == read_bytes(second)}",
    )


def test_recorded_selector_evaluates_in_core_harness(tmp_path):
    catalog = load_description_set(core_fixture("catalog.json"))
    matrix = load_performance_matrix(core_fixture("table_b.csv"))
    split = load_split(core_fixture("split_default.json"), matrix)
    pairs = [{"id": p.id, "ood": p.ood} for p in split.test]
    payload = llm_select(catalog, pairs, responses=load_responses(fixture_path("responses_openmax.json")))
    out = tmp_path / "selections.json"
    write_selections(payload, str(out))

    llm = PrecomputedSelector.from_file(matrix.catalog, str(out), name="llm")
    records = evaluate_selector(llm, matrix, split.test)
    gb = GlobalBestSelector(matrix, split.train)
    fixed_records = evaluate_selector(FixedSelector(matrix.catalog, gb.select(split.test[0])),
                                      matrix, split.test)
    always_global_best = all(r.chosen == gb.select(r.pair) for r in records)
    same_mean = mean_rank(records) == mean_rank(fixed_records)
    criterion(
        "recorded selector in core harness",
        len(records) == 20 and always_global_best and same_mean,
        f"{len(records)} records, all pick global best ({gb.select(split.test[0])}): "
        f"{always_global_best}, mean rank {mean_rank(records):.4f}",
    )
