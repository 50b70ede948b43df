"""Selector evaluation: per-pair records, rank tables, paired tests, reports.

The Wilcoxon signed-rank test is implemented twice over: an exact path
that counts sign assignments of the rank sum (used for small tie-free
samples), and a normal approximation with tie and continuity
corrections. Zero differences are dropped before ranking.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .baselines import Selector
from .errors import ValidationError
from .perf import DatasetPair, PerformanceMatrix, rank_row

EXACT_MAX_N = 14


def midranks_asc(values: np.ndarray) -> np.ndarray:
    """Ascending midranks, smallest value gets rank 1, ties averaged."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    srt = v[order]
    while i < v.size:
        j = i
        while j + 1 < v.size and srt[j + 1] == srt[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    p_value: float
    n: int  # pairs remaining after dropping zero differences
    method: str  # "exact" | "approx" | "degenerate"
    zeros_dropped: int


def _rank_sum_counts(n: int) -> list[int]:
    """counts[s] = number of subsets of {1..n} whose rank sum is s."""
    total = n * (n + 1) // 2
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in range(1, n + 1):
        for s in range(total, r - 1, -1):
            counts[s] += counts[s - r]
    return counts


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(
    x: Sequence[float],
    y: Sequence[float],
    alternative: str = "greater",
    method: str = "auto",
) -> WilcoxonResult:
    """Paired signed-rank test of x against y.

    alternative "greater" asks whether x tends to exceed y. method "auto"
    uses exact enumeration for tie-free samples of size <= 14 and the
    corrected normal approximation otherwise; "exact" insists on the
    enumeration path and rejects tied samples.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValidationError(f"unknown alternative {alternative!r}")
    if method not in ("auto", "exact", "approx"):
        raise ValidationError(f"unknown method {method!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"paired samples must match: {x.shape} vs {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("samples contain non-finite values")
    d = x - y
    zeros = int((d == 0.0).sum())
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", zeros)
    absd = np.abs(d)
    ranks = midranks_asc(absd)
    w = float(ranks[d > 0.0].sum())
    has_ties = np.unique(absd).size < n

    if method == "exact" and has_ties:
        raise ValidationError("exact method requires tie-free absolute differences")
    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N and not has_ties)

    if use_exact:
        counts = _rank_sum_counts(n)
        w_int = int(round(w))
        denom = 2**n
        greater = sum(counts[w_int:]) / denom
        less = sum(counts[: w_int + 1]) / denom
        if alternative == "greater":
            p = greater
        elif alternative == "less":
            p = less
        else:
            p = min(1.0, 2.0 * min(greater, less))
        return WilcoxonResult(w, p, n, "exact", zeros)

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(absd, return_counts=True)
    var -= float((tie_counts**3 - tie_counts).sum()) / 48.0
    if var <= 0.0:
        # every pair tied at the same |d|; the statistic is degenerate
        return WilcoxonResult(w, 1.0, n, "degenerate", zeros)
    sigma = math.sqrt(var)
    greater = _normal_sf((w - mu - 0.5) / sigma)
    less = 1.0 - _normal_sf((w - mu + 0.5) / sigma)
    if alternative == "greater":
        p = greater
    elif alternative == "less":
        p = less
    else:
        p = min(1.0, 2.0 * min(greater, less))
    return WilcoxonResult(w, p, n, "approx", zeros)


@dataclass(frozen=True)
class SelectionRecord:
    selector: str
    pair: DatasetPair
    chosen: str
    auroc: float  # NaN when the chosen model has no score for the pair
    rank: float  # NaN in the same case
    flagged: bool


def evaluate_selector(
    selector: Selector,
    matrix: PerformanceMatrix,
    pairs: Sequence[DatasetPair],
) -> list[SelectionRecord]:
    """Score a selector on each pair against the true matrix row."""
    if not pairs:
        raise ValidationError("no evaluation pairs given")
    records: list[SelectionRecord] = []
    for pair in pairs:
        chosen = selector.select(pair)
        j = matrix.catalog.index(chosen)
        value = float(matrix.row(pair)[j])
        if math.isnan(value):
            records.append(
                SelectionRecord(selector.name, pair, chosen, math.nan, math.nan, True)
            )
            continue
        rank = float(rank_row(matrix, pair)[j])
        records.append(SelectionRecord(selector.name, pair, chosen, value, rank, False))
    return records


def mean_rank(records: Sequence[SelectionRecord]) -> float:
    """Mean rank over non-flagged records."""
    ranks = [r.rank for r in records if not r.flagged]
    if not ranks:
        raise ValidationError("no scored records to average")
    return float(np.mean(ranks))


def average_rank_table(
    records_by_selector: Mapping[str, Sequence[SelectionRecord]],
) -> list[tuple[str, float]]:
    """(selector, mean rank) sorted best first; ties alphabetical."""
    rows = [(name, mean_rank(recs)) for name, recs in records_by_selector.items()]
    return sorted(rows, key=lambda t: (t[1], t[0]))


def rank_summary(records: Sequence[SelectionRecord]) -> dict[str, float]:
    ranks = np.asarray([r.rank for r in records if not r.flagged], dtype=np.float64)
    if ranks.size == 0:
        raise ValidationError("no scored records to summarize")
    q25, q50, q75 = (float(np.percentile(ranks, q)) for q in (25, 50, 75))
    return {
        "min": float(ranks.min()),
        "q25": q25,
        "median": q50,
        "q75": q75,
        "max": float(ranks.max()),
        "mean": float(ranks.mean()),
    }


def pairwise_tests(
    records_by_selector: Mapping[str, Sequence[SelectionRecord]],
    reference: str,
    alternative: str = "greater",
) -> list[dict]:
    """Signed-rank test of the reference's chosen scores against each other
    selector's, paired by dataset pair. Pairs flagged on either side drop."""
    if reference not in records_by_selector:
        raise ValidationError(f"reference selector {reference!r} has no records")
    ref = {r.pair: r for r in records_by_selector[reference]}
    out: list[dict] = []
    for name, recs in records_by_selector.items():
        if name == reference:
            continue
        x: list[float] = []
        y: list[float] = []
        for rec in recs:
            ref_rec = ref.get(rec.pair)
            if ref_rec is None or ref_rec.flagged or rec.flagged:
                continue
            x.append(ref_rec.auroc)
            y.append(rec.auroc)
        result = wilcoxon_signed_rank(x, y, alternative=alternative)
        out.append(
            {
                "reference": reference,
                "against": name,
                "statistic": result.statistic,
                "p_value": result.p_value,
                "n": result.n,
                "method": result.method,
                "zeros_dropped": result.zeros_dropped,
                "alternative": alternative,
            }
        )
    return out


RECORD_HEADER = ("selector", "id_dataset", "ood_dataset", "chosen_model", "auroc", "rank", "flagged")


def write_records_csv(records: Sequence[SelectionRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.selector,
                    r.pair.id,
                    r.pair.ood,
                    r.chosen,
                    "" if math.isnan(r.auroc) else repr(r.auroc),
                    "" if math.isnan(r.rank) else repr(r.rank),
                    "1" if r.flagged else "0",
                ]
            )


def read_records_csv(path: str) -> list[SelectionRecord]:
    records: list[SelectionRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RECORD_HEADER:
            raise ValidationError(f"{path}: unexpected records header {header}")
        for rec in reader:
            if not rec:
                continue
            records.append(
                SelectionRecord(
                    rec[0],
                    DatasetPair(rec[1], rec[2]),
                    rec[3],
                    float(rec[4]) if rec[4] else math.nan,
                    float(rec[5]) if rec[5] else math.nan,
                    rec[6] == "1",
                )
            )
    return records


def emit_report(
    out_dir: str,
    records_by_selector: Mapping[str, Sequence[SelectionRecord]],
    pairwise: Sequence[dict] = (),
    timing: Mapping[str, float] | None = None,
) -> dict[str, str]:
    """Write the report files; returns {artifact name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths: dict[str, str] = {}

    all_records = [r for recs in records_by_selector.values() for r in recs]
    paths["records"] = os.path.join(out_dir, "records.csv")
    write_records_csv(all_records, paths["records"])

    paths["mean_ranks"] = os.path.join(out_dir, "mean_ranks.csv")
    with open(paths["mean_ranks"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["selector", "mean_rank", "num_pairs", "num_flagged"])
        for name, value in average_rank_table(records_by_selector):
            recs = records_by_selector[name]
            flagged = sum(1 for r in recs if r.flagged)
            writer.writerow([name, repr(value), len(recs), flagged])

    paths["rank_summary"] = os.path.join(out_dir, "rank_summary.csv")
    with open(paths["rank_summary"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["selector", "min", "q25", "median", "q75", "max", "mean"])
        for name in sorted(records_by_selector):
            s = rank_summary(records_by_selector[name])
            writer.writerow(
                [name, *(repr(s[k]) for k in ("min", "q25", "median", "q75", "max", "mean"))]
            )

    paths["pairwise"] = os.path.join(out_dir, "pairwise_tests.json")
    with open(paths["pairwise"], "w", encoding="utf-8") as fh:
        json.dump(list(pairwise), fh, indent=2, sort_keys=True)
        fh.write("\n")

    if timing is not None:
        paths["timing"] = os.path.join(out_dir, "timing.json")
        with open(paths["timing"], "w", encoding="utf-8") as fh:
            json.dump(dict(timing), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return paths
