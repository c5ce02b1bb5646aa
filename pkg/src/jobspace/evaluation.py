"""Top-k recommendation metrics: geographic distance, in-range counts,
title match, and title coverage, pooled over all (query, item) pairs.

Medians use the lower of the two middle values for even counts, and the
standard deviation is the population form. Self-hits are excluded from
every recommendation list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import JobPosting
from .errors import DataError
from .geo import haversine_miles
from .index import FlatIndex, IvfPqIndex

DEFAULT_RADIUS_MILES = 50.0
DEFAULT_TOP_K = 50


@dataclass
class RecItem:
    posting_id: str
    distance: float
    geo_miles: float
    title_match: bool


@dataclass
class RecommendationSet:
    query_id: str
    items: list[RecItem]


@dataclass
class EvalReport:
    distance_avg: float
    distance_median: float
    distance_std: float
    in_range_avg: float
    in_range_median: float
    title_match_pct: float
    coverage_pct: float
    num_queries: int
    total_items: int
    k: int
    radius_miles: float
    seed: int
    degenerate: bool = False

    def as_pairs(self) -> list[tuple[str, float | int | bool]]:
        return [
            ("distance_avg", self.distance_avg),
            ("distance_median", self.distance_median),
            ("distance_std", self.distance_std),
            ("in_range_avg", self.in_range_avg),
            ("in_range_median", self.in_range_median),
            ("title_match_pct", self.title_match_pct),
            ("coverage_pct", self.coverage_pct),
            ("num_queries", self.num_queries),
            ("total_items", self.total_items),
            ("k", self.k),
            ("radius_miles", self.radius_miles),
            ("seed", self.seed),
            ("degenerate", self.degenerate),
        ]


def median_lower(values: Sequence[float]) -> float:
    """Median using the lower middle element for even-length input."""
    if not len(values):
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return float(ordered[(len(ordered) - 1) // 2])


def distance_stats(sets: Sequence[RecommendationSet]) -> tuple[float, float, float]:
    """(avg, median, population std) of geo miles pooled over all items."""
    pooled = [item.geo_miles for s in sets for item in s.items]
    if not pooled:
        raise ValueError("no recommendation items to aggregate")
    arr = np.asarray(pooled, dtype=np.float64)
    return float(arr.mean()), median_lower(pooled), float(arr.std())


def in_range_count(s: RecommendationSet, radius_miles: float = DEFAULT_RADIUS_MILES) -> int:
    """Number of items within the radius."""
    return sum(1 for item in s.items if item.geo_miles <= radius_miles)


def title_match_rate(sets: Sequence[RecommendationSet]) -> float:
    """Percentage of pooled items whose title matches the query title."""
    total = sum(len(s.items) for s in sets)
    if total == 0:
        raise ValueError("no recommendation items to aggregate")
    matched = sum(1 for s in sets for item in s.items if item.title_match)
    return 100.0 * matched / total


def title_coverage(sets: Sequence[RecommendationSet], radius_miles: float = DEFAULT_RADIUS_MILES) -> float:
    """Percentage of pooled items that match the title AND lie within the radius."""
    total = sum(len(s.items) for s in sets)
    if total == 0:
        raise ValueError("no recommendation items to aggregate")
    covered = sum(
        1 for s in sets for item in s.items if item.title_match and item.geo_miles <= radius_miles
    )
    return 100.0 * covered / total


@dataclass
class PerQueryRow:
    query_id: str
    num_items: int
    in_range: int
    matched: int
    mean_miles: float


def build_recommendation_set(
    query: JobPosting,
    results: Sequence[tuple[str, float]],
    corpus_by_id: Mapping[str, JobPosting],
) -> RecommendationSet:
    items = []
    for rec_id, dist in results:
        posting = corpus_by_id.get(rec_id)
        if posting is None:
            raise DataError(f"index id {rec_id!r} not present in the corpus")
        items.append(
            RecItem(
                posting_id=rec_id,
                distance=dist,
                geo_miles=haversine_miles(query.lat_deg, query.lon_deg, posting.lat_deg, posting.lon_deg),
                title_match=posting.title_id == query.title_id,
            )
        )
    return RecommendationSet(query_id=query.id, items=items)


def evaluate_model(
    postings: Sequence[JobPosting],
    index: FlatIndex | IvfPqIndex,
    vectors_by_id: Mapping[str, np.ndarray],
    num_queries: int,
    seed: int,
    k: int = DEFAULT_TOP_K,
    radius_miles: float = DEFAULT_RADIUS_MILES,
    nprobe: int | None = None,
) -> tuple[EvalReport, list[RecommendationSet], list[PerQueryRow]]:
    """Sample query postings, search the index, and compute all four metrics.

    Queries are drawn without replacement from the indexed corpus records;
    the query itself is removed from its result list. Deterministic for a
    fixed seed. A corpus too small to recommend anything yields a report
    flagged degenerate instead of an error.
    """
    corpus_by_id = {p.id: p for p in postings}
    indexed = sorted(index.ids)
    for rec_id in indexed:
        if rec_id not in corpus_by_id:
            raise DataError(f"index id {rec_id!r} not present in the corpus")
        if rec_id not in vectors_by_id:
            raise DataError(f"index id {rec_id!r} not present in the vector set")
    if not indexed:
        raise DataError("index is empty")
    rng = np.random.default_rng(seed)
    n_q = min(num_queries, len(indexed))
    query_ids = [indexed[i] for i in rng.choice(len(indexed), size=n_q, replace=False)]

    sets: list[RecommendationSet] = []
    per_query: list[PerQueryRow] = []
    for qid in query_ids:
        query = corpus_by_id[qid]
        if isinstance(index, IvfPqIndex):
            raw = index.search(vectors_by_id[qid], k + 1, nprobe=nprobe)
        else:
            raw = index.search(vectors_by_id[qid], k + 1)
        results = [(rid, d) for rid, d in raw if rid != qid][:k]
        s = build_recommendation_set(query, results, corpus_by_id)
        sets.append(s)
        n_in = in_range_count(s, radius_miles)
        matched = sum(1 for item in s.items if item.title_match)
        mean_miles = (
            float(np.mean([item.geo_miles for item in s.items])) if s.items else float("nan")
        )
        per_query.append(PerQueryRow(qid, len(s.items), n_in, matched, mean_miles))

    total_items = sum(len(s.items) for s in sets)
    if total_items == 0:
        report = EvalReport(
            distance_avg=float("nan"),
            distance_median=float("nan"),
            distance_std=float("nan"),
            in_range_avg=float("nan"),
            in_range_median=float("nan"),
            title_match_pct=float("nan"),
            coverage_pct=float("nan"),
            num_queries=n_q,
            total_items=0,
            k=k,
            radius_miles=radius_miles,
            seed=seed,
            degenerate=True,
        )
        return report, sets, per_query

    avg, med, std = distance_stats(sets)
    counts = [in_range_count(s, radius_miles) for s in sets]
    report = EvalReport(
        distance_avg=avg,
        distance_median=med,
        distance_std=std,
        in_range_avg=float(np.mean(counts)),
        in_range_median=median_lower(counts),
        title_match_pct=title_match_rate(sets),
        coverage_pct=title_coverage(sets, radius_miles),
        num_queries=n_q,
        total_items=total_items,
        k=k,
        radius_miles=radius_miles,
        seed=seed,
    )
    return report, sets, per_query


# ---------------------------------------------------------------------------
# Report output: aligned text table and key=value file
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6f}"
    return str(value)


def format_report_table(report: EvalReport, label: str = "model") -> str:
    rows = [
        ("Distance avg (mi)", report.distance_avg),
        ("Distance median (mi)", report.distance_median),
        ("Distance std (mi)", report.distance_std),
        ("In-range avg (count)", report.in_range_avg),
        ("In-range median (count)", report.in_range_median),
        ("Title match (%)", report.title_match_pct),
        ("Coverage (%)", report.coverage_pct),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Metric'.ljust(width)}  {label}"]
    for name, value in rows:
        lines.append(f"{name.ljust(width)}  {_fmt(value)}")
    return "\n".join(lines) + "\n"


def write_report_kv(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in report.as_pairs():
            fh.write(f"{key}={_fmt(value)}\n")


def read_report_kv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, value = line.rstrip("\n").split("=", 1)
                out[key] = value
    return out


def write_per_query_csv(path, rows: Sequence[PerQueryRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_id,num_items,in_range,matched,mean_miles\n")
        for r in rows:
            fh.write(f"{r.query_id},{r.num_items},{r.in_range},{r.matched},{r.mean_miles:.6f}\n")
