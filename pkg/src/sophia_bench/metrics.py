"""Rank-based retrieval metrics over citation ground truth, plus InScope.

All metrics read ranks only: a ranking is a sequence of doc ids, best first.
Relevance is binary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .errors import CoverageError
from .ipc import Granularity, IpcCode, truncate_all

CUTOFFS = (1, 5, 10, 20, 50, 100, 200, 500, 1000)
INSCOPE_CUTOFFS = (1, 5, 10, 20, 50, 100)
CATEGORIES = ("XY", "A", "All")


def _check_rel(rel) -> None:
    if not rel:
        raise ValueError("relevant set is empty")


def recall_at_k(ranked: Sequence[str], rel: set, k: int) -> float:
    _check_rel(rel)
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(1 for d in ranked[:k] if d in rel) / len(rel)


def _discount(rank: int) -> float:
    return 1.0 / math.log2(rank + 1)


def ndcg_at_k(ranked: Sequence[str], rel: set, k: int) -> float:
    """Binary-gain NDCG with a log2(rank + 1) discount."""
    _check_rel(rel)
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = sum(_discount(i) for i, d in enumerate(ranked[:k], 1) if d in rel)
    idcg = sum(_discount(i) for i in range(1, min(k, len(rel)) + 1))
    return dcg / idcg


def mrr(ranked: Sequence[str], rel: set) -> float:
    """Reciprocal rank of the first relevant document; 0 if none is retrieved."""
    _check_rel(rel)
    for i, d in enumerate(ranked, 1):
        if d in rel:
            return 1.0 / i
    return 0.0


def average_precision(ranked: Sequence[str], rel: set, depth: Optional[int] = None) -> float:
    _check_rel(rel)
    hits = 0
    total = 0.0
    for i, d in enumerate(ranked[:depth] if depth else ranked, 1):
        if d in rel:
            hits += 1
            total += hits / i
    return total / len(rel)


def inscope_at_k(ranked: Sequence[str], query_ipc: Sequence[IpcCode],
                 corpus_ipc: Mapping[str, Sequence[IpcCode]], g: Granularity, k: int) -> float:
    """Share of the top ``k`` whose truncated IPC labels meet the query's.

    Divides by ``k`` even if fewer than ``k`` documents were retrieved.
    Documents without codes (or with codes coarser than ``g``) never match.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q_labels = truncate_all(query_ipc, g)
    if not q_labels:
        return 0.0
    hits = sum(1 for d in ranked[:k] if truncate_all(corpus_ipc.get(d, ()), g) & q_labels)
    return hits / k


def metric_key(name: str, k: Optional[int] = None) -> str:
    return name if k is None else f"{name}@{k}"


def citation_metrics(ranked: Sequence[str], rel: set, cutoffs: Sequence[int] = CUTOFFS,
                     depth: Optional[int] = None) -> dict[str, float]:
    out = {"mrr": mrr(ranked, rel), "map": average_precision(ranked, rel, depth)}
    for k in cutoffs:
        out[metric_key("recall", k)] = recall_at_k(ranked, rel, k)
    for k in cutoffs:
        out[metric_key("ndcg", k)] = ndcg_at_k(ranked, rel, k)
    return out


class IpcLabels:
    """Memoized truncated IPC label sets for corpus documents."""

    def __init__(self, corpus_ipc: Mapping[str, Sequence[IpcCode]]):
        self.corpus_ipc = corpus_ipc
        self._cache: dict[tuple[str, Granularity], frozenset] = {}

    def __len__(self):
        return len(self.corpus_ipc)

    def get(self, doc_id: str, g: Granularity) -> frozenset:
        key = (doc_id, g)
        labels = self._cache.get(key)
        if labels is None:
            labels = self._cache[key] = truncate_all(self.corpus_ipc.get(doc_id, ()), g)
        return labels


def inscope_metrics(ranked: Sequence[str], query_ipc, corpus_ipc, cutoffs=INSCOPE_CUTOFFS) -> dict[str, float]:
    labels = corpus_ipc if isinstance(corpus_ipc, IpcLabels) else IpcLabels(corpus_ipc)
    top = ranked[: max(cutoffs)]
    out = {}
    for g in Granularity:
        q_labels = truncate_all(query_ipc, g)
        running = 0
        prefix = [0]
        for d in top:
            running += 1 if q_labels and labels.get(d, g) & q_labels else 0
            prefix.append(running)
        for k in cutoffs:
            out[metric_key(f"inscope_{g.label}", k)] = prefix[min(k, len(top))] / k
    return out


def mean(values: Sequence[float]) -> float:
    """Arithmetic mean with exact (fsum) accumulation, independent of input order."""
    return math.fsum(values) / len(values)


@dataclass
class QueryMetrics:
    query_id: str
    citation: dict[str, Optional[dict[str, float]]]  # category -> metrics, None if no judgments
    inscope: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"query_id": self.query_id, **self.citation, "inscope": self.inscope or None}


@dataclass
class MetricReport:
    per_query: dict[str, QueryMetrics]
    means: dict[str, dict[str, float]]  # category (or "InScope") -> metric -> mean
    counts: dict[str, int]
    flags: list[str] = field(default_factory=list)


def evaluate(run: Mapping[str, Sequence[str]], relevance: Mapping, query_ipc: Optional[Mapping] = None,
             corpus_ipc: Optional[Mapping] = None, cutoffs: Sequence[int] = CUTOFFS,
             inscope_cutoffs: Sequence[int] = INSCOPE_CUTOFFS) -> MetricReport:
    """Per-query and macro-averaged metrics for every query in ``relevance``.

    ``run`` maps query id to its ranked doc ids; ``relevance`` maps query id
    to RelevanceSets. InScope is computed when both IPC maps are given.
    """
    per_query = {}
    labels = None
    if query_ipc is not None and corpus_ipc is not None:
        labels = corpus_ipc if isinstance(corpus_ipc, IpcLabels) else IpcLabels(corpus_ipc)
    for q in sorted(relevance):
        if q not in run:
            raise CoverageError(q)
        ranked = run[q]
        rs = relevance[q]
        cit = {}
        for cat in CATEGORIES:
            rel = rs.get(cat)
            cit[cat] = citation_metrics(ranked, rel, cutoffs) if rel else None
        ins = {}
        if labels is not None:
            ins = inscope_metrics(ranked, query_ipc.get(q, ()), labels, inscope_cutoffs)
        per_query[q] = QueryMetrics(q, cit, ins)

    means: dict[str, dict[str, float]] = {}
    counts: dict[str, int] = {}
    for cat in CATEGORIES:
        rows = [m.citation[cat] for m in per_query.values() if m.citation[cat] is not None]
        counts[cat] = len(rows)
        if rows:
            means[cat] = {key: mean([r[key] for r in rows]) for key in rows[0]}
    ins_rows = [m.inscope for m in per_query.values() if m.inscope]
    if ins_rows:
        counts["InScope"] = len(ins_rows)
        means["InScope"] = {key: mean([r[key] for r in ins_rows]) for key in ins_rows[0]}

    flags = []
    if corpus_ipc is not None and len(corpus_ipc) < max(inscope_cutoffs):
        flags.append(f"corpus has {len(corpus_ipc)} documents, fewer than InScope cutoff "
                     f"{max(inscope_cutoffs)}; InScope still divides by k")
    longest = max((len(r) for r in run.values()), default=0)
    if longest < max(cutoffs):
        flags.append(f"rankings hold at most {longest} documents, fewer than cutoff {max(cutoffs)}")
    return MetricReport(per_query, means, counts, flags)
