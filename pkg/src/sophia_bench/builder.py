"""Benchmark construction from a corpus and its citation graph.

A build picks stratified queries, derives citation relevance sets, adds
distractors to form the retrieval corpus, extracts every query view and
writes the queries / qrels / corpus files. The whole build is a pure
function of its inputs and seed.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import CitationEdge, PatentDocument, _iter_jsonl, dump_jsonl_line, save_corpus
from .errors import DataFormatError, MissingDocumentError, QrelsFormatError
from .views import AiViewTable, ViewName, extract_view

log = logging.getLogger(__name__)

QRELS_CATEGORIES = ("XY", "A")


@dataclass(frozen=True)
class RelevanceSets:
    xy: frozenset = frozenset()
    a: frozenset = frozenset()

    @property
    def all(self) -> frozenset:
        return self.xy | self.a

    def get(self, category: str) -> frozenset:
        return {"XY": self.xy, "A": self.a, "All": self.all}[category]


class CitationIndex:
    """Adjacency lists for both citation directions, split by XY vs A."""

    def __init__(self, edges: Iterable[CitationEdge]):
        self.xy: dict[str, set[str]] = defaultdict(set)
        self.a: dict[str, set[str]] = defaultdict(set)
        for e in edges:
            target = self.xy if e.is_xy else self.a
            # cited-by-q and citing-q relations are both relevant to q
            target[e.src].add(e.dst)
            target[e.dst].add(e.src)

    def relevance(self, q: str, pool: Optional[set] = None) -> RelevanceSets:
        xy = self.xy.get(q, set()) - {q}
        a = self.a.get(q, set()) - {q}
        if pool is not None:
            xy = xy & pool
            a = a & pool
        return RelevanceSets(frozenset(xy), frozenset(a))


def build_relevance_sets(q: str, edges: Iterable[CitationEdge] | CitationIndex,
                         corpus_ids: Optional[Iterable[str]] = None) -> RelevanceSets:
    """XY and A relevance sets of query ``q`` over cited and citing documents.

    Members outside ``corpus_ids`` (when given) are dropped.
    """
    index = edges if isinstance(edges, CitationIndex) else CitationIndex(edges)
    pool = set(corpus_ids) if corpus_ids is not None else None
    return index.relevance(q, pool)


def dedupe_families(docs: Sequence[PatentDocument], edges: Sequence[CitationEdge]):
    """Keep one document per family (earliest pub_year, then smallest doc_id).

    Citations to or from dropped members are re-pointed at the family
    representative; resulting self-loops are discarded.
    """
    best: dict[str, PatentDocument] = {}
    for d in docs:
        cur = best.get(d.family_id)
        if cur is None or (d.pub_year, d.doc_id) < (cur.pub_year, cur.doc_id):
            best[d.family_id] = d
    rep = {d.doc_id: best[d.family_id].doc_id for d in docs}
    kept = [d for d in docs if rep[d.doc_id] == d.doc_id]
    if len(kept) == len(docs):
        return list(docs), list(edges)
    remapped = []
    seen = set()
    for e in edges:
        src, dst = rep.get(e.src, e.src), rep.get(e.dst, e.dst)
        key = (src, dst, e.category)
        if src != dst and key not in seen:
            seen.add(key)
            remapped.append(CitationEdge(src, dst, e.category))
    log.info("family dedup dropped %d documents", len(docs) - len(kept))
    return kept, remapped


@dataclass
class QuerySample:
    queries: list[str]
    warnings: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)


def sample_queries(corpus: Sequence[PatentDocument], edges: Iterable[CitationEdge] | CitationIndex,
                   per_year: int, years: Iterable[int], seed: int) -> QuerySample:
    """Draw up to ``per_year`` queries per publication year.

    A document is eligible when it has at least one XY-relevant document
    among the non-query corpus. Candidates are visited in a seeded random
    order (years in the order given) and accepted one at a time; a candidate
    is skipped if accepting it would leave it, or an already accepted query,
    without an XY document outside the query set. Skipped ids are reported
    in ``dropped``.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if per_year < 1:
        raise ValueError("per_year must be >= 1")
    index = edges if isinstance(edges, CitationIndex) else CitationIndex(edges)
    all_ids = {d.doc_id for d in corpus}
    years = list(years)
    by_year: dict[int, list[str]] = {y: [] for y in years}
    for d in sorted(corpus, key=lambda d: d.doc_id):
        if d.pub_year in by_year:
            by_year[d.pub_year].append(d.doc_id)

    def xy_of(d):
        return [x for x in sorted(index.xy.get(d, ())) if x in all_ids and x != d]

    rng = random.Random(seed)
    accepted: set[str] = set()
    free: dict[str, int] = {}  # accepted query -> XY documents still outside the query set
    chosen: dict[int, list[str]] = {y: [] for y in years}
    dropped: list[str] = []
    for y in years:
        cands = [d for d in by_year[y] if xy_of(d)]
        rng.shuffle(cands)
        for d in cands:
            if len(chosen[y]) >= per_year:
                break
            nbrs = xy_of(d)
            own = sum(1 for x in nbrs if x not in accepted)
            if own == 0 or any(free[x] < 2 for x in nbrs if x in accepted):
                dropped.append(d)
                continue
            for x in nbrs:
                if x in accepted:
                    free[x] -= 1
            accepted.add(d)
            free[d] = own
            chosen[y].append(d)

    warnings = []
    for y in years:
        if not chosen[y]:
            warnings.append(f"year {y}: no eligible query documents")
        elif len(chosen[y]) < per_year:
            warnings.append(f"year {y}: only {len(chosen[y])} eligible query documents (wanted {per_year})")
    for w in warnings:
        log.warning(w)
    queries = [q for y in years for q in sorted(chosen[y])]
    return QuerySample(queries, warnings, sorted(dropped))


def assemble_corpus(queries: Sequence[str], relevance: Mapping[str, RelevanceSets],
                    corpus: Sequence[PatentDocument], distractor_count: int, seed: int) -> list[PatentDocument]:
    """Retrieval corpus: every relevant document plus sampled distractors.

    Queries are never corpus members. Output is sorted by doc_id.
    """
    by_id = {d.doc_id: d for d in corpus}
    qset = set(queries)
    needed: set[str] = set()
    for q in queries:
        for d in sorted(relevance[q].all):
            if d not in by_id:
                raise MissingDocumentError(d, f"relevant to query {q!r}")
            if d in qset:
                raise ValueError(f"query {d!r} is also relevant to query {q!r}")
            needed.add(d)
    pool = sorted(set(by_id) - needed - qset)
    rng = random.Random(seed)
    distractors = rng.sample(pool, min(distractor_count, len(pool))) if distractor_count > 0 else []
    return [by_id[i] for i in sorted(needed | set(distractors))]


# --- qrels -----------------------------------------------------------------

def qrels_lines(relevance: Mapping[str, RelevanceSets]) -> list[str]:
    lines = []
    for q in sorted(relevance):
        rs = relevance[q]
        for d in sorted(rs.xy):
            lines.append(f"{q}\t{d}\tXY\n")
        for d in sorted(rs.a):
            lines.append(f"{q}\t{d}\tA\n")
    return lines


def save_qrels(relevance: Mapping[str, RelevanceSets], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(qrels_lines(relevance))


def load_qrels(path) -> dict[str, RelevanceSets]:
    xy: dict[str, set] = defaultdict(set)
    a: dict[str, set] = defaultdict(set)
    order: dict[str, None] = {}
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise QrelsFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            q, d, cat = parts
            if cat not in QRELS_CATEGORIES:
                raise QrelsFormatError(f"{path}:{lineno}: category must be XY or A, got {cat!r}")
            if q == d:
                raise QrelsFormatError(f"{path}:{lineno}: query {q!r} judged relevant to itself")
            target = xy if cat == "XY" else a
            if d in target[q]:
                raise QrelsFormatError(f"{path}:{lineno}: duplicate judgment ({q}, {d}, {cat})")
            order[q] = None
            target[q].add(d)
    return {q: RelevanceSets(frozenset(xy.get(q, ())), frozenset(a.get(q, ()))) for q in order}


# --- query file --------------------------------------------------------------

def query_record(doc: PatentDocument, ai_views: Optional[AiViewTable] = None) -> dict:
    rec = {
        "query_id": doc.doc_id,
        "pub_year": doc.pub_year,
        "jurisdiction": doc.jurisdiction,
        "ipc": [c.render() for c in doc.ipc_codes],
    }
    for v in ViewName:
        rec[v.value] = extract_view(doc, v, ai_views)
    return rec


def load_queries(path) -> list[dict]:
    out = []
    for lineno, rec in _iter_jsonl(Path(path)):
        for key in ("query_id", "pub_year", "jurisdiction", "ipc"):
            if key not in rec:
                raise DataFormatError(f"{path}:{lineno}: query record lacks {key!r}")
        out.append(rec)
    return out


# --- full build ----------------------------------------------------------------

@dataclass
class BuildConfig:
    per_year: int
    years: tuple[int, int]
    distractors: int
    seed: int

    @property
    def year_range(self) -> range:
        return range(self.years[0], self.years[1] + 1)


@dataclass
class Benchmark:
    queries: list[PatentDocument]
    relevance: dict[str, RelevanceSets]
    corpus: list[PatentDocument]
    report: dict


def _counts(values) -> dict:
    return dict(sorted(Counter(values).items(), key=lambda kv: str(kv[0])))


def build_benchmark(docs: Sequence[PatentDocument], edges: Sequence[CitationEdge],
                    config: BuildConfig) -> Benchmark:
    docs, edges = dedupe_families(docs, edges)
    by_id = {d.doc_id: d for d in docs}
    index = CitationIndex(e for e in edges if e.src in by_id and e.dst in by_id)
    sample = sample_queries(docs, index, config.per_year, config.year_range, config.seed)
    qset = set(sample.queries)
    pool = set(by_id) - qset
    relevance = {q: index.relevance(q, pool) for q in sample.queries}
    corpus = assemble_corpus(sample.queries, relevance, docs, config.distractors, config.seed)
    queries = [by_id[q] for q in sample.queries]

    sizes = [len(relevance[q].all) for q in sample.queries]
    report = {
        "config": {"per_year": config.per_year, "years": list(config.years),
                   "distractors": config.distractors, "seed": config.seed},
        "source_documents": len(docs),
        "source_citations": len(edges),
        "query_count": len(queries),
        "corpus_count": len(corpus),
        "queries_with_xy": sum(1 for q in sample.queries if relevance[q].xy),
        "queries_with_a": sum(1 for q in sample.queries if relevance[q].a),
        "relevant_per_query": {
            "mean": statistics.fmean(sizes) if sizes else 0.0,
            "median": statistics.median(sizes) if sizes else 0,
            "min": min(sizes, default=0),
            "max": max(sizes, default=0),
        },
        "queries_by_year": _counts(d.pub_year for d in queries),
        "queries_by_section": _counts(d.primary_ipc.section if d.ipc_codes else "none" for d in queries),
        "queries_by_jurisdiction": _counts(d.jurisdiction for d in queries),
        "corpus_by_year": _counts(d.pub_year for d in corpus),
        "corpus_by_section": _counts(d.primary_ipc.section if d.ipc_codes else "none" for d in corpus),
        "corpus_by_jurisdiction": _counts(d.jurisdiction for d in corpus),
        "dropped_queries": sample.dropped,
        "warnings": sample.warnings,
    }
    return Benchmark(queries, relevance, corpus, report)


def write_benchmark(bench: Benchmark, out_dir, ai_views: Optional[AiViewTable] = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "queries.jsonl", out / "qrels.tsv", out / "corpus.jsonl", out / "build_report.json"]
    with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
        for doc in bench.queries:
            fh.write(dump_jsonl_line(query_record(doc, ai_views)))
    save_qrels(bench.relevance, paths[1])
    save_corpus(bench.corpus, paths[2])
    with open(paths[3], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(bench.report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
