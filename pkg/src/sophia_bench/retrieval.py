"""Exact top-k cosine retrieval and run files.

Scores are accumulated in float64 (BLAS dgemm) and rounded once to float32;
ranking compares those float32 values, so a ranking read back from a run
file is identical to the one computed in memory. Ties break by ascending
doc_id. Queries are processed in fixed-size, zero-padded blocks with BLAS
pinned to one thread per worker, so the arithmetic is identical for every
worker count.
"""

from __future__ import annotations

import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DimensionMismatchError, RunFormatError
from .matrix import EmbeddingMatrix

DEFAULT_DEPTH = 1000
BLOCK = 128


@dataclass(frozen=True, eq=False)
class RunRanking:
    query_id: str
    doc_ids: tuple[str, ...]
    scores: np.ndarray  # float32, non-increasing

    def __len__(self):
        return len(self.doc_ids)

    def __eq__(self, other):
        return (isinstance(other, RunRanking) and self.query_id == other.query_id
                and self.doc_ids == other.doc_ids
                and np.array_equal(self.scores.view(np.uint32), other.scores.view(np.uint32)))

    @property
    def entries(self) -> list[tuple[str, float, int]]:
        return [(d, float(s), r) for r, (d, s) in enumerate(zip(self.doc_ids, self.scores), 1)]


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get("SOPHIA_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _top_k_block(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k column indices and scores under (score desc, index asc)."""
    n_rows, n = scores.shape
    if k >= n:
        idx = np.tile(np.arange(n), (n_rows, 1))
        order = np.lexsort((idx, -scores), axis=1) if n_rows else idx
        top = np.take_along_axis(idx, order, axis=1)
        return top, np.take_along_axis(scores, top, axis=1)
    # k-th largest value per row; everything strictly above it is in,
    # and the lowest-index ties fill the remaining slots
    kth = np.partition(scores, n - k, axis=1)[:, n - k]
    out_idx = np.empty((n_rows, k), dtype=np.int64)
    for r in range(n_rows):
        row = scores[r]
        t = kth[r]
        above = np.flatnonzero(row > t)
        ties = np.flatnonzero(row == t)[: k - above.size]
        cand = np.concatenate((above, ties))
        order = np.lexsort((cand, -row[cand]))
        out_idx[r] = cand[order]
    return out_idx, np.take_along_axis(scores, out_idx, axis=1)


def score_block(q64: np.ndarray, c64: np.ndarray) -> np.ndarray:
    s = (q64 @ c64.T).astype(np.float32)
    s += np.float32(0.0)  # fold -0.0 into +0.0
    return s


def search(queries: EmbeddingMatrix, corpus: EmbeddingMatrix, depth: int = DEFAULT_DEPTH,
           threads: Optional[int] = None) -> list[RunRanking]:
    """Exact top-``depth`` corpus documents for every query by cosine similarity."""
    if queries.dim != corpus.dim:
        raise DimensionMismatchError(f"query dim {queries.dim} != corpus dim {corpus.dim}")
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    threads = resolve_threads(threads)
    k = min(depth, len(corpus))

    # column order = ascending doc_id, so index order is the tie-break order
    col_order = sorted(range(len(corpus)), key=corpus.ids.__getitem__)
    col_ids = [corpus.ids[i] for i in col_order]
    c64 = np.ascontiguousarray(corpus.rows[col_order], dtype=np.float64)
    q_all = queries.rows
    n_q = len(queries)
    starts = list(range(0, n_q, BLOCK))
    results: list[Optional[tuple[np.ndarray, np.ndarray]]] = [None] * len(starts)

    def work(b: int) -> None:
        lo = starts[b]
        hi = min(lo + BLOCK, n_q)
        q64 = np.zeros((BLOCK, queries.dim), dtype=np.float64)
        q64[: hi - lo] = q_all[lo:hi]
        s = score_block(q64, c64)[: hi - lo]
        results[b] = _top_k_block(s, k)

    with threadpool_limits(limits=1, user_api="blas"):
        if threads == 1 or len(starts) == 1:
            for b in range(len(starts)):
                work(b)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, range(len(starts))))

    rankings = []
    for b, lo in enumerate(starts):
        idx, sc = results[b]
        for r in range(idx.shape[0]):
            rankings.append(RunRanking(
                queries.ids[lo + r],
                tuple(col_ids[j] for j in idx[r]),
                np.ascontiguousarray(sc[r], dtype=np.float32),
            ))
    return rankings


# --- run files -----------------------------------------------------------------------

def format_score(x) -> str:
    """Shortest decimal string that round-trips to the same float32."""
    return np.format_float_positional(np.float32(x), unique=True, trim="0")


def run_lines(rankings: Iterable[RunRanking]) -> Iterable[str]:
    for rk in sorted(rankings, key=lambda r: r.query_id):
        for rank, (d, s) in enumerate(zip(rk.doc_ids, rk.scores), 1):
            yield f"{rk.query_id}\t{d}\t{rank}\t{format_score(s)}\n"


def emit_run(rankings: Sequence[RunRanking], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        buf = []
        for line in run_lines(rankings):
            buf.append(line)
            if len(buf) >= 65536:
                fh.writelines(buf)
                buf.clear()
        fh.writelines(buf)


def load_run(path) -> dict[str, RunRanking]:
    """Parse a run file; entries are regrouped per query and ordered by rank."""
    rows: dict[str, list[tuple[int, str, str]]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise RunFormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            q, d, rank, score = parts
            try:
                rank_i = int(rank)
            except ValueError:
                raise RunFormatError(f"{path}:{lineno}: rank {rank!r} is not an integer") from None
            rows[q].append((rank_i, d, score))
    out = {}
    for q, entries in rows.items():
        entries.sort()
        ranks = [e[0] for e in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            missing = sorted(set(range(1, max(ranks) + 1)) - set(ranks))
            what = f"missing rank {missing[0]}" if missing else "repeated rank"
            raise RunFormatError(f"{path}: query {q!r} has a rank gap ({what})")
        docs = tuple(e[1] for e in entries)
        if len(set(docs)) != len(docs):
            seen = set()
            dup = next(d for d in docs if d in seen or seen.add(d))
            raise RunFormatError(f"{path}: duplicate pair ({q!r}, {dup!r})")
        try:
            scores = np.array([np.float32(e[2]) for e in entries], dtype=np.float32)
        except ValueError:
            raise RunFormatError(f"{path}: unparseable score for query {q!r}") from None
        out[q] = RunRanking(q, docs, scores)
    return out
