"""Multi-view contrastive training at desk scale.

Pairs come from two sources: citation edges (anchor = citing or cited
document under some view, positive = the other end as ``tacd``) and
self-alignment (two different views of the same family). The objective is
InfoNCE with in-batch negatives over a linear projection head whose output
is re-normalized; gradients are derived by hand and checked against finite
differences in the test-suite.
"""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import CitationEdge, PatentDocument
from .errors import TrainingError
from .matrix import MAGIC_HEAD, EmbeddingMatrix, read_container, write_container
from .metrics import mean, ndcg_at_k
from .retrieval import search
from .views import STRUCTURED_VIEWS, AiViewTable, ViewName, extract_view

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.05
CITATION = "citation"
SELF_ALIGNMENT = "self_alignment"


@dataclass(frozen=True)
class TrainingPair:
    anchor: tuple[str, ViewName]
    positive: tuple[str, ViewName]
    kind: str

    @property
    def docs(self) -> set[str]:
        return {self.anchor[0], self.positive[0]}


@dataclass
class PairBatch:
    pairs: list[TrainingPair]
    partial: bool = False

    def __len__(self):
        return len(self.pairs)

    def count(self, kind: str) -> int:
        return sum(1 for p in self.pairs if p.kind == kind)


def self_alignment_count(p: float, batch_size: int) -> int:
    # guard against p*B landing a hair above an integer (0.3*10 = 3.0000000000000004)
    return min(batch_size, math.ceil(round(p * batch_size, 9)))


def available_views(doc: PatentDocument, ai_views: Optional[AiViewTable] = None,
                    views: Sequence[ViewName] = STRUCTURED_VIEWS) -> list[ViewName]:
    out = []
    for v in views:
        try:
            if extract_view(doc, v, ai_views):
                out.append(v)
        except Exception:  # tacd on an incomplete document
            continue
    return out


def sample_pairs(corpus: Sequence[PatentDocument], edges: Sequence[CitationEdge], p: float,
                 batch_size: int, seed: int, ai_views: Optional[AiViewTable] = None,
                 symmetric: bool = False) -> list[PairBatch]:
    """One epoch of batches, each with ceil(p*B) self-alignment and the rest citation pairs.

    No document occurs in two pairs of the same batch, so every in-batch
    negative is a genuinely different document. The epoch ends when either
    pool can no longer fill its share; whatever was gathered for that last
    batch is returned with ``partial=True``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    rng = random.Random(seed)
    by_id = {d.doc_id: d for d in corpus}
    views = {d.doc_id: available_views(d, ai_views) for d in sorted(corpus, key=lambda d: d.doc_id)}

    def positive_view(doc_id):
        vs = views[doc_id]
        return ViewName.TACD if ViewName.TACD in vs else vs[0]

    links = sorted({(e.src, e.dst) for e in edges if e.src in by_id and e.dst in by_id
                    and views[e.src] and views[e.dst]})
    if symmetric:
        links = sorted(set(links) | {(b, a) for a, b in links})
    rng.shuffle(links)
    cit_queue = deque(TrainingPair((a, rng.choice(views[a])), (b, positive_view(b)), CITATION) for a, b in links)

    self_docs = [d for d in views if len(views[d]) >= 2]
    rng.shuffle(self_docs)
    self_queue = deque()
    for d in self_docs:
        v1, v2 = rng.sample(views[d], 2)
        self_queue.append(TrainingPair((d, v1), (d, v2), SELF_ALIGNMENT))

    n_self = self_alignment_count(p, batch_size)
    n_cit = batch_size - n_self

    def take(queue: deque, n: int, used: set) -> list[TrainingPair]:
        got, deferred = [], []
        while queue and len(got) < n:
            pair = queue.popleft()
            if pair.docs & used:
                deferred.append(pair)
            else:
                got.append(pair)
                used |= pair.docs
        queue.extendleft(reversed(deferred))
        return got

    batches = []
    while True:
        used: set[str] = set()
        pairs = take(cit_queue, n_cit, used) + take(self_queue, n_self, used)
        full = len(pairs) == batch_size
        if full:
            batches.append(PairBatch(pairs))
            continue
        if pairs:
            log.info("final batch holds %d of %d pairs", len(pairs), batch_size)
            batches.append(PairBatch(pairs, partial=True))
        break
    return batches


# --- projection head and loss ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionHead:
    weight: np.ndarray  # (out_dim, in_dim)
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        w = np.array(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("weight must be a matrix")
        object.__setattr__(self, "weight", w)

    @classmethod
    def identity(cls, dim: int, tau: float = DEFAULT_TAU) -> "ProjectionHead":
        return cls(np.eye(dim), tau)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        y = np.asarray(x, dtype=np.float64) @ self.weight.T
        return y / np.linalg.norm(y, axis=1, keepdims=True)

    def apply(self, m: EmbeddingMatrix) -> EmbeddingMatrix:
        return EmbeddingMatrix(self.out_dim, m.ids, self.project(m.rows).astype(np.float32))

    def step(self, grad: np.ndarray, lr: float) -> "ProjectionHead":
        return ProjectionHead(self.weight - lr * grad, self.tau)


def save_head(head: ProjectionHead, path) -> None:
    """Weight rows in the SHED container; the temperature rides in the first id."""
    ids = [f"tau={head.tau!r}"] + [f"row{i}" for i in range(1, head.out_dim)]
    write_container(path, MAGIC_HEAD, ids, head.weight.astype(np.float32))


def load_head(path) -> ProjectionHead:
    _, ids, rows = read_container(path, MAGIC_HEAD)
    tau = float(ids[0].partition("=")[2]) if ids and ids[0].startswith("tau=") else DEFAULT_TAU
    return ProjectionHead(rows.astype(np.float64), tau)


def _unit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if not np.all(np.isfinite(norms)) or np.any(norms == 0):
        raise TrainingError("projection produced a zero or non-finite vector")
    return x / norms, norms


def info_nce_loss(head: ProjectionHead, anchors: np.ndarray, positives: np.ndarray) -> tuple[float, np.ndarray]:
    """InfoNCE loss over in-batch negatives and its gradient w.r.t. ``head.weight``.

    With u_i, v_j the projected, re-normalized anchors and positives and
    logits s_ij = u_i . v_j / tau, the loss is the mean over i of
    logsumexp_j(s_ij) - s_ii.
    """
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("anchors and positives must be equal-shape (B, d) arrays with B >= 1")
    b = a.shape[0]
    w = head.weight
    u, nu = _unit(a @ w.T)
    v, nv = _unit(p @ w.T)
    logits = (u @ v.T) / head.tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = -float(np.mean(np.diag(log_probs)))
    if not math.isfinite(loss):
        raise TrainingError("non-finite InfoNCE loss")

    # d loss / d logits = (softmax - I) / B, then chain through the cosine
    g_logits = (expd / denom - np.eye(b)) / b
    g_s = g_logits / head.tau
    g_u = g_s @ v
    g_v = g_s.T @ u
    # through y -> y / |y|: (g - (g . y_hat) y_hat) / |y|
    g_ya = (g_u - np.sum(g_u * u, axis=1, keepdims=True) * u) / nu
    g_yp = (g_v - np.sum(g_v * v, axis=1, keepdims=True) * v) / nv
    grad = g_ya.T @ a + g_yp.T @ p
    return loss, grad


# --- training loop --------------------------------------------------------------------

@dataclass
class EarlyStopping:
    eval_interval: int = 5
    patience: int = 3
    metric: str = "ndcg@10"


@dataclass
class TrainResult:
    head: ProjectionHead
    trace: list[tuple[int, float]]
    losses: list[float] = field(default_factory=list)
    best_step: int = 0
    stopped_early: bool = False

    @property
    def initial(self) -> float:
        return self.trace[0][1]

    @property
    def best(self) -> float:
        return max(v for _, v in self.trace)


VectorLookup = Callable[[Sequence[tuple[str, ViewName]]], np.ndarray]


def train(head: ProjectionHead, batches: Sequence[PairBatch], vectors: VectorLookup | Mapping,
          learning_rate: float, stop: EarlyStopping, validate: Callable[[ProjectionHead], float]) -> TrainResult:
    """Single pass of plain gradient descent with validation-based early stopping.

    ``validate`` scores a head (higher is better). It runs once before the
    first step and then every ``stop.eval_interval`` batches; training stops
    after ``stop.patience`` evaluations without improvement. The best head
    seen, possibly the initial one, is returned.
    """
    lookup = vectors if callable(vectors) else (lambda keys: np.stack([vectors[k] for k in keys]))
    best_head = head
    best = validate(head)
    trace = [(0, best)]
    losses = []
    stale = 0
    stopped = False
    for i, batch in enumerate(batches):
        anchors = lookup([pr.anchor for pr in batch.pairs])
        positives = lookup([pr.positive for pr in batch.pairs])
        try:
            loss, grad = info_nce_loss(head, anchors, positives)
        except TrainingError as exc:
            raise TrainingError(f"batch {i}: {exc}", batch_index=i) from None
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"batch {i}: non-finite gradient", batch_index=i)
        losses.append(loss)
        head = head.step(grad, learning_rate)
        step = i + 1
        if step % stop.eval_interval == 0 or step == len(batches):
            score = validate(head)
            trace.append((step, score))
            log.info("step %d loss %.4f %s %.4f", step, loss, stop.metric, score)
            if score > best:
                best, best_head, stale = score, head, 0
            else:
                stale += 1
                if stale >= stop.patience:
                    stopped = step < len(batches)
                    break
    best_step = next(s for s, v in trace if v == best)
    return TrainResult(best_head, trace, losses, best_step, stopped)


def make_validator(queries: EmbeddingMatrix, corpus: EmbeddingMatrix, relevance: Mapping,
                   k: int = 10, category: str = "All") -> Callable[[ProjectionHead], float]:
    """Mean NDCG@k of the projected query vectors against the projected corpus."""
    judged = [q for q in queries.ids if relevance[q].get(category)]
    qm = queries.subset(judged)

    def validate(head: ProjectionHead) -> float:
        runs = search(head.apply(qm), head.apply(corpus), depth=k, threads=1)
        return mean([ndcg_at_k(r.doc_ids, relevance[r.query_id].get(category), k) for r in runs])

    return validate


# --- end-to-end toy run -------------------------------------------------------------------

@dataclass
class ToyConfig:
    p: float = 0.25
    batch_size: int = 16
    tau: float = DEFAULT_TAU
    learning_rate: float = 0.5
    seed: int = 0
    dim: int = 64
    max_tokens: int = 512
    symmetric: bool = False
    stop: EarlyStopping = field(default_factory=EarlyStopping)


def section_token(view: ViewName) -> str:
    """View marker prepended to training texts, standing in for section tokens."""
    return f"[{view.value}] "


def train_toy(docs: Sequence[PatentDocument], edges: Sequence[CitationEdge],
              query_texts: Mapping[str, str], relevance: Mapping, bench_corpus: Sequence[PatentDocument],
              cfg: ToyConfig, ai_views: Optional[AiViewTable] = None) -> TrainResult:
    """Train a projection head on citation/self-alignment pairs and validate on a benchmark.

    Edges touching a validation query are withheld from training. Inference
    vectors (validation side) carry no view marker.
    """
    from .embedding import EmbedderSpec, embed_batch, embed_matrix
    from .views import tacd

    spec = EmbedderSpec("test", dim=cfg.dim, max_tokens=cfg.max_tokens)
    held_out = set(query_texts)
    train_edges = [e for e in edges if e.src not in held_out and e.dst not in held_out]
    train_docs = [d for d in docs if d.doc_id not in held_out]
    batches = sample_pairs(train_docs, train_edges, cfg.p, cfg.batch_size, cfg.seed, ai_views, cfg.symmetric)
    by_id = {d.doc_id: d for d in train_docs}

    keys = sorted({k for b in batches for pr in b.pairs for k in (pr.anchor, pr.positive)},
                  key=lambda k: (k[0], k[1].value))
    vecs = {}
    if keys:
        texts = [section_token(v) + extract_view(by_id[d], v, ai_views) for d, v in keys]
        rows = np.concatenate([embed_batch(spec, texts[i:i + 512]) for i in range(0, len(texts), 512)])
        vecs = {k: rows[i].astype(np.float64) for i, k in enumerate(keys)}

    qids = sorted(query_texts)
    qm = embed_matrix(spec, qids, [query_texts[q] for q in qids])
    cm = embed_matrix(spec, [d.doc_id for d in bench_corpus], [tacd(d) for d in bench_corpus])
    validate = make_validator(qm, cm, relevance)
    head = ProjectionHead.identity(cfg.dim, cfg.tau)
    return train(head, batches, vecs, cfg.learning_rate, cfg.stop, validate)
