"""Embedding gateway: one contract over several backends.

Every backend's output goes through the same post-processing: dimension
check, then L2 normalization in float64, then storage as float32. The
gateway never trusts a backend's claim of normalized output.
"""

from __future__ import annotations

import hashlib
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import httpx
import numpy as np

from .errors import BackendError, DimensionMismatchError, NormalizationError, TransportError
from .matrix import EmbeddingMatrix, load_matrix

log = logging.getLogger(__name__)

BACKENDS = ("file", "http", "test")


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str
    dim: int
    max_tokens: int = 512
    endpoint: Optional[str] = None
    path: Optional[str] = None
    prefix: str = ""
    timeout: float = 60.0
    max_batch: int = 32
    max_in_flight: int = 4
    retries: int = 3

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise ValueError(f"unknown embedder kind {self.kind!r}; expected one of {BACKENDS}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http embedder needs an endpoint")
        if self.kind == "file" and not self.path:
            raise ValueError("file embedder needs a path")


# --- test backend ----------------------------------------------------------------

_TOKEN_STRIP = re.compile(r"^\W+|\W+$")


def whitespace_tokens(text: str, max_tokens: int) -> list[str]:
    return text.split()[:max_tokens]


@lru_cache(maxsize=1 << 16)
def _token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def hash_embed(text: str, dim: int, max_tokens: int) -> np.ndarray:
    """Signed feature hashing of the first ``max_tokens`` whitespace tokens.

    Tokens are lower-cased and stripped of surrounding punctuation. The low
    bits of a 64-bit BLAKE2b digest pick the bucket and the top bit picks the
    sign, so the vector depends only on the token multiset. Two tokens may
    collide in one bucket; that is deterministic, and opposite signs can in
    rare cases cancel to a zero vector, which the gateway then rejects.
    """
    vec = np.zeros(dim, dtype=np.float64)
    for tok in whitespace_tokens(text, max_tokens):
        tok = _TOKEN_STRIP.sub("", tok.lower())
        if not tok:
            continue
        h = _token_hash(tok)
        vec[h % dim] += -1.0 if h >> 63 else 1.0
    return vec


def _embed_test(spec: EmbedderSpec, texts: Sequence[str]) -> np.ndarray:
    return np.stack([hash_embed(t, spec.dim, spec.max_tokens) for t in texts])


# --- file backend ------------------------------------------------------------------

@lru_cache(maxsize=4)
def _load_file_backend(path: str) -> tuple[EmbeddingMatrix, dict]:
    m = load_matrix(path, check_norms=False)
    return m, m.index()


def _embed_file(spec: EmbedderSpec, keys: Sequence[str]) -> np.ndarray:
    m, pos = _load_file_backend(spec.path)
    if m.dim != spec.dim:
        raise DimensionMismatchError(f"{spec.path}: stored dim {m.dim}, expected {spec.dim}")
    try:
        return m.rows[[pos[k] for k in keys]].astype(np.float64)
    except KeyError as exc:
        raise BackendError(f"{spec.path}: no precomputed vector for {exc.args[0]!r}") from None


# --- http backend ------------------------------------------------------------------

def _post_batch(spec: EmbedderSpec, client: httpx.Client, texts: list[str]) -> list:
    url = spec.endpoint.rstrip("/") + "/embed"
    payload = {"texts": texts, "max_tokens": spec.max_tokens}
    last = None
    for attempt in range(1, spec.retries + 1):
        try:
            resp = client.post(url, json=payload, timeout=spec.timeout)
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise BackendError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            else:
                body = resp.json()
                embs = body.get("embeddings") if isinstance(body, dict) else None
                if not isinstance(embs, list) or len(embs) != len(texts):
                    raise BackendError(f"{url}: response must carry {len(texts)} embeddings")
                return embs
        except httpx.TransportError as exc:
            last = f"{type(exc).__name__}: {exc}"
        if attempt < spec.retries:
            time.sleep(min(0.05 * 2 ** (attempt - 1), 2.0))
    raise TransportError(f"{url}: {last}", attempts=spec.retries)


def _embed_http(spec: EmbedderSpec, texts: Sequence[str]) -> np.ndarray:
    batches = [list(texts[i:i + spec.max_batch]) for i in range(0, len(texts), spec.max_batch)]
    with httpx.Client() as client, ThreadPoolExecutor(max_workers=spec.max_in_flight) as pool:
        results = list(pool.map(lambda b: _post_batch(spec, client, b), batches))
    rows = []
    for batch in results:
        for vec in batch:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != spec.dim:
                raise DimensionMismatchError(f"backend returned dim {arr.shape}, expected {spec.dim}")
            rows.append(arr)
    return np.stack(rows)


# --- gateway -----------------------------------------------------------------------

def normalize_rows(raw: np.ndarray, dim: int) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != dim:
        raise DimensionMismatchError(f"backend returned shape {raw.shape}, expected (n, {dim})")
    norms = np.linalg.norm(raw, axis=1)
    bad = np.flatnonzero(~np.isfinite(norms) | (norms == 0.0))
    if bad.size:
        raise NormalizationError(int(bad[0]))
    return (raw / norms[:, None]).astype(np.float32)


def embed_batch(spec: EmbedderSpec, texts: Sequence[str], keys: Optional[Sequence[str]] = None) -> np.ndarray:
    """Embed ``texts`` into an (n, dim) float32 array of unit rows.

    ``keys`` identifies each text for the file backend, which serves
    precomputed vectors by id; the other backends ignore it.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, t in enumerate(texts):
        if not t or not t.strip():
            raise ValueError(f"text #{i} is empty")
    if spec.prefix:
        texts = [spec.prefix + t for t in texts]
    if spec.kind == "test":
        raw = _embed_test(spec, texts)
    elif spec.kind == "file":
        if keys is None or len(keys) != len(texts):
            raise ValueError("file backend needs one key per text")
        raw = _embed_file(spec, keys)
    else:
        raw = _embed_http(spec, texts)
    return normalize_rows(raw, spec.dim)


def embed_matrix(spec: EmbedderSpec, ids: Sequence[str], texts: Sequence[str], chunk: int = 256) -> EmbeddingMatrix:
    parts = [embed_batch(spec, texts[i:i + chunk], ids[i:i + chunk]) for i in range(0, len(texts), chunk)]
    rows = np.concatenate(parts) if parts else np.zeros((0, spec.dim), np.float32)
    return EmbeddingMatrix(spec.dim, tuple(ids), rows)
