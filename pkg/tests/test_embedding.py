import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sophia_bench.embedding import EmbedderSpec, embed_batch, embed_matrix, hash_embed
from sophia_bench.errors import BackendError, DimensionMismatchError, NormalizationError, TransportError
from sophia_bench.matrix import EmbeddingMatrix, save_matrix

SPEC = EmbedderSpec("test", dim=64)


def test_deterministic():
    a = embed_batch(SPEC, ["a widget with gears"])
    b = embed_batch(SPEC, ["a widget with gears"])
    assert a.tobytes() == b.tobytes()


def test_unit_norm():
    rows = embed_batch(SPEC, ["alpha beta", "gamma " * 40, "x"])
    assert np.allclose(np.linalg.norm(rows.astype(np.float64), axis=1), 1.0, atol=1e-6)


def test_truncation_at_max_tokens():
    words = [f"w{i}" for i in range(600)]
    full = embed_batch(SPEC, [" ".join(words)])
    first = embed_batch(SPEC, [" ".join(words[:512])])
    assert full.tobytes() == first.tobytes()
    assert not np.array_equal(full, embed_batch(SPEC, [" ".join(words[:511])]))


def test_token_multiset_only():
    assert np.array_equal(hash_embed("b a a", 32, 512), hash_embed("a b a", 32, 512))
    assert np.array_equal(hash_embed("Gear, gear.", 32, 512), hash_embed("gear gear", 32, 512))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.text(alphabet="abc xyz", min_size=1).filter(str.strip), min_size=1, max_size=12),
       st.integers(1, 5))
def test_batch_partition_invariance(texts, chunk):
    whole = embed_batch(SPEC, texts)
    parts = np.concatenate([embed_batch(SPEC, texts[i:i + chunk]) for i in range(0, len(texts), chunk)])
    assert whole.tobytes() == parts.tobytes()


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        embed_batch(SPEC, ["ok", "   "])


def test_prefix_changes_vector():
    pre = EmbedderSpec("test", dim=64, prefix="passage: ")
    assert not np.array_equal(embed_batch(pre, ["gear"]), embed_batch(SPEC, ["gear"]))


def test_file_backend(tmp_path):
    m = EmbeddingMatrix(3, ("a", "b"), np.array([[3, 0, 4], [0, 2, 0]], dtype=np.float32))
    save_matrix(m, tmp_path / "pre.semb")
    spec = EmbedderSpec("file", dim=3, path=str(tmp_path / "pre.semb"))
    rows = embed_batch(spec, ["t1", "t2"], keys=["b", "a"])
    assert np.allclose(rows, [[0, 1, 0], [0.6, 0, 0.8]])
    with pytest.raises(BackendError):
        embed_batch(spec, ["t"], keys=["zz"])
    with pytest.raises(DimensionMismatchError):
        embed_batch(EmbedderSpec("file", dim=4, path=str(tmp_path / "pre.semb")), ["t"], keys=["a"])


def test_embed_matrix_ids():
    m = embed_matrix(SPEC, ["x", "y"], ["one", "two"], chunk=1)
    assert m.ids == ("x", "y") and m.rows.shape == (2, 64)


# --- http backend against a local server ------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    failures = 0
    dim = 4
    zero = False
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        cls = type(self)
        cls.seen.append(len(body["texts"]))
        if cls.failures > 0:
            cls.failures -= 1
            self.send_response(503)
            self.end_headers()
            return
        vecs = [[0.0] * cls.dim if cls.zero else [float(len(t)), 1.0] + [0.0] * (cls.dim - 2) for t in body["texts"]]
        out = json.dumps({"embeddings": vecs}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.failures, _Handler.dim, _Handler.zero, _Handler.seen = 0, 4, False, []
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()


def test_http_batches_and_normalizes(server):
    spec = EmbedderSpec("http", dim=4, endpoint=server, max_batch=3, max_in_flight=2)
    rows = embed_batch(spec, ["a", "bbb", "cc", "dddd", "e"])
    assert sorted(_Handler.seen) == [2, 3]
    want = np.array([[1, 1], [3, 1], [2, 1], [4, 1], [1, 1]], dtype=np.float64)
    want /= np.linalg.norm(want, axis=1, keepdims=True)
    assert np.allclose(rows[:, :2], want, atol=1e-6)


def test_http_retries_then_succeeds(server):
    _Handler.failures = 2
    spec = EmbedderSpec("http", dim=4, endpoint=server, retries=3)
    assert embed_batch(spec, ["x"]).shape == (1, 4)


def test_http_gives_up(server):
    _Handler.failures = 10
    spec = EmbedderSpec("http", dim=4, endpoint=server, retries=2)
    with pytest.raises(TransportError) as exc:
        embed_batch(spec, ["x"])
    assert exc.value.attempts == 2


def test_http_dimension_mismatch(server):
    _Handler.dim = 5
    with pytest.raises(DimensionMismatchError):
        embed_batch(EmbedderSpec("http", dim=4, endpoint=server), ["x"])


def test_http_zero_vector(server):
    _Handler.zero = True
    with pytest.raises(NormalizationError):
        embed_batch(EmbedderSpec("http", dim=4, endpoint=server), ["x"])


def test_http_unreachable():
    spec = EmbedderSpec("http", dim=4, endpoint="http://127.0.0.1:9", retries=2, timeout=1)
    with pytest.raises(TransportError):
        embed_batch(spec, ["x"])
