import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from sophia_bench.errors import DimensionMismatchError, RunFormatError
from sophia_bench.matrix import EmbeddingMatrix
from sophia_bench.retrieval import emit_run, format_score, load_run, resolve_threads, search


def _unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


def _m(ids, rows):
    return EmbeddingMatrix(rows.shape[1], tuple(ids), rows)


def test_self_similarity():
    rng = np.random.default_rng(0)
    rows = _unit(rng, 20, 8)
    corpus = _m([f"d{i}" for i in range(20)], rows)
    (r,) = search(_m(["q"], rows[7:8]), corpus, depth=5)
    assert r.doc_ids[0] == "d7"
    assert abs(float(r.scores[0]) - 1.0) < 1e-5


def test_orthogonal_query_ties_by_doc_id():
    corpus = _m(["c", "a", "b"], np.array([[0, 1, 0], [0, 0, 1], [0, 1, 0]], dtype=np.float32))
    (r,) = search(_m(["q"], np.array([[1, 0, 0]], dtype=np.float32)), corpus, depth=3)
    assert r.doc_ids == ("a", "b", "c")
    assert r.scores.tolist() == [0.0, 0.0, 0.0]
    assert not np.signbit(r.scores).any()


def test_matches_full_sort_50():
    rng = np.random.default_rng(1)
    rows = _unit(rng, 50, 12)
    ids = [f"d{i:02d}" for i in rng.permutation(50)]
    q = _unit(rng, 5, 12)
    got = search(_m([f"q{i}" for i in range(5)], q), _m(ids, rows), depth=50)
    want = oracles.full_sort(q, [f"q{i}" for i in range(5)], rows, ids, 50)
    for r in got:
        assert list(r.doc_ids) == [d for d, _ in want[r.query_id]]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 70), st.integers(0, 2 ** 31 - 1))
def test_depth_and_ties_property(n, depth, seed):
    rng = np.random.default_rng(seed)
    rows = (rng.integers(-1, 2, size=(n, 4)).astype(np.float32) + 0.0)
    rows[~rows.any(axis=1), 0] = 1.0
    ids = [f"d{i:03d}" for i in rng.permutation(n)]
    q = rng.integers(-1, 2, size=(3, 4)).astype(np.float32)
    got = search(_m(["a", "b", "c"], q), _m(ids, rows), depth=depth)
    want = oracles.full_sort(q, ["a", "b", "c"], rows, ids, depth)
    for r in got:
        assert len(r) == min(depth, n)
        assert list(r.doc_ids) == [d for d, _ in want[r.query_id]]
        assert np.all(np.diff(r.scores) <= 0)


def test_block_padding_does_not_change_scores():
    rng = np.random.default_rng(2)
    c = _m([f"d{i}" for i in range(300)], _unit(rng, 300, 16))
    q_rows = _unit(rng, 130, 16)
    full = search(_m([f"q{i}" for i in range(130)], q_rows), c, depth=10)
    single = search(_m(["q129"], q_rows[129:]), c, depth=10)
    assert full[-1] == single[0]


def test_dimension_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(DimensionMismatchError):
        search(_m(["q"], _unit(rng, 1, 4)), _m(["d"], _unit(rng, 1, 5)))


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("SOPHIA_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(5) == 5
    monkeypatch.delenv("SOPHIA_THREADS")
    assert resolve_threads() >= 1


@given(st.floats(width=32, allow_nan=False, allow_infinity=False))
def test_score_format_round_trips(x):
    assert np.float32(format_score(x)) == np.float32(x)


def test_run_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    c = _m([f"d{i}" for i in range(40)], _unit(rng, 40, 8))
    runs = search(_m(["q2", "q1"], _unit(rng, 2, 8)), c, depth=10)
    emit_run(runs, tmp_path / "r.tsv")
    text = (tmp_path / "r.tsv").read_text()
    assert text.splitlines()[0].startswith("q1\t")
    back = load_run(tmp_path / "r.tsv")
    assert set(back) == {"q1", "q2"}
    for r in runs:
        assert back[r.query_id] == r


def test_handwritten_run(tmp_path):
    p = tmp_path / "r.tsv"
    p.write_text("q\tb\t2\t0.5\nq\ta\t1\t0.9\nq\tc\t3\t0.1\n")
    r = load_run(p)["q"]
    assert [e[2] for e in r.entries] == [1, 2, 3]
    assert r.doc_ids == ("a", "b", "c")


@pytest.mark.parametrize("text", [
    "q\ta\t1\t0.9\nq\tb\t3\t0.5\n",
    "q\ta\t1\t0.9\nq\ta\t2\t0.5\n",
    "q\ta\t1\n",
    "q\ta\tone\t0.9\n",
    "q\ta\t1\tabc\n",
])
def test_bad_run_files(tmp_path, text):
    p = tmp_path / "r.tsv"
    p.write_text(text)
    with pytest.raises(RunFormatError):
        load_run(p)
