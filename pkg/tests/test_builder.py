import random

import pytest

import oracles
from conftest import make_doc
from sophia_bench.builder import (BuildConfig, CitationIndex, RelevanceSets, assemble_corpus, build_benchmark,
                                  build_relevance_sets, dedupe_families, load_qrels, qrels_lines, sample_queries,
                                  save_qrels)
from sophia_bench.corpus import CitationEdge
from sophia_bench.errors import MissingDocumentError, QrelsFormatError


def E(src, dst, cat):
    return CitationEdge(src, dst, cat)


def test_relevance_four_relationships():
    rs = build_relevance_sets("q", [E("q", "d1", "X"), E("d2", "q", "A")], {"d1", "d2"})
    assert (rs.xy, rs.a, rs.all) == ({"d1"}, {"d2"}, {"d1", "d2"})


def test_relevance_no_edges():
    rs = build_relevance_sets("q", [], {"d1"})
    assert rs.xy == rs.a == rs.all == frozenset()


def test_relevance_document_in_both_categories():
    rs = build_relevance_sets("q", [E("q", "d1", "X"), E("d1", "q", "A")], {"d1"})
    assert (rs.xy, rs.a, rs.all) == ({"d1"}, {"d1"}, {"d1"})


def test_relevance_restricted_to_pool():
    edges = [E("q", "d1", "Y"), E("q", "gone", "X"), E("d3", "q", "Y")]
    rs = build_relevance_sets("q", edges, {"d1", "d3"})
    assert rs.xy == {"d1", "d3"}


def test_relevance_matches_enumeration():
    rng = random.Random(1)
    ids = [f"d{i}" for i in range(30)]
    edges = list({(a, b): E(a, b, rng.choice("XYA")) for a, b in
                  (rng.sample(ids, 2) for _ in range(120))}.values())
    index = CitationIndex(edges)
    pool = set(ids[5:])
    for q in ids:
        rs = index.relevance(q, pool)
        assert (set(rs.xy), set(rs.a)) == oracles.relevance(q, edges, pool)


def _graph(n_per_year, years, linked):
    docs, edges = [], []
    for y in years:
        for i in range(n_per_year):
            docs.append(make_doc(f"{y}-{i}", year=y))
    for d in linked:
        edges.append(E(d, f"T-{d}", "X"))
        docs.append(make_doc(f"T-{d}", year=2000))
    return docs, edges


def test_sample_counts_per_year():
    docs, edges = _graph(5, (2016, 2017), [f"{y}-{i}" for y in (2016, 2017) for i in range(5)])
    s = sample_queries(docs, edges, 2, range(2016, 2018), seed=0)
    assert len(s.queries) == 4
    assert sorted(q[:4] for q in s.queries) == ["2016", "2016", "2017", "2017"]
    assert s.queries == sample_queries(docs, edges, 2, range(2016, 2018), seed=0).queries


def test_sample_only_eligible():
    docs = [make_doc(f"d{i:02d}", year=2016 + i % 10) for i in range(50)]
    rng = random.Random(3)
    linked = rng.sample(range(50), 10)
    edges = []
    for i in linked:
        edges.append(E(f"d{i:02d}", f"d{(i + 25) % 50:02d}", "X"))
    for i in range(50):
        edges.append(E(f"d{i:02d}", f"d{(i + 1) % 50:02d}", "A"))
    for seed in range(20):
        s = sample_queries(docs, edges, 3, range(2016, 2026), seed)
        qset = set(s.queries)
        pool = {d.doc_id for d in docs} - qset
        for q in s.queries:
            xy, _ = oracles.relevance(q, edges, pool)
            assert xy, (seed, q)
        # brute-force: every query must come from docs with some XY edge at all
        ever = {e.src for e in edges if e.is_xy} | {e.dst for e in edges if e.is_xy}
        assert qset <= ever


def test_sample_short_year_warns():
    docs, edges = _graph(3, (2016,), ["2016-0"])
    s = sample_queries(docs, edges, 2, [2016, 2017], seed=1)
    assert s.queries == ["2016-0"]
    assert len(s.warnings) == 2


def test_mutual_xy_pair_cannot_both_be_queries():
    docs = [make_doc("a", year=2016), make_doc("b", year=2016)]
    s = sample_queries(docs, [E("a", "b", "X")], 2, [2016], seed=0)
    assert len(s.queries) == 1


def test_assemble_union_and_saturation():
    docs = [make_doc(x) for x in ("q1", "q2", "d1", "d2", "d3")]
    rel = {"q1": RelevanceSets(frozenset({"d1"}), frozenset()), "q2": RelevanceSets(frozenset({"d1"}), frozenset({"d2"}))}
    assert [d.doc_id for d in assemble_corpus(["q1", "q2"], rel, docs, 0, 0)] == ["d1", "d2"]
    assert [d.doc_id for d in assemble_corpus(["q1", "q2"], rel, docs, 99, 0)] == ["d1", "d2", "d3"]


def test_assemble_missing_document():
    rel = {"q": RelevanceSets(frozenset({"ghost"}), frozenset())}
    with pytest.raises(MissingDocumentError):
        assemble_corpus(["q"], rel, [make_doc("q")], 0, 0)


def test_corpus_superset_of_relevant(fixture_corpus):
    bench = build_benchmark(fixture_corpus.docs, fixture_corpus.edges, BuildConfig(1, (2016, 2025), 15, 9))
    assert len(bench.queries) == 10
    corpus = {d.doc_id for d in bench.corpus}
    union = set()
    for q in bench.relevance.values():
        union |= q.all
    assert all(d in corpus for d in union)
    assert len(corpus) == len(union) + 15


def test_dedupe_families():
    docs = [make_doc("b", year=2018, family="F"), make_doc("a", year=2019, family="F"), make_doc("c", family="G")]
    kept, edges = dedupe_families(docs, [E("a", "c", "X"), E("b", "a", "Y"), E("c", "b", "A")])
    assert [d.doc_id for d in kept] == ["b", "c"]
    assert {(e.src, e.dst, e.category.value) for e in edges} == {("b", "c", "X"), ("c", "b", "A")}


def test_qrels_format_and_round_trip(tmp_path):
    rel = {"q2": RelevanceSets(frozenset({"d9"}), frozenset({"d1"})), "q1": RelevanceSets(frozenset(), frozenset({"d3"}))}
    assert qrels_lines(rel) == ["q1\td3\tA\n", "q2\td9\tXY\n", "q2\td1\tA\n"]
    save_qrels(rel, tmp_path / "q.tsv")
    assert load_qrels(tmp_path / "q.tsv") == rel


@pytest.mark.parametrize("line", ["q\td\tX\n", "q\tq\tXY\n", "q\td\n", "q\td\tXY\nq\td\tXY\n"])
def test_qrels_rejects(tmp_path, line):
    p = tmp_path / "bad.tsv"
    p.write_text(line)
    with pytest.raises(QrelsFormatError):
        load_qrels(p)
