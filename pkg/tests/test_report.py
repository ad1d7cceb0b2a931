import json
import math
import random

import pytest

from sophia_bench.builder import RelevanceSets
from sophia_bench.metrics import evaluate
from sophia_bench.report import (AxisSlice, EvalSummary, emit_tables, slice_by_category, slice_by_jurisdiction,
                                 slice_by_section, slice_by_year, to_markdown, view_table, write_report)


def _values(n, seed=0):
    rng = random.Random(seed)
    return {f"q{i:03d}": {"ndcg@10": rng.random(), "mrr": rng.random()} for i in range(n)}


def test_category_exclusion():
    rel = {"q1": RelevanceSets(frozenset({"d1"}), frozenset()),
           "q2": RelevanceSets(frozenset({"d2"}), frozenset({"d3"}))}
    run = {"q1": ["d1", "d2"], "q2": ["d3", "d2"]}
    counts = {s.key: s.query_count for s in slice_by_category(rel, run, cutoffs=(1,))}
    assert counts == {"XY": 2, "A": 1, "All": 2}


def test_category_counts_match_scan():
    rng = random.Random(4)
    docs = [f"d{i}" for i in range(40)]
    rel = {}
    for i in range(30):
        xy = frozenset(rng.sample(docs, rng.randint(0, 3)))
        a = frozenset(rng.sample(docs, rng.randint(0 if xy else 1, 3)))
        rel[f"q{i}"] = RelevanceSets(xy, a)
    run = {q: rng.sample(docs, 40) for q in rel}
    counts = {s.key: s.query_count for s in slice_by_category(rel, run, cutoffs=(10,))}
    assert counts["XY"] == sum(1 for r in rel.values() if r.xy)
    assert counts["A"] == sum(1 for r in rel.values() if r.a)
    assert counts["All"] == 30


def test_year_slices():
    values = _values(40)
    records = {q: {"pub_year": 2016 + i % 10} for i, q in enumerate(sorted(values))}
    slices = slice_by_year(records, values)
    assert [s.key for s in slices] == [str(y) for y in range(2016, 2026)]
    assert all(s.query_count == 4 for s in slices)


def test_jurisdiction_rollup_and_partition():
    values = _values(300)
    ids = sorted(values)
    records = {q: {"jurisdiction": "CHI" if i < 160 else "ENG" if i < 260 else "KOR"} for i, q in enumerate(ids)}
    slices = slice_by_jurisdiction(records, values)
    assert [(s.key, s.query_count) for s in slices] == [("CHI", 160), ("ENG", 100), ("ROW", 40)]
    for metric in ("ndcg@10", "mrr"):
        weighted = math.fsum(s.query_count * s.means[metric] for s in slices) / 300
        assert weighted == pytest.approx(math.fsum(v[metric] for v in values.values()) / 300, abs=1e-12)
    excluded = slice_by_jurisdiction(records, values, mode="exclude")
    assert [s.key for s in excluded] == ["CHI", "ENG"]


def test_section_slices():
    values = _values(3)
    records = {"q000": {"ipc": ["G06F-003/01", "H04L"]}, "q001": {"ipc": ["H04L"]}, "q002": {"ipc": []}}
    primary = {s.key: s.query_count for s in slice_by_section(records, values)}
    assert primary == {"G": 1, "H": 1, "none": 1}
    multi = slice_by_section(records, values, multi_ipc=True)
    assert {s.key: s.query_count for s in multi} == {"G": 1, "H": 2, "none": 1}
    assert multi[0].axis == "ipc_section_multi"


def _summary(model, view, ndcg):
    return EvalSummary(model, view, {"All": {"ndcg@10": ndcg, "recall@10": ndcg, "recall@100": ndcg}}, {"All": 1}, [])


def test_view_table_max_min():
    results = [_summary("m", "ab", 0.4), _summary("m", "tacd", 0.7), _summary("m", "obj", 0.2)]
    rows, fields = view_table(results)
    assert fields == ("view", "m")
    assert [r["view"] for r in rows] == ["ab", "obj", "tacd", "Average", "Max-Min"]
    assert rows[-1]["m"] == pytest.approx(0.5, abs=1e-15)
    assert rows[-2]["m"] == pytest.approx(1.3 / 3, abs=1e-15)


# a 12-view column of 3-place scores with known summary rows
REFERENCE_COLUMN = {"tacd": .538, "clms": .524, "ab": .517, "iclm": .517, "obj": .474, "DESC": .481, "adb": .383,
                    "ai_ab": .539, "ai_feat": .535, "ai_clm_sum": .537, "ai_adv": .496, "ai_obj": .482}


def test_view_table_summary_rows_on_reference_column():
    rows, _ = view_table([_summary("M", v, x) for v, x in REFERENCE_COLUMN.items()])
    assert round(rows[-2]["M"], 3) == 0.502
    assert round(rows[-1]["M"], 3) == 0.156
    assert [r["view"] for r in rows[:12]] == ["ab", "clms", "DESC", "iclm", "obj", "adb", "tacd",
                                              "ai_clm_sum", "ai_obj", "ai_adv", "ai_ab", "ai_feat"]


def test_markdown_table():
    md = to_markdown([{"a": 0.12345, "b": None}], ("a", "b"))
    assert md.splitlines() == ["| a | b |", "|---|---|", "| 0.123 |  |"]


def test_emit_and_report(tmp_path):
    rel = {"q1": RelevanceSets(frozenset({"d1"}), frozenset({"d2"})), "q2": RelevanceSets(frozenset({"d2"}), frozenset())}
    report = evaluate({"q1": ["d1", "d2"], "q2": ["d1", "d2"]}, rel, cutoffs=(1, 2, 10, 100))
    slices = [AxisSlice("citation_category", c, report.counts[c], report.means[c], c) for c in ("XY", "A", "All")]
    paths = emit_tables(slices, tmp_path / "e", ("csv", "json"), "m", "tacd")
    names = {p.name for p in paths}
    assert {"slices.csv", "slices.json", "recall_curve.csv", "ndcg_by_year.csv",
            "ndcg_by_jurisdiction.csv", "ndcg_by_ipc.csv"} <= names
    curve = (tmp_path / "e" / "recall_curve.csv").read_text().splitlines()
    assert curve[0] == "model,view,cutoff,XY,A,All"
    assert curve[1] == "m,tacd,1,0.5,0.0,0.25"
    assert curve[2] == "m,tacd,2,1.0,1.0,1.0"

    (tmp_path / "metrics.json").write_text(json.dumps(
        {"model": "m", "view": "tacd", "means": report.means, "counts": report.counts, "slices": []}))
    out = write_report([EvalSummary.load(tmp_path / "metrics.json")], tmp_path / "r", ("md",))
    assert (tmp_path / "r" / "query_robustness.md").exists()
    assert all(p.exists() for p in out)
