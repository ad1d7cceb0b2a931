"""Axis slicing of per-query metrics and table / plot-data emission.

Single-run tables come from ``eval``; cross-run tables (model x view) come
from ``report``, which reads the ``metrics.json`` files that ``eval`` writes.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .ipc import parse_ipc
from .metrics import CATEGORIES, CUTOFFS, MetricReport, evaluate, mean
from .views import ViewName

DEFAULT_ROLLUP = "ROW"
DEFAULT_MIN_GROUP = 100
FORMATS = ("csv", "md", "json")
AXES = ("overall", "citation_category", "ipc_section", "jurisdiction", "year")
TABLE_FIELDS = ("model", "view", "axis", "key", "metric", "cutoff", "value", "query_count")


@dataclass(frozen=True)
class AxisSlice:
    axis: str
    key: str
    query_count: int
    means: dict
    category: str = "All"


# --- slicing -------------------------------------------------------------------------

def category_slices(report: MetricReport) -> list[AxisSlice]:
    return [AxisSlice("citation_category", cat, report.counts[cat], dict(report.means[cat]), cat)
            for cat in CATEGORIES if report.counts.get(cat)]


def slice_by_category(relevance: Mapping, run: Mapping[str, Sequence[str]],
                      cutoffs: Sequence[int] = CUTOFFS) -> list[AxisSlice]:
    """XY, A and All slices; each keeps only queries with a non-empty set of that category."""
    return category_slices(evaluate(run, relevance, cutoffs=cutoffs))


def per_query_values(report: MetricReport, category: str = "All") -> dict[str, dict]:
    return {q: m.citation[category] for q, m in report.per_query.items() if m.citation[category] is not None}


def _slice(axis: str, values: Mapping[str, Mapping[str, float]],
           keys_of: Callable[[str], Iterable[str]], min_group: int, rollup_label: str,
           mode: str, category: str) -> list[AxisSlice]:
    if mode not in ("rollup", "exclude"):
        raise ValueError(f"mode must be 'rollup' or 'exclude', got {mode!r}")
    assign = {q: sorted(set(keys_of(q))) for q in values}
    sizes = Counter(k for ks in assign.values() for k in ks)
    small = {k for k, n in sizes.items() if n < min_group and k != rollup_label}
    groups: dict[str, dict[str, None]] = defaultdict(dict)  # insertion-ordered sets
    for q in sorted(values):
        for k in assign[q]:
            if k in small:
                if mode == "exclude":
                    continue
                k = rollup_label
            groups[k][q] = None
    order = sorted(k for k in groups if k != rollup_label)
    if rollup_label in groups:
        order.append(rollup_label)
    slices = []
    for k in order:
        qs = list(groups[k])
        metric_names = list(values[qs[0]])
        slices.append(AxisSlice(axis, k, len(qs),
                                {m: mean([values[q][m] for q in qs]) for m in metric_names}, category))
    return slices


def primary_section(rec: Mapping) -> str:
    codes = rec.get("ipc") or []
    return parse_ipc(codes[0]).section if codes else "none"


def slice_by_year(queries: Mapping[str, Mapping], values, min_group: int = 1,
                  rollup_label: str = DEFAULT_ROLLUP, mode: str = "rollup", category: str = "All"):
    return _slice("year", values, lambda q: [str(queries[q]["pub_year"])], min_group, rollup_label, mode, category)


def slice_by_jurisdiction(queries: Mapping[str, Mapping], values, min_group: int = DEFAULT_MIN_GROUP,
                          rollup_label: str = DEFAULT_ROLLUP, mode: str = "rollup", category: str = "All"):
    return _slice("jurisdiction", values, lambda q: [str(queries[q]["jurisdiction"])],
                  min_group, rollup_label, mode, category)


def slice_by_section(queries: Mapping[str, Mapping], values, min_group: int = 1,
                     rollup_label: str = DEFAULT_ROLLUP, mode: str = "rollup", category: str = "All",
                     multi_ipc: bool = False):
    """IPC-section slices. By default each query counts once, under its first-listed code.

    With ``multi_ipc`` a query counts in every section among its codes, so
    slices cover rather than partition the queries; the axis is then
    labelled ``ipc_section_multi``.
    """
    if multi_ipc:
        def keys(q):
            codes = queries[q].get("ipc") or []
            return [parse_ipc(c).section for c in codes] or ["none"]
        return _slice("ipc_section_multi", values, keys, min_group, rollup_label, mode, category)
    return _slice("ipc_section", values, lambda q: [primary_section(queries[q])],
                  min_group, rollup_label, mode, category)


def overall_slice(report: MetricReport, category: str = "All") -> AxisSlice:
    return AxisSlice("overall", category, report.counts[category], dict(report.means[category]), category)


# --- table rows ----------------------------------------------------------------------

def split_metric(name: str) -> tuple[str, str]:
    base, _, k = name.partition("@")
    return base, k


def slice_rows(slices: Iterable[AxisSlice], model: str, view: str) -> list[dict]:
    rows = []
    for s in slices:
        for name, value in s.means.items():
            metric, cutoff = split_metric(name)
            key = s.key if s.axis in ("overall", "citation_category") else f"{s.category}:{s.key}"
            rows.append({"model": model, "view": view, "axis": s.axis, "key": key, "metric": metric,
                         "cutoff": cutoff, "value": value, "query_count": s.query_count})
    return rows


def to_csv(rows: Sequence[Mapping], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({f: _csv_value(r.get(f)) for f in fields})
    return buf.getvalue()


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _md_value(v):
    if isinstance(v, float):
        return f"{v:.3f}"
    return "" if v is None else str(v)


def to_markdown(rows: Sequence[Mapping], fields: Sequence[str]) -> str:
    lines = ["| " + " | ".join(fields) + " |", "|" + "|".join("---" for _ in fields) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(_md_value(r.get(f)) for f in fields) + " |")
    return "\n".join(lines) + "\n"


def write_table(rows: Sequence[Mapping], fields: Sequence[str], out_dir: Path, stem: str,
                formats: Sequence[str]) -> list[Path]:
    paths = []
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {fmt!r}; expected some of {FORMATS}")
        p = out_dir / f"{stem}.{fmt}"
        if fmt == "csv":
            text = to_csv(rows, fields)
        elif fmt == "md":
            text = to_markdown(rows, fields)
        else:
            text = json.dumps([{f: r.get(f) for f in fields} for r in rows], indent=2) + "\n"
        p.write_text(text, encoding="utf-8", newline="\n")
        paths.append(p)
    return paths


def emit_tables(slices: Sequence[AxisSlice], out_dir, formats: Sequence[str] = FORMATS,
                model: str = "model", view: str = "tacd") -> list[Path]:
    """Write the slice table plus the plot-data series of one (model, view) run."""
    if not slices:
        raise ValueError("no slices to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_table(slice_rows(slices, model, view), TABLE_FIELDS, out, "slices", formats)

    by_cat = {s.key: s for s in slices if s.axis == "citation_category"}
    cutoffs = sorted({int(split_metric(m)[1]) for s in by_cat.values()
                      for m in s.means if m.startswith("recall@")})
    curve = [{"model": model, "view": view, "cutoff": k,
              **{cat: by_cat[cat].means.get(f"recall@{k}") if cat in by_cat else None for cat in CATEGORIES}}
             for k in cutoffs]
    p = out / "recall_curve.csv"
    p.write_text(to_csv(curve, ("model", "view", "cutoff") + CATEGORIES), encoding="utf-8", newline="\n")
    paths.append(p)

    for axis, stem in (("year", "ndcg_by_year"), ("jurisdiction", "ndcg_by_jurisdiction"),
                       ("ipc_section", "ndcg_by_ipc")):
        series = [{"model": model, "view": view, "key": s.key, "query_count": s.query_count,
                   "ndcg@10": s.means.get("ndcg@10")}
                  for s in slices if s.axis == axis or (axis == "ipc_section" and s.axis == "ipc_section_multi")]
        p = out / f"{stem}.csv"
        p.write_text(to_csv(series, ("model", "view", "key", "query_count", "ndcg@10")),
                     encoding="utf-8", newline="\n")
        paths.append(p)
    return paths


def slices_to_json(slices: Sequence[AxisSlice]) -> list[dict]:
    return [asdict(s) for s in slices]


# --- cross-run report ------------------------------------------------------------------

VIEW_ORDER = [v.value for v in ViewName]
TABLE2_METRICS = ("recall@10", "recall@100", "ndcg@10")


@dataclass
class EvalSummary:
    model: str
    view: str
    means: dict          # category -> metric -> value (includes "InScope")
    counts: dict
    slices: list[AxisSlice]

    @classmethod
    def load(cls, path) -> "EvalSummary":
        p = Path(path)
        if p.is_dir():
            p = p / "metrics.json"
        data = json.loads(p.read_text(encoding="utf-8"))
        slices = [AxisSlice(**s) for s in data.get("slices", [])]
        return cls(data["model"], data["view"], data["means"], data["counts"], slices)


def _view_rank(view: str) -> tuple:
    return (VIEW_ORDER.index(view) if view in VIEW_ORDER else len(VIEW_ORDER), view)


def _models_by_score(results: Sequence[EvalSummary], metric: str = "ndcg@10") -> list[str]:
    scores = defaultdict(list)
    for r in results:
        if "All" in r.means:
            scores[r.model].append(r.means["All"][metric])
    models = sorted({r.model for r in results})
    return sorted(models, key=lambda m: (-mean(scores[m]) if scores[m] else 0.0, m))


def citation_table(results: Sequence[EvalSummary]) -> list[dict]:
    """One row per (view, model) with R@10, R@100 and NDCG@10 for XY, A and All."""
    order = {m: i for i, m in enumerate(_models_by_score(results))}
    rows = []
    for r in sorted(results, key=lambda r: (_view_rank(r.view), order[r.model])):
        row = {"view": r.view, "model": r.model}
        for cat in CATEGORIES:
            for m in TABLE2_METRICS:
                row[f"{cat} {m}"] = r.means.get(cat, {}).get(m)
        rows.append(row)
    return rows


def citation_fields() -> tuple:
    return ("view", "model") + tuple(f"{c} {m}" for c in CATEGORIES for m in TABLE2_METRICS)


def view_table(results: Sequence[EvalSummary], metric: str = "ndcg@10",
               category: str = "All") -> tuple[list[dict], tuple]:
    """Views x models matrix with trailing Average and Max-Min rows.

    Average is the unweighted mean over the views a model was run on;
    Max-Min is the spread of the same column.
    """
    models = _models_by_score(results, metric)
    cell = {(r.view, r.model): r.means.get(category, {}).get(metric) for r in results}
    views = sorted({r.view for r in results}, key=_view_rank)
    rows = [{"view": v, **{m: cell.get((v, m)) for m in models}} for v in views]
    avg = {"view": "Average"}
    spread = {"view": "Max-Min"}
    for m in models:
        col = [cell[(v, m)] for v in views if cell.get((v, m)) is not None]
        avg[m] = mean(col) if col else None
        spread[m] = (max(col) - min(col)) if col else None
    rows.extend([avg, spread])
    return rows, ("view",) + tuple(models)


def inscope_table(results: Sequence[EvalSummary], cutoffs=(10, 100)) -> tuple[list[dict], tuple]:
    order = {m: i for i, m in enumerate(_models_by_score(results))}
    fields = ("view", "model") + tuple(f"{g} @{k}" for g in ("section", "subclass", "subgroup") for k in cutoffs)
    rows = []
    for r in sorted(results, key=lambda r: (_view_rank(r.view), order[r.model])):
        ins = r.means.get("InScope")
        if not ins:
            continue
        row = {"view": r.view, "model": r.model}
        for g in ("section", "subclass", "subgroup"):
            for k in cutoffs:
                row[f"{g} @{k}"] = ins.get(f"inscope_{g}@{k}")
        rows.append(row)
    return rows, fields


def averaged_axis_series(results: Sequence[EvalSummary], axis: str, views: Optional[Sequence[str]] = None,
                         metric: str = "ndcg@10") -> list[dict]:
    """Per model and slice key, the mean over views of the slice metric."""
    acc = defaultdict(list)
    counts = {}
    for r in results:
        if views is not None and r.view not in views:
            continue
        for s in r.slices:
            if s.axis == axis and s.category == "All" and metric in s.means:
                acc[(r.model, s.key)].append(s.means[metric])
                counts[(r.model, s.key)] = s.query_count
    return [{"model": m, "key": k, "query_count": counts[(m, k)], metric: mean(v), "views": len(v)}
            for (m, k), v in sorted(acc.items())]


def recall_curves(results: Sequence[EvalSummary], view: str = "tacd") -> list[dict]:
    rows = []
    for r in sorted(results, key=lambda r: r.model):
        if r.view != view or "All" not in r.means:
            continue
        for k in CUTOFFS:
            v = r.means["All"].get(f"recall@{k}")
            if v is not None:
                rows.append({"model": r.model, "cutoff": k, "recall": v})
    return rows


def write_report(results: Sequence[EvalSummary], out_dir, formats: Sequence[str] = FORMATS) -> list[Path]:
    if not results:
        raise ValueError("no evaluation results given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_table(citation_table(results), citation_fields(), out, "citation_retrieval", formats)
    rows, fields = view_table(results)
    paths += write_table(rows, fields, out, "query_robustness", formats)
    rows, fields = inscope_table(results)
    if rows:
        paths += write_table(rows, fields, out, "inscope", formats)
    year_views = ["tacd"] if any(r.view == "tacd" for r in results) else None
    for axis, stem, views in (("jurisdiction", "ndcg_by_jurisdiction", None),
                              ("ipc_section", "ndcg_by_ipc", None),
                              ("year", "ndcg_by_year", year_views)):
        series = averaged_axis_series(results, axis, views)
        p = out / f"{stem}.csv"
        p.write_text(to_csv(series, ("model", "key", "query_count", "ndcg@10", "views")),
                     encoding="utf-8", newline="\n")
        paths.append(p)
    p = out / "recall_curve.csv"
    p.write_text(to_csv(recall_curves(results), ("model", "cutoff", "recall")), encoding="utf-8", newline="\n")
    paths.append(p)
    return paths
