"""Command-line entry point: build, embed, search, eval, report, train-toy, verify.

Every subcommand writes a manifest beside its outputs holding the effective
configuration, the seeds, and SHA-256 digests of every input and output.
``verify`` recomputes those digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import DataFormatError, SophiaError, VerificationError

log = logging.getLogger("sophia_bench")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND, EXIT_INTERNAL = 0, 2, 3, 4, 5
MANIFEST_NAME = "manifest.json"
# flags that never change outputs and so stay out of the manifest's config
_NOT_CONFIG = {"command", "config", "threads", "verbose", "handler"}


class UsageError(Exception):
    pass


# --- manifest ----------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _rel(path: Path, base: Path) -> str:
    try:
        return path.resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return str(path.resolve())


class RunManifest:
    """Config snapshot, digests and seeds of one subcommand invocation."""

    def __init__(self, command: str, config: dict, seeds: Optional[dict] = None):
        self.command = command
        self.config = config
        self.seeds = seeds or {}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.started = _now()
        self.finished: Optional[str] = None

    def record(self, base: Path, inputs: Sequence[Path], outputs: Sequence[Path]) -> None:
        self.inputs = {_rel(Path(p), base): sha256_file(p) for p in inputs}
        self.outputs = {_rel(Path(p), base): sha256_file(p) for p in outputs}
        self.finished = _now()

    def to_dict(self) -> dict:
        return {
            "tool": "sophia-bench",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "started": self.started,
            "finished": self.finished,
        }

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8", newline="\n")
        return path


def manifest_path_for(out: Path, is_dir: bool) -> Path:
    return out / MANIFEST_NAME if is_dir else out.with_name(out.name + ".manifest.json")


def _finish(args, command: str, out: Path, is_dir: bool, inputs, outputs, seeds=None) -> Path:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in _NOT_CONFIG}
    m = RunManifest(command, config, seeds)
    path = manifest_path_for(out, is_dir)
    m.record(path.parent, [Path(p) for p in inputs if p], outputs)
    m.write(path)
    log.info("wrote %s", path)
    return path


def verify_manifest(path) -> list[str]:
    """Names of files whose current digest differs from the manifest (or that vanished)."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read manifest {p}: {exc}") from None
    bad = []
    for section in ("inputs", "outputs"):
        for name, digest in data.get(section, {}).items():
            f = Path(name) if Path(name).is_absolute() else p.parent / name
            if not f.is_file():
                bad.append(f"{name} (missing)")
            elif sha256_file(f) != digest:
                bad.append(f"{name} (digest changed)")
    return bad


# --- subcommands --------------------------------------------------------------------

def _years(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        years = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if years[0] > years[1]:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return years


def _formats(text: str) -> tuple[str, ...]:
    from .report import FORMATS
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fmts if f not in FORMATS]
    if bad or not fmts:
        raise argparse.ArgumentTypeError(f"formats must be some of {','.join(FORMATS)}")
    return fmts


def cmd_build(args) -> int:
    from .builder import BuildConfig, build_benchmark, write_benchmark
    from .corpus import load_citations, load_corpus
    from .views import load_ai_views

    docs = load_corpus(args.corpus)
    edges = load_citations(args.citations)
    ai = load_ai_views(args.ai_views) if args.ai_views else None
    cfg = BuildConfig(args.per_year, args.years, args.distractors, args.seed)
    bench = build_benchmark(docs, edges, cfg)
    outputs = write_benchmark(bench, args.out, ai)
    for w in bench.report["warnings"]:
        log.warning("%s", w)
    log.info("%d queries, %d corpus documents", len(bench.queries), len(bench.corpus))
    _finish(args, "build", Path(args.out), True, [args.corpus, args.citations, args.ai_views], outputs,
            {"seed": args.seed})
    return EXIT_OK


def _embed_inputs(path: Path, view: str):
    """(ids, texts) of a corpus or query file under ``view``; queries lacking the view are skipped."""
    from .corpus import PatentDocument, _iter_jsonl
    from .views import ViewName, extract_view

    ViewName(view)
    ids, texts, skipped = [], [], 0
    for lineno, rec in _iter_jsonl(path):
        if "query_id" in rec:
            text = rec.get(view)
            key = str(rec["query_id"])
        elif "doc_id" in rec:
            key = str(rec["doc_id"])
            text = extract_view(PatentDocument.from_record(rec), view)
        else:
            raise DataFormatError(f"{path}:{lineno}: record has neither query_id nor doc_id")
        if not text:
            skipped += 1
            continue
        ids.append(key)
        texts.append(text)
    if skipped:
        log.warning("%d records have no %s text and were not embedded", skipped, view)
    if not ids:
        raise DataFormatError(f"{path}: no record has {view} text")
    return ids, texts


def cmd_embed(args) -> int:
    from .contrastive import load_head
    from .embedding import EmbedderSpec, embed_matrix
    from .matrix import save_matrix

    spec = EmbedderSpec(args.backend, args.dim, args.max_tokens, args.endpoint, args.path, args.prefix,
                        args.timeout, args.max_batch, args.max_in_flight, args.retries)
    ids, texts = _embed_inputs(Path(args.input), args.view)
    m = embed_matrix(spec, ids, texts)
    if args.head:
        m = load_head(args.head).apply(m)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(m, out)
    log.info("embedded %d texts into %s", len(m), out)
    _finish(args, "embed", out, False, [args.input, args.path, args.head], [out])
    return EXIT_OK


def cmd_search(args) -> int:
    from .matrix import load_matrix
    from .retrieval import emit_run, search

    q = load_matrix(args.queries)
    c = load_matrix(args.corpus)
    rankings = search(q, c, args.depth, args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_run(rankings, out)
    _finish(args, "search", out, False, [args.queries, args.corpus], [out])
    return EXIT_OK


def cmd_eval(args) -> int:
    from .builder import load_qrels, load_queries
    from .corpus import load_corpus
    from .ipc import parse_ipc
    from .metrics import evaluate
    from .report import (category_slices, emit_tables, overall_slice, per_query_values, slice_by_jurisdiction,
                         slice_by_section, slice_by_year, slices_to_json)
    from .retrieval import load_run

    relevance = load_qrels(args.qrels)
    queries = {str(r["query_id"]): r for r in load_queries(args.queries)}
    missing = sorted(set(relevance) - set(queries))
    if missing:
        raise DataFormatError(f"qrels judge query {missing[0]!r} absent from {args.queries}")
    if args.view:
        # a query without text for this view was never embedded, so it is not scored
        relevance = {q: rs for q, rs in relevance.items() if queries[q].get(args.view)}
    runs = load_run(args.run)
    run_ids = {q: r.doc_ids for q, r in runs.items()}

    query_ipc = corpus_ipc = None
    inputs = [args.run, args.qrels, args.queries]
    if args.corpus:
        query_ipc = {q: [parse_ipc(c) for c in rec.get("ipc") or []] for q, rec in queries.items()}
        corpus_ipc = {d.doc_id: list(d.ipc_codes) for d in load_corpus(args.corpus)}
        inputs.append(args.corpus)
    report = evaluate(run_ids, relevance, query_ipc, corpus_ipc)
    for f in report.flags:
        log.warning("%s", f)

    values = per_query_values(report, "All")
    slices = [overall_slice(report)] + category_slices(report)
    slices += slice_by_year(queries, values, mode=args.mode)
    slices += slice_by_jurisdiction(queries, values, min_group=args.min_group, mode=args.mode)
    slices += slice_by_section(queries, values, mode=args.mode, multi_ipc=args.multi_ipc)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_query = out / "per_query.jsonl"
    with open(per_query, "w", encoding="utf-8", newline="\n") as fh:
        for q in sorted(report.per_query):
            fh.write(json.dumps(report.per_query[q].to_record(), sort_keys=True) + "\n")
    metrics = out / "metrics.json"
    summary = {"model": args.model, "view": args.view or "tacd", "means": report.means,
               "counts": report.counts, "flags": report.flags, "slices": slices_to_json(slices)}
    metrics.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    tables = emit_tables(slices, out, args.formats, args.model, args.view or "tacd")
    if "All" in report.means:
        log.info("NDCG@10 %.4f over %d queries", report.means["All"]["ndcg@10"], report.counts["All"])
    _finish(args, "eval", out, True, inputs, [per_query, metrics, *tables])
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import EvalSummary, write_report

    results = [EvalSummary.load(p) for p in args.inputs]
    outputs = write_report(results, args.out, args.formats)
    inputs = [Path(p) / "metrics.json" if Path(p).is_dir() else Path(p) for p in args.inputs]
    _finish(args, "report", Path(args.out), True, inputs, outputs)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from .builder import load_qrels, load_queries
    from .contrastive import EarlyStopping, ToyConfig, save_head, train_toy
    from .corpus import load_citations, load_corpus
    from .views import load_ai_views

    bench = Path(args.bench)
    docs = load_corpus(args.corpus)
    edges = load_citations(args.citations)
    ai = load_ai_views(args.ai_views) if args.ai_views else None
    relevance = load_qrels(bench / "qrels.tsv")
    query_texts = {str(r["query_id"]): r["tacd"] for r in load_queries(bench / "queries.jsonl")
                   if r.get("tacd") and str(r["query_id"]) in relevance}
    relevance = {q: relevance[q] for q in query_texts}
    bench_corpus = load_corpus(bench / "corpus.jsonl")
    cfg = ToyConfig(p=args.p, batch_size=args.batch, tau=args.tau, learning_rate=args.lr, seed=args.seed,
                    dim=args.dim, max_tokens=args.max_tokens, symmetric=args.symmetric,
                    stop=EarlyStopping(args.eval_interval, args.patience))
    result = train_toy(docs, edges, query_texts, relevance, bench_corpus, cfg, ai)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_head(result.head, out)
    trace = out.with_name(out.name + ".trace.json")
    trace.write_text(json.dumps({
        "trace": [{"step": s, "ndcg@10": v} for s, v in result.trace],
        "losses": result.losses,
        "best_step": result.best_step,
        "stopped_early": result.stopped_early,
    }, indent=2) + "\n", encoding="utf-8", newline="\n")
    log.info("NDCG@10 %.4f -> %.4f (best at step %d)", result.initial, result.best, result.best_step)
    inputs = [args.corpus, args.citations, args.ai_views, bench / "qrels.tsv", bench / "queries.jsonl",
              bench / "corpus.jsonl"]
    _finish(args, "train-toy", out, False, inputs, [out, trace], {"seed": args.seed})
    return EXIT_OK


def cmd_verify(args) -> int:
    bad = verify_manifest(args.manifest)
    if bad:
        raise VerificationError("verification failed: " + "; ".join(bad))
    print(f"ok: {args.manifest}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sophia-bench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value file; command-line flags win")
    common.add_argument("--threads", type=int, default=None, help="worker cap (default: $SOPHIA_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("build", parents=[common], help="sample queries and assemble a benchmark")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--citations", type=Path, required=True)
    p.add_argument("--per-year", type=int, required=True)
    p.add_argument("--years", type=_years, required=True, help="A..B inclusive")
    p.add_argument("--distractors", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ai-views", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser("embed", parents=[common], help="embed a corpus or query file under one view")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--view", default="tacd")
    p.add_argument("--backend", choices=("test", "file", "http"), default="test")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--endpoint")
    p.add_argument("--path", help="precomputed SEMB matrix for the file backend")
    p.add_argument("--prefix", default="")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-batch", type=int, default=32)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--head", type=Path, help="apply a trained projection head")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("search", parents=[common], help="exact top-k retrieval into a run file")
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser("eval", parents=[common], help="score a run against qrels")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--corpus", type=Path, help="benchmark corpus.jsonl; enables InScope")
    p.add_argument("--model", default="model")
    p.add_argument("--view", help="query view of the run; queries without it are not scored")
    p.add_argument("--min-group", type=int, default=100)
    p.add_argument("--mode", choices=("rollup", "exclude"), default="rollup")
    p.add_argument("--multi-ipc", action="store_true")
    p.add_argument("--formats", type=_formats, default=("csv", "md", "json"))
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="cross-run tables from eval outputs")
    p.add_argument("--inputs", nargs="+", required=True, help="eval output dirs or metrics.json files")
    p.add_argument("--formats", type=_formats, default=("csv", "md", "json"))
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("train-toy", parents=[common], help="contrastive projection head on a synthetic graph")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--citations", type=Path, required=True)
    p.add_argument("--bench", type=Path, required=True)
    p.add_argument("--ai-views", type=Path)
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--eval-interval", type=int, default=5)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_train_toy)

    p = sub.add_parser("verify", parents=[common], help="re-check the digests of a prior run")
    p.add_argument("manifest", type=Path, help="manifest file or output directory")
    p.set_defaults(handler=cmd_verify)
    return parser


def read_config(path) -> dict[str, str]:
    """Parse a key=value file. Blank lines and lines starting with '#' are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _peek(parser: argparse.ArgumentParser, argv: list[str]) -> tuple[Optional[str], Optional[str]]:
    """Subcommand name and --config value, found before the full parse."""
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.partition("=")[2]
    return command, config


def apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Fold a --config file into the parse: optional keys become defaults and
    required keys are appended as flags unless given on the command line."""
    command, config = _peek(parser, argv)
    if command is None or config is None:
        return argv
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    extra = []
    for key, raw in read_config(config).items():
        action = actions.get(key)
        if action is None or key in ("config", "help") or not action.option_strings:
            raise UsageError(f"{config}: unknown key {key!r} for {command}")
        flag = action.option_strings[-1]
        if action.nargs == 0:  # store_true
            sub.set_defaults(**{key: raw.lower() in ("1", "true", "yes", "on")})
        elif action.required:
            if not any(a in action.option_strings or a.startswith(flag + "=") for a in argv):
                extra += [flag, *(raw.split() if action.nargs == "+" else [raw])]
        elif action.nargs == "+":
            sub.set_defaults(**{key: raw.split()})
        else:
            sub.set_defaults(**{key: action.type(raw) if action.type else raw})
    return argv + extra


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(apply_config(parser, argv))
    except (UsageError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"sophia-bench: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"sophia-bench: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SophiaError as exc:
        print(f"sophia-bench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"sophia-bench: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"sophia-bench: invalid value: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        log.debug("internal error", exc_info=True)
        print(f"sophia-bench: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
