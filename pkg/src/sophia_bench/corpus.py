"""Document and citation data model, plus the line-delimited JSON file formats."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Optional

from .errors import DataFormatError
from .ipc import IpcCode, parse_ipc


class SectionName(str, enum.Enum):
    TITLE = "title"
    ABSTRACT = "abstract"
    CLAIMS = "claims"
    DESCRIPTION = "description"


SECTION_ORDER = (SectionName.TITLE, SectionName.ABSTRACT, SectionName.CLAIMS, SectionName.DESCRIPTION)

CORPUS_FIELDS = ("doc_id", "family_id", "pub_year", "jurisdiction", "ipc",
                 "title", "abstract", "claims", "description")


class CitationCategory(str, enum.Enum):
    X = "X"
    Y = "Y"
    A = "A"


@dataclass(frozen=True, eq=True)
class PatentDocument:
    doc_id: str
    family_id: str
    pub_year: int
    jurisdiction: str
    ipc_codes: tuple[IpcCode, ...] = ()
    sections: Mapping[SectionName, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_id:
            raise DataFormatError("doc_id must be non-empty")
        clean = {SectionName(k): v for k, v in self.sections.items() if v}
        if not clean:
            raise DataFormatError(f"document {self.doc_id!r} has no non-empty text section")
        object.__setattr__(self, "sections", MappingProxyType(clean))
        object.__setattr__(self, "ipc_codes", tuple(self.ipc_codes))

    def __hash__(self):
        return hash(self.doc_id)

    def text(self, name: SectionName) -> Optional[str]:
        return self.sections.get(name)

    @property
    def primary_ipc(self) -> Optional[IpcCode]:
        return self.ipc_codes[0] if self.ipc_codes else None

    def to_record(self) -> dict:
        rec = {
            "doc_id": self.doc_id,
            "family_id": self.family_id,
            "pub_year": self.pub_year,
            "jurisdiction": self.jurisdiction,
            "ipc": [c.render() for c in self.ipc_codes],
        }
        for name in SECTION_ORDER:
            rec[name.value] = self.sections.get(name)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "PatentDocument":
        missing = [f for f in CORPUS_FIELDS if f not in rec]
        if missing:
            raise DataFormatError(f"corpus record {rec.get('doc_id')!r} lacks fields {missing}")
        year = rec["pub_year"]
        if isinstance(year, bool) or not isinstance(year, int):
            raise DataFormatError(f"pub_year of {rec['doc_id']!r} is not an integer: {year!r}")
        return cls(
            doc_id=str(rec["doc_id"]),
            family_id=str(rec["family_id"]),
            pub_year=year,
            jurisdiction=str(rec["jurisdiction"]),
            ipc_codes=tuple(parse_ipc(c) for c in rec["ipc"] or ()),
            sections={s: rec[s.value] for s in SECTION_ORDER if rec.get(s.value)},
        )


@dataclass(frozen=True)
class CitationEdge:
    src: str
    dst: str
    category: CitationCategory

    def __post_init__(self):
        if self.src == self.dst:
            raise DataFormatError(f"self-citation {self.src!r} is not a valid edge")
        try:
            object.__setattr__(self, "category", CitationCategory(self.category))
        except ValueError:
            raise DataFormatError(f"citation category must be X, Y or A, got {self.category!r}") from None

    @property
    def is_xy(self) -> bool:
        return self.category in (CitationCategory.X, CitationCategory.Y)


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def dump_jsonl_line(rec: Mapping) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(", ", ": ")) + "\n"


def load_corpus(path) -> list[PatentDocument]:
    docs = []
    seen = set()
    for lineno, rec in _iter_jsonl(Path(path)):
        try:
            doc = PatentDocument.from_record(rec)
        except DataFormatError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if doc.doc_id in seen:
            raise DataFormatError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return docs


def save_corpus(docs: Iterable[PatentDocument], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(dump_jsonl_line(doc.to_record()))


def load_citations(path) -> list[CitationEdge]:
    edges = []
    for lineno, rec in _iter_jsonl(Path(path)):
        try:
            edges.append(CitationEdge(str(rec["src"]), str(rec["dst"]), rec["category"]))
        except KeyError as exc:
            raise DataFormatError(f"{path}:{lineno}: missing field {exc}") from None
        except DataFormatError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return edges


def save_citations(edges: Iterable[CitationEdge], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in edges:
            fh.write(dump_jsonl_line({"src": e.src, "dst": e.dst, "category": e.category.value}))
