"""The twelve query representations and their extraction rules.

Structured views come from the document sections by regular expressions.
The five ``ai_*`` views are never generated here; they are looked up in a
caller-supplied mapping (normally read from an AI-views file).
"""

from __future__ import annotations

import enum
import re
from pathlib import Path
from typing import Mapping, Optional

from .corpus import SECTION_ORDER, PatentDocument, SectionName, _iter_jsonl
from .errors import DataFormatError, MissingSectionError


class ViewName(str, enum.Enum):
    AB = "ab"
    CLMS = "clms"
    DESC = "DESC"
    ICLM = "iclm"
    OBJ = "obj"
    ADB = "adb"
    TACD = "tacd"
    AI_CLM_SUM = "ai_clm_sum"
    AI_OBJ = "ai_obj"
    AI_ADV = "ai_adv"
    AI_AB = "ai_ab"
    AI_FEAT = "ai_feat"

    @property
    def is_generated(self) -> bool:
        return self.value.startswith("ai_")


STRUCTURED_VIEWS = tuple(v for v in ViewName if not v.is_generated)
AI_VIEWS = tuple(v for v in ViewName if v.is_generated)

AiViewTable = Mapping[str, Mapping[str, str]]

_DEPENDENT_RE = re.compile(
    r"according\s+to\s+(?:any\s+(?:one\s+)?of\s+)?(?:the\s+)?claims?\s*\d"
    r"|\bof\s+(?:any\s+(?:one\s+)?of\s+)?(?:the\s+)?claims?\s+\d"
    r"|as\s+claimed\s+in"
    r"|\b(?:in|by)\s+(?:any\s+(?:one\s+)?of\s+)?claims?\s+\d",
    re.IGNORECASE,
)

_OBJ_ANCHOR_RE = re.compile(
    r"\b(?:object|objective|aim)s?\s+of\s+the\s+(?:present\s+)?invention",
    re.IGNORECASE,
)
_ADB_ANCHOR_RE = re.compile(r"\b(?:dis)?advantage|\bdrawback", re.IGNORECASE)
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_PARAGRAPH_SPLIT_RE = re.compile(r"\s*\n\s*")


def split_claims(claims: str) -> list[str]:
    """Split a claims section into individual numbered claims.

    Claim starts are found sequentially (``1.``, then ``2.``, ...) so that a
    reference such as ``of claim 1.`` cannot be mistaken for a new claim;
    a claim can only cite earlier numbers, never the next one.
    Unnumbered text is returned as a single claim.
    """
    starts = []
    pos = 0
    n = 1
    while True:
        pat = re.compile(rf"(?:^|(?<=\s))(?<!claim )(?<!claims ){n}\s*[.)]\s", re.IGNORECASE)
        m = pat.search(claims, pos)
        if not m:
            break
        starts.append(m.start())
        pos = m.end()
        n += 1
    if not starts:
        return [claims.strip()] if claims.strip() else []
    bounds = starts + [len(claims)]
    return [claims[a:b].strip() for a, b in zip(bounds, bounds[1:]) if claims[a:b].strip()]


def is_dependent_claim(claim: str) -> bool:
    return _DEPENDENT_RE.search(claim) is not None


def independent_claims(claims: str) -> Optional[str]:
    kept = [c for c in split_claims(claims) if not is_dependent_claim(c)]
    return " ".join(kept) if kept else None


def _paragraphs(text: str) -> list[str]:
    return [p for p in _PARAGRAPH_SPLIT_RE.split(text.strip()) if p]


def object_of_invention(description: str) -> Optional[str]:
    """Anchored paragraph plus the one following it."""
    paras = _paragraphs(description)
    for i, p in enumerate(paras):
        if _OBJ_ANCHOR_RE.search(p):
            return "\n".join(paras[i:i + 2])
    return None


def advantages(description: str) -> Optional[str]:
    sentences = [s for p in _paragraphs(description) for s in _SENTENCE_SPLIT_RE.split(p)]
    hits = [s for s in sentences if _ADB_ANCHOR_RE.search(s)]
    return " ".join(hits) if hits else None


def tacd(doc: PatentDocument) -> str:
    parts = []
    for name in SECTION_ORDER:
        text = doc.text(name)
        if text is None:
            raise MissingSectionError(f"document {doc.doc_id!r} has no {name.value}; tacd needs all four sections")
        parts.append(text)
    return "\n".join(parts)


def extract_view(doc: PatentDocument, view: ViewName | str,
                 ai_views: Optional[AiViewTable] = None) -> Optional[str]:
    """Text of ``view`` for ``doc``, or None when the view is absent."""
    view = ViewName(view)
    if view is ViewName.TACD:
        return tacd(doc)
    if view.is_generated:
        if ai_views is None:
            return None
        return ai_views.get(doc.doc_id, {}).get(view.value) or None
    if view is ViewName.AB:
        return doc.text(SectionName.ABSTRACT)
    if view is ViewName.CLMS:
        return doc.text(SectionName.CLAIMS)
    if view is ViewName.DESC:
        return doc.text(SectionName.DESCRIPTION)
    if view is ViewName.ICLM:
        claims = doc.text(SectionName.CLAIMS)
        return independent_claims(claims) if claims else None
    desc = doc.text(SectionName.DESCRIPTION)
    if desc is None:
        return None
    if view is ViewName.OBJ:
        return object_of_invention(desc)
    return advantages(desc)


def extract_all_views(doc: PatentDocument, ai_views: Optional[AiViewTable] = None) -> dict[ViewName, Optional[str]]:
    return {v: extract_view(doc, v, ai_views) for v in ViewName}


def load_ai_views(path) -> dict[str, dict[str, str]]:
    """Read an AI-views file: one JSON object per line with ``doc_id`` and any ``ai_*`` keys."""
    table: dict[str, dict[str, str]] = {}
    allowed = {v.value for v in AI_VIEWS}
    for lineno, rec in _iter_jsonl(Path(path)):
        if "doc_id" not in rec:
            raise DataFormatError(f"{path}:{lineno}: missing doc_id")
        unknown = set(rec) - allowed - {"doc_id"}
        if unknown:
            raise DataFormatError(f"{path}:{lineno}: unknown view keys {sorted(unknown)}")
        table[str(rec["doc_id"])] = {k: v for k, v in rec.items() if k != "doc_id" and v}
    return table
