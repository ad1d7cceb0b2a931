"""International Patent Classification codes and hierarchical truncation.

Canonical rendering is the hyphenated, zero-padded style ``G06Q-010/026``:
the main group is left-padded to three digits, the subgroup keeps its
significant digits (at least two). Subgroup digits behave like a decimal
fraction, so ``10/26`` and ``10/026`` are different codes and trailing zeros
beyond the second digit are dropped (``10/2600`` is ``10/26``).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import InsufficientGranularityError, IpcParseError

SECTIONS = "ABCDEFGH"


class Granularity(enum.IntEnum):
    SECTION = 1
    SUBCLASS = 2
    SUBGROUP = 3

    @classmethod
    def parse(cls, name: str) -> "Granularity":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown granularity {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


def _canonical_main_group(digits: str) -> str:
    return str(int(digits)).zfill(3)


def _canonical_subgroup(digits: str) -> str:
    stripped = digits.rstrip("0")
    return stripped if len(stripped) >= 2 else stripped.ljust(2, "0")


@dataclass(frozen=True, order=True)
class IpcCode:
    section: str
    cls: Optional[str] = None
    subclass: Optional[str] = None
    main_group: Optional[str] = None
    subgroup: Optional[str] = None

    def __post_init__(self):
        if self.section not in SECTIONS or len(self.section) != 1:
            raise IpcParseError(str(self.section), "section", "expected one letter A-H")
        levels = (self.cls, self.subclass, self.main_group, self.subgroup)
        seen_absent = False
        for value in levels:
            if value is None:
                seen_absent = True
            elif seen_absent:
                raise IpcParseError(self.render_partial(), "hierarchy", "finer level set without coarser one")
        if self.cls is not None and not (len(self.cls) == 2 and self.cls.isdigit()):
            raise IpcParseError(self.cls, "class", "expected two digits")
        if self.subclass is not None and not (len(self.subclass) == 1 and "A" <= self.subclass <= "Z"):
            raise IpcParseError(self.subclass, "subclass", "expected one letter")
        if self.main_group is not None and not (
            self.main_group.isdigit() and self.main_group == _canonical_main_group(self.main_group)
        ):
            raise IpcParseError(self.main_group, "main group", "expected canonical 3-digit form")
        if self.subgroup is not None and not (
            self.subgroup.isdigit() and self.subgroup == _canonical_subgroup(self.subgroup)
        ):
            raise IpcParseError(self.subgroup, "subgroup", "expected canonical digits")

    def render_partial(self) -> str:
        return "".join(p or "" for p in (self.section, self.cls, self.subclass, self.main_group, self.subgroup))

    @property
    def granularity(self) -> Granularity:
        """Finest granularity this code fully specifies."""
        if self.subgroup is not None:
            return Granularity.SUBGROUP
        if self.subclass is not None:
            return Granularity.SUBCLASS
        return Granularity.SECTION

    def render(self) -> str:
        out = self.section
        if self.cls is not None:
            out += self.cls
        if self.subclass is not None:
            out += self.subclass
        if self.main_group is not None:
            out += "-" + self.main_group
        if self.subgroup is not None:
            out += "/" + self.subgroup
        return out

    def __str__(self) -> str:
        return self.render()


_GROUP_RE = re.compile(r"^[\s\-]*(\d{1,4})(?:\s*/\s*(\d{1,6}))?\s*$")
# EPO fixed-width form, e.g. G06Q0010026000
_FIXED_RE = re.compile(r"^([A-H])(\d{2})([A-Z])(\d{4})(\d{6})$")


def parse_ipc(raw: str) -> IpcCode:
    """Parse an IPC code string such as ``G06Q-010/026``, ``G06Q 10/26`` or ``G06K``.

    Raises IpcParseError naming the offending component.
    """
    if raw is None or not raw.strip():
        raise IpcParseError(str(raw), "input", "empty string")
    text = raw.strip().upper()

    fixed = _FIXED_RE.match(text)
    if fixed:
        sec, cls, sub, mg, sg = fixed.groups()
        return IpcCode(sec, cls, sub, _canonical_main_group(mg), _canonical_subgroup(sg))

    sec = text[0]
    if sec not in SECTIONS:
        raise IpcParseError(raw, "section", f"{sec!r} is not one of A-H")
    rest = text[1:]
    if not rest:
        return IpcCode(sec)

    cls = rest[:2]
    if len(cls) < 2 or not cls.isdigit():
        raise IpcParseError(raw, "class", f"{cls!r} is not two digits")
    rest = rest[2:]
    if not rest.strip():
        return IpcCode(sec, cls)

    sub = rest[0]
    if not ("A" <= sub <= "Z"):
        raise IpcParseError(raw, "subclass", f"{sub!r} is not a letter")
    rest = rest[1:]
    if not rest.strip():
        return IpcCode(sec, cls, sub)

    m = _GROUP_RE.match(rest)
    if not m:
        raise IpcParseError(raw, "group", f"{rest.strip()!r} is not of the form NNN/NN")
    mg, sg = m.groups()
    return IpcCode(
        sec,
        cls,
        sub,
        _canonical_main_group(mg),
        _canonical_subgroup(sg) if sg is not None else None,
    )


def truncate_ipc(code: IpcCode | str, g: Granularity) -> str:
    """Render ``code`` at granularity ``g``.

    >>> truncate_ipc("G06Q-010/026", Granularity.SUBCLASS)
    'G06Q'
    """
    if isinstance(code, str):
        code = parse_ipc(code)
    if code.granularity < g:
        raise InsufficientGranularityError(
            f"IPC code {code.render()!r} is coarser than {g.label} granularity"
        )
    if g is Granularity.SECTION:
        return code.section
    if g is Granularity.SUBCLASS:
        return f"{code.section}{code.cls}{code.subclass}"
    return code.render()


def truncate_all(codes: Iterable[IpcCode], g: Granularity) -> frozenset[str]:
    """Truncated label set. Codes coarser than ``g`` contribute nothing."""
    return frozenset(truncate_ipc(c, g) for c in codes if c.granularity >= g)
