"""Labeled propositions and the sectioned proposition file format.

A proposition file looks like::

    # Facts/beliefs
    - p1: When Alice asks Bob to clean something, he does it, but complains.
    - p2: ...

    # Hypotheses
    - p5: ...

Each ``#`` header opens a section; its text is kept verbatim (it is echoed
back into the prompt) and mapped to an epistemic category by
:func:`category_for_header`. A proposition line may wrap onto following
indented or unprefixed lines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import PropositionError

CATEGORIES = ("fact", "belief", "hypothesis", "detail")

DEFAULT_HEADERS = {
    "fact": "Facts",
    "belief": "Beliefs",
    "hypothesis": "Hypotheses",
    "detail": "Details",
}

_LABEL = re.compile(r"^[A-Za-z]+\d+$")
_ITEM = re.compile(r"^-\s*([A-Za-z]+\d+)\s*:\s*(.*)$")


@dataclass(frozen=True)
class Proposition:
    id: str
    text: str
    category: str = "fact"
    section: str | None = None

    def __post_init__(self):
        if not _LABEL.match(self.id):
            raise PropositionError(f"proposition id {self.id!r} must be letters followed by digits")
        if not self.text.strip():
            raise PropositionError(f"proposition {self.id} has empty text")
        if self.category not in CATEGORIES:
            raise PropositionError(f"unknown category {self.category!r} for {self.id}")

    @property
    def header(self) -> str:
        return self.section or DEFAULT_HEADERS[self.category]


def category_for_header(header: str) -> str:
    """Map a section header onto a category.

    Rules, first match wins (case-insensitive):

    ========================  ============
    header contains           category
    ========================  ============
    ``hypothes``              hypothesis
    ``detail``                detail
    ``fact``                  fact
    ``belief``                belief
    anything else             fact
    ========================  ============

    So "Facts/beliefs" and "Background facts & operator observations" are
    facts, and observation headers such as "Linux: rows 1, 8" default to
    facts as well.
    """
    h = header.lower()
    if "hypothes" in h:
        return "hypothesis"
    if "detail" in h:
        return "detail"
    if "fact" in h:
        return "fact"
    if "belief" in h:
        return "belief"
    return "fact"


def check_unique(propositions: Iterable[Proposition]) -> list[Proposition]:
    props = list(propositions)
    seen = set()
    for p in props:
        if p.id in seen:
            raise PropositionError(f"duplicate proposition id {p.id!r}")
        seen.add(p.id)
    return props


@dataclass(frozen=True)
class PropositionFile:
    sections: tuple[tuple[str, tuple[Proposition, ...]], ...]

    @property
    def propositions(self) -> list[Proposition]:
        return [p for _, props in self.sections for p in props]

    @property
    def labels(self) -> list[str]:
        return [p.id for p in self.propositions]

    def by_category(self, category: str) -> list[str]:
        return [p.id for p in self.propositions if p.category == category]

    @classmethod
    def from_propositions(cls, propositions: Iterable[Proposition]) -> "PropositionFile":
        sections: list[tuple[str, list[Proposition]]] = []
        for p in check_unique(propositions):
            if sections and sections[-1][0] == p.header:
                sections[-1][1].append(p)
            else:
                sections.append((p.header, [p]))
        return cls(tuple((h, tuple(ps)) for h, ps in sections))


def parse_propositions(text: str) -> PropositionFile:
    sections: list[tuple[str, list[Proposition]]] = []
    pending: list[str] | None = None  # id, text parts of the item being read

    def flush():
        nonlocal pending
        if pending is not None:
            header = sections[-1][0]
            pid, body = pending[0], " ".join(pending[1:]).strip()
            sections[-1][1].append(
                Proposition(pid, body, category_for_header(header), section=header)
            )
            pending = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith("#"):
            flush()
            header = line.lstrip("#").strip()
            if not header:
                raise PropositionError(f"line {lineno}: empty section header")
            sections.append((header, []))
            continue
        m = _ITEM.match(line)
        if m:
            flush()
            if not sections:
                raise PropositionError(f"line {lineno}: proposition before any '#' header")
            pending = [m.group(1), m.group(2)]
        elif pending is not None:
            pending.append(line)
        else:
            raise PropositionError(f"line {lineno}: expected '# header' or '- pN: text', got {line!r}")
    flush()
    result = PropositionFile(tuple((h, tuple(ps)) for h, ps in sections))
    check_unique(result.propositions)
    if not result.propositions:
        raise PropositionError("no propositions found")
    return result


def format_propositions(propositions: PropositionFile | Iterable[Proposition]) -> str:
    """Render in the sectioned layout; inverse of :func:`parse_propositions`."""
    if not isinstance(propositions, PropositionFile):
        propositions = PropositionFile.from_propositions(propositions)
    blocks = []
    for header, props in propositions.sections:
        lines = [f"# {header}"] + [f"- {p.id}: {p.text}" for p in props]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_propositions(path: str | Path) -> PropositionFile:
    return parse_propositions(Path(path).read_text(encoding="utf-8"))
