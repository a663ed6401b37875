"""Instruction-diversity statistics over assembly listings.

Counts mnemonics per compiled kernel variant: the unit is the full
dot-joined instruction name (opcode plus every prefix/type suffix, e.g.
``ld.global.v4.b32``), operands are never inspected. The token rules are
grammar-light on purpose so PTX and AMD GCN/RDNA listings parse alike:

- statements split on ``;`` and line ends; ``//`` and ``/* */`` comments
  are stripped first
- tokens ending in ``:`` are labels, skipped
- a leading ``@`` token is a guard predicate, skipped
- lone ``{`` / ``}`` tokens are skipped
- a statement whose first remaining token starts with ``.`` is a
  directive, skipped entirely
- anything left that does not look like an instruction name goes into an
  `unparsed` tally instead of raising

Pure functions over immutable inputs; parallelize across documents at
will.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ReportError

_BLOCK_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_LINE_COMMENT_RE = re.compile(r"//[^\n]*")
_MNEMONIC_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_.]*$")

ASM_SUFFIXES = (".ptx", ".s", ".asm")


@dataclass(frozen=True)
class AsmDoc:
    source_id: str
    text: str

    @classmethod
    def from_file(cls, path, source_id: str | None = None) -> "AsmDoc":
        path = Path(path)
        data = path.read_bytes()
        return cls(
            source_id=source_id if source_id is not None else path.stem,
            text=data.decode("utf-8", errors="replace"),
        )


@dataclass(frozen=True)
class AsmStats:
    source_id: str
    unique_mnemonics: int
    total_instructions: int
    histogram: dict[str, int]
    unparsed: int = 0

    @classmethod
    def from_histogram(cls, source_id: str, histogram: dict[str, int], unparsed: int = 0) -> "AsmStats":
        return cls(
            source_id=source_id,
            unique_mnemonics=len(histogram),
            total_instructions=sum(histogram.values()),
            histogram=dict(histogram),
            unparsed=unparsed,
        )


def _statements(text: str):
    text = _BLOCK_COMMENT_RE.sub(" ", text)
    text = _LINE_COMMENT_RE.sub("", text)
    for line in text.split("\n"):
        yield from line.split(";")


def _mnemonic_of(statement: str) -> str | None:
    """First instruction token of one statement, or None for blank,
    directive, and label-only statements. Raises ValueError on junk."""
    tokens = statement.split()
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t in ("{", "}") or t.endswith(":") or t.startswith("@"):
            i += 1
            continue
        break
    if i == len(tokens):
        return None
    first = tokens[i]
    if first.startswith("."):
        return None
    if _MNEMONIC_RE.match(first):
        return first
    raise ValueError(first)


def parse_asm(doc: AsmDoc) -> list[str]:
    """Ordered mnemonic list of `doc`; unparseable fragments are dropped."""
    mnemonics, _ = parse_asm_with_diagnostics(doc)
    return mnemonics


def parse_asm_with_diagnostics(doc: AsmDoc) -> tuple[list[str], int]:
    mnemonics: list[str] = []
    unparsed = 0
    for statement in _statements(doc.text):
        try:
            m = _mnemonic_of(statement)
        except ValueError:
            unparsed += 1
            continue
        if m is not None:
            mnemonics.append(m)
    return mnemonics, unparsed


def stats(doc: AsmDoc) -> AsmStats:
    mnemonics, unparsed = parse_asm_with_diagnostics(doc)
    histogram: dict[str, int] = {}
    for m in mnemonics:
        histogram[m] = histogram.get(m, 0) + 1
    return AsmStats.from_histogram(doc.source_id, histogram, unparsed)


# ---------------------------------------------------------------------------
# Diversity report


@dataclass
class DiversityReport:
    rows: list[AsmStats]
    best_id: str | None
    max_unique: int
    max_total: int

    def to_json_dict(self) -> dict:
        return {
            "sources": [
                {"id": s.source_id, "unique": s.unique_mnemonics, "total": s.total_instructions}
                for s in self.rows
            ],
            "best_id": self.best_id,
            "max_unique": self.max_unique,
            "max_total": self.max_total,
        }

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_id", "unique", "total", "best"])
            for s in self.rows:
                w.writerow(
                    [
                        s.source_id,
                        s.unique_mnemonics,
                        s.total_instructions,
                        "true" if s.source_id == self.best_id else "false",
                    ]
                )

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)


def diversity_report(stats_list: list[AsmStats], best_id: str | None = None) -> DiversityReport:
    """Per-source (unique, total) rows in input order plus the summary.

    `best_id` flags the variant the tuner picked; None (or an id that is
    not in the list) leaves the report without a best marker.
    """
    seen: set[str] = set()
    for s in stats_list:
        if s.source_id in seen:
            raise ReportError(f"duplicate source_id {s.source_id!r}")
        seen.add(s.source_id)
    if best_id is not None and best_id not in seen:
        best_id = None
    return DiversityReport(
        rows=list(stats_list),
        best_id=best_id,
        max_unique=max((s.unique_mnemonics for s in stats_list), default=0),
        max_total=max((s.total_instructions for s in stats_list), default=0),
    )


def collect_docs(paths) -> list[AsmDoc]:
    """Files and/or directories -> AsmDocs; directories are searched for
    .ptx/.s/.asm files in sorted order."""
    docs: list[AsmDoc] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            found = sorted(
                child for child in p.rglob("*") if child.suffix.lower() in ASM_SUFFIXES
            )
            for child in found:
                docs.append(AsmDoc.from_file(child))
        elif p.is_file():
            docs.append(AsmDoc.from_file(p))
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return docs
