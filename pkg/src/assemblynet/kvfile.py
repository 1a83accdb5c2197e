"""Line-oriented ``key = value`` files with ``[section]`` headers.

Shared by manifest and scenario files. Blank lines and lines starting with
``#`` are ignored; values run to end of line with surrounding whitespace
stripped. Keys before the first header belong to the ``""`` section.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_SECTION = re.compile(r"^\[([A-Za-z0-9_.\-]+)\]$")
_KEY = re.compile(r"^[A-Za-z0-9_.\-]+$")


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass
class Entry:
    value: str
    line: int
    column: int


@dataclass
class Document:
    sections: dict[str, dict[str, Entry]] = field(default_factory=dict)
    section_lines: dict[str, int] = field(default_factory=dict)
    last_line: int = 0

    def section(self, name: str) -> dict[str, Entry]:
        return self.sections.get(name, {})


def parse(text: str) -> Document:
    doc = Document(sections={"": {}}, section_lines={"": 0})
    current = ""
    lines = text.split("\n")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = len(line) - len(line.lstrip())
        if stripped.startswith("["):
            m = _SECTION.match(stripped)
            if not m:
                raise ParseError("malformed section header", lineno, indent + 1)
            current = m.group(1)
            if current in doc.sections:
                raise ParseError(f"duplicate section [{current}]", lineno, indent + 1)
            doc.sections[current] = {}
            doc.section_lines[current] = lineno
            continue
        eq = line.find("=")
        if eq < 0:
            raise ParseError("expected 'key = value'", lineno, len(line) + 1)
        key = line[:eq].strip()
        if not _KEY.match(key):
            raise ParseError(f"invalid key {key!r}", lineno, indent + 1)
        if key in doc.sections[current]:
            raise ParseError(f"duplicate key {key!r}", lineno, indent + 1)
        value = line[eq + 1 :].strip()
        value_col = eq + 2 + (len(line[eq + 1 :]) - len(line[eq + 1 :].lstrip()))
        doc.sections[current][key] = Entry(value, lineno, value_col)
    doc.last_line = max(len(lines), 1)
    return doc


def render(sections: list[tuple[str, list[tuple[str, str]]]]) -> str:
    out = []
    for name, items in sections:
        if name:
            if out:
                out.append("")
            out.append(f"[{name}]")
        for key, value in items:
            if "\n" in value or "\r" in value:
                raise ValueError(f"value for {key!r} spans lines")
            out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
