"""Event log records: ``tick,kind,key=value,...`` one per line."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


class EventLogError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"event log line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    fields: dict[str, str] = field(default_factory=dict)

    def format(self) -> str:
        parts = [str(self.tick), self.kind]
        parts.extend(f"{k}={v}" for k, v in self.fields.items())
        return ",".join(parts)

    def __getitem__(self, key: str) -> str:
        return self.fields[key]


def fmt_num(x: int | Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def format_log(events: list[Event]) -> str:
    return "".join(e.format() + "\n" for e in events)


def parse_log(text: str) -> list[Event]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    events = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split(",")
        if len(parts) < 2:
            raise EventLogError("expected tick,kind", lineno)
        try:
            tick = int(parts[0])
        except ValueError:
            raise EventLogError(f"bad tick {parts[0]!r}", lineno) from None
        fields = {}
        for part in parts[2:]:
            key, sep, value = part.partition("=")
            if not sep:
                raise EventLogError(f"field without '=': {part!r}", lineno)
            fields[key] = value
        events.append(Event(tick, parts[1], fields))
    return events
