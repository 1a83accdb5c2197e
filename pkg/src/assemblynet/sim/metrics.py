from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction

from assemblynet.sim.target import TickRecord


@dataclass
class Metrics:
    duration: int = 0
    availability: Fraction = Fraction(1)
    down_ticks: int = 0
    first_down_at: int | None = None
    window_ends: int | None = None
    commenced_at: int | None = None
    visibility_fraction: Fraction = Fraction(1)
    offered: int = 0
    delivered: int = 0
    admitted: dict[str, int] = field(default_factory=dict)
    rejects: dict[str, int] = field(default_factory=dict)
    revocations: list[tuple[str, int, str]] = field(default_factory=list)
    gossip_rounds: int | None = None
    timeline: list[TickRecord] = field(default_factory=list)

    @property
    def total_admitted(self) -> int:
        return sum(self.admitted.values())

    @property
    def total_rejected(self) -> int:
        return sum(self.rejects.values())

    def diff(self, other: "Metrics") -> str | None:
        """Name of the first field that differs, or None."""
        for f in fields(self):
            if getattr(self, f.name) != getattr(other, f.name):
                return f.name
        return None


def timeline_csv(metrics: Metrics) -> str:
    rows = ["tick,arrivals,served,dropped,queue,state"]
    for r in metrics.timeline:
        rows.append(f"{r.tick},{r.arrivals},{_num(r.served)},{_num(r.dropped)},{_num(r.queue)},{r.state.value}")
    return "\n".join(rows) + "\n"


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{float(x):.6f}"
