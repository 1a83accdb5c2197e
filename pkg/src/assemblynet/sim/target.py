"""Deterministic fluid-queue model of the protested server."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction


class TargetState(enum.Enum):
    UP = "up"
    DEGRADED = "degraded"
    DOWN = "down"


@dataclass(frozen=True)
class TickRecord:
    tick: int
    arrivals: int
    served: Fraction
    dropped: Fraction
    queue: Fraction
    state: TargetState


@dataclass
class TargetModel:
    """Serves ``capacity`` requests per tick from a FIFO bounded by ``queue_max``.

    Arrivals and service of one tick are netted as a fluid. The server goes
    down when the queue fills and comes back once it drains below half.
    """

    capacity: Fraction
    queue_max: int
    queue: Fraction = Fraction(0)
    state: TargetState = TargetState.UP

    def step(self, tick: int, arrivals: int) -> TickRecord:
        load = self.queue + arrivals
        served = min(Fraction(self.capacity), load)
        queue = load - served
        dropped = Fraction(0)
        if queue >= self.queue_max:
            dropped = queue - self.queue_max
            queue = Fraction(self.queue_max)
            self.state = TargetState.DOWN
        elif self.state is TargetState.DOWN and queue < Fraction(self.queue_max, 2):
            self.state = TargetState.DEGRADED if queue else TargetState.UP
        elif self.state is not TargetState.DOWN:
            self.state = TargetState.DEGRADED if queue else TargetState.UP
        self.queue = queue
        return TickRecord(tick, arrivals, served, dropped, queue, self.state)
