"""Forensic replay of a run and the end-to-end invariant checks.

:func:`replay_audit` rebuilds the metrics from the event log alone and
compares them with what the engine reported, so the two are computed along
independent paths.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from assemblynet.sim.config import ScenarioConfig
from assemblynet.sim.engine import INVALID_CREDENTIAL, Trace
from assemblynet.sim.events import Event
from assemblynet.sim.metrics import Metrics
from assemblynet.sim.target import TargetState, TickRecord
from assemblynet.visibility import first_broken_index


class AuditMismatch(Exception):
    def __init__(self, message: str, event_index: int | None = None):
        where = f"event {event_index}: " if event_index is not None else ""
        super().__init__(where + message)
        self.event_index = event_index


@dataclass(frozen=True)
class AuditReport:
    events_checked: int
    board_entries: int
    admissions: int


def _frac(text: str) -> Fraction:
    return Fraction(text)


def derive_metrics(events: Sequence[Event]) -> Metrics:
    """Recompute :class:`Metrics` from an event log."""
    m = Metrics()
    mirrored: set[tuple[str, str]] = set()
    delivered = 0
    seen = 0
    for ev in events:
        kind = ev.kind
        if kind == "admit":
            m.offered += 1
            m.admitted[ev["pseudonym"]] = m.admitted.get(ev["pseudonym"], 0) + 1
            if m.commenced_at is None:
                m.commenced_at = ev.tick
        elif kind == "reject":
            m.offered += 1
            m.rejects[ev["reason"]] = m.rejects.get(ev["reason"], 0) + 1
        elif kind == "mirror":
            mirrored.add((ev["pseudonym"], ev["seq"]))
        elif kind == "deliver":
            delivered += 1
            if (ev["pseudonym"], ev["seq"]) in mirrored:
                seen += 1
        elif kind == "target":
            state = TargetState(ev["state"])
            m.timeline.append(
                TickRecord(ev.tick, int(ev["arrivals"]), _frac(ev["served"]), _frac(ev["dropped"]), _frac(ev["queue"]), state)
            )
            if state is TargetState.DOWN:
                m.down_ticks += 1
                if m.first_down_at is None:
                    m.first_down_at = ev.tick + 1
        elif kind == "announce":
            m.window_ends = int(ev["window_ends"])
        elif kind == "gossip" and ev["item"] == "manifest":
            m.gossip_rounds = None if ev["rounds"] == "none" else int(ev["rounds"])
        elif kind == "reveal":
            m.revocations.append((ev["pseudonym"], ev.tick, ev["identity"]))
        elif kind == "end":
            m.duration = int(ev["duration"])
    m.delivered = delivered
    m.visibility_fraction = Fraction(seen, delivered) if delivered else Fraction(1)
    if m.duration:
        m.availability = Fraction(m.duration - m.down_ticks, m.duration)
    return m


def _check_gating(events: Sequence[Event]) -> None:
    window_ends = None
    start = end = None
    forbidden = False
    for i, ev in enumerate(events):
        if ev.kind == "announce":
            window_ends = int(ev["window_ends"])
        elif ev.kind == "status":
            start, end, forbidden = int(ev["start"]), int(ev["end"]), ev["forbidden"] == "1"
        elif ev.kind == "admit":
            if window_ends is None or start is None:
                raise AuditMismatch("admission without an announced assembly", i)
            if ev.tick < window_ends:
                raise AuditMismatch(f"admission at {ev.tick} before window ends at {window_ends}", i)
            if forbidden or not start <= ev.tick < end:
                raise AuditMismatch(f"admission at {ev.tick} outside the assembly [{start}, {end})", i)


def replay_audit(trace: Trace, config: ScenarioConfig | None = None) -> AuditReport:
    """Re-derive everything checkable from ``trace.events``.

    Raises :class:`AuditMismatch` naming the first offending event, or the
    first metric that disagrees with the reported one.
    """
    events = trace.events
    _check_gating(events)

    entries = trace.board.entries
    broken = first_broken_index(entries, trace.board.primitives)
    if broken is not None:
        raise AuditMismatch(f"board chain broken at entry {broken}")
    mirrors = [(i, ev) for i, ev in enumerate(events) if ev.kind == "mirror"]
    if len(mirrors) != len(entries):
        raise AuditMismatch(f"{len(mirrors)} mirror events for {len(entries)} board entries")
    mirrored: set[tuple[str, str]] = set()
    for (i, ev), entry in zip(mirrors, entries):
        if int(ev["index"]) != entry.index or ev["entry"] != entry.entry_digest.hex():
            raise AuditMismatch("mirror event does not match the board", i)
        mirrored.add((ev["pseudonym"], ev["seq"]))
    for i, ev in enumerate(events):
        if ev.kind == "deliver" and (ev["pseudonym"], ev["seq"]) not in mirrored:
            raise AuditMismatch("message delivered without a board entry", i)

    derived = derive_metrics(events)
    field_name = derived.diff(trace.metrics)
    if field_name is not None:
        raise AuditMismatch(
            f"metric {field_name!r} differs: log says {getattr(derived, field_name)!r}, "
            f"run reported {getattr(trace.metrics, field_name)!r}"
        )
    return AuditReport(len(events), len(entries), derived.total_admitted)


def window_violations(ticks: Iterable[int], burst: int, rate: Fraction) -> list[tuple[int, int]]:
    """Windows of admissions exceeding ``burst + rate * T``, as (first, last) positions.

    For sorted ticks the tightest window ending at position ``j`` starts at
    the ``i`` maximising ``rate * t_i - i``, so one pass with a running
    maximum covers every window.
    """
    ticks = sorted(ticks)
    rate = Fraction(rate)
    out = []
    best = None
    best_i = 0
    for j, tj in enumerate(ticks):
        score = rate * tj - j
        if best is None or score > best:
            best, best_i = score, j
        if (j + 1) - rate * tj + best > burst:
            out.append((best_i, j))
    return out


def check_invariants(trace: Trace) -> list[str]:
    """Every end-to-end property a run must satisfy, as violation messages."""
    cfg = trace.config
    events = trace.events
    problems: list[str] = []

    admits: dict[str, list[int]] = defaultdict(list)
    enrolled: set[str] = set()
    shares: dict[str, int] = defaultdict(int)
    revealed: set[str] = set()
    opened: set[str] = set()
    for ev in events:
        if ev.kind == "enroll":
            enrolled.add(ev["pseudonym"])
        elif ev.kind == "admit":
            admits[ev["pseudonym"]].append(ev.tick)
            if Fraction(ev["ratio"]) > cfg.amplification_threshold:
                problems.append(f"admitted amplifying request at {ev.tick}")
        elif ev.kind == "share":
            shares[ev["pseudonym"]] = max(shares[ev["pseudonym"]], int(ev["count"]))
        elif ev.kind == "reveal":
            if shares[ev["pseudonym"]] < cfg.revocation_k:
                problems.append(f"identity revealed with only {shares[ev['pseudonym']]} shares")
            revealed.add(ev["pseudonym"])
        elif ev.kind == "case_open":
            opened.add(ev["pseudonym"])

    for pseud, ticks in admits.items():
        if pseud not in enrolled:
            problems.append(f"unenrolled pseudonym {pseud[:16]} admitted")
        bad = window_violations(ticks, cfg.burst, cfg.rate)
        if bad:
            problems.append(f"pseudonym {pseud[:16]} exceeded its rate bound {len(bad)} times")
    for pseud in opened:
        if shares[pseud] >= cfg.revocation_k and pseud not in revealed:
            problems.append(f"case {pseud[:16]} reached threshold without reveal")

    m = trace.metrics
    if m.total_admitted + m.total_rejected != m.offered:
        problems.append("admitted + rejected != offered")
    if m.rejects.get(INVALID_CREDENTIAL, 0) and any(p not in enrolled for p in admits):
        problems.append("forged credential admitted")
    if trace.compliant and m.visibility_fraction != 1:
        problems.append(f"visibility fraction {m.visibility_fraction} in a compliant run")
    try:
        replay_audit(trace, cfg)
    except AuditMismatch as exc:
        problems.append(f"audit: {exc}")
    return problems
