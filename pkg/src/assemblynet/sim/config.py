"""Scenario configuration and the scenario file reader."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from assemblynet import kvfile
from assemblynet.assembly import DEFAULT_INJUNCTION_WINDOW, Allow, Decision, Delay, Forbid
from assemblynet.throttle import DEFAULT_AMPLIFICATION_THRESHOLD

ADVERSARY_KINDS = ("sybil", "botnet", "amplifier", "disruptor")
_NAME = re.compile(r"^[A-Za-z0-9_\-]+$")


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class AdversarySpec:
    name: str
    kind: str
    count: int = 1
    requests_per_tick: int = 10
    ratio: Fraction = Fraction(17, 2)
    shares_submitted: int | None = None
    start_offset: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    participants: int = 0
    duration: int | None = None
    queue_max: int = 1000
    # manifest parameters
    capacity: Fraction = Fraction(50)
    rate: Fraction = Fraction(1)
    burst: int = 5
    critical_mass_min: int = 10
    revocation_k: int = 3
    revocation_n: int = 5
    opinion: str = "Restore the public library budget"
    start_time: int | None = None
    protest_length: int = 60
    injunction_window: int = DEFAULT_INJUNCTION_WINDOW
    general_interest: bool = False
    board_mirroring: bool = True
    supervisor_channel: str = "police-observer"
    attested: bool = True
    # environment
    topology: str = "complete"
    edge_prob: float = 0.2
    fanout: int = 1
    announce_time: int = 0
    target_reachable: bool = True
    announce_retries: int = 3
    retry_interval: int = 60
    injunctions: tuple[tuple[int, Decision], ...] = ()
    adversaries: tuple[AdversarySpec, ...] = ()
    abuse_threshold: int = 3
    revocation_initiator: str = "participants"
    r_human_max: Fraction = Fraction(1)
    amplification_threshold: Fraction = DEFAULT_AMPLIFICATION_THRESHOLD
    response_ratio: Fraction = Fraction(1)
    payload_size: int = 512
    base_dir: Path | None = field(default=None, compare=False)


def validate(cfg: ScenarioConfig) -> None:
    problems = []
    if cfg.participants < 0:
        problems.append("participants must be >= 0")
    if cfg.duration is not None and cfg.duration <= 0:
        problems.append("duration must be positive")
    if cfg.queue_max < 1:
        problems.append("queue_max must be >= 1")
    if cfg.capacity <= 0 or cfg.rate <= 0 or cfg.burst < 1:
        problems.append("capacity and rate must be positive, burst >= 1")
    if cfg.protest_length < 1:
        problems.append("protest_length must be >= 1")
    if not 1 <= cfg.revocation_k <= cfg.revocation_n:
        problems.append(f"revocation threshold needs 1 <= k <= n (k={cfg.revocation_k}, n={cfg.revocation_n})")
    credentialed = cfg.participants + sum(1 for a in cfg.adversaries if a.kind != "sybil")
    # share holders are other participants, never the credential holder
    if credentialed and cfg.revocation_n > max(cfg.participants - 1, 0):
        problems.append(f"revocation_n={cfg.revocation_n} needs at least n+1 participants to hold shares")
    if cfg.fanout < 1:
        problems.append("fanout must be >= 1")
    if not 0.0 <= cfg.edge_prob <= 1.0:
        problems.append("edge_prob must be in [0, 1]")
    if cfg.announce_retries < 0 or cfg.retry_interval < 1:
        problems.append("announce_retries >= 0 and retry_interval >= 1 required")
    if cfg.abuse_threshold < 1:
        problems.append("abuse_threshold must be >= 1")
    if cfg.revocation_initiator not in ("participants", "supervisor"):
        problems.append("revocation_initiator must be participants or supervisor")
    if cfg.payload_size < 1 or cfg.response_ratio <= 0:
        problems.append("payload_size and response_ratio must be positive")
    names = set()
    for adv in cfg.adversaries:
        if adv.kind not in ADVERSARY_KINDS:
            problems.append(f"adversary {adv.name}: unknown kind {adv.kind!r}")
        if not _NAME.match(adv.name) or adv.name in names:
            problems.append(f"adversary name {adv.name!r} invalid or repeated")
        names.add(adv.name)
        if adv.count < 1 or adv.requests_per_tick < 1 or adv.ratio <= 0:
            problems.append(f"adversary {adv.name}: count, requests_per_tick and ratio must be positive")
        if adv.shares_submitted is not None and not 0 <= adv.shares_submitted <= cfg.revocation_n:
            problems.append(f"adversary {adv.name}: shares_submitted must be in [0, n]")
    if problems:
        raise InvalidScenario("; ".join(problems))


# -- file format --------------------------------------------------------------

_TOP = {
    "seed": int,
    "participants": int,
    "duration": int,
    "queue_max": int,
    "topology": str,
    "edge_prob": float,
    "fanout": int,
    "announce_time": int,
    "target_reachable": bool,
    "announce_retries": int,
    "retry_interval": int,
    "abuse_threshold": int,
    "revocation_initiator": str,
    "r_human_max": Fraction,
    "amplification_threshold": Fraction,
    "response_ratio": Fraction,
    "payload_size": int,
}
_MANIFEST = {
    "capacity": Fraction,
    "rate": Fraction,
    "burst": int,
    "critical_mass_min": int,
    "revocation_k": int,
    "revocation_n": int,
    "opinion": str,
    "start_time": int,
    "protest_length": int,
    "injunction_window": int,
    "general_interest": bool,
    "board_mirroring": bool,
    "supervisor_channel": str,
    "attested": bool,
}
_ADVERSARY = {
    "kind": str,
    "count": int,
    "requests_per_tick": int,
    "ratio": Fraction,
    "shares_submitted": int,
    "start_offset": int,
}


def _convert(kind: type, entry: kvfile.Entry, key: str):
    v = entry.value
    try:
        if kind is bool:
            if v.lower() in ("true", "yes", "1"):
                return True
            if v.lower() in ("false", "no", "0"):
                return False
            raise ValueError(v)
        if kind is Fraction:
            return Fraction(v)
        return kind(v)
    except (ValueError, ZeroDivisionError):
        raise kvfile.ParseError(f"{key}: cannot read {v!r} as {kind.__name__}", entry.line, entry.column) from None


def _read(entries: dict[str, kvfile.Entry], schema: dict[str, type]) -> dict:
    out = {}
    for key, entry in entries.items():
        if key not in schema:
            raise kvfile.ParseError(f"unknown key {key!r}", entry.line, entry.column)
        out[key] = _convert(schema[key], entry, key)
    return out


def _decision(entry: kvfile.Entry) -> Decision:
    parts = entry.value.split()
    if parts == ["forbid"]:
        return Forbid()
    if parts == ["allow"]:
        return Allow()
    if len(parts) == 2 and parts[0] == "delay" and parts[1].isdigit():
        return Delay(int(parts[1]))
    raise kvfile.ParseError(f"bad decision {entry.value!r}", entry.line, entry.column)


def parse_scenario(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    """Parse a scenario file; raises :class:`kvfile.ParseError` or :class:`InvalidScenario`."""
    doc = kvfile.parse(text)
    values = _read(doc.section(""), _TOP)
    values.update(_read(doc.section("manifest"), _MANIFEST))
    injunctions = []
    for key, entry in doc.section("injunctions").items():
        if not key.isdigit():
            raise kvfile.ParseError(f"injunction time {key!r} is not a tick", entry.line, 1)
        injunctions.append((int(key), _decision(entry)))
    adversaries = []
    for name, line in doc.section_lines.items():
        if name in ("", "manifest", "injunctions"):
            continue
        if not name.startswith("adversary."):
            raise kvfile.ParseError(f"unknown section [{name}]", line, 1)
        fields = _read(doc.section(name), _ADVERSARY)
        if "kind" not in fields:
            raise kvfile.ParseError(f"[{name}] needs a kind", line, 1)
        adversaries.append(AdversarySpec(name=name.removeprefix("adversary."), **fields))
    cfg = ScenarioConfig(
        **values,
        injunctions=tuple(sorted(injunctions, key=lambda d: d[0])),
        adversaries=tuple(adversaries),
        base_dir=base_dir,
    )
    validate(cfg)
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)
