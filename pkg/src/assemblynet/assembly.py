"""Assembly lifecycle: manifest, compliance checking, announcement, injunctions.

The compliance checker covers nine requirement nodes. Six are mechanical
(``pass``/``fail``); no coercion, proportionality and subsidiarity are
judicial balancing questions, so the checker only records whether the
organisers attested to them (``attested``/``fail``) and never reports a
``pass`` there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Protocol

from assemblynet import kvfile
from assemblynet.identity import ASSEMBLY_ID_SIZE
from assemblynet.primitives import DEFAULT, DIGEST_SIZE, Primitives
from assemblynet.visibility import Board, ProtestMessage, append

DEFAULT_INJUNCTION_WINDOW = 4 * 24 * 3600
DEFAULT_R_HUMAN_MAX = Fraction(1)
DEFAULT_BURST = 5
MAX_OPINION_BYTES = 4096
SIZE_CLASSES = ("small", "medium", "large")


class AssemblyError(Exception):
    pass


class MalformedManifest(AssemblyError):
    pass


class NotCompliant(AssemblyError):
    pass


class DeliveryFailed(AssemblyError):
    pass


class WindowClosed(AssemblyError):
    pass


@dataclass(frozen=True)
class TargetDescriptor:
    address: str
    capacity: Fraction
    is_general_interest: bool = False
    size_class: str = "medium"


@dataclass(frozen=True)
class Attestation:
    text: str
    author: str = ""
    timestamp: int = 0


@dataclass(frozen=True)
class AttestationSet:
    subsidiarity: Attestation
    proportionality: Attestation
    no_coercion: Attestation
    no_coercion_declared: bool = False


@dataclass(frozen=True)
class AssemblyManifest:
    assembly_id: bytes
    target: TargetDescriptor
    opinion_statement: str
    start_time: int
    end_time: int
    rate: Fraction
    critical_mass_min: int
    revocation_k: int
    revocation_n: int
    organizer_pseudonyms: tuple[bytes, ...]
    attestations: AttestationSet
    burst: int = DEFAULT_BURST
    board_mirroring: bool = True
    supervisor_channel: str = ""
    injunction_window: int = DEFAULT_INJUNCTION_WINDOW
    expected_participants: int | None = None


def validate_manifest(m: AssemblyManifest) -> None:
    """Raise :class:`MalformedManifest` on structural defects.

    Requirement failures (empty opinion, small critical mass, ...) are not
    structural; they show up in :func:`check_manifest`.
    """
    problems = []
    if len(m.assembly_id) != ASSEMBLY_ID_SIZE:
        problems.append("assembly_id must be 16 bytes")
    if m.start_time >= m.end_time:
        problems.append("start_time must precede end_time")
    if m.rate <= 0:
        problems.append("rate must be positive")
    if m.burst < 1:
        problems.append("burst must be at least 1")
    if m.target.capacity <= 0:
        problems.append("target capacity must be positive")
    if m.target.size_class not in SIZE_CLASSES:
        problems.append(f"size_class must be one of {SIZE_CLASSES}")
    if len(m.opinion_statement.encode("utf-8")) > MAX_OPINION_BYTES:
        problems.append("opinion statement exceeds 4096 bytes")
    if not 1 <= m.revocation_k <= m.revocation_n:
        problems.append("revocation threshold needs 1 <= k <= n")
    if m.expected_participants is not None and m.revocation_n > m.expected_participants:
        problems.append("revocation n exceeds expected participants")
    if m.injunction_window < 0:
        problems.append("injunction window must be non-negative")
    if any(len(p) != DIGEST_SIZE for p in m.organizer_pseudonyms):
        problems.append("organizer pseudonyms must be 32 bytes")
    if problems:
        raise MalformedManifest("; ".join(problems))


def opinion_digest(m: AssemblyManifest, primitives: Primitives = DEFAULT) -> bytes:
    return primitives.digest(m.opinion_statement.encode("utf-8"))


# -- compliance ---------------------------------------------------------------


class Verdict(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    ATTESTED = "attested"


REQUIREMENTS = (
    "visibility",
    "expression of opinion",
    "collectivity",
    "no coercion",
    "proportionality",
    "subsidiarity",
    "supervision",
    "central organisation",
    "announcement",
)
ATTESTATION_NODES = frozenset({"no coercion", "proportionality", "subsidiarity"})


@dataclass(frozen=True)
class ComplianceReport:
    verdicts: dict[str, Verdict]
    reasons: dict[str, str] = field(default_factory=dict)

    @property
    def compliant(self) -> bool:
        return all(v is not Verdict.FAIL for v in self.verdicts.values())

    def failed(self) -> list[str]:
        return [n for n in REQUIREMENTS if self.verdicts[n] is Verdict.FAIL]


def check_manifest(
    m: AssemblyManifest, r_human_max: Fraction = DEFAULT_R_HUMAN_MAX
) -> ComplianceReport:
    validate_manifest(m)
    verdicts: dict[str, Verdict] = {}
    reasons: dict[str, str] = {}

    def mech(node: str, ok: bool, why: str) -> None:
        verdicts[node] = Verdict.PASS if ok else Verdict.FAIL
        if not ok:
            reasons[node] = why

    def attest(node: str, ok: bool, why: str) -> None:
        verdicts[node] = Verdict.ATTESTED if ok else Verdict.FAIL
        if not ok:
            reasons[node] = why

    has_opinion = bool(m.opinion_statement.strip())
    mech(
        "visibility",
        m.board_mirroring and has_opinion,
        "board mirroring disabled" if not m.board_mirroring else "nothing to make visible",
    )
    mech("expression of opinion", has_opinion, "opinion statement is empty")
    if m.critical_mass_min < 2:
        mech("collectivity", False, "critical mass below 2 participants")
    else:
        mech(
            "collectivity",
            m.rate <= r_human_max,
            f"rate {m.rate} exceeds human maximum {r_human_max}",
        )

    a = m.attestations
    attest(
        "no coercion",
        a.no_coercion_declared and bool(a.no_coercion.text.strip()),
        "no declaration of non-coercion",
    )
    if m.target.is_general_interest:
        attest("proportionality", False, "target is a general-interest (critical) system")
    elif m.target.capacity < m.burst + m.rate:
        attest("proportionality", False, "a single participant could saturate the target")
    else:
        attest("proportionality", bool(a.proportionality.text.strip()), "no proportionality attestation")
    attest("subsidiarity", bool(a.subsidiarity.text.strip()), "no subsidiarity attestation")

    mech("supervision", bool(m.supervisor_channel.strip()), "no supervisor channel declared")
    mech("central organisation", bool(m.organizer_pseudonyms), "no organizer pseudonyms")
    mech("announcement", bool(m.target.address.strip()), "no target address for delivery")
    return ComplianceReport({n: verdicts[n] for n in REQUIREMENTS}, reasons)


# -- manifest file format -----------------------------------------------------

_TOP_KEYS = (
    "assembly_id",
    "opinion",
    "target.address",
    "target.capacity",
    "target.general_interest",
    "target.size_class",
    "start_time",
    "end_time",
    "rate",
    "burst",
    "critical_mass_min",
    "revocation_k",
    "revocation_n",
    "expected_participants",
    "organizers",
    "board_mirroring",
    "supervisor_channel",
    "injunction_window",
)
_OPTIONAL_TOP = {
    "target.general_interest": "false",
    "target.size_class": "medium",
    "burst": str(DEFAULT_BURST),
    "expected_participants": "",
    "board_mirroring": "true",
    "supervisor_channel": "",
    "injunction_window": str(DEFAULT_INJUNCTION_WINDOW),
}
_ATTESTATION_KEYS = (
    "subsidiarity",
    "subsidiarity.author",
    "subsidiarity.time",
    "proportionality",
    "proportionality.author",
    "proportionality.time",
    "no_coercion",
    "no_coercion.statement",
    "no_coercion.author",
    "no_coercion.time",
)
_REQUIRED_ATTESTATION = ("subsidiarity", "proportionality", "no_coercion")


def _fmt_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _fmt_bool(b: bool) -> str:
    return "true" if b else "false"


def manifest_sections(m: AssemblyManifest) -> list[tuple[str, list[tuple[str, str]]]]:
    a = m.attestations
    top = [
        ("assembly_id", m.assembly_id.hex()),
        ("opinion", m.opinion_statement),
        ("target.address", m.target.address),
        ("target.capacity", _fmt_rational(Fraction(m.target.capacity))),
        ("target.general_interest", _fmt_bool(m.target.is_general_interest)),
        ("target.size_class", m.target.size_class),
        ("start_time", str(m.start_time)),
        ("end_time", str(m.end_time)),
        ("rate", _fmt_rational(Fraction(m.rate))),
        ("burst", str(m.burst)),
        ("critical_mass_min", str(m.critical_mass_min)),
        ("revocation_k", str(m.revocation_k)),
        ("revocation_n", str(m.revocation_n)),
        ("expected_participants", "" if m.expected_participants is None else str(m.expected_participants)),
        ("organizers", ",".join(p.hex() for p in m.organizer_pseudonyms)),
        ("board_mirroring", _fmt_bool(m.board_mirroring)),
        ("supervisor_channel", m.supervisor_channel),
        ("injunction_window", str(m.injunction_window)),
    ]
    att = [
        ("subsidiarity", a.subsidiarity.text),
        ("subsidiarity.author", a.subsidiarity.author),
        ("subsidiarity.time", str(a.subsidiarity.timestamp)),
        ("proportionality", a.proportionality.text),
        ("proportionality.author", a.proportionality.author),
        ("proportionality.time", str(a.proportionality.timestamp)),
        ("no_coercion", _fmt_bool(a.no_coercion_declared)),
        ("no_coercion.statement", a.no_coercion.text),
        ("no_coercion.author", a.no_coercion.author),
        ("no_coercion.time", str(a.no_coercion.timestamp)),
    ]
    return [("", top), ("attestations", att)]


def serialize_manifest(m: AssemblyManifest) -> str:
    return kvfile.render(manifest_sections(m))


def manifest_digest(m: AssemblyManifest, primitives: Primitives = DEFAULT) -> bytes:
    return primitives.digest(serialize_manifest(m).encode("utf-8"))


class _Fields:
    """Typed accessors over one parsed section, with line/column diagnostics."""

    def __init__(self, entries: dict[str, kvfile.Entry], defaults: dict[str, str], eof_line: int):
        self.entries = entries
        self.defaults = defaults
        self.eof_line = eof_line

    def raw(self, key: str) -> tuple[str, int, int]:
        if key in self.entries:
            e = self.entries[key]
            return e.value, e.line, e.column
        if key in self.defaults:
            return self.defaults[key], 0, 0
        raise kvfile.ParseError(f"missing required key {key!r}", self.eof_line, 1)

    def text(self, key: str) -> str:
        return self.raw(key)[0]

    def integer(self, key: str) -> int:
        value, line, col = self.raw(key)
        try:
            return int(value)
        except ValueError:
            raise kvfile.ParseError(f"{key}: expected integer, got {value!r}", line, col) from None

    def rational(self, key: str) -> Fraction:
        value, line, col = self.raw(key)
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise kvfile.ParseError(f"{key}: expected number, got {value!r}", line, col) from None

    def boolean(self, key: str) -> bool:
        value, line, col = self.raw(key)
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise kvfile.ParseError(f"{key}: expected true/false, got {value!r}", line, col)

    def hexbytes(self, key: str, size: int | None = None) -> bytes:
        value, line, col = self.raw(key)
        try:
            out = bytes.fromhex(value)
        except ValueError:
            raise kvfile.ParseError(f"{key}: expected hex, got {value!r}", line, col) from None
        if size is not None and len(out) != size:
            raise kvfile.ParseError(f"{key}: expected {size} bytes, got {len(out)}", line, col)
        return out

    def unknown(self, allowed: tuple[str, ...]) -> None:
        for key, e in self.entries.items():
            if key not in allowed:
                raise kvfile.ParseError(f"unknown key {key!r}", e.line, e.column)


def manifest_from_document(
    doc: kvfile.Document,
    top: dict[str, kvfile.Entry] | None = None,
    defaults: dict[str, str] | None = None,
) -> AssemblyManifest:
    """Build a manifest from parsed sections.

    ``top`` overrides which section holds the top-level keys (scenario files
    keep them under ``[manifest]``); ``defaults`` fills keys a scenario may
    leave out.
    """
    for name, line in doc.section_lines.items():
        if name not in ("", "attestations") and top is None:
            raise kvfile.ParseError(f"unknown section [{name}]", line, 1)
    f = _Fields(doc.section("") if top is None else top, {**_OPTIONAL_TOP, **(defaults or {})}, doc.last_line)
    f.unknown(_TOP_KEYS)
    if "attestations" not in doc.sections:
        raise kvfile.ParseError("missing [attestations] section", doc.last_line, 1)
    att = _Fields(doc.section("attestations"), {}, doc.last_line)
    att.unknown(_ATTESTATION_KEYS)
    for key in _REQUIRED_ATTESTATION:
        att.raw(key)

    def attestation(prefix: str, text_key: str) -> Attestation:
        author = att.text(f"{prefix}.author") if f"{prefix}.author" in att.entries else ""
        ts = att.integer(f"{prefix}.time") if f"{prefix}.time" in att.entries else 0
        text = att.text(text_key) if text_key in att.entries else ""
        return Attestation(text, author, ts)

    organizers_raw, line, col = f.raw("organizers")
    organizers = []
    for part in filter(None, (p.strip() for p in organizers_raw.split(","))):
        try:
            pseud = bytes.fromhex(part)
        except ValueError:
            raise kvfile.ParseError(f"organizers: bad hex {part!r}", line, col) from None
        if len(pseud) != DIGEST_SIZE:
            raise kvfile.ParseError("organizers: pseudonyms must be 32 bytes", line, col)
        organizers.append(pseud)

    expected = f.text("expected_participants")
    return AssemblyManifest(
        assembly_id=f.hexbytes("assembly_id", ASSEMBLY_ID_SIZE),
        target=TargetDescriptor(
            address=f.text("target.address"),
            capacity=f.rational("target.capacity"),
            is_general_interest=f.boolean("target.general_interest"),
            size_class=f.text("target.size_class"),
        ),
        opinion_statement=f.text("opinion"),
        start_time=f.integer("start_time"),
        end_time=f.integer("end_time"),
        rate=f.rational("rate"),
        burst=f.integer("burst"),
        critical_mass_min=f.integer("critical_mass_min"),
        revocation_k=f.integer("revocation_k"),
        revocation_n=f.integer("revocation_n"),
        expected_participants=f.integer("expected_participants") if expected else None,
        organizer_pseudonyms=tuple(organizers),
        board_mirroring=f.boolean("board_mirroring"),
        supervisor_channel=f.text("supervisor_channel"),
        injunction_window=f.integer("injunction_window"),
        attestations=AttestationSet(
            subsidiarity=attestation("subsidiarity", "subsidiarity"),
            proportionality=attestation("proportionality", "proportionality"),
            no_coercion=attestation("no_coercion", "no_coercion.statement"),
            no_coercion_declared=att.boolean("no_coercion"),
        ),
    )


def parse_manifest(text: str) -> AssemblyManifest:
    """Parse a manifest file; raises :class:`kvfile.ParseError` or MalformedManifest."""
    m = manifest_from_document(kvfile.parse(text))
    validate_manifest(m)
    return m


# -- announcement and injunctions ---------------------------------------------


class Endpoint(Protocol):
    address: str

    def deliver(self, manifest_digest: bytes, now: int) -> bytes | None:
        """Return a delivery acknowledgement, or None if unreachable."""


@dataclass
class SimulatedTarget:
    """Announcement endpoint that acknowledges with a MAC under its own key."""

    address: str
    key: bytes
    reachable: bool = True
    primitives: Primitives = field(default=DEFAULT, repr=False)

    def deliver(self, manifest_digest: bytes, now: int) -> bytes | None:
        if not self.reachable:
            return None
        return self.primitives.mac(self.key, manifest_digest, now.to_bytes(8, "big"))


@dataclass(frozen=True)
class AnnouncementReceipt:
    manifest_digest: bytes
    delivered_at: int
    target_ack: bytes
    window_ends: int
    proof: str = "ack"
    attempts: tuple[int, ...] = ()


def announce(
    manifest: AssemblyManifest,
    target: Endpoint,
    now: int,
    *,
    board: Board | None = None,
    retries: int = 3,
    retry_interval: int = 60,
    r_human_max: Fraction = DEFAULT_R_HUMAN_MAX,
    primitives: Primitives = DEFAULT,
) -> AnnouncementReceipt:
    """Deliver the manifest to its target and open the injunction window.

    Delivery is tried once plus ``retries`` more times, ``retry_interval``
    ticks apart. If all fail and a board is given, the announcement is
    posted publicly instead and the receipt carries ``proof="board"``.
    """
    report = check_manifest(manifest, r_human_max)
    if not report.compliant:
        raise NotCompliant("manifest fails: " + ", ".join(report.failed()))
    digest = manifest_digest(manifest, primitives)
    attempts = []
    t = now
    for attempt in range(retries + 1):
        t = now + attempt * retry_interval
        attempts.append(t)
        ack = target.deliver(digest, t)
        if ack is not None:
            return AnnouncementReceipt(digest, t, ack, t + manifest.injunction_window, "ack", tuple(attempts))
    if board is None:
        raise DeliveryFailed(f"target {target.address} unreachable after {retries + 1} attempts")
    msg = ProtestMessage(
        pseudonym=manifest.organizer_pseudonyms[0],
        assembly_id=manifest.assembly_id,
        sequence_no=0,
        opinion_digest=opinion_digest(manifest, primitives),
        body=f"announcement {digest.hex()} to {target.address}",
        timestamp=t,
    )
    entry = append(board, msg)
    return AnnouncementReceipt(
        digest, t, entry.entry_digest, t + manifest.injunction_window, "board", tuple(attempts)
    )


def verify_receipt(receipt: AnnouncementReceipt, target: SimulatedTarget) -> bool:
    if receipt.proof != "ack":
        return False
    expected = target.primitives.mac(target.key, receipt.manifest_digest, receipt.delivered_at.to_bytes(8, "big"))
    return target.primitives.mac_equal(expected, receipt.target_ack)


@dataclass(frozen=True)
class Delay:
    ticks: int

    def __post_init__(self) -> None:
        if self.ticks < 0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class Forbid:
    pass


@dataclass(frozen=True)
class Allow:
    pass


Decision = Delay | Forbid | Allow


@dataclass(frozen=True)
class AssemblyStatus:
    start_time: int
    end_time: int
    forbidden: bool = False
    injunctions: tuple[tuple[int, Decision], ...] = ()


def initial_status(manifest: AssemblyManifest) -> AssemblyStatus:
    return AssemblyStatus(manifest.start_time, manifest.end_time)


def file_injunction(
    status: AssemblyStatus,
    receipt: AnnouncementReceipt,
    decision: Decision,
    now: int,
) -> AssemblyStatus:
    """Apply a court decision filed at ``now``.

    The window is half-open, ``[delivered_at, window_ends)``. A delay moves
    the whole assembly, so its length is preserved.
    """
    if now >= receipt.window_ends:
        raise WindowClosed(f"injunction at {now} after window closed at {receipt.window_ends}")
    log = status.injunctions + ((now, decision),)
    if isinstance(decision, Delay):
        return replace(
            status,
            start_time=status.start_time + decision.ticks,
            end_time=status.end_time + decision.ticks,
            injunctions=log,
        )
    if isinstance(decision, Allow):
        return replace(status, injunctions=log)
    return replace(status, forbidden=True, injunctions=log)


def may_commence(status: AssemblyStatus | None, receipt: AnnouncementReceipt | None, now: int) -> bool:
    if status is None or receipt is None:
        return False
    return (
        now >= receipt.window_ends
        and now >= status.start_time
        and not status.forbidden
        and now < status.end_time
    )
