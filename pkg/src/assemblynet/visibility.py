"""Public board: a hash-chained, append-only mirror of every protest message.

Entry digests chain as ``digest(prev_digest || canonical message bytes)``
with 32 zero bytes before the first entry. The export format is one
record per line::

    index,hex(prev_digest),hex(entry_digest),base64(canonical message)

Readers accept only the canonical spelling of every field (lowercase hex,
decimal index without sign or padding, canonical base64), so any change to
an exported byte is detected either as a malformed record or as a broken
chain.
"""

from __future__ import annotations

import base64
import binascii
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from assemblynet.primitives import DEFAULT, DIGEST_SIZE, ZERO_DIGEST, Primitives

MAX_BODY_BYTES = 16 * 1024
_HEADER = struct.Struct(">32s16sQ32sQI")


class VisibilityError(Exception):
    pass


class OpinionMismatch(VisibilityError):
    pass


class BoardFormatError(VisibilityError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ProtestMessage:
    pseudonym: bytes
    assembly_id: bytes
    sequence_no: int
    opinion_digest: bytes
    body: str
    timestamp: int

    @property
    def key(self) -> tuple[bytes, int]:
        return self.pseudonym, self.sequence_no


def canonical_bytes(msg: ProtestMessage) -> bytes:
    body = msg.body.encode("utf-8")
    if len(body) > MAX_BODY_BYTES:
        raise ValueError("message body exceeds 16 KiB")
    return _HEADER.pack(
        msg.pseudonym, msg.assembly_id, msg.sequence_no, msg.opinion_digest, msg.timestamp, len(body)
    ) + body


def parse_canonical(data: bytes) -> ProtestMessage:
    if len(data) < _HEADER.size:
        raise ValueError("message shorter than header")
    pseud, aid, seq, opinion, ts, length = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if len(body) != length or length > MAX_BODY_BYTES:
        raise ValueError("body length mismatch")
    return ProtestMessage(pseud, aid, seq, opinion, body.decode("utf-8"), ts)


@dataclass(frozen=True)
class BoardEntry:
    index: int
    prev_digest: bytes
    entry_digest: bytes
    message: ProtestMessage


@dataclass
class Board:
    """Replica of the public board.

    ``opinion_digest`` pins the collective opinion: messages carrying any
    other digest are refused.
    """

    opinion_digest: bytes
    entries: list[BoardEntry] = field(default_factory=list)
    primitives: Primitives = field(default=DEFAULT, repr=False)
    _by_key: dict[tuple[bytes, int], BoardEntry] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def head(self) -> bytes:
        return self.entries[-1].entry_digest if self.entries else ZERO_DIGEST

    def lookup(self, pseudonym: bytes, sequence_no: int) -> BoardEntry | None:
        return self._by_key.get((pseudonym, sequence_no))


def append(board: Board, msg: ProtestMessage) -> BoardEntry:
    """Append ``msg``; a repeat of (pseudonym, sequence_no) returns the stored entry."""
    existing = board._by_key.get(msg.key)
    if existing is not None:
        return existing
    if msg.opinion_digest != board.opinion_digest:
        raise OpinionMismatch("message does not carry the assembly's opinion")
    prev = board.head
    entry = BoardEntry(
        index=len(board.entries),
        prev_digest=prev,
        entry_digest=board.primitives.digest(prev, canonical_bytes(msg)),
        message=msg,
    )
    board.entries.append(entry)
    board._by_key[msg.key] = entry
    return entry


def first_broken_index(entries: Sequence[BoardEntry], primitives: Primitives = DEFAULT) -> int | None:
    prev = ZERO_DIGEST
    for pos, entry in enumerate(entries):
        if entry.index != pos or entry.prev_digest != prev:
            return pos
        try:
            data = canonical_bytes(entry.message)
        except (ValueError, struct.error):
            return pos
        if primitives.digest(prev, data) != entry.entry_digest:
            return pos
        prev = entry.entry_digest
    return None


def verify_chain(board: Board | Sequence[BoardEntry]) -> bool:
    entries = board.entries if isinstance(board, Board) else board
    primitives = board.primitives if isinstance(board, Board) else DEFAULT
    return first_broken_index(entries, primitives) is None


def visibility_fraction(delivered: Iterable[ProtestMessage], board: Board) -> Fraction:
    delivered = list(delivered)
    if not delivered:
        return Fraction(1)
    seen = 0
    for msg in delivered:
        entry = board.lookup(msg.pseudonym, msg.sequence_no)
        if entry is not None and entry.message == msg:
            seen += 1
    return Fraction(seen, len(delivered))


# -- export -------------------------------------------------------------------


def export_board(board: Board | Sequence[BoardEntry]) -> str:
    entries = board.entries if isinstance(board, Board) else board
    return "".join(
        f"{e.index},{e.prev_digest.hex()},{e.entry_digest.hex()},"
        f"{base64.b64encode(canonical_bytes(e.message)).decode('ascii')}\n"
        for e in entries
    )


def _hex_field(text: str, line: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise BoardFormatError(f"{what} is not hex", line) from None
    if len(raw) != DIGEST_SIZE or raw.hex() != text:
        raise BoardFormatError(f"{what} is not a canonical 32-byte hex digest", line)
    return raw


def parse_board_export(text: str) -> list[BoardEntry]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    entries = []
    for lineno, line in enumerate(lines, start=1):
        fields = line.split(",")
        if len(fields) != 4:
            raise BoardFormatError(f"expected 4 fields, got {len(fields)}", lineno)
        idx_text, prev_hex, entry_hex, b64 = fields
        if not idx_text.isascii() or not idx_text.isdigit() or str(int(idx_text)) != idx_text:
            raise BoardFormatError(f"bad index {idx_text!r}", lineno)
        try:
            data = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError):
            raise BoardFormatError("message is not base64", lineno) from None
        if base64.b64encode(data).decode("ascii") != b64:
            raise BoardFormatError("message base64 is not canonical", lineno)
        try:
            msg = parse_canonical(data)
        except (ValueError, UnicodeDecodeError) as exc:
            raise BoardFormatError(f"bad message: {exc}", lineno) from None
        entries.append(
            BoardEntry(int(idx_text), _hex_field(prev_hex, lineno, "prev_digest"), _hex_field(entry_hex, lineno, "entry_digest"), msg)
        )
    return entries
