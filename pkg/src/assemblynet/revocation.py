"""Threshold-revocable anonymity.

Each participant identity is split byte-wise with Shamir's scheme over
GF(257) and the shares are handed to ``n`` other participants. Any ``k`` of
them can cooperate to reveal the identity behind an abusive pseudonym;
fewer learn nothing.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from assemblynet.primitives import DEFAULT, Primitives

PRIME = 257
MAX_SHARES = 256


class RevocationError(Exception):
    pass


class BadThreshold(RevocationError):
    pass


class EmptySecret(RevocationError):
    pass


class InsufficientShares(RevocationError):
    pass


class InconsistentShares(RevocationError):
    pass


class CaseClosed(RevocationError):
    pass


class ShareMismatch(RevocationError):
    pass


class ShareFormatError(RevocationError):
    pass


class _RandRange(Protocol):
    def randrange(self, stop: int) -> int: ...


@dataclass(frozen=True)
class Share:
    holder_index: int
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.holder_index <= MAX_SHARES:
            raise ValueError(f"holder_index out of range: {self.holder_index}")
        if any(not 0 <= v < PRIME for v in self.values):
            raise ValueError("share value outside GF(257)")


def serialize_share(share: Share) -> bytes:
    # index 256 does not fit one byte; 0 is never a valid index, so it stands in.
    index_byte = share.holder_index % 256
    return bytes([index_byte]) + struct.pack(">I", len(share.values)) + b"".join(
        v.to_bytes(2, "big") for v in share.values
    )


def deserialize_share(data: bytes) -> Share:
    if len(data) < 5:
        raise ShareFormatError("share record shorter than header")
    index = data[0] or 256
    (length,) = struct.unpack(">I", data[1:5])
    if len(data) != 5 + 2 * length:
        raise ShareFormatError(f"expected {length} values, got {(len(data) - 5) / 2}")
    values = tuple(int.from_bytes(data[5 + 2 * i : 7 + 2 * i], "big") for i in range(length))
    try:
        return Share(index, values)
    except ValueError as exc:
        raise ShareFormatError(str(exc)) from None


def _eval_poly(coeffs: Sequence[int], x: int) -> int:
    y = 0
    for c in reversed(coeffs):
        y = (y * x + c) % PRIME
    return y


def split_secret(secret: bytes, k: int, n: int, rng: _RandRange) -> list[Share]:
    if not secret:
        raise EmptySecret("secret must be at least one byte")
    if k < 1 or k > n or n > MAX_SHARES:
        raise BadThreshold(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k} n={n}")
    polys = [[b] + [rng.randrange(PRIME) for _ in range(k - 1)] for b in secret]
    return [
        Share(x, tuple(_eval_poly(coeffs, x) for coeffs in polys))
        for x in range(1, n + 1)
    ]


def _lagrange_at_zero(xs: Sequence[int]) -> list[int]:
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = num * xj % PRIME
                den = den * (xj - xi) % PRIME
        weights.append(num * pow(den, PRIME - 2, PRIME) % PRIME)
    return weights


def _distinct(shares: Iterable[Share]) -> list[Share]:
    seen: dict[int, Share] = {}
    for s in shares:
        seen.setdefault(s.holder_index, s)
    return [seen[i] for i in sorted(seen)]


def reconstruct(shares: Sequence[Share], k: int) -> bytes:
    distinct = _distinct(shares)
    if len(distinct) < k:
        raise InsufficientShares(f"{len(distinct)} distinct shares, need {k}")
    if len({len(s.values) for s in distinct}) != 1:
        raise InconsistentShares("shares have different lengths")
    used = distinct[:k]
    weights = _lagrange_at_zero([s.holder_index for s in used])
    out = bytearray()
    for pos in range(len(used[0].values)):
        b = sum(w * s.values[pos] for w, s in zip(weights, used)) % PRIME
        if b > 255:
            raise InconsistentShares("interpolated value is not a byte")
        out.append(b)
    return bytes(out)


@dataclass(frozen=True)
class SecrecyReport:
    """Per byte position, the candidate secret bytes some polynomial explains."""

    k: int
    consistent: tuple[frozenset[int], ...]

    @property
    def all_consistent(self) -> bool:
        return all(len(c) == 256 for c in self.consistent)


def _inverse_mod(matrix: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse over GF(257)."""
    size = matrix.shape[0]
    aug = np.concatenate([matrix % PRIME, np.eye(size, dtype=np.int64)], axis=1)
    for col in range(size):
        pivot = next(r for r in range(col, size) if aug[r, col] % PRIME)
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = aug[col] * pow(int(aug[col, col]), PRIME - 2, PRIME) % PRIME
        for r in range(size):
            if r != col and aug[r, col]:
                aug[r] = (aug[r] - aug[r, col] * aug[col]) % PRIME
    return aug[:, size:]


def secrecy_check(shares: Sequence[Share], k: int) -> SecrecyReport:
    """Check that ``k - 1`` shares leave every secret byte value possible.

    For each candidate byte ``c`` the degree ``k - 1`` polynomial through
    ``(0, c)`` and the given points is solved for explicitly and then
    re-evaluated at the share points; a candidate counts as consistent only
    if that polynomial reproduces every share value.
    """
    distinct = _distinct(shares)
    if len(distinct) != k - 1:
        raise ValueError(f"secrecy_check expects exactly k-1={k - 1} shares")
    if not distinct:
        return SecrecyReport(k, (frozenset(range(256)),))
    length = len(distinct[0].values)
    if any(len(s.values) != length for s in distinct):
        raise InconsistentShares("shares have different lengths")
    xs = np.array([0] + [s.holder_index for s in distinct], dtype=np.int64)
    vander = np.array([[pow(int(x), p, PRIME) for p in range(k)] for x in xs], dtype=np.int64)
    inverse = _inverse_mod(vander)
    candidates = np.arange(256, dtype=np.int64)
    ys = np.array([s.values for s in distinct], dtype=np.int64)  # (k-1, length)
    consistent = []
    for pos in range(length):
        rhs = np.empty((k, 256), dtype=np.int64)
        rhs[0] = candidates
        rhs[1:] = ys[:, pos : pos + 1]
        coeffs = inverse @ rhs % PRIME
        evaluated = vander @ coeffs % PRIME
        ok = np.all(evaluated == rhs, axis=0)
        consistent.append(frozenset(int(c) for c in candidates[ok]))
    return SecrecyReport(k, tuple(consistent))


@dataclass(frozen=True)
class RevocationEscrow:
    assembly_id: bytes
    pseudonym: bytes
    threshold_k: int
    share_count_n: int
    share_digests: tuple[bytes, ...]
    commitment: bytes

    def __post_init__(self) -> None:
        if not 1 <= self.threshold_k <= self.share_count_n:
            raise BadThreshold("escrow needs 1 <= k <= n")
        if len(self.share_digests) != self.share_count_n:
            raise ValueError("one digest per share required")


def share_digest(share: Share, primitives: Primitives = DEFAULT) -> bytes:
    return primitives.digest(serialize_share(share))


def commit_shares(shares: Sequence[Share], primitives: Primitives = DEFAULT) -> tuple[tuple[bytes, ...], bytes]:
    ordered = sorted(shares, key=lambda s: s.holder_index)
    digests = tuple(share_digest(s, primitives) for s in ordered)
    return digests, primitives.digest(*digests)


def build_escrow(
    identity: bytes,
    assembly_id: bytes,
    pseudonym: bytes,
    k: int,
    n: int,
    rng: _RandRange,
    primitives: Primitives = DEFAULT,
) -> tuple[RevocationEscrow, list[Share]]:
    shares = split_secret(identity, k, n, rng)
    digests, commitment = commit_shares(shares, primitives)
    escrow = RevocationEscrow(assembly_id, pseudonym, k, n, digests, commitment)
    return escrow, shares


class CaseStatus(enum.Enum):
    OPEN = "open"
    REVEALED = "revealed"
    CLOSED = "closed"


@dataclass(frozen=True)
class RevocationCase:
    pseudonym: bytes
    opened_at: int
    submitted_shares: Mapping[int, Share] = field(default_factory=dict)
    status: CaseStatus = CaseStatus.OPEN
    revealed_identity: bytes | None = None


def open_case(pseudonym: bytes, now: int) -> RevocationCase:
    return RevocationCase(pseudonym=pseudonym, opened_at=now)


def close_case(case: RevocationCase) -> RevocationCase:
    if case.status is not CaseStatus.OPEN:
        raise CaseClosed("case is not open")
    return replace(case, status=CaseStatus.CLOSED)


def submit_share(
    case: RevocationCase,
    share: Share,
    escrow: RevocationEscrow,
    primitives: Primitives = DEFAULT,
) -> RevocationCase:
    """Record one holder's share; reveal the identity once ``k`` are in.

    Resubmitting a holder index already on file leaves the case unchanged.
    """
    if case.status is not CaseStatus.OPEN:
        raise CaseClosed(f"case is {case.status.value}")
    if case.pseudonym != escrow.pseudonym:
        raise ShareMismatch("escrow belongs to a different pseudonym")
    if primitives.digest(*escrow.share_digests) != escrow.commitment:
        raise ShareMismatch("escrow digests do not match its commitment")
    if not 1 <= share.holder_index <= escrow.share_count_n:
        raise ShareMismatch(f"holder index {share.holder_index} outside escrow")
    if share_digest(share, primitives) != escrow.share_digests[share.holder_index - 1]:
        raise ShareMismatch(f"share {share.holder_index} does not match commitment")
    if share.holder_index in case.submitted_shares:
        return case
    submitted = {**case.submitted_shares, share.holder_index: share}
    if len(submitted) < escrow.threshold_k:
        return replace(case, submitted_shares=submitted)
    identity = reconstruct(list(submitted.values()), escrow.threshold_k)
    return replace(
        case,
        submitted_shares=submitted,
        status=CaseStatus.REVEALED,
        revealed_identity=identity,
    )
