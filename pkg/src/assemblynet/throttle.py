"""Admission control for protest traffic.

Every credential owns a token bucket (burst ``b``, refill ``r`` per second)
and the assembly as a whole owns a bucket sized ``N_active * b`` refilling
at ``N_active * r``. Unused capacity of one credential is never available
to another. Requests whose expected response exceeds their own size are
refused outright.

Arithmetic is exact: integer ticks and :class:`fractions.Fraction` rates,
so bucket bounds hold with zero tolerance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

DEFAULT_RATE = Fraction(1)
DEFAULT_BURST = 5
DEFAULT_AMPLIFICATION_THRESHOLD = Fraction(1)

Number = int | Fraction


class ThrottleError(Exception):
    pass


class RevokedCredential(ThrottleError):
    pass


class UnknownCredential(RevokedCredential):
    """No bucket exists for the pseudonym: it was never enrolled."""


class AssemblyInactive(ThrottleError):
    pass


class RejectReason(enum.Enum):
    RATE_EXCEEDED = "RateExceeded"
    GROUP_CAP_EXCEEDED = "GroupCapExceeded"
    AMPLIFICATION = "Amplification"
    MISSING_OPINION = "MissingOpinion"


@dataclass(frozen=True)
class Decision:
    admitted: bool
    reason: RejectReason | None = None


ADMIT = Decision(True)


@dataclass(frozen=True)
class Request:
    pseudonym: bytes
    timestamp: int
    payload_size: int
    expected_response_ratio: Fraction
    opinion_digest: bytes

    def __post_init__(self) -> None:
        if self.payload_size <= 0:
            raise ValueError("payload_size must be positive")
        if self.expected_response_ratio <= 0:
            raise ValueError("expected_response_ratio must be positive")


@dataclass
class TokenBucket:
    capacity: Number
    rate: Number
    tokens: Number
    last_update: int

    def refill(self, now: int) -> None:
        if now > self.last_update:
            self.tokens = min(self.capacity, self.tokens + self.rate * (now - self.last_update))
            self.last_update = now


@dataclass
class RateState:
    rate: Number
    burst: int
    opinion_digest: bytes
    amplification_threshold: Number = DEFAULT_AMPLIFICATION_THRESHOLD
    buckets: dict[bytes, TokenBucket] = field(default_factory=dict)
    revoked: set[bytes] = field(default_factory=set)
    n_active: int = 0
    global_bucket: TokenBucket = field(init=False)
    last_update: int = 0

    def __post_init__(self) -> None:
        if self.rate <= 0 or self.burst < 1:
            raise ValueError("rate must be positive and burst at least 1")
        self.global_bucket = TokenBucket(0, 0, 0, self.last_update)

    def enroll(self, pseudonym: bytes, now: int) -> None:
        """Give ``pseudonym`` a full bucket and grow the group cap by one."""
        if pseudonym in self.buckets:
            raise ValueError("pseudonym already enrolled")
        self.buckets[pseudonym] = TokenBucket(self.burst, self.rate, self.burst, now)
        set_enrollment(self, self.n_active + 1, now)

    def revoke(self, pseudonym: bytes, now: int) -> None:
        """Bar ``pseudonym`` and shrink the group cap by one."""
        if pseudonym in self.revoked or pseudonym not in self.buckets:
            return
        self.revoked.add(pseudonym)
        set_enrollment(self, self.n_active - 1, now)


def set_enrollment(state: RateState, n_active: int, now: int | None = None) -> RateState:
    """Rescale the group bucket to ``n_active`` credentials.

    Growing the group adds one full burst per new member; shrinking clamps
    the stored tokens to the smaller capacity.
    """
    if n_active < 0:
        raise ValueError("n_active must be non-negative")
    g = state.global_bucket
    if now is not None:
        g.refill(now)
        state.last_update = max(state.last_update, now)
    added = n_active - state.n_active
    g.capacity = n_active * state.burst
    g.rate = n_active * state.rate
    g.tokens = min(g.capacity, g.tokens + max(added, 0) * state.burst)
    state.n_active = n_active
    return state


def admit(req: Request, state: RateState, now: int, *, active: bool = True) -> Decision:
    """Admit or reject one request at tick ``now``.

    Raises :class:`AssemblyInactive` when the assembly may not run and
    :class:`RevokedCredential` (or :class:`UnknownCredential`) when the
    pseudonym is barred or was never enrolled. Rejections consume no tokens.
    """
    if not active:
        raise AssemblyInactive("assembly may not commence at this time")
    if req.pseudonym in state.revoked:
        raise RevokedCredential("credential has been revoked")
    bucket = state.buckets.get(req.pseudonym)
    if bucket is None:
        raise UnknownCredential("credential not enrolled")
    if req.expected_response_ratio > state.amplification_threshold:
        return Decision(False, RejectReason.AMPLIFICATION)
    if req.opinion_digest != state.opinion_digest:
        return Decision(False, RejectReason.MISSING_OPINION)
    bucket.refill(now)
    state.global_bucket.refill(now)
    state.last_update = max(state.last_update, now)
    if bucket.tokens < 1:
        return Decision(False, RejectReason.RATE_EXCEEDED)
    if state.global_bucket.tokens < 1:
        return Decision(False, RejectReason.GROUP_CAP_EXCEEDED)
    bucket.tokens -= 1
    state.global_bucket.tokens -= 1
    return ADMIT


def critical_mass(capacity: Number, rate: Number) -> int:
    """Smallest compliant group whose admitted rate can exceed ``capacity``.

    >>> critical_mass(100, 3)
    34
    """
    if capacity <= 0 or rate <= 0:
        raise ValueError("capacity and rate must be positive")
    return math.ceil(Fraction(capacity) / Fraction(rate))
