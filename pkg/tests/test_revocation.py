import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assemblynet.primitives import DEFAULT
from assemblynet.revocation import (
    PRIME,
    BadThreshold,
    CaseClosed,
    CaseStatus,
    EmptySecret,
    InconsistentShares,
    InsufficientShares,
    Share,
    ShareFormatError,
    ShareMismatch,
    build_escrow,
    close_case,
    commit_shares,
    deserialize_share,
    open_case,
    reconstruct,
    secrecy_check,
    serialize_share,
    split_secret,
    submit_share,
)

AID = bytes(16)
PSEUD = bytes(range(32))


class FixedCoefficients:
    def __init__(self, *coeffs):
        self.coeffs = itertools.cycle(coeffs)

    def randrange(self, stop):
        return next(self.coeffs)


def test_k1_constant_polynomial():
    (share,) = split_secret(bytes([42]), 1, 1, random.Random(0))
    assert share == Share(1, (42,))
    assert reconstruct([share], 1) == bytes([42])


def test_fixed_line_matches_hand_evaluation():
    shares = split_secret(bytes([42]), 2, 3, FixedCoefficients(7))
    # f(x) = 42 + 7x mod 257
    assert [s.values[0] for s in shares] == [49, 56, 63]


def test_bad_thresholds():
    with pytest.raises(BadThreshold):
        split_secret(b"x", 3, 2, random.Random(0))
    with pytest.raises(BadThreshold):
        split_secret(b"x", 0, 2, random.Random(0))
    with pytest.raises(BadThreshold):
        split_secret(b"x", 2, 257, random.Random(0))
    with pytest.raises(EmptySecret):
        split_secret(b"", 1, 1, random.Random(0))


def test_reconstruct_from_two_points():
    # line through (1, 49) and (3, 63): slope (63-49)/2, intercept 49 - slope
    slope = (63 - 49) * pow(2, PRIME - 2, PRIME) % PRIME
    assert (49 - slope) % PRIME == 42
    assert reconstruct([Share(1, (49,)), Share(3, (63,))], 2) == bytes([42])


def test_insufficient_and_inconsistent():
    shares = split_secret(b"ab", 2, 3, random.Random(1))
    with pytest.raises(InsufficientShares):
        reconstruct(shares[:1], 2)
    with pytest.raises(InsufficientShares):
        reconstruct([shares[0], shares[0]], 2)
    with pytest.raises(InconsistentShares):
        reconstruct([shares[0], Share(2, (1,))], 2)


def test_random_instances_every_k_subset():
    rng = random.Random(99)
    for _ in range(200):
        secret = rng.randbytes(rng.randrange(1, 33))
        k = rng.randrange(1, 6)
        n = rng.randrange(k, 9)
        shares = split_secret(secret, k, n, rng)
        for subset in itertools.combinations(shares, k):
            assert reconstruct(list(subset), k) == secret


@settings(max_examples=60, deadline=None)
@given(
    secret=st.binary(min_size=1, max_size=16),
    k=st.integers(1, 4),
    extra=st.integers(0, 3),
    seed=st.integers(0, 2**32),
)
def test_round_trip_and_field_closure(secret, k, extra, seed):
    n = k + extra
    shares = split_secret(secret, k, n, random.Random(seed))
    assert all(0 <= v < PRIME for s in shares for v in s.values)
    rng = random.Random(seed + 1)
    subset = rng.sample(shares, k)
    assert reconstruct(subset, k) == secret


def test_share_serialization_is_bit_exact():
    assert serialize_share(Share(1, (49,))) == bytes([1, 0, 0, 0, 1, 0, 49])
    assert serialize_share(Share(3, (256, 0))) == bytes([3, 0, 0, 0, 2, 1, 0, 0, 0])
    # index 256 is carried as byte 0
    s = Share(256, (5,))
    assert serialize_share(s)[0] == 0
    assert deserialize_share(serialize_share(s)) == s
    with pytest.raises(ShareFormatError):
        deserialize_share(bytes([1, 0, 0, 0, 2, 0, 1]))
    with pytest.raises(ShareFormatError):
        deserialize_share(bytes([1, 0, 0, 0, 1, 1, 1]))  # 257 is outside the field


def _line_through(c, x1, y1):
    """Slope of the unique line through (0, c) and (x1, y1) over GF(257)."""
    return (y1 - c) * pow(x1, PRIME - 2, PRIME) % PRIME


def _parabola_through(c, p1, p2):
    """Solve a1, a2 with c + a1 x + a2 x^2 = y at both points (Cramer's rule)."""
    (x1, y1), (x2, y2) = p1, p2
    det = (x1 * x2 * x2 - x2 * x1 * x1) % PRIME
    inv = pow(det, PRIME - 2, PRIME)
    a1 = ((y1 - c) * x2 * x2 - (y2 - c) * x1 * x1) * inv % PRIME
    a2 = (x1 * (y2 - c) - x2 * (y1 - c)) * inv % PRIME
    return a1, a2


def test_secrecy_single_share_k2():
    report = secrecy_check([Share(1, (49,))], 2)
    assert report.all_consistent
    for c in range(256):
        a1 = _line_through(c, 1, 49)
        assert (c + a1) % PRIME == 49


def test_secrecy_zero_shares_k1():
    assert secrecy_check([], 1).all_consistent


def test_secrecy_two_shares_k3():
    shares = split_secret(b"\x10\xfe", 3, 5, random.Random(3))
    pair = [shares[1], shares[4]]
    report = secrecy_check(pair, 3)
    assert report.all_consistent
    for pos in range(2):
        points = [(s.holder_index, s.values[pos]) for s in pair]
        for c in range(256):
            a1, a2 = _parabola_through(c, *points)
            for x, y in points:
                assert (c + a1 * x + a2 * x * x) % PRIME == y


def test_secrecy_requires_k_minus_one():
    with pytest.raises(ValueError):
        secrecy_check([Share(1, (1,)), Share(2, (2,))], 2)


@pytest.fixture
def escrow_and_shares():
    return build_escrow(b"mallory", AID, PSEUD, 3, 5, random.Random(5))


def test_case_reveals_at_threshold(escrow_and_shares):
    escrow, shares = escrow_and_shares
    case = open_case(PSEUD, 10)
    case = submit_share(case, shares[0], escrow)
    case = submit_share(case, shares[3], escrow)
    assert case.status is CaseStatus.OPEN and case.revealed_identity is None
    case = submit_share(case, shares[4], escrow)
    assert case.status is CaseStatus.REVEALED
    assert case.revealed_identity == b"mallory"
    with pytest.raises(CaseClosed):
        submit_share(case, shares[1], escrow)


def test_duplicate_holder_counts_once(escrow_and_shares):
    escrow, shares = escrow_and_shares
    case = open_case(PSEUD, 0)
    for _ in range(3):
        case = submit_share(case, shares[2], escrow)
    assert len(case.submitted_shares) == 1
    case = submit_share(case, shares[1], escrow)
    assert case.status is CaseStatus.OPEN


def test_perturbed_share_mismatch(escrow_and_shares):
    escrow, shares = escrow_and_shares
    bad = Share(shares[0].holder_index, ((shares[0].values[0] + 1) % PRIME,) + shares[0].values[1:])
    _, recomputed = commit_shares([bad] + shares[1:])
    assert recomputed != escrow.commitment
    with pytest.raises(ShareMismatch):
        submit_share(open_case(PSEUD, 0), bad, escrow)
    with pytest.raises(ShareMismatch):
        submit_share(open_case(b"\x00" * 32, 0), shares[0], escrow)


def test_commitment_over_ordered_share_digests(escrow_and_shares):
    escrow, shares = escrow_and_shares
    leaves = [DEFAULT.digest(serialize_share(s)) for s in shares]
    assert escrow.share_digests == tuple(leaves)
    assert escrow.commitment == DEFAULT.digest(b"".join(leaves))


def test_closed_case_refuses_shares(escrow_and_shares):
    escrow, shares = escrow_and_shares
    case = close_case(open_case(PSEUD, 0))
    with pytest.raises(CaseClosed):
        submit_share(case, shares[0], escrow)
