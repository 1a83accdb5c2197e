"""Digest and authentication primitives used across the protocol.

Every module takes its 32-byte functions from a :class:`Primitives`
provider so the concrete hash can be swapped. The default provider is
SHA-256 / HMAC-SHA-256.
"""

from __future__ import annotations

import hashlib
import hmac

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


class Primitives:
    """SHA-256 digest and HMAC-SHA-256 authentication code."""

    name = "sha256"

    def digest(self, *parts: bytes) -> bytes:
        h = hashlib.sha256()
        for part in parts:
            h.update(part)
        return h.digest()

    def mac(self, key: bytes, *parts: bytes) -> bytes:
        m = hmac.new(key, digestmod=hashlib.sha256)
        for part in parts:
            m.update(part)
        return m.digest()

    def mac_equal(self, a: bytes, b: bytes) -> bool:
        return hmac.compare_digest(a, b)


DEFAULT = Primitives()
