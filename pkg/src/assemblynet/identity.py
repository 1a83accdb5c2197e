"""Assembly-scoped credentials: one pseudonymous token per person per assembly.

Pseudonyms are keyed digests ``digest(issuer_secret || identity || assembly_id)``,
so issuance is deterministic and the issuer's duplicate index is enough to
enforce uniqueness. The issuer tag is a MAC over the public credential fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from assemblynet.primitives import DEFAULT, DIGEST_SIZE, Primitives

ASSEMBLY_ID_SIZE = 16
MAX_IDENTITY_SIZE = 64


class IdentityError(Exception):
    pass


class EmptyIdentity(IdentityError):
    pass


class DuplicateIssuance(IdentityError):
    pass


@dataclass(frozen=True)
class IssuerState:
    issuer_secret: bytes
    issued_index: frozenset[tuple[bytes, bytes]] = frozenset()
    primitives: Primitives = field(default=DEFAULT, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.issuer_secret) != DIGEST_SIZE:
            raise ValueError("issuer_secret must be 32 bytes")


@dataclass(frozen=True)
class Credential:
    pseudonym: bytes
    assembly_id: bytes
    escrow_commitment: bytes
    issue_time: int
    issuer_tag: bytes


def _check_identity(identity: bytes) -> None:
    if not identity:
        raise EmptyIdentity("identity must be non-empty")
    if len(identity) > MAX_IDENTITY_SIZE:
        raise ValueError(f"identity longer than {MAX_IDENTITY_SIZE} bytes")


def _check_assembly_id(assembly_id: bytes) -> None:
    if len(assembly_id) != ASSEMBLY_ID_SIZE:
        raise ValueError("assembly_id must be 16 bytes")


def pseudonym_of(identity: bytes, assembly_id: bytes, state: IssuerState) -> bytes:
    _check_identity(identity)
    _check_assembly_id(assembly_id)
    return state.primitives.digest(state.issuer_secret, identity, assembly_id)


def _tag(state: IssuerState, pseudonym: bytes, assembly_id: bytes, commitment: bytes) -> bytes:
    return state.primitives.mac(state.issuer_secret, pseudonym, assembly_id, commitment)


def issue_credential(
    identity: bytes,
    assembly_id: bytes,
    now: int,
    state: IssuerState,
    escrow_commitment: bytes,
) -> tuple[Credential, IssuerState]:
    """Issue the holder's credential for ``assembly_id``.

    ``escrow_commitment`` is the commitment of the revocation escrow built
    for this identity (see :func:`assemblynet.revocation.build_escrow`).
    Raises :class:`DuplicateIssuance` if the person already holds a
    credential for this assembly.
    """
    pseudonym = pseudonym_of(identity, assembly_id, state)
    if len(escrow_commitment) != DIGEST_SIZE:
        raise ValueError("escrow_commitment must be 32 bytes")
    key = (state.primitives.digest(identity), assembly_id)
    if key in state.issued_index:
        raise DuplicateIssuance("identity already holds a credential for this assembly")
    cred = Credential(
        pseudonym=pseudonym,
        assembly_id=assembly_id,
        escrow_commitment=escrow_commitment,
        issue_time=now,
        issuer_tag=_tag(state, pseudonym, assembly_id, escrow_commitment),
    )
    return cred, replace(state, issued_index=state.issued_index | {key})


def verify_credential(cred: Credential, state: IssuerState) -> bool:
    try:
        if (
            len(cred.pseudonym) != DIGEST_SIZE
            or len(cred.assembly_id) != ASSEMBLY_ID_SIZE
            or len(cred.escrow_commitment) != DIGEST_SIZE
            or len(cred.issuer_tag) != DIGEST_SIZE
        ):
            return False
        expected = _tag(state, cred.pseudonym, cred.assembly_id, cred.escrow_commitment)
        return state.primitives.mac_equal(expected, cred.issuer_tag)
    except (TypeError, AttributeError):
        return False
