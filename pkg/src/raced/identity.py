"""Long-term and temporary node identities.

Every PCN node holds two Ed25519 keypairs: a long-term pair ``(sk, vk)``
known only to its channel neighbours, and a temporary pair ``(SK, VK)``
used with everyone else.  ``sigma_VK`` binds the two: it is ``VK`` signed
under ``sk``, so a neighbour holding ``vk`` can check the pseudonym.

Key material is carried around as raw bytes so identities are plain,
hashable, immutable values.  Signing is deterministic, which keeps whole
simulation runs replayable from a seed.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .encoding import node_key

SECURITY_PARAMETER = 128
KEY_BYTES = 32
SIGNATURE_BYTES = 64


class DecodeError(ValueError):
    """Key, signature or message bytes are malformed."""


@dataclass(frozen=True)
class Identity:
    node_ref: Hashable
    sk: bytes
    vk: bytes
    SK: bytes
    VK: bytes
    sigma_VK: bytes

    def __repr__(self) -> str:
        return f"Identity(node_ref={self.node_ref!r}, vk={self.vk.hex()[:12]}..)"


@dataclass(frozen=True)
class SignatureEnvelope:
    message_digest: bytes
    signature: bytes
    signer_vk: bytes


@lru_cache(maxsize=65536)
def _private_key(sk: bytes) -> ed25519.Ed25519PrivateKey:
    return ed25519.Ed25519PrivateKey.from_private_bytes(sk)


@lru_cache(maxsize=65536)
def _public_key(vk: bytes) -> ed25519.Ed25519PublicKey:
    try:
        return ed25519.Ed25519PublicKey.from_public_bytes(vk)
    except ValueError as exc:
        raise DecodeError(f"invalid verification key: {exc}") from exc


def _check_len(name: str, value: bytes, size: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        got = len(value) if isinstance(value, (bytes, bytearray)) else type(value).__name__
        raise DecodeError(f"{name} must be {size} bytes, got {got}")


def keypair_from_seed(seed: bytes) -> tuple[bytes, bytes]:
    _check_len("seed", seed, KEY_BYTES)
    priv = _private_key(bytes(seed))
    vk = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return bytes(seed), vk


def generate_identity(
    seed: bytes | None = None,
    node_ref: Hashable = None,
    security_parameter: int = SECURITY_PARAMETER,
) -> Identity:
    """Create both keypairs for one node and link them with ``sigma_VK``.

    ``seed`` must carry at least ``2 * security_parameter`` bits; the two
    keypairs are derived from it under separate domain tags.  Without a
    seed, fresh OS randomness is used.
    """
    if seed is None:
        seed = os.urandom(max(KEY_BYTES, security_parameter // 4))
    if len(seed) * 8 < 2 * security_parameter:
        raise ValueError(
            f"seed has {len(seed) * 8} bits, need >= {2 * security_parameter}"
        )
    sk, vk = keypair_from_seed(hashlib.sha256(b"raced/long-term/" + seed).digest())
    SK, VK = keypair_from_seed(hashlib.sha256(b"raced/temporary/" + seed).digest())
    sigma_VK = _private_key(sk).sign(VK)
    return Identity(node_ref=node_ref, sk=sk, vk=vk, SK=SK, VK=VK, sigma_VK=sigma_VK)


def derive_seed(master_seed: int | bytes, label: object) -> bytes:
    """Per-node 256-bit seed from a run seed, for deterministic key setup."""
    if isinstance(master_seed, int):
        master_seed = master_seed.to_bytes(16, "big", signed=True)
    return hashlib.sha256(master_seed + b"/" + repr(label).encode()).digest()


def raw_verify(vk: bytes, message: bytes, signature: bytes) -> bool:
    _check_len("verification key", vk, KEY_BYTES)
    _check_len("signature", signature, SIGNATURE_BYTES)
    try:
        _public_key(bytes(vk)).verify(bytes(signature), bytes(message))
    except InvalidSignature:
        return False
    return True


def raw_sign(sk: bytes, message: bytes) -> bytes:
    _check_len("signing key", sk, KEY_BYTES)
    return _private_key(bytes(sk)).sign(bytes(message))


def verify_neighbor_identity(vk: bytes, VK: bytes, sigma_VK: bytes) -> bool:
    """True iff ``sigma_VK`` is ``vk``'s signature on the pseudonym ``VK``."""
    _check_len("VK", VK, KEY_BYTES)
    return raw_verify(vk, VK, sigma_VK)


def sign(sk: bytes, message: bytes) -> SignatureEnvelope:
    signature = raw_sign(sk, message)
    vk = _private_key(bytes(sk)).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return SignatureEnvelope(
        message_digest=hashlib.sha256(message).digest(),
        signature=signature,
        signer_vk=vk,
    )


def verify(envelope: SignatureEnvelope, message: bytes) -> bool:
    if not isinstance(message, (bytes, bytearray)):
        raise DecodeError("message must be bytes")
    if hashlib.sha256(message).digest() != envelope.message_digest:
        return False
    return raw_verify(envelope.signer_vk, message, envelope.signature)


def dump_keys(identities, path) -> None:
    """Write ``node,vk,VK,sigma_VK`` (hex) per line, ordered by node."""
    with open(path, "w", encoding="utf-8") as fh:
        for ident in sorted(identities, key=lambda i: node_key(i.node_ref)):
            fh.write(f"{ident.node_ref},{ident.vk.hex()},{ident.VK.hex()},{ident.sigma_VK.hex()}\n")
