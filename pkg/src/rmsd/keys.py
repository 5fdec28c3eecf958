"""Ed25519 key handling for accounts, nodes, and wire envelopes."""

from __future__ import annotations

import os
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

PUBKEY_LEN = 32
SIGNATURE_LEN = 64


class Signer:
    """A private key plus its 32-byte public identity."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.pubkey: bytes = private.public_key().public_bytes_raw()

    @classmethod
    def generate(cls) -> "Signer":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "Signer":
        # Deterministic key for tests and simulations.
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    @classmethod
    def load(cls, path: str | Path) -> "Signer":
        raw = bytes.fromhex(Path(path).read_text().strip())
        return cls.from_seed(raw)

    def save(self, path: str | Path) -> None:
        p = Path(path)
        p.write_text(self._private.private_bytes_raw().hex() + "\n")
        os.chmod(p, 0o600)

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)

    @property
    def secret_bytes(self) -> bytes:
        return self._private.private_bytes_raw()


def verify(pubkey: bytes, signature: bytes, message: bytes) -> bool:
    if len(pubkey) != PUBKEY_LEN or len(signature) != SIGNATURE_LEN:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def save_pubkey(pubkey: bytes, path: str | Path) -> None:
    Path(path).write_text(pubkey.hex() + "\n")


def load_pubkey(path: str | Path) -> bytes:
    raw = bytes.fromhex(Path(path).read_text().strip())
    if len(raw) != PUBKEY_LEN:
        raise ValueError(f"public key must be {PUBKEY_LEN} bytes")
    return raw
