"""The attestation measurement as pure functions.

HMAC-SHA256 comes from the standard library. `hmac_sha256_reference` is a
second, independent route (explicit pad construction over hashlib) used only
by the conformance tests.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Union

KEY_LEN = 64
CHAL_LEN = 32
MAC_LEN = 32


def hmac_sha256(key: bytes, msg: bytes) -> bytes:
    return hmac.new(key, msg, hashlib.sha256).digest()


def hmac_sha256_reference(key: bytes, msg: bytes) -> bytes:
    block = 64
    if len(key) > block:
        key = hashlib.sha256(key).digest()
    key = key.ljust(block, b"\x00")
    inner = hashlib.sha256(bytes(b ^ 0x36 for b in key) + msg).digest()
    return hashlib.sha256(bytes(b ^ 0x5C for b in key) + inner).digest()


def _check(name: str, value: bytes, size: int) -> None:
    if len(value) != size:
        raise ValueError(f"{name} must be {size} bytes, got {len(value)}")


def kdf(key: bytes, chal: bytes) -> bytes:
    """Per-challenge key: one HMAC of the challenge under the 64-byte master key."""
    _check("master key", key, KEY_LEN)
    _check("challenge", chal, CHAL_LEN)
    return hmac_sha256(key, chal)


def swatt_compute(key: bytes, chal: bytes, data: bytes) -> bytes:
    if not data:
        raise ValueError("attested region must be non-empty")
    return hmac_sha256(kdf(key, chal), data)


@dataclass(frozen=True)
class AuthState:
    ctr: bytes = bytes(CHAL_LEN)

    def __post_init__(self):
        _check("counter", self.ctr, CHAL_LEN)


@dataclass(frozen=True)
class Accept:
    mac: bytes
    new_state: AuthState


@dataclass(frozen=True)
class Reject:
    reason: str


AuthResult = Union[Accept, Reject]


def auth_token(key: bytes, chal: bytes) -> bytes:
    """What the verifier sends alongside a challenge in the authenticated variant."""
    _check("master key", key, KEY_LEN)
    _check("challenge", chal, CHAL_LEN)
    return hmac_sha256(key, chal)


def swatt_auth_compute(key: bytes, chal: bytes, token: bytes, state: AuthState,
                       data: bytes) -> AuthResult:
    _check("master key", key, KEY_LEN)
    _check("challenge", chal, CHAL_LEN)
    _check("token", token, MAC_LEN)
    # bytes comparison is lexicographic, i.e. memcmp order on equal lengths
    if not chal > state.ctr:
        return Reject("stale")
    verification = hmac_sha256(key, chal)
    if not hmac.compare_digest(token, verification):
        return Reject("bad-auth")
    derived = hmac_sha256(key, verification)
    return Accept(hmac_sha256(derived, data), AuthState(chal))
