"""HMAC-SHA256 test cases from RFC 4231 (case 5 is truncated to 128 bits)."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Vector:
    case: int
    key: bytes
    data: bytes
    mac: bytes
    length: int = 32


_AA131 = b"\xaa" * 131

VECTORS = (
    Vector(1, b"\x0b" * 20, b"Hi There",
           bytes.fromhex("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7")),
    Vector(2, b"Jefe", b"what do ya want for nothing?",
           bytes.fromhex("5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843")),
    Vector(3, b"\xaa" * 20, b"\xdd" * 50,
           bytes.fromhex("773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe")),
    Vector(4, bytes(range(1, 26)), b"\xcd" * 50,
           bytes.fromhex("82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b")),
    Vector(5, b"\x0c" * 20, b"Test With Truncation",
           bytes.fromhex("a3b6167473100ee06e0c796c2955552b"), 16),
    Vector(6, _AA131, b"Test Using Larger Than Block-Size Key - Hash Key First",
           bytes.fromhex("60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54")),
    Vector(7, _AA131, b"This is a test using a larger than block-size key and a larger than "
                      b"block-size data. The key needs to be hashed before being used by the HMAC algorithm.",
           bytes.fromhex("9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2")),
)
