"""Verifier/prover wire format, transports and the attestation game.

Every message starts with the magic ``VRSD``, a version byte and a type byte.

    request   01  flags  chal[32]  [token[32] if auth]  [ar_min ar_max as u16 BE if region]
    response  02  status mac[32]          (status 0 = measured, 1 = refused)
    reset     03  cycle as u32 BE         (the device rebooted mid-request)

On a stream each message is prefixed by its length as a u32 BE.
"""

from __future__ import annotations

import random
import secrets
import socket
import struct
from dataclasses import dataclass, replace
from typing import Callable, Union

from . import sim, swatt
from .layout import MemoryLayout, default_layout, validate_layout

MAGIC = b"VRSD"
VERSION = 1
T_REQUEST, T_RESPONSE, T_RESET = 0x01, 0x02, 0x03
FLAG_AUTH, FLAG_REGION = 0x01, 0x02
STATUS_OK, STATUS_REFUSED = 0, 1
MAX_FRAME = 1024
HEADER = MAGIC + bytes([VERSION])


class MalformedFrame(ValueError):
    pass


@dataclass(frozen=True)
class Request:
    chal: bytes
    token: bytes | None = None
    region: tuple[int, int] | None = None

    @property
    def auth(self) -> bool:
        return self.token is not None


@dataclass(frozen=True)
class Response:
    status: int
    mac: bytes = bytes(swatt.MAC_LEN)


@dataclass(frozen=True)
class ResetNotice:
    cycle: int


Message = Union[Request, Response, ResetNotice]


def encode(msg: Message) -> bytes:
    if isinstance(msg, Request):
        if len(msg.chal) != swatt.CHAL_LEN:
            raise ValueError("challenge must be 32 bytes")
        flags = (FLAG_AUTH if msg.token is not None else 0) | (FLAG_REGION if msg.region else 0)
        body = bytes([T_REQUEST, flags]) + msg.chal
        if msg.token is not None:
            if len(msg.token) != swatt.MAC_LEN:
                raise ValueError("token must be 32 bytes")
            body += msg.token
        if msg.region:
            body += struct.pack(">HH", *msg.region)
        return HEADER + body
    if isinstance(msg, Response):
        if len(msg.mac) != swatt.MAC_LEN:
            raise ValueError("mac must be 32 bytes")
        return HEADER + bytes([T_RESPONSE, msg.status]) + msg.mac
    if isinstance(msg, ResetNotice):
        return HEADER + bytes([T_RESET]) + struct.pack(">I", msg.cycle)
    raise TypeError(f"not a protocol message: {msg!r}")


def decode(data: bytes) -> Message:
    if len(data) < 6 or data[:4] != MAGIC:
        raise MalformedFrame("bad magic")
    if data[4] != VERSION:
        raise MalformedFrame(f"unsupported version {data[4]}")
    kind, body = data[5], data[6:]
    if kind == T_REQUEST:
        if not body:
            raise MalformedFrame("missing flags")
        flags, rest = body[0], body[1:]
        if flags & ~(FLAG_AUTH | FLAG_REGION):
            raise MalformedFrame(f"unknown flags {flags:#04x}")
        want = swatt.CHAL_LEN + (swatt.MAC_LEN if flags & FLAG_AUTH else 0) + (4 if flags & FLAG_REGION else 0)
        if len(rest) != want:
            raise MalformedFrame(f"request body is {len(rest)} bytes, expected {want}")
        chal, rest = rest[:swatt.CHAL_LEN], rest[swatt.CHAL_LEN:]
        token = None
        if flags & FLAG_AUTH:
            token, rest = rest[:swatt.MAC_LEN], rest[swatt.MAC_LEN:]
        region = struct.unpack(">HH", rest) if flags & FLAG_REGION else None
        return Request(bytes(chal), token and bytes(token), region)
    if kind == T_RESPONSE:
        if len(body) != 1 + swatt.MAC_LEN:
            raise MalformedFrame("response must carry status and a 32-byte mac")
        if body[0] not in (STATUS_OK, STATUS_REFUSED):
            raise MalformedFrame(f"unknown status {body[0]}")
        return Response(body[0], bytes(body[1:]))
    if kind == T_RESET:
        if len(body) != 4:
            raise MalformedFrame("reset notice carries a 4-byte cycle")
        return ResetNotice(struct.unpack(">I", body)[0])
    raise MalformedFrame(f"unknown message type {kind:#04x}")


# -- transports --------------------------------------------------------------

def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise MalformedFrame("frame too long")
    return struct.pack(">I", len(payload)) + payload


class MemoryPipe:
    """One direction of an in-process byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def sendall(self, data: bytes) -> None:
        self._buf += data

    def recv(self, n: int) -> bytes:
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out


def _read_exact(stream, n: int) -> bytes:
    out = bytearray()
    while len(out) < n:
        chunk = stream.recv(n - len(out))
        if not chunk:
            raise MalformedFrame(f"stream ended after {len(out)} of {n} bytes")
        out += chunk
    return bytes(out)


def send_message(stream, msg: Message) -> None:
    stream.sendall(frame(encode(msg)))


def recv_message(stream) -> Message:
    (n,) = struct.unpack(">I", _read_exact(stream, 4))
    if n > MAX_FRAME:
        raise MalformedFrame(f"frame length {n} exceeds {MAX_FRAME}")
    return decode(_read_exact(stream, n))


# -- prover ------------------------------------------------------------------

class Prover:
    """A simulated device. Each request boots a fresh machine over the same
    memory image; the counter survives between requests."""

    def __init__(self, layout: MemoryLayout, key: bytes, image: bytes, *,
                 monitors_enabled: bool = True, max_cycles: int = 500_000):
        if not image:
            raise ValueError("image must be non-empty")
        self.layout = layout.with_ar(layout.ar_min, len(image))
        problems = validate_layout(self.layout)
        if problems:
            raise ValueError("; ".join(problems))
        self.key = key
        self.image = bytes(image)
        self.ctr = bytes(swatt.CHAL_LEN)
        self.monitors_enabled = monitors_enabled
        self.max_cycles = max_cycles
        self.last_outcome: sim.AttestationOutcome | None = None

    @property
    def auth(self) -> bool:
        return self.layout.has_ctr

    def machine(self, layout: MemoryLayout) -> sim.Machine:
        m = sim.load(layout, key=self.key, ctr=self.ctr if layout.has_ctr else None,
                     monitors_enabled=self.monitors_enabled)
        m.write_bytes(self.layout.ar_min, self.image)
        return m

    def handle(self, request: Request) -> Response | ResetNotice:
        if request.auth != self.auth:
            return Response(STATUS_REFUSED)
        layout = self.layout
        if request.region is not None:
            if not self.auth:
                return Response(STATUS_REFUSED)  # region selection needs authentication
            lo, hi = request.region
            if lo > hi:
                return Response(STATUS_REFUSED)
            layout = replace(layout, ar_min=lo, ar_max=hi)
            if validate_layout(layout):
                return Response(STATUS_REFUSED)
        m = self.machine(layout)
        out = sim.invoke_attestation(m, request.chal, token=request.token, max_cycles=self.max_cycles)
        self.last_outcome = out
        if out.status == "reset":
            return ResetNotice(out.reset_cycle)
        if out.status != "ok":
            return Response(STATUS_REFUSED)
        if layout.has_ctr:
            self.ctr = m.read_bytes(layout.ctr_min, swatt.CHAL_LEN)
        return Response(STATUS_OK, out.mac)


def prover_handle(prover: Prover, data: bytes) -> bytes:
    """Decode one request, run it and encode the reply."""
    msg = decode(data)
    if not isinstance(msg, Request):
        raise MalformedFrame("prover only accepts requests")
    return encode(prover.handle(msg))


# -- verifier ----------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""


class Verifier:
    """Issues challenges and checks responses against the expected image.

    Challenges come from `secrets` unless a seed is given. In the
    authenticated variant each challenge is a 16-byte big-endian counter
    followed by 16 random bytes, so it always exceeds the previous one."""

    def __init__(self, key: bytes, expected_image: bytes, *, image_base: int,
                 auth: bool = False, seed: int | None = None):
        if len(key) != swatt.KEY_LEN:
            raise ValueError("key must be 64 bytes")
        self.key = key
        self.image = bytes(expected_image)
        self.image_base = image_base
        self.auth = auth
        self._rng = random.Random(seed) if seed is not None else None
        self.counter = 0
        self.last: Request | None = None

    def _random(self, n: int) -> bytes:
        return self._rng.randbytes(n) if self._rng is not None else secrets.token_bytes(n)

    def make_request(self, region: tuple[int, int] | None = None, reuse: bool = False) -> Request:
        if reuse:
            if self.last is None:
                raise ValueError("no earlier request to reuse")
            return self.last
        if self.auth:
            self.counter += 1
            chal = self.counter.to_bytes(16, "big") + self._random(16)
            req = Request(chal, swatt.auth_token(self.key, chal), region)
        else:
            if region is not None:
                raise ValueError("region selection needs the authenticated variant")
            req = Request(self._random(swatt.CHAL_LEN))
        self.last = req
        return req

    def expected_data(self, region: tuple[int, int] | None) -> bytes:
        if region is None:
            return self.image
        lo, hi = region[0] - self.image_base, region[1] - self.image_base
        if lo < 0 or hi >= len(self.image) or lo > hi:
            raise ValueError("region outside the expected image")
        return self.image[lo:hi + 1]

    def expected_mac(self, request: Request) -> bytes:
        data = self.expected_data(request.region)
        if request.token is None:
            return swatt.swatt_compute(self.key, request.chal, data)
        result = swatt.swatt_auth_compute(self.key, request.chal, request.token,
                                          swatt.AuthState(), data)
        if not isinstance(result, swatt.Accept):
            raise ValueError(f"verifier built an unusable request ({result.reason})")
        return result.mac

    def check(self, request: Request, reply: Message) -> Verdict:
        if isinstance(reply, ResetNotice):
            return Verdict(False, f"device reset at cycle {reply.cycle}")
        if not isinstance(reply, Response):
            return Verdict(False, "unexpected message")
        if reply.status != STATUS_OK:
            return Verdict(False, "prover refused")
        if not secrets.compare_digest(reply.mac, self.expected_mac(request)):
            return Verdict(False, "mac mismatch")
        return Verdict(True)


def verifier_check(verifier: Verifier, request: Request, data: bytes) -> Verdict:
    try:
        reply = decode(data)
    except MalformedFrame as e:
        return Verdict(False, f"malformed reply: {e}")
    return verifier.check(request, reply)


def attest_once(verifier: Verifier, prover: Prover, region: tuple[int, int] | None = None,
                reuse: bool = False) -> Verdict:
    """One request/response round over an in-memory stream pair."""
    to_prover, to_verifier = MemoryPipe(), MemoryPipe()
    req = verifier.make_request(region, reuse)
    send_message(to_prover, req)
    got = recv_message(to_prover)
    send_message(to_verifier, prover.handle(got))
    return verifier.check(req, recv_message(to_verifier))


# -- TCP ---------------------------------------------------------------------

def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def serve(prover: Prover, address: tuple[str, int], connections: int | None = 1,
          ready: Callable[[tuple[str, int]], None] | None = None) -> int:
    """Answer requests one connection at a time; returns the number served."""
    served = 0
    with socket.create_server(address) as srv:
        if ready is not None:
            ready(srv.getsockname()[:2])
        while connections is None or served < connections:
            conn, _ = srv.accept()
            with conn:
                try:
                    req = recv_message(conn)
                    if not isinstance(req, Request):
                        raise MalformedFrame("expected a request")
                    send_message(conn, prover.handle(req))
                except MalformedFrame:
                    pass
            served += 1
    return served


def query(address: tuple[str, int], request: Request, timeout: float = 30.0) -> Message:
    with socket.create_connection(address, timeout=timeout) as conn:
        send_message(conn, request)
        return recv_message(conn)


# -- attestation game --------------------------------------------------------

@dataclass(frozen=True)
class GameResult:
    adversary: str
    trials: int
    wins: int


GAME_ADVERSARIES = ("random-guess", "replay", "oracle-honest", "tamper-after")


def _game_setup(seed: int, ar_size: int):
    rng = random.Random(seed)
    key = rng.randbytes(swatt.KEY_LEN)
    layout = default_layout(False)
    image = rng.randbytes(ar_size)
    prover = Prover(layout, key, image)
    verifier = Verifier(key, image, image_base=layout.ar_min, seed=rng.getrandbits(64))
    return rng, prover, verifier


def ra_game(adversary: str, trials: int, seed: int = 0, pool: int = 32, ar_size: int = 64) -> GameResult:
    """Count how often `adversary` gets a fresh challenge accepted.

    random-guess answers with random bytes. replay first collects `pool`
    honest (challenge, MAC) pairs from the device and answers with the one
    matching the challenge if any, else any stored MAC. oracle-honest relays
    to the device and should always win; tamper-after changes one image
    byte and then relays, and should never win."""
    if adversary not in GAME_ADVERSARIES:
        raise ValueError(f"unknown adversary {adversary!r}")
    rng, prover, verifier = _game_setup(seed, ar_size)
    wins = 0
    if adversary == "replay":
        seen: dict[bytes, bytes] = {}
        for _ in range(pool):
            chal = rng.randbytes(swatt.CHAL_LEN)
            reply = prover.handle(Request(chal))
            seen[chal] = reply.mac
        stored = list(seen.values())
    if adversary == "tamper-after":
        image = bytearray(prover.image)
        image[rng.randrange(len(image))] ^= 1 << rng.randrange(8)
        prover.image = bytes(image)
    for _ in range(trials):
        req = verifier.make_request()
        if adversary == "random-guess":
            reply: Message = Response(STATUS_OK, rng.randbytes(swatt.MAC_LEN))
        elif adversary == "replay":
            reply = Response(STATUS_OK, seen.get(req.chal, rng.choice(stored)))
        else:
            reply = prover.handle(req)
        wins += verifier.check(req, reply).accepted
    return GameResult(adversary, trials, wins)
