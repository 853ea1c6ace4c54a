import random
import threading

import pytest
from hypothesis import given, strategies as st

from attestbench import protocol, swatt
from attestbench.layout import default_layout
from attestbench.protocol import MalformedFrame, Request, ResetNotice, Response
from attestbench.sim import DmaOp

KEY = bytes(range(1, 65))
IMAGE = bytes(random.Random(1).randbytes(200))

b32 = st.binary(min_size=32, max_size=32)
regions = st.tuples(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF))
messages = st.one_of(
    st.builds(Request, b32, st.none() | b32, st.none() | regions),
    st.builds(Response, st.sampled_from([0, 1]), b32),
    st.builds(ResetNotice, st.integers(0, 2**32 - 1)),
)


@given(messages)
def test_encode_decode_round_trip(msg):
    raw = protocol.encode(msg)
    assert protocol.decode(raw) == msg
    pipe = protocol.MemoryPipe()
    protocol.send_message(pipe, msg)
    assert protocol.recv_message(pipe) == msg


def test_request_sizes():
    chal = bytes(32)
    assert len(protocol.encode(Request(chal))) == 39
    assert len(protocol.encode(Request(chal, bytes(32)))) == 71
    assert len(protocol.encode(Request(chal, bytes(32), (1, 2)))) == 75
    assert protocol.encode(Request(chal))[:6] == b"VRSD\x01\x01"


@pytest.mark.parametrize("raw, msg", [
    (b"XXXX\x01\x01", "magic"),
    (b"VRSD\x02\x01" + bytes(33), "version"),
    (b"VRSD\x01\x09", "type"),
    (b"VRSD\x01\x01\x80" + bytes(32), "flags"),
    (b"VRSD\x01\x01\x00" + bytes(31), "expected 32"),
    (b"VRSD\x01\x02\x05" + bytes(32), "status"),
    (b"VRSD\x01\x03\x00", "4-byte"),
])
def test_malformed(raw, msg):
    with pytest.raises(MalformedFrame, match=msg):
        protocol.decode(raw)


def test_oversized_and_truncated_frames():
    with pytest.raises(MalformedFrame):
        protocol.frame(bytes(protocol.MAX_FRAME + 1))
    pipe = protocol.MemoryPipe()
    pipe.sendall((5000).to_bytes(4, "big"))
    with pytest.raises(MalformedFrame, match="exceeds"):
        protocol.recv_message(pipe)
    pipe = protocol.MemoryPipe()
    pipe.sendall((10).to_bytes(4, "big") + b"VRSD")
    with pytest.raises(MalformedFrame, match="ended"):
        protocol.recv_message(pipe)


def parties(auth=False, seed=3):
    lay = default_layout(auth)
    return protocol.Prover(lay, KEY, IMAGE), protocol.Verifier(KEY, IMAGE, image_base=lay.ar_min, auth=auth, seed=seed)


def test_round_trip_accepts():
    prover, verifier = parties()
    assert protocol.attest_once(verifier, prover).accepted


def test_prover_handle_bytes():
    prover, verifier = parties()
    req = verifier.make_request()
    assert protocol.verifier_check(verifier, req, protocol.prover_handle(prover, protocol.encode(req))).accepted
    assert "malformed" in protocol.verifier_check(verifier, req, b"junk").reason


def test_wrong_key_rejected():
    lay = default_layout()
    prover = protocol.Prover(lay, bytes(64), IMAGE)
    verifier = protocol.Verifier(KEY, IMAGE, image_base=lay.ar_min, seed=1)
    assert protocol.attest_once(verifier, prover).reason == "mac mismatch"


def test_auth_round_and_replay():
    prover, verifier = parties(auth=True)
    assert protocol.attest_once(verifier, prover).accepted
    assert protocol.attest_once(verifier, prover).accepted
    v = protocol.attest_once(verifier, prover, reuse=True)
    assert not v.accepted and v.reason == "prover refused"


def test_auth_region():
    prover, verifier = parties(auth=True)
    lo = default_layout(True).ar_min + 10
    assert protocol.attest_once(verifier, prover, region=(lo, lo + 49)).accepted


def test_region_needs_auth():
    prover, verifier = parties()
    with pytest.raises(ValueError):
        verifier.make_request(region=(0x4000, 0x4010))
    # a hand-built plain region request is refused by the prover as well
    assert prover.handle(Request(bytes(32), None, (0x4000, 0x4010))) == Response(protocol.STATUS_REFUSED)


def test_mode_mismatch_refused():
    prover, _ = parties(auth=True)
    assert prover.handle(Request(bytes(32))).status == protocol.STATUS_REFUSED


def test_verifier_challenges_are_increasing_and_seeded():
    _, a = parties(auth=True, seed=9)
    _, b = parties(auth=True, seed=9)
    chals = [a.make_request().chal for _ in range(5)]
    assert chals == sorted(chals) and len(set(chals)) == 5
    assert chals[0] == b.make_request().chal
    _, plain = parties(seed=None)
    assert plain.make_request().chal != plain.make_request().chal


class DmaProver(protocol.Prover):
    """Device whose DMA engine reads KR shortly after boot."""

    def machine(self, layout):
        m = super().machine(layout)
        m.schedule_dma(5, DmaOp(layout.k_min))
        return m


def test_reset_notice():
    lay = default_layout()
    prover = DmaProver(lay, KEY, IMAGE)
    verifier = protocol.Verifier(KEY, IMAGE, image_base=lay.ar_min, seed=1)
    req = verifier.make_request()
    reply = prover.handle(req)
    assert reply == ResetNotice(5)
    assert not verifier.check(req, reply).accepted


def test_tcp_serve_and_query():
    prover, verifier = parties()
    ready = threading.Event()
    where = {}

    def on_ready(addr):
        where["addr"] = addr
        ready.set()

    t = threading.Thread(target=protocol.serve, args=(prover, ("127.0.0.1", 0), 2, on_ready), daemon=True)
    t.start()
    assert ready.wait(10)
    for _ in range(2):
        req = verifier.make_request()
        assert verifier.check(req, protocol.query(where["addr"], req)).accepted
    t.join(10)
    assert not t.is_alive()


@pytest.mark.parametrize("text, want", [("127.0.0.1:80", ("127.0.0.1", 80)), (":9", ("127.0.0.1", 9))])
def test_parse_address(text, want):
    assert protocol.parse_address(text) == want


def test_parse_address_error():
    with pytest.raises(ValueError):
        protocol.parse_address("localhost")


@pytest.mark.parametrize("adv, all_win", [("random-guess", False), ("replay", False),
                                          ("tamper-after", False), ("oracle-honest", True)])
def test_game(adv, all_win):
    res = protocol.ra_game(adv, 30, seed=2)
    assert res.wins == (30 if all_win else 0)


def test_game_unknown_adversary():
    with pytest.raises(ValueError):
        protocol.ra_game("psychic", 1)


def test_expected_mac_is_the_nested_construction():
    _, verifier = parties()
    req = verifier.make_request()
    inner = swatt.hmac_sha256_reference(KEY, req.chal)
    assert verifier.expected_mac(req) == swatt.hmac_sha256_reference(inner, IMAGE)
