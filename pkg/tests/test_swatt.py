import pytest
from hypothesis import given, strategies as st

from attestbench import swatt
from attestbench.swatt import Accept, AuthState, Reject

from rfc4231 import VECTORS


@pytest.mark.parametrize("v", VECTORS, ids=lambda v: f"case{v.case}")
def test_rfc4231_both_routes(v):
    assert swatt.hmac_sha256(v.key, v.data)[: v.length] == v.mac
    assert swatt.hmac_sha256_reference(v.key, v.data)[: v.length] == v.mac


@given(st.binary(max_size=200), st.binary(max_size=300))
def test_stdlib_matches_manual_pad(key, msg):
    assert swatt.hmac_sha256(key, msg) == swatt.hmac_sha256_reference(key, msg)


@given(st.binary(min_size=64, max_size=64), st.binary(min_size=32, max_size=32), st.binary(min_size=1, max_size=256))
def test_measurement_is_two_nested_hmacs(key, chal, data):
    inner = swatt.hmac_sha256_reference(key, chal)
    assert swatt.swatt_compute(key, chal, data) == swatt.hmac_sha256_reference(inner, data)


@pytest.mark.parametrize("key, chal", [(bytes(63), bytes(32)), (bytes(64), bytes(31)), (bytes(65), bytes(32))])
def test_length_checks(key, chal):
    with pytest.raises(ValueError):
        swatt.kdf(key, chal)


def test_empty_region_rejected():
    with pytest.raises(ValueError):
        swatt.swatt_compute(bytes(64), bytes(32), b"")


KEY = bytes(range(64))


def chal_of(n: int) -> bytes:
    return n.to_bytes(32, "big")


def test_auth_accepts_fresh_and_advances_counter():
    chal = chal_of(5)
    res = swatt.swatt_auth_compute(KEY, chal, swatt.auth_token(KEY, chal), AuthState(), b"data")
    assert isinstance(res, Accept) and res.new_state.ctr == chal
    derived = swatt.hmac_sha256(KEY, swatt.hmac_sha256(KEY, chal))
    assert res.mac == swatt.hmac_sha256_reference(derived, b"data")


@pytest.mark.parametrize("ctr, chal", [(5, 5), (6, 5)])
def test_auth_rejects_stale(ctr, chal):
    c = chal_of(chal)
    res = swatt.swatt_auth_compute(KEY, c, swatt.auth_token(KEY, c), AuthState(chal_of(ctr)), b"x")
    assert res == Reject("stale")


def test_auth_rejects_forged_token():
    c = chal_of(9)
    res = swatt.swatt_auth_compute(KEY, c, bytes(32), AuthState(), b"x")
    assert res == Reject("bad-auth")


@given(st.lists(st.integers(1, 2**64), min_size=1, max_size=8))
def test_counter_is_monotone(values):
    # accept exactly the challenges that exceed the running maximum
    state, highest = AuthState(), 0
    for v in values:
        c = chal_of(v)
        res = swatt.swatt_auth_compute(KEY, c, swatt.auth_token(KEY, c), state, b"x")
        assert isinstance(res, Accept) == (v > highest)
        if isinstance(res, Accept):
            state, highest = res.new_state, v


def test_counter_size_checked():
    with pytest.raises(ValueError):
        AuthState(bytes(31))
