import pytest
from hypothesis import given, strategies as st

from attestbench import hwmod
from attestbench.hwmod import (
    ATOMICITY,
    AUTHCTR,
    KINDS,
    RESET,
    RUN,
    ConfigurationError,
    atomicity_step,
    audit,
    authctr_step,
    build_monitor,
    composed_monitor,
    composed_step,
    dma_step,
    keyac_step,
    stack_step,
)
from attestbench.layout import ALPHABET_SIZE, SYMBOL_ATOMS, AbstractSymbol, CycleSignals, concretize, default_layout

symbols = st.integers(0, ALPHABET_SIZE - 1)
STEPS = {
    hwmod.KEYAC: keyac_step,
    hwmod.ATOMICITY: atomicity_step,
    hwmod.STACK: stack_step,
    hwmod.DMA: dma_step,
    hwmod.AUTHCTR: authctr_step,
}


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("auth", [False, True])
def test_machines_are_total_and_deterministic(kind, auth):
    assert audit(build_monitor(kind, auth)) == []


def test_run_reset_shape():
    m = build_monitor(hwmod.KEYAC)
    assert m.states == (RUN, RESET) and m.initial == RUN


def test_atomicity_has_five_states():
    assert build_monitor(ATOMICITY).states == ("notCR", "fstCR", "midCR", "lastCR", "Reset")


def test_keyac_examples():
    lay = default_layout()
    read_key = CycleSignals(pc=0xE000, r_en=True, d_addr=lay.k_min)
    assert keyac_step(RUN, read_key, lay) == (RESET, 1)
    inside = CycleSignals(pc=lay.cr_min + 5, r_en=True, d_addr=lay.k_min)
    assert keyac_step(RUN, inside, lay) == (RUN, 0)
    # reset stays high until PC = 0, then drops
    assert keyac_step(RESET, CycleSignals(pc=0x1234), lay) == (RESET, 1)
    assert keyac_step(RESET, CycleSignals(pc=0), lay) == (RUN, 0)
    # a fresh violation at PC = 0 keeps the line high
    assert keyac_step(RESET, CycleSignals(pc=0, r_en=True, d_addr=lay.k_min), lay) == (RESET, 1)


def test_atomicity_walk():
    lay = default_layout()
    s = "notCR"
    for pc, want in [(lay.cr_min, "fstCR"), (lay.cr_min + 1, "midCR"), (lay.cr_max, "lastCR"), (0xE000, "notCR")]:
        s, out = atomicity_step(s, CycleSignals(pc=pc), lay)
        assert (s, out) == (want, 0)
    assert atomicity_step("notCR", CycleSignals(pc=lay.cr_min + 3), lay) == (RESET, 1)
    assert atomicity_step("midCR", CycleSignals(pc=lay.cr_min + 3, irq=True), lay) == (RESET, 1)


def test_authctr_needs_ctr():
    lay = default_layout()
    with pytest.raises(ConfigurationError):
        authctr_step(RUN, CycleSignals(pc=0), lay)


@given(st.sampled_from(KINDS), st.lists(symbols, max_size=12))
def test_step_functions_match_tables(kind, syms):
    lay = default_layout(True)
    machine = build_monitor(kind, True)
    nxt, out = machine.table()
    step = STEPS[kind]
    s = machine.initial
    for sym in syms:
        sig = concretize(AbstractSymbol.from_index(sym), lay)
        d, o = step(s, sig, lay)
        i = machine.states.index(s)
        assert machine.states[nxt[i, sym]] == d and out[i, sym] == o
        s = d


@given(st.booleans(), st.lists(symbols, max_size=16))
def test_composed_table_matches_member_stepping(auth, syms):
    lay = default_layout(auth)
    mon = composed_monitor(lay)
    table = mon.table()
    idx = table.initial
    state = mon.initial()
    for sym in syms:
        if not auth and (AbstractSymbol.from_index(sym).daddr_class.name == "CTR"
                         or AbstractSymbol.from_index(sym).dmaaddr_class.name == "CTR"):
            continue
        k = idx * ALPHABET_SIZE + sym
        state, reset = composed_step(state, concretize(AbstractSymbol.from_index(sym), lay), lay)
        assert table.out[k] == reset
        idx = int(table.next[k])
        assert table.decode(idx) == state
        assert table.encode(state) == idx


@given(st.sampled_from(KINDS), symbols)
def test_output_is_one_exactly_when_entering_reset(kind, sym):
    m = build_monitor(kind, True)
    for s in m.states:
        d, o = m.step(s, SYMBOL_ATOMS[sym])
        assert o == (d == m.reset_state)


def test_composition_sizes():
    assert composed_monitor(default_layout(False)).table().n_states == 5 * 2 * 2 * 2
    assert composed_monitor(default_layout(True)).table().n_states == 5 * 2 * 2 * 2 * 2
    assert AUTHCTR not in composed_monitor(default_layout(False)).kinds
