import pytest
from hypothesis import given, strategies as st

from attestbench.isa import INSTR_SIZE, AssemblyError, Instr, Op, assemble

instrs = st.builds(Instr, st.sampled_from(list(Op)), st.integers(0, 15), st.integers(0, 15), st.integers(0, 0xFFFF))


@given(instrs)
def test_encode_decode_round_trip(ins):
    raw = ins.encode()
    assert len(raw) == INSTR_SIZE
    assert Instr.decode(raw) == ins


def test_illegal_opcode():
    with pytest.raises(ValueError, match="illegal opcode"):
        Instr.decode(bytes([0xFF, 0, 0, 0]))


def test_labels_and_symbols():
    prog = assemble("""
        .org 0xE000
    start:
        MOVI r1, @buf+2   ; comment
        JMP start         # other comment
        HALT
    """, symbols={"buf": 0x300})
    assert prog.entry == 0xE000 and prog.size == 12
    assert prog.instructions[0] == Instr(Op.MOVI, 1, 0, 0x302)
    assert prog.instructions[1].imm == prog.label("start") == 0xE000


def test_forward_reference():
    prog = assemble("JZ done\nNOP\ndone: HALT", base=0x100)
    assert prog.instructions[0].imm == 0x108


@given(st.lists(instrs, min_size=1, max_size=20))
def test_text_reassembles(lst):
    from attestbench.isa import Program, _SHAPES

    # text() only prints operands the shape uses, so normalise the rest to zero
    norm = []
    for i in lst:
        s = _SHAPES[i.op]
        a = i.a if "r" in s else 0
        b = i.b if s == "rr" else 0
        imm = i.imm if "i" in s else 0
        norm.append(Instr(i.op, a, b, imm))
    prog = Program(0x4000, tuple(norm))
    again = assemble(prog.text())
    assert again.instructions == prog.instructions and again.base == prog.base


@pytest.mark.parametrize("text, line, msg", [
    ("NOP\nFLY r1", 2, "unknown mnemonic"),
    ("MOVI r1", 1, "operand"),
    ("MOV r1, r16", 1, "register"),
    ("MOVI r1, 0x10000", 1, "16 bits"),
    ("JMP nowhere", 1, "unknown symbol"),
    ("NOP\n.org 5", 2, ".org"),
])
def test_assembly_errors(text, line, msg):
    with pytest.raises(AssemblyError, match=msg) as e:
        assemble(text, base=0)
    assert e.value.line == line


def test_missing_base():
    with pytest.raises(AssemblyError, match="base"):
        assemble("NOP")
