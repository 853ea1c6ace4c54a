"""A small 16-bit instruction set and its text assembler.

Every instruction is four bytes: opcode, register pair (a << 4 | b), and a
little-endian 16-bit immediate. r0 is the program counter and r1 the stack
pointer, as on the MSP430. Data loads and stores move one byte.

Opcode table (operands in assembler order):

    NOP                 no memory access
    HALT                stop the machine
    MOVI  ra, imm       ra := imm
    MOV   ra, rb        ra := rb
    LOAD  ra, addr      ra := mem[addr]            (R_en, D_addr = addr)
    STORE ra, addr      mem[addr] := ra & 0xff     (W_en, D_addr = addr)
    ADD   ra, rb        ra := ra + rb, sets Z
    SUB   ra, rb        ra := ra - rb, sets Z
    CMP   ra, rb        Z := (ra == rb)
    JMP   addr          pc := addr
    JZ    addr          pc := addr if Z
    CALL  addr          push pc + 4; pc := addr    (W_en, D_addr = sp - 2)
    RET                 pop pc                     (R_en, D_addr = sp)
    PUSH  ra            push ra                    (W_en, D_addr = sp - 2)
    POP   ra            pop ra                     (R_en, D_addr = sp)
    EINT / DINT         set / clear the interrupt-enable flag
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping


class Op(enum.IntEnum):
    NOP = 0
    HALT = 1
    MOVI = 2
    MOV = 3
    LOAD = 4
    STORE = 5
    ADD = 6
    SUB = 7
    CMP = 8
    JMP = 9
    JZ = 10
    CALL = 11
    RET = 12
    PUSH = 13
    POP = 14
    EINT = 15
    DINT = 16


INSTR_SIZE = 4

# operand shapes: r = register, i = immediate/address
_SHAPES = {
    Op.NOP: "", Op.HALT: "", Op.RET: "", Op.EINT: "", Op.DINT: "",
    Op.MOVI: "ri", Op.LOAD: "ri", Op.STORE: "ri",
    Op.MOV: "rr", Op.ADD: "rr", Op.SUB: "rr", Op.CMP: "rr",
    Op.JMP: "i", Op.JZ: "i", Op.CALL: "i",
    Op.PUSH: "r", Op.POP: "r",
}


class AssemblyError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Instr:
    op: Op
    a: int = 0
    b: int = 0
    imm: int = 0

    def encode(self) -> bytes:
        return bytes([int(self.op), (self.a & 15) << 4 | (self.b & 15),
                      self.imm & 0xFF, (self.imm >> 8) & 0xFF])

    @classmethod
    def decode(cls, raw: bytes) -> "Instr":
        try:
            op = Op(raw[0])
        except ValueError:
            raise ValueError(f"illegal opcode {raw[0]:#04x}") from None
        return cls(op, raw[1] >> 4, raw[1] & 15, raw[2] | raw[3] << 8)

    def text(self) -> str:
        shape = _SHAPES[self.op]
        if shape == "":
            return self.op.name
        if shape == "r":
            return f"{self.op.name} r{self.a}"
        if shape == "i":
            return f"{self.op.name} {self.imm:#06x}"
        if shape == "rr":
            return f"{self.op.name} r{self.a}, r{self.b}"
        return f"{self.op.name} r{self.a}, {self.imm:#06x}"


@dataclass(frozen=True)
class Program:
    base: int
    instructions: tuple[Instr, ...]
    labels: tuple[tuple[str, int], ...] = ()

    @property
    def entry(self) -> int:
        return self.base

    @property
    def size(self) -> int:
        return INSTR_SIZE * len(self.instructions)

    def image(self) -> bytes:
        return b"".join(i.encode() for i in self.instructions)

    def label(self, name: str) -> int:
        for n, addr in self.labels:
            if n == name:
                return addr
        raise KeyError(name)

    def text(self) -> str:
        names = {addr: n for n, addr in self.labels}
        lines = [f".org {self.base:#06x}"]
        for k, ins in enumerate(self.instructions):
            addr = self.base + INSTR_SIZE * k
            if addr in names:
                lines.append(f"{names[addr]}:")
            lines.append(f"    {ins.text()}")
        return "\n".join(lines) + "\n"


_REG = re.compile(r"r(\d{1,2})$", re.IGNORECASE)


def _value(tok: str, symbols: Mapping[str, int], line: int) -> int:
    tok = tok.strip()
    total = 0
    for sign, term in re.findall(r"([+-]?)\s*([^+-]+)", tok):
        term = term.strip()
        key = term[1:] if term.startswith("@") else term
        if key in symbols:
            v = symbols[key]
        else:
            try:
                v = int(term, 0)
            except ValueError:
                raise AssemblyError(f"unknown symbol or number {term!r}", line) from None
        total += -v if sign == "-" else v
    if not 0 <= total <= 0xFFFF:
        raise AssemblyError(f"value {total} outside 16 bits", line)
    return total


def _reg(tok: str, line: int) -> int:
    m = _REG.match(tok.strip())
    if not m or int(m.group(1)) > 15:
        raise AssemblyError(f"expected register r0..r15, got {tok!r}", line)
    return int(m.group(1))


def assemble(text: str, base: int | None = None, symbols: Mapping[str, int] | None = None) -> Program:
    """Two-pass assembler. `;` and `#` start comments; `.org addr` sets the base.

    Operands may name labels, entries of `symbols` (optionally prefixed `@`),
    and sums such as `@mac_addr+3`.
    """
    syms = dict(symbols or {})
    org = base
    pending: list[tuple[int, str, list[str]]] = []
    labels: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = re.split(r"[;#]", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        if line.lower().startswith(".org"):
            if pending:
                raise AssemblyError(".org must come before the first instruction", lineno)
            org = _value(line[4:], syms, lineno)
            continue
        while True:
            m = re.match(r"([A-Za-z_.][A-Za-z0-9_.]*):\s*(.*)$", line)
            if not m:
                break
            labels[m.group(1)] = len(pending)
            line = m.group(2).strip()
        if not line:
            continue
        mnemonic, _, rest = line.partition(" ")
        args = [a.strip() for a in rest.split(",")] if rest.strip() else []
        pending.append((lineno, mnemonic.upper(), args))
    if org is None:
        raise AssemblyError("no base address (use .org or pass base)", 0)
    label_addr = {n: org + INSTR_SIZE * k for n, k in labels.items()}
    syms.update(label_addr)
    out = []
    for lineno, mnemonic, args in pending:
        try:
            op = Op[mnemonic]
        except KeyError:
            raise AssemblyError(f"unknown mnemonic {mnemonic!r}", lineno) from None
        shape = _SHAPES[op]
        if len(args) != len(shape):
            raise AssemblyError(f"{mnemonic} takes {len(shape)} operand(s)", lineno)
        a = b = imm = 0
        if shape == "r":
            a = _reg(args[0], lineno)
        elif shape == "i":
            imm = _value(args[0], syms, lineno)
        elif shape == "rr":
            a, b = _reg(args[0], lineno), _reg(args[1], lineno)
        elif shape == "ri":
            a, imm = _reg(args[0], lineno), _value(args[1], syms, lineno)
        out.append(Instr(op, a, b, imm))
    return Program(org, tuple(out), tuple(sorted(label_addr.items(), key=lambda kv: kv[1])))
