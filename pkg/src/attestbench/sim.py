"""Cycle-level MCU simulator with the composed hardware monitor in the loop.

One `step` is one clock cycle. The trusted measurement routine living in CR is
not interpreted from its ROM bytes; instead a Python generator issues one
memory operation per cycle (reads of MR, KR and AR, writes to XS and MR) with
PC walking through CR. The signals it emits are what the monitors see, and the
MAC it writes is computed by `swatt` from the bytes it actually read.

Reset handling: on the cycle the monitor asserts reset, that cycle's CPU and
DMA effects are dropped. The next cycle holds PC and clears r1..r15; the
cycle after that starts at PC = 0 with every register zero.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Generator, Iterable

from . import swatt
from .hwmod import ComposedMonitor, composed_monitor, composed_step
from .isa import INSTR_SIZE, Instr, Op, Program, assemble
from .layout import ALPHABET_SIZE, CycleSignals, MemoryLayout, classifier, in_region, validate_layout

NUM_REGS = 16
PC, SP = 0, 1

BOOT_ADDR = 0x0000
ISR_ADDR = 0x0010
CHAL_BUF = 0x0300
TOKEN_BUF = 0x0340
RESP_BUF = 0x0380
STACK_TOP = 0x3000
WRAPPER_BASE = 0xD000
PROGRAM_BASE = 0xE000
# Untrusted scratch byte used by the "write-app" script fault.
APP_SCRATCH = 0x2100

SCRIPT_FAULTS = ("early-exit", "write-app")


class LoadError(ValueError):
    pass


class MachineHalted(RuntimeError):
    pass


@dataclass(frozen=True)
class DmaOp:
    addr: int
    write: bool = False
    value: int = 0


@dataclass(frozen=True)
class TraceRecord:
    cycle: int
    signals: CycleSignals
    reset: int
    tags: tuple[str, ...]
    regs: tuple[int, ...]  # register file at the start of the cycle


@dataclass(frozen=True)
class Trace:
    layout: MemoryLayout
    records: tuple[TraceRecord, ...]
    # AR contents at the first cycle of each CR span and the first cycle after it
    snapshots: tuple[tuple[int, bytes], ...] = ()
    monitors_enabled: bool = True

    def __len__(self) -> int:
        return len(self.records)

    def snapshot(self, cycle: int) -> bytes | None:
        for c, data in self.snapshots:
            if c == cycle:
                return data
        return None

    def tagged(self, tag: str) -> list[int]:
        return [r.cycle for r in self.records if any(t == tag or t.startswith(tag + ":") for t in r.tags)]

    def first_reset(self) -> int | None:
        for r in self.records:
            if r.reset:
                return r.cycle
        return None


def default_swatt_image(layout: MemoryLayout) -> bytes:
    """Deterministic filler for CR; the routine itself is modelled, not decoded."""
    size = layout.cr_max - layout.cr_min + 1
    out = bytearray()
    block = b"trusted-rom"
    while len(out) < size:
        block = hashlib.sha256(block).digest()
        out += block
    return bytes(out[:size])


# script operations: ("r", addr) -> value, ("w", addr, value), ("ret", early)
ScriptOp = tuple
Script = Generator[ScriptOp, int | None, None]


def _xs(layout: MemoryLayout, offset: int) -> int:
    return layout.xs_min + offset % (layout.xs_max - layout.xs_min + 1)


def plain_script(layout: MemoryLayout, fault: str | None = None) -> Script:
    lay = layout
    chal = bytearray()
    for i in range(swatt.CHAL_LEN):
        chal.append((yield ("r", lay.mr_min + i)))
    key = bytearray()
    for i in range(swatt.KEY_LEN):
        key.append((yield ("r", lay.k_min + i)))
    for i, b in enumerate(key):
        yield ("w", _xs(lay, i), b)
    derived = swatt.kdf(bytes(key), bytes(chal))
    for i, b in enumerate(derived):
        yield ("w", _xs(lay, swatt.KEY_LEN + i), b)
    if fault == "write-app":
        yield ("w", APP_SCRATCH, 0xAA)
    if fault == "early-exit":
        yield ("ret", True)
        return
    data = bytearray()
    for a in range(lay.ar_min, lay.ar_max + 1):
        data.append((yield ("r", a)))
    mac = swatt.swatt_compute(bytes(key), bytes(chal), bytes(data))
    for i, b in enumerate(mac):
        yield ("w", lay.mr_min + i, b)
    yield ("ret", False)


def auth_script(layout: MemoryLayout, fault: str | None = None) -> Script:
    lay = layout
    n = swatt.CHAL_LEN
    chal = bytearray()
    for i in range(n):
        chal.append((yield ("r", lay.mr_min + i)))
    # keep the challenge on the exclusive stack; MR is overwritten by the MAC
    for i, b in enumerate(chal):
        yield ("w", _xs(lay, i), b)
    ctr = bytearray()
    for i in range(n):
        ctr.append((yield ("r", lay.ctr_min + i)))
    if not bytes(chal) > bytes(ctr):
        yield ("ret", False, "swatt-reject:stale")
        return
    key = bytearray()
    for i in range(swatt.KEY_LEN):
        key.append((yield ("r", lay.k_min + i)))
    for i, b in enumerate(key):
        yield ("w", _xs(lay, n + i), b)
    verification = swatt.hmac_sha256(bytes(key), bytes(chal))
    for i, b in enumerate(verification):
        yield ("w", _xs(lay, n + swatt.KEY_LEN + i), b)
    token = bytearray()
    for i in range(swatt.MAC_LEN):
        token.append((yield ("r", lay.auth_addr + i)))
    if bytes(token) != verification:
        yield ("ret", False, "swatt-reject:bad-auth")
        return
    derived = swatt.hmac_sha256(bytes(key), verification)
    for i, b in enumerate(derived):
        yield ("w", _xs(lay, 2 * n + swatt.KEY_LEN + i), b)
    if fault == "write-app":
        yield ("w", APP_SCRATCH, 0xAA)
    if fault == "early-exit":
        yield ("ret", True)
        return
    data = bytearray()
    for a in range(lay.ar_min, lay.ar_max + 1):
        data.append((yield ("r", a)))
    result = swatt.swatt_auth_compute(bytes(key), bytes(chal), bytes(token),
                                      swatt.AuthState(bytes(ctr)), bytes(data))
    assert isinstance(result, swatt.Accept)
    for i, b in enumerate(result.mac):
        yield ("w", lay.mr_min + i, b)
    for i in range(n):
        b = yield ("r", _xs(lay, i))
        yield ("w", lay.ctr_min + i, b)
    yield ("ret", False)


class Machine:
    """Memory, registers, monitor state and the cycle trace recorded so far."""

    def __init__(self, layout: MemoryLayout, *, monitors_enabled: bool = True,
                 monitor: ComposedMonitor | None = None, script_fault: str | None = None):
        if script_fault is not None and script_fault not in SCRIPT_FAULTS:
            raise ValueError(f"unknown script fault {script_fault!r}")
        self.layout = layout
        self.mem = bytearray(0x10000)
        self.rom = bytearray(0x10000)  # 1 = write-protected byte
        self.regs = [0] * NUM_REGS
        self.zero = False
        self.gie = False
        self.halted = False
        self.cycle = 0
        self.entry = PROGRAM_BASE
        self.monitors_enabled = monitors_enabled
        self.monitor = monitor or composed_monitor(layout)
        table = self.monitor.table()
        self._next = table.next.tolist()
        self._out = table.out.tolist()
        self.monitor_state = table.initial
        self._classify = classifier(layout).symbol_index
        self.script_fault = script_fault
        self.irq_schedule: set[int] = set()
        self.dma_schedule: dict[int, DmaOp] = {}
        self.records: list[TraceRecord] = []
        self.snapshots: list[tuple[int, bytes]] = []
        self._script: Script | None = None
        self._op: ScriptOp | None = None
        self._op_index = 0
        self._reset_phase = 0
        self._prev_in_cr = False

    # -- setup -------------------------------------------------------------

    def write_bytes(self, addr: int, data: bytes) -> None:
        """Host-side memory poke (no cycle, no monitor involvement)."""
        for i, b in enumerate(data):
            self.mem[(addr + i) & 0xFFFF] = b

    def read_bytes(self, addr: int, n: int) -> bytes:
        return bytes(self.mem[(addr + i) & 0xFFFF] for i in range(n))

    def schedule_irq(self, cycles: Iterable[int]) -> None:
        self.irq_schedule.update(cycles)

    def schedule_dma(self, cycle: int, op: DmaOp) -> None:
        self.dma_schedule[cycle] = op

    def set_pc(self, pc: int) -> None:
        self.regs[PC] = pc & 0xFFFF

    def in_cr(self, pc: int) -> bool:
        return self.layout.cr_min <= pc <= self.layout.cr_max

    def trace(self) -> Trace:
        return Trace(self.layout, tuple(self.records), tuple(self.snapshots), self.monitors_enabled)

    # -- execution ---------------------------------------------------------

    def _ar_bytes(self) -> bytes:
        return bytes(self.mem[self.layout.ar_min:self.layout.ar_max + 1])

    def _store(self, addr: int, value: int, tags: list[str]) -> None:
        addr &= 0xFFFF
        if self.rom[addr]:
            tags.append("rom-write-dropped")
        else:
            self.mem[addr] = value & 0xFF

    def _push_word(self, value: int, tags: list[str]) -> None:
        sp = (self.regs[SP] - 2) & 0xFFFF
        self._store(sp, value, tags)
        self._store(sp + 1, value >> 8, tags)
        self.regs[SP] = sp

    def _pop_word(self) -> int:
        sp = self.regs[SP]
        value = self.mem[sp] | self.mem[(sp + 1) & 0xFFFF] << 8
        self.regs[SP] = (sp + 2) & 0xFFFF
        return value

    def _script_pc(self) -> int:
        lay = self.layout
        op = self._op
        if op[0] == "ret" and not op[1]:
            return lay.cr_max
        return min(lay.cr_min + self._op_index, lay.cr_max - 1)

    def _advance_script(self, value: int | None, tags: list[str]) -> None:
        try:
            self._op = self._script.send(value)
        except StopIteration:
            self._script = None
            self._op = None
            self.halted = True
            tags.append("fault:script-ended-without-ret")
            return
        self._op_index += 1
        self.regs[PC] = self._script_pc()

    def step(self) -> TraceRecord:
        if self.halted:
            raise MachineHalted(f"machine halted at cycle {self.cycle}")
        t = self.cycle
        tags: list[str] = []
        lay = self.layout
        dma = self.dma_schedule.get(t)

        if self._reset_phase == 1:
            for r in range(1, NUM_REGS):
                self.regs[r] = 0
            self.zero = False
            self._reset_phase = 2
            held = True
        elif self._reset_phase == 2:
            self.regs = [0] * NUM_REGS
            self._reset_phase = 0
            held = False
        else:
            held = False
        regs = tuple(self.regs)
        pc = self.regs[PC]
        in_cr = self.in_cr(pc)
        if in_cr != self._prev_in_cr:
            self.snapshots.append((t, self._ar_bytes()))
            tags.append("cr-enter" if in_cr else "cr-exit")
        self._prev_in_cr = in_cr

        irq = (t in self.irq_schedule) and self.gie and not held
        r_en = w_en = False
        d_addr = 0
        effect = None
        instr: Instr | None = None

        if held:
            effect = "hold"
        elif irq:
            w_en, d_addr = True, (self.regs[SP] - 2) & 0xFFFF
            effect = "irq"
        elif self._script is not None or (pc == lay.cr_min and self._script is None):
            if self._script is None:
                factory = auth_script if lay.has_ctr else plain_script
                self._script = factory(lay, self.script_fault)
                self._op = next(self._script)
                self._op_index = 0
                tags.append("swatt-start")
                pc = self._script_pc()
                self.regs[PC] = pc
            op = self._op
            if op[0] == "r":
                r_en, d_addr = True, op[1]
            elif op[0] == "w":
                w_en, d_addr = True, op[1]
            else:
                r_en, d_addr = True, self.regs[SP]
            effect = "script"
        elif in_cr:
            effect = "cr-mid-entry"
        else:
            raw = bytes(self.mem[(pc + i) & 0xFFFF] for i in range(INSTR_SIZE))
            try:
                instr = Instr.decode(raw)
            except ValueError:
                effect = "illegal"
            else:
                effect = "instr"
                op = instr.op
                if op is Op.LOAD:
                    r_en, d_addr = True, instr.imm
                elif op is Op.STORE:
                    w_en, d_addr = True, instr.imm
                elif op in (Op.CALL, Op.PUSH):
                    w_en, d_addr = True, (self.regs[SP] - 2) & 0xFFFF
                elif op in (Op.RET, Op.POP):
                    r_en, d_addr = True, self.regs[SP]

        signals = CycleSignals(pc, irq, r_en, w_en, d_addr,
                               dma is not None, dma.addr if dma is not None else 0)
        reset = 0
        if self.monitors_enabled:
            k = self.monitor_state * ALPHABET_SIZE + self._classify(signals)
            reset = self._out[k]
            self.monitor_state = self._next[k]

        if reset:
            tags.append("reset")
            if self._script is not None:
                self._script.close()
                self._script = None
                self._op = None
                tags.append("swatt-aborted")
            self.gie = False
            if self._reset_phase == 0:
                self._reset_phase = 1  # later assertions ride the same sequence
        else:
            self._apply(effect, instr, tags)
            if dma is not None:
                if dma.write:
                    self._store(dma.addr, dma.value, tags)
                    tags.append("dma-write")
                else:
                    tags.append("dma-read")

        record = TraceRecord(t, signals, reset, tuple(tags), regs)
        self.records.append(record)
        self.cycle += 1
        return record

    def _apply(self, effect: str, instr: Instr | None, tags: list[str]) -> None:
        regs = self.regs
        if effect == "hold":
            return
        if effect == "irq":
            if self._script is not None:
                self._script.close()
                self._script = None
                self._op = None
                tags.append("swatt-aborted")
            self._push_word(regs[PC], tags)
            self.gie = False
            regs[PC] = ISR_ADDR
            tags.append("irq")
            return
        if effect == "cr-mid-entry":
            self.halted = True
            tags.append("fault:cr-mid-entry")
            return
        if effect == "illegal":
            self.halted = True
            tags.append("fault:illegal-instruction")
            return
        if effect == "script":
            op = self._op
            if op[0] == "r":
                self._advance_script(self.mem[op[1] & 0xFFFF], tags)
            elif op[0] == "w":
                self._store(op[1], op[2], tags)
                self._advance_script(None, tags)
            else:
                if len(op) > 2:
                    tags.append(op[2])
                tags.append("swatt-early-exit" if op[1] else "swatt-done")
                self._script.close()
                self._script = None
                self._op = None
                regs[PC] = self._pop_word()
            return
        op, a, b, imm = instr.op, instr.a, instr.b, instr.imm
        nxt = (regs[PC] + INSTR_SIZE) & 0xFFFF
        if op is Op.HALT:
            self.halted = True
            tags.append("halt")
            return
        if op is Op.MOVI:
            regs[a] = imm
        elif op is Op.MOV:
            regs[a] = regs[b]
        elif op is Op.LOAD:
            regs[a] = self.mem[imm]
        elif op is Op.STORE:
            self._store(imm, regs[a], tags)
        elif op in (Op.ADD, Op.SUB):
            v = (regs[a] + regs[b] if op is Op.ADD else regs[a] - regs[b]) & 0xFFFF
            regs[a] = v
            self.zero = v == 0
        elif op is Op.CMP:
            self.zero = regs[a] == regs[b]
        elif op is Op.JMP:
            nxt = imm
        elif op is Op.JZ:
            if self.zero:
                nxt = imm
        elif op is Op.CALL:
            self._push_word(nxt, tags)
            nxt = imm
        elif op is Op.RET:
            nxt = self._pop_word()
        elif op is Op.PUSH:
            self._push_word(regs[a], tags)
        elif op is Op.POP:
            regs[a] = self._pop_word()
        elif op is Op.EINT:
            self.gie = True
        elif op is Op.DINT:
            self.gie = False
        if a == PC and op in (Op.MOVI, Op.MOV, Op.LOAD, Op.ADD, Op.SUB, Op.POP):
            return  # explicit write to PC wins
        regs[PC] = nxt

    def run(self, max_cycles: int = 100_000, stop: str = "halt") -> Trace:
        """Step until halted (stop="halt"), or until the post-reset PC = 0 cycle
        has been recorded (stop="reset"), or `max_cycles` more cycles elapse."""
        if stop not in ("halt", "reset"):
            raise ValueError(f"unknown stop condition {stop!r}")
        seen_reset = False
        for _ in range(max_cycles):
            if self.halted:
                break
            rec = self.step()
            seen_reset = seen_reset or bool(rec.reset)
            if stop == "reset" and seen_reset and self._reset_phase == 0 and not rec.reset \
                    and rec.regs[PC] == 0 and rec.signals.pc == 0:
                break
        return self.trace()


def _symbols(layout: MemoryLayout) -> dict[str, int]:
    syms = {k: v for k, v in vars(layout).items() if isinstance(v, int)}
    syms.update(mr_min=layout.mr_min, mr_max=layout.mr_max, chal_buf=CHAL_BUF,
                token_buf=TOKEN_BUF, resp_buf=RESP_BUF, stack_top=STACK_TOP,
                isr=ISR_ADDR, app_scratch=APP_SCRATCH)
    return syms


def assemble_for(text: str, layout: MemoryLayout, base: int | None = None) -> Program:
    """Assemble with the layout's addresses available as `@name` symbols."""
    return assemble(text, base, _symbols(layout))


def attestation_wrapper(layout: MemoryLayout, disable_irq: bool = True) -> str:
    """Untrusted glue around a call to the trusted routine, as assembler text.

    Copies the challenge (and, with CTR, the token) from the receive buffers,
    switches SP to the top of XS, calls CR, restores SP and copies the MAC to
    the response buffer."""
    lines = ["; challenge -> MR"]
    for i in range(swatt.CHAL_LEN):
        lines += [f"LOAD r4, @chal_buf+{i}", f"STORE r4, @mr_min+{i}"]
    if layout.has_ctr:
        lines.append("; token -> auth buffer")
        for i in range(swatt.MAC_LEN):
            lines += [f"LOAD r4, @token_buf+{i}", f"STORE r4, @auth_addr+{i}"]
    if disable_irq:
        lines.append("DINT")
    lines += ["PUSH r5", "PUSH r6", "MOV r5, r1", "MOVI r1, @xs_min", "CALL @cr_min",
              "MOV r1, r5", "POP r6", "POP r5", "EINT", "; MR -> response buffer"]
    for i in range(swatt.MAC_LEN):
        lines += [f"LOAD r4, @mr_min+{i}", f"STORE r4, @resp_buf+{i}"]
    return "\n".join(lines) + "\n"


def idle_program() -> Program:
    return Program(PROGRAM_BASE, (Instr(Op.HALT),))


def load(layout: MemoryLayout, program: Program | None = None, swatt_image: bytes | None = None,
         key: bytes = bytes(range(64)), ar_contents: bytes | None = None, *,
         ctr: bytes | None = None, monitors_enabled: bool = True,
         monitor: ComposedMonitor | None = None, script_fault: str | None = None) -> Machine:
    """Build a machine: boot stub, ISR stub, program, ROM images and AR contents.

    If `ar_contents` is given the layout's AR is resized to its length."""
    if ar_contents is not None:
        layout = layout.with_ar(layout.ar_min, len(ar_contents))
    problems = validate_layout(layout)
    if problems:
        raise LoadError("; ".join(problems))
    if len(key) != swatt.KEY_LEN or layout.k_max - layout.k_min + 1 != swatt.KEY_LEN:
        raise LoadError("key and KR must both be 64 bytes")
    program = program or idle_program()
    lo, hi = program.base, program.base + program.size - 1
    if hi > 0xFFFF:
        raise LoadError("program runs past the end of memory")
    for name, region in (("CR", layout.cr), ("KR", layout.kr)):
        if lo <= region.hi and region.lo <= hi:
            raise LoadError(f"program [{lo:#06x}, {hi:#06x}] overlaps ROM region {name}")
    fixed = [(BOOT_ADDR, BOOT_ADDR + 7), (ISR_ADDR, ISR_ADDR + 7)]
    for flo, fhi in fixed + [(lo, hi)]:
        for region in (layout.cr, layout.kr, layout.xs, layout.mr, layout.ar):
            if flo <= region.hi and region.lo <= fhi and (flo, fhi) != (lo, hi):
                raise LoadError(f"stub at {flo:#06x} collides with a layout region")
    if lo <= ISR_ADDR + 7 and BOOT_ADDR <= hi:
        raise LoadError("program overlaps the boot/ISR stubs")

    m = Machine(layout, monitors_enabled=monitors_enabled, monitor=monitor, script_fault=script_fault)
    m.entry = program.entry
    m.write_bytes(BOOT_ADDR, Instr(Op.MOVI, SP, imm=STACK_TOP).encode()
                  + Instr(Op.JMP, imm=program.entry).encode())
    m.write_bytes(ISR_ADDR, Instr(Op.EINT).encode() + Instr(Op.RET).encode())
    m.write_bytes(lo, program.image())
    image = swatt_image if swatt_image is not None else default_swatt_image(layout)
    if len(image) > layout.cr_max - layout.cr_min + 1:
        raise LoadError("image larger than CR")
    m.write_bytes(layout.cr_min, image)
    m.write_bytes(layout.k_min, key)
    if ar_contents is not None:
        m.write_bytes(layout.ar_min, ar_contents)
    if ctr is not None:
        if not layout.has_ctr:
            raise LoadError("counter given but the layout has no CTR region")
        m.write_bytes(layout.ctr_min, ctr)
    for region in (layout.cr, layout.kr):
        for a in range(region.lo, region.hi + 1):
            m.rom[a] = 1
    m.regs[PC] = program.entry
    m.regs[SP] = STACK_TOP
    return m


@dataclass(frozen=True)
class AttestationOutcome:
    status: str  # "ok", "rejected:<reason>", "reset", "fault:<what>", "timeout"
    mac: bytes | None
    trace: Trace
    start_cycle: int
    reset_cycle: int | None = None


def invoke_attestation(machine: Machine, challenge: bytes, *, token: bytes | None = None,
                       disable_irq: bool = True, max_cycles: int = 200_000) -> AttestationOutcome:
    """Run the untrusted wrapper on `machine` and report what came back."""
    if len(challenge) != swatt.CHAL_LEN:
        raise ValueError("challenge must be 32 bytes")
    lay = machine.layout
    machine.write_bytes(CHAL_BUF, challenge)
    if lay.has_ctr:
        if token is None or len(token) != swatt.MAC_LEN:
            raise ValueError("authenticated layout needs a 32-byte token")
        machine.write_bytes(TOKEN_BUF, token)
    wrapper = assemble_for(attestation_wrapper(lay, disable_irq) + "HALT\n", lay, WRAPPER_BASE)
    machine.write_bytes(WRAPPER_BASE, wrapper.image())
    machine.halted = False
    machine.set_pc(WRAPPER_BASE)
    start = machine.cycle
    first = len(machine.records)
    for _ in range(max_cycles):
        if machine.halted:
            break
        rec = machine.step()
        if rec.reset:
            machine.halted = True
            trace = machine.trace()
            return AttestationOutcome("reset", None, trace, start, rec.cycle)
    trace = machine.trace()
    if not machine.halted:
        return AttestationOutcome("timeout", None, trace, start)
    tags = [t for r in machine.records[first:] for t in r.tags]
    faults = [t for t in tags if t.startswith("fault:")]
    if faults:
        return AttestationOutcome(faults[0], None, trace, start)
    rejects = [t for t in tags if t.startswith("swatt-reject:")]
    if rejects:
        return AttestationOutcome("rejected:" + rejects[0].split(":", 1)[1], None, trace, start)
    if "swatt-done" not in tags:
        return AttestationOutcome("fault:no-attestation", None, trace, start)
    return AttestationOutcome("ok", machine.read_bytes(RESP_BUF, swatt.MAC_LEN), trace, start)


# -- trace-level property checks ---------------------------------------------

@dataclass(frozen=True)
class PropertyResult:
    holds: bool
    cycle: int | None = None
    detail: str = ""
    spans_checked: int = 0


def cr_spans(trace: Trace) -> list[tuple[int, int]]:
    """Maximal runs of consecutive records with PC in CR, as index pairs [s, e]."""
    lay = trace.layout
    spans = []
    start = None
    for i, r in enumerate(trace.records):
        inside = lay.cr_min <= r.signals.pc <= lay.cr_max
        if inside and start is None:
            start = i
        elif not inside and start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(trace.records) - 1))
    return spans


def _modifies_ar(s: CycleSignals, lay: MemoryLayout) -> bool:
    return (s.w_en and in_region(s.d_addr, lay.ar_min, lay.ar_max)) or \
        (s.dma_en and in_region(s.dma_addr, lay.ar_min, lay.ar_max))


def check_temporal_consistency(trace: Trace) -> PropertyResult:
    """Every attestation that ran to completion without a reset saw AR unchanged
    from its first cycle to the cycle after it left CR."""
    lay = trace.layout
    recs = trace.records
    checked = 0
    for s, e in cr_spans(trace):
        if e + 1 >= len(recs):
            continue  # still running at the end of the trace
        if any(recs[i].reset for i in range(s, e + 2)):
            continue
        checked += 1
        for i in range(s, e + 1):
            if _modifies_ar(recs[i].signals, lay):
                return PropertyResult(False, recs[i].cycle, "AR written during attestation", checked)
        before, after = trace.snapshot(recs[s].cycle), trace.snapshot(recs[e + 1].cycle)
        if before is not None and after is not None and before != after:
            return PropertyResult(False, recs[e + 1].cycle, "AR changed across attestation", checked)
    return PropertyResult(True, spans_checked=checked)


def check_key_confidentiality(trace: Trace) -> PropertyResult:
    """Untrusted reads of KR, or of anything the trusted code wrote outside
    MR/CTR, must coincide with reset. DMA counts as untrusted at any PC."""
    lay = trace.layout
    tainted = set(range(lay.k_min, lay.k_max + 1))
    public = [(lay.mr_min, lay.mr_max)]
    if lay.has_ctr:
        public.append((lay.ctr_min, lay.ctr_max))
    for r in trace.records:
        s = r.signals
        trusted = lay.cr_min <= s.pc <= lay.cr_max
        leak = (s.r_en and not trusted and s.d_addr in tainted) or \
            (s.dma_en and s.dma_addr in tainted)
        if leak and not r.reset:
            return PropertyResult(False, r.cycle, f"untrusted read of secret byte {s.dma_addr if s.dma_en and s.dma_addr in tainted else s.d_addr:#06x}")
        if trusted and s.w_en and not r.reset and not any(lo <= s.d_addr <= hi for lo, hi in public):
            tainted.add(s.d_addr)
    return PropertyResult(True)


def check_reset_behaviour(trace: Trace) -> PropertyResult:
    """Each reset assertion reaches a PC = 0 cycle with all registers zero within
    two cycles, with reset high until then."""
    recs = trace.records
    for i, r in enumerate(recs):
        if not r.reset or (i > 0 and recs[i - 1].reset):
            continue
        for j in range(i, min(i + 3, len(recs))):
            if recs[j].signals.pc == 0 and all(v == 0 for v in recs[j].regs):
                if not all(recs[k].reset for k in range(i, j)):
                    return PropertyResult(False, recs[j].cycle, "reset dropped before PC = 0")
                break
        else:
            if i + 2 < len(recs):
                return PropertyResult(False, r.cycle, "no zeroed PC = 0 cycle within two cycles of reset")
    return PropertyResult(True)


# -- trace files -------------------------------------------------------------

TRACE_HEADER = ("cycle", "pc", "irq", "r_en", "w_en", "d_addr", "dma_en", "dma_addr", "reset", "tags")


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in trace.records:
        s = r.signals
        w.writerow([r.cycle, f"{s.pc:#06x}", int(s.irq), int(s.r_en), int(s.w_en), f"{s.d_addr:#06x}",
                    int(s.dma_en), f"{s.dma_addr:#06x}", r.reset, ";".join(r.tags)])
    return buf.getvalue()


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(trace_csv(trace))


def read_trace(text: str) -> list[tuple[int, CycleSignals, int]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        s = CycleSignals(int(row["pc"], 0), row["irq"] == "1", row["r_en"] == "1", row["w_en"] == "1",
                         int(row["d_addr"], 0), row["dma_en"] == "1", int(row["dma_addr"], 0))
        out.append((int(row["cycle"]), s, int(row["reset"])))
    return out


def replay_monitor(rows: Iterable[tuple[int, CycleSignals, int]], layout: MemoryLayout,
                   monitor: ComposedMonitor | None = None) -> int | None:
    """Feed recorded signals through the per-machine step functions and return
    the first cycle whose recomputed reset differs from the recorded one."""
    monitor = monitor or composed_monitor(layout)
    state = monitor.initial()
    for cycle, signals, reset in rows:
        state, out = composed_step(state, signals, layout, monitor)
        if out != reset:
            return cycle
    return None
