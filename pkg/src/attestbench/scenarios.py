"""Shipped attack and benign scenarios for the simulator.

Each attack is run twice: once with the monitors in the loop and once in debug
mode with them switched off. The debug trace (reset always 0) is scored
against the LTL property the attack targets, which gives the first cycle the
property is violated; the monitored run must assert reset on exactly that
cycle.

Scoring a long trace with `eval_prefix` directly costs quadratic time, so the
debug trace is scanned two letters at a time: a prefix first turns bad at k
exactly when `eval_prefix` of the window (k-1, k) reports index 1, or k = 0
and the first letter alone is bad. The equivalence suite checks this
windowing against whole-trace evaluation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import checker, protocol, sim, swatt
from .layout import RESET_MASK, SYMBOL_ATOMS, MemoryLayout, classifier, default_layout
from .ltl import Formula, Violated, eval_prefix

SCENARIO_KEY = bytes(range(0x40, 0x80))
SCENARIO_CHAL = hashlib.sha256(b"scenario challenge").digest()
SCENARIO_AR = b"".join(hashlib.sha256(bytes([i])).digest() for i in range(8))  # 256 bytes
MAX_CYCLES = 20_000


def trace_masks(trace: sim.Trace) -> list[int]:
    index = classifier(trace.layout).symbol_index
    return [SYMBOL_ATOMS[index(r.signals)] | (RESET_MASK if r.reset else 0) for r in trace.records]


def first_violation(formula: Formula, masks: list[int]) -> int | None:
    if not masks:
        return None
    if eval_prefix(formula, masks[:1]) == Violated(0):
        return 0
    for k in range(1, len(masks)):
        if eval_prefix(formula, masks[k - 1:k + 1]) == Violated(1):
            return k
    return None


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    expected: str  # "reset:<spec>" or "accept"
    auth: bool = False
    program: str = "HALT\n"
    wrapper: bool = False
    disable_irq: bool = True
    script_fault: str | None = None
    # events relative to cycle 0, or to the first SW-Att cycle when `during_swatt`
    irq_at: tuple[int, ...] = ()
    dma: tuple[tuple[int, sim.DmaOp], ...] = ()
    during_swatt: bool = False
    trigger: int | None = None  # spec whose first violation times the reset
    invariant: str | None = None  # "temporal" or "confidentiality"

    @property
    def spec(self) -> int | None:
        return int(self.expected.split(":")[1]) if self.expected.startswith("reset:") else None

    @property
    def trigger_spec(self) -> int | None:
        return self.trigger if self.trigger is not None else self.spec

    def layout(self) -> MemoryLayout:
        return default_layout(self.auth).with_ar(default_layout(self.auth).ar_min, len(SCENARIO_AR))

    def source(self) -> str:
        head = "EINT\n" if not self.disable_irq else ""
        body = sim.attestation_wrapper(self.layout(), self.disable_irq) if self.wrapper else ""
        return head + body + self.program

    def _machine(self, monitors: bool, offset: int) -> sim.Machine:
        lay = self.layout()
        prog = sim.assemble_for(self.source(), lay, sim.PROGRAM_BASE)
        m = sim.load(lay, prog, key=SCENARIO_KEY, ar_contents=SCENARIO_AR,
                     monitors_enabled=monitors, script_fault=self.script_fault)
        m.write_bytes(sim.CHAL_BUF, SCENARIO_CHAL)
        if lay.has_ctr:
            m.write_bytes(sim.TOKEN_BUF, swatt.auth_token(SCENARIO_KEY, SCENARIO_CHAL))
        m.schedule_irq(c + offset for c in self.irq_at)
        for c, op in self.dma:
            m.schedule_dma(c + offset, op)
        return m

    def swatt_start(self) -> int:
        dry = self._machine(False, 0)
        dry.irq_schedule.clear()
        dry.dma_schedule.clear()
        trace = dry.run(MAX_CYCLES)
        starts = trace.tagged("swatt-start")
        if not starts:
            raise RuntimeError(f"{self.name}: the program never enters SW-Att")
        return starts[0]

    def build(self, monitors: bool = True) -> sim.Machine:
        return self._machine(monitors, self.swatt_start() if self.during_swatt else 0)


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    expected: str
    observed: str
    passed: bool
    expected_cycle: int | None
    reset_cycle: int | None
    detail: str
    trace: sim.Trace
    debug_trace: sim.Trace | None = field(default=None, repr=False)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: expected {self.expected}, observed {self.observed}" \
            + (f" ({self.detail})" if self.detail else "")


def _region_byte(offset: int) -> int:
    return default_layout().ar_min + offset


_SCENARIOS = (
    Scenario("read-key", "untrusted LOAD from KR", "reset:2",
             program="NOP\nNOP\nLOAD r4, @k_min+3\nHALT\n"),
    Scenario("jump-mid-cr", "untrusted jump into the middle of CR", "reset:4",
             program="NOP\nJMP @cr_min+16\n"),
    Scenario("early-exit", "SW-Att returns from the middle of CR", "reset:3",
             wrapper=True, script_fault="early-exit", program="HALT\n"),
    Scenario("irq-during-swatt", "interrupt delivered while SW-Att runs", "reset:5",
             wrapper=True, disable_irq=False, irq_at=(40,), during_swatt=True, program="HALT\n"),
    Scenario("app-reads-xs", "untrusted LOAD from the exclusive stack", "reset:6",
             program="NOP\nLOAD r4, @xs_min+5\nHALT\n"),
    Scenario("swatt-writes-app", "SW-Att writes untrusted memory (faulty routine)", "reset:7",
             wrapper=True, script_fault="write-app", program="HALT\n"),
    Scenario("dma-read-kr", "DMA read of the key", "reset:8",
             program="NOP\nNOP\nNOP\nNOP\nNOP\nHALT\n", dma=((3, sim.DmaOp(default_layout().k_min + 1)),)),
    Scenario("dma-read-xs", "DMA read of the exclusive stack", "reset:9",
             program="NOP\nNOP\nNOP\nNOP\nNOP\nHALT\n", dma=((2, sim.DmaOp(default_layout().xs_min + 7)),)),
    Scenario("dma-during-swatt", "harmless DMA read while SW-Att runs", "reset:10",
             wrapper=True, during_swatt=True, dma=((100, sim.DmaOp(0x2200)),), program="HALT\n"),
    Scenario("reset-hold", "DMA burst on KR keeps reset high until PC = 0", "reset:11", trigger=8,
             program="NOP\n" * 12 + "HALT\n",
             dma=tuple((c, sim.DmaOp(default_layout().k_min)) for c in range(3, 9))),
    Scenario("app-writes-ctr", "untrusted STORE to the counter", "reset:12", auth=True,
             program="MOVI r4, 7\nSTORE r4, @ctr_min\nHALT\n"),
    Scenario("dma-ctr", "DMA write to the counter", "reset:13", auth=True,
             program="NOP\nNOP\nNOP\nHALT\n", dma=((2, sim.DmaOp(default_layout(True).ctr_min, True, 0xFF)),)),
    Scenario("toctou-relocate", "DMA rewrites an already measured AR byte mid-SW-Att", "reset:10",
             wrapper=True, during_swatt=True, invariant="temporal", program="HALT\n",
             dma=((32 + 64 + 96 + 10, sim.DmaOp(_region_byte(2), True, 0x5A)),)),
    Scenario("taint-leak", "untrusted read of key material left in XS after SW-Att", "reset:6",
             wrapper=True, invariant="confidentiality", program="LOAD r4, @xs_min+3\nHALT\n"),
    Scenario("benign-attest", "honest attestation checked by the verifier", "accept",
             wrapper=True, program="HALT\n"),
)

SCENARIOS: dict[str, Scenario] = {s.name: s for s in _SCENARIOS}


def reset_spec_clean(trace: sim.Trace) -> bool:
    return first_violation(checker.spec_formula(11), trace_masks(trace)) is None


def _invariant(name: str, trace: sim.Trace) -> sim.PropertyResult:
    if name == "temporal":
        return sim.check_temporal_consistency(trace)
    return sim.check_key_confidentiality(trace)


def _run_benign(s: Scenario) -> ScenarioResult:
    m = s.build(True)
    trace = m.run(MAX_CYCLES)
    lay = m.layout
    verifier = protocol.Verifier(SCENARIO_KEY, SCENARIO_AR, image_base=lay.ar_min, auth=lay.has_ctr)
    token = swatt.auth_token(SCENARIO_KEY, SCENARIO_CHAL) if lay.has_ctr else None
    req = protocol.Request(SCENARIO_CHAL, token)
    reply = protocol.Response(protocol.STATUS_OK, m.read_bytes(sim.RESP_BUF, swatt.MAC_LEN))
    verdict = verifier.check(req, reply)
    resets = trace.first_reset()
    observed = "accept" if verdict.accepted and resets is None else \
        f"reset@{resets}" if resets is not None else "reject"
    return ScenarioResult(s.name, s.expected, observed, observed == "accept", None, resets,
                          verdict.reason, trace)


def run_scenario(name: str) -> ScenarioResult:
    try:
        s = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None
    if s.expected == "accept":
        return _run_benign(s)
    spec = s.trigger_spec
    debug = s.build(False).run(MAX_CYCLES)
    expected_cycle = first_violation(checker.spec_formula(spec, s.auth), trace_masks(debug))
    trace = s.build(True).run(MAX_CYCLES, stop="reset")
    got = trace.first_reset()
    notes = []
    ok = expected_cycle is not None and got == expected_cycle
    if expected_cycle is None:
        notes.append(f"debug run never violates spec {spec}")
    if s.spec == 11:
        held = all(r.reset for r in trace.records[got:got + 6]) if got is not None else False
        clean = reset_spec_clean(trace)
        ok = ok and held and clean
        notes.append(f"reset held through burst: {held}; reset-hold property clean: {clean}")
    if s.invariant is not None:
        monitored = _invariant(s.invariant, trace)
        unmonitored = _invariant(s.invariant, debug)
        ok = ok and monitored.holds and not unmonitored.holds
        notes.append(f"{s.invariant} invariant with monitors: {'holds' if monitored.holds else 'VIOLATED'}; "
                     f"debug run: {'holds' if unmonitored.holds else f'violated at {unmonitored.cycle}'}")
    observed = f"reset@{got}" if got is not None else "no reset"
    expected = f"{s.expected}@{expected_cycle}"
    return ScenarioResult(s.name, expected, observed, ok, expected_cycle, got, "; ".join(notes),
                          trace, debug)


def run_all() -> list[ScenarioResult]:
    return [run_scenario(n) for n in SCENARIOS]

