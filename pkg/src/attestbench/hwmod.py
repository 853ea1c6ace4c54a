"""Hardware monitors as data-driven Mealy machines and their OR-composition.

Each monitor is a list of guarded edges per state, tried in order; an edge
without a guard is the state's "otherwise" branch. The reset output of a
transition is 1 exactly when it lands in the machine's reset state, unless a
forced output has been installed on the source state (used by mutation tests).

Guards are boolean formulas over the atom vocabulary. The pseudo-atom
`violation` stands for the disjunction of the machine's violation clauses, so
editing the clause list updates every edge that refers to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .layout import ALPHABET_SIZE, ATOM_BIT, SYMBOL_ATOMS, CycleSignals, MemoryLayout, classifier
from .ltl import And, Atom, Formula, Implies, Not, Or, parse

RUN, RESET = "Run", "Reset"
VIOLATION = "violation"

KEYAC = "KeyAC"
ATOMICITY = "Atomicity"
STACK = "ExclusiveStack"
DMA = "DmaProtect"
AUTHCTR = "AuthCtr"
KINDS = (KEYAC, ATOMICITY, STACK, DMA, AUTHCTR)
KIND_ALIASES = {
    "keyac": KEYAC,
    "atomicity": ATOMICITY,
    "stack": STACK,
    "exclusivestack": STACK,
    "dma": DMA,
    "dmaprotect": DMA,
    "authctr": AUTHCTR,
}


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    guard: Formula | None  # None: taken when no earlier edge of src matches


Predicate = Callable[[int], bool]


def _compile(f: Formula, violation: Predicate) -> Predicate:
    if isinstance(f, Atom):
        if f.name == VIOLATION:
            return violation
        bit = ATOM_BIT[f.name]
        return lambda m: bool(m >> bit & 1)
    if isinstance(f, Not):
        a = _compile(f.arg, violation)
        return lambda m: not a(m)
    if isinstance(f, (And, Or, Implies)):
        a = _compile(f.left, violation)
        b = _compile(f.right, violation)
        if isinstance(f, And):
            return lambda m: a(m) and b(m)
        if isinstance(f, Or):
            return lambda m: a(m) or b(m)
        return lambda m: (not a(m)) or b(m)
    raise ValueError(f"guards are boolean formulas, got {type(f).__name__}")


@dataclass(frozen=True)
class MonitorMachine:
    kind: str
    states: tuple[str, ...]
    initial: str
    reset_state: str
    edges: tuple[Edge, ...]
    violation: tuple[Formula, ...] = ()
    forced: tuple[tuple[str, int], ...] = ()
    _compiled: dict = field(default_factory=dict, init=False, compare=False, hash=False, repr=False)

    def _rows(self) -> dict[str, list[tuple[Predicate | None, str]]]:
        rows = self._compiled.get("rows")
        if rows is None:
            clauses = [_compile(c, lambda m: False) for c in self.violation]

            def violated(m: int) -> bool:
                return any(c(m) for c in clauses)

            rows = {s: [] for s in self.states}
            for e in self.edges:
                pred = None if e.guard is None else _compile(e.guard, violated)
                rows[e.src].append((pred, e.dst))
            self._compiled["rows"] = rows
        return rows

    def violation_holds(self, mask: int) -> bool:
        return any(_compile(c, lambda m: False)(mask) for c in self.violation)

    def next_state(self, state: str, mask: int) -> str:
        for pred, dst in self._rows()[state]:
            if pred is None or pred(mask):
                return dst
        raise ValueError(f"{self.kind}: no transition from {state}")

    def output(self, src: str, dst: str) -> int:
        for s, bit in self.forced:
            if s == src:
                return bit
        return 1 if dst == self.reset_state else 0

    def step(self, state: str, mask: int) -> tuple[str, int]:
        dst = self.next_state(state, mask)
        return dst, self.output(state, dst)

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """(next, out) arrays of shape (n_states, ALPHABET_SIZE), states by index."""
        cached = self._compiled.get("table")
        if cached is None:
            idx = {s: i for i, s in enumerate(self.states)}
            nxt = np.empty((len(self.states), ALPHABET_SIZE), dtype=np.int32)
            out = np.empty((len(self.states), ALPHABET_SIZE), dtype=np.uint8)
            for s in self.states:
                for sym in range(ALPHABET_SIZE):
                    d, o = self.step(s, SYMBOL_ATOMS[sym])
                    nxt[idx[s], sym] = idx[d]
                    out[idx[s], sym] = o
            nxt.flags.writeable = False
            out.flags.writeable = False
            cached = (nxt, out)
            self._compiled["table"] = cached
        return cached


def _run_reset(kind: str, clauses: tuple[str, ...]) -> MonitorMachine:
    return MonitorMachine(
        kind=kind,
        states=(RUN, RESET),
        initial=RUN,
        reset_state=RESET,
        edges=(
            Edge(RUN, RESET, Atom(VIOLATION)),
            Edge(RUN, RUN, None),
            # A violation seen while already in Reset keeps the line high even at PC = 0.
            Edge(RESET, RESET, Atom(VIOLATION)),
            Edge(RESET, RUN, parse("pc_is_zero & !violation")),
            Edge(RESET, RESET, None),
        ),
        violation=tuple(parse(c) for c in clauses),
    )


KEYAC_CLAUSES = ("!pc_in_cr & r_en & d_in_kr",)
STACK_CLAUSES = (
    "!pc_in_cr & (r_en | w_en) & d_in_xs",
    "pc_in_cr & w_en & !d_in_xs & !d_in_mr",
)
STACK_AUTH_CLAUSES = (
    STACK_CLAUSES[0],
    "pc_in_cr & w_en & !d_in_xs & !d_in_mr & !d_in_ctr",
)
DMA_CLAUSES = (
    "dma_en & dma_in_kr",
    "dma_en & dma_in_xs",
    "pc_in_cr & dma_en",
)
AUTHCTR_CLAUSES = (
    "!pc_in_cr & w_en & d_in_ctr",
    "dma_en & dma_in_ctr",
)

NOT_CR, FST_CR, MID_CR, LAST_CR = "notCR", "fstCR", "midCR", "lastCR"
_MID = "pc_in_cr & !pc_is_crmin & !pc_is_crmax & !irq"


def _atomicity() -> MonitorMachine:
    g = parse
    return MonitorMachine(
        kind=ATOMICITY,
        states=(NOT_CR, FST_CR, MID_CR, LAST_CR, RESET),
        initial=NOT_CR,
        reset_state=RESET,
        edges=(
            Edge(NOT_CR, NOT_CR, g("!pc_in_cr")),
            Edge(NOT_CR, FST_CR, g("pc_is_crmin & !irq")),
            Edge(NOT_CR, RESET, None),
            Edge(FST_CR, FST_CR, g("pc_is_crmin & !irq")),
            Edge(FST_CR, MID_CR, g(_MID)),
            Edge(FST_CR, RESET, None),
            Edge(MID_CR, MID_CR, g(_MID)),
            Edge(MID_CR, LAST_CR, g("pc_is_crmax & !irq")),
            Edge(MID_CR, RESET, None),
            Edge(LAST_CR, LAST_CR, g("pc_is_crmax & !irq")),
            Edge(LAST_CR, NOT_CR, g("!pc_in_cr & !irq")),
            Edge(LAST_CR, RESET, None),
            Edge(RESET, NOT_CR, g("pc_is_zero")),
            Edge(RESET, RESET, None),
        ),
    )


@lru_cache(maxsize=None)
def build_monitor(kind: str, auth: bool = False) -> MonitorMachine:
    if kind == KEYAC:
        return _run_reset(KEYAC, KEYAC_CLAUSES)
    if kind == ATOMICITY:
        return _atomicity()
    if kind == STACK:
        return _run_reset(STACK, STACK_AUTH_CLAUSES if auth else STACK_CLAUSES)
    if kind == DMA:
        return _run_reset(DMA, DMA_CLAUSES)
    if kind == AUTHCTR:
        return _run_reset(AUTHCTR, AUTHCTR_CLAUSES)
    raise ValueError(f"unknown monitor kind {kind!r}")


def kinds_for(layout: MemoryLayout) -> tuple[str, ...]:
    return KINDS if layout.has_ctr else KINDS[:4]


def _mask(signals: CycleSignals, layout: MemoryLayout) -> int:
    return SYMBOL_ATOMS[classifier(layout).symbol_index(signals)]


def keyac_step(state: str, signals: CycleSignals, layout: MemoryLayout) -> tuple[str, int]:
    return build_monitor(KEYAC).step(state, _mask(signals, layout))


def atomicity_step(state: str, signals: CycleSignals, layout: MemoryLayout) -> tuple[str, int]:
    return build_monitor(ATOMICITY).step(state, _mask(signals, layout))


def stack_step(state: str, signals: CycleSignals, layout: MemoryLayout) -> tuple[str, int]:
    return build_monitor(STACK, layout.has_ctr).step(state, _mask(signals, layout))


def dma_step(state: str, signals: CycleSignals, layout: MemoryLayout) -> tuple[str, int]:
    return build_monitor(DMA).step(state, _mask(signals, layout))


def authctr_step(state: str, signals: CycleSignals, layout: MemoryLayout) -> tuple[str, int]:
    if not layout.has_ctr:
        raise ConfigurationError("AuthCtr monitor needs a CTR region in the layout")
    return build_monitor(AUTHCTR).step(state, _mask(signals, layout))


@dataclass(frozen=True)
class ComposedState:
    members: tuple[tuple[str, str], ...]

    def of(self, kind: str) -> str:
        for k, s in self.members:
            if k == kind:
                return s
        raise KeyError(kind)


@dataclass(frozen=True)
class ComposedMonitor:
    """Members stepped in lockstep; the composed reset is the OR of theirs."""

    machines: tuple[MonitorMachine, ...]
    _cache: dict = field(default_factory=dict, init=False, compare=False, hash=False, repr=False)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(m.kind for m in self.machines)

    def initial(self) -> ComposedState:
        return ComposedState(tuple((m.kind, m.initial) for m in self.machines))

    def step(self, state: ComposedState, mask: int) -> tuple[ComposedState, int]:
        members = []
        reset = 0
        for m, (kind, s) in zip(self.machines, state.members):
            d, o = m.step(s, mask)
            members.append((kind, d))
            reset |= o
        return ComposedState(tuple(members)), reset

    def replace(self, machine: MonitorMachine) -> "ComposedMonitor":
        return ComposedMonitor(tuple(machine if m.kind == machine.kind else m for m in self.machines))

    def table(self) -> "MonitorTable":
        t = self._cache.get("table")
        if t is None:
            t = MonitorTable.build(self)
            self._cache["table"] = t
        return t


@dataclass(frozen=True)
class MonitorTable:
    """Flattened transition table over product states (mixed-radix indices)."""

    monitor: ComposedMonitor
    n_states: int
    initial: int
    next: np.ndarray  # int32, n_states * ALPHABET_SIZE
    out: np.ndarray  # uint8, n_states * ALPHABET_SIZE

    @classmethod
    def build(cls, monitor: ComposedMonitor) -> "MonitorTable":
        sizes = [len(m.states) for m in monitor.machines]
        n = int(np.prod(sizes))
        radix = [int(np.prod(sizes[i + 1:])) for i in range(len(sizes))]
        comp = np.arange(n)
        nxt = np.zeros((n, ALPHABET_SIZE), dtype=np.int64)
        out = np.zeros((n, ALPHABET_SIZE), dtype=np.uint8)
        for m, size, r in zip(monitor.machines, sizes, radix):
            mn, mo = m.table()
            digit = (comp // r) % size
            nxt += mn[digit].astype(np.int64) * r
            out |= mo[digit]
        init = sum(m.states.index(m.initial) * r for m, r in zip(monitor.machines, radix))
        flat_next = nxt.astype(np.int32).reshape(-1)
        flat_out = out.reshape(-1)
        flat_next.flags.writeable = False
        flat_out.flags.writeable = False
        return cls(monitor, n, init, flat_next, flat_out)

    def decode(self, index: int) -> ComposedState:
        members = []
        for m in reversed(self.monitor.machines):
            size = len(m.states)
            members.append((m.kind, m.states[index % size]))
            index //= size
        return ComposedState(tuple(reversed(members)))

    def encode(self, state: ComposedState) -> int:
        index = 0
        for m, (_, s) in zip(self.monitor.machines, state.members):
            index = index * len(m.states) + m.states.index(s)
        return index


def composed_monitor(layout: MemoryLayout) -> ComposedMonitor:
    auth = layout.has_ctr
    return ComposedMonitor(tuple(build_monitor(k, auth) for k in kinds_for(layout)))


def composed_step(state: ComposedState, signals: CycleSignals, layout: MemoryLayout,
                  monitor: ComposedMonitor | None = None) -> tuple[ComposedState, int]:
    monitor = monitor or composed_monitor(layout)
    return monitor.step(state, _mask(signals, layout))


def audit(machine: MonitorMachine) -> list[str]:
    """Check that every state has a final catch-all and its explicit guards are disjoint."""
    problems = []
    rows = machine._rows()
    for s in machine.states:
        row = rows[s]
        if not row or row[-1][0] is not None:
            problems.append(f"{machine.kind}.{s}: no catch-all edge")
        if any(pred is None for pred, _ in row[:-1]):
            problems.append(f"{machine.kind}.{s}: catch-all edge is not last")
        for sym in range(ALPHABET_SIZE):
            mask = SYMBOL_ATOMS[sym]
            hits = sum(1 for pred, _ in row if pred is not None and pred(mask))
            if hits > 1:
                problems.append(f"{machine.kind}.{s}: overlapping guards on symbol {sym}")
                break
    for e in machine.edges:
        if e.dst not in machine.states or e.src not in machine.states:
            problems.append(f"{machine.kind}: edge to unknown state {e.dst}")
    return problems


def violation_expr(machine: MonitorMachine) -> Formula:
    """The violation clauses as a single formula (false when there are none)."""
    if not machine.violation:
        return parse("pc_is_zero & !pc_is_zero")
    f = machine.violation[0]
    for c in machine.violation[1:]:
        f = Or(f, c)
    return f


__all__ = [
    "ATOMICITY", "AUTHCTR", "DMA", "KEYAC", "KINDS", "RESET", "RUN", "STACK",
    "ComposedMonitor", "ComposedState", "ConfigurationError", "Edge", "MonitorMachine",
    "MonitorTable", "atomicity_step", "audit", "authctr_step", "build_monitor",
    "composed_monitor", "composed_step", "dma_step", "keyac_step", "kinds_for",
    "stack_step", "violation_expr",
]
