"""Explicit-state checking of monitors against the shipped safety formulas.

The product of a (composed) monitor with a formula's bad-prefix automaton is
explored breadth-first over the whole 2000-symbol alphabet, so a returned
counterexample is a shortest one, ties broken by symbol index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Sequence, Union

import numpy as np

from . import kernels
from .hwmod import (
    AUTHCTR,
    KIND_ALIASES,
    ComposedMonitor,
    Edge,
    MonitorMachine,
    build_monitor,
    composed_monitor,
)
from .layout import (
    ALPHABET_SIZE,
    RESET_MASK,
    SYMBOL_ATOMS,
    AbstractSymbol,
    MemoryLayout,
)
from .ltl import Formula, Verdict, Violated, atoms_of, eval_prefix, parse, to_monitor

BASE_SPECS = tuple(range(2, 12))
AUTH_SPECS = (12, 13)
ALL_SPECS = BASE_SPECS + AUTH_SPECS


def spec_text(spec_id: int, auth: bool = False) -> str:
    name = f"{spec_id:02d}_auth.ltl" if auth and spec_id == 7 else f"{spec_id:02d}.ltl"
    try:
        raw = resources.files("attestbench").joinpath("specs", name).read_text()
    except FileNotFoundError:
        raise ValueError(f"no shipped formula with id {spec_id}") from None
    lines = [ln.split("#", 1)[0].strip() for ln in raw.splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) != 1:
        raise ValueError(f"{name}: expected exactly one formula")
    return lines[0]


@lru_cache(maxsize=None)
def spec_formula(spec_id: int, auth: bool = False) -> Formula:
    return parse(spec_text(spec_id, auth))


def specs_for(auth: bool) -> tuple[int, ...]:
    return ALL_SPECS if auth else BASE_SPECS


@dataclass(frozen=True)
class Verified:
    states_explored: int
    transitions: int


@dataclass(frozen=True)
class Counterexample:
    trace: tuple[AbstractSymbol, ...]
    cycle: int
    states_explored: int = 0


CheckResult = Union[Verified, Counterexample]
MonitorLike = Union[MonitorMachine, ComposedMonitor]

_CTR_ATOMS = {"d_in_ctr", "dma_in_ctr"}


def _as_composed(monitor: MonitorLike) -> ComposedMonitor:
    if isinstance(monitor, MonitorMachine):
        return ComposedMonitor((monitor,))
    return monitor


def _valmap(aut) -> np.ndarray:
    out = np.empty(ALPHABET_SIZE * 2, dtype=np.int32)
    for sym in range(ALPHABET_SIZE):
        m = SYMBOL_ATOMS[sym]
        out[2 * sym] = aut.local(m)
        out[2 * sym + 1] = aut.local(m | RESET_MASK)
    return out


def check_safety(monitor: MonitorLike, formula: Formula, layout: MemoryLayout) -> CheckResult:
    comp = _as_composed(monitor)
    if not layout.has_ctr:
        if atoms_of(formula) & _CTR_ATOMS:
            raise ValueError("formula refers to CTR but the layout has no CTR region")
        if AUTHCTR in comp.kinds:
            raise ValueError("AuthCtr monitor needs a layout with a CTR region")
    aut = to_monitor(formula)
    table = comp.table()
    reached, bad_pid, bad_sym, parent, psym = kernels.product_bfs(
        table.next, table.out, table.n_states, table.initial,
        np.asarray(aut.delta, dtype=np.int32), aut.n_states, aut.initial, aut.sink,
        aut.n_inputs, _valmap(aut), ALPHABET_SIZE,
    )
    if bad_pid < 0:
        return Verified(int(reached), int(reached) * ALPHABET_SIZE)
    syms = [int(bad_sym)]
    pid = int(bad_pid)
    while parent[pid] >= 0:
        syms.append(int(psym[pid]))
        pid = int(parent[pid])
    syms.reverse()
    trace = tuple(AbstractSymbol.from_index(s) for s in syms)
    return Counterexample(trace, len(trace) - 1, int(reached))


def random_traces_violating(monitor: MonitorLike, formula: Formula, n_traces: int = 1000,
                            length: int = 64, seed: int = 0, backend=None) -> int:
    """How many uniformly random symbol traces drive the monitor into a bad
    prefix of `formula`. A sampling cross-check of `check_safety`."""
    comp = _as_composed(monitor)
    aut = to_monitor(formula)
    table = comp.table()
    rng = np.random.default_rng(seed)
    symbols = rng.integers(0, ALPHABET_SIZE, size=(n_traces, length), dtype=np.int16)
    impl = backend or kernels
    return int(impl.random_replay(
        table.next, table.out, table.initial, np.asarray(aut.delta, dtype=np.int32),
        aut.n_inputs, aut.initial, aut.sink, _valmap(aut), symbols, ALPHABET_SIZE,
    ))


def replay(monitor: MonitorLike, trace: Sequence[AbstractSymbol]) -> list[int]:
    """Atom masks (reset bit included) produced by stepping the monitor on trace."""
    comp = _as_composed(monitor)
    state = comp.initial()
    out = []
    for sym in trace:
        mask = SYMBOL_ATOMS[sym.index]
        state, reset = comp.step(state, mask)
        out.append(mask | (RESET_MASK if reset else 0))
    return out


def replay_verdict(monitor: MonitorLike, trace: Sequence[AbstractSymbol], formula: Formula) -> Verdict:
    return eval_prefix(formula, replay(monitor, trace))


def confirms(cex: Counterexample, monitor: MonitorLike, formula: Formula) -> bool:
    return replay_verdict(monitor, cex.trace, formula) == Violated(cex.cycle)


# --- mutations -------------------------------------------------------------

EDITS = ("drop-guard", "redirect-edge", "force-output")


@dataclass(frozen=True)
class Mutation:
    target: str
    edit: str
    clause: int | None = None
    src: str | None = None
    dst: str | None = None
    new_dst: str | None = None
    state: str | None = None
    bit: int | None = None

    @classmethod
    def parse(cls, text: str) -> "Mutation":
        """Parse `kind:edit:args`, e.g. `keyac:drop-guard:0`,
        `atomicity:redirect-edge:fstCR:Reset:midCR`, `keyac:force-output:Reset:0`."""
        parts = text.split(":")
        if len(parts) < 3:
            raise ValueError(f"bad mutation {text!r}")
        kind = KIND_ALIASES.get(parts[0].lower(), parts[0])
        edit, args = parts[1], parts[2:]
        try:
            if edit == "drop-guard" and len(args) == 1:
                return cls(kind, edit, clause=int(args[0]))
            if edit == "redirect-edge" and len(args) == 3:
                return cls(kind, edit, src=args[0], dst=args[1], new_dst=args[2])
            if edit == "force-output" and len(args) == 2:
                return cls(kind, edit, state=args[0], bit=int(args[1]))
        except ValueError:
            pass
        raise ValueError(f"bad mutation {text!r}")

    def describe(self) -> str:
        if self.edit == "drop-guard":
            return f"{self.target}:drop-guard:{self.clause}"
        if self.edit == "redirect-edge":
            return f"{self.target}:redirect-edge:{self.src}:{self.dst}:{self.new_dst}"
        return f"{self.target}:force-output:{self.state}:{self.bit}"


class InvalidMutation(ValueError):
    pass


def _mutate_machine(m: MonitorMachine, mut: Mutation) -> MonitorMachine:
    if mut.edit == "drop-guard":
        if mut.clause is None or not 0 <= mut.clause < len(m.violation):
            raise InvalidMutation(f"{m.kind} has no violation clause {mut.clause}")
        clauses = m.violation[: mut.clause] + m.violation[mut.clause + 1:]
        return replace(m, violation=clauses)
    if mut.edit == "redirect-edge":
        if mut.new_dst not in m.states:
            raise InvalidMutation(f"{m.kind} has no state {mut.new_dst}")
        hit = False
        edges = []
        for e in m.edges:
            if e.src == mut.src and e.dst == mut.dst:
                edges.append(Edge(e.src, mut.new_dst, e.guard))
                hit = True
            else:
                edges.append(e)
        if not hit:
            raise InvalidMutation(f"{m.kind} has no edge {mut.src}->{mut.dst}")
        return replace(m, edges=tuple(edges))
    if mut.edit == "force-output":
        if mut.state not in m.states or mut.bit not in (0, 1):
            raise InvalidMutation(f"bad force-output target {mut.state}/{mut.bit}")
        forced = tuple(f for f in m.forced if f[0] != mut.state) + ((mut.state, mut.bit),)
        return replace(m, forced=forced)
    raise InvalidMutation(f"unknown edit {mut.edit!r}")


def mutate(monitor: MonitorLike, mut: Mutation) -> MonitorLike:
    """Return an edited copy; the input monitor is left untouched."""
    if isinstance(monitor, MonitorMachine):
        if monitor.kind != mut.target:
            raise InvalidMutation(f"mutation targets {mut.target}, monitor is {monitor.kind}")
        return _mutate_machine(monitor, mut)
    for m in monitor.machines:
        if m.kind == mut.target:
            return monitor.replace(_mutate_machine(m, mut))
    raise InvalidMutation(f"composed monitor has no member {mut.target}")


# --- whole-design check ----------------------------------------------------

@dataclass(frozen=True)
class SpecReport:
    spec_id: int
    formula: str
    result: CheckResult


def check_all(layout: MemoryLayout, auth_enabled: bool, monitor: ComposedMonitor | None = None,
              spec_ids: Sequence[int] | None = None) -> list[SpecReport]:
    if auth_enabled and not layout.has_ctr:
        raise ValueError("auth checks need a layout with a CTR region")
    if not auth_enabled:
        layout = layout.without_auth()
    monitor = monitor or composed_monitor(layout)
    ids = tuple(spec_ids) if spec_ids else specs_for(auth_enabled)
    for i in ids:
        if i not in specs_for(auth_enabled):
            raise ValueError(f"spec {i} is not part of this configuration")
    reports = []
    for i in ids:
        f = spec_formula(i, auth_enabled)
        reports.append(SpecReport(i, spec_text(i, auth_enabled), check_safety(monitor, f, layout)))
    return reports


CSV_HEADER = "spec_id,status,states,transitions,counterexample_len"


def csv_line(r: SpecReport) -> str:
    res = r.result
    if isinstance(res, Verified):
        return f"{r.spec_id:02d},verified,{res.states_explored},{res.transitions},0"
    return f"{r.spec_id:02d},counterexample,{res.states_explored},{res.states_explored * ALPHABET_SIZE},{len(res.trace)}"


def format_table(reports: Sequence[SpecReport]) -> str:
    rows = [f"{'spec':<5} {'result':<15} {'states':>7} {'transitions':>12}  formula"]
    for r in reports:
        res = r.result
        status = "verified" if isinstance(res, Verified) else f"cex@{res.cycle}"
        states = res.states_explored
        trans = res.transitions if isinstance(res, Verified) else states * ALPHABET_SIZE
        rows.append(f"{r.spec_id:02d}    {status:<15} {states:>7} {trans:>12}  {r.formula}")
    return "\n".join(rows)


def dump_counterexample(cex: Counterexample, spec_id: int, note: str = "") -> str:
    lines = [f"# spec {spec_id:02d} violated at cycle {cex.cycle}"]
    if note:
        lines.append(f"# {note}")
    lines.extend(sym.encode() for sym in cex.trace)
    return "\n".join(lines) + "\n"


def load_counterexample(text: str) -> tuple[AbstractSymbol, ...]:
    return tuple(AbstractSymbol.decode(ln) for ln in text.splitlines()
                 if ln.strip() and not ln.startswith("#"))


def default_mutations(auth: bool = True) -> list[Mutation]:
    """Two or more edits per monitor, each expected to break some formula."""
    p = Mutation.parse
    muts = [
        p("keyac:drop-guard:0"),
        p("keyac:force-output:Reset:0"),
        p("keyac:redirect-edge:Run:Reset:Run"),
        p("atomicity:redirect-edge:fstCR:Reset:midCR"),
        p("atomicity:redirect-edge:notCR:Reset:notCR"),
        p("atomicity:force-output:Reset:0"),
        p("stack:drop-guard:0"),
        p("stack:drop-guard:1"),
        p("stack:force-output:Reset:0"),
        p("dma:drop-guard:0"),
        p("dma:drop-guard:1"),
        p("dma:drop-guard:2"),
    ]
    if auth:
        muts += [p("authctr:drop-guard:0"), p("authctr:drop-guard:1"),
                 p("authctr:redirect-edge:Reset:Reset:Run")]
    return muts


# Formulas a monitor kind is responsible for (used to aim mutation checks).
RESPONSIBLE = {
    "KeyAC": (2, 11),
    "Atomicity": (3, 4, 5, 11),
    "ExclusiveStack": (6, 7, 11),
    "DmaProtect": (8, 9, 10, 11),
    "AuthCtr": (12, 13, 11),
}


def member(kind: str, auth: bool) -> MonitorMachine:
    return build_monitor(kind, auth)
