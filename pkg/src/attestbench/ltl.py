"""LTL formulas over the fixed atom vocabulary.

Three pieces live here: a text parser and printer, a finite-prefix evaluator
built on three-valued (Kleene) semantics, and a compiler from the checkable
safety fragment into deterministic bad-prefix automata. The evaluator is the
reference; the automata are what the checker and the runtime monitors use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterable, Mapping, Sequence, Union

from .layout import ATOM_BIT, ATOMS


class LtlSyntaxError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


class UnsupportedFormula(ValueError):
    pass


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class Next:
    arg: "Formula"


@dataclass(frozen=True)
class Eventually:
    arg: "Formula"


@dataclass(frozen=True)
class Always:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Not, Next, Eventually, Always, And, Or, Implies, Until]
UNARY = (Not, Next, Eventually, Always)
BINARY = (And, Or, Implies, Until)


def atoms_of(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset([f.name])
    if isinstance(f, UNARY):
        return atoms_of(f.arg)
    return atoms_of(f.left) | atoms_of(f.right)


# --- parser ----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(->)|([A-Za-z_][A-Za-z0-9_]*)|([()!&|]))")
_KEYWORDS = {"X", "F", "G", "U"}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = len(text) - len(text[pos:].lstrip())
            raise LtlSyntaxError(f"unexpected character {text[bad]!r}", bad)
        tok = m.group(1) or m.group(2) or m.group(3)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    tokens.append(("<end>", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> str:
        return self.tokens[self.i][0]

    def pos(self) -> int:
        return self.tokens[self.i][1]

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if expected is not None and tok != expected:
            raise LtlSyntaxError(f"expected {expected!r}, found {tok!r}", self.pos())
        self.i += 1
        return tok

    def implies(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self) -> Formula:
        left = self.conj()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self) -> Formula:
        left = self.until()
        while self.peek() == "&":
            self.take()
            left = And(left, self.until())
        return left

    def until(self) -> Formula:
        left = self.unary()
        while self.peek() == "U":
            self.take()
            left = Until(left, self.unary())
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        ops = {"!": Not, "X": Next, "F": Eventually, "G": Always}
        if tok in ops:
            self.take()
            return ops[tok](self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.peek()
        if tok == "(":
            self.take()
            inner = self.implies()
            self.take(")")
            return inner
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok) and tok not in _KEYWORDS:
            self.take()
            return Atom(tok)
        raise LtlSyntaxError(f"unexpected token {tok!r}", self.pos())


def parse(text: str) -> Formula:
    p = _Parser(text)
    f = p.implies()
    if p.peek() != "<end>":
        raise LtlSyntaxError(f"trailing input {p.peek()!r}", p.pos())
    return f


def pretty(f: Formula) -> str:
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, UNARY):
        op = {Not: "!", Next: "X", Eventually: "F", Always: "G"}[type(f)]
        inner = pretty(f.arg)
        if op == "!" and isinstance(f.arg, Atom):
            return op + inner
        return f"{op}({inner})"
    op = {And: "&", Or: "|", Implies: "->", Until: "U"}[type(f)]
    return f"({pretty(f.left)} {op} {pretty(f.right)})"


# --- fragment --------------------------------------------------------------

@dataclass(frozen=True)
class Fragment:
    """Shape of a checkable formula.

    kind "global": G(body) with body boolean over atoms and X(boolean).
    kind "hold":   G(a -> (a U b) | G(a)) with a, b boolean.
    """

    kind: str
    body: Formula | None = None
    hold: Formula | None = None
    release: Formula | None = None


def _is_boolean(f: Formula) -> bool:
    if isinstance(f, Atom):
        return True
    if isinstance(f, Not):
        return _is_boolean(f.arg)
    if isinstance(f, (And, Or, Implies)):
        return _is_boolean(f.left) and _is_boolean(f.right)
    return False


def _is_one_step(f: Formula) -> bool:
    if isinstance(f, Atom):
        return True
    if isinstance(f, Next):
        return _is_boolean(f.arg)
    if isinstance(f, Not):
        return _is_one_step(f.arg)
    if isinstance(f, (And, Or, Implies)):
        return _is_one_step(f.left) and _is_one_step(f.right)
    return False


def fragment_of(f: Formula) -> Fragment:
    if not isinstance(f, Always):
        raise UnsupportedFormula("checkable formulas start with G")
    body = f.arg
    if (isinstance(body, Implies) and isinstance(body.right, Or)
            and isinstance(body.right.left, Until) and isinstance(body.right.right, Always)):
        a, until, glob = body.left, body.right.left, body.right.right
        if (_is_boolean(a) and until.left == a and glob.arg == a and _is_boolean(until.right)):
            return Fragment("hold", hold=a, release=until.right)
    if _is_one_step(body):
        return Fragment("global", body=body)
    raise UnsupportedFormula(f"outside the safety fragment: {pretty(f)}")


def _check_vocabulary(f: Formula) -> tuple[str, ...]:
    names = atoms_of(f)
    unknown = sorted(n for n in names if n not in ATOM_BIT)
    if unknown:
        raise ValueError(f"unknown atom(s): {', '.join(unknown)}")
    return tuple(sorted(names, key=ATOM_BIT.__getitem__))


Valuation = Union[int, Iterable[str], Mapping[str, bool]]


def to_mask(v: Valuation) -> int:
    """Normalise a valuation (mask, set of true atoms, or mapping) to a mask."""
    if isinstance(v, int):
        return v
    if isinstance(v, Mapping):
        names = [k for k, b in v.items() if b]
    else:
        names = list(v)
    m = 0
    for n in names:
        if n not in ATOM_BIT:
            raise ValueError(f"unknown atom {n!r}")
        m |= 1 << ATOM_BIT[n]
    return m


# --- reference evaluator ---------------------------------------------------

@dataclass(frozen=True)
class Clean:
    pass


@dataclass(frozen=True)
class Violated:
    index: int


Verdict = Union[Clean, Violated]


def _k_not(a):
    return None if a is None else not a


def _k_and(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _k_or(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


def kleene(f: Formula, trace: Sequence[int], i: int = 0):
    """Three-valued truth of f at position i; positions past the end are unknown."""
    memo: dict[tuple[int, int], object] = {}
    n = len(trace)

    def ev(g: Formula, j: int):
        if j >= n:
            return None
        key = (id(g), j)
        if key in memo:
            return memo[key]
        if isinstance(g, Atom):
            r = bool(trace[j] >> ATOM_BIT[g.name] & 1)
        elif isinstance(g, Not):
            r = _k_not(ev(g.arg, j))
        elif isinstance(g, And):
            r = _k_and(ev(g.left, j), ev(g.right, j))
        elif isinstance(g, Or):
            r = _k_or(ev(g.left, j), ev(g.right, j))
        elif isinstance(g, Implies):
            r = _k_or(_k_not(ev(g.left, j)), ev(g.right, j))
        elif isinstance(g, Next):
            r = ev(g.arg, j + 1)
        else:
            # G, F and U unroll from the end of the trace, where the value is unknown.
            r = None
            for k in range(n - 1, j - 1, -1):
                if isinstance(g, Always):
                    r = _k_and(ev(g.arg, k), r)
                elif isinstance(g, Eventually):
                    r = _k_or(ev(g.arg, k), r)
                else:
                    r = _k_or(ev(g.right, k), _k_and(ev(g.left, k), r))
                memo[(id(g), k)] = r
        memo[key] = r
        return r

    return ev(f, i)


def _local_masks(names: tuple[str, ...]) -> list[int]:
    out = []
    for bits in product((0, 1), repeat=len(names)):
        m = 0
        for name, b in zip(names, bits):
            if b:
                m |= 1 << ATOM_BIT[name]
        out.append(m)
    return out


@lru_cache(maxsize=256)
def viable_extensions(f: Formula) -> tuple[int, ...]:
    """Valuations from which some infinite continuation satisfies f's body."""
    frag = fragment_of(f)
    names = _check_vocabulary(f)
    masks = _local_masks(names)
    if frag.kind == "hold":
        # Holding `a` forever satisfies every position, so nothing is a dead end.
        return tuple(masks)
    body = frag.body
    ok = {(u, v): kleene(body, [u, v], 0) for u in masks for v in masks}
    live = set(masks)
    while True:
        nxt = {u for u in live if any(ok[(u, v)] for v in live)}
        if nxt == live:
            return tuple(sorted(live))
        live = nxt


def eval_prefix(formula: Formula, trace: Sequence[Valuation]) -> Verdict:
    """Earliest index whose prefix no infinite continuation can satisfy."""
    fragment_of(formula)
    _check_vocabulary(formula)
    masks = [to_mask(v) for v in trace]
    ext = viable_extensions(formula)
    for i in range(len(masks)):
        prefix = masks[: i + 1]
        if all(kleene(formula, prefix + [v], 0) is False for v in ext):
            return Violated(i)
    return Clean()


# --- bad-prefix automata ---------------------------------------------------

def _eval2(f: Formula, cur: int, nxt: int) -> bool:
    """Two-valued truth of a one-step formula over (current, next) masks."""
    if isinstance(f, Atom):
        return bool(cur >> ATOM_BIT[f.name] & 1)
    if isinstance(f, Not):
        return not _eval2(f.arg, cur, nxt)
    if isinstance(f, And):
        return _eval2(f.left, cur, nxt) and _eval2(f.right, cur, nxt)
    if isinstance(f, Or):
        return _eval2(f.left, cur, nxt) or _eval2(f.right, cur, nxt)
    if isinstance(f, Implies):
        return (not _eval2(f.left, cur, nxt)) or _eval2(f.right, cur, nxt)
    if isinstance(f, Next):
        return _eval2(f.arg, nxt, 0)
    raise UnsupportedFormula(f"unexpected node {type(f).__name__}")


@dataclass(frozen=True)
class BadPrefixAutomaton:
    """Deterministic, total automaton whose `sink` state marks a violation.

    Inputs are local valuations: bit j of the input index is `atoms[j]`.
    """

    atoms: tuple[str, ...]
    labels: tuple[str, ...]
    initial: int
    sink: int
    delta: tuple[int, ...]

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def n_inputs(self) -> int:
        return 1 << len(self.atoms)

    def local(self, mask: int) -> int:
        v = 0
        for j, name in enumerate(self.atoms):
            if mask >> ATOM_BIT[name] & 1:
                v |= 1 << j
        return v

    def step(self, state: int, mask: int) -> int:
        return self.delta[state * self.n_inputs + self.local(mask)]

    def run(self, trace: Sequence[Valuation]) -> Verdict:
        s = self.initial
        for i, v in enumerate(trace):
            s = self.step(s, to_mask(v))
            if s == self.sink:
                return Violated(i)
        return Clean()


def _global_mask(atoms: tuple[str, ...], v: int) -> int:
    m = 0
    for j, name in enumerate(atoms):
        if v >> j & 1:
            m |= 1 << ATOM_BIT[name]
    return m


@lru_cache(maxsize=256)
def to_monitor(formula: Formula) -> BadPrefixAutomaton:
    frag = fragment_of(formula)
    atoms = _check_vocabulary(formula)
    n_in = 1 << len(atoms)
    full = [_global_mask(atoms, v) for v in range(n_in)]

    if frag.kind == "hold":
        a, b = frag.hold, frag.release
        delta = []
        for state in (0, 1):
            for v in range(n_in):
                m = full[v]
                ha, hb = _eval2(a, m, 0), _eval2(b, m, 0)
                if state == 0:
                    delta.append(1 if ha and not hb else 0)
                else:
                    delta.append(0 if hb else (1 if ha else 2))
        delta.extend([2] * n_in)
        return BadPrefixAutomaton(atoms, ("ok", "armed", "violation"), 0, 2, tuple(delta))

    body = frag.body
    allowed = {(u, v): _eval2(body, full[u], full[v]) for u in range(n_in) for v in range(n_in)}
    live = frozenset(range(n_in))
    while True:
        shrunk = frozenset(u for u in live if any(allowed[(u, v)] for v in live))
        if shrunk == live:
            break
        live = shrunk
    # A state is the set of valuations the next position may take.
    states: list[frozenset[int]] = [live]
    index = {live: 0}
    rows: list[list[int]] = []
    k = 0
    while k < len(states):
        s = states[k]
        row = []
        for v in range(n_in):
            if v not in s:
                row.append(-1)
                continue
            succ = frozenset(w for w in live if allowed[(v, w)])
            if succ not in index:
                index[succ] = len(states)
                states.append(succ)
            row.append(index[succ])
        rows.append(row)
        k += 1
    sink = len(states)
    delta = [sink if t < 0 else t for row in rows for t in row] + [sink] * n_in
    labels = tuple(["ok"] + [f"obligation{i}" for i in range(1, sink)] + ["violation"])
    return BadPrefixAutomaton(atoms, labels, 0, sink, tuple(delta))
