"""Exhaustive agreement between the bad-prefix automata and the reference evaluator.

For every checkable formula a prefix becomes bad at index i>0 based only on
the letters at i-1 and i (and at index 0 on the first letter alone), provided
no earlier index was bad. The reference verdicts for one- and two-letter
traces are therefore taken straight from `eval_prefix`, and a trie walk over
all traces up to the requested length compares them against the automaton.
`direct_agreement` re-checks that windowing claim by calling `eval_prefix` on
whole traces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .layout import ALPHABET_SIZE, RESET_MASK, SYMBOL_ATOMS
from .ltl import BadPrefixAutomaton, Formula, Violated, _global_mask, eval_prefix, to_monitor


def realizable_valuations(aut: BadPrefixAutomaton) -> list[int]:
    """Local valuations produced by some (abstract symbol, reset bit) pair."""
    seen = set()
    for sym in range(ALPHABET_SIZE):
        m = SYMBOL_ATOMS[sym]
        seen.add(aut.local(m))
        seen.add(aut.local(m | RESET_MASK))
    return sorted(seen)


def window_tables(formula: Formula, aut: BadPrefixAutomaton) -> tuple[np.ndarray, np.ndarray]:
    nv = aut.n_inputs
    full = [_global_mask(aut.atoms, v) for v in range(nv)]
    bad1 = np.zeros(nv, dtype=np.uint8)
    bad2 = np.zeros(nv * nv, dtype=np.uint8)
    for u in range(nv):
        bad1[u] = eval_prefix(formula, [full[u]]) == Violated(0)
        for v in range(nv):
            bad2[u * nv + v] = eval_prefix(formula, [full[u], full[v]]) == Violated(1)
    return bad1, bad2


@dataclass(frozen=True)
class Agreement:
    traces: int
    mismatches: int
    first_mismatch: tuple[int, ...] | None
    domain_size: int
    seconds: float
    backend: str


# Above this many Boolean valuations the length-6 trie no longer fits the time
# budget, so the walk falls back to valuations the abstraction can produce.
FULL_DOMAIN_LIMIT = 32


def _domain(aut: BadPrefixAutomaton, domain: str) -> list[int]:
    if domain == "auto":
        domain = "full" if aut.n_inputs <= FULL_DOMAIN_LIMIT else "realizable"
    if domain == "realizable":
        return realizable_valuations(aut)
    if domain == "full":
        return list(range(aut.n_inputs))
    raise ValueError(f"unknown domain {domain!r}")


def exhaustive_agreement(formula: Formula, max_len: int = 6, domain: str = "auto",
                         backend=None) -> Agreement:
    aut = to_monitor(formula)
    values = _domain(aut, domain)
    bad1, bad2 = window_tables(formula, aut)
    impl = backend or kernels
    start = time.perf_counter()
    count, bad, first = impl.exhaustive_compare(
        np.asarray(aut.delta, dtype=np.int32), aut.initial, aut.sink,
        bad1, bad2, np.asarray(values, dtype=np.int32), max_len,
    )
    elapsed = time.perf_counter() - start
    name = "python" if impl is kernels.python_backend else kernels.BACKEND if impl is kernels else "compiled"
    return Agreement(int(count), int(bad), tuple(first) if first else None, len(values), elapsed, name)


def direct_agreement(formula: Formula, max_len: int, domain: str = "auto") -> tuple[int, int]:
    """Compare `eval_prefix` and the automaton trace by trace; returns (traces, mismatches)."""
    aut = to_monitor(formula)
    values = _domain(aut, domain)
    full = [_global_mask(aut.atoms, v) for v in values]
    count = bad = 0
    for n in range(1, max_len + 1):
        for trace in product(full, repeat=n):
            count += 1
            if aut.run(trace) != eval_prefix(formula, trace):
                bad += 1
    return count, bad
