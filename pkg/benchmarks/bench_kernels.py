"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Inputs are prepared once; only the kernel calls are timed. Both backends must
return identical results, which the script asserts before printing timings.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from attestbench import checker, kernels
from attestbench.equivalence import _domain, window_tables
from attestbench.layout import ALPHABET_SIZE, default_layout
from attestbench.ltl import to_monitor


def _best(fn, repeat: int) -> tuple[float, object]:
    best, result = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t)
    return best, result


def cases():
    layout = default_layout(True)
    monitor = checker.composed_monitor(layout)
    table = monitor.table()
    f11 = checker.spec_formula(11, True)
    aut = to_monitor(f11)
    delta = np.asarray(aut.delta, dtype=np.int32)
    valmap = checker._valmap(aut)
    yield "product_bfs (spec 11, auth monitor)", lambda k: k.product_bfs(
        table.next, table.out, table.n_states, table.initial, delta, aut.n_states,
        aut.initial, aut.sink, aut.n_inputs, valmap, ALPHABET_SIZE)[:3]

    symbols = np.random.default_rng(0).integers(0, ALPHABET_SIZE, size=(2000, 128), dtype=np.int16)
    yield "random_replay (2000 x 128 symbols)", lambda k: k.random_replay(
        table.next, table.out, table.initial, delta, aut.n_inputs, aut.initial,
        aut.sink, valmap, symbols, ALPHABET_SIZE)

    f2 = checker.spec_formula(2)
    aut2 = to_monitor(f2)
    bad1, bad2 = window_tables(f2, aut2)
    values = np.asarray(_domain(aut2, "full"), dtype=np.int32)
    delta2 = np.asarray(aut2.delta, dtype=np.int32)
    yield "exhaustive_compare (spec 2, length 5)", lambda k: k.exhaustive_compare(
        delta2, aut2.initial, aut2.sink, bad1, bad2, values, 5)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':<40} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for name, run in cases():
        tp, rp = _best(lambda: run(kernels.python_backend), args.repeat)
        if compiled is None:
            print(f"{name:<40} {tp:>10.4f} {'-':>11} {'-':>8}")
            continue
        tc, rc = _best(lambda: run(compiled), args.repeat)
        if repr(rp) != repr(rc):
            print(f"{name}: backends disagree: {rp!r} vs {rc!r}", file=sys.stderr)
            return 1
        print(f"{name:<40} {tp:>10.4f} {tc:>11.4f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
