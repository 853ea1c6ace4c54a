"""Pure-Python versions of the compiled kernels (same signatures, same results)."""

from __future__ import annotations

from collections import deque

import numpy as np


def exhaustive_compare(delta, initial, sink, bad1, bad2, domain, max_len):
    delta = list(delta)
    bad1 = list(bad1)
    bad2 = list(bad2)
    domain = list(domain)
    nv = len(bad1)
    count = 0
    mismatches = 0
    first = None
    path: list[int] = []

    def walk(depth: int, m: int, ebad: bool, last: int) -> None:
        nonlocal count, mismatches, first
        for v in domain:
            m2 = delta[m * nv + v]
            if ebad:
                e = True
            elif depth == 0:
                e = bool(bad1[v])
            else:
                e = bool(bad2[last * nv + v])
            count += 1
            path.append(v)
            if (m2 == sink) != e:
                mismatches += 1
                if first is None:
                    first = list(path)
            if depth + 1 < max_len:
                walk(depth + 1, m2, e, v)
            path.pop()

    if max_len > 0 and domain:
        walk(0, initial, False, 0)
    return count, mismatches, first


def product_bfs(mon_next, mon_out, n_mon, mon_init, aut_delta, n_aut, aut_init, aut_sink,
                n_val, valmap, n_sym):
    mon_next = mon_next.tolist() if hasattr(mon_next, "tolist") else list(mon_next)
    mon_out = mon_out.tolist() if hasattr(mon_out, "tolist") else list(mon_out)
    aut_delta = list(aut_delta)
    valmap = list(valmap)
    n = n_mon * n_aut
    parent = np.full(n, -1, dtype=np.int32)
    psym = np.full(n, -1, dtype=np.int32)
    seen = bytearray(n)
    start = mon_init * n_aut + aut_init
    seen[start] = 1
    queue = deque([start])
    reached = 1
    while queue:
        pid = queue.popleft()
        m, s = divmod(pid, n_aut)
        base = m * n_sym
        row = s * n_val
        for a in range(n_sym):
            s2 = aut_delta[row + valmap[a * 2 + mon_out[base + a]]]
            if s2 == aut_sink:
                return reached, pid, a, parent, psym
            pid2 = mon_next[base + a] * n_aut + s2
            if not seen[pid2]:
                seen[pid2] = 1
                parent[pid2] = pid
                psym[pid2] = a
                queue.append(pid2)
                reached += 1
    return reached, -1, -1, parent, psym


def random_replay(mon_next, mon_out, mon_init, aut_delta, n_val, aut_init, aut_sink, valmap,
                  symbols, n_sym):
    mon_next = mon_next.tolist() if hasattr(mon_next, "tolist") else list(mon_next)
    mon_out = mon_out.tolist() if hasattr(mon_out, "tolist") else list(mon_out)
    aut_delta = list(aut_delta)
    valmap = list(valmap)
    bad = 0
    for row in symbols.tolist():
        m, s = mon_init, aut_init
        for a in row:
            k = m * n_sym + a
            r = mon_out[k]
            m = mon_next[k]
            s = aut_delta[s * n_val + valmap[a * 2 + r]]
            if s == aut_sink:
                bad += 1
                break
    return bad
