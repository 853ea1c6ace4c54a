# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: trie enumeration, product BFS and random replay.

Signatures mirror attestbench._kernels_py, which is the reference fallback.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAX_DEPTH = 32


cdef struct Walk:
    const int *delta
    const unsigned char *bad1
    const unsigned char *bad2
    const int *domain
    int nd
    int nv
    int sink
    int max_len
    long long count
    long long mismatches
    int have_first
    int first_len
    int path[MAX_DEPTH]
    int first[MAX_DEPTH]


cdef void _walk(Walk *w, int depth, int m, int ebad, int last) noexcept nogil:
    cdef int k, v, m2, e, i
    cdef int nv = w.nv
    for k in range(w.nd):
        v = w.domain[k]
        m2 = w.delta[m * nv + v]
        if ebad:
            e = 1
        elif depth == 0:
            e = w.bad1[v]
        else:
            e = w.bad2[last * nv + v]
        w.count += 1
        w.path[depth] = v
        if (m2 == w.sink) != (e != 0):
            w.mismatches += 1
            if not w.have_first:
                w.have_first = 1
                w.first_len = depth + 1
                for i in range(depth + 1):
                    w.first[i] = w.path[i]
        if depth + 1 < w.max_len:
            _walk(w, depth + 1, m2, e, v)


def exhaustive_compare(const int[::1] delta, int initial, int sink,
                       const unsigned char[::1] bad1, const unsigned char[::1] bad2,
                       const int[::1] domain, int max_len):
    """Compare an automaton against windowed prefix verdicts on every trace.

    Returns (traces, mismatches, first_mismatch) where first_mismatch is a
    list of valuation indices or None.
    """
    cdef Walk w
    if max_len > MAX_DEPTH:
        raise ValueError("max_len too large")
    w.delta = &delta[0]
    w.bad1 = &bad1[0]
    w.bad2 = &bad2[0]
    w.domain = &domain[0]
    w.nd = domain.shape[0]
    w.nv = bad1.shape[0]
    w.sink = sink
    w.max_len = max_len
    w.count = 0
    w.mismatches = 0
    w.have_first = 0
    w.first_len = 0
    if max_len > 0 and w.nd > 0:
        with nogil:
            _walk(&w, 0, initial, 0, 0)
    first = None
    if w.have_first:
        first = [w.first[i] for i in range(w.first_len)]
    return w.count, w.mismatches, first


def product_bfs(const int[::1] mon_next, const unsigned char[::1] mon_out, int n_mon, int mon_init,
                const int[::1] aut_delta, int n_aut, int aut_init, int aut_sink, int n_val,
                const int[::1] valmap, int n_sym):
    """Breadth-first search of monitor x automaton over every input symbol.

    Returns (reached, bad_pid, bad_sym, parent, parent_sym); bad_pid is -1
    when the sink is unreachable.
    """
    cdef int n = n_mon * n_aut
    parent_arr = np.full(n, -1, dtype=np.int32)
    psym_arr = np.full(n, -1, dtype=np.int32)
    cdef int[::1] parent = parent_arr
    cdef int[::1] psym = psym_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] seen_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] seen = seen_arr
    cdef int[::1] queue = np.empty(n, dtype=np.int32)
    cdef int head = 0, tail = 0, pid, m, s, a, m2, r, v, s2, pid2
    cdef int bad_pid = -1, bad_sym = -1
    pid = mon_init * n_aut + aut_init
    seen[pid] = 1
    queue[tail] = pid
    tail += 1
    with nogil:
        while head < tail and bad_pid < 0:
            pid = queue[head]
            head += 1
            m = pid // n_aut
            s = pid % n_aut
            for a in range(n_sym):
                m2 = mon_next[m * n_sym + a]
                r = mon_out[m * n_sym + a]
                v = valmap[a * 2 + r]
                s2 = aut_delta[s * n_val + v]
                if s2 == aut_sink:
                    bad_pid = pid
                    bad_sym = a
                    break
                pid2 = m2 * n_aut + s2
                if not seen[pid2]:
                    seen[pid2] = 1
                    parent[pid2] = pid
                    psym[pid2] = a
                    queue[tail] = pid2
                    tail += 1
    return tail, bad_pid, bad_sym, parent_arr, psym_arr


def random_replay(const int[::1] mon_next, const unsigned char[::1] mon_out, int mon_init,
                  const int[::1] aut_delta, int n_val, int aut_init, int aut_sink,
                  const int[::1] valmap, const short[:, ::1] symbols, int n_sym):
    """Run each row of `symbols` through monitor and automaton; count violating rows."""
    cdef Py_ssize_t n = symbols.shape[0], length = symbols.shape[1], i, j
    cdef int m, s, a, r
    cdef long long bad = 0
    with nogil:
        for i in range(n):
            m = mon_init
            s = aut_init
            for j in range(length):
                a = symbols[i, j]
                r = mon_out[m * n_sym + a]
                m = mon_next[m * n_sym + a]
                s = aut_delta[s * n_val + valmap[a * 2 + r]]
                if s == aut_sink:
                    bad += 1
                    break
    return bad
