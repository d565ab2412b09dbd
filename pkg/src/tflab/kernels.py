"""Hot loops: functional-graph cycles, orbit iteration, Berlekamp-Massey.

Each kernel has a loop version compiled with numba and a numpy version.
The public wrappers pick one according to :data:`tflab._accel.JIT_ENABLED`.
Both versions are importable (``*_loop`` / ``*_np``) so tests and the
benchmark can compare them.
"""
import numpy as np

from . import _accel
from ._accel import njit


# -- functional graph -------------------------------------------------------

def _cycles_loop_py(succ):
    n = succ.shape[0]
    indeg = np.zeros(n, np.int64)
    for x in range(n):
        indeg[succ[x]] += 1
    state = np.zeros(n, np.int8)
    pos = np.zeros(n, np.int64)
    path = np.empty(n, np.int64)
    lengths = np.empty(n, np.int64)
    nc = 0
    for s in range(n):
        if state[s] != 0:
            continue
        plen = 0
        x = s
        while state[x] == 0:
            state[x] = 1
            pos[x] = plen
            path[plen] = x
            plen += 1
            x = succ[x]
        if state[x] == 1:
            lengths[nc] = plen - pos[x]
            nc += 1
        for t in range(plen):
            state[path[t]] = 2
    return lengths[:nc].copy(), indeg


cycles_loop = njit(_cycles_loop_py)


def cycles_np(succ):
    """Cycle lengths of the map ``x -> succ[x]`` by pointer doubling."""
    succ = np.asarray(succ, dtype=np.int64)
    n = succ.shape[0]
    indeg = np.bincount(succ, minlength=n).astype(np.int64)
    label = np.arange(n, dtype=np.int64)
    jump = succ.copy()
    steps = max(1, int(n - 1).bit_length())
    for _ in range(steps):
        label = np.minimum(label, label[jump])
        jump = jump[jump]
    # jump == f^(2^steps) with 2^steps >= n lands every node on its cycle
    on_cycle = np.zeros(n, dtype=bool)
    on_cycle[jump] = True
    _, counts = np.unique(label[on_cycle], return_counts=True)
    return counts.astype(np.int64), indeg


def cycle_lengths(succ):
    """Return ``(lengths, indegree)`` for the functional graph ``succ``."""
    succ = np.ascontiguousarray(succ, dtype=np.int64)
    if _accel.JIT_ENABLED:
        return cycles_loop(succ)
    return cycles_np(succ)


# -- orbits -----------------------------------------------------------------

def _orbit_loop_py(table, x0, count):
    out = np.empty(count, np.int64)
    x = x0
    for i in range(count):
        out[i] = x
        x = table[x]
    return out


orbit_loop = njit(_orbit_loop_py)


def orbit_np(table, x0, count):
    table = np.asarray(table, dtype=np.int64)
    out = np.empty(count, np.int64)
    x = int(x0)
    for i in range(count):
        out[i] = x
        x = int(table[x])
    return out


def orbit(table, x0, count):
    """``x0, t[x0], t[t[x0]], ...`` (``count`` terms)."""
    table = np.ascontiguousarray(table, dtype=np.int64)
    if _accel.JIT_ENABLED:
        return orbit_loop(table, np.int64(x0), np.int64(count))
    return orbit_np(table, x0, count)


def _wreath_orbit_loop_py(tables, x0, i0, count):
    m = tables.shape[0]
    out = np.empty(count, np.int64)
    x = x0
    i = i0 % m
    for t in range(count):
        out[t] = x
        x = tables[i, x]
        i += 1
        if i == m:
            i = 0
    return out


wreath_orbit_loop = njit(_wreath_orbit_loop_py)


def wreath_orbit_np(tables, x0, i0, count):
    tables = np.asarray(tables, dtype=np.int64)
    m = tables.shape[0]
    out = np.empty(count, np.int64)
    x = int(x0)
    for t in range(count):
        out[t] = x
        x = int(tables[(i0 + t) % m, x])
    return out


def wreath_orbit(tables, x0, i0, count):
    """States of ``x_{t+1} = g_{(i0+t) mod m}(x_t)`` given per-clock tables."""
    tables = np.ascontiguousarray(tables, dtype=np.int64)
    if _accel.JIT_ENABLED:
        return wreath_orbit_loop(tables, np.int64(x0), np.int64(i0), np.int64(count))
    return wreath_orbit_np(tables, x0, i0, count)


# -- Berlekamp-Massey over GF(2) ---------------------------------------------

def _bm_loop_py(s):
    n = s.shape[0]
    c = np.zeros(n + 1, np.uint8)
    b = np.zeros(n + 1, np.uint8)
    t = np.zeros(n + 1, np.uint8)
    c[0] = 1
    b[0] = 1
    L = 0
    m = -1
    for i in range(n):
        d = s[i]
        for j in range(1, L + 1):
            d ^= c[j] & s[i - j]
        if d:
            for j in range(n + 1):
                t[j] = c[j]
            shift = i - m
            for j in range(n + 1 - shift):
                c[j + shift] ^= b[j]
            if 2 * L <= i:
                L = i + 1 - L
                m = i
                for j in range(n + 1):
                    b[j] = t[j]
    return L


bm_loop = njit(_bm_loop_py)


def bm_np(s):
    s = np.asarray(s, dtype=np.uint8)
    n = s.shape[0]
    c = np.zeros(n + 1, np.uint8)
    b = np.zeros(n + 1, np.uint8)
    c[0] = b[0] = 1
    L, m = 0, -1
    for i in range(n):
        d = s[i]
        if L:
            d ^= np.bitwise_xor.reduce(c[1:L + 1] & s[i - L:i][::-1])
        if d:
            t = c.copy()
            shift = i - m
            c[shift:] ^= b[:n + 1 - shift]
            if 2 * L <= i:
                L, m, b = i + 1 - L, i, t
    return int(L)


def berlekamp_massey(bits):
    """Length of the shortest LFSR producing the finite bit string."""
    s = np.ascontiguousarray(bits, dtype=np.uint8)
    if s.size == 0:
        return 0
    if _accel.JIT_ENABLED:
        return int(bm_loop(s))
    return bm_np(s)
