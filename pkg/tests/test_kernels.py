from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tflab import kernels


def _cycles_reference(succ):
    """Textbook walk: mark each cycle once."""
    n = len(succ)
    state = [0] * n  # 0 new, 1 on stack, 2 done
    lengths = []
    for s in range(n):
        path = []
        x = s
        while state[x] == 0:
            state[x] = 1
            path.append(x)
            x = succ[x]
        if state[x] == 1:
            lengths.append(len(path) - path.index(x))
        for p in path:
            state[p] = 2
    return Counter(lengths)


def _bm_reference(bits):
    """Shortest recurrence by exhaustive search (short inputs only)."""
    from tflab.analysis import lc_gf2_oracle
    return lc_gf2_oracle(bits)


@given(st.lists(st.integers(0, 63), min_size=1, max_size=64))
@settings(max_examples=60, deadline=None)
def test_cycle_lengths_both_paths_agree(raw):
    n = len(raw)
    succ = np.array([v % n for v in raw], dtype=np.int64)
    ref = _cycles_reference(list(succ))
    for fn in (kernels.cycles_loop, kernels._cycles_loop_py, kernels.cycles_np):
        lengths, indeg = fn(succ)
        assert Counter(lengths.tolist()) == ref
        assert indeg.tolist() == np.bincount(succ, minlength=n).tolist()


def test_cycle_lengths_dispatch(backend):
    succ = (np.arange(16) + 1) % 16
    lengths, indeg = kernels.cycle_lengths(succ)
    assert lengths.tolist() == [16]
    assert np.all(indeg == 1)
    lengths, _ = kernels.cycle_lengths(np.array([1, 0, 2, 2], dtype=np.int64))
    assert sorted(lengths.tolist()) == [1, 2]


def test_orbit(backend):
    table = (5 * np.arange(32) + 3) % 32
    out = kernels.orbit(table, 7, 40)
    x, ref = 7, []
    for _ in range(40):
        ref.append(x)
        x = (5 * x + 3) % 32
    assert out.tolist() == ref
    assert kernels.orbit_np(table, 7, 40).tolist() == kernels.orbit_loop(table, 7, 40).tolist()


def test_wreath_orbit(backend):
    tables = np.stack([(np.arange(16) + c) % 16 for c in (1, 0, 2)])
    out = kernels.wreath_orbit(tables, 0, 1, 10)
    x, ref = 0, []
    for t in range(10):
        ref.append(x)
        x = int(tables[(1 + t) % 3, x])
    assert out.tolist() == ref
    a = kernels.wreath_orbit_np(tables, 5, 2, 50)
    b = kernels.wreath_orbit_loop(tables, 5, 2, 50)
    assert a.tolist() == b.tolist()


@given(st.lists(st.integers(0, 1), min_size=0, max_size=12))
@settings(max_examples=80, deadline=None)
def test_berlekamp_massey_oracle(bits):
    s = np.array(bits, dtype=np.uint8)
    ref = _bm_reference(bits)
    assert kernels.bm_np(s) == ref
    assert kernels.bm_loop(s) == ref


def test_berlekamp_massey_dispatch(backend):
    assert kernels.berlekamp_massey([1] * 10) == 1
    assert kernels.berlekamp_massey([0, 1] * 6) == 2
    assert kernels.berlekamp_massey([0] * 9 + [1]) == 10
    rng = np.random.default_rng(3)
    s = rng.integers(0, 2, 300).astype(np.uint8)
    assert kernels.bm_np(s) == kernels.bm_loop(s)
