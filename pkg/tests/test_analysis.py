import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tflab import analysis as A
from tflab import ergodicity as E
from tflab import generators as G
from tflab import texpr as T

KS = "x + (x*x | 5)"


def states(src, n, seed=0):
    return G.OrdinarySpec(n, T.parse(src), seed).states(1 << n).astype(np.int64)


def bits_of(text):
    return np.array([int(c) for c in text], dtype=np.uint8)


# -- periods ----------------------------------------------------------------------

def test_period_examples():
    assert A.period(G.OrdinarySpec(4, T.parse("x + 1"), 0)) == (0, 16)
    lf = G.LfsrControl.standard(2, 1, word_bits=4)
    assert A.period(G.WreathSpec(4, [T.parse(KS)], lf, "^")) == (0, 48)
    mu, lam = A.period((5, lambda x: 9))
    assert mu <= 1 and lam == 1


def test_period_brent_against_naive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        succ = rng.integers(0, 40, 40)
        x0 = int(rng.integers(40))
        seen, x, i = {}, x0, 0
        while x not in seen:
            seen[x] = i
            x = int(succ[x])
            i += 1
        assert A.period((x0, lambda v: int(succ[v]))) == (seen[x], i - seen[x])


def test_period_cap():
    assert A.period((0, lambda v: v + 1), cap=100) is None


def test_sequence_periods():
    assert A.sequence_period([1, 2, 3, 1, 2, 3, 1]) == 3
    assert A.sequence_period([1, 2, 3]) is None
    assert A.cyclic_period(bits_of("0110" * 4)) == 4


# -- coordinate sequences ----------------------------------------------------------

def test_coord_seq_examples():
    c = A.coord_seq(np.arange(16), 2)
    assert c.period == 8 and c.half_negation
    c = A.coord_seq(states(KS, 6), 3)
    assert c.period == 16 and c.half_negation


def test_coord_seq_wreath_period():
    spec = G.WreathSpec(6, [T.parse("x + 2*(x*x | 1)")], [3, 0, 6], "+")
    xs = spec.states(64 * 3)
    c = A.coord_seq(xs, 1, m=3)
    assert c.half_negation
    assert c.period in (4, 12)
    # exact s from the oracle: compare against a direct period search
    b = A.coord_bits(xs, 1)
    assert c.period == min(p for p in range(1, len(b) + 1)
                           if len(b) % p == 0 and np.array_equal(b, np.roll(b, p)))


# -- distribution -------------------------------------------------------------------

def test_k_distribution_0132():
    bits = A.words_to_bits([0, 1, 3, 2], 2)
    r = A.k_distribution(bits, 2)
    assert r["counts"] == {"00": 3, "01": 1, "10": 1, "11": 3}
    assert not r["strict"]


def test_k_distribution_counter_strict():
    bits = A.words_to_bits(np.arange(256), 8)
    for k in range(1, 9):
        r = A.k_distribution(bits, k)
        assert r["strict"] and set(r["counts"].values()) == {2048 // (1 << k)}


def test_k_distribution_errors_and_zero():
    with pytest.raises(ValueError):
        A.k_distribution(np.zeros(8, np.uint8), 4)
    for k in (1, 2, 3):
        assert not A.k_distribution(np.zeros(8, np.uint8), k)["strict"]


def test_k_distribution_linear_flag():
    r = A.k_distribution(bits_of("0011"), 2, cyclic=False)
    assert r["counts"] == {"00": 1, "01": 1, "10": 0, "11": 1}


def test_q1_examples():
    b = bits_of("1111111100000111")
    r = A.q1_check(b)
    assert not r["pass"] and r["worst_k"] == 3 and 3 in r["failing_k"]
    lin = A.q1_check(b, cyclic=False)
    assert 3 in lin["failing_k"] and 4 not in lin["failing_k"]
    r = A.q1_check(bits_of("10"))
    assert r["pass"] and r["worst_deviation"] == 0
    r = A.q1_check(A.words_to_bits(states(KS, 8), 8))
    assert r["pass"]


def test_q1_exact_boundary():
    # deviation exactly N^-1/2 passes: N = 16, k = 4, five occurrences of 1111
    r = A.q1_check(bits_of("1111111100000111"), cyclic=False)
    assert r["per_k"][4] == 0.25


@given(st.lists(st.integers(0, 1), min_size=4, max_size=64))
@settings(max_examples=60, deadline=None)
def test_strict_distribution_implies_q1(bits):
    b = np.array(bits, np.uint8)
    K = int(math.floor(math.log2(len(b))))
    if all(A.k_distribution(b, k)["strict"] for k in range(1, K + 1)):
        assert A.q1_check(b)["pass"]


# -- linear complexity ---------------------------------------------------------------

def test_lc_gf2_examples():
    assert A.lc_gf2(A.coord_bits(states(KS, 6), 3)[:16]) == 9
    assert A.lc_gf2(np.ones(8, np.uint8)) == 1
    assert A.lc_gf2(bits_of("01")) == 2
    assert A.lc_gf2_oracle(bits_of("0101" * 3)) == 2


@given(st.lists(st.integers(0, 1), min_size=1, max_size=8))
@settings(max_examples=80, deadline=None)
def test_lc_gf2_matches_oracle_on_periods(bits):
    b = np.array(bits, np.uint8)
    assert A.lc_gf2(b) == A.lc_gf2_oracle(np.concatenate([b, b]))


def test_lc_ring_examples():
    x, seq = 0, []
    for _ in range(256):
        seq.append(x)
        x = (3 + 5 * x) % 256
    assert A.lc_ring(seq, 8) == 2
    assert A.lc_ring([7] * 10, 8) == 1
    q = states("1 + 3*x + 2*x*x", 8)
    r = A.lc_ring(q, 8, max_r=8)
    assert r is None or r > 2


def test_lc_ring_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(40):
        s = rng.integers(0, 8, 8)
        assert A.lc_ring(s, 3, max_r=3) == A.lc_ring_oracle(s, 3, max_r=3)
    for src in ("3 + 5*x", "1 + 3*x + 2*x*x", KS):
        s = states(src, 3)
        assert A.lc_ring(s, 3, max_r=4) == A.lc_ring_oracle(s, 3, max_r=4)


def test_solvable_mod2k_matches_brute():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(1, 4))
        rows, cols = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        Am = rng.integers(0, 1 << n, (rows, cols))
        b = rng.integers(0, 1 << n, rows)
        M = 1 << n
        brute = any(all((sum(int(Am[i, j]) * v[j] for j in range(cols)) - int(b[i])) % M == 0
                        for i in range(rows))
                    for v in itertools.product(range(M), repeat=cols))
        assert A.solvable_mod2k(Am, b, n) == brute


# -- l-error ---------------------------------------------------------------------------

def test_l_error_examples():
    b = A.coord_bits(states(KS, 8), 4)[:32]
    for ell in range(16):
        r = A.l_error_lc(b, ell)
        assert r.value > 16 and r.lower_bound == 17
    assert A.l_error_lc(b, 0).value == A.lc_gf2(b)
    r = A.l_error_lc(bits_of("0110"), 1)
    assert r.value == A.l_error_oracle(bits_of("0110"), 1)


def test_stamp_martin_matches_exhaustive():
    rng = np.random.default_rng(2)
    for _ in range(60):
        n = int(rng.choice([2, 4, 8, 16]))
        s = rng.integers(0, 2, n).astype(np.uint8)
        k = int(rng.integers(0, 3))
        assert A.stamp_martin(s, k) == A.l_error_oracle(s, k)


def test_l_error_non_power_of_two():
    b = bits_of("0110100")
    r = A.l_error_lc(b, 1)
    assert r.exact and r.method == "exhaustive" and r.value == A.l_error_oracle(b, 1)
    big = np.random.default_rng(0).integers(0, 2, 300).astype(np.uint8)
    r = A.l_error_lc(big, 3, rng_seed=1, anneal_steps=300)
    assert not r.exact and r.value <= A.lc_gf2(big)
    assert A.l_error_lc(big, 3, rng_seed=1, anneal_steps=300).value == r.value


# -- 2-adic complexity ---------------------------------------------------------------

def test_two_adic_examples():
    r = A.two_adic_complexity(bits_of("10"))
    assert r.fraction == Fraction(-1, 3) and r.log2 == round(math.log2(3), 6)
    for gamma in range(16):
        assert A.two_adic_complexity(None, "coord", j=2, gamma=gamma).log2 == round(math.log2(17), 6)
    for gamma in range(4):
        assert A.two_adic_complexity(None, "coord", j=1, gamma=gamma).log2 == round(math.log2(5), 6)


def test_two_adic_series_is_the_stream():
    """The 2-adic expansion of u/v reproduces the bits (checked mod 2^64)."""
    b = bits_of("1101001")
    f = A.two_adic_complexity(b).fraction
    M = 1 << 64
    val = f.numerator * pow(f.denominator, -1, M) % M
    want = sum(int(b[i % len(b)]) << i for i in range(64))
    assert val == want


def test_two_adic_modes_agree():
    for src in (KS, "x + 1", "3 + 5*x", "1 + 3*x + 2*x*x", "-inv(2*x + 1) - x"):
        xs = states(src, 6)
        for j in range(5):
            b = A.coord_bits(xs, j)[: 2 << j]
            g = A.two_adic_complexity(b)
            c = A.two_adic_complexity(b, "coord", j=j)
            assert (g.u, g.v) == (c.u, c.v)


# -- Gamma --------------------------------------------------------------------------

def test_gamma_round_trip_zero():
    table, z = A.gamma_construct([0, 0, 0], 3)
    assert E.table_report(table, 3).single_cycle
    assert A.gamma_extract(z, 3) == [0, 0, 0]


def test_gamma_extract_counter():
    # bit j of 0 .. 2^j - 1 is always zero for the counter
    assert A.gamma_extract(np.arange(8), 3) == [0, 0, 0]
    assert A.gamma_extract(np.arange(1, 9) % 8, 3) == [1, 2, 0b1000]


def test_gamma_random_round_trip():
    rng = np.random.default_rng(9)
    for _ in range(20):
        g = [int(rng.integers(0, 1 << (1 << j))) for j in range(4)]
        table = A.gamma_roundtrip("construct", g)
        assert E.table_report(table, 4).single_cycle
        z0 = A.gamma_construct(g, 4)[1][0]
        orbit = [int(z0)]
        for _ in range(15):
            orbit.append(int(table[orbit[-1]]))
        assert A.gamma_roundtrip("extract", orbit, 4) == g


def test_gamma_range_error():
    with pytest.raises(ValueError):
        A.gamma_construct([2, 0], 2)


# -- scatter and report ------------------------------------------------------------------

def test_pair_scatter():
    x, seq = 0, []
    for _ in range(256):
        seq.append(x)
        x = (3 + 5 * x) % 256
    assert A.pair_scatter(seq, 8, b=5)["lines"] == 1
    assert len(A.pair_scatter([4] * 10, 8)["points"]) == 1
    csv = A.scatter_csv(A.pair_scatter([0, 1, 3], 2)["points"])
    assert csv == "x,y\n0,0.25\n0.25,0.75\n"
    assert A.scatter_csv([]) == "x,y\n"


def test_occupancy_pgm():
    data = A.occupancy_pgm(np.arange(16), 4, 2)
    assert data.startswith(b"P5\n4 4\n255\n")
    img = np.frombuffer(data[len(b"P5\n4 4\n255\n"):], np.uint8)
    assert set(img.tolist()) <= {0, 255} and img.sum() > 0


def test_report_schema():
    rep = A.analyze(states(KS, 8), 8, max_lc_ring=3)
    assert set(rep) >= {"period", "uniform", "coords", "q1", "kdist", "lc_ring", "phi2", "files"}
    assert rep["period"] == {"pre": 0, "len": 256}
    assert rep["uniform"]["counts_ok"] and rep["kdist"]["strict"] and rep["q1"]["pass"]
    for c in rep["coords"]:
        assert c["period"] == 2 << c["j"] and c["half_negation"] and c["lc"] == (1 << c["j"]) + 1
