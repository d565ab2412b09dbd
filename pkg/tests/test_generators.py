import json

import numpy as np
import pytest

from tflab import analysis as A
from tflab import ergodicity as E
from tflab import generators as G
from tflab import texpr as T
from tflab.ergodicity import PROVEN, REFUTED, UNKNOWN

KS = "x + (x*x | 5)"


def ks_spec(n=5, seed=0):
    return G.OrdinarySpec(n, T.parse(KS), seed)


# -- LFSR ------------------------------------------------------------------------

def test_primitive_table():
    for s, poly in G.PRIMITIVE_POLYS.items():
        assert poly.bit_length() - 1 == s
        assert G.is_primitive(poly)
    assert not G.is_primitive(0b10001)   # x^4 + 1
    assert not G.is_primitive(0b11111)   # x^4+x^3+x^2+x+1 has order 5


@pytest.mark.parametrize("s", range(2, 11))
def test_lfsr_period(s):
    lf = G.LfsrControl.standard(s, 1)
    lf.validate()
    bits = lf.bits(3 * lf.period)
    assert A.cyclic_period(bits[: lf.period]) == lf.period
    assert np.array_equal(bits[: lf.period], bits[lf.period: 2 * lf.period])
    assert bits[: lf.period].sum() == 1 << (s - 1)


def test_lfsr_rejects_zero_state_and_bad_taps():
    with pytest.raises(G.SpecError):
        G.LfsrControl.standard(4, 0).validate()
    with pytest.raises(G.SpecError):
        G.LfsrControl(4, 0b11111, 1).validate()


def test_lfsr_words_are_windows():
    lf = G.LfsrControl.standard(4, 1, word_bits=3)
    b = lf.bits(20)
    w = lf.words(10)
    for t in range(10):
        assert w[t] == b[t] | (b[t + 1] << 1) | (b[t + 2] << 2)


# -- ordinary generator -------------------------------------------------------------

def test_ordinary_counter():
    spec = G.OrdinarySpec(3, T.parse("x + 1"), 0)
    assert G.keystream(spec, 10).tolist() == [0, 1, 2, 3, 4, 5, 6, 7, 0, 1]


def test_ordinary_ks_first_values():
    ks = G.keystream(ks_spec(), 32)
    assert ks[:3].tolist() == [0, 5, 2]
    x, ref = 0, []
    for _ in range(32):
        ref.append(x)
        x = (x + ((x * x) | 5)) % 32
    assert ks.tolist() == ref
    assert sorted(ks.tolist()) == list(range(32))


def test_unvalidated_spec_refused():
    with pytest.raises(G.SpecError):
        G.keystream(G.OrdinarySpec(8, T.parse("x + 2"), 0), 4)


def test_wide_ordinary_path_matches_table_path():
    f = T.parse(KS)
    a = G.OrdinarySpec(24, f, 7).states(50)
    b = np.array([0] * 50, dtype=np.uint64)
    x = 7
    for i in range(50):
        b[i] = x
        x = T.evaluate(f, x, 24)
    assert a.tolist() == b.tolist()
    wide = G.OrdinarySpec(40, f, 7)
    assert G.keystream(wide, 5)[:5].tolist()[1] == T.evaluate(f, 7, 40)


def test_replay_prefix():
    spec = ks_spec(10, 3)
    a = G.keystream(spec, 100)
    b = G.keystream(spec, 101)
    assert np.array_equal(a, b[:100])


# -- outputs --------------------------------------------------------------------------

def test_bitrev():
    assert G.bitrev(0b0001, 4) == 0b1000
    xs = np.arange(1 << 8)
    assert np.array_equal(G.bitrev(G.bitrev(xs, 8), 8), xs)


def test_bitrev_output_counter_coordinates():
    n = 8
    out = G.bitrev_output(T.parse("1 + x"), n)
    spec = G.OrdinarySpec(n, T.parse("x + 1"), 0, out)
    ks = G.keystream(spec, 1 << n)
    for j in range(n):
        bits = A.coord_bits(ks, j)
        p = A.cyclic_period(bits)
        assert p % (1 << n) == 0
        assert A.lc_gf2(bits) > 1 << (n - 1)


def test_bitrev_output_needs_ergodic_h():
    with pytest.raises(G.SpecError):
        G.bitrev_output(T.parse("x + 2"), 8)


def test_top_output_uniform():
    spec = G.OrdinarySpec(8, T.parse(KS), 0, G.OutputDesc("top", {"k": 3}))
    ks = G.keystream(spec, 256)
    assert np.all(np.bincount(ks, minlength=8) == 32)


# -- wreath products -------------------------------------------------------------------

def counter_wreath(cs, n=6):
    return G.WreathSpec(n, [T.parse("1 + x + 4*(x*x ^ 3)")], list(cs), "+")


def test_wreath_condition_examples():
    assert G.wreath_check(counter_wreath((1, 0, 0, 0))).result == PROVEN
    v = G.wreath_check(counter_wreath((1, 1, 0, 0)))
    assert v.result == REFUTED and v.witness["condition"] == 2
    with pytest.raises(G.SpecError):
        G.keystream(counter_wreath((1, 1, 0, 0)), 10)


def test_wreath_lfsr_xor_example():
    lf = G.LfsrControl.standard(2, 1, word_bits=4)
    spec = G.WreathSpec(4, [T.parse(KS)], lf, "^")
    assert sum(spec.consts()) % 2 == 0
    assert G.wreath_check(spec).result == PROVEN
    xs = spec.states(48 * 2)
    assert A.period(spec) == (0, 48)
    assert np.all(np.bincount(xs[:48].astype(np.int64), minlength=16) == 3)


def test_wreath_condition1_is_only_sufficient():
    # parities (1,1,1) have period 1 != m, yet the sequence is still uniform
    spec = G.WreathSpec(5, [T.parse("x + 2*(x*x | 1)")], [7, 3, 3], "+")
    v = G.wreath_check(spec)
    assert v.result == UNKNOWN and v.detail["condition_1"]["shortest_period"] == 1
    xs = spec.states(96)
    assert A.cyclic_period(xs) == 96
    assert np.all(np.bincount(xs.astype(np.int64), minlength=32) == 3)
    # failing condition 1 together with condition 2 is still refuted
    v = G.wreath_check(counter_wreath((1, 0, 1, 0)))
    assert v.result == REFUTED and v.witness["condition"] == 2


def test_wreath_condition3_forms_agree():
    rng = np.random.default_rng(5)
    hs = [T.parse(s) for s in ("x + 2*x*x", "x ^ (4*x*x)", "(x ^ 6) + 4*x*x", "3*x", "x + 4*(x ^ 1)")]
    for _ in range(40):
        m = int(rng.integers(1, 5))
        gs = [T.const(int(rng.integers(0, 16))) + hs[int(rng.integers(len(hs)))] for _ in range(m)]
        c = G.wreath_conditions(gs, 5)
        assert c["cond3_sum"] == c["cond3_anf_odd"]


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_wreath_law_matches_oracle(m):
    """Proven wreath verdicts give period 2^n m with every residue m times."""
    rng = np.random.default_rng(m)
    n = 5
    hs = ["x + 2*(x*x | 1)", "x ^ (4*(x*x | 1))", "(x ^ 6) + 4*x*x", "3*x + 2"]
    seen = 0
    for _ in range(30):
        cs = [int(v) for v in rng.integers(0, 8, m)]
        spec = G.WreathSpec(n, [T.parse(hs[int(rng.integers(len(hs)))])], cs, "+")
        v = G.wreath_check(spec)
        mu, lam = A.period(spec)
        xs = spec.states(lam)
        good = lam == (1 << n) * m and np.all(np.bincount(xs.astype(np.int64), minlength=1 << n) == m)
        if v.result == PROVEN:
            seen += 1
            assert mu == 0 and good
        elif v.result == REFUTED:
            assert not good
        else:
            assert v.detail["condition_1"]
    assert seen


def test_wreath_lemma_half_negation_and_decimation():
    spec = G.WreathSpec(6, [T.parse("x + 2*(x*x | 1)")], [3, 0, 6], "+")
    assert G.wreath_check(spec).result == PROVEN
    m, n = 3, 6
    N = (1 << n) * m
    xs = spec.states(2 * N).astype(np.int64)
    for s in range(n):
        d = (xs >> s) & 1
        assert np.all(d[(1 << s) * m:(1 << s) * m + N] ^ d[:N] == 1)
    for r in range(m):
        dec = xs[r::m][: 1 << n]
        for t in range(1, n + 1):
            red = dec[: 1 << t] % (1 << t)
            assert sorted(red.tolist()) == list(range(1 << t))


def test_wreath_balanced_outputs():
    outs = [G.OutputDesc("top", {"k": 2}), G.OutputDesc("identity")]
    spec = G.WreathSpec(6, [T.parse("x + 2*(x*x | 1)")], [3, 0], "+", outputs=[outs[0]])
    assert G.wreath_check(spec).result == PROVEN
    ks = G.keystream(spec, 128)
    assert np.all(np.bincount(ks, minlength=4) == 32)


# -- ABC ---------------------------------------------------------------------------------

def test_abc_default_validates():
    spec = G.default_abc()
    v = G.abc_validate(spec)
    assert v.result == PROVEN and v.theorem == "erg_sum"


@pytest.mark.parametrize("field,value,needle", [
    ("d", 2, "d must be odd"), ("dj0", 3, "d_0"), ("dj2", 8, "ord_2(d_2)"),
])
def test_abc_rejections(field, value, needle):
    spec = G.default_abc()
    if field == "d":
        spec.d = value
    else:
        j = int(field[2:])
        dj = list(spec.dj)
        dj[j] = value
        spec.dj = tuple(dj)
    v = G.abc_validate(spec)
    assert v.result == REFUTED and needle in v.witness["violated"]
    with pytest.raises(G.SpecError):
        G.keystream(spec, 4)


def test_abc_split():
    spec = G.default_abc()
    for c in range(256):
        cl, cr = spec.split(c)
        assert cl + cr == c and cr < 16 and cl % 16 == 0


def test_abc_state_period_and_uniformity():
    spec = G.default_abc(8, 3)
    assert G.abc_validate(spec).result == PROVEN
    mu, lam = A.period(spec)
    assert (mu, lam) == (0, 7 * 256)
    xs = spec.states(lam).astype(np.int64)
    assert np.all(np.bincount(xs, minlength=256) == 7)


def test_abc_output_is_sum_formula():
    spec = G.default_abc()
    xs = spec.states(40)
    cw = spec.control_words()
    outs = spec.outputs(40)
    for i, x in enumerate(xs.tolist()):
        s = spec.d + sum(spec.dj[j] * ((x >> (8 - j - 1)) & 1) for j in range(8))
        assert outs[i] == (spec.split(int(cw[i % len(cw)]))[0] + s) % 256


# -- files and ciphers --------------------------------------------------------------------

def test_xor_cipher():
    d = np.array([1, 0, 1, 0], np.uint8)
    k = np.array([0, 1, 1, 0], np.uint8)
    assert G.xor_cipher(k, d).tolist() == [1, 1, 0, 0]
    assert G.xor_cipher(k, np.zeros(4, np.uint8)).tolist() == k.tolist()
    rng = np.random.default_rng(0)
    data = rng.integers(0, 2, 8192).astype(np.uint8)
    key = G.words_to_bits(G.keystream(ks_spec(16), 512), 16)
    assert np.array_equal(G.xor_cipher(key, G.xor_cipher(key, data)), data)
    with pytest.raises(ValueError):
        G.xor_cipher(k[:2], d)


@pytest.mark.parametrize("packed", [False, True])
@pytest.mark.parametrize("width", [5, 8, 13, 32])
def test_keystream_file_round_trip(tmp_path, packed, width):
    words = G.keystream(G.OrdinarySpec(width, T.parse(KS), 1), 100)
    p = tmp_path / "ks.bin"
    G.write_keystream(p, words, width, packed)
    back = G.read_keystream(p, width, packed, count=100)
    assert back.astype(np.int64).tolist() == words.tolist()
    if not packed:
        assert p.stat().st_size == 100 * ((width + 7) // 8)


def test_spec_json_round_trip():
    specs = [
        G.OrdinarySpec(8, T.parse(KS), 3),
        G.WreathSpec(6, [T.parse("x + 2*(x*x | 1)")], [3, 0, 6], "+", seed=1),
        G.WreathSpec(4, [T.parse(KS)], G.LfsrControl.standard(2, 1, 4), "^"),
        G.default_abc(),
    ]
    for spec in specs:
        obj = json.loads(json.dumps(G.spec_to_json(spec)))
        back = G.spec_from_json(obj)
        assert np.array_equal(G.keystream(back, 64), G.keystream(spec, 64))
