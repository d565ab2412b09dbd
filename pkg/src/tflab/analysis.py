"""Measurements on produced sequences.

Bit streams are numpy ``uint8`` arrays of 0/1 values, one period long unless
a function says otherwise; counting on a period is cyclic by default.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import generators as gen
from . import kernels, texpr

# -- periods ---------------------------------------------------------------------


def _stepper(spec):
    if isinstance(spec, gen.OrdinarySpec):
        n = spec.width
        if n <= gen.TABLE_MAX_WIDTH:
            tab = texpr.table(spec.f, n)
            return spec.initial(), lambda x: int(tab[x])
        return spec.initial(), spec.step
    if isinstance(spec, gen.WreathSpec):
        return spec.initial(), spec.stepper()
    if isinstance(spec, gen.AbcSpec):
        return spec.wreath().initial(), spec.wreath().stepper()
    if isinstance(spec, tuple) and len(spec) == 2 and callable(spec[1]):
        return spec
    raise TypeError("expected a generator spec or (initial, step)")


def period(spec, cap=1 << 24):
    """Brent cycle detection over generator states: ``(preperiod, period)``.

    Returns ``None`` when no cycle is found within ``cap`` steps.
    """
    x0, f = _stepper(spec)
    power = lam = 1
    tortoise, hare = x0, f(x0)
    steps = 1
    while tortoise != hare:
        if power == lam:
            tortoise = hare
            power *= 2
            lam = 0
        hare = f(hare)
        lam += 1
        steps += 1
        if steps > cap:
            return None
    tortoise = hare = x0
    for _ in range(lam):
        hare = f(hare)
    mu = 0
    while tortoise != hare:
        tortoise, hare = f(tortoise), f(hare)
        mu += 1
        if mu > cap:
            return None
    return mu, lam


def sequence_period(seq):
    """Smallest p with seq[i + p] == seq[i] throughout, or None if p > len/2."""
    s = np.asarray(seq)
    n = len(s)
    for p in range(1, n // 2 + 1):
        if np.array_equal(s[p:], s[:-p]):
            return p
    return None


def cyclic_period(bits):
    """Shortest period of a sequence given as one full cycle."""
    s = np.asarray(bits)
    n = len(s)
    for p in range(1, n + 1):
        if n % p == 0 and np.array_equal(s, np.roll(s, -p)):
            return p
    return n


# -- coordinate sequences ---------------------------------------------------------

@dataclass
class CoordReport:
    j: int
    bits: np.ndarray = field(repr=False)
    period: int
    half_negation: bool

    def to_json(self, lc=None):
        out = {"j": self.j, "period": self.period, "half_negation": self.half_negation}
        if lc is not None:
            out["lc"] = lc
        return out


def coord_bits(seq, j):
    return ((np.asarray(seq, dtype=np.uint64) >> np.uint64(j)) & np.uint64(1)).astype(np.uint8)


def coord_seq(seq, j, m=1):
    """The j-th bit stream of ``seq`` (one full period) and its structure."""
    b = coord_bits(seq, j)
    h = (1 << j) * m
    half = bool(len(b) > h and np.all(b[h:] ^ b[:-h] == 1))
    return CoordReport(j, b, cyclic_period(b), half)


# -- distribution -----------------------------------------------------------------

def words_to_bits(words, width, msb_first=True):
    return gen.words_to_bits(words, width, msb_first)


def _chain_values(bits, k, cyclic=True):
    b = np.asarray(bits, dtype=np.int64)
    n = len(b)
    ext = np.concatenate([b, b[: k - 1]]) if cyclic else b
    cnt = n if cyclic else n - k + 1
    vals = np.zeros(max(cnt, 0), np.int64)
    for t in range(k):
        vals = (vals << 1) | ext[t:t + cnt]
    return vals


def k_distribution(bits, k, cyclic=True):
    """Counts of every k-chain; ``strict`` when all 2^k counts are equal."""
    n = len(bits)
    if k < 1 or (1 << k) > n:
        raise ValueError(f"k must satisfy 1 <= k <= log2(N) = {math.log2(n) if n else 0:.3f}")
    counts = np.bincount(_chain_values(bits, k, cyclic), minlength=1 << k)
    labels = {format(v, f"0{k}b"): int(c) for v, c in enumerate(counts)}
    return {"strict": bool(np.all(counts == counts[0])), "counts": labels}


def q1_check(bits, cyclic=True):
    """|nu(w)/N - 2^-k| <= N^-1/2 for every word w with k <= log2 N.

    ``worst_k`` is the k with the largest deviation, the smallest such k on
    ties.  Deviations are compared exactly.
    """
    n = len(bits)
    if n < 2:
        return {"pass": True, "worst_k": None, "worst_deviation": 0.0, "per_k": {}}
    per_k = {}
    for k in range(1, int(math.floor(math.log2(n))) + 1):
        counts = np.bincount(_chain_values(bits, k, cyclic), minlength=1 << k)
        worst = int(np.max(np.abs(counts.astype(np.int64) * (1 << k) - n)))
        per_k[k] = Fraction(worst, n << k)
    passed = all(d * d <= Fraction(1, n) for d in per_k.values())
    wk = min(per_k, key=lambda k: (-per_k[k], k))
    return {"pass": passed, "worst_k": wk, "worst_deviation": float(per_k[wk]),
            "bound": n ** -0.5, "per_k": {k: float(d) for k, d in per_k.items()},
            "failing_k": [k for k, d in per_k.items() if d * d > Fraction(1, n)]}


def uniform_counts(seq, width, m=1):
    counts = np.bincount(np.asarray(seq, dtype=np.int64), minlength=1 << width)
    return bool(np.all(counts == counts[0])), counts


# -- linear complexity ------------------------------------------------------------

def lc_gf2(bits, periodic=True):
    """Linear complexity over GF(2).

    With ``periodic`` the input is one period and the synthesis runs over two
    copies, which is enough for the exact value.
    """
    b = np.asarray(bits, dtype=np.uint8)
    if periodic:
        b = np.concatenate([b, b])
    return kernels.berlekamp_massey(b)


def lc_gf2_oracle(bits):
    """Exhaustive shortest recurrence s_t = sum c_i s_{t-i} (t >= L)."""
    s = [int(v) for v in bits]
    n = len(s)
    if all(v == 0 for v in s):
        return 0
    for L in range(1, n + 1):
        for cs in itertools.product((0, 1), repeat=L):
            if all(s[t] == sum(c & s[t - 1 - i] for i, c in enumerate(cs)) % 2 for t in range(L, n)):
                return L
    return n


def solvable_mod2k(A, b, n):
    """Does A v = b have a solution modulo 2^n?  Valuation-pivoted elimination."""
    M = np.concatenate([np.asarray(A, dtype=np.uint64), np.asarray(b, dtype=np.uint64)[:, None]], axis=1)
    mask = np.uint64((1 << n) - 1) if n < 64 else np.uint64(2**64 - 1)
    M &= mask
    rows, cols = M.shape[0], M.shape[1] - 1
    r = 0
    active_cols = list(range(cols))
    with np.errstate(over="ignore"):
        while r < rows and active_cols:
            sub = M[r:, active_cols]
            low = sub & (~sub + np.uint64(1))
            vals = np.where(sub == 0, np.uint64(n), np.bitwise_count(low - np.uint64(1)).astype(np.uint64))
            idx = int(np.argmin(vals))
            pr, pc_i = divmod(idx, len(active_cols))
            v = int(vals.flat[idx])
            if v >= n:
                break
            pr += r
            pc = active_cols[pc_i]
            M[[r, pr]] = M[[pr, r]]
            unit = int(M[r, pc]) >> v
            M[r] = (M[r] * np.uint64(pow(unit, -1, 1 << 64))) & mask
            q = (M[r + 1:, pc] >> np.uint64(v))
            M[r + 1:] = (M[r + 1:] - q[:, None] * M[r][None, :]) & mask
            # column operations (a change of variables) clear the rest of row r
            rest = [c for c in active_cols if c != pc]
            if rest:
                qc = M[r, rest] >> np.uint64(v)
                M[:, rest] = (M[:, rest] - M[:, [pc]] * qc[None, :]) & mask
            if int(M[r, -1]) % (1 << v):
                return False
            active_cols.remove(pc)
            r += 1
    return bool(np.all(M[r:, -1] == 0))


def lc_ring(seq, width, max_r=64, cyclic=True):
    """Shortest affine recurrence z_{i+r-1} = c + sum_{j<r-1} c_j z_{i+j} mod 2^width.

    The leading coefficient is normalised to 1 (a unit); with a non-unit
    leading coefficient almost every sequence would admit r = 2 through the
    parity bit alone.
    """
    z = np.asarray(seq, dtype=np.uint64) & np.uint64((1 << width) - 1)
    N = len(z)
    for r in range(1, max_r + 1):
        if cyclic:
            idx = (np.arange(N)[:, None] + np.arange(r)[None, :]) % N
        else:
            if N < r:
                return None
            idx = np.arange(N - r + 1)[:, None] + np.arange(r)[None, :]
        W = z[idx]
        A = np.concatenate([np.ones((W.shape[0], 1), np.uint64), W[:, : r - 1]], axis=1)
        if solvable_mod2k(A, W[:, r - 1], width):
            return r
    return None


def lc_ring_oracle(seq, width, max_r=4, cyclic=True):
    """Exhaustive search over all coefficient tuples (small widths only)."""
    M = 1 << width
    z = [int(v) % M for v in seq]
    N = len(z)
    for r in range(1, max_r + 1):
        rng = range(N) if cyclic else range(N - r + 1)
        for coeffs in itertools.product(range(M), repeat=r):
            c, cs = coeffs[0], coeffs[1:]
            if all((z[(i + r - 1) % N] - c - sum(a * z[(i + t) % N] for t, a in enumerate(cs))) % M == 0
                   for i in rng):
                return r
    return None


# -- l-error linear complexity -----------------------------------------------------

def stamp_martin(bits, k):
    """Exact k-error linear complexity of a sequence with period 2^t."""
    a = np.asarray(bits, dtype=np.uint8).copy()
    n = len(a)
    if n & (n - 1):
        raise ValueError("period must be a power of two")
    cost = np.ones(n, np.int64)
    L = 0
    while n > 1:
        h = n // 2
        al, ar = a[:h], a[h:]
        cl, cr = cost[:h], cost[h:]
        b = al ^ ar
        T = int(np.minimum(cl, cr)[b == 1].sum())
        if T <= k:
            k -= T
            a = np.where(b == 1, np.where(cl <= cr, ar, al), al)
            cost = np.where(b == 1, np.abs(cl - cr), cl + cr)
        else:
            L += h
            a = b
            cost = np.minimum(cl, cr)
        n = h
    if a[0] == 1 and cost[0] > k:
        L += 1
    return L


def l_error_oracle(bits, ell):
    """Minimum over all flips of at most ``ell`` positions (exhaustive)."""
    b = np.asarray(bits, dtype=np.uint8)
    best = lc_gf2(b)
    for t in range(1, ell + 1):
        for pos in itertools.combinations(range(len(b)), t):
            c = b.copy()
            c[list(pos)] ^= 1
            best = min(best, lc_gf2(c))
    return best


@dataclass
class LErrorResult:
    value: int
    exact: bool
    method: str
    lower_bound: int | None = None

    def to_json(self):
        return {"value": self.value, "exact": self.exact, "method": self.method,
                "lower_bound": self.lower_bound}


def half_period_bound(bits, ell):
    """Analytic lower bound for half-negating sequences of period 2^t.

    Fewer than N/2 flips cannot make s_i = s_{i+N/2} everywhere, so the
    modified period stays N and the minimal polynomial (X+1)^d has d > N/2.
    """
    b = np.asarray(bits, dtype=np.uint8)
    n = len(b)
    if n < 2 or n & (n - 1):
        return None
    h = n // 2
    if np.all(b[h:] ^ b[:h] == 1) and ell < h:
        return h + 1
    return None


def l_error_lc(bits, ell, rng_seed=0, exhaustive_limit=1 << 16, anneal_steps=20000):
    """ell-error linear complexity of one period."""
    b = np.asarray(bits, dtype=np.uint8)
    n = len(b)
    lb = half_period_bound(b, ell)
    if ell == 0:
        return LErrorResult(lc_gf2(b), True, "berlekamp-massey", lb)
    if n and not n & (n - 1):
        return LErrorResult(stamp_martin(b, ell), True, "stamp-martin", lb)
    combos = sum(math.comb(n, t) for t in range(ell + 1))
    if combos <= exhaustive_limit:
        return LErrorResult(l_error_oracle(b, ell), True, "exhaustive", lb)
    return LErrorResult(_anneal(b, ell, rng_seed, anneal_steps), False, "annealing", lb)


def _anneal(b, ell, seed, steps):
    rng = np.random.default_rng(seed)
    n = len(b)
    cur = set()
    cur_v = best = lc_gf2(b)
    temp = 2.0
    for s in range(steps):
        cand = set(cur)
        i = int(rng.integers(n))
        if i in cand:
            cand.remove(i)
        elif len(cand) < ell:
            cand.add(i)
        else:
            cand.remove(next(iter(cand)))
            cand.add(i)
        c = b.copy()
        if cand:
            c[list(cand)] ^= 1
        v = lc_gf2(c)
        t = temp * (1 - s / steps) + 1e-9
        if v <= cur_v or rng.random() < math.exp((cur_v - v) / t):
            cur, cur_v = cand, v
            best = min(best, v)
    return best


# -- 2-adic complexity ------------------------------------------------------------

FERMAT_FACTORS = {0: [3], 1: [5], 2: [17], 3: [257], 4: [65537], 5: [641, 6700417]}


@dataclass
class Phi2:
    u: int
    v: int

    @property
    def fraction(self):
        return Fraction(self.u, self.v)

    @property
    def log2(self):
        return round(math.log2(max(abs(self.u), abs(self.v))), 6)

    def to_json(self):
        return {"u": str(self.u), "v": str(self.v), "log2": self.log2}


def _bits_int(bits):
    b = np.asarray(bits, dtype=np.uint8)
    return int.from_bytes(np.packbits(b, bitorder="little").tobytes(), "little")


def two_adic_complexity(bits, mode="general", j=None, gamma=None):
    """The 2-adic value of a periodic stream as a reduced fraction u/v.

    ``general``: one period s_0..s_{T-1} gives -gamma_T / (2^T - 1).
    ``coord``: j-th coordinate of a single-cycle T-function given by the
    first-half integer gamma: (2^(2^j)+1) / gcd(2^(2^j)+1, gamma+1).
    """
    if mode == "general":
        b = np.asarray(bits, dtype=np.uint8)
        if len(b) == 0:
            raise ValueError("empty period")
        f = Fraction(-_bits_int(b), (1 << len(b)) - 1)
        return Phi2(f.numerator, f.denominator)
    if mode == "coord":
        if j is None:
            raise ValueError("coord mode needs j")
        if gamma is None:
            gamma = _bits_int(np.asarray(bits, dtype=np.uint8)[: 1 << j])
        M = 1 << (1 << j)
        g = math.gcd(M + 1, gamma + 1)
        return Phi2(-((M - gamma) // g), (M + 1) // g)
    raise ValueError(f"unknown mode {mode!r}")


# -- Gamma vectors ------------------------------------------------------------------

def gamma_extract(states, n, m=1):
    """gamma_j = sum_i delta_j(x_i) 2^i over the first 2^j m states."""
    out = []
    for j in range(n):
        b = coord_bits(np.asarray(states)[: (1 << j) * m], j)
        out.append(_bits_int(b))
    return out


def gamma_construct(gammas, n):
    """Single-cycle permutation of Z/2^n whose coordinate half-periods are ``gammas``.

    Column j of a 2^n-row table starts with the bits of gamma_j and then
    repeats bitwise negations block by block; row i read as a number is
    z_i and the permutation sends z_i to z_{i+1}.  Returns ``(table, z)``.
    """
    if len(gammas) != n:
        raise ValueError(f"need {n} gamma values")
    i = np.arange(1 << n, dtype=np.int64)
    z = np.zeros(1 << n, np.int64)
    for j, g in enumerate(gammas):
        if not 0 <= g < 1 << (1 << j):
            raise ValueError(f"gamma_{j} out of range")
        gb = np.array([(g >> t) & 1 for t in range(1 << j)], dtype=np.int64)
        col = gb[i % (1 << j)] ^ ((i >> j) & 1)
        z |= col << j
    succ = np.empty(1 << n, np.int64)
    succ[z] = np.roll(z, -1)
    return succ, z


def gamma_roundtrip(direction, data, n=None):
    if direction == "extract":
        return gamma_extract(data, n)
    if direction == "construct":
        return gamma_construct(list(data), n if n is not None else len(data))[0]
    raise ValueError("direction must be 'extract' or 'construct'")


# -- scatter ---------------------------------------------------------------------

def pair_scatter(seq, width, b=None):
    """Distinct points (x_i/2^n, x_{i+1}/2^n) and, optionally, the line count.

    The line count is the number of distinct x_{i+1} - b x_i mod 2^n.
    """
    s = [int(v) for v in seq]
    M = 1 << width
    seen, pts = set(), []
    for x, y in zip(s, s[1:]):
        if (x, y) not in seen:
            seen.add((x, y))
            pts.append((Fraction(x, M), Fraction(y, M)))
    out = {"points": pts}
    if b is not None:
        out["lines"] = len({(y - b * x) % M for x, y in zip(s, s[1:])})
    return out


def _dec(fr):
    """Exact decimal string of a dyadic rational."""
    num, den = fr.numerator, fr.denominator
    k = den.bit_length() - 1
    if den != 1 << k:
        return str(fr)
    digits = num * 5 ** k
    s = str(digits).rjust(k + 1, "0")
    if k == 0:
        return s
    return (s[:-k] + "." + s[-k:]).rstrip("0").rstrip(".") or "0"


def scatter_csv(points):
    lines = ["x,y"] + [f"{_dec(x)},{_dec(y)}" for x, y in points]
    return "\n".join(lines) + "\n"


def occupancy_pgm(seq, width, k=None):
    """Binary PGM (P5) of the 2^k x 2^k pair grid: 255 where a pair falls."""
    k = min(width, 9) if k is None else k
    s = np.asarray(seq, dtype=np.int64) >> (width - k)
    img = np.zeros((1 << k, 1 << k), np.uint8)
    if len(s) > 1:
        img[(1 << k) - 1 - s[1:], s[:-1]] = 255
    header = f"P5\n{1 << k} {1 << k}\n255\n".encode()
    return header + img.tobytes()


# -- report --------------------------------------------------------------------------

def analyze(seq, width, m=1, max_lc_ring=16, coords=None, kdist_k=None, scatter_path=None):
    """Report over one full period of words (recomputable from the input alone)."""
    seq = np.asarray(seq, dtype=np.int64)
    N = len(seq)
    p = sequence_period(np.concatenate([seq, seq])) if N else None
    rep = {"period": {"pre": 0, "len": p if p is not None else N}}
    ok, _ = uniform_counts(seq, width)
    rep["uniform"] = {"width": width, "counts_ok": ok}
    clist = []
    for j in (range(width) if coords is None else coords):
        c = coord_seq(seq, j, m)
        clist.append(c.to_json(lc_gf2(c.bits)))
    rep["coords"] = clist
    bits = words_to_bits(seq, width)
    q = q1_check(bits)
    rep["q1"] = {"pass": q["pass"], "worst_k": q["worst_k"]}
    if len(bits):
        k = kdist_k or max(1, min(width, int(math.log2(len(bits)))))
        rep["kdist"] = {"k": k, "strict": all(k_distribution(bits, t)["strict"] for t in range(1, k + 1))}
        rep["phi2"] = two_adic_complexity(bits).to_json()
    rep["lc_ring"] = lc_ring(seq, width, max_r=max_lc_ring) if N else None
    rep["lc_ring_definition"] = "affine, unit leading coefficient"
    files = {}
    if scatter_path:
        with open(scatter_path, "w") as fh:
            fh.write(scatter_csv(pair_scatter(seq, width)["points"]))
        files["scatter_csv"] = str(scatter_path)
    rep["files"] = files
    return rep
