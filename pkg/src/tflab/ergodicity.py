"""Measure-preservation and ergodicity: criteria, constructors, oracle.

Every criterion reduces the infinite question to a finite check.  The
exhaustive functional-graph decomposition (:func:`cycle_structure`) is the
common ground truth that the test suite holds all criteria against.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import kernels, texpr
from ._accel import oracle_cap
from .texpr import TExpr, const, var

ERGODIC = "Ergodic"
MP = "MeasurePreserving"
PROVEN, REFUTED, UNKNOWN = "Proven", "Refuted", "Unknown"


class PolicyInapplicable(ValueError):
    pass


class OverCap(ValueError):
    pass


class NonIntegerValued(ValueError):
    def __init__(self, z, value):
        self.z = z
        self.value = value
        super().__init__(f"f({z}) = {value} is not a p-adic integer")


# -- oracle -------------------------------------------------------------------

@dataclass
class CycleReport:
    width: int
    cycle_count: int
    lengths: Counter
    bijective: bool
    collision: tuple | None = None

    @property
    def single_cycle(self):
        return self.bijective and self.cycle_count == 1

    def to_json(self):
        return {
            "width": self.width,
            "cycle_count": self.cycle_count,
            "lengths": {str(k): v for k, v in sorted(self.lengths.items())},
            "single_cycle": self.single_cycle,
            "bijective": self.bijective,
            "collision": list(self.collision) if self.collision else None,
        }


def _check_cap(bits, cap=None):
    cap = oracle_cap() if cap is None else cap
    if bits > cap:
        raise OverCap(f"state space of 2^{bits} exceeds the oracle cap 2^{cap}")


def table_report(succ, width):
    succ = np.asarray(succ, dtype=np.int64)
    lengths, indeg = kernels.cycle_lengths(succ)
    bij = bool(np.all(indeg == 1))
    coll = None
    if not bij:
        y = int(np.flatnonzero(indeg >= 2)[0])
        xs = np.flatnonzero(succ == y)[:2]
        coll = (int(xs[0]), int(xs[1]))
    return CycleReport(width, len(lengths), Counter(int(v) for v in lengths), bij, coll)


def cycle_structure(f, width, cap=None):
    """Exhaustive cycle decomposition of ``f`` mod 2^width.

    ``f`` is a TExpr, a grammar string, or a list of expressions (a system on
    (Z/2^width)^m with state ``sum x_i << (width*i)``).
    """
    if isinstance(f, str):
        f = texpr.parse(f)
    if isinstance(f, (list, tuple)):
        _check_cap(width * len(f), cap)
        succ = texpr.multi_table(list(f), width)
        return table_report(succ, width * len(f))
    _check_cap(width, cap)
    return table_report(texpr.table(f, width), width)


def transitive_mod(f, width):
    return cycle_structure(f, width).single_cycle


def bijective_mod(f, width):
    return cycle_structure(f, width).bijective


# -- verdicts -------------------------------------------------------------------

@dataclass
class Verdict:
    property: str
    result: str
    method: str
    modulus_checked: int | None = None
    theorem: str | None = None
    witness: object = None
    detail: dict = field(default_factory=dict)

    @property
    def proven(self):
        return self.result == PROVEN

    def to_json(self):
        out = {
            "property": self.property,
            "result": self.result,
            "method": self.method,
            "modulus_checked": self.modulus_checked,
            "theorem": self.theorem,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass(frozen=True)
class Brute:
    n: int


@dataclass(frozen=True)
class DerivativeMod4:
    test_width: int = 10


@dataclass(frozen=True)
class DerivativeMod2:
    test_width: int = 10


@dataclass(frozen=True)
class Anf:
    maxbit: int = 12


@dataclass(frozen=True)
class FallingFactorial:
    pass


@dataclass(frozen=True)
class B2Class:
    pass


def _as_expr(f):
    return texpr.parse(f) if isinstance(f, str) else f


def _first_failure(f, upto, pred):
    """Smallest width w <= upto where pred(report) is false, else None."""
    for w in range(1, upto + 1):
        rep = cycle_structure(f, w)
        if not pred(rep):
            return w, rep
    return None


def _cert(f, k, tw):
    try:
        return texpr.n_bound(f, k, tw)
    except (texpr.NotDifferentiableMod2, texpr.ValidationFailed) as exc:
        raise PolicyInapplicable(f"no N_{k} certificate: {exc}") from exc


def verify_ergodic(f, policy):
    f = _as_expr(f)
    if texpr.arity(f) > 1:
        raise PolicyInapplicable("univariate expression expected")
    if isinstance(policy, Brute):
        bad = _first_failure(f, policy.n, lambda r: r.single_cycle)
        if bad:
            w, rep = bad
            return Verdict(ERGODIC, REFUTED, "brute", 1 << w, None, _cycle_witness(rep))
        return Verdict(ERGODIC, UNKNOWN, "brute", 1 << policy.n, None,
                       detail={"note": "single cycle at every checked modulus"})
    if isinstance(policy, DerivativeMod4):
        cert = _cert(f, 2, policy.test_width)
        w = cert.n_bound + 2
        rep = cycle_structure(f, w)
        res = PROVEN if rep.single_cycle else REFUTED
        return Verdict(ERGODIC, res, "derivative-mod-4", 1 << w, "erg_Der",
                       None if rep.single_cycle else _cycle_witness(rep),
                       {"N2": cert.n_bound, "certificate": cert.to_json()})
    if isinstance(policy, Anf):
        weights = []
        for j in range(policy.maxbit):
            try:
                t = texpr.coord_anf(f, j)
            except texpr.NotMeasurePreserving as exc:
                return Verdict(ERGODIC, REFUTED, "anf", 1 << (j + 1), "ergBool",
                               {"bit": j, "collision": list(exc.witness)})
            if not texpr.anf_weight_odd(t):
                return Verdict(ERGODIC, REFUTED, "anf", 1 << (j + 1), "ergBool",
                               {"bit": j, "weight": t.weight})
            weights.append(t.weight)
        detail = {"weights": weights}
        try:
            cert = texpr.n_bound(f, 2, min(policy.maxbit, 12))
        except (texpr.NotDifferentiableMod2, texpr.ValidationFailed, ValueError):
            cert = None
        if cert is not None and cert.n_bound + 2 <= policy.maxbit:
            detail["N2"] = cert.n_bound
            return Verdict(ERGODIC, PROVEN, "anf", 1 << policy.maxbit, "ergBool", None, detail)
        return Verdict(ERGODIC, UNKNOWN, "anf", 1 << policy.maxbit, "ergBool", None, detail)
    if isinstance(policy, FallingFactorial):
        coeffs = as_polynomial(f)
        if coeffs is None:
            raise PolicyInapplicable("not an integer polynomial")
        ff = mono_to_ff(coeffs)
        ok = classify_poly_ff(ff) == ERGODIC
        return Verdict(ERGODIC, PROVEN if ok else REFUTED, "falling-factorial", 8, "ergPol",
                       None if ok else {"ff": [int(c) for c in ff[:4]]}, {"ff": [str(c) for c in ff]})
    if isinstance(policy, B2Class):
        _require_b2(f)
        rep = cycle_structure(f, 3)
        ok = rep.single_cycle
        return Verdict(ERGODIC, PROVEN if ok else REFUTED, "b2-class", 8, "ergAnGen",
                       None if ok else _cycle_witness(rep))
    raise PolicyInapplicable(f"unknown policy {policy!r}")


def verify_measure_preserving(f, policy):
    if isinstance(f, (list, tuple)):
        return multivar_check_bijective(f, getattr(policy, "test_width", 8))
    f = _as_expr(f)
    if texpr.arity(f) > 1:
        raise PolicyInapplicable("univariate expression expected")
    if isinstance(policy, Brute):
        rep = cycle_structure(f, policy.n)
        if not rep.bijective:
            return Verdict(MP, REFUTED, "brute", 1 << policy.n, None,
                           {"collision": list(rep.collision)})
        return Verdict(MP, UNKNOWN, "brute", 1 << policy.n, None,
                       detail={"note": "bijective at every checked modulus"})
    if isinstance(policy, DerivativeMod2):
        return multivar_check_bijective([f], policy.test_width)
    if isinstance(policy, Anf):
        for j in range(policy.maxbit):
            try:
                texpr.coord_anf(f, j)
            except texpr.NotMeasurePreserving as exc:
                return Verdict(MP, REFUTED, "anf", 1 << (j + 1), "ergBool",
                               {"bit": j, "collision": list(exc.witness)})
        try:
            cert = texpr.n_bound(f, 1, min(policy.maxbit, 12))
        except (texpr.NotDifferentiableMod2, texpr.ValidationFailed, ValueError):
            cert = None
        if cert is not None and cert.n_bound + 1 <= policy.maxbit:
            return Verdict(MP, PROVEN, "anf", 1 << policy.maxbit, "ergBool", None,
                           {"N1": cert.n_bound})
        return Verdict(MP, UNKNOWN, "anf", 1 << policy.maxbit, "ergBool")
    if isinstance(policy, FallingFactorial):
        coeffs = as_polynomial(f)
        if coeffs is None:
            raise PolicyInapplicable("not an integer polynomial")
        ff = mono_to_ff(coeffs)
        ok = classify_poly_ff(ff) != "Neither"
        return Verdict(MP, PROVEN if ok else REFUTED, "falling-factorial", 4, "ergPol",
                       None if ok else {"ff": [int(c) for c in ff[:4]]})
    if isinstance(policy, B2Class):
        _require_b2(f)
        rep = cycle_structure(f, 2)
        return Verdict(MP, PROVEN if rep.bijective else REFUTED, "b2-class", 4, "ergAnGen",
                       None if rep.bijective else {"collision": list(rep.collision)})
    raise PolicyInapplicable(f"unknown policy {policy!r}")


def _cycle_witness(rep):
    if not rep.bijective:
        return {"collision": list(rep.collision)}
    return {"cycle_lengths": sorted(rep.lengths.elements())[:8]}


_B2_OPS = {"var", "const", "add", "sub", "mul", "neg", "inv", "pow", "compose"}


def _require_b2(f):
    bad = {n.op for n in texpr.nodes(f)} - _B2_OPS
    if bad:
        raise PolicyInapplicable(
            f"B2 class needs arithmetic, inv and pow1p2 only; found {sorted(bad)}")


# -- polynomials ------------------------------------------------------------------

def _padd(a, b):
    out = [0] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return out


def _pmul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def _trim(p):
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def as_polynomial(f):
    """Monomial coefficients if ``f`` is a univariate integer polynomial."""
    f = texpr.inline(_as_expr(f))

    def rec(e):
        op = e.op
        if op == "const":
            return [e.param]
        if op == "var":
            if e.param != 0:
                raise ValueError
            return [0, 1]
        if op == "shl":
            return [c << e.param for c in rec(e.args[0])]
        if op == "neg":
            return [-c for c in rec(e.args[0])]
        if op in ("add", "sub", "mul"):
            a, b = rec(e.args[0]), rec(e.args[1])
            if op == "add":
                return _padd(a, b)
            if op == "sub":
                return _padd(a, [-c for c in b])
            return _pmul(a, b)
        raise ValueError

    try:
        return _trim(rec(f))
    except ValueError:
        return None


def poly_expr(coeffs):
    """Horner-form TExpr of a monomial integer polynomial."""
    coeffs = list(coeffs) or [0]
    e = const(coeffs[-1])
    for c in reversed(coeffs[:-1]):
        e = e * var(0) + const(c)
    return e


@lru_cache(maxsize=None)
def stirling2(n, k):
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


@lru_cache(maxsize=None)
def stirling1(n, k):
    """Signed Stirling numbers of the first kind."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return stirling1(n - 1, k - 1) - (n - 1) * stirling1(n - 1, k)


def mono_to_ff(coeffs):
    """x^k = sum_j S(k, j) x^(j falling)."""
    d = len(coeffs)
    return [sum(coeffs[k] * stirling2(k, j) for k in range(j, d)) for j in range(d)]


def ff_to_mono(ff):
    d = len(ff)
    return [sum(ff[j] * stirling1(j, k) for j in range(k, d)) for k in range(d)]


def _ff_get(c, i):
    return c[i] if i < len(c) else 0


def classify_poly_ff(c):
    c = [int(v) for v in c]
    c0, c1, c2, c3 = (_ff_get(c, i) for i in range(4))
    if c0 % 2 == 1 and c1 % 4 == 1 and c2 % 2 == 0 and c3 % 4 == 0:
        return ERGODIC
    if c1 % 2 == 1 and c2 % 2 == 0 and c3 % 2 == 0:
        return "MeasurePreservingOnly"
    return "Neither"


def _poly_table(coeffs, M):
    z = np.arange(M, dtype=object)
    acc = np.zeros(M, dtype=object)
    for c in reversed(coeffs):
        acc = (acc * z + c) % M
    return np.array(acc, dtype=np.int64)


def classify_poly_modp(p, coeffs, cap=None):
    """Transitivity mod p^3 (p in {2,3}) or p^2, bijectivity mod p^2."""
    k = 3 if p in (2, 3) else 2
    M = p ** k
    if M > (1 << (oracle_cap() if cap is None else cap)):
        raise OverCap(f"modulus {M} exceeds the oracle cap")
    lengths, _ = kernels.cycle_lengths(_poly_table(coeffs, M))
    if len(lengths) == 1 and lengths[0] == M:
        return ERGODIC
    _, indeg = kernels.cycle_lengths(_poly_table(coeffs, p * p))
    if np.all(indeg == 1):
        return "MeasurePreservingOnly"
    return "Neither"


def classify_rational_poly(coeffs, p, prop=ERGODIC):
    """Verdict for a polynomial with rational monomial coefficients.

    Values are computed exactly; a value with ``p`` in its denominator
    raises :class:`NonIntegerValued`.
    """
    coeffs = [Fraction(c) for c in coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    d = max(len(coeffs) - 1, 1)
    e = 0
    while p ** (e + 1) <= d:
        e += 1
    k = e + 3
    M = p ** k
    vals = []
    for z in range(M):
        v = sum(c * z ** i for i, c in enumerate(coeffs))
        if v.denominator % p == 0:
            raise NonIntegerValued(z, v)
        vals.append(v.numerator * pow(v.denominator, -1, M) % M)
    vals = np.array(vals, dtype=np.int64)
    for i in range(1, k):
        q = p ** i
        red = vals.reshape(M // q, q) % q
        diff = np.flatnonzero(np.any(red != red[0], axis=1))
        if diff.size:
            row = int(diff[0])
            col = int(np.flatnonzero(red[row] != red[0])[0])
            return Verdict(prop, REFUTED, "rational-poly", M, "Qpol",
                           {"not_compatible": [col, row * q + col], "modulus": q})
    lengths, indeg = kernels.cycle_lengths(vals)
    if prop == ERGODIC:
        ok = len(lengths) == 1 and lengths[0] == M
    else:
        ok = bool(np.all(indeg == 1))
    return Verdict(prop, PROVEN if ok else REFUTED, "rational-poly", M, "Qpol",
                   None if ok else {"cycle_lengths": sorted(int(v) for v in lengths)[:8]})


def permutation_poly(coeffs):
    """a1 odd, a2+a4+... even, a3+a5+... even."""
    a = list(coeffs) + [0, 0]
    even = sum(a[2::2])
    odd = sum(a[3::2])
    return a[1] % 2 == 1 and even % 2 == 0 and odd % 2 == 0


def permutation_poly_xor(coeffs):
    """Same criterion for a0 ^ a1 x ^ a2 x^2 ^ ... (xor-combined terms)."""
    return permutation_poly(coeffs)


def xor_poly_expr(coeffs):
    terms = [const(coeffs[0])] + [const(c) * var(0) ** i for i, c in enumerate(coeffs) if i]
    e = terms[0]
    for t in terms[1:]:
        e = e ^ t
    return e


def klimov_shamir_expr(C):
    return var(0) + (var(0) * var(0) | const(C))


def klimov_shamir_C(C, width):
    """Bit criterion for x + (x^2 | C) on width-bit words."""
    C = int(C)
    if not C & 1:
        return "NotInvertible"
    if width < 3:
        rep = cycle_structure(klimov_shamir_expr(C), width)
        return "SingleCycle" if rep.single_cycle else "InvertibleOnly"
    return "SingleCycle" if (C >> 2) & 1 else "InvertibleOnly"


def kotomina_expr(cs, ds):
    """(...((x + c0) ^ d0) + c1) ^ d1 ...)."""
    e = var(0)
    for c, d in zip(cs, ds):
        e = (e + const(c)) ^ const(d)
    return e


# -- constructors -------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaErgodic:
    c: int = 1


@dataclass(frozen=True)
class AffineMP:
    d: int
    c: int


@dataclass(frozen=True)
class MahlerErgodic:
    coeffs: tuple


@dataclass(frozen=True)
class MahlerMP:
    coeffs: tuple
    c0: int = 0


@dataclass(frozen=True)
class Lift:
    kind: str  # "x+4g", "x^4g", "f+4g", "f^4g"
    f: TExpr


LIFT_KINDS = ("x+4g", "x^4g", "f+4g", "f^4g")


def _floor_log2(i):
    return i.bit_length() - 1


def make_from_gadget(mode, g=None):
    """Build an expression that is ergodic / measure preserving by construction.

    Returns ``(expr, verdict)``.
    """
    x = var(0)
    if isinstance(mode, DeltaErgodic):
        if mode.c % 2 == 0:
            raise ValueError("DeltaErgodic needs an odd constant")
        if g is None:
            raise ValueError("g required")
        e = const(mode.c) + x + const(2) * (texpr.compose(g, x + 1) - texpr.compose(g, x))
        return e, Verdict(ERGODIC, PROVEN, "construction", None, "Delta", None,
                          {"form": "c + x + 2*(g(x+1) - g(x))", "c": mode.c, "g": str(g)})
    if isinstance(mode, AffineMP):
        if mode.c % 2 == 0:
            raise ValueError("AffineMP needs an odd multiplier")
        if g is None:
            raise ValueError("g required")
        e = const(mode.d) + const(mode.c) * x + const(2) * texpr.compose(g, x)
        return e, Verdict(MP, PROVEN, "construction", None, "Delta", None,
                          {"form": "d + c*x + 2*g(x)", "d": mode.d, "c": mode.c, "g": str(g)})
    if isinstance(mode, (MahlerErgodic, MahlerMP)):
        ergodic = isinstance(mode, MahlerErgodic)
        e = (const(1) if ergodic else const(mode.c0)) + x
        for i, c in enumerate(mode.coeffs, start=1):
            if c == 0:
                continue
            s = _floor_log2(i + 1 if ergodic else i) + 1
            e = e + const(c << s) * texpr.binom(x, i)
        return e, Verdict(ERGODIC if ergodic else MP, PROVEN, "construction", None, "ergBin",
                          None, {"coeffs": list(mode.coeffs)})
    if isinstance(mode, Lift):
        if g is None:
            raise ValueError("g required")
        f = mode.f
        four_g = const(4) * g
        if mode.kind == "x+4g":
            e = texpr.compose(f, x + four_g)
        elif mode.kind == "x^4g":
            e = texpr.compose(f, x ^ four_g)
        elif mode.kind == "f+4g":
            e = f + four_g
        elif mode.kind == "f^4g":
            e = f ^ four_g
        else:
            raise ValueError(f"lift kind must be one of {LIFT_KINDS}")
        return e, Verdict(ERGODIC, PROVEN, "construction", None, "compBool", None,
                          {"kind": mode.kind, "f": str(f), "g": str(g)})
    raise ValueError(f"unknown gadget {mode!r}")


# -- multivariate -----------------------------------------------------------------

def multivar_check_bijective(F, test_width=8):
    """Bijective mod 2^N1 and Jacobian nonzero mod 2 everywhere."""
    F = [_as_expr(f) for f in F]
    m = len(F)
    if max(texpr.arity(f) for f in F) > m:
        raise PolicyInapplicable("system is not square")
    try:
        cert = texpr.n_bound(F if m > 1 else F[0], 1, test_width)
    except (texpr.NotDifferentiableMod2, texpr.ValidationFailed) as exc:
        raise PolicyInapplicable(f"no N_1 certificate: {exc}") from exc
    N = cert.n_bound
    rep = cycle_structure(F if m > 1 else F[0], N)
    base = {"N1": N, "certificate": cert.to_json()}
    if not rep.bijective:
        return Verdict(MP, REFUTED, "derivative-mod-2", 1 << N, "MHL-bj",
                       {"collision": list(rep.collision)}, base)
    dets = texpr.jacobian_det_mod2_all(F)
    zero = np.flatnonzero(dets == 0)
    if zero.size:
        pt = int(zero[0])
        return Verdict(MP, REFUTED, "derivative-mod-2", 1 << N, "MHL-bj",
                       {"jacobian_zero_at": [(pt >> i) & 1 for i in range(m)]}, base)
    return Verdict(MP, PROVEN, "derivative-mod-2", 1 << N, "MHL-bj", None, base)


def _and_all(es):
    out = es[0]
    for e in es[1:]:
        out = out & e
    return out


def multivar_pack(h, m, verdict=None):
    """Klimov-Shamir m-variate form of a univariate single-cycle ``h``.

    ``h_s = x_s ^ ((h(A) ^ A) & x_0 & ... & x_{s-1})`` with ``A`` the AND of
    all variables.
    """
    h = _as_expr(h)
    if verdict is not None and not (verdict.property == ERGODIC and verdict.proven):
        raise ValueError("h needs a Proven ergodic verdict")
    if m == 1:
        return [h]
    xs = [var(i) for i in range(m)]
    A = _and_all(xs)
    core = texpr.compose(h, A) ^ A
    out = []
    for s in range(m):
        out.append(xs[s] ^ (_and_all([core] + xs[:s]) if s else core))
    return out


def multivar_family(fs, gs, op="+", verdicts=None):
    """m-variate ergodic family built from univariate pieces.

    ``fs[j][r]`` are ergodic, ``gs[j][t]`` (t < j) measure preserving, all
    univariate.  Component j is
    ``x_j op ((AND_t<j g_j^t(x_t)) & AND_r (f_j^r(x_r) ^ x_r))``.
    """
    m = len(fs)
    if verdicts is not None and not all(v.proven for v in verdicts):
        raise ValueError("every component function needs a Proven verdict")
    xs = [var(i) for i in range(m)]
    out = []
    for j in range(m):
        parts = [texpr.compose(gs[j][t], xs[t]) for t in range(j)]
        parts += [texpr.compose(fs[j][r], xs[r]) ^ xs[r] for r in range(m)]
        inner = _and_all(parts)
        out.append(xs[j] + inner if op == "+" else xs[j] ^ inner)
    return out


def interleave(xs, n):
    """Univariate reading of an m-variate state: x_j holds bits j, m+j, ..."""
    m = len(xs)
    out = 0
    for j, v in enumerate(xs):
        for b in range(n):
            out |= ((int(v) >> b) & 1) << (b * m + j)
    return out


def deinterleave(x, m, n):
    xs = [0] * m
    for b in range(n * m):
        xs[b % m] |= ((x >> b) & 1) << (b // m)
    return xs
