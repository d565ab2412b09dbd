"""Expression trees for (multivariate) T-functions.

Node kinds::

    var(i)  const(c)  add sub mul neg xor and or not
    shl(k)  mod2k(k)  inv  pow  binom(i)  compose

``pow(u, v)`` is ``(1+2u)**v``, ``inv(u)`` is the inverse of an odd ``u`` and
``binom(e, i)`` is the binomial coefficient ``C(e, i)``.  ``compose`` holds a
body expression (in its own variables) followed by the argument
expressions substituted for those variables.

Evaluation is vectorized over numpy ``uint64`` arrays; arithmetic wraps mod
``2**64`` and is then masked to the working width.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .word2 import MAX_WIDTH, Word, ord2_factorial

BINARY = ("add", "sub", "mul", "xor", "and", "or", "pow")
UNARY = ("neg", "not", "inv", "shl", "mod2k", "binom")


class ParseError(ValueError):
    def __init__(self, msg, pos=None):
        self.pos = pos
        super().__init__(msg if pos is None else f"{msg} (at position {pos})")


class NotMeasurePreserving(ValueError):
    def __init__(self, j, witness):
        self.j = j
        self.witness = witness
        super().__init__(f"bit {j} is not of the form x_j xor phi_j; witness {witness}")


class NotDifferentiableMod2(ValueError):
    pass


class ValidationFailed(AssertionError):
    def __init__(self, msg, witness=None):
        self.witness = witness
        super().__init__(msg)


# -- nodes ------------------------------------------------------------------

@dataclass(frozen=True)
class TExpr:
    op: str
    args: tuple = ()
    param: object = None

    def _lift(self, other):
        return other if isinstance(other, TExpr) else const(int(other))

    def __add__(self, o):
        return TExpr("add", (self, self._lift(o)))

    def __radd__(self, o):
        return TExpr("add", (self._lift(o), self))

    def __sub__(self, o):
        return TExpr("sub", (self, self._lift(o)))

    def __rsub__(self, o):
        return TExpr("sub", (self._lift(o), self))

    def __mul__(self, o):
        return TExpr("mul", (self, self._lift(o)))

    def __rmul__(self, o):
        return TExpr("mul", (self._lift(o), self))

    def __xor__(self, o):
        return TExpr("xor", (self, self._lift(o)))

    def __rxor__(self, o):
        return TExpr("xor", (self._lift(o), self))

    def __and__(self, o):
        return TExpr("and", (self, self._lift(o)))

    def __rand__(self, o):
        return TExpr("and", (self._lift(o), self))

    def __or__(self, o):
        return TExpr("or", (self, self._lift(o)))

    def __ror__(self, o):
        return TExpr("or", (self._lift(o), self))

    def __neg__(self):
        return TExpr("neg", (self,))

    def __invert__(self):
        return TExpr("not", (self,))

    def __lshift__(self, k):
        return TExpr("shl", (self,), int(k))

    def __mod__(self, k):
        """``e % k`` with ``k`` a power of two means ``e mod k``."""
        k = int(k)
        if k <= 0 or k & (k - 1):
            raise ValueError("modulus must be a power of two")
        return TExpr("mod2k", (self,), k.bit_length() - 1)

    def __pow__(self, e):
        e = int(e)
        if e < 1:
            raise ValueError("exponent must be a positive integer")
        out = self
        for _ in range(e - 1):
            out = out * self
        return out

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"TExpr({to_string(self)!r})"


def var(i=0):
    return TExpr("var", (), int(i))


def const(c):
    return TExpr("const", (), int(c))


X = var(0)


def inv(e):
    return TExpr("inv", (e,))


def pow1p2(u, v):
    return TExpr("pow", (u, v if isinstance(v, TExpr) else const(v)))


def binom(e, i):
    return TExpr("binom", (e,), int(i))


def mod2k(e, k):
    return TExpr("mod2k", (e,), int(k))


def compose(body, *subs):
    return TExpr("compose", (body,) + tuple(subs))


def arity(e):
    """Number of variables, i.e. highest index + 1 (0 for constants)."""
    if e.op == "var":
        return e.param + 1
    if e.op == "compose":
        return max((arity(s) for s in e.args[1:]), default=0)
    return max((arity(a) for a in e.args), default=0)


def nodes(e):
    """All nodes, composition bodies included."""
    yield e
    for a in e.args:
        yield from nodes(a)


def substitute(e, subs):
    """Replace ``var(i)`` by ``subs[i]``; compose nodes are inlined."""
    if e.op == "var":
        return subs[e.param]
    if e.op == "const":
        return e
    if e.op == "compose":
        inner = [substitute(s, subs) for s in e.args[1:]]
        return substitute(e.args[0], inner)
    return TExpr(e.op, tuple(substitute(a, subs) for a in e.args), e.param)


def inline(e):
    if e.op in ("var", "const"):
        return e
    if e.op == "compose":
        return substitute(inline(e.args[0]), [inline(s) for s in e.args[1:]])
    return TExpr(e.op, tuple(inline(a) for a in e.args), e.param)


def const_value(e):
    """Exact integer value of a variable-free subtree, else ``None``.

    Only the ring operations are folded; this is what decides the sign of
    mask constants.
    """
    op = e.op
    if op == "const":
        return e.param
    if op == "var":
        return None
    if op == "compose":
        return None if any(const_value(s) is None for s in e.args[1:]) else _fold_compose(e)
    vals = [const_value(a) for a in e.args]
    if any(v is None for v in vals):
        return None
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "neg":
        return -vals[0]
    if op == "not":
        return ~vals[0]
    if op == "xor":
        return vals[0] ^ vals[1]
    if op == "and":
        return vals[0] & vals[1]
    if op == "or":
        return vals[0] | vals[1]
    if op == "shl":
        return vals[0] << e.param
    return None


def _fold_compose(e):
    return const_value(inline(e))


# -- evaluation -------------------------------------------------------------

_U64 = np.uint64
_FULL = (1 << 64) - 1


def _mask(width):
    return _U64((1 << width) - 1)


def _inv_u64(v):
    r = v.copy()
    for _ in range(6):  # 3 -> 6 -> 12 -> 24 -> 48 -> 96 bits
        r = r * (_U64(2) - v * r)
    return r


def _pow_u64(a, e, width):
    r = np.ones_like(a)
    sq = a.copy()
    for j in range(width):
        sel = ((e >> _U64(j)) & _U64(1)).astype(bool)
        r = np.where(sel, r * sq, r)
        sq = sq * sq
    return r


def _ctz_u64(v):
    low = v & (~v + _U64(1))
    return np.bitwise_count(low - _U64(1)).astype(np.int64)


def _binom_u64(x, i, width):
    """C(x, i) mod 2^width for canonical representatives ``x``."""
    if i == 0:
        return np.ones_like(x)
    val = np.zeros(x.shape, np.int64)
    oddprod = np.ones_like(x)
    zero = np.zeros(x.shape, bool)
    for t in range(i):
        f = x - _U64(t)
        zero |= x == _U64(t)
        fz = np.where(f == 0, _U64(1), f)
        tz = _ctz_u64(fz)
        val += tz
        oddprod = oddprod * (fz >> tz.astype(np.uint64))
    e = ord2_factorial(i)
    oddfact = math.factorial(i) >> e
    c = oddprod * _U64(pow(oddfact, -1, 1 << 64))
    shift = val - e
    big = shift >= 64
    out = np.where(big, _U64(0), c << np.minimum(shift, 63).astype(np.uint64))
    # x < i as an integer gives C(x, i) = 0
    return np.where(zero, _U64(0), out)


def _eval(e, env, width, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    m = _mask(width)
    op = e.op
    if op == "var":
        if e.param >= len(env):
            raise ValueError(f"no value supplied for variable x{e.param}")
        r = env[e.param]
    elif op == "const":
        r = np.array(e.param & _FULL, dtype=_U64)
    elif op == "compose":
        subs = [_eval(s, env, width, memo) for s in e.args[1:]]
        r = _eval(e.args[0], subs, width, {})
    else:
        a = [_eval(c, env, width, memo) for c in e.args]
        if op == "add":
            r = a[0] + a[1]
        elif op == "sub":
            r = a[0] - a[1]
        elif op == "mul":
            r = a[0] * a[1]
        elif op == "xor":
            r = a[0] ^ a[1]
        elif op == "and":
            r = a[0] & a[1]
        elif op == "or":
            r = a[0] | a[1]
        elif op == "neg":
            r = _U64(0) - a[0]
        elif op == "not":
            r = ~a[0]
        elif op == "shl":
            k = e.param
            r = np.zeros_like(a[0]) if k >= 64 else a[0] << _U64(k)
        elif op == "mod2k":
            k = e.param
            r = a[0] if k >= 64 else a[0] & _U64((1 << k) - 1)
        elif op == "inv":
            u = a[0] & m
            if np.any((u & _U64(1)) == 0):
                bad = int(np.flatnonzero((u & _U64(1)) == 0)[0])
                raise ValueError(f"inv applied to even value (index {bad})")
            r = _inv_u64(u)
        elif op == "pow":
            r = _pow_u64(_U64(1) + _U64(2) * a[0], a[1] & m, width)
        elif op == "binom":
            r = _binom_u64(a[0] & m, e.param, width)
        else:
            raise ValueError(f"unknown node {op!r}")
    r = np.asarray(r, dtype=_U64) & m
    memo[key] = r
    return r


def eval_array(e, env, width):
    """Evaluate over arrays; returns a ``uint64`` array."""
    if not 1 <= width <= MAX_WIDTH:
        raise ValueError(f"width must be in 1..{MAX_WIDTH}")
    arrs = [np.asarray(v, dtype=_U64) & _mask(width) for v in env]
    if arrs:
        arrs = list(np.broadcast_arrays(*[np.atleast_1d(a) for a in arrs]))
    shape = arrs[0].shape if arrs else (1,)
    with np.errstate(over="ignore"):
        return np.broadcast_to(_eval(e, arrs, width, {}), shape).copy()


def evaluate(e, env, width=None):
    """Evaluate ``e`` at ``env`` (ints, Words or arrays).

    Scalars in give an ``int`` out; a list/tuple of expressions gives a
    tuple.  Width defaults to the width of Word inputs.
    """
    if isinstance(env, (int, np.integer, Word, np.ndarray)):
        env = [env]
    env = list(env)
    widths = {v.width for v in env if isinstance(v, Word)}
    if width is None:
        if len(widths) != 1:
            raise ValueError("width required")
        width = widths.pop()
    elif widths and widths != {width}:
        raise ValueError("width mismatch between Word inputs and requested width")
    if isinstance(e, (list, tuple)):
        return tuple(evaluate(c, env, width) for c in e)
    scalar = all(not isinstance(v, np.ndarray) for v in env)
    raw = [v if isinstance(v, np.ndarray) else
           np.uint64((v.value if isinstance(v, Word) else int(v)) & _FULL) for v in env]
    out = eval_array(e, raw, width)
    return int(out[0]) if scalar else out


def table(e, width):
    """Successor table of a univariate expression on Z/2^width."""
    return eval_array(e, [np.arange(1 << width, dtype=_U64)], width).astype(np.int64)


def multi_table(exprs, width):
    """Successor table of a system on (Z/2^width)^m, state = sum x_i << (width*i)."""
    m = len(exprs)
    n = width * m
    idx = np.arange(1 << n, dtype=_U64)
    mw = _mask(width)
    env = [(idx >> _U64(width * i)) & mw for i in range(m)]
    out = np.zeros(1 << n, dtype=_U64)
    for i, f in enumerate(exprs):
        out |= eval_array(f, env, width) << _U64(width * i)
    return out.astype(np.int64)


# -- ANF / coordinate functions -------------------------------------------

@dataclass(frozen=True)
class AnfTable:
    """Truth table of phi_j, where tau_j = chi_j xor phi_j."""
    j: int
    table: np.ndarray = field(repr=False)
    separable: bool = True

    @property
    def weight(self):
        return int(self.table.sum())

    def __len__(self):
        return len(self.table)


ANF_MAX_BIT = 24


def coord_anf(e, j, width=None):
    if arity(e) > 1:
        raise ValueError("coord_anf needs a univariate expression")
    if width is not None and j >= width:
        raise ValueError("bit index must be below the width")
    if j > ANF_MAX_BIT:
        raise ValueError(f"truth tables are limited to j <= {ANF_MAX_BIT}")
    w = j + 1
    y = np.arange(1 << w, dtype=_U64)
    tau = ((eval_array(e, [y], w) >> _U64(j)) & _U64(1)).astype(np.uint8)
    lo, hi = tau[: 1 << j], tau[1 << j:]
    bad = np.flatnonzero(lo == hi)
    if bad.size:
        y0 = int(bad[0])
        raise NotMeasurePreserving(j, (y0, y0 + (1 << j)))
    return AnfTable(j, lo.copy(), True)


def anf_weight_odd(t):
    return bool(t.weight & 1)


# -- derivatives modulo 2 / 4 -------------------------------------------------

INF = math.inf
ZERO, ONE = const(0), const(1)


def _is_c(e, c):
    return e.op == "const" and e.param == c


def _sadd(a, b):
    if _is_c(a, 0):
        return b
    if _is_c(b, 0):
        return a
    return a + b


def _ssub(a, b):
    if _is_c(b, 0):
        return a
    if _is_c(a, 0):
        return _sneg(b)
    return a - b


def _sneg(a):
    if a.op == "const":
        return const(-a.param)
    return -a


def _smul(a, b):
    if _is_c(a, 0) or _is_c(b, 0):
        return ZERO
    if _is_c(a, 1):
        return b
    if _is_c(b, 1):
        return a
    if a.op == "const" and b.op == "const":
        return const(a.param * b.param)
    return a * b


def _cval(c):
    if c == 0:
        return INF
    return (c & -c).bit_length() - 1


def _deriv(e, i):
    """Return ``(d, p)``: a derivative expression valid modulo ``2**p``."""
    op = e.op
    if op == "const":
        return ZERO, INF
    if op == "var":
        return (ONE if e.param == i else ZERO), INF
    if op == "compose":
        body, subs = e.args[0], e.args[1:]
        total, prec = ZERO, INF
        for r, s in enumerate(subs):
            ds, ps = _deriv(s, i)
            if _is_c(ds, 0) and ps == INF:
                continue
            db, pb = _deriv(body, r)
            db = substitute(db, list(subs)) if db.op != "const" else db
            total = _sadd(total, _smul(db, ds))
            prec = min(prec, pb, ps)
        return total, prec
    if op in ("inv", "pow", "binom"):
        raise NotDifferentiableMod2(f"no derivative rule for {op} nodes")
    if op in ("add", "sub"):
        (da, pa), (db, pb) = _deriv(e.args[0], i), _deriv(e.args[1], i)
        return (_sadd(da, db) if op == "add" else _ssub(da, db)), min(pa, pb)
    if op == "mul":
        u, v = e.args
        cu, cv = const_value(u), const_value(v)
        if cu is not None:
            dv, pv = _deriv(v, i)
            return _smul(const(cu), dv), pv + _cval(cu)
        if cv is not None:
            du, pu = _deriv(u, i)
            return _smul(du, const(cv)), pu + _cval(cv)
        (du, pu), (dv, pv) = _deriv(u, i), _deriv(v, i)
        return _sadd(_smul(du, v), _smul(u, dv)), min(pu, pv)
    if op == "neg":
        d, p = _deriv(e.args[0], i)
        return _sneg(d), p
    if op == "not":
        d, p = _deriv(e.args[0], i)
        return _sneg(d), p
    if op == "shl":
        d, p = _deriv(e.args[0], i)
        return _smul(const(1 << e.param), d), p + e.param
    if op == "mod2k":
        return ZERO, INF
    if op in ("xor", "and", "or"):
        u, v = e.args
        cu, cv = const_value(u), const_value(v)
        if cu is not None or cv is not None:
            c, w = (cu, v) if cu is not None else (cv, u)
            if cu is not None and cv is not None:
                return ZERO, INF
            dw, pw = _deriv(w, i)
            if op == "and":
                return (ZERO, INF) if c >= 0 else (dw, pw)
            if op == "or":
                return (dw, pw) if c >= 0 else (ZERO, INF)
            return (dw, pw) if c >= 0 else (_sneg(dw), pw)
        (du, pu), (dv, pv) = _deriv(u, i), _deriv(v, i)
        if op == "xor":
            # u ^ v = u + v - 2(u & v), and 2(u & v) vanishes modulo 2
            return _sadd(du, dv), min(pu, pv, 1)
        return ZERO, 0
    raise ValueError(f"unknown node {op!r}")


def deriv(e, i=0):
    """Partial derivative in ``x_i`` with its precision (bits), exact = inf."""
    return _deriv(e, i)


def deriv_mod2(e, i=None):
    """Derivative modulo 2.

    Univariate: a single expression.  With ``i`` given, the partial in
    ``x_i``.  For a list of expressions, the Jacobian as a nested list.
    """
    if isinstance(e, (list, tuple)):
        m = max(max(arity(f) for f in e), len(e))
        return [[deriv_mod2(f, r) for r in range(m)] for f in e]
    d, p = _deriv(e, 0 if i is None else i)
    if p < 1:
        raise NotDifferentiableMod2(
            "expression is not differentiable modulo 2 (a bivariate AND/OR needs an even factor)")
    return d


def _jacobian_mod2_values(exprs, env):
    jac = deriv_mod2(list(exprs))
    m = len(jac)
    vals = np.empty((len(env[0]), m, m), np.uint8)
    for r in range(m):
        for c in range(m):
            vals[:, r, c] = (eval_array(jac[r][c], env, 1) & _U64(1)).astype(np.uint8)
    return vals


def _det_gf2(mats):
    """Batched determinant over GF(2) of (N, m, m) uint8 matrices."""
    a = mats.copy()
    n, m, _ = a.shape
    ok = np.ones(n, bool)
    for col in range(m):
        sub = a[:, col:, col]
        has = sub.any(axis=1)
        ok &= has
        piv = col + np.argmax(sub, axis=1)
        rows = np.arange(n)
        tmp = a[rows, piv].copy()
        a[rows, piv] = a[:, col]
        a[:, col] = tmp
        below = a[:, col + 1:, col].astype(bool)
        a[:, col + 1:] ^= below[:, :, None] * a[:, col][:, None, :]
    return ok.astype(np.uint8)


def jacobian_det_mod2(exprs, point):
    """det of the Jacobian mod 2 at ``point`` (GF(2) determinant)."""
    env = [np.array([int(p) & 1], dtype=_U64) for p in point]
    return int(_det_gf2(_jacobian_mod2_values(exprs, env))[0])


def jacobian_det_mod2_all(exprs):
    """Determinants at all points of (Z/2)^m, indexed by sum bit_i << i."""
    m = len(exprs)
    idx = np.arange(1 << m, dtype=_U64)
    env = [(idx >> _U64(i)) & _U64(1) for i in range(m)]
    return _det_gf2(_jacobian_mod2_values(exprs, env))


# -- N_k bound and its certificate ----------------------------------------

def structural_n_bound(e, k):
    op = e.op
    if op in ("var", "const"):
        return 1
    kids = [structural_n_bound(a, k) for a in e.args]
    if op == "compose":
        return max(kids)
    if op == "mul":
        if const_value(e.args[0]) is None and const_value(e.args[1]) is None:
            return max(kids + [k])
        return max(kids)
    if op in ("xor", "and", "or"):
        cs = [const_value(a) for a in e.args]
        c = next((c for c in cs if c is not None), None)
        if c is not None:
            return max(kids + [max(1, abs(c).bit_length())])
        return max(kids)
    if op == "mod2k":
        return max(kids + [e.param])
    if op in ("inv", "pow", "binom"):
        return max(kids + [3])
    return max(kids)


@dataclass
class DiffCertificate:
    k: int
    n_bound: int
    structural_bound: int
    test_width: int
    verified: bool
    derivative: list
    empirical_min: int | None = None
    failures: list = field(default_factory=list)

    def to_json(self):
        return {
            "k": self.k,
            "N": self.n_bound,
            "structural_bound": self.structural_bound,
            "empirical_min": self.empirical_min,
            "test_width": self.test_width,
            "verified": self.verified,
            "derivative": [[to_string(d) for d in row] for row in self.derivative],
        }


def _check_taylor(exprs, jac, k, K):
    """Exhaustive check of F(u + 2^K h) = F(u) + 2^K h.F'(u) mod 2^(k+K)."""
    m = len(jac[0])
    w = k + K
    if w > MAX_WIDTH:
        raise ValueError("test width too large")
    nu, nh = 1 << w, 1 << k
    grid_u = np.arange(nu ** m, dtype=_U64)
    us = [(grid_u >> _U64(w * i)) & _mask(w) for i in range(m)]
    for hv in itertools.product(range(nh), repeat=m):
        shifted = [u + _U64(h << K) for u, h in zip(us, hv)]
        for f, row in zip(exprs, jac):
            lhs = eval_array(f, shifted, w)
            rhs = eval_array(f, us, w)
            for d, h in zip(row, hv):
                if h:
                    rhs = rhs + _U64(h << K) * eval_array(d, us, w)
            bad = np.flatnonzero((lhs - rhs) & _mask(w))
            if bad.size:
                b = int(bad[0])
                return [int(u[b]) for u in us], list(hv)
    return None


def n_bound(e, k, test_width=10):
    """Certified N_k: structural bound, validated exhaustively up to test_width."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    exprs = list(e) if isinstance(e, (list, tuple)) else [e]
    m = max(max(arity(f) for f in exprs), len(exprs) if isinstance(e, (list, tuple)) else 1, 1)
    jac = []
    for f in exprs:
        row = []
        for r in range(m):
            d, p = _deriv(f, r)
            if p < k:
                raise NotDifferentiableMod2(f"derivative only known modulo 2^{p}, need 2^{k}")
            row.append(d)
        jac.append(row)
    sb = max(structural_n_bound(f, k) for f in exprs)
    top = test_width - k
    with np.errstate(over="ignore"):
        bad = {K: _check_taylor(exprs, jac, k, K) for K in range(1, top + 1)}
    failures = [(K, w) for K, w in bad.items() if w is not None]
    last_fail = max((K for K, _ in failures), default=0)
    nb = max(sb, last_fail + 1)
    if nb > top:
        K, wit = failures[-1]
        raise ValidationFailed(f"Taylor relation fails at K={K} up to test width {test_width}", wit)
    return DiffCertificate(k, nb, sb, test_width, True, jac, last_fail + 1,
                           [{"K": K, "u": w[0], "h": w[1]} for K, w in failures if K >= sb])


def derivative_table(e, k, width):
    """Values of the univariate derivative modulo 2^k on Z/2^width."""
    d = deriv_mod2(e) if k == 1 else _deriv(e, 0)[0]
    return eval_array(d, [np.arange(1 << width, dtype=_U64)], width) & _U64((1 << k) - 1)


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>0[xX][0-9a-fA-F]+|\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>>>>|<<<|>>|<<|\*\*|[-+*%&^|~(),;=/])
""", re.X)

_ROTATIONS = {"rot", "rotl", "rotr", "rol", "ror"}
_VAR_RE = re.compile(r"x(\d+)?$")


def _tokens(text, base=0):
    pos = 0
    out = []
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if not mt:
            raise ParseError(f"unexpected character {text[pos]!r}", base + pos)
        kind = mt.lastgroup
        if kind != "ws":
            out.append((kind, mt.group(), base + pos))
        pos = mt.end()
    out.append(("end", "", base + len(text)))
    return out


class _Parser:
    def __init__(self, toks, defs, local=None):
        self.t = toks
        self.i = 0
        self.defs = defs
        self.local = local

    def peek(self, k=0):
        return self.t[min(self.i + k, len(self.t) - 1)]

    def take(self):
        tok = self.t[self.i]
        self.i += 1
        return tok

    def expect(self, s):
        kind, val, pos = self.take()
        if val != s:
            raise ParseError(f"expected {s!r}, found {val or 'end of input'!r}", pos)

    def at(self, s):
        return self.peek()[1] == s and self.peek()[0] == "op"

    def parse(self):
        e = self.p_or()
        kind, val, pos = self.peek()
        if kind != "end":
            self._forbid(val, pos)
            raise ParseError(f"unexpected {val!r}", pos)
        return e

    def _forbid(self, val, pos):
        if val == ">>":
            raise ParseError("right shift is not a T-function", pos)
        if val in (">>>", "<<<"):
            raise ParseError("rotation is not a T-function", pos)
        if val == "/":
            raise ParseError("division is not a T-function; use inv(e) for odd inverses", pos)

    def _binary(self, sub, ops):
        e = sub()
        while self.peek()[0] == "op" and self.peek()[1] in ops:
            op = self.take()[1]
            e = TExpr(ops[op], (e, sub()))
        self._forbid(self.peek()[1], self.peek()[2])
        return e

    def p_or(self):
        return self._binary(self.p_xor, {"|": "or"})

    def p_xor(self):
        return self._binary(self.p_and, {"^": "xor"})

    def p_and(self):
        return self._binary(self.p_shl, {"&": "and"})

    def p_shl(self):
        e = self.p_add()
        while True:
            kind, val, pos = self.peek()
            if val == "<<":
                self.take()
                k = self._int_literal("shift amount")
                e = TExpr("shl", (e,), k)
                continue
            self._forbid(val, pos)
            return e

    def p_add(self):
        return self._binary(self.p_mul, {"+": "add", "-": "sub"})

    def p_mul(self):
        e = self.p_unary()
        while True:
            kind, val, pos = self.peek()
            if val == "*":
                self.take()
                e = TExpr("mul", (e, self.p_unary()))
            elif val == "%":
                self.take()
                e = TExpr("mod2k", (e,), self._modulus())
            else:
                self._forbid(val, pos)
                return e

    def _int_literal(self, what):
        kind, val, pos = self.take()
        if kind != "num":
            raise ParseError(f"{what} must be an integer literal", pos)
        return int(val, 0)

    def _modulus(self):
        pos = self.peek()[2]
        base = self._int_literal("modulus")
        if self.peek()[1] in ("^", "**"):
            self.take()
            if base != 2:
                raise ParseError("modulus must be a power of two", pos)
            return self._int_literal("modulus exponent")
        if base <= 0 or base & (base - 1):
            raise ParseError("modulus must be a power of two", pos)
        return base.bit_length() - 1

    def p_unary(self):
        kind, val, pos = self.peek()
        if val == "-":
            self.take()
            return TExpr("neg", (self.p_unary(),))
        if val == "~":
            self.take()
            return TExpr("not", (self.p_unary(),))
        if val == "+":
            self.take()
            return self.p_unary()
        return self.p_pow()

    def p_pow(self):
        e = self.p_atom()
        if self.peek()[1] == "**":
            self.take()
            n = self._int_literal("exponent")
            if n < 1:
                raise ParseError("exponent must be positive", self.t[self.i - 1][2])
            e = e ** n
        return e

    def _args(self):
        self.expect("(")
        args = [self.p_or()]
        while self.at(","):
            self.take()
            args.append(self.p_or())
        self.expect(")")
        return args

    def p_atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return const(int(val, 0))
        if val == "(":
            e = self.p_or()
            self.expect(")")
            return e
        if kind == "id":
            if val in _ROTATIONS:
                raise ParseError("rotation is not a T-function", pos)
            if self.at("("):
                return self._call(val, pos)
            if self.local is not None:
                if val not in self.local:
                    raise ParseError(f"unknown variable {val!r} in definition", pos)
                return var(self.local[val])
            mv = _VAR_RE.match(val)
            if mv:
                idx = int(mv.group(1) or 0)
                if idx > 31:
                    raise ParseError("variables are x0..x31", pos)
                return var(idx)
            raise ParseError(f"unknown identifier {val!r}", pos)
        self._forbid(val, pos)
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)

    def _call(self, name, pos):
        args = self._args()
        if name == "inv":
            self._nargs(name, args, 1, pos)
            return inv(args[0])
        if name == "pow1p2":
            self._nargs(name, args, 2, pos)
            return pow1p2(*args)
        if name == "binom":
            self._nargs(name, args, 2, pos)
            i = const_value(args[1])
            if i is None or i < 0 or args[1].op != "const":
                raise ParseError("binom index must be a non-negative integer literal", pos)
            return binom(args[0], i)
        if name in self.defs:
            body, nparams = self.defs[name]
            self._nargs(name, args, nparams, pos)
            return compose(body, *args)
        raise ParseError(f"unknown function {name!r}", pos)

    @staticmethod
    def _nargs(name, args, n, pos):
        if len(args) != n:
            raise ParseError(f"{name} takes {n} argument(s), got {len(args)}", pos)


_DEF_RE = re.compile(r"\s*([A-Za-z_]\w*)\s*\(([^)]*)\)\s*=")


def parse(text, defs=None):
    """Parse the infix grammar.

    Definitions may precede the expression: ``"g(x) = x*x; 1 + x + 2*(g(x+1) - g(x))"``.
    ``defs`` maps names to already-parsed bodies (or grammar strings) in
    variables ``x0..``; calls become compose nodes.
    """
    table_ = {}
    for name, body in (defs or {}).items():
        if isinstance(body, str):
            body = parse(body, {k: v[0] for k, v in table_.items()})
        table_[name] = (body, max(arity(body), 1))
    pieces, offs, start = [], [], 0
    for mt in re.finditer(";", text):
        pieces.append(text[start:mt.start()])
        offs.append(start)
        start = mt.end()
    pieces.append(text[start:])
    offs.append(start)
    for piece, off in zip(pieces[:-1], offs[:-1]):
        md = _DEF_RE.match(piece)
        if not md:
            raise ParseError("expected a definition 'name(params) = expr' before ';'", off)
        name = md.group(1)
        if name in ("inv", "pow1p2", "binom") or name in _ROTATIONS or _VAR_RE.match(name):
            raise ParseError(f"cannot redefine {name!r}", off)
        params = [p.strip() for p in md.group(2).split(",") if p.strip()]
        if not params:
            raise ParseError("definition needs at least one parameter", off)
        body = _Parser(_tokens(piece[md.end():], off + md.end()), table_,
                       {p: i for i, p in enumerate(params)}).parse()
        table_[name] = (body, len(params))
    return _Parser(_tokens(pieces[-1], offs[-1]), table_).parse()


# -- printing -------------------------------------------------------------------

_SYM = {"add": "+", "sub": "-", "mul": "*", "xor": "^", "and": "&", "or": "|"}


def to_string(e, univariate=None):
    """Fully parenthesized text that :func:`parse` reads back."""
    if univariate is None:
        univariate = arity(e) <= 1
    op = e.op
    if op == "compose":
        return to_string(inline(e), univariate)
    if op == "var":
        return "x" if univariate and e.param == 0 else f"x{e.param}"
    if op == "const":
        c = e.param
        return str(c) if c >= 0 else f"(-{-c})"
    s = [to_string(a, univariate) for a in e.args]
    if op in _SYM:
        return f"({s[0]} {_SYM[op]} {s[1]})"
    if op == "neg":
        return f"(-{s[0]})"
    if op == "not":
        return f"(~{s[0]})"
    if op == "shl":
        return f"({s[0]} << {e.param})"
    if op == "mod2k":
        return f"({s[0]} % 2^{e.param})"
    if op == "inv":
        return f"inv({s[0]})"
    if op == "pow":
        return f"pow1p2({s[0]}, {s[1]})"
    if op == "binom":
        return f"binom({s[0]}, {e.param})"
    raise ValueError(op)
