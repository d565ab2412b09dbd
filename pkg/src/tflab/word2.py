"""Truncated 2-adic integers: n-bit words with wrapping arithmetic.

A :class:`Word` is the canonical unsigned residue of a 2-adic integer
modulo ``2**width``.  Negative numbers exist only through wraparound, so
``-1`` at width 8 is ``255``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

MAX_WIDTH = 64


class WidthError(ValueError):
    pass


def _check_width(width):
    if not 1 <= width <= MAX_WIDTH:
        raise WidthError(f"width must be in 1..{MAX_WIDTH}, got {width}")


def mask(width):
    return (1 << width) - 1


@dataclass(frozen=True, order=True)
class Word:
    width: int
    value: int

    def __post_init__(self):
        _check_width(self.width)
        object.__setattr__(self, "value", int(self.value) & mask(self.width))

    def _other(self, y):
        if isinstance(y, Word):
            if y.width != self.width:
                raise WidthError(f"width mismatch: {self.width} vs {y.width}")
            return y.value
        return int(y)

    def _mk(self, v):
        return Word(self.width, v)

    def __add__(self, y):
        return self._mk(self.value + self._other(y))

    def __sub__(self, y):
        return self._mk(self.value - self._other(y))

    def __mul__(self, y):
        return self._mk(self.value * self._other(y))

    def __xor__(self, y):
        return self._mk(self.value ^ self._other(y))

    def __and__(self, y):
        return self._mk(self.value & self._other(y))

    def __or__(self, y):
        return self._mk(self.value | self._other(y))

    __radd__ = __add__
    __rmul__ = __mul__
    __rxor__ = __xor__
    __rand__ = __and__
    __ror__ = __or__

    def __rsub__(self, y):
        return self._mk(self._other(y) - self.value)

    def __neg__(self):
        return self._mk(-self.value)

    def __invert__(self):
        return self._mk(~self.value)

    def __lshift__(self, k):
        return self._mk(self.value << int(k))

    def __int__(self):
        return self.value

    def __index__(self):
        return self.value

    def bit(self, j):
        """``δ_j(x)``; bit 0 is the least significant."""
        if not 0 <= j < self.width:
            raise IndexError(f"bit {j} outside width {self.width}")
        return (self.value >> j) & 1

    def mod2k(self, k):
        return self._mk(self.value & mask(min(k, self.width)))

    def signed(self):
        """Representative in ``[-2**(n-1), 2**(n-1))``."""
        v = self.value
        return v - (1 << self.width) if v >> (self.width - 1) else v


def word(width, value):
    return Word(width, value)


# Functional forms, handy for table-driven tests.

def add(x, y):
    return x + y


def sub(x, y):
    return x - y


def mul(x, y):
    return x * y


def neg(x):
    return -x


def xor(x, y):
    return x ^ y


def and_(x, y):
    return x & y


def or_(x, y):
    return x | y


def not_(x):
    return ~x


def shl(x, k):
    return x << k


def mod2k(x, k):
    return x.mod2k(k)


def bit(x, j):
    return x.bit(j)


# -- valuation ------------------------------------------------------------

INFINITE = math.inf


def val2(x):
    """2-adic valuation; ``math.inf`` for zero."""
    v = x.value if isinstance(x, Word) else int(x)
    if v == 0:
        return INFINITE
    return (v & -v).bit_length() - 1


def norm2(x):
    """``‖x‖₂ = 2**-ord₂(x)``, 0 for zero."""
    o = val2(x)
    return 0.0 if o == INFINITE else 2.0 ** -o


def dist2(x, y):
    return norm2(x - y)


def ord2_factorial(i):
    """ord₂(i!) = i - popcount(i)."""
    if i < 0:
        raise ValueError("i must be non-negative")
    return i - bin(i).count("1")


# -- special functions ----------------------------------------------------

def inv_odd(v):
    """Inverse of an odd word by Newton iteration r <- r(2 - vr)."""
    if not v.value & 1:
        raise ValueError("inv_odd: even input has no inverse mod 2^n")
    r = v.value  # correct mod 8 since v*v = 1 mod 8
    m = mask(v.width)
    good = 3
    while good < v.width:
        r = (r * (2 - v.value * r)) & m
        good *= 2
    return Word(v.width, r)


def pow_odd_base(u, v):
    """``(1+2u)**v`` mod 2^n using a table of squares ``a**(2**j)``.

    The exponent only matters mod 2^n since ``a**(2**n) = 1`` there.
    """
    n = u.width
    m = mask(n)
    a = (1 + 2 * u.value) & m
    e = (v.value if isinstance(v, Word) else int(v)) & m
    table = [a]
    for _ in range(n - 1):
        table.append((table[-1] * table[-1]) & m)
    r = 1
    for j in range(n):
        if (e >> j) & 1:
            r = (r * table[j]) & m
    return Word(n, r)


def binom_mod(x, i):
    """``C(x, i)`` mod 2^n for the canonical representative of ``x``.

    The falling product is accumulated modulo ``2**(n + ord₂(i!))``; after
    stripping the powers of two of ``i!`` exactly, the odd part of ``i!`` is
    inverted mod 2^n.
    """
    if i < 0:
        raise ValueError("i must be non-negative")
    n = x.width
    if i == 0:
        return Word(n, 1)
    e = ord2_factorial(i)
    wide = (1 << (n + e)) - 1
    acc = 1
    for t in range(i):
        acc = (acc * (x.value - t)) & wide
    # acc is divisible by 2^e because C(x,i) is an integer
    acc >>= e
    odd = math.factorial(i) >> e
    return Word(n, acc * pow(odd, -1, 1 << n))
