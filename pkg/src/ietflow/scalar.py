"""Exact scalars: rationals and elements of a real quadratic field Q(sqrt(D)).

A value is stored as (a + b*sqrt(D)) / c with integers a, b, c, c > 0 and
gcd(a, b, c) = 1.  Rationals have b = 0 and D = 0.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Union

__all__ = ["Scalar", "FieldMismatch", "ScalarParseError", "as_scalar", "common_field", "squarefree_part"]


class FieldMismatch(ValueError):
    """Raised when two quadratic values live in different fields."""


class ScalarParseError(ValueError):
    """Raised for strings that do not describe an exact scalar."""


def squarefree_part(n: int) -> tuple[int, int]:
    """Return (k, m) with n = k*k*m and m square-free."""
    if n <= 0:
        raise ValueError("expected a positive integer")
    k, m = 1, n
    p = 2
    while p * p <= m:
        while m % (p * p) == 0:
            m //= p * p
            k *= p
        p += 1 if p == 2 else 2
    return k, m


class Scalar:
    __slots__ = ("_a", "_b", "_c", "_d")

    def __init__(self, value: Union[int, Fraction, str, "Scalar"] = 0):
        if isinstance(value, Scalar):
            self._a, self._b, self._c, self._d = value._a, value._b, value._c, value._d
        elif isinstance(value, int):
            self._a, self._b, self._c, self._d = int(value), 0, 1, 0
        elif isinstance(value, Fraction):
            self._a, self._b, self._c, self._d = value.numerator, 0, value.denominator, 0
        elif isinstance(value, str):
            s = Scalar.parse(value)
            self._a, self._b, self._c, self._d = s._a, s._b, s._c, s._d
        else:
            raise TypeError(f"cannot build a Scalar from {type(value).__name__}")

    @classmethod
    def _raw(cls, a: int, b: int, c: int, d: int) -> "Scalar":
        if c < 0:
            a, b, c = -a, -b, -c
        if b == 0:
            d = 0
            g = math.gcd(a, c)
        else:
            g = math.gcd(a, b, c)
        if g > 1:
            a //= g
            b //= g
            c //= g
        obj = object.__new__(cls)
        obj._a, obj._b, obj._c, obj._d = a, b, c, d
        return obj

    @classmethod
    def quadratic(cls, a, b, d: int) -> "Scalar":
        """Build a + b*sqrt(d) from rational a, b and a positive integer d."""
        fa, fb = Fraction(a), Fraction(b)
        if d <= 0:
            raise ValueError("d must be positive")
        k, m = squarefree_part(d)
        fb *= k
        if m == 1:
            return cls(fa + fb)
        den = fa.denominator * fb.denominator // math.gcd(fa.denominator, fb.denominator)
        return cls._raw(int(fa * den), int(fb * den), den, m)

    @staticmethod
    def sqrt(d: int) -> "Scalar":
        return Scalar.quadratic(0, 1, d)

    _PATTERN = re.compile(
        r"^\s*(?P<a>[+-]?\d+(?:/\d+)?)?\s*"
        r"(?:(?P<sign>[+-])?\s*(?:(?P<b>\d+(?:/\d+)?)\s*\*\s*)?sqrt\(\s*(?P<d>\d+)\s*\))?\s*$"
    )

    @classmethod
    def parse(cls, text: str) -> "Scalar":
        """Parse "p/q", "p" or "a+b*sqrt(D)" (a, b rational; either part optional)."""
        m = cls._PATTERN.match(text)
        if m is None or (m.group("a") is None and m.group("d") is None):
            raise ScalarParseError(f"not an exact scalar: {text!r}")
        try:
            a = Fraction(m.group("a")) if m.group("a") else Fraction(0)
            b = Fraction(m.group("b")) if m.group("b") else Fraction(1)
        except ZeroDivisionError:
            raise ScalarParseError(f"zero denominator: {text!r}") from None
        if m.group("d") is None:
            return cls(a)
        if m.group("a") is not None and m.group("sign") is None:
            raise ScalarParseError(f"missing sign before sqrt term: {text!r}")
        if m.group("sign") == "-":
            b = -b
        d = int(m.group("d"))
        if d == 0:
            raise ScalarParseError(f"sqrt of zero is not allowed: {text!r}")
        return cls.quadratic(a, b, d)

    # --- accessors -------------------------------------------------------

    @property
    def field(self) -> int:
        """Square-free radicand D, or 0 for a rational value."""
        return self._d

    @property
    def rational_part(self) -> Fraction:
        return Fraction(self._a, self._c)

    @property
    def irrational_part(self) -> Fraction:
        return Fraction(self._b, self._c)

    def is_rational(self) -> bool:
        return self._b == 0

    def as_fraction(self) -> Fraction:
        if self._b:
            raise ValueError(f"{self} is irrational")
        return Fraction(self._a, self._c)

    # --- arithmetic ------------------------------------------------------

    @staticmethod
    def _coerce(other):
        if isinstance(other, Scalar):
            return other
        if isinstance(other, int):
            return Scalar._raw(other, 0, 1, 0)
        if isinstance(other, Fraction):
            return Scalar._raw(other.numerator, 0, other.denominator, 0)
        return None

    @staticmethod
    def _join(d1: int, d2: int) -> int:
        if d1 == d2 or d2 == 0:
            return d1
        if d1 == 0:
            return d2
        raise FieldMismatch(f"sqrt({d1}) and sqrt({d2}) do not share a field")

    def __add__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        d = Scalar._join(self._d, o._d)
        if self._c == o._c:
            return Scalar._raw(self._a + o._a, self._b + o._b, self._c, d)
        return Scalar._raw(self._a * o._c + o._a * self._c, self._b * o._c + o._b * self._c,
                           self._c * o._c, d)

    __radd__ = __add__

    def __neg__(self):
        return Scalar._raw(-self._a, -self._b, self._c, self._d)

    def __pos__(self):
        return self

    def __sub__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        d = Scalar._join(self._d, o._d)
        a = self._a * o._a + self._b * o._b * d
        b = self._a * o._b + self._b * o._a
        return Scalar._raw(a, b, self._c * o._c, d)

    __rmul__ = __mul__

    def _inverse(self) -> "Scalar":
        if self._b == 0:
            if self._a == 0:
                raise ZeroDivisionError("division by zero")
            return Scalar._raw(self._c, 0, self._a, 0)
        norm = self._a * self._a - self._b * self._b * self._d
        return Scalar._raw(self._c * self._a, -self._c * self._b, norm, self._d)

    def __truediv__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        if o._b == 0:
            if o._a == 0:
                raise ZeroDivisionError("division by zero")
            return Scalar._raw(self._a * o._c, self._b * o._c, self._c * o._a, self._d)
        return self * o._inverse()

    def __rtruediv__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        return o * self._inverse()

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # --- order -----------------------------------------------------------

    def sign(self) -> int:
        a, b = self._a, self._b
        if b == 0:
            return (a > 0) - (a < 0)
        if a >= 0 and b > 0:
            return 1
        if a <= 0 and b < 0:
            return -1
        # opposite signs: the larger of a^2 and b^2 D wins
        if a * a > b * b * self._d:
            return 1 if a > 0 else -1
        return 1 if b > 0 else -1

    def _cmp(self, other) -> int:
        o = Scalar._coerce(other)
        if o is None:
            raise TypeError
        if self._b == 0 and o._b == 0:
            lhs, rhs = self._a * o._c, o._a * self._c
            return (lhs > rhs) - (lhs < rhs)
        return (self - o).sign()

    def __lt__(self, other):
        try:
            return self._cmp(other) < 0
        except TypeError:
            return NotImplemented

    def __le__(self, other):
        try:
            return self._cmp(other) <= 0
        except TypeError:
            return NotImplemented

    def __gt__(self, other):
        try:
            return self._cmp(other) > 0
        except TypeError:
            return NotImplemented

    def __ge__(self, other):
        try:
            return self._cmp(other) >= 0
        except TypeError:
            return NotImplemented

    def __eq__(self, other):
        o = Scalar._coerce(other)
        if o is None:
            return NotImplemented
        if self._b != o._b or self._a != o._a or self._c != o._c:
            return False
        return self._b == 0 or self._d == o._d

    def __hash__(self):
        if self._b == 0:
            return hash(Fraction(self._a, self._c))
        return hash((self._a, self._b, self._c, self._d))

    def __bool__(self):
        return self._a != 0 or self._b != 0

    # --- conversions -----------------------------------------------------

    def __float__(self):
        a, b, c, d = self._a, self._b, self._c, self._d
        if b == 0:
            return float(Fraction(a, c))
        root = math.sqrt(d)
        if (a >= 0) == (b >= 0):
            return float(Fraction(a, c)) + float(Fraction(b, c)) * root
        # opposite signs: divide the norm by the conjugate to avoid cancellation
        norm = Fraction(a * a - b * b * d, c * c)
        return float(norm) / (float(Fraction(a, c)) - float(Fraction(b, c)) * root)

    def __str__(self):
        rat = Fraction(self._a, self._c)
        if self._b == 0:
            return str(rat)
        irr = Fraction(self._b, self._c)
        if irr == 1:
            tail = f"sqrt({self._d})"
        elif irr == -1:
            tail = f"-sqrt({self._d})"
        else:
            tail = f"{irr}*sqrt({self._d})"
        if rat == 0:
            return tail
        return f"{rat}{'' if tail.startswith('-') else '+'}{tail}"

    def __repr__(self):
        return f"Scalar('{self}')"

    def __reduce__(self):
        return (Scalar.parse, (str(self),))


def as_scalar(value) -> Scalar:
    """Coerce ints, Fractions, strings and Scalars; floats are rejected."""
    if isinstance(value, Scalar):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not exact; pass a Fraction or a string")
    return Scalar(value)


def common_field(values) -> int:
    """The shared radicand of a collection of Scalars (0 if all rational)."""
    d = 0
    for v in values:
        d = Scalar._join(d, as_scalar(v).field)
    return d
