"""Small exact integer/Scalar matrix helpers (matrices are tuples of row tuples)."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .scalar import Scalar

Matrix = tuple


def identity(d: int) -> Matrix:
    return tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    cols = list(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in cols) for row in a)


def matvec(a: Matrix, v: Sequence) -> list:
    out = []
    for row in a:
        acc = Scalar(0)
        for x, y in zip(row, v):
            if x:
                acc = acc + y * x
        out.append(acc)
    return out


def column_sums(a: Matrix) -> tuple[int, ...]:
    return tuple(sum(col) for col in zip(*a))


def det(a: Matrix) -> int:
    """Bareiss fraction-free elimination; exact for integer matrices."""
    m = [list(row) for row in a]
    n = len(m)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def solve(a: Matrix, v: Sequence) -> list:
    """x with a x = v for a unimodular-or-invertible integer matrix and Scalar v."""
    n = len(a)
    m = [[Fraction(x) for x in row] for row in a]
    rhs = [v[i] if isinstance(v[i], Scalar) else Scalar(v[i]) for i in range(n)]
    for k in range(n):
        piv = next((r for r in range(k, n) if m[r][k] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        m[k], m[piv] = m[piv], m[k]
        rhs[k], rhs[piv] = rhs[piv], rhs[k]
        p = m[k][k]
        for i in range(n):
            if i != k and m[i][k] != 0:
                factor = m[i][k] / p
                for j in range(k, n):
                    m[i][j] -= factor * m[k][j]
                rhs[i] = rhs[i] - rhs[k] * factor
    return [rhs[i] / m[i][i] for i in range(n)]


def is_positive(a: Matrix) -> bool:
    return all(x > 0 for row in a for x in row)
