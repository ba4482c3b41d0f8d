"""Finite unions of half-open intervals [a, b) with exact endpoints.

Set operations are sweep-line merges over sorted endpoint lists.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Iterable, Iterator

from .scalar import Scalar, as_scalar

__all__ = ["IntervalSet", "disjoint_total"]


def sort_by_start(pieces: list) -> list:
    """Sort pairs by exact left endpoint.

    A float presort is verified by one exact pass; only on a tie or
    misordering do we fall back to exact comparisons throughout.
    """
    out = sorted(pieces, key=lambda p: float(p[0]))
    for i in range(1, len(out)):
        if not out[i - 1][0] <= out[i][0]:
            return sorted(pieces, key=lambda p: p[0])
    return out


class IntervalSet:
    """Sorted, pairwise disjoint, non-adjacent half-open intervals."""

    __slots__ = ("_iv", "_starts")

    def __init__(self, intervals: Iterable[tuple] = ()):
        pieces = []
        for a, b in intervals:
            a, b = as_scalar(a), as_scalar(b)
            if a < b:
                pieces.append((a, b))
        pieces = sort_by_start(pieces)
        merged: list[tuple[Scalar, Scalar]] = []
        for a, b in pieces:
            if merged and a <= merged[-1][1]:
                if b > merged[-1][1]:
                    merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        self._iv = tuple(merged)
        self._starts = None

    @classmethod
    def _trusted(cls, merged) -> "IntervalSet":
        obj = object.__new__(cls)
        obj._iv = tuple(merged)
        obj._starts = None
        return obj

    def __iter__(self) -> Iterator[tuple[Scalar, Scalar]]:
        return iter(self._iv)

    def __len__(self) -> int:
        return len(self._iv)

    def __bool__(self) -> bool:
        return bool(self._iv)

    def __eq__(self, other):
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._iv == other._iv

    def __repr__(self):
        body = ", ".join(f"[{a}, {b})" for a, b in self._iv)
        return f"IntervalSet({body})"

    @property
    def intervals(self) -> tuple[tuple[Scalar, Scalar], ...]:
        return self._iv

    def measure(self) -> Scalar:
        total = Scalar(0)
        for a, b in self._iv:
            total = total + (b - a)
        return total

    def contains(self, x) -> bool:
        if self._starts is None:
            self._starts = [a for a, _ in self._iv]
        i = bisect_right(self._starts, as_scalar(x)) - 1
        return i >= 0 and x < self._iv[i][1]

    def contains_interval(self, a, b) -> bool:
        """True iff [a, b) lies inside a single component."""
        if self._starts is None:
            self._starts = [s for s, _ in self._iv]
        i = bisect_right(self._starts, as_scalar(a)) - 1
        return i >= 0 and b <= self._iv[i][1]

    # --- boolean operations via a sweep over boundary events -------------

    def _sweep(self, other: "IntervalSet", keep) -> "IntervalSet":
        events = []
        for a, b in self._iv:
            events.append((a, 0, 1))
            events.append((b, 0, -1))
        for a, b in other._iv:
            events.append((a, 1, 1))
            events.append((b, 1, -1))
        events = sort_by_start(events)
        depth = [0, 0]
        out: list[tuple[Scalar, Scalar]] = []
        start = None
        i = 0
        n = len(events)
        while i < n:
            x = events[i][0]
            while i < n and events[i][0] == x:
                _, which, delta = events[i]
                depth[which] += delta
                i += 1
            inside = keep(depth[0] > 0, depth[1] > 0)
            if inside and start is None:
                start = x
            elif not inside and start is not None:
                if start < x:
                    out.append((start, x))
                start = None
        return IntervalSet._trusted(out)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return self._sweep(other, lambda p, q: p or q)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return self._sweep(other, lambda p, q: p and q)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self._sweep(other, lambda p, q: p and not q)

    def symmetric_difference(self, other: "IntervalSet") -> "IntervalSet":
        return self._sweep(other, lambda p, q: p != q)

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __xor__ = symmetric_difference

    def translate(self, t) -> "IntervalSet":
        t = as_scalar(t)
        return IntervalSet._trusted([(a + t, b + t) for a, b in self._iv])

    def issubset(self, other: "IntervalSet") -> bool:
        return not self.difference(other)


def disjoint_total(intervals: Iterable[tuple]) -> tuple[bool, Scalar]:
    """Check pairwise disjointness of a list of intervals; return (ok, summed length)."""
    items = sort_by_start([(as_scalar(a), as_scalar(b)) for a, b in intervals])
    total = Scalar(0)
    ok = True
    prev_end = None
    for a, b in items:
        if b < a:
            return False, total
        if prev_end is not None and a < prev_end:
            ok = False
        total = total + (b - a)
        prev_end = b if prev_end is None or b > prev_end else prev_end
    return ok, total
