"""Piecewise-affine functions on [0, 1): roofs, Birkhoff sums and tower averages."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from typing import Iterable, Optional, Sequence

from .iet import DomainError, IetSpec
from .scalar import Scalar, as_scalar
from .towers import RokhlinTower

__all__ = [
    "InvalidRoof",
    "PiecewiseAffine",
    "PiecewiseRoof",
    "ac_rigidity_check",
    "birkhoff_sum",
    "center_on_tower",
    "continuity_over_exchanged",
    "decompose",
    "evaluate",
    "sum_of_jumps",
]

ONE = Scalar(1)
ZERO = Scalar(0)


class InvalidRoof(ValueError):
    pass


class PiecewiseAffine:
    """Right-continuous f(x) = values[i] + slopes[i] * (x - breaks[i]) on [breaks[i], breaks[i+1]).

    ``breaks[0]`` is 0 and the last piece ends at 1.
    """

    __slots__ = ("breaks", "values", "slopes", "_ends")

    def __init__(self, breaks: Sequence, values: Sequence, slopes: Optional[Sequence] = None):
        breaks = tuple(as_scalar(b) for b in breaks)
        values = tuple(as_scalar(v) for v in values)
        slopes = tuple(as_scalar(s) for s in slopes) if slopes is not None else (ZERO,) * len(values)
        if not breaks or breaks[0] != 0:
            raise InvalidRoof("the first piece must start at 0")
        if not (len(breaks) == len(values) == len(slopes)):
            raise InvalidRoof("breaks, values and slopes differ in length")
        for a, b in zip(breaks, breaks[1:]):
            if not a < b:
                raise InvalidRoof("breakpoints must be strictly increasing")
        if not breaks[-1] < 1:
            raise InvalidRoof("breakpoints must lie in [0, 1)")
        self.breaks = breaks
        self.values = values
        self.slopes = slopes
        self._ends = breaks[1:] + (ONE,)

    @classmethod
    def constant(cls, c) -> "PiecewiseAffine":
        return cls([0], [c], [0])

    @classmethod
    def from_pieces(cls, pieces: Iterable[dict]) -> "PiecewiseAffine":
        """Build from [{start, left_value, slope}] with exact-string scalars."""
        pieces = list(pieces)
        try:
            return cls([Scalar.parse(str(p["start"])) for p in pieces],
                       [Scalar.parse(str(p["left_value"])) for p in pieces],
                       [Scalar.parse(str(p.get("slope", "0"))) for p in pieces])
        except KeyError as exc:
            raise InvalidRoof(f"piece is missing {exc}") from None

    def to_pieces(self) -> list[dict]:
        return [{"start": str(b), "left_value": str(v), "slope": str(s)}
                for b, v, s in zip(self.breaks, self.values, self.slopes)]

    # --- evaluation ---------------------------------------------------------

    @property
    def n_pieces(self) -> int:
        return len(self.breaks)

    def piece(self, x: Scalar) -> int:
        return bisect_right(self.breaks, x) - 1

    def __call__(self, x) -> Scalar:
        x = as_scalar(x)
        if not (x.sign() >= 0 and x < 1):
            raise DomainError(f"{x} is outside [0, 1)")
        i = bisect_right(self.breaks, x) - 1
        s = self.slopes[i]
        return self.values[i] + s * (x - self.breaks[i]) if s else self.values[i]

    def length(self, i: int) -> Scalar:
        return self._ends[i] - self.breaks[i]

    def right_limit(self, i: int) -> Scalar:
        """Limit of f at the right end of piece i."""
        return self.values[i] + self.slopes[i] * self.length(i)

    def jumps(self) -> tuple[Scalar, ...]:
        """f(b_i) - f(b_i-) for the interior breakpoints b_1, b_2, ..."""
        return tuple(self.values[i] - self.right_limit(i - 1) for i in range(1, self.n_pieces))

    def wrap_jump(self) -> Scalar:
        """f(0) - f(1-), the jump seen when [0, 1) is closed into a circle."""
        return self.values[0] - self.right_limit(self.n_pieces - 1)

    def variation(self) -> Scalar:
        """Total variation on [0, 1): slopes times lengths plus interior jumps."""
        total = ZERO
        for i in range(self.n_pieces):
            total = total + abs(self.slopes[i]) * self.length(i)
        for j in self.jumps():
            total = total + abs(j)
        return total

    def sum_of_jumps(self) -> Scalar:
        total = ZERO
        for i in range(self.n_pieces):
            total = total + self.slopes[i] * self.length(i)
        return total

    def infimum(self) -> Scalar:
        return min(min(self.values[i], self.right_limit(i)) for i in range(self.n_pieces))

    def supremum(self) -> Scalar:
        return max(max(self.values[i], self.right_limit(i)) for i in range(self.n_pieces))

    def is_piecewise_constant(self) -> bool:
        return all(not s for s in self.slopes)

    def is_continuous(self) -> bool:
        return all(not j for j in self.jumps())

    def jump_points(self) -> list[tuple[Scalar, Scalar]]:
        """(b_i, jump) for interior breakpoints with a nonzero jump."""
        return [(self.breaks[i], j) for i, j in enumerate(self.jumps(), start=1) if j]

    # --- integration --------------------------------------------------------

    def integral(self, a=ZERO, b=ONE) -> Scalar:
        """Exact integral over [a, b) for 0 <= a <= b <= 1."""
        a, b = as_scalar(a), as_scalar(b)
        if not a < b:
            return ZERO
        total = ZERO
        i = bisect_right(self.breaks, a) - 1
        while i < self.n_pieces and self.breaks[i] < b:
            lo = a if a > self.breaks[i] else self.breaks[i]
            hi = b if b < self._ends[i] else self._ends[i]
            v0 = self.values[i] + self.slopes[i] * (lo - self.breaks[i])
            w = hi - lo
            total = total + w * v0 + self.slopes[i] * w * w / 2
            i += 1
        return total

    def integral_of_square(self, shift=ZERO) -> Scalar:
        """Integral over [0, 1) of (f - shift)^2."""
        shift = as_scalar(shift)
        total = ZERO
        for i in range(self.n_pieces):
            v, s, w = self.values[i] - shift, self.slopes[i], self.length(i)
            total = total + v * v * w + v * s * w * w + s * s * w * w * w / 3
        return total

    # --- algebra ------------------------------------------------------------

    def _combine(self, other: "PiecewiseAffine", sign: int) -> "PiecewiseAffine":
        pts = sorted(set(self.breaks) | set(other.breaks))
        values, slopes = [], []
        for p in pts:
            i, j = self.piece(p), other.piece(p)
            v1 = self.values[i] + self.slopes[i] * (p - self.breaks[i])
            v2 = other.values[j] + other.slopes[j] * (p - other.breaks[j])
            values.append(v1 + v2 * sign)
            slopes.append(self.slopes[i] + other.slopes[j] * sign)
        return PiecewiseAffine(pts, values, slopes).simplified()

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def simplified(self) -> "PiecewiseAffine":
        """Drop breakpoints where neither the value nor the slope changes."""
        keep = [0]
        for i in range(1, self.n_pieces):
            k = keep[-1]
            cont = self.values[k] + self.slopes[k] * (self.breaks[i] - self.breaks[k])
            if self.values[i] != cont or self.slopes[i] != self.slopes[k]:
                keep.append(i)
        return PiecewiseAffine([self.breaks[i] for i in keep], [self.values[i] for i in keep],
                               [self.slopes[i] for i in keep])

    def __eq__(self, other):
        if not isinstance(other, PiecewiseAffine):
            return NotImplemented
        a, b = self.simplified(), other.simplified()
        return a.breaks == b.breaks and a.values == b.values and a.slopes == b.slopes

    def __hash__(self):
        s = self.simplified()
        return hash((s.breaks, s.values, s.slopes))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_pieces()})"


class PiecewiseRoof(PiecewiseAffine):
    """A piecewise-affine roof: its infimum over [0, 1) must be positive."""

    __slots__ = ()

    def __init__(self, breaks, values, slopes=None):
        super().__init__(breaks, values, slopes)
        if self.infimum().sign() <= 0:
            raise InvalidRoof("roof must be bounded away from zero")

    @classmethod
    def of(cls, f: PiecewiseAffine) -> "PiecewiseRoof":
        return cls(f.breaks, f.values, f.slopes)


def evaluate(f: PiecewiseAffine, x) -> Scalar:
    return f(x)


def sum_of_jumps(f: PiecewiseAffine) -> Scalar:
    """S(f): the integral of the derivative of f over [0, 1)."""
    return f.sum_of_jumps()


def decompose(f: PiecewiseAffine) -> tuple[PiecewiseAffine, PiecewiseAffine]:
    """(f_pl, f_ac): f_pl has slope S(f) everywhere and carries the jumps; f_ac is continuous, f_ac(0) = 0."""
    S = f.sum_of_jumps()
    ac_values, ac_slopes = [], []
    acc = ZERO
    for i in range(f.n_pieces):
        ac_values.append(acc)
        s = f.slopes[i] - S
        ac_slopes.append(s)
        acc = acc + s * f.length(i)
    f_ac = PiecewiseAffine(f.breaks, ac_values, ac_slopes)
    f_pl = PiecewiseAffine(f.breaks, [v - w for v, w in zip(f.values, ac_values)], [S] * f.n_pieces)
    return f_pl, f_ac


def birkhoff_sum(f: PiecewiseAffine, iet: IetSpec, n: int, x) -> Scalar:
    """f(x) + ... + f(T^{n-1} x) for n > 0; -(f(T^{-1} x) + ... + f(T^n x)) for n < 0."""
    x = as_scalar(x)
    if not (x.sign() >= 0 and x < iet.total):
        raise DomainError(f"{x} is outside [0, {iet.total})")
    total = ZERO
    if n > 0:
        for _ in range(n):
            total = total + f(x)
            x = x + iet.offsets[iet.index(x)]
    elif n < 0:
        for _ in range(-n):
            x = x - iet.offsets[iet.image_index(x)]
            total = total - f(x)
    return total


def center_on_tower(f: PiecewiseAffine, iet: IetSpec, tower) -> Scalar:
    """a = (1/|D|) * integral of f over the union of T^i D, i < q, where D is the tower base."""
    levels = RokhlinTower(tower.base, tower.q, iet).levels()
    width = tower.base[1] - tower.base[0]
    total = ZERO
    for a, b in levels:
        total = total + f.integral(a, b)
    return total / width


def _sample_points(tower, samples: int) -> list[Scalar]:
    """Deterministic points of W: evenly spread levels, staggered offsets in J."""
    q = tower.q
    ja, jb = tower.J
    length = jb - ja
    pts = []
    for j in range(samples):
        level = (j * q) // samples
        u = length * (2 * j + 1) / (2 * samples)
        pts.append(ja + tower.shifts[level] + u)
    return pts


def ac_rigidity_check(g: PiecewiseAffine, iet: IetSpec, tower, samples: int = 64) -> Scalar:
    """max over sample points x in W of |g^(q)(T^q x) - g^(q)(x)|, exact."""
    if not g.is_continuous():
        raise InvalidRoof("g must be continuous")
    if g.sum_of_jumps() != 0:
        raise InvalidRoof("g must have zero mean derivative")
    q = tower.q
    best = ZERO
    for x in _sample_points(tower, samples):
        orbit = [x]
        for _ in range(2 * q - 1):
            x = x + iet.offsets[iet.index(x)]
            orbit.append(x)
        diff = ZERO
        for k in range(q):
            diff = diff + g(orbit[k + q]) - g(orbit[k])
        if abs(diff) > best:
            best = abs(diff)
    return best


def continuity_over_exchanged(f: PiecewiseAffine, iet: IetSpec) -> bool:
    """True iff every breakpoint with a nonzero jump is a left endpoint of some exchanged interval."""
    starts = iet.starts
    for b, _ in f.jump_points():
        i = bisect_left(starts, b)
        if i >= len(starts) or starts[i] != b:
            return False
    return True
