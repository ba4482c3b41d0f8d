"""Permutations, interval exchange maps and Keane's condition."""

from __future__ import annotations

from bisect import bisect_right
from typing import NamedTuple, Optional, Sequence

from .scalar import FieldMismatch, Scalar, ScalarParseError, as_scalar, common_field

__all__ = [
    "DomainError",
    "IetSpec",
    "InvalidIet",
    "KeaneCoincidence",
    "Permutation",
    "Scalar",
    "ScalarParseError",
    "FieldMismatch",
    "apply",
    "is_irreducible",
    "keane_check",
    "orbit",
    "translation_offsets",
]


class DomainError(ValueError):
    """A point lies outside the domain of the map."""


class InvalidIet(ValueError):
    """Rejected permutation or length data."""


class Permutation:
    """A bijection of {1, ..., d}; images[k-1] is the position of interval k after the exchange."""

    __slots__ = ("_images",)

    def __init__(self, images: Sequence[int]):
        images = tuple(int(v) for v in images)
        if sorted(images) != list(range(1, len(images) + 1)):
            raise InvalidIet(f"{images} is not a permutation of 1..{len(images)}")
        self._images = images

    @classmethod
    def parse(cls, text: str) -> "Permutation":
        return cls(int(t) for t in text.replace("(", " ").replace(")", " ").replace(",", " ").split())

    @property
    def d(self) -> int:
        return len(self._images)

    @property
    def images(self) -> tuple[int, ...]:
        return self._images

    def __call__(self, k: int) -> int:
        return self._images[k - 1]

    def inverse(self) -> "Permutation":
        inv = [0] * self.d
        for k, v in enumerate(self._images, start=1):
            inv[v - 1] = k
        return Permutation(inv)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return self._images == other._images

    def __lt__(self, other):
        return self._images < other._images

    def __hash__(self):
        return hash(self._images)

    def __iter__(self):
        return iter(self._images)

    def __str__(self):
        return "(" + " ".join(str(v) for v in self._images) + ")"

    def __repr__(self):
        return f"Permutation({list(self._images)})"


def _as_permutation(pi) -> Permutation:
    return pi if isinstance(pi, Permutation) else Permutation(pi)


def is_irreducible(pi) -> bool:
    """False iff some proper prefix {1..k} is mapped onto itself."""
    pi = _as_permutation(pi)
    top = 0
    for k, v in enumerate(pi.images[:-1], start=1):
        top = max(top, v)
        if top == k:
            return False
    return True


class IetSpec:
    """The map T_{pi,lambda} on [0, |lambda|)."""

    __slots__ = ("pi", "lengths", "d", "total", "starts", "offsets", "_image_starts", "_image_order")

    def __init__(self, pi, lengths: Sequence, *, check_irreducible: bool = True):
        pi = _as_permutation(pi)
        lengths = tuple(as_scalar(v) for v in lengths)
        if pi.d < 2:
            raise InvalidIet("need at least two intervals")
        if len(lengths) != pi.d:
            raise InvalidIet(f"{len(lengths)} lengths for a permutation of {pi.d} symbols")
        if any(v.sign() <= 0 for v in lengths):
            raise InvalidIet("lengths must be positive")
        common_field(lengths)
        if check_irreducible and not is_irreducible(pi):
            raise InvalidIet(f"{pi} is reducible")
        self.pi = pi
        self.lengths = lengths
        self.d = pi.d
        starts = []
        acc = Scalar(0)
        for v in lengths:
            starts.append(acc)
            acc = acc + v
        self.starts = tuple(starts)
        self.total = acc
        order = sorted(range(self.d), key=lambda k: pi.images[k])
        image_starts = [Scalar(0)] * self.d
        acc = Scalar(0)
        for k in order:
            image_starts[k] = acc
            acc = acc + lengths[k]
        self.offsets = tuple(image_starts[k] - starts[k] for k in range(self.d))
        self._image_order = tuple(order)
        self._image_starts = tuple(image_starts[k] for k in order)

    def index(self, x: Scalar) -> int:
        """0-based index of the exchanged interval containing x."""
        return bisect_right(self.starts, x) - 1

    def image_index(self, y: Scalar) -> int:
        """0-based index k with y in T(I_k)."""
        return self._image_order[bisect_right(self._image_starts, y) - 1]

    def endpoints(self) -> tuple[Scalar, ...]:
        return self.starts

    def image_interval(self, k: int) -> tuple[Scalar, Scalar]:
        a = self.starts[k] + self.offsets[k]
        return a, a + self.lengths[k]

    def in_domain(self, x) -> bool:
        return 0 <= x < self.total

    def apply(self, x, n: int = 1) -> Scalar:
        return apply(self, x, n)

    def normalized(self) -> "IetSpec":
        return IetSpec(self.pi, [v / self.total for v in self.lengths])

    def __eq__(self, other):
        if not isinstance(other, IetSpec):
            return NotImplemented
        return self.pi == other.pi and self.lengths == other.lengths

    def __hash__(self):
        return hash((self.pi, self.lengths))

    def __repr__(self):
        return f"IetSpec({self.pi}, [{', '.join(str(v) for v in self.lengths)}])"


def translation_offsets(iet: IetSpec) -> tuple[Scalar, ...]:
    """omega_k with T(x) = x + omega_k on I_k; images are ordered by pi."""
    return iet.offsets


def _step_forward(iet: IetSpec, x: Scalar) -> Scalar:
    return x + iet.offsets[bisect_right(iet.starts, x) - 1]


def _step_backward(iet: IetSpec, y: Scalar) -> Scalar:
    return y - iet.offsets[iet.image_index(y)]


def apply(iet: IetSpec, x, n: int = 1) -> Scalar:
    """T^n(x) for any integer n."""
    x = as_scalar(x)
    if not (x.sign() >= 0 and x < iet.total):
        raise DomainError(f"{x} is outside [0, {iet.total})")
    if n >= 0:
        for _ in range(n):
            x = _step_forward(iet, x)
    else:
        for _ in range(-n):
            x = _step_backward(iet, x)
    return x


def orbit(iet: IetSpec, x, n: int) -> list[Scalar]:
    """[x, Tx, ..., T^n x] (or backwards when n < 0)."""
    x = as_scalar(x)
    if not (x.sign() >= 0 and x < iet.total):
        raise DomainError(f"{x} is outside [0, {iet.total})")
    out = [x]
    step = _step_forward if n >= 0 else _step_backward
    for _ in range(abs(n)):
        x = step(iet, x)
        out.append(x)
    return out


class KeaneCoincidence(NamedTuple):
    """T^k(left end of I_i) = left end of I_j, 1-based indices."""

    k: int
    i: int
    j: int


def keane_check(iet: IetSpec, depth: int) -> Optional[KeaneCoincidence]:
    """First forbidden endpoint coincidence with k <= depth, or None.

    Orbits start at the discontinuities (left ends of I_2..I_d); the single
    permitted coincidence is T(point) = 0 at k = 1.
    """
    if depth < 1:
        raise ValueError("depth must be positive")
    where = {p: j for j, p in enumerate(iet.starts, start=1)}
    points = list(iet.starts[1:])
    for k in range(1, depth + 1):
        for idx in range(len(points)):
            points[idx] = _step_forward(iet, points[idx])
            j = where.get(points[idx])
            if j is not None and not (k == 1 and j == 1):
                return KeaneCoincidence(k, idx + 2, j)
    return None
