"""Rauzy-Veech induction with exact lengths and integer matrices.

Intervals carry fixed labels.  The state is a pair of label orders: ``top``
lists labels by position in the domain, ``bottom`` by position of their
images.  Matrices act on label-indexed length vectors, so every elementary
step is the identity plus one off-diagonal 1.  The reduced permutation seen
by callers is pi(j) = position in ``bottom`` of the label at top position j.
"""

from __future__ import annotations

import enum
from collections import deque
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

from .iet import IetSpec, Permutation, is_irreducible
from .linalg import identity
from .scalar import Scalar, as_scalar

__all__ = [
    "InductionStep",
    "InductionTrace",
    "KeaneViolation",
    "NonPositiveEntry",
    "NotFound",
    "StepKind",
    "balance_ratio",
    "find_positive_return",
    "forced_path",
    "induct",
    "induction_step",
    "normalized_step",
    "rauzy_class",
    "recurrence_search",
]


class StepKind(enum.Enum):
    TOP = "top"
    BOTTOM = "bottom"


class NonPositiveEntry(ValueError):
    pass


class NotFound(LookupError):
    def __init__(self, max_steps: int):
        super().__init__(f"no positive return within {max_steps} steps")
        self.max_steps = max_steps


class KeaneViolation(ArithmeticError):
    """Exact tie between the two competing intervals; induction is undefined."""

    def __init__(self, at_step: int, trace: Optional["InductionTrace"] = None):
        super().__init__(f"length tie at induction step {at_step}")
        self.at_step = at_step
        self.trace = trace


def _reduced(top: Sequence[int], bottom: Sequence[int]) -> Permutation:
    where = {a: i for i, a in enumerate(bottom, start=1)}
    return Permutation([where[a] for a in top])


def _elementary(d: int, row: int, col: int) -> tuple:
    return tuple(tuple(1 if (i == j or (i == row - 1 and j == col - 1)) else 0 for j in range(d))
                 for i in range(d))


class InductionStep:
    """One induction step; ``winner`` is the longer of the two competing labels."""

    __slots__ = ("kind", "winner", "loser", "result_pi", "result_lambda", "top", "bottom")

    def __init__(self, kind, winner, loser, result_pi, result_lambda, top, bottom):
        self.kind = kind
        self.winner = winner
        self.loser = loser
        self.result_pi = result_pi
        self.result_lambda = result_lambda
        self.top = top
        self.bottom = bottom

    @property
    def matrix(self) -> tuple:
        return _elementary(len(self.top), self.winner, self.loser)

    def positional_lambda(self) -> tuple:
        return tuple(self.result_lambda[a - 1] for a in self.top)

    def __repr__(self):
        return f"InductionStep({self.kind.value}, {self.result_pi})"


class _Walker:
    """Mutable induction state; only used internally."""

    __slots__ = ("pi0", "lambda0", "top", "bottom", "lam", "cum", "kinds", "steps", "n", "keep_steps")

    def __init__(self, pi, lengths, keep_steps: bool = True):
        spec = pi if isinstance(pi, IetSpec) else IetSpec(pi, lengths)
        d = spec.d
        self.pi0 = spec.pi
        self.lambda0 = spec.lengths
        self.top = list(range(1, d + 1))
        bottom = [0] * d
        for k in range(1, d + 1):
            bottom[spec.pi(k) - 1] = k
        self.bottom = bottom
        self.lam = list(spec.lengths)
        self.cum = [list(row) for row in identity(d)]
        self.kinds: list = []
        self.steps: list = []
        self.n = 0
        self.keep_steps = keep_steps

    def copy(self) -> "_Walker":
        w = object.__new__(_Walker)
        w.pi0, w.lambda0 = self.pi0, self.lambda0
        w.top, w.bottom, w.lam = list(self.top), list(self.bottom), list(self.lam)
        w.cum = [list(row) for row in self.cum]
        w.kinds, w.steps = list(self.kinds), list(self.steps)
        w.n, w.keep_steps = self.n, self.keep_steps
        return w

    @property
    def pi(self) -> Permutation:
        return _reduced(self.top, self.bottom)

    def positional(self) -> list:
        return [self.lam[a - 1] for a in self.top]

    def step(self) -> StepKind:
        at, ab = self.top[-1], self.bottom[-1]
        lt, lb = self.lam[at - 1], self.lam[ab - 1]
        c = (lt - lb).sign()
        if c == 0:
            raise KeaneViolation(self.n + 1, self.snapshot())
        if c > 0:
            kind, win, lose = StepKind.BOTTOM, at, ab
            self.lam[at - 1] = lt - lb
            self.bottom.remove(ab)
            self.bottom.insert(self.bottom.index(at) + 1, ab)
        else:
            kind, win, lose = StepKind.TOP, ab, at
            self.lam[ab - 1] = lb - lt
            self.top.remove(at)
            self.top.insert(self.top.index(ab) + 1, at)
        for row in self.cum:
            row[lose - 1] += row[win - 1]
        self.n += 1
        self.kinds.append(kind)
        if self.keep_steps:
            self.steps.append(InductionStep(kind, win, lose, self.pi, tuple(self.lam),
                                            tuple(self.top), tuple(self.bottom)))
        return kind

    def snapshot(self) -> "InductionTrace":
        return InductionTrace(self.pi0, self.lambda0, tuple(self.steps), tuple(tuple(r) for r in self.cum),
                              self.pi, tuple(self.lam), self.n, tuple(self.top), tuple(self.bottom),
                              tuple(self.kinds))


class InductionTrace:
    """Result of n induction steps from (pi0, lambda0).

    ``lambda_n`` is label-indexed; ``positional_lambda()`` orders it along the
    induced interval so that IetSpec(pi_n, positional_lambda()) is the induced map.
    """

    __slots__ = ("pi0", "lambda0", "steps", "cumulative", "pi_n", "lambda_n", "n", "top", "bottom", "kinds")

    def __init__(self, pi0, lambda0, steps, cumulative, pi_n, lambda_n, n, top, bottom, kinds):
        self.pi0 = pi0
        self.lambda0 = lambda0
        self.steps = steps
        self.cumulative = cumulative
        self.pi_n = pi_n
        self.lambda_n = lambda_n
        self.n = n
        self.top = top
        self.bottom = bottom
        self.kinds = kinds

    @property
    def d(self) -> int:
        return len(self.top)

    def heights(self) -> tuple[int, ...]:
        """Return times s_j^n (column sums), label-indexed."""
        return tuple(sum(col) for col in zip(*self.cumulative))

    def positional_lambda(self) -> tuple:
        return tuple(self.lambda_n[a - 1] for a in self.top)

    def positional_heights(self) -> tuple[int, ...]:
        h = self.heights()
        return tuple(h[a - 1] for a in self.top)

    def positional_matrix(self) -> tuple:
        """M with M @ positional_lambda() = lambda0."""
        cols = [tuple(row[a - 1] for row in self.cumulative) for a in self.top]
        return tuple(zip(*cols))

    def induced(self) -> IetSpec:
        return IetSpec(self.pi_n, self.positional_lambda())

    def induced_length(self) -> Scalar:
        total = Scalar(0)
        for v in self.lambda_n:
            total = total + v
        return total

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "pi0": list(self.pi0.images),
            "lambda0": [str(v) for v in self.lambda0],
            "pi_n": list(self.pi_n.images),
            "lambda_n": [str(v) for v in self.lambda_n],
            "top": list(self.top),
            "bottom": list(self.bottom),
            "cumulative": [list(r) for r in self.cumulative],
            "kinds": [k.value for k in self.kinds],
        }

    @classmethod
    def from_json(cls, data: dict) -> "InductionTrace":
        """Rebuild by re-running the induction, then check the stored values agree."""
        trace = induct(Permutation(data["pi0"]), [Scalar.parse(s) for s in data["lambda0"]], data["n"])
        if trace.to_json() != data:
            raise ValueError("stored trace does not match its own induction")
        return trace


def induction_step(pi, lengths) -> InductionStep:
    w = _Walker(pi, lengths)
    w.step()
    return w.steps[0]


def induct(pi, lengths, n: int, *, keep_steps: bool = True) -> InductionTrace:
    if n < 0:
        raise ValueError("n must be nonnegative")
    w = _Walker(pi, lengths, keep_steps)
    for _ in range(n):
        w.step()
    return w.snapshot()


def normalized_step(pi, lengths) -> tuple[Permutation, tuple]:
    step = induction_step(pi, lengths)
    pos = step.positional_lambda()
    total = sum(pos, Scalar(0))
    return step.result_pi, tuple(v / total for v in pos)


def balance_ratio(B) -> Fraction:
    best = None
    for row in B:
        lo = min(row)
        if lo <= 0:
            raise NonPositiveEntry("balance ratio needs a strictly positive matrix")
        r = Fraction(max(row), lo)
        if best is None or r > best:
            best = r
    return best


def find_positive_return(pi, lengths, max_steps: int) -> tuple[int, InductionTrace]:
    """Smallest n <= max_steps with A^n > 0 entrywise and pi^n = pi."""
    w = _Walker(pi, lengths)
    start = w.pi
    for _ in range(max_steps):
        w.step()
        if w.pi == start and all(x > 0 for row in w.cum for x in row):
            return w.n, w.snapshot()
    raise NotFound(max_steps)


def _move(pi: Permutation, kind: StepKind) -> Permutation:
    d = pi.d
    top = list(range(1, d + 1))
    bottom = [0] * d
    for k in range(1, d + 1):
        bottom[pi(k) - 1] = k
    at, ab = top[-1], bottom[-1]
    if kind is StepKind.BOTTOM:
        bottom.remove(ab)
        bottom.insert(bottom.index(at) + 1, ab)
    else:
        top.remove(at)
        top.insert(top.index(ab) + 1, at)
    return _reduced(top, bottom)


def rauzy_class(pi) -> set:
    pi = pi if isinstance(pi, Permutation) else Permutation(pi)
    if not is_irreducible(pi):
        raise ValueError(f"{pi} is reducible")
    seen = {pi}
    queue = deque([pi])
    while queue:
        p = queue.popleft()
        for kind in StepKind:
            q = _move(p, kind)
            if q not in seen:
                seen.add(q)
                queue.append(q)
    return seen


def forced_path(pi, kinds: Sequence[StepKind]) -> tuple[tuple, Permutation, tuple]:
    """Follow a prescribed sequence of step kinds combinatorially.

    Returns (M, final permutation, final top order) where M is the positional
    matrix: any positive vector v gives lengths M v whose induction follows
    ``kinds`` and ends with positional lengths v.
    """
    pi = pi if isinstance(pi, Permutation) else Permutation(pi)
    d = pi.d
    top = list(range(1, d + 1))
    bottom = [0] * d
    for k in range(1, d + 1):
        bottom[pi(k) - 1] = k
    cum = [list(r) for r in identity(d)]
    for kind in kinds:
        at, ab = top[-1], bottom[-1]
        if kind is StepKind.BOTTOM:
            win, lose = at, ab
            bottom.remove(ab)
            bottom.insert(bottom.index(at) + 1, ab)
        else:
            win, lose = ab, at
            top.remove(at)
            top.insert(top.index(ab) + 1, at)
        for row in cum:
            row[lose - 1] += row[win - 1]
    cols = [tuple(row[a - 1] for row in cum) for a in top]
    return tuple(zip(*cols)), _reduced(top, bottom), tuple(top)


def iterate_normalized(pi, lengths, max_steps: int) -> Iterator[tuple[int, Permutation, tuple]]:
    """Yield (r, pi^r, normalized positional lengths) for r = 0..max_steps."""
    w = _Walker(pi, lengths, keep_steps=False)
    for r in range(max_steps + 1):
        if r:
            w.step()
        pos = w.positional()
        total = sum(pos, Scalar(0))
        yield r, w.pi, tuple(v / total for v in pos)


def recurrence_search(pi, lengths, predicate: Callable, max_steps: int, max_hits: int,
                      *, start: int = 1) -> list[int]:
    """Indices r in [start, max_steps] where predicate(pi^r, normalized lambda^r) holds."""
    hits: list[int] = []
    if max_hits <= 0:
        return hits
    for r, p, lam in iterate_normalized(pi, lengths, max_steps):
        if r >= start and predicate(p, lam):
            hits.append(r)
            if len(hits) >= max_hits:
                break
    return hits


def normalize(lengths) -> tuple:
    lengths = [as_scalar(v) for v in lengths]
    total = sum(lengths, Scalar(0))
    return tuple(v / total for v in lengths)
