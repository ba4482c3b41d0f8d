"""Rokhlin towers from induction data and rigidity towers W with exact certificates."""

from __future__ import annotations

from bisect import bisect_right
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

from .iet import IetSpec, Permutation
from .intervals import IntervalSet, disjoint_total
from .linalg import solve
from .rauzy import (
    InductionTrace,
    _Walker,
    balance_ratio,
    find_positive_return,
    rauzy_class,
)
from .scalar import Scalar, as_scalar

__all__ = [
    "BudgetExhausted",
    "Certificate",
    "ConstantTowers",
    "EmptyTower",
    "InvalidParameter",
    "NoSuitablePermutation",
    "NotCaptured",
    "ParameterInfeasible",
    "RigidityDiagnostic",
    "RigidityTower",
    "RokhlinTower",
    "Windows",
    "build_W_constant",
    "build_W_linear",
    "choose_delta_linear",
    "choose_deltas_constant",
    "discontinuity_windows",
    "rigidity_diagnostic",
    "rigidity_tower",
    "tower_decomposition",
    "translation_pieces",
]


class EmptyTower(ValueError):
    """The requested triple intersection is empty or not a single interval."""


class BudgetExhausted(RuntimeError):
    pass


class ParameterInfeasible(ValueError):
    pass


class InvalidParameter(ValueError):
    pass


class NoSuitablePermutation(LookupError):
    pass


class NotCaptured(LookupError):
    def __init__(self, l: int):
        super().__init__(f"beta_{l} is not inside the subtower W^{l}")
        self.l = l


class Certificate(NamedTuple):
    name: str
    lhs: str
    op: str
    rhs: str
    holds: bool

    def to_json(self) -> dict:
        return self._asdict()


def _cert(name: str, lhs, op: str, rhs) -> Certificate:
    holds = {">": lhs > rhs, ">=": lhs >= rhs, "<": lhs < rhs, "<=": lhs <= rhs, "==": lhs == rhs}[op]
    return Certificate(name, str(lhs), op, str(rhs), bool(holds))


# --- piecewise translation of intervals -----------------------------------

def translation_pieces(iet: IetSpec, lo, hi, k: int) -> list[tuple[Scalar, Scalar, Scalar]]:
    """Split [lo, hi) into pieces (a, b, t) with T^k x = x + t on [a, b); k may be negative."""
    lo, hi = as_scalar(lo), as_scalar(hi)
    pieces = [(lo, hi, Scalar(0))]
    if k >= 0:
        ends = iet.starts[1:] + (iet.total,)
        for _ in range(k):
            nxt = []
            for a, b, t in pieces:
                x, y = a + t, b + t
                while x < y:
                    i = bisect_right(iet.starts, x) - 1
                    cut = y if y <= ends[i] else ends[i]
                    nxt.append((x - t, cut - t, t + iet.offsets[i]))
                    x = cut
            pieces = nxt
    else:
        img = [iet.image_interval(i) for i in range(iet.d)]
        for _ in range(-k):
            nxt = []
            for a, b, t in pieces:
                x, y = a + t, b + t
                while x < y:
                    i = iet.image_index(x)
                    end = img[i][1]
                    cut = y if y <= end else end
                    nxt.append((x - t, cut - t, t - iet.offsets[i]))
                    x = cut
            pieces = nxt
    return pieces


def _level_checked(iet: IetSpec, a: Scalar, length: Scalar) -> int:
    """Index of the exchanged interval holding [a, a+length); -1 if it straddles."""
    i = bisect_right(iet.starts, a) - 1
    end = iet.starts[i + 1] if i + 1 < iet.d else iet.total
    return i if a + length <= end else -1


# --- Rokhlin towers -----------------------------------------------------------

class RokhlinTower:
    """Levels T^i[a, b) for 0 <= i < height, each inside one exchanged interval."""

    __slots__ = ("base", "height", "iet", "_levels")

    def __init__(self, base, height: int, iet: IetSpec):
        a, b = as_scalar(base[0]), as_scalar(base[1])
        if not a < b or height < 1:
            raise ValueError("empty tower")
        self.base = (a, b)
        self.height = height
        self.iet = iet
        self._levels = None

    def levels(self) -> list[tuple[Scalar, Scalar]]:
        if self._levels is None:
            a, b = self.base
            length = b - a
            out = []
            for i in range(self.height):
                out.append((a, a + length))
                if i + 1 < self.height:
                    # T must act as one translation on every level it moves
                    k = _level_checked(self.iet, a, length)
                    if k < 0:
                        raise EmptyTower(f"level {i} straddles a discontinuity")
                    a = a + self.iet.offsets[k]
            self._levels = out
        return self._levels

    @property
    def q(self) -> int:
        return self.height

    def measure(self) -> Scalar:
        a, b = self.base
        return (b - a) * self.height

    def top_image(self) -> tuple[Scalar, Scalar]:
        a, b = self.levels()[-1]
        k = _level_checked(self.iet, a, b - a)
        if k < 0:
            raise EmptyTower("top level straddles a discontinuity")
        return a + self.iet.offsets[k], b + self.iet.offsets[k]


def tower_decomposition(trace: InductionTrace) -> list[RokhlinTower]:
    """d towers over the induced intervals, ordered by label."""
    iet = IetSpec(trace.pi0, trace.lambda0)
    heights = trace.heights()
    starts = {}
    acc = Scalar(0)
    for label in trace.top:
        starts[label] = acc
        acc = acc + trace.lambda_n[label - 1]
    return [RokhlinTower((starts[a], starts[a] + trace.lambda_n[a - 1]), heights[a - 1], iet)
            for a in range(1, trace.d + 1)]


# --- rigidity towers ----------------------------------------------------------

class RigidityTower:
    """W = union of T^i J over i < q, with J = D ∩ T^-q D (∩ T^-2q D when order is 3).

    ``shifts[k]`` is the exact translation of T^k on J for 0 <= k <= order*q.
    """

    __slots__ = ("iet", "base", "J", "q", "order", "shifts", "W", "measure", "displacement",
                 "gamma", "lambda_gap", "n_index", "depth", "scale", "certificates", "subtowers",
                 "params", "_levels")

    def __init__(self, iet, base, J, q, order, shifts, W):
        self.iet = iet
        self.base = base
        self.J = J
        self.q = q
        self.order = order
        self.shifts = shifts
        self.W = W
        self.measure = (J[1] - J[0]) * q
        self.displacement = shifts[q]
        self.gamma: Optional[Scalar] = None
        self.lambda_gap: Optional[Scalar] = None
        self.n_index: Optional[int] = None
        self.depth: Optional[int] = None
        self.scale: Optional[Scalar] = None
        self.certificates: list[Certificate] = []
        self.subtowers: list[IntervalSet] = []
        self.params: dict = {}
        self._levels = None

    @property
    def J_length(self) -> Scalar:
        return self.J[1] - self.J[0]

    def levels(self) -> list[tuple[Scalar, Scalar]]:
        if self._levels is None:
            a, b = self.J
            self._levels = [(a + self.shifts[i], b + self.shifts[i]) for i in range(self.q)]
        return self._levels

    def level_of(self, x) -> Optional[tuple[int, Scalar]]:
        """(i, u) with x = J_start + shifts[i] + u, or None when x is outside W."""
        x = as_scalar(x)
        if not self.W.contains(x):
            return None
        for i, (a, b) in enumerate(self.levels()):
            if a <= x < b:
                return i, x - a
        return None

    def all_certified(self) -> bool:
        return all(c.holds for c in self.certificates)

    def to_json(self) -> dict:
        out = {
            "q": self.q,
            "J": [str(self.J[0]), str(self.J[1])],
            "base": [str(self.base[0]), str(self.base[1])],
            "measure": str(self.measure),
            "displacement": str(self.displacement),
            "depth": self.depth,
            "n_index": self.n_index,
            "certificates": [c.to_json() for c in self.certificates],
        }
        if self.gamma is not None:
            out["gamma"] = str(self.gamma)
        if self.lambda_gap is not None:
            out["lambda_gap"] = str(self.lambda_gap)
        return out


def rigidity_tower(iet: IetSpec, base, q: int, order: int = 3) -> RigidityTower:
    """Build the tower over J = D ∩ T^-q D ∩ ... (order-1 returns) for D = [base)."""
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    if q < 1:
        raise ValueError("height must be positive")
    da, db = as_scalar(base[0]), as_scalar(base[1])
    # points of D whose T^q and T^{2q} images stay in D
    live = [(da, db, Scalar(0))]
    for _ in range(order - 1):
        nxt = []
        for a, b, t in live:
            for pa, pb, s in translation_pieces(iet, a + t, b + t, q):
                pa, pb, s = pa - t, pb - t, s + t
                lo = pa if pa + s >= da else da - s
                hi = pb if pb + s <= db else db - s
                if lo < hi:
                    nxt.append((lo, hi, s))
        live = nxt
    parts = IntervalSet((a, b) for a, b, _ in live)
    if len(parts) != 1:
        raise EmptyTower("triple intersection is empty" if not parts else "triple intersection is not an interval")
    (ja, jb), = parts.intervals
    length = jb - ja
    shifts = [Scalar(0)]
    x = ja
    for k in range(order * q):
        i = _level_checked(iet, x, length)
        if i < 0:
            raise EmptyTower(f"T^{k} J straddles a discontinuity")
        x = x + iet.offsets[i]
        shifts.append(x - ja)
    levels = [(ja + shifts[i], jb + shifts[i]) for i in range(q)]
    ok, total = disjoint_total(levels)
    if not ok:
        raise EmptyTower("levels of W overlap")
    tower = RigidityTower(iet, (da, db), (ja, jb), q, order, tuple(shifts), IntervalSet(levels))
    tower._levels = levels
    return tower


class RigidityDiagnostic(NamedTuple):
    sup_disp_q: Scalar
    sup_disp_2q: Optional[Scalar]
    boundary_measure: Scalar

    def to_json(self) -> dict:
        return {"sup_disp_q": str(self.sup_disp_q),
                "sup_disp_2q": None if self.sup_disp_2q is None else str(self.sup_disp_2q),
                "boundary_measure": str(self.boundary_measure)}


def rigidity_diagnostic(tower: RigidityTower) -> RigidityDiagnostic:
    q, e = tower.q, tower.shifts
    sup_q = max(abs(e[i + q] - e[i]) for i in range(q))
    sup_2q = max(abs(e[i + 2 * q] - e[i]) for i in range(q)) if tower.order == 3 else None
    ja, jb = tower.J
    back = [(a + t, b + t) for a, b, t in translation_pieces(tower.iet, ja, jb, -1)]
    shifted = IntervalSet(tower.levels()[:-1] + back)
    boundary = (tower.W ^ shifted).measure()
    return RigidityDiagnostic(sup_q, sup_2q, boundary)


# --- parameter choices --------------------------------------------------------

_DYADIC = 2 ** 32


def choose_delta_linear(epsilon: Fraction, rho: Fraction) -> Fraction:
    """Largest k/2^32 < eps/6 with (1-3d)(1-rho*d/(1-d)) > 1-eps."""
    epsilon, rho = Fraction(epsilon), Fraction(rho)

    def good(d: Fraction) -> bool:
        return (1 - 3 * d) * (1 - rho * d / (1 - d)) > 1 - epsilon

    hi = -(-epsilon * _DYADIC // 6) - 1       # largest k with k/2^32 < eps/6
    lo = 0
    if hi < 1 or not good(Fraction(1, _DYADIC)):
        raise ParameterInfeasible(f"no admissible delta for eps={epsilon}, rho={rho}")
    lo = 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if good(Fraction(mid, _DYADIC)):
            lo = mid
        else:
            hi = mid - 1
    return Fraction(lo, _DYADIC)


def choose_deltas_constant(epsilon: Fraction, rho: Fraction) -> tuple[Fraction, Fraction]:
    """(delta, delta') with eps/3 < delta' < delta < eps/2 and delta - delta' < eps/(4 rho)."""
    epsilon, rho = Fraction(epsilon), Fraction(rho)
    delta = 5 * epsilon / 12
    dp = delta - epsilon / (8 * rho)
    if dp <= epsilon / 3:
        dp = (epsilon / 3 + delta) / 2
    if not (epsilon / 3 < dp < delta < epsilon / 2 and delta - dp < epsilon / (4 * rho)):
        raise ParameterInfeasible("no admissible (delta, delta')")
    return delta, dp


# --- the two rigidity constructions -------------------------------------------

def _normalized_spec(pi, lengths) -> IetSpec:
    spec = pi if isinstance(pi, IetSpec) else IetSpec(pi, lengths)
    if spec.total != 1:
        spec = spec.normalized()
    return spec


def _in_cone(B_pos, mu) -> Optional[list]:
    """lambda' = B^-1 mu, normalized, when it is strictly positive."""
    lam = solve(B_pos, mu)
    if any(v.sign() <= 0 for v in lam):
        return None
    total = sum(lam, Scalar(0))
    return [v / total for v in lam]


def _advance(walker: _Walker, kinds) -> Optional[_Walker]:
    w = walker.copy()
    w.keep_steps = False
    for k in kinds:
        if w.step() is not k:
            return None
    return w


def _start_state(spec: IetSpec, pi0: Permutation, budget: int):
    """First state of the induction of spec with permutation pi0, or None."""
    w = _Walker(spec, None, keep_steps=False)
    for _ in range(budget + 1):
        if w.pi == pi0:
            return w
        w.step()
    return None


def build_W_linear(pi, lengths, epsilon, budget: int, *, lambda0=None, max_hits: int = 3,
                   max_return: int = 256) -> list[RigidityTower]:
    """Towers W with Leb(W) > 1 - eps from returns of the induction into a thin simplex corner.

    The induction of (pi, lambda) is searched for states r <= budget whose
    normalized lengths lie in B * Y, where B is a positive return matrix for
    (pi, lambda0) and Y = {l_1 > 1 - delta, l_j > delta/(2d)}.  Each hit gives a
    tower at depth m + r over I_1 with q = s_1.
    """
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < 1:
        raise InvalidParameter("epsilon must lie in (0, 1)")
    spec = _normalized_spec(pi, lengths)
    if budget < 1:
        raise BudgetExhausted("budget is zero")
    pi0 = spec.pi
    lam0 = spec.lengths if lambda0 is None else tuple(as_scalar(v) for v in lambda0)
    m, btrace = find_positive_return(pi0, lam0, max_return)
    B_pos = btrace.positional_matrix()
    rho = balance_ratio(btrace.cumulative)
    delta = choose_delta_linear(epsilon, rho)
    d = spec.d
    y1, yj = 1 - delta, delta / (2 * d)
    gamma_floor = delta / (2 * d) * (1 - rho * delta / (1 - delta))
    kinds = btrace.kinds

    towers: list[RigidityTower] = []
    w = _Walker(spec, None, keep_steps=False)
    for r in range(budget + 1):
        if r:
            w.step()
        if w.pi != pi0:
            continue
        lam = _in_cone(B_pos, w.positional())
        if lam is None or not (lam[0] > y1 and all(v > yj for v in lam[1:])):
            continue
        deep = _advance(w, kinds)
        if deep is None or deep.pi != pi0:
            continue
        trace = deep.snapshot()
        pos = trace.positional_lambda()
        q = trace.heights()[0]
        if towers and q <= towers[-1].q:
            continue
        omega = Scalar(0)
        for i in range(d):
            if pi0.images[i] < pi0.images[0]:
                omega = omega + pos[i]
        tower = rigidity_tower(spec, (Scalar(0), pos[0]), q, order=3)
        size = trace.induced_length()
        tower.n_index, tower.depth, tower.scale = r, trace.n, size
        tower.gamma = omega * q
        tower.certificates = [
            _cert("leb_W", tower.measure, ">", Scalar(1 - epsilon)),
            _cert("J_is_0_to_l1_minus_2omega", tower.J[1], "==", pos[0] - 2 * omega),
            _cert("displacement_is_gamma_over_q", tower.displacement, "==", omega),
            _cert("gamma_lower_bound", tower.gamma, ">=", Scalar(gamma_floor)),
            _cert("disp_below_induced_length", tower.displacement, "<=", size),
            _cert("leb_J_lower", tower.J_length, ">=", size * (1 - 3 * delta)),
        ]
        towers.append(tower)
        if len(towers) >= max_hits:
            break
    if not towers:
        raise BudgetExhausted(f"no recurrence into the target region within {budget} steps")
    params = {"m": m, "rho": rho, "delta": delta, "epsilon": epsilon, "B": btrace.cumulative}
    for t in towers:
        t.params = params
    return towers


def _pick_pi0(pi: Permutation) -> Permutation:
    d = pi.d
    if pi(1) == d and pi(d) == 1:
        return pi
    cands = sorted(p for p in rauzy_class(pi) if p(1) == d and p(d) == 1)
    if not cands:
        raise NoSuitablePermutation(f"class of {pi} has no element with pi(1)=d, pi(d)=1")
    return cands[0]


class ConstantTowers(NamedTuple):
    tower: RigidityTower
    subtowers: list  # IntervalSet per l = 1..r
    sub_bases: list  # (a, b) per l


def build_W_constant(pi, lengths, epsilon, r: int, budget: int, *, lambda0=None, max_hits: int = 3,
                     max_return: int = 256) -> list[ConstantTowers]:
    """Towers over I_1 with q = s_1 + s_d whose displacement is l_d - l_1, plus 2r+1 subtowers."""
    if r < 3:
        raise InvalidParameter("r must be at least 3")
    epsilon = Fraction(epsilon)
    spec = _normalized_spec(pi, lengths)
    if budget < 1:
        raise BudgetExhausted("budget is zero")
    pi0 = _pick_pi0(spec.pi)
    if lambda0 is None:
        start = _start_state(spec, pi0, budget)
        if start is None:
            raise BudgetExhausted(f"{pi0} not reached within {budget} steps")
        lam0 = start.positional()
    else:
        lam0 = tuple(as_scalar(v) for v in lambda0)
    m, btrace = find_positive_return(pi0, lam0, max_return)
    B_pos = btrace.positional_matrix()
    rho = balance_ratio(btrace.cumulative)
    bound = min(Fraction(1, 10) / rho, Fraction(1, 8 * (2 * r + 1)))
    if not 0 < epsilon < bound:
        raise ParameterInfeasible(f"epsilon must lie in (0, {bound}) for rho={rho}, r={r}")
    delta, dp = choose_deltas_constant(epsilon, rho)
    quarter = (delta - dp) / 4
    lo1, hi1 = Fraction(1, 2) - delta, Fraction(1, 2) - delta + quarter
    lod, hid = Fraction(1, 2) + dp, Fraction(1, 2) + dp + quarter
    kinds = btrace.kinds
    n_sub = 2 * r + 1

    out: list[ConstantTowers] = []
    w = _Walker(spec, None, keep_steps=False)
    for step in range(budget + 1):
        if step:
            w.step()
        if w.pi != pi0:
            continue
        lam = _in_cone(B_pos, w.positional())
        if lam is None or not (lo1 < lam[0] < hi1 and lod < lam[-1] < hid):
            continue
        deep = _advance(w, kinds)
        if deep is None or deep.pi != pi0:
            continue
        trace = deep.snapshot()
        pos = trace.positional_lambda()
        heights = trace.positional_heights()
        q = heights[0] + heights[-1]
        if out and q <= out[-1].tower.q:
            continue
        gap = pos[-1] - pos[0]
        tower = rigidity_tower(spec, (Scalar(0), pos[0]), q, order=3)
        size = trace.induced_length()
        tower.n_index, tower.depth, tower.scale = step, trace.n, size
        tower.lambda_gap = gap
        jl = tower.J_length
        bases = [(jl * (2 * l - 1) / n_sub, jl * (2 * l) / n_sub) for l in range(1, r + 1)]
        subs = [IntervalSet((a + tower.shifts[i], b + tower.shifts[i]) for i in range(q)) for a, b in bases]
        tower.subtowers = subs
        cert = [
            _cert("leb_W_lower", tower.measure, ">", Scalar(1 / (4 * rho))),
            _cert("leb_J_lower", jl, ">", size / 4),
            _cert("gap_lower", gap, ">", size * (epsilon / 2)),
            _cert("gap_upper", gap, "<", size * (2 * delta)),
            _cert("J_is_0_to_l1_minus_2gap", tower.J[1], "==", pos[0] - 2 * gap),
            _cert("displacement_is_gap", tower.displacement, "==", gap),
            _cert("window_mass_margin", gap * q * r - (1 - tower.measure), ">", Scalar(epsilon / (4 * rho))),
        ]
        for l, sub in enumerate(subs, start=1):
            cert.append(_cert(f"leb_W{l}", sub.measure() * n_sub, "==", tower.measure))
        tower.certificates = cert
        out.append(ConstantTowers(tower, subs, bases))
        if len(out) >= max_hits:
            break
    if not out:
        raise BudgetExhausted(f"no recurrence into the target region within {budget} steps")
    params = {"m": m, "rho": rho, "delta": delta, "delta_prime": dp, "pi0": pi0, "B": btrace.cumulative,
              "epsilon": epsilon, "r": r}
    for c in out:
        c.tower.params = params
    return out


# --- windows around the discontinuities -----------------------------------

class Windows(NamedTuple):
    windows: list  # IntervalSet per l
    total_mass: Scalar


def discontinuity_windows(towers: ConstantTowers, betas: Sequence) -> Windows:
    """V_l = union over i < q of T^-i [beta_l - gap, beta_l), when every beta_l is in W^l."""
    betas = [as_scalar(b) for b in betas]
    if len(set(betas)) != len(betas):
        raise InvalidParameter("betas must be pairwise distinct")
    tower, subs = towers.tower, towers.subtowers
    if len(betas) != len(subs):
        raise InvalidParameter(f"expected {len(subs)} betas")
    gap = tower.lambda_gap
    iet = tower.iet
    windows = []
    for l, (beta, sub) in enumerate(zip(betas, subs), start=1):
        if not sub.contains(beta):
            raise NotCaptured(l)
        pieces = []
        a, b = beta - gap, beta
        for i in range(tower.q):
            pieces.append((a, b))
            if i + 1 < tower.q:
                back = translation_pieces(iet, a, b, -1)
                if len(back) != 1:
                    raise EmptyTower(f"window {l} splits at step {i + 1}")
                a, b = back[0][0] + back[0][2], back[0][1] + back[0][2]
        ok, total = disjoint_total(pieces)
        if not ok:
            raise EmptyTower(f"window {l} overlaps itself")
        windows.append(IntervalSet(pieces))
    union = IntervalSet(iv for win in windows for iv in win)
    total = sum((win.measure() for win in windows), Scalar(0))
    if union.measure() != total or not union.issubset(tower.W):
        raise EmptyTower("windows are not disjoint inside W")
    return Windows(windows, total)
