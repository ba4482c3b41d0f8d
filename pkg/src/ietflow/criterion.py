"""Exact displacement distributions on rigidity towers and the non-reversibility checker."""

from __future__ import annotations

import enum
from bisect import bisect_left, bisect_right
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

from .iet import IetSpec
from .roof import (
    PiecewiseAffine,
    PiecewiseRoof,
    ac_rigidity_check,
    center_on_tower,
    continuity_over_exchanged,
    decompose,
)
from .scalar import Scalar, as_scalar
from .towers import (
    BudgetExhausted,
    NotCaptured,
    RigidityTower,
    build_W_constant,
    build_W_linear,
    discontinuity_windows,
    rigidity_diagnostic,
)

__all__ = [
    "CaseUnsupported",
    "CriterionReport",
    "EmpiricalMeasure",
    "InputRejected",
    "NotAtomic",
    "PairMeasure",
    "PipelineReport",
    "RefinementExplosion",
    "Verdict",
    "check_glwynik",
    "displacement_distribution",
    "pair_distribution",
    "theorem_pipeline",
    "wl_report",
]

ZERO = Scalar(0)
DEFAULT_CELL_BUDGET = 5_000_000


class RefinementExplosion(RuntimeError):
    def __init__(self, cells: int, budget: int):
        super().__init__(f"subdivision needs more than {budget} cells (reached {cells})")
        self.cells = cells
        self.budget = budget


class NotAtomic(ValueError):
    pass


class InputRejected(ValueError):
    pass


class CaseUnsupported(ValueError):
    pass


class Verdict(enum.Enum):
    SATISFIED = "SATISFIED"
    FAILED_MASS = "FAILED_MASS"
    FAILED_SYMMETRY = "FAILED_SYMMETRY"
    INCONCLUSIVE = "INCONCLUSIVE"


# --- measures -------------------------------------------------------------------

class EmpiricalMeasure:
    """Finitely many atoms plus uniform laws on segments [v0, v1] (the non-atomic part)."""

    __slots__ = ("atoms", "segments", "cluster_tol")

    def __init__(self, atoms: Sequence = (), segments: Sequence = (), cluster_tol=Fraction(0)):
        self.cluster_tol = Fraction(cluster_tol)
        merged: dict = {}
        for v, m in atoms:
            v = as_scalar(v)
            merged[v] = merged.get(v, ZERO) + as_scalar(m)
        items = sorted(merged.items(), key=lambda kv: kv[0])
        if self.cluster_tol:
            clustered: list = []
            for v, m in items:
                if clustered and abs(v - clustered[-1][0]) <= self.cluster_tol:
                    clustered[-1] = (clustered[-1][0], clustered[-1][1] + m)
                else:
                    clustered.append((v, m))
            items = clustered
        self.atoms = tuple((v, m) for v, m in items if m)
        self.segments = tuple((as_scalar(a), as_scalar(b), as_scalar(m)) for a, b, m in segments)

    @property
    def total(self) -> Scalar:
        t = sum((m for _, m in self.atoms), ZERO)
        return t + sum((m for _, _, m in self.segments), ZERO)

    def is_atomic(self) -> bool:
        return not self.segments

    def mass_at(self, v) -> Scalar:
        v = as_scalar(v)
        for w, m in self.atoms:
            if w == v or (self.cluster_tol and abs(w - v) <= self.cluster_tol):
                return m
        return ZERO

    def support(self) -> list:
        return [v for v, _ in self.atoms]

    def to_json(self) -> dict:
        return {"atoms": [[str(v), str(m)] for v, m in self.atoms],
                "segments": [[str(a), str(b), str(m)] for a, b, m in self.segments],
                "total": str(self.total)}

    def histogram_rows(self, precision: int = 12) -> list[tuple[str, str]]:
        return [(f"{float(v):.{precision}g}", f"{float(m):.{precision}g}") for v, m in self.atoms]


class PairMeasure:
    """Atoms in R^2 and uniform laws on planar segments."""

    __slots__ = ("atoms", "segments")

    def __init__(self, atoms: dict, segments: list):
        self.atoms = tuple(sorted(atoms.items(), key=lambda kv: (kv[0][0], kv[0][1])))
        self.segments = tuple(segments)

    def push_xi(self) -> EmpiricalMeasure:
        """Image under xi(x, y) = x - 2y."""
        atoms = [(x - y * 2, m) for (x, y), m in self.atoms]
        segs = []
        for (x0, y0), (x1, y1), m in self.segments:
            a, b = x0 - y0 * 2, x1 - y1 * 2
            if a == b:
                atoms.append((a, m))
            else:
                segs.append((a, b, m))
        return EmpiricalMeasure(atoms, segs)

    @property
    def total(self) -> Scalar:
        return sum((m for _, m in self.atoms), ZERO) + sum((m for *_, m in self.segments), ZERO)

    def to_json(self) -> dict:
        return {"atoms": [[str(x), str(y), str(m)] for (x, y), m in self.atoms],
                "segments": [[str(x0), str(y0), str(x1), str(y1), str(m)]
                             for (x0, y0), (x1, y1), m in self.segments]}


# --- the displacement engine ---------------------------------------------------
#
# For x = J_start + shifts[i] + u (0 <= u < |J|) every orbit point T^k x equals
# J_start + shifts[k + i] + u, so each g_k(u) = f(J_start + shifts[k] + u) is an
# affine function of u plus finitely many breaks.  Prefix sums of the affine
# parts and a sparse list of breaks give f^(q), f^(2q) and the displacement on
# every level exactly.

class _Break(NamedTuple):
    k: int
    at: Scalar      # position in [0, |J|)
    jump: Scalar
    dslope: Scalar


class _Engine:
    __slots__ = ("q", "length", "prefix_v", "prefix_s", "breaks_by_k", "keys", "n")

    def __init__(self, f: PiecewiseAffine, tower: RigidityTower, upto: int):
        ja, jb = tower.J
        length = jb - ja
        if upto > len(tower.shifts):
            raise ValueError(f"tower carries shifts up to {len(tower.shifts) - 1}, need {upto - 1};"
                             " use an order-3 tower")
        self.q = tower.q
        self.length = length
        self.n = upto
        pv, ps = [ZERO], [ZERO]
        brk: dict = {}
        fb = f.breaks
        for k in range(upto):
            p = ja + tower.shifts[k]
            i = bisect_right(fb, p) - 1
            s = f.slopes[i]
            v = f.values[i] + s * (p - fb[i]) if s else f.values[i]
            pv.append(pv[-1] + v)
            ps.append(ps[-1] + s)
            end = p + length
            j = i + 1
            while j < len(fb) and fb[j] < end:
                jump = f.values[j] - f.right_limit(j - 1)
                ds = f.slopes[j] - f.slopes[j - 1]
                if jump or ds:
                    brk.setdefault(k, []).append(_Break(k, fb[j] - p, jump, ds))
                j += 1
        self.prefix_v = pv
        self.prefix_s = ps
        self.breaks_by_k = brk
        self.keys = sorted(brk)

    def combo(self, i: int, weights: Sequence[tuple[int, int, int]]):
        """sum over (lo, hi, w) of w * sum_{k in [lo, hi)} g_{i+k}: (value at 0, slope, breaks)."""
        v0, s0 = ZERO, ZERO
        br: list = []
        keys = self.keys
        for lo, hi, w in weights:
            a, b = i + lo, i + hi
            v0 = v0 + (self.prefix_v[b] - self.prefix_v[a]) * w
            s0 = s0 + (self.prefix_s[b] - self.prefix_s[a]) * w
            for idx in range(bisect_left(keys, a), bisect_left(keys, b)):
                for e in self.breaks_by_k[keys[idx]]:
                    br.append((e.at, e.jump * w, e.dslope * w))
        return v0, s0, br

    def pieces(self, i: int, weights) -> list[tuple[Scalar, Scalar, Scalar, Scalar]]:
        """(u0, u1, value at u0, slope) cells of the combined function on level i."""
        v, s, br = self.combo(i, weights)
        br.sort(key=lambda t: t[0])
        out = []
        u = ZERO
        for at, jump, ds in br:
            if at > u:
                out.append((u, at, v, s))
                v = v + s * (at - u)
                u = at
            v = v + jump
            s = s + ds
        if u < self.length:
            out.append((u, self.length, v, s))
        return out


def _disp_weights(q: int):
    return ((0, q, -1), (q, 2 * q, 1))


def displacement_distribution(f: PiecewiseAffine, iet: IetSpec, tower: RigidityTower,
                              cell_budget: int = DEFAULT_CELL_BUDGET) -> EmpiricalMeasure:
    """Exact law of x -> f^(q)(T^q x) - f^(q)(x) under normalized Lebesgue measure on W."""
    q = tower.q
    engine = _Engine(f, tower, 3 * q - 1)
    norm = tower.measure
    atoms: dict = {}
    segs: list = []
    cells = 0
    weights = _disp_weights(q)
    for i in range(q):
        for u0, u1, v, s in engine.pieces(i, weights):
            cells += 1
            if cells > cell_budget:
                raise RefinementExplosion(cells, cell_budget)
            m = (u1 - u0) / norm
            if s:
                segs.append((v, v + s * (u1 - u0), m))
            else:
                atoms[v] = atoms.get(v, ZERO) + m
    return EmpiricalMeasure(list(atoms.items()), segs)


def pair_distribution(f: PiecewiseAffine, iet: IetSpec, tower: RigidityTower, a,
                      cell_budget: int = DEFAULT_CELL_BUDGET) -> PairMeasure:
    """Exact joint law of (f^(2q) - 2a, f^(q) - a) under normalized Lebesgue measure on W."""
    a = as_scalar(a)
    q = tower.q
    engine = _Engine(f, tower, 3 * q - 1)
    norm = tower.measure
    atoms: dict = {}
    segs: list = []
    cells = 0
    two_a = a * 2
    for i in range(q):
        first = engine.pieces(i, ((0, q, 1),))
        second = engine.pieces(i, ((0, 2 * q, 1),))
        # common refinement of the two cell lists
        cuts = sorted({c[0] for c in first} | {c[0] for c in second} | {engine.length})
        fi = si = 0
        for u0, u1 in zip(cuts, cuts[1:]):
            while first[fi][1] <= u0:
                fi += 1
            while second[si][1] <= u0:
                si += 1
            cells += 1
            if cells > cell_budget:
                raise RefinementExplosion(cells, cell_budget)
            a1, b1, v1, s1 = first[fi]
            a2, b2, v2, s2 = second[si]
            y0 = v1 + s1 * (u0 - a1) - a
            x0 = v2 + s2 * (u0 - a2) - two_a
            m = (u1 - u0) / norm
            if not s1 and not s2:
                atoms[(x0, y0)] = atoms.get((x0, y0), ZERO) + m
            else:
                w = u1 - u0
                segs.append(((x0, y0), (x0 + s2 * w, y0 + s1 * w), m))
    return PairMeasure(atoms, segs)


def second_moment(f: PiecewiseAffine, tower: RigidityTower, a) -> Scalar:
    """Integral over W of (f^(q) - a)^2, exact."""
    a = as_scalar(a)
    q = tower.q
    engine = _Engine(f, tower, 2 * q)
    total = ZERO
    for i in range(q):
        for u0, u1, v, s in engine.pieces(i, ((0, q, 1),)):
            w = u1 - u0
            c = v - a
            total = total + c * c * w + c * s * w * w + s * s * w * w * w / 3
    return total


# --- the criterion ---------------------------------------------------------------

class CriterionReport(NamedTuple):
    alpha: Scalar
    atoms: tuple
    c0: Scalar
    nonzero_mass: Scalar
    threshold: Scalar
    symmetry_violations: list
    verdict: Verdict

    def to_json(self) -> dict:
        return {
            "alpha": str(self.alpha),
            "atoms": [[str(v), str(m)] for v, m in self.atoms],
            "c0": str(self.c0),
            "nonzero_mass": str(self.nonzero_mass),
            "threshold": str(self.threshold),
            "symmetry_violations": [[str(a), str(b)] for a, b in self.symmetry_violations],
            "verdict": self.verdict.value,
        }


def check_glwynik(xi_P: EmpiricalMeasure, alpha) -> CriterionReport:
    """Atomic xi_P with nonzero atoms of mass > (1 - alpha)/alpha and no pair d_i = -d_j."""
    alpha = as_scalar(alpha)
    if not (alpha.sign() > 0 and alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if xi_P.segments:
        raise NotAtomic("measure has a non-atomic part")
    tol = xi_P.cluster_tol
    c0 = ZERO
    nonzero = []
    for v, m in xi_P.atoms:
        if (v == 0) if not tol else abs(v) <= tol:
            c0 = c0 + m
        else:
            nonzero.append((v, m))
    mass = sum((m for _, m in nonzero), ZERO)
    threshold = (1 - alpha) / alpha
    sym = []
    for i in range(len(nonzero)):
        for j in range(i + 1, len(nonzero)):
            s = nonzero[i][0] + nonzero[j][0]
            if (s == 0) if not tol else abs(s) <= tol:
                sym.append((nonzero[i][0], nonzero[j][0]))
    if sym:
        verdict = Verdict.FAILED_SYMMETRY
    elif mass > threshold:
        verdict = Verdict.SATISFIED
    else:
        verdict = Verdict.FAILED_MASS
    return CriterionReport(alpha, xi_P.atoms, c0, mass, threshold, sym, verdict)


# --- diagnostics across depths ---------------------------------------------------

def wl_report(towers: Sequence[RigidityTower], f: PiecewiseAffine) -> dict:
    """Per-tower measures, boundary, sup displacements and second moments, with trend flags."""
    if len(towers) < 2:
        raise ValueError("need at least two towers")
    var = f.variation()
    rows = []
    for t in towers:
        diag = rigidity_diagnostic(t)
        a = center_on_tower(f, t.iet, t)
        m2 = second_moment(f, t, a)
        rows.append({
            "q": t.q,
            "leb_W": t.measure,
            "boundary": diag.boundary_measure,
            "boundary_bound": t.J_length * 2,
            "sup_disp_q": diag.sup_disp_q,
            "sup_disp_2q": diag.sup_disp_2q,
            "induced_length": t.scale,
            "second_moment": m2,
            "moment_bound": var * var * t.measure,
        })
    dec = lambda key: all(b[key] < a[key] for a, b in zip(rows, rows[1:]))  # noqa: E731
    flags = {
        "boundary_decreasing": dec("boundary"),
        "displacement_decreasing": dec("sup_disp_q"),
        "boundary_within_bound": all(r["boundary"] <= r["boundary_bound"] for r in rows),
        "moments_bounded": all(r["second_moment"] <= r["moment_bound"] for r in rows),
        "disp_2q_within_induced": all(r["sup_disp_2q"] is None or r["induced_length"] is None
                                      or abs(r["sup_disp_2q"]) <= r["induced_length"] for r in rows),
    }
    return {"rows": rows, "flags": flags}


# --- the end-to-end pipeline -------------------------------------------------------

class DepthRecord(NamedTuple):
    depth: int
    q: int
    leb_W: Scalar
    a: Scalar
    xi_P: EmpiricalMeasure
    certificates: list
    extra: dict

    def to_json(self) -> dict:
        out = {"depth": self.depth, "q": self.q, "leb_W": str(self.leb_W), "a": str(self.a),
               "xi_P": self.xi_P.to_json(), "certificates": self.certificates}
        out.update(self.extra)
        return out


class PipelineReport(NamedTuple):
    case: int
    S: Scalar
    verdict: Verdict
    criterion: Optional[CriterionReport]
    depths: list
    caveats: list
    towers: list
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "S": str(self.S),
            "verdict": self.verdict.value,
            "criterion": None if self.criterion is None else self.criterion.to_json(),
            "depths": [d.to_json() for d in self.depths],
            "caveats": self.caveats,
            "reason": self.reason,
        }


_CAVEATS = [
    "Keane genericity is checked only to finite depth",
    "alpha is the exact measure of W at the deepest tower, not a limit",
]


def _cert_json(name, lhs, op, rhs) -> dict:
    holds = {">": lhs > rhs, "==": lhs == rhs, "<=": lhs <= rhs, "<": lhs < rhs}[op]
    return {"name": name, "lhs": str(lhs), "op": op, "rhs": str(rhs), "holds": bool(holds)}


def theorem_pipeline(iet: IetSpec, f: PiecewiseAffine, epsilon, budget: int, *, max_hits: int = 3,
                     ac_samples: int = 32, cell_budget: int = DEFAULT_CELL_BUDGET) -> PipelineReport:
    """Case split on S(f), build rigidity towers, compute xi_P exactly and check the criterion."""
    epsilon = Fraction(epsilon)
    if iet.total != 1:
        iet = iet.normalized()
    if not isinstance(f, PiecewiseRoof):
        f = PiecewiseRoof.of(f)
    S = f.sum_of_jumps()
    if S:
        return _case_linear(iet, f, S, epsilon, budget, max_hits, ac_samples, cell_budget)
    return _case_constant(iet, f, epsilon, budget, max_hits, cell_budget)


def _case_linear(iet, f, S, epsilon, budget, max_hits, ac_samples, cell_budget) -> PipelineReport:
    if not continuity_over_exchanged(f, iet):
        raise InputRejected("f jumps away from the endpoints of the exchanged intervals")
    f_pl, f_ac = decompose(f)
    try:
        towers = build_W_linear(iet.pi, iet.lengths, epsilon, budget, max_hits=max_hits)
    except BudgetExhausted as exc:
        return PipelineReport(1, S, Verdict.INCONCLUSIVE, None, [], list(_CAVEATS), [], str(exc))
    records = []
    ac_values = []
    for t in towers:
        a = center_on_tower(f, iet, t)
        xi_pl = displacement_distribution(f_pl, iet, t, cell_budget)
        xi_f = displacement_distribution(f, iet, t, cell_budget)
        ac = ac_rigidity_check(f_ac, iet, t, ac_samples)
        ac_values.append(ac)
        certs = [c.to_json() for c in t.certificates]
        certs.append(_cert_json("xi_pl_single_atom_at_S_gamma", Scalar(len(xi_pl.atoms) == 1 and
                                xi_pl.is_atomic() and xi_pl.atoms[0][0] == S * t.gamma), "==", Scalar(1)))
        records.append(DepthRecord(t.depth, t.q, t.measure, a, xi_pl, certs,
                                   {"gamma": str(t.gamma), "ac_sup": str(ac),
                                    "xi_f": xi_f.to_json()}))
    deepest = towers[-1]
    report = check_glwynik(records[-1].xi_P, deepest.measure)
    caveats = list(_CAVEATS)
    if any(ac_values) and not all(b < a for a, b in zip(ac_values, ac_values[1:])):
        caveats.append("absolutely continuous correction did not decrease strictly across depths")
    if not all(c["holds"] for r in records for c in r.certificates):
        caveats.append("some tower certificate failed")
        return PipelineReport(1, S, Verdict.INCONCLUSIVE, report, records, caveats, towers,
                              "certificate failure")
    return PipelineReport(1, S, report.verdict, report, records, caveats, towers)


def _assign_betas(tower, betas) -> Optional[list]:
    """Order the jump points by the subtower that holds them, or None if not one per subtower."""
    slots = [None] * len(tower.subtowers)
    for b in betas:
        hit = [l for l, sub in enumerate(tower.subtowers) if sub.contains(b)]
        if len(hit) != 1 or slots[hit[0]] is not None:
            return None
        slots[hit[0]] = b
    return slots if all(s is not None for s in slots) else None


def _case_constant(iet, f, epsilon, budget, max_hits, cell_budget) -> PipelineReport:
    if not f.is_piecewise_constant():
        raise CaseUnsupported("S(f) = 0 is only handled for piecewise-constant roofs")
    jumps = f.jump_points()
    r = len(jumps)
    if r < 3:
        raise InputRejected(f"need at least 3 jumps, found {r}")
    for i in range(r):
        for j in range(i + 1, r):
            if jumps[i][1] == -jumps[j][1]:
                raise InputRejected("f has jumps with opposite values")
    try:
        built = build_W_constant(iet.pi, iet.lengths, epsilon, r, budget, max_hits=max_hits)
    except BudgetExhausted as exc:
        return PipelineReport(2, ZERO, Verdict.INCONCLUSIVE, None, [], list(_CAVEATS), [], str(exc))
    jump_at = dict(jumps)
    records = []
    captured = []
    for ct in built:
        t = ct.tower
        a = center_on_tower(f, iet, t)
        xi = displacement_distribution(f, iet, t, cell_budget)
        certs = [c.to_json() for c in t.certificates]
        order = _assign_betas(t, [b for b, _ in jumps])
        extra = {"lambda_gap": str(t.lambda_gap), "captured": order is not None}
        if order is not None:
            win = discontinuity_windows(ct, order)
            extra["window_total"] = str(win.total_mass)
            certs.append(_cert_json("window_total", win.total_mass, "==", t.lambda_gap * t.q * r))
            nonzero = ZERO
            for beta, w in zip(order, win.windows):
                mass = w.measure() / t.measure
                certs.append(_cert_json(f"mass_at_{jump_at[beta]}", xi.mass_at(jump_at[beta]), "==", mass))
                nonzero = nonzero + mass
            certs.append(_cert_json("support_in_jumps", Scalar(all(v == 0 or v in jump_at.values()
                                                                   for v in xi.support())), "==", Scalar(1)))
            certs.append(_cert_json("mass_exceeds_threshold", nonzero, ">", (1 - t.measure) / t.measure))
            captured.append(len(records))
        records.append(DepthRecord(t.depth, t.q, t.measure, a, xi, certs, extra))
    caveats = list(_CAVEATS) + ["jump points are tested for capture at each depth, not almost surely"]
    towers = [c.tower for c in built]
    if not captured:
        return PipelineReport(2, ZERO, Verdict.INCONCLUSIVE, None, records, caveats, towers,
                              str(NotCaptured(1)))
    k = captured[-1]
    rec = records[k]
    report = check_glwynik(rec.xi_P, rec.leb_W)
    if not all(c["holds"] for c in rec.certificates):
        caveats.append("some tower certificate failed")
        return PipelineReport(2, ZERO, Verdict.INCONCLUSIVE, report, records, caveats, towers,
                              "certificate failure")
    return PipelineReport(2, ZERO, report.verdict, report, records, caveats, towers)
