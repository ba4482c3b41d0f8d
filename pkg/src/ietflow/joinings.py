"""The special flow over an IET: exact flow, exact rectangle measures and Monte Carlo correlations."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .iet import DomainError, IetSpec
from .roof import PiecewiseAffine
from .scalar import Scalar, as_scalar

__all__ = [
    "BLOCK",
    "FlowPoint",
    "FlowRect",
    "JoiningRow",
    "McEstimate",
    "default_threads",
    "exact_triple_measure",
    "flow",
    "joining_convergence_check",
    "rect_measure",
    "triple_correlation",
    "visit_frequency",
    "write_discrepancy_csv",
]

ZERO = Scalar(0)
BLOCK = 1 << 14
CSV_HEADER = ("depth", "rect_id", "lhs", "rhs", "stderr", "flag")


def default_threads() -> int:
    raw = os.environ.get("IETFLOW_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"IETFLOW_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError("IETFLOW_THREADS must be positive")
        return n
    return 1


class FlowPoint(NamedTuple):
    x: Scalar
    r: Scalar


class FlowRect(NamedTuple):
    """[base) x [band), understood as intersected with the region under the roof."""

    base: tuple
    band: tuple

    @classmethod
    def of(cls, base, band) -> "FlowRect":
        b0, b1 = as_scalar(base[0]), as_scalar(base[1])
        r0, r1 = as_scalar(band[0]), as_scalar(band[1])
        if not (b0.sign() >= 0 and b0 < b1 and b1 <= 1):
            raise DomainError("rectangle base must be a nonempty interval in [0, 1)")
        if not (r0.sign() >= 0 and r0 < r1):
            raise DomainError("rectangle band must be a nonempty interval of heights >= 0")
        return cls((b0, b1), (r0, r1))

    @classmethod
    def from_json(cls, obj: dict) -> "FlowRect":
        return cls.of([Scalar.parse(str(v)) for v in obj["base"]], [Scalar.parse(str(v)) for v in obj["band"]])

    def to_json(self) -> dict:
        return {"base": [str(v) for v in self.base], "band": [str(v) for v in self.band]}

    def contains(self, p: FlowPoint) -> bool:
        return self.base[0] <= p.x < self.base[1] and self.band[0] <= p.r < self.band[1]


def _check_point(f: PiecewiseAffine, p: FlowPoint) -> None:
    if not (p.r.sign() >= 0 and p.r < f(p.x)):
        raise DomainError(f"({p.x}, {p.r}) is not under the roof")


def flow(f: PiecewiseAffine, iet: IetSpec, p: FlowPoint, t) -> FlowPoint:
    """T^f_t p, exact: climb by t and resolve each roof crossing by one step of T."""
    x, r = as_scalar(p.x), as_scalar(p.r)
    _check_point(f, FlowPoint(x, r))
    r = r + as_scalar(t)
    if r.sign() >= 0:
        h = f(x)
        while r >= h:
            r = r - h
            x = x + iet.offsets[iet.index(x)]
            h = f(x)
    else:
        while r.sign() < 0:
            x = x - iet.offsets[iet.image_index(x)]
            r = r + f(x)
    return FlowPoint(x, r)


# --- exact measures ---------------------------------------------------------------

def rect_measure(f: PiecewiseAffine, rect: FlowRect) -> Scalar:
    """Area of rect intersected with the region under f: integral over the base of (min(f, r2) - r1)^+."""
    (a, b), (r1, r2) = rect.base, rect.band
    cuts = {a, b}
    for i, br in enumerate(f.breaks):
        if a < br < b:
            cuts.add(br)
        s = f.slopes[i]
        if s:
            end = f.breaks[i + 1] if i + 1 < len(f.breaks) else Scalar(1)
            for level in (r1, r2):
                c = f.breaks[i] + (level - f.values[i]) / s
                if a < c < b and f.breaks[i] < c < end:
                    cuts.add(c)
    cuts = sorted(cuts)
    total = ZERO
    for lo, hi in zip(cuts, cuts[1:]):
        mid = (lo + hi) / 2
        i = f.piece(mid)
        s = f.slopes[i]
        v_lo = f.values[i] + s * (lo - f.breaks[i])
        v_hi = f.values[i] + s * (hi - f.breaks[i])
        # on [lo, hi) f is affine and does not cross r1 or r2 in the interior
        fm = (v_lo + v_hi) / 2
        if fm <= r1:
            continue
        if fm >= r2:
            total = total + (hi - lo) * (r2 - r1)
        else:
            total = total + (hi - lo) * (fm - r1)
    return total


def _orbit_cuts(iet: IetSpec, points, steps_back: int, steps_fwd: int) -> list:
    """Points together with their images under T^j, -steps_fwd <= j <= steps_back."""
    out = set(points)
    frontier = list(points)
    for _ in range(steps_back):
        frontier = [p + iet.offsets[iet.index(p)] for p in frontier if p < 1]
        out.update(frontier)
    frontier = list(points)
    for _ in range(steps_fwd):
        frontier = [p - iet.offsets[iet.image_index(p)] for p in frontier if p < 1]
        out.update(frontier)
    return sorted(p for p in out if p.sign() >= 0 and p < 1)


def exact_triple_measure(f: PiecewiseAffine, iet: IetSpec, A: FlowRect, B: FlowRect, C: FlowRect,
                         t, u) -> Scalar:
    """mu^f(T_t A ∩ T_u B ∩ C) for piecewise-constant f, exact.

    [0, 1) is cut at every point whose orbit, over as many steps as the flow
    can cross the roof in time |t| or |u|, meets a discontinuity of T or f or
    an end of a base.  On each cell the admissible heights form the same finite
    union of intervals; their ends are among finitely many explicit candidates,
    so one exact flow evaluation per candidate gap decides membership.
    """
    if not f.is_piecewise_constant():
        raise ValueError("exact triple measure needs a piecewise-constant roof")
    t, u = as_scalar(t), as_scalar(u)
    h_min = f.infimum()
    span = max(abs(t), abs(u))
    k_max = int(math.floor(float(span / h_min))) + 2
    back = k_max if max(t, u).sign() > 0 else 0
    fwd = k_max if min(t, u).sign() < 0 else 0
    pts = set(iet.starts) | set(iet._image_starts) | set(f.breaks)
    for R in (A, B, C):
        pts.update(p for p in R.base if p < 1)
    pts.add(ZERO)
    cuts = _orbit_cuts(iet, pts, back, fwd) + [Scalar(1)]
    total = ZERO
    for lo, hi in zip(cuts, cuts[1:]):
        x = (lo + hi) / 2
        if not C.base[0] <= x < C.base[1]:
            continue
        h = f(x)
        cand = {ZERO, h, C.band[0], C.band[1]}
        for tau, R in ((t, A), (u, B)):
            # heights of x whose image under T_{-tau} crosses level 0 or the band ends
            sums = [ZERO]
            y = x
            if tau.sign() > 0:
                for _ in range(k_max):
                    y = y - iet.offsets[iet.image_index(y)]
                    sums.append(sums[-1] - f(y))
            else:
                for _ in range(k_max):
                    sums.append(sums[-1] + f(y))
                    y = y + iet.offsets[iet.index(y)]
            for s in sums:
                for level in (ZERO, R.band[0], R.band[1]):
                    cand.add(level + tau + s)
        grid = sorted(c for c in cand if c.sign() >= 0 and c <= h)
        good = ZERO
        for r0, r1 in zip(grid, grid[1:]):
            p = FlowPoint(x, (r0 + r1) / 2)
            if not C.contains(p):
                continue
            if A.contains(flow(f, iet, p, -t)) and B.contains(flow(f, iet, p, -u)):
                good = good + (r1 - r0)
        total = total + good * (hi - lo)
    return total


# --- float kernel ------------------------------------------------------------------

class _FloatSystem:
    """Float64 image of (T, f) for vectorized sampling."""

    __slots__ = ("starts", "offsets", "img_starts", "img_offsets", "fb", "fv", "fs", "sup")

    def __init__(self, f: PiecewiseAffine, iet: IetSpec):
        self.starts = np.array([float(s) for s in iet.starts])
        self.offsets = np.array([float(o) for o in iet.offsets])
        order = iet._image_order
        self.img_starts = np.array([float(iet._image_starts[j]) for j in range(len(order))])
        self.img_offsets = np.array([float(iet.offsets[order[j]]) for j in range(len(order))])
        self.fb = np.array([float(b) for b in f.breaks])
        self.fv = np.array([float(v) for v in f.values])
        self.fs = np.array([float(s) for s in f.slopes])
        self.sup = float(f.supremum())

    def roof(self, x):
        i = np.searchsorted(self.fb, x, side="right") - 1
        return self.fv[i] + self.fs[i] * (x - self.fb[i])

    def fwd(self, x):
        i = np.searchsorted(self.starts, x, side="right") - 1
        return np.minimum(x + self.offsets[i], np.nextafter(1.0, 0.0))

    def bwd(self, y):
        j = np.searchsorted(self.img_starts, y, side="right") - 1
        return np.maximum(y - self.img_offsets[j], 0.0)

    def flow(self, x, r, t):
        """Flow every sample by t (a float or a per-sample array)."""
        x, r = x.copy(), r + t
        h = self.roof(x)
        up = r >= h
        while up.any():
            r[up] -= h[up]
            x[up] = self.fwd(x[up])
            h[up] = self.roof(x[up])
            up = r >= h
        down = r < 0
        while down.any():
            x[down] = self.bwd(x[down])
            r[down] += self.roof(x[down])
            down = r < 0
        return x, r


def _in_rect(x, r, rect) -> np.ndarray:
    (a, b), (r1, r2) = rect
    return (x >= a) & (x < b) & (r >= r1) & (r < r2)


def _float_rect(rect: FlowRect):
    return (float(rect.base[0]), float(rect.base[1])), (float(rect.band[0]), float(rect.band[1]))


def _in_union(x, starts, ends) -> np.ndarray:
    i = np.searchsorted(starts, x, side="right") - 1
    ok = i >= 0
    i = np.where(ok, i, 0)
    return ok & (x < ends[i])


def _rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK, n - b * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]


def _sample(sys_: _FloatSystem, seed: int, stream: int, block: int, size: int):
    g = _rng(seed, stream, block)
    x = g.random(size)
    r = g.random(size) * sys_.sup
    keep = r < sys_.roof(x)
    return x, r, keep, g


def _run_blocks(fn, n: int, threads: Optional[int]):
    threads = threads or default_threads()
    blocks = _blocks(n)
    if threads == 1 or len(blocks) == 1:
        return [fn(b, s) for b, s in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda bs: fn(*bs), blocks))


class McEstimate(NamedTuple):
    estimate: float
    stderr: float
    hits: int
    n_samples: int


def triple_correlation(f: PiecewiseAffine, iet: IetSpec, A: FlowRect, B: FlowRect, C: FlowRect,
                       t, u, n_samples: int, seed: int, *, threads: Optional[int] = None,
                       stream: int = 0) -> McEstimate:
    """Estimate mu^f(T_t A ∩ T_u B ∩ C) from uniform points of [0,1) x [0, sup f).

    p lies in T_t A exactly when T_{-t} p lies in A.  The estimate is the box
    area times the hit fraction; samples come in fixed blocks with their own
    counter-based streams, so the result does not depend on the thread count.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    sys_ = _FloatSystem(f, iet)
    fa, fb_, fc = _float_rect(A), _float_rect(B), _float_rect(C)
    tf, uf = float(as_scalar(t)), float(as_scalar(u))

    def block(b, size):
        x, r, keep, _ = _sample(sys_, seed, stream, b, size)
        ok = keep & _in_rect(x, r, fc)
        x, r = x[ok], r[ok]
        xa, ra = sys_.flow(x, r, -tf)
        xb, rb = sys_.flow(x, r, -uf)
        return int(np.count_nonzero(_in_rect(xa, ra, fa) & _in_rect(xb, rb, fb_)))

    hits = sum(_run_blocks(block, n_samples, threads))
    p = hits / n_samples
    box = sys_.sup
    return McEstimate(box * p, box * math.sqrt(p * (1 - p) / n_samples), hits, n_samples)


def visit_frequency(iet: IetSpec, interval, x0: float, n: int) -> float:
    """Fraction of x0, T x0, ..., T^{n-1} x0 in [a, b), in floating point (a diagnostic)."""
    sys_ = _FloatSystem(PiecewiseAffine.constant(1), iet)
    a, b = float(interval[0]), float(interval[1])
    x = np.array([float(x0)])
    hits = 0
    for _ in range(n):
        hits += int(a <= x[0] < b)
        x = sys_.fwd(x)
    return hits / n


# --- convergence of the off-diagonal part ----------------------------------------

class JoiningRow(NamedTuple):
    depth: int
    rect_id: int
    lhs: float
    rhs: float
    stderr: float
    flag: bool

    @property
    def discrepancy(self) -> float:
        return abs(self.lhs - self.rhs)


def _tower_union(tower, offset: int):
    """Float starts/ends of T^offset W, as sorted arrays."""
    ja, jb = tower.J
    ivs = sorted((float(ja + tower.shifts[i + offset]), float(jb + tower.shifts[i + offset]))
                 for i in range(tower.q))
    return np.array([a for a, _ in ivs]), np.array([b for _, b in ivs])


def joining_convergence_check(f: PiecewiseAffine, iet: IetSpec, towers: Sequence, rects: Sequence,
                              a_values: Sequence, pair_measures: Sequence, n_samples: int, seed: int,
                              *, threads: Optional[int] = None) -> list[JoiningRow]:
    """Per depth and rectangle triple (A, B, C): both sides of the restricted joining identity.

    LHS: mu^f of points p in C with T_{2a} p in A over T^{2q} W and T_a p in B
    over T^q W.  RHS: alpha times the mean over (t, u) ~ P of
    mu^f(T_t A ∩ T_u B ∩ C), where alpha = Leb(W) and P is the exact law of
    (f^(2q) - 2a, f^(q) - a) on W.  Both sides use the same sample points; the
    reported error is the standard error of the paired difference.  A row is
    flagged when its discrepancy exceeds the previous depth's by more than
    three combined standard errors.
    """
    if not (len(towers) == len(a_values) == len(pair_measures)):
        raise ValueError("towers, a_values and pair_measures differ in length")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    sys_ = _FloatSystem(f, iet)
    box = sys_.sup
    rows: list[JoiningRow] = []
    prev: dict = {}
    frects = [tuple(_float_rect(R) for R in triple) for triple in rects]
    if not frects:
        return rows
    for depth, (tower, a, P) in enumerate(zip(towers, a_values, pair_measures)):
        alpha = float(tower.measure)
        af = float(a)
        w2 = _tower_union(tower, 2 * tower.q)
        w1 = _tower_union(tower, tower.q)
        atoms = [(float(x), float(y), float(m)) for (x, y), m in P.atoms]
        segs = np.array([(float(x0), float(y0), float(x1), float(y1), float(m))
                         for (x0, y0), (x1, y1), m in P.segments]).reshape(-1, 5)
        seg_mass = float(segs[:, 4].sum())

        def block(b, size):
            # one sample set per depth, shared by every rectangle triple
            x, r, keep, g = _sample(sys_, seed, 1 + depth, b, size)
            x, r = x[keep], r[keep]
            n_in = x.size
            xb, rb = sys_.flow(x, r, af)
            xa, ra = sys_.flow(xb, rb, af)
            in_w1 = _in_union(xb, *w1)
            in_w2 = _in_union(xa, *w2)
            shifted = [(sys_.flow(x, r, -tx), sys_.flow(x, r, -ty), m) for tx, ty, m in atoms]
            if seg_mass:
                k = g.choice(len(segs), size=n_in, p=segs[:, 4] / seg_mass)
                lam = g.random(n_in)
                tx = segs[k, 0] + lam * (segs[k, 2] - segs[k, 0])
                ty = segs[k, 1] + lam * (segs[k, 3] - segs[k, 1])
                shifted.append((sys_.flow(x, r, -tx), sys_.flow(x, r, -ty), seg_mass))
            out = []
            for A, B, C in frects:
                in_c = _in_rect(x, r, C)
                lhs = in_c & _in_rect(xa, ra, A) & in_w2 & _in_rect(xb, rb, B) & in_w1
                rhs = np.zeros(n_in)
                for (pa, pb, m) in shifted:
                    rhs += m * (in_c & _in_rect(*pa, A) & _in_rect(*pb, B))
                d = lhs - alpha * rhs
                out.append((int(np.count_nonzero(lhs)), float(rhs.sum()), float(d.sum()), float(d @ d)))
            return out

        parts = _run_blocks(block, n_samples, threads)
        n = n_samples
        for rid in range(len(frects)):
            lhs = box * sum(p[rid][0] for p in parts) / n
            rhs = box * alpha * sum(p[rid][1] for p in parts) / n
            mean = sum(p[rid][2] for p in parts) / n
            var = max(sum(p[rid][3] for p in parts) / n - mean * mean, 0.0)
            se = box * math.sqrt(var / n)
            disc = abs(lhs - rhs)
            flag = False
            if rid in prev:
                pd, pse = prev[rid]
                flag = disc - pd > 3 * math.sqrt(se * se + pse * pse)
            prev[rid] = (disc, se)
            rows.append(JoiningRow(depth, rid, lhs, rhs, se, flag))
    return rows


def write_discrepancy_csv(rows: Sequence[JoiningRow], precision: int = 12) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([row.depth, row.rect_id, f"{row.lhs:.{precision}g}", f"{row.rhs:.{precision}g}",
                    f"{row.stderr:.{precision}g}", int(row.flag)])
    return buf.getvalue()
