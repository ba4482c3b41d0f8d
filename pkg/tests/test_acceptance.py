"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS or FAIL line; the lines are printed in the pytest
terminal summary and when the module is run as a script.
"""

import functools
import itertools
import math
import random
import time
from fractions import Fraction

from constructions import (
    EPS_CONSTANT,
    constant_case_iet,
    golden_order2,
    golden_rotation,
    quadratic_rotation,
    step_roof,
)
from ietflow.criterion import (
    EmpiricalMeasure,
    InputRejected,
    Verdict,
    check_glwynik,
    displacement_distribution,
    pair_distribution,
    theorem_pipeline,
)
from ietflow.iet import IetSpec, Permutation, apply, is_irreducible
from ietflow.joinings import FlowPoint, FlowRect, flow, joining_convergence_check, rect_measure, triple_correlation
from ietflow.linalg import det, matvec
from ietflow.rauzy import KeaneViolation, induct
from ietflow.roof import PiecewiseRoof, ac_rigidity_check, birkhoff_sum, center_on_tower, decompose
from ietflow.scalar import Scalar
from ietflow.towers import build_W_constant, build_W_linear, discontinuity_windows, tower_decomposition

F = Fraction
RESULTS: dict = {}
LINEAR_ROOF = PiecewiseRoof([0], [1], [1])  # f(x) = x + 1
TENT = PiecewiseRoof([0, F(1, 2)], [1, 2], [2, -1])


def criterion(number: int, title: str):
    """Record PASS or FAIL for one acceptance criterion and print the line."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                line = f"FAIL criterion {number}: {title} ({type(exc).__name__}: {exc})"
                RESULTS[fn.__name__] = line
                print(line)
                raise
            line = f"PASS criterion {number}: {title} [{time.perf_counter() - start:.1f}s]"
            if detail:
                line += f" {detail}"
            RESULTS[fn.__name__] = line
            print(line)
        return run
    return wrap


# --- shared corpus -------------------------------------------------------------------

IRREDUCIBLE = {d: [p for p in itertools.permutations(range(1, d + 1)) if is_irreducible(p)] for d in range(2, 6)}


def rational_corpus(count=100, seed=2024):
    """Irreducible (pi, lambda) with d <= 5, total length 1 and a common denominator below 2^32."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        d = rng.randint(2, 5)
        pi = Permutation(rng.choice(IRREDUCIBLE[d]))
        D = rng.randint(2 ** 20, 2 ** 32 - 1)
        cuts = sorted(rng.sample(range(1, D), d - 1))
        lam = [F(b - a, D) for a, b in zip([0] + cuts, cuts + [D])]
        out.append((pi, lam, rng.randint(0, 12)))
    return out


CORPUS = rational_corpus()


def traces():
    """(pi, lambda, trace, tied) for the corpus, stopped one step before any length tie."""
    for pi, lam, n in CORPUS:
        try:
            yield pi, lam, induct(pi, lam, n), False
        except KeaneViolation as exc:
            yield pi, lam, induct(pi, lam, exc.at_step - 1), True


# --- 1 -------------------------------------------------------------------------------

@criterion(1, "Rauzy invariants on 100 random rational IETs")
def test_criterion_1_rauzy_invariants():
    start = time.perf_counter()
    ties = 0
    for pi, lam, t, tied in traces():
        ties += tied
        assert matvec(t.cumulative, t.lambda_n) == [Scalar(v) for v in lam]
        assert det(t.cumulative) == 1
        assert sum((s * v for s, v in zip(t.heights(), t.lambda_n)), Scalar(0)) == 1
    elapsed = time.perf_counter() - start
    assert elapsed <= 60
    return f"({ties} runs stopped at a tie)"


# --- 2 -------------------------------------------------------------------------------

@criterion(2, "tower decomposition partitions [0, 1) exactly")
def test_criterion_2_tower_partition():
    for pi, lam, t, _ in traces():
        iet = IetSpec(pi, lam)
        levels = sorted(lv for tw in tower_decomposition(t) for lv in tw.levels())
        assert levels[0][0] == 0 and levels[-1][1] == 1
        for (a0, b0), (a1, b1) in zip(levels, levels[1:]):
            assert b0 == a1, "levels overlap or leave a gap"
        for a, b in levels:
            k = iet.index(a)
            assert b <= iet.starts[k] + iet.lengths[k], "level straddles an exchanged interval"


# --- 3 -------------------------------------------------------------------------------

def random_roof(rng):
    n = rng.randint(1, 5)
    breaks = [F(0)] + sorted({F(rng.randint(1, 255), 256) for _ in range(n - 1)})
    slopes = [F(rng.randint(-6, 6), rng.randint(1, 3)) for _ in breaks]
    # values >= 7 and |slope| <= 6 keep the roof >= 1
    values = [F(rng.randint(28, 240), 4) for _ in breaks]
    return PiecewiseRoof(breaks, values, slopes)


@criterion(3, "|f^(q) - a| <= Var f and |f^(2q) - 2a| <= 2 Var f on W")
def test_criterion_3_birkhoff_bounds():
    start = time.perf_counter()
    rng = random.Random(33)
    lin = quadratic_rotation()
    towers = [(lin, t) for t in build_W_linear(lin.pi, lin.lengths, F(2, 5), 200)[:2]]
    const = constant_case_iet()
    towers.append((const, build_W_constant(const.pi, const.lengths, EPS_CONSTANT, 3, 3000)[0].tower))
    towers += [(golden_rotation(), golden_order2(n)) for n in (4, 6)]
    checked = 0
    for k in range(20):
        iet, tower = towers[k % len(towers)]
        f = random_roof(rng)
        var = f.variation()
        a = center_on_tower(f, iet, tower)
        width = tower.J_length
        for _ in range(100):
            i = rng.randrange(tower.q)
            x = tower.J[0] + tower.shifts[i] + width * F(rng.randrange(2 ** 16), 2 ** 16)
            fq = birkhoff_sum(f, iet, tower.q, x)
            f2q = fq + birkhoff_sum(f, iet, tower.q, apply(iet, x, tower.q))
            assert abs(fq - a) <= var
            assert abs(f2q - 2 * a) <= 2 * var
            checked += 1
    assert time.perf_counter() - start <= 60
    return f"({checked} points)"


# --- 4 -------------------------------------------------------------------------------

def _case_one_checks(iet, epsilon, budget):
    towers = build_W_linear(iet.pi, iet.lengths, epsilon, budget)
    assert len(towers) >= 2
    for t in towers:
        assert t.measure > 1 - epsilon
        # T^{q+j} x - T^j x is the same for every x in W
        for i in range(t.q):
            assert t.shifts[i + t.q] - t.shifts[i] == t.displacement
        xi = displacement_distribution(LINEAR_ROOF, iet, t)
        assert xi.atoms == ((t.gamma, Scalar(1)),) and xi.is_atomic()
    report = theorem_pipeline(iet, LINEAR_ROOF, epsilon, budget)
    assert report.verdict is Verdict.SATISFIED
    return towers


@criterion(4, "case S(f) != 0 end to end on the golden rotation")
def test_criterion_4_golden_case_one():
    start = time.perf_counter()
    _case_one_checks(golden_rotation(), F(2, 5), 400)
    assert time.perf_counter() - start <= 120


@criterion(4, "case S(f) != 0 end to end, quadratic rotation in place of the golden one")
def test_criterion_4_quadratic_case_one():
    start = time.perf_counter()
    towers = _case_one_checks(quadratic_rotation(), F(2, 5), 200)
    assert time.perf_counter() - start <= 120
    return f"(q = {[t.q for t in towers]})"


# --- 5 -------------------------------------------------------------------------------

@criterion(5, "case S(f) = 0 end to end with jumps 1, 1/2, 1/3")
def test_criterion_5_constant_case():
    start = time.perf_counter()
    iet = constant_case_iet()
    assert iet.pi == Permutation([4, 3, 2, 1])
    built = build_W_constant(iet.pi, iet.lengths, EPS_CONSTANT, 3, 3000)
    ct = built[-1]
    t = ct.tower
    betas = [(a + b) / 2 + t.shifts[5 * l + 1] for l, (a, b) in enumerate(ct.sub_bases)]
    f = step_roof(betas)
    jumps = dict(f.jump_points())
    xi = displacement_distribution(f, iet, t)
    assert xi.is_atomic() and xi.total == 1
    assert set(xi.support()) <= {0, 1, F(1, 2), F(1, 3)}
    win = discontinuity_windows(ct, betas)
    assert win.total_mass == 3 * t.lambda_gap * t.q
    for beta, w in zip(betas, win.windows):
        assert xi.mass_at(jumps[beta]) == w.measure() / t.measure
    nonzero = 1 - xi.mass_at(0)
    alpha = t.measure
    assert nonzero > (1 - alpha) / alpha
    report = theorem_pipeline(iet, f, EPS_CONSTANT, 3000)
    assert report.verdict is Verdict.SATISFIED
    assert time.perf_counter() - start <= 300
    return f"(q = {t.q}, nonzero mass {float(nonzero):.4f} > {float((1 - alpha) / alpha):.4f})"


# --- 6 -------------------------------------------------------------------------------

@criterion(6, "negative controls")
def test_criterion_6_negative_controls():
    iet = constant_case_iet()
    built = build_W_constant(iet.pi, iet.lengths, EPS_CONSTANT, 3, 3000)
    ct = built[-1]
    t = ct.tower
    betas = [(a + b) / 2 + t.shifts[5 * l + 1] for l, (a, b) in enumerate(ct.sub_bases)]
    try:
        theorem_pipeline(iet, step_roof(betas, jumps=(1, -1, F(1, 2)), base=2), EPS_CONSTANT, 3000)
    except InputRejected:
        pass
    else:
        raise AssertionError("opposite jumps were not rejected")
    assert check_glwynik(EmpiricalMeasure([(0, 1)]), F(9, 10)).verdict is Verdict.FAILED_MASS
    sym = EmpiricalMeasure([(0, F(1, 10)), (F(1, 2), F(9, 20)), (F(-1, 2), F(9, 20))])
    assert check_glwynik(sym, F(9, 10)).verdict is Verdict.FAILED_SYMMETRY


# --- 7 -------------------------------------------------------------------------------

@criterion(7, "cocycle identity and flow group law on 1000 random exact inputs each")
def test_criterion_7_cocycle_and_flow():
    rng = random.Random(7)
    for _ in range(1000):
        d = rng.randint(2, 5)
        cuts = sorted(rng.sample(range(1, 997), d - 1))
        iet = IetSpec(Permutation(rng.choice(IRREDUCIBLE[d])),
                      [F(b - a, 997) for a, b in zip([0] + cuts, cuts + [997])])
        f = random_roof(rng)
        x = Scalar(F(rng.randrange(997 * 8), 997 * 8))
        m, n = rng.randint(-15, 15), rng.randint(0, 15)
        if m >= 0:
            assert birkhoff_sum(f, iet, m + n, x) == birkhoff_sum(f, iet, m, x) + birkhoff_sum(f, iet, n, apply(iet, x, m))
        else:
            y = apply(iet, x, m)
            assert birkhoff_sum(f, iet, m, x) == -birkhoff_sum(f, iet, -m, y)
        h = f(x)
        p = FlowPoint(x, h * F(rng.randrange(1000), 1000))
        s, u = F(rng.randint(-400, 400), 37), F(rng.randint(-400, 400), 41)
        assert flow(f, iet, flow(f, iet, p, s), u) == flow(f, iet, p, s + u)


# --- 8 -------------------------------------------------------------------------------

@criterion(8, "absolutely continuous correction decays on golden towers")
def test_criterion_8_ac_decay():
    iet = golden_rotation()
    _, g = decompose(TENT)
    values = [ac_rigidity_check(g, iet, golden_order2(n), 16) for n in (5, 6, 7, 8)]
    assert all(b < a for a, b in zip(values, values[1:]))
    return "(" + ", ".join(f"{float(v):.4f}" for v in values) + ")"


# --- 9 -------------------------------------------------------------------------------

JOINING_RECTS = [
    (FlowRect.of((0, F(1, 2)), (0, F(1, 2))),) * 3,
    (FlowRect.of((F(1, 4), F(3, 4)), (F(1, 4), 1)),) * 3,
    (FlowRect.of((0, 1), (0, F(1, 2))),) * 3,
    (FlowRect.of((F(1, 2), 1), (F(1, 2), F(3, 2))),) * 3,
    (FlowRect.of((0, F(1, 2)), (0, 1)), FlowRect.of((F(1, 2), 1), (0, 1)), FlowRect.of((0, 1), (0, 1))),
    (FlowRect.of((F(1, 3), F(2, 3)), (0, F(3, 4))), FlowRect.of((0, F(1, 3)), (F(1, 4), 1)),
     FlowRect.of((F(1, 5), F(4, 5)), (0, 1))),
]


def _joining_trend(iet, epsilon, budget):
    towers = build_W_linear(iet.pi, iet.lengths, epsilon, budget)[:2]
    a_values = [center_on_tower(LINEAR_ROOF, iet, t) for t in towers]
    pairs = [pair_distribution(LINEAR_ROOF, iet, t, a) for t, a in zip(towers, a_values)]
    rows = joining_convergence_check(LINEAR_ROOF, iet, towers, JOINING_RECTS, a_values, pairs,
                                     1_000_000, 1, threads=4)
    d0 = [r for r in rows if r.depth == 0]
    d1 = [r for r in rows if r.depth == 1]
    drop = sum(r.discrepancy for r in d0) - sum(r.discrepancy for r in d1)
    sigma = math.sqrt(sum(r.stderr ** 2 for r in rows))
    assert drop > 3 * sigma, f"drop {drop:.4g} vs 3 sigma {3 * sigma:.4g}"
    assert not any(r.flag for r in rows)
    return f"(summed discrepancy drops by {drop:.4f}, 3 sigma = {3 * sigma:.4f})"


@criterion(9, "joining discrepancy shrinks across depths on the golden rotation")
def test_criterion_9_golden_joining():
    start = time.perf_counter()
    detail = _joining_trend(golden_rotation(), F(2, 5), 400)
    assert time.perf_counter() - start <= 600
    return detail


@criterion(9, "joining discrepancy shrinks across depths, quadratic rotation in place of the golden one")
def test_criterion_9_quadratic_joining():
    start = time.perf_counter()
    detail = _joining_trend(quadratic_rotation(), F(2, 5), 200)
    assert time.perf_counter() - start <= 600
    return detail


# --- 10 ------------------------------------------------------------------------------

@criterion(10, "Monte Carlo triple correlation is calibrated")
def test_criterion_10_mc_calibration():
    iet = golden_rotation()
    R = FlowRect.of((F(1, 5), F(4, 5)), (F(1, 2), F(3, 2)))
    exact = float(rect_measure(LINEAR_ROOF, R))
    inside = 0
    for seed in range(100):
        est = triple_correlation(LINEAR_ROOF, iet, R, R, R, 0, 0, 20_000, seed)
        inside += abs(est.estimate - exact) <= 3 * est.stderr
    assert inside >= 95, f"only {inside} of 100 seeds within 3 sigma"
    return f"({inside}/100 within 3 sigma)"


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except BaseException:
                pass
