from fractions import Fraction

import pytest

from constructions import EPS_CONSTANT, constant_case_iet, quadratic_rotation, step_roof
from ietflow.criterion import (
    CaseUnsupported,
    EmpiricalMeasure,
    InputRejected,
    NotAtomic,
    Verdict,
    check_glwynik,
    displacement_distribution,
    pair_distribution,
    second_moment,
    theorem_pipeline,
    wl_report,
)
from ietflow.roof import PiecewiseAffine, PiecewiseRoof, birkhoff_sum, center_on_tower
from ietflow.scalar import Scalar
from ietflow.towers import build_W_constant, build_W_linear

F = Fraction


@pytest.fixture(scope="module")
def linear():
    iet = quadratic_rotation()
    return iet, build_W_linear(iet.pi, iet.lengths, F(2, 5), 200)


@pytest.fixture(scope="module")
def constant():
    iet = constant_case_iet()
    built = build_W_constant(iet.pi, iet.lengths, EPS_CONSTANT, 3, 3000)
    ct = built[0]
    t = ct.tower
    betas = [(a + b) / 2 + t.shifts[5 * l + 1] for l, (a, b) in enumerate(ct.sub_bases)]
    return iet, built, betas


def brute_displacement(f, iet, tower, x):
    q = tower.q
    return birkhoff_sum(f, iet, 2 * q, x) - 2 * birkhoff_sum(f, iet, q, x)


def grid_points(tower, per_level):
    ja, jb = tower.J
    w = jb - ja
    for i in range(tower.q):
        for k in range(per_level):
            yield ja + tower.shifts[i] + w * F(2 * k + 1, 2 * per_level)


# --- check_glwynik on hand-made measures ------------------------------------------

def test_check_satisfied():
    m = EmpiricalMeasure([(0, F(1, 5)), (1, F(4, 5))])
    rep = check_glwynik(m, F(9, 10))
    assert rep.verdict is Verdict.SATISFIED
    assert rep.c0 == F(1, 5) and rep.nonzero_mass == F(4, 5) and rep.threshold == F(1, 9)


def test_check_symmetry():
    m = EmpiricalMeasure([(0, F(1, 2)), (1, F(1, 4)), (-1, F(1, 4))])
    rep = check_glwynik(m, F(9, 10))
    assert rep.verdict is Verdict.FAILED_SYMMETRY
    assert len(rep.symmetry_violations) == 1


def test_check_mass():
    assert check_glwynik(EmpiricalMeasure([(0, 1)]), F(1, 2)).verdict is Verdict.FAILED_MASS
    # mass equal to the threshold is not enough
    m = EmpiricalMeasure([(0, F(1, 2)), (3, F(1, 2))])
    assert check_glwynik(m, F(2, 3)).verdict is Verdict.FAILED_MASS


def test_check_rejects():
    with pytest.raises(NotAtomic):
        check_glwynik(EmpiricalMeasure([], [(0, 1, 1)]), F(1, 2))
    with pytest.raises(ValueError):
        check_glwynik(EmpiricalMeasure([(0, 1)]), 0)
    with pytest.raises(ValueError):
        check_glwynik(EmpiricalMeasure([(0, 1)]), F(3, 2))


# --- exact displacement laws -----------------------------------------------------------

def test_constant_roof_is_delta_zero(linear):
    iet, towers = linear
    one = PiecewiseAffine.constant(1)
    for t in towers:
        xi = displacement_distribution(one, iet, t)
        assert xi.atoms == ((Scalar(0), Scalar(1)),)
        assert xi.is_atomic()


def test_linear_single_atom(linear):
    iet, towers = linear
    f = PiecewiseAffine([0], [0], [3])
    for t in towers:
        xi = displacement_distribution(f, iet, t)
        assert xi.is_atomic() and xi.total == 1
        assert xi.atoms == ((3 * t.gamma, Scalar(1)),)


def test_displacement_matches_brute_force(linear):
    iet, towers = linear
    t = towers[0]
    f = PiecewiseRoof([0, iet.lengths[0]], [1, 3], [2, -1])
    xi = displacement_distribution(f, iet, t)
    assert xi.total == 1
    support = set(xi.support())
    values = [brute_displacement(f, iet, t, x) for x in grid_points(t, 3)]
    for v in values:
        if xi.is_atomic():
            assert v in support
        else:
            assert any(lo <= v <= hi or hi <= v <= lo for lo, hi, _ in xi.segments) or v in support


def test_constant_case_masses(constant):
    iet, built, betas = constant
    ct = built[0]
    t = ct.tower
    f = step_roof(betas)
    xi = displacement_distribution(f, iet, t)
    assert xi.is_atomic() and xi.total == 1
    assert set(xi.support()) <= {0, 1, F(1, 2), F(1, 3)}
    for j in (1, F(1, 2), F(1, 3)):
        assert xi.mass_at(j) == t.lambda_gap * t.q / t.measure
    # grid oracle: every brute-force value is an atom, frequencies close to the masses
    per_level = 40
    counts: dict = {}
    for x in grid_points(t, per_level):
        v = brute_displacement(f, iet, t, x)
        assert xi.mass_at(v) > 0
        counts[v] = counts.get(v, 0) + 1
    n = per_level * t.q
    for v, c in counts.items():
        # each window cell per level loses at most one grid point at either end
        assert abs(F(c, n) - xi.mass_at(v)) <= F(2 * 4, per_level)


def test_pair_pushes_to_displacement(linear, constant):
    iet, towers = linear
    f = PiecewiseRoof([0, iet.lengths[0]], [1, 2], [0, 0])
    t = towers[0]
    a = center_on_tower(f, iet, t)
    P = pair_distribution(f, iet, t, a)
    assert P.total == 1
    assert P.push_xi().atoms == displacement_distribution(f, iet, t).atoms
    iet, built, betas = constant
    t = built[0].tower
    f = step_roof(betas)
    a = center_on_tower(f, iet, t)
    P = pair_distribution(f, iet, t, a)
    assert P.push_xi().atoms == displacement_distribution(f, iet, t).atoms


def test_second_moment_matches_grid(linear):
    iet, towers = linear
    t = towers[0]
    f = PiecewiseRoof([0], [1], [1])
    a = center_on_tower(f, iet, t)
    exact = second_moment(f, t, a)
    per_level = 64
    total = Scalar(0)
    for x in grid_points(t, per_level):
        c = birkhoff_sum(f, iet, t.q, x) - a
        total = total + c * c
    approx = total * t.J_length / per_level
    assert abs(float(approx) - float(exact)) < 1e-3 * max(1.0, float(exact))


# --- the pipeline ----------------------------------------------------------------------

def test_pipeline_linear():
    iet = quadratic_rotation()
    f = PiecewiseRoof([0], [1], [1])
    rep = theorem_pipeline(iet, f, F(2, 5), 200)
    assert rep.case == 1 and rep.verdict is Verdict.SATISFIED
    deepest = rep.towers[-1]
    assert rep.criterion.atoms == ((deepest.gamma, Scalar(1)),)
    assert all(c["holds"] for d in rep.depths for c in d.certificates)


def test_pipeline_constant(constant):
    iet, built, betas = constant
    f = step_roof(betas)
    rep = theorem_pipeline(iet, f, EPS_CONSTANT, 3000)
    assert rep.case == 2 and rep.verdict is Verdict.SATISFIED
    assert all(c["holds"] for c in rep.depths[-1].certificates)
    assert {v for v, _ in rep.criterion.atoms} == {0, F(1, 3), F(1, 2), 1}


def test_pipeline_rejections(constant):
    iet, built, betas = constant
    with pytest.raises(InputRejected):
        theorem_pipeline(iet, step_roof(betas, jumps=(1, -1, F(1, 3)), base=3), EPS_CONSTANT, 100)
    with pytest.raises(InputRejected):
        theorem_pipeline(iet, step_roof(betas[:2], jumps=(1, F(1, 2))), EPS_CONSTANT, 100)
    bump = PiecewiseRoof([0, F(1, 2)], [1, 2], [1, -1])
    with pytest.raises(CaseUnsupported):
        theorem_pipeline(iet, bump, EPS_CONSTANT, 100)
    lin = quadratic_rotation()
    with pytest.raises(InputRejected):
        theorem_pipeline(lin, PiecewiseRoof([0, F(1, 3)], [1, 2], [1, 1]), F(2, 5), 100)


def test_pipeline_budget_zero():
    rep = theorem_pipeline(quadratic_rotation(), PiecewiseRoof([0], [1], [1]), F(2, 5), 0)
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_wl_report(linear):
    iet, towers = linear
    f = PiecewiseRoof([0, iet.lengths[0]], [1, 2], [0, 0])
    rep = wl_report(towers, f)
    assert len(rep["rows"]) == len(towers)
    flags = rep["flags"]
    assert flags["boundary_within_bound"] and flags["moments_bounded"]
    with pytest.raises(ValueError):
        wl_report(towers[:1], f)
