from fractions import Fraction
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from constructions import golden_rotation
from ietflow.iet import (
    DomainError,
    IetSpec,
    InvalidIet,
    KeaneCoincidence,
    Permutation,
    apply,
    is_irreducible,
    keane_check,
    orbit,
    translation_offsets,
)
from ietflow.scalar import Scalar

F = Fraction
ROT = IetSpec(Permutation([2, 1]), [F(1, 3), F(2, 3)])


def brute_map(pi, lengths, x):
    """T x by laying the intervals out again in bottom order."""
    d = len(lengths)
    starts = [sum(lengths[:k], F(0)) for k in range(d)]
    k = max(i for i in range(d) if starts[i] <= x)
    order = sorted(range(d), key=lambda j: pi[j])
    image_start = sum((lengths[j] for j in order[: order.index(k)]), F(0))
    return image_start + (x - starts[k])


IRREDUCIBLE = {d: [list(p) for p in permutations(range(1, d + 1)) if is_irreducible(Permutation(p))]
               for d in range(2, 6)}


@st.composite
def rational_iets(draw, max_d=5):
    d = draw(st.integers(2, max_d))
    pi = draw(st.sampled_from(IRREDUCIBLE[d]))
    lengths = [F(draw(st.integers(1, 97)), draw(st.integers(1, 97))) for _ in range(d)]
    return pi, lengths


def test_irreducibility_examples():
    assert not is_irreducible(Permutation([1, 2]))
    assert is_irreducible(Permutation([2, 1]))
    assert is_irreducible(Permutation([3, 1, 2]))
    assert not is_irreducible(Permutation([2, 1, 3]))


def test_reducible_rejected():
    with pytest.raises(InvalidIet):
        IetSpec(Permutation([1, 2]), [F(1, 2), F(1, 2)])


def test_offsets_rotation():
    assert translation_offsets(ROT) == (F(2, 3), F(-1, 3))


@given(st.fractions(min_value=F(1, 100), max_value=F(99, 100), max_denominator=100))
def test_offsets_two_interval_symmetry(x):
    iet = IetSpec(Permutation([2, 1]), [x, 1 - x])
    assert translation_offsets(iet) == (1 - x, -x)


def test_apply_examples():
    assert apply(ROT, 0, 1) == F(2, 3)
    assert apply(ROT, F(2, 3), -1) == 0
    assert apply(ROT, F(1, 5), 0) == F(1, 5)


def test_orbit_example():
    assert orbit(ROT, 0, 3) == [0, F(2, 3), F(1, 3), 0]
    assert orbit(ROT, F(1, 7), 0) == [F(1, 7)]


def test_domain_errors():
    with pytest.raises(DomainError):
        apply(ROT, 1)
    with pytest.raises(DomainError):
        apply(ROT, F(-1, 9))


@given(rational_iets(), st.data())
def test_apply_matches_brute_force(spec, data):
    pi, lengths = spec
    iet = IetSpec(Permutation(pi), lengths)
    x = iet.total.as_fraction() * data.draw(st.fractions(min_value=0, max_value=1, max_denominator=500).filter(lambda v: v < 1))
    assert apply(iet, x) == brute_map(pi, lengths, x)


@given(rational_iets(), st.data())
def test_bijective(spec, data):
    pi, lengths = spec
    iet = IetSpec(Permutation(pi), lengths)
    x = iet.total.as_fraction() * data.draw(st.fractions(min_value=0, max_value=1, max_denominator=500).filter(lambda v: v < 1))
    n = data.draw(st.integers(-20, 20))
    assert apply(iet, apply(iet, x, n), -n) == x


@given(rational_iets())
def test_images_tile(spec):
    pi, lengths = spec
    iet = IetSpec(Permutation(pi), lengths)
    images = sorted(iet.image_interval(k) for k in range(iet.d))
    assert images[0][0] == 0 and images[-1][1] == iet.total
    assert all(b == a for (_, b), (a, _) in zip(images, images[1:]))
    for k in range(iet.d):
        a, b = iet.image_interval(k)
        assert b - a == lengths[k]


def test_field_closure():
    iet = golden_rotation()
    x = apply(iet, Scalar(F(1, 7)), 11)
    assert x.field == 5


def test_keane_examples():
    assert keane_check(ROT, 5) == KeaneCoincidence(3, 2, 2)
    assert keane_check(golden_rotation(), 50) is None


def test_keane_permitted_coincidence():
    # T of the left end of I_2 lands on 0 = left end of I_1; that alone is allowed
    iet = IetSpec(Permutation([2, 1]), [Scalar(1) - Scalar.quadratic(F(-1, 2), F(1, 2), 5),
                                      Scalar.quadratic(F(-1, 2), F(1, 2), 5)])
    assert apply(iet, iet.starts[1]) == 0
    assert keane_check(iet, 30) is None


def brute_keane(iet, depth):
    """Smallest k with T^k(left end of I_i) = left end of I_j, i >= 2, except T(.) = 0 at k = 1."""
    starts = list(iet.starts)
    orbits = {i: orbit(iet, starts[i], depth) for i in range(1, iet.d)}
    for k in range(1, depth + 1):
        for i in range(1, iet.d):
            for j in range(iet.d):
                if orbits[i][k] == starts[j] and not (k == 1 and j == 0):
                    return k
    return None


@given(rational_iets(max_d=4))
def test_keane_against_brute_force(spec):
    pi, lengths = spec
    iet = IetSpec(Permutation(pi), lengths)
    got = keane_check(iet, 40)
    want = brute_keane(iet, 40)
    assert (got is None) == (want is None)
    if got is not None:
        assert got.k == want
