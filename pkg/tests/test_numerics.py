import random
from fractions import Fraction

import gmpy2
import pytest
import sympy
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from renorm_lab.errors import DomainError
from renorm_lab.numerics import (
    Jet3,
    cf_digits,
    cf_to_fraction,
    cf_to_real,
    convergents,
    fit_loglinear,
    fit_semilog,
    gauss_map,
    jet_compose,
    precision,
    refined_grid,
    scalar,
    to_decimal,
    ulp,
    uniform_grid,
)


def test_gauss_map_examples():
    assert gauss_map(Fraction(1, 2)) == 0
    assert gauss_map(Fraction(2, 7)) == Fraction(1, 2)
    with precision(212):
        g = (gmpy2.sqrt(mpfr(5)) - 1) / 2
        assert abs(gauss_map(g) - g) < mpfr(2) ** -200


@pytest.mark.parametrize("bad", [Fraction(0), Fraction(1), Fraction(-1, 3), Fraction(3, 2)])
def test_gauss_map_domain(bad):
    with pytest.raises(DomainError):
        gauss_map(bad)


def test_cf_to_real_examples():
    assert cf_to_fraction([2]) == Fraction(1, 2)
    assert cf_to_fraction([3, 7]) == Fraction(7, 22)
    assert cf_to_fraction([1] * 10).denominator == 89
    with precision(212):
        assert cf_to_real([3, 7], 212) == scalar(Fraction(7, 22), 212)


@pytest.mark.parametrize("bad", [[], [1, 0], [2, -3]])
def test_cf_to_real_domain(bad):
    with pytest.raises(DomainError):
        cf_to_real(bad)


def test_convergents_recursion():
    digits = [5, 4, 3, 2, 2, 7, 1]
    convs = convergents(digits)
    assert convs[0] == (0, 1)
    assert convs[1][1] == digits[0]
    for n in range(1, len(digits)):
        assert convs[n + 1][1] == digits[n] * convs[n][1] + convs[n - 1][1]
        p, q = convs[n + 1]
        assert Fraction(p, q) == cf_to_fraction(digits[: n + 1])
        assert gmpy2.gcd(p, q) == 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=50), min_size=2, max_size=12))
def test_gauss_map_shifts_digits(digits):
    # a trailing 1 is the non-canonical form of a shorter expansion
    digits = digits + [2]
    assert gauss_map(cf_to_fraction(digits)) == cf_to_fraction(digits[1:])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=30), min_size=3, max_size=12))
def test_value_between_preceding_convergents(digits):
    if digits[-1] == 1:
        digits = digits + [2]
    value = cf_to_fraction(digits)
    convs = convergents(digits[:-1])
    a = Fraction(*convs[-1])
    b = Fraction(*convs[-2])
    assert min(a, b) < value < max(a, b)


def test_cf_digits_roundtrip():
    assert cf_digits(Fraction(7, 22)) == [3, 7]


def _poly_jet(coeffs, x):
    t = sympy.Symbol("t")
    p = sum(sympy.Rational(c) * t**k for k, c in enumerate(coeffs))
    return [p.subs(t, x), sympy.diff(p, t).subs(t, x), sympy.diff(p, t, 2).subs(t, x), sympy.diff(p, t, 3).subs(t, x)], p


def test_jet_identity_laws():
    with precision(212):
        j = Jet3(mpfr("0.3"), mpfr(2), mpfr(-1), mpfr(5))
        ident = Jet3.identity(mpfr("0.3"))
        for out in (jet_compose(Jet3.identity(j.f), j), jet_compose(j, ident)):
            assert out.as_tuple() == j.as_tuple()


def test_affine_jets_stay_affine():
    with precision(212):
        a = Jet3(mpfr(1), mpfr(3), mpfr(0), mpfr(0))
        b = Jet3(mpfr(2), mpfr(-2), mpfr(0), mpfr(0))
        assert jet_compose(a, b).is_affine()


def test_jet_compose_matches_symbolic_composition():
    rng = random.Random(7)
    t = sympy.Symbol("t")
    for _ in range(10):
        outer = [Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(4)]
        inner = [Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for _ in range(4)]
        x = Fraction(rng.randint(-9, 9), 7)
        vals_in, p_in = _poly_jet(inner, x)
        vals_out, p_out = _poly_jet(outer, vals_in[0])
        comp = p_out.subs(t, p_in)
        exact = [comp.subs(t, x)] + [sympy.diff(comp, t, k).subs(t, x) for k in (1, 2, 3)]
        with precision(212):
            ji = Jet3(*[scalar(Fraction(int(v.p), int(v.q))) for v in vals_in])
            jo = Jet3(*[scalar(Fraction(int(v.p), int(v.q))) for v in vals_out])
            got = jet_compose(jo, ji).as_tuple()
            for g, e in zip(got, exact):
                e = scalar(Fraction(int(e.p), int(e.q)))
                assert abs(g - e) <= 16 * ulp(e) + mpfr(2) ** -200


def _abs(j):
    return Jet3(*[abs(v) for v in j.as_tuple()])


def test_jet_compose_associative():
    rng = random.Random(11)
    with precision(212):
        for _ in range(64):
            a, b, c = (Jet3(*[mpfr(rng.uniform(-2, 2)) for _ in range(4)]) for _ in range(3))
            left = jet_compose(a, jet_compose(b, c))
            right = jet_compose(jet_compose(a, b), c)
            # ulp of the composition of absolute values bounds the size of every term
            scale = jet_compose(_abs(a), jet_compose(_abs(b), _abs(c)))
            for u, v, w in zip(left.as_tuple()[1:], right.as_tuple()[1:], scale.as_tuple()[1:]):
                assert abs(u - v) <= 8 * ulp(w)


def test_fit_examples():
    with precision(212):
        xs = [mpfr(k) for k in range(1, 9)]
        f = fit_loglinear(xs, xs)
        assert abs(f.slope - 1) < mpfr(2) ** -190 and f.r_squared == 1 or abs(f.r_squared - 1) < 1e-50
        f3 = fit_loglinear(xs, [7 * x**3 for x in xs])
        assert abs(f3.slope - 3) < mpfr(2) ** -180
        assert abs(f3.r_squared - 1) < mpfr(2) ** -180


def test_fit_noisy_quadratic_against_independent_regression():
    rng = random.Random(2024)
    xs = [1.0 + 0.5 * k for k in range(30)]
    ys = [x * x * (1 + 0.01 * rng.uniform(-1, 1)) for x in xs]
    with precision(212):
        f = fit_loglinear([mpfr(x) for x in xs], [mpfr(y) for y in ys])
    import numpy as np

    slope = np.polyfit(np.log(xs), np.log(ys), 1)[0]
    assert 1.9 <= float(f.slope) <= 2.1
    assert abs(float(f.slope) - slope) < 1e-10
    assert 0 <= f.r_squared <= 1


def test_fit_errors():
    with pytest.raises(DomainError):
        fit_loglinear([1], [1])
    with pytest.raises(DomainError):
        fit_loglinear([1, 2], [1, 0])
    with pytest.raises(DomainError):
        fit_loglinear([1, 2], [1])


def test_semilog_recovers_rate():
    with precision(212):
        ys = [mpfr("0.6") ** n for n in range(1, 10)]
        f = fit_semilog(list(range(1, 10)), ys)
        assert abs(gmpy2.exp(f.slope) - mpfr("0.6")) < mpfr(2) ** -180


def test_grids_are_sorted_and_refined():
    with precision(212):
        g = refined_grid(0, 1, 257)
        assert g == sorted(g)
        assert len(g) == 257 + 18
        assert g[1] == mpfr(2) ** -18
        assert len(uniform_grid(-1, 0, 5)) == 5


def test_to_decimal_roundtrip():
    with precision(212):
        for v in ["0.6", "-1234.5", "1e-70"]:
            x = mpfr(v)
            assert mpfr(to_decimal(x, 212)) == x
