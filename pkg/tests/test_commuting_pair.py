from fractions import Fraction

import pytest
from gmpy2 import mpfr

from renorm_lab.circle_map import closest_returns, rotation_map
from renorm_lab.commuting_pair import (
    AFFINE,
    INFINITE_PERIOD,
    CommutingPair,
    CompositionChain,
    MobiusFrame,
    boundary_orbit,
    distance,
    dumps_pair,
    extract_pair,
    flattest_point,
    homothety,
    k_control,
    loads_pair,
    mirror,
    mobius_frame,
    normalize,
    order_leq,
    orientation_case,
    pair_rotation_digits,
    pair_tolerance,
    period,
    pre_renormalize,
    renormalize,
    schwarzian_max,
    validate,
    vertical_translate,
)
from renorm_lab.errors import DomainError, NotRenormalizable, PreconditionError
from renorm_lab.experiments import circle_pair
from renorm_lab.numerics import precision

BITS = 212


def _affine_chain(alpha, beta):
    with precision(BITS):
        return CompositionChain([(AFFINE, mpfr(alpha), mpfr(beta))])


def test_level_one_commutation(golden_arnold):
    pair = extract_pair(golden_arnold.fmap, golden_arnold.state, 1)
    c1, c2 = pair.common_value()
    with precision(BITS):
        assert abs(c1 - c2) <= pair_tolerance(BITS)
        assert c1 != 0


@pytest.mark.parametrize("level", range(0, 12))
def test_golden_periods(golden_arnold, level):
    pair = extract_pair(golden_arnold.fmap, golden_arnold.state, level)
    assert period(pair) == 1
    assert not validate(pair)


def test_mixed_digit_periods(mixed_arnold):
    digits = mixed_arnold.state.digits
    assert digits[:6] == (5, 4, 3, 2, 2, 2)
    for n in range(-1, 6):
        assert period(extract_pair(mixed_arnold.fmap, mixed_arnold.state, n)) == digits[n + 1]


def test_circle_level_pair_period(large_digit_arnold):
    pair = circle_pair(large_digit_arnold.fmap)
    assert period(pair) == 60
    assert pair.xi0 == 1
    # direct iteration of the map itself, independent of pair machinery, at low precision
    f = large_digit_arnold.fmap
    with precision(64):
        x, count = mpfr(0), 0
        y = f.value(x)
        while y < 1:
            count += 1
            y = f.value(y) if y < 1 else y
            if count > 100:
                break
    assert count + 1 == 60 or count == 60


def test_fixed_point_gives_infinite_period():
    eta = _affine_chain(2, -1)  # fixed point at 1 inside [0, 2]
    xi = _affine_chain(1, 2)
    pair = CommutingPair.from_chains(eta, xi, BITS, eta_critical=False, xi_critical=False)
    assert period(pair) == INFINITE_PERIOD
    with pytest.raises(NotRenormalizable):
        pre_renormalize(pair)
    digits = pair_rotation_digits(pair, 3)
    assert digits == [] and not digits.complete


def test_extract_needs_digits(golden_arnold):
    with pytest.raises(PreconditionError):
        extract_pair(golden_arnold.fmap, golden_arnold.state, 40)


@pytest.mark.parametrize("level", [1, 4, 9])
def test_semigroup_identity(golden_arnold, level):
    f, cf = golden_arnold.fmap, golden_arnold.state
    p = pre_renormalize(extract_pair(f, cf, level))
    nxt = extract_pair(f, cf, level + 1)
    assert not validate(p)
    with precision(BITS):
        assert distance(p, nxt).d2 <= mpfr(2) ** (40 - BITS)


def test_left_shift_of_digits(mixed_arnold):
    pair = extract_pair(mixed_arnold.fmap, mixed_arnold.state, 0)
    full = pair_rotation_digits(pair, 6)
    assert list(full) == list(mixed_arnold.state.digits[1:7])
    assert list(pair_rotation_digits(renormalize(pair), 5)) == list(full[1:])


def test_depth_zero_digits(golden_arnold):
    assert pair_rotation_digits(extract_pair(golden_arnold.fmap, golden_arnold.state, 2), 0) == []


def test_rotation_reference_pair_digits():
    digits = [2] * 16
    f = rotation_map(digits)
    cf = closest_returns(f, max_level=12)
    pair = extract_pair(f, cf, 1)
    assert not pair.eta_critical
    assert list(pair_rotation_digits(pair, 8)) == [2] * 8


@pytest.mark.parametrize("alpha", [Fraction(1, 3), 1, 7])
def test_homothety_invariance(golden_arnold, golden_two_harmonic, alpha):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 3)
    w = extract_pair(golden_two_harmonic.fmap, golden_two_harmonic.state, 3)
    with precision(BITS):
        alpha = mpfr(alpha.numerator) / alpha.denominator if isinstance(alpha, Fraction) else mpfr(alpha)
    scaled = homothety(z, alpha)
    assert distance(scaled, z, grid_size=65).d2 <= mpfr("1e-40")
    base = distance(z, w, grid_size=65)
    moved = distance(scaled, w, grid_size=65)
    for r in range(3):
        assert abs(base.value(r) - moved.value(r)) <= mpfr("1e-40")


def test_distance_to_self_is_zero(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 5)
    rep = distance(z, z)
    assert rep.d0 == rep.d1 == rep.d2 == 0


def test_metric_monotone_and_grid_refinement(golden_arnold, golden_two_harmonic):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 4)
    w = extract_pair(golden_two_harmonic.fmap, golden_two_harmonic.state, 4)
    for variant in ("moebius", "affine"):
        coarse = distance(z, w, variant=variant)
        fine = distance(z, w, variant=variant, grid_size=1025)
        assert 0 <= coarse.d0 <= coarse.d1 <= coarse.d2
        assert 0 < coarse.d2 <= fine.d2 * (1 + 1e-12)
        assert abs(fine.d2 - coarse.d2) <= 0.05 * fine.d2


def test_distance_rejects_mixed_criticality(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 2)
    f = rotation_map([2] * 12)
    r = extract_pair(f, closest_returns(f, max_level=8), 1)
    with pytest.raises(DomainError):
        distance(z, r)


def test_mobius_frame_examples():
    with precision(BITS):
        ident = MobiusFrame.through(-1, 1)
        assert ident.a == 1 and ident.c == 0
        frame = MobiusFrame.through(-2, 2)
        assert frame(-2) == -1 and frame(0) == 0 and frame(2) == 1
        frame = MobiusFrame.through(mpfr("-0.3"), mpfr("1.7"))
        assert abs(frame(mpfr("-0.3")) + 1) < mpfr(2) ** -200
        assert abs(frame(mpfr("1.7")) - 1) < mpfr(2) ** -200
        for y in (mpfr("-0.9"), mpfr("0.25"), mpfr("0.8")):
            assert abs(frame(frame.inverse(y)) - y) < mpfr(2) ** -200
            j, ji = frame.jet(frame.inverse(y)), frame.inverse_jet(y)
            assert abs(j.d1 * ji.d1 - 1) < mpfr(2) ** -200
        with pytest.raises(DomainError):
            MobiusFrame.through(1, 2)


def test_frame_absorbs_homothety(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 3)
    s = homothety(z, 7)
    fz, fs = mobius_frame(z), mobius_frame(s)
    with precision(BITS):
        for x in (z.eta0 / 2, z.xi0 / 3, z.xi0):
            assert abs(fs(7 * x) - fz(x)) < mpfr(2) ** -190


def test_normalize(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 6)
    n = normalize(z)
    assert n.eta0 == -1 or abs(n.eta0 + 1) < pair_tolerance(BITS)
    with precision(BITS):
        assert abs(n.xi0 - z.xi0 / -z.eta0) < pair_tolerance(BITS)
    assert normalize(normalize(n)) is normalize(n) or distance(normalize(n), n).d2 == 0
    assert distance(normalize(homothety(z, 3)), n).d2 <= pair_tolerance(BITS)
    assert not validate(n)


def test_mirror_keeps_period(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 4)
    m = mirror(z)
    assert m.xi0 < 0 < m.eta0
    assert orientation_case(z) == 1


def test_order_relation(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 2)
    assert order_leq(z, z) == 0
    s = mpfr("1e-3", BITS) * z.xi0
    up = vertical_translate(z, s)
    with precision(BITS):
        assert abs(order_leq(z, up) - s) <= mpfr(2) ** -180
    assert order_leq(up, z) is None


def test_order_preserved_by_pre_renormalization(large_digit_arnold):
    z = circle_pair(large_digit_arnold.fmap)
    with precision(BITS):
        s = mpfr("1e-6")
    up = vertical_translate(z, s)
    assert period(z) == period(up)
    t0 = order_leq(z, up)
    t1 = order_leq(pre_renormalize(z, canonical_form=False), pre_renormalize(up, canonical_form=False))
    with precision(BITS):
        assert t1 is not None
        assert abs(t1 - t0) <= mpfr(2) ** -150


def test_strict_order_separates_rotation_numbers(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 1)
    up = vertical_translate(z, mpfr("1e-4", BITS) * z.xi0)
    t = order_leq(z, up)
    with precision(BITS):
        assert t > mpfr(2) ** (16 - BITS) * (z.xi0 - z.eta0)
    assert list(pair_rotation_digits(z, 10)) != list(pair_rotation_digits(up, 10))


def test_k_control_measures(golden_arnold):
    reports = [k_control(extract_pair(golden_arnold.fmap, golden_arnold.state, n)) for n in (6, 8, 10)]
    for rep in reports:
        assert rep.minimal_k >= 1
        assert rep.violated == ()
        assert rep.period == 1
    ks = [float(r.minimal_k) for r in reports]
    assert max(ks) / min(ks) < 2


def test_k_control_flags_degenerate_clause():
    bits = 1200
    with precision(bits):
        tiny = mpfr(2) ** -1100
        slope = (1 + tiny / 2) / tiny  # eta(xi(0)) = xi(0)/2, so the period is 1
        eta = CompositionChain([(AFFINE, slope, mpfr(-1))])
        xi = CompositionChain([(AFFINE, mpfr(1), tiny)])
    pair = CommutingPair.from_chains(eta, xi, bits, eta_critical=False, xi_critical=False)
    rep = k_control(pair)
    assert rep.period == 1
    assert "xi0" in rep.violated


def test_schwarzian_negative_after_renormalization(golden_arnold):
    for n in (4, 8, 11):
        assert schwarzian_max(extract_pair(golden_arnold.fmap, golden_arnold.state, n)) < 0


def test_flattest_point(large_digit_arnold):
    z = circle_pair(large_digit_arnold.fmap)
    fp = flattest_point(z)
    with precision(BITS):
        assert abs(fp.deta - 1) <= pair_tolerance(BITS) * 2**20
        assert fp.d2eta < 0
    assert 0 < fp.index < 60
    xs = boundary_orbit(z)
    assert len(xs) == 62 and xs[60] >= 0 > xs[61]


def test_validation_of_produced_pairs(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 3)
    for p in (z, pre_renormalize(z), normalize(z), renormalize(renormalize(z))):
        assert validate(p) == {}


def test_validation_reports_clause():
    pair = CommutingPair.from_chains(_affine_chain(2, -1), _affine_chain(1, 2), BITS)
    failures = validate(pair)
    assert "critical_eta_d3" in failures and "commutation" in failures


def test_serialization_round_trip(golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 5)
    period(z)
    back = loads_pair(dumps_pair(z))
    assert back.meta["level"] == 5 and back._cache["period"] == 1
    assert back.eta0 == z.eta0 and back.xi0 == z.xi0
    assert distance(back, z).d2 == 0
    with pytest.raises(DomainError):
        loads_pair('{"format": "other"}')
