"""Acceptance suite: one PASS/FAIL line per criterion, at full tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on. The whole file takes roughly 13 minutes on one core.
"""

import random
import time

import gmpy2
import pytest
from gmpy2 import mpfr

from renorm_lab.circle_map import build_partition, closest_returns, real_bounds_report, solve_parameter
from renorm_lab.commuting_pair import distance, extract_pair, homothety, period, pre_renormalize
from renorm_lab.experiments import (
    ExperimentConfig,
    FamilyConfig,
    clear_solve_cache,
    run_converge,
    run_expansion,
    run_lipschitz_probe,
    run_rigidity,
    run_sync,
    run_yoccoz,
    solve_family,
)
from renorm_lab.nonlinearity import PolynomialMap, chain_rule_residuals, round_trip_residual
from renorm_lab.numerics import fit_loglinear, precision

pytestmark = pytest.mark.slow

BITS = 212
FIB = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233]
_BODIES: dict = {}


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, detail


def _f(x):
    return f"{float(x):.4g}"


def test_ac01_fibonacci_combinatorics(capsys):
    t0 = time.perf_counter()
    sol = solve_parameter("arnold", {}, [1] * 14, 12)
    state = closest_returns(sol.fmap, max_level=12)
    elapsed = time.perf_counter() - t0
    ok = list(state.digits[:12]) == [1] * 12 and list(state.q[:13]) == FIB and elapsed < 10
    report(capsys, "AC01 Fibonacci combinatorics", ok, f"digits {list(state.digits[:12])}, q {list(state.q[:13])}, {elapsed:.1f} s")


def test_ac02_period_identity(capsys, golden_arnold, mixed_arnold):
    golden = [period(extract_pair(golden_arnold.fmap, golden_arnold.state, n)) for n in range(1, 13)]
    digits = mixed_arnold.state.digits
    mixed = [period(extract_pair(mixed_arnold.fmap, mixed_arnold.state, n)) for n in range(1, 6)]
    ok = golden == [1] * 12 and mixed == list(digits[2:7]) and list(digits[:3]) == [5, 4, 3]
    report(capsys, "AC02 extraction/period identity", ok, f"golden {golden}; [5,4,3,2,...] levels 1..5 -> {mixed}")


def test_ac03_semigroup(capsys, golden_arnold):
    f, cf = golden_arnold.fmap, golden_arnold.state
    t0 = time.perf_counter()
    with precision(BITS):
        worst = max(
            distance(pre_renormalize(extract_pair(f, cf, n)), extract_pair(f, cf, n + 1)).d2 for n in range(1, 11)
        )
        bound = mpfr(2) ** (40 - BITS)
    elapsed = time.perf_counter() - t0
    ok = worst <= bound and elapsed < 120
    report(capsys, "AC03 semigroup consistency", ok, f"max d2 {_f(worst)} <= {_f(bound)}, {elapsed:.1f} s")


def test_ac04_homothety(capsys, golden_arnold):
    z = extract_pair(golden_arnold.fmap, golden_arnold.state, 5)
    with precision(BITS):
        values = [distance(z, homothety(z, alpha)).d2 for alpha in (mpfr(1) / 3, mpfr(7))]
    ok = all(v <= mpfr("1e-40") for v in values)
    report(capsys, "AC04 homothety invariance", ok, f"d2 for alpha 1/3, 7: {[_f(v) for v in values]}")


def test_ac05_decay(capsys):
    clear_solve_cache()
    t0 = time.perf_counter()
    cfg = ExperimentConfig(depth=16, grid_size=257, precision_bits=BITS)
    res = run_converge(cfg)
    elapsed = time.perf_counter() - t0
    _BODIES["converge"] = res.report.csv_body()
    by_n = {r.n: r for r in res.rows}
    ratios = [by_n[n + 1].d2 / by_n[n].d2 for n in range(6, 16)]
    with precision(BITS):
        fit = fit_loglinear(list(range(6, 17)), [by_n[n].d2 for n in range(6, 17)])
    ok = all(r <= 0.95 for r in ratios) and fit.slope < 0 and fit.r_squared >= 0.9 and elapsed < 900
    report(
        capsys,
        "AC05 exponential decay of d2",
        ok,
        f"ratios n=6..15 in [{_f(min(ratios))}, {_f(max(ratios))}], slope {_f(fit.slope)}, r2 {_f(fit.r_squared)}, {elapsed:.0f} s",
    )


def test_ac06_real_bounds(capsys):
    cfg = ExperimentConfig()
    sol = solve_family(FamilyConfig("arnold"), cfg.target, cfg)
    k = [real_bounds_report(build_partition(sol.fmap, sol.state, n)).k_adj for n in range(8, 15)]
    ok = all(v <= 100 for v in k) and max(k) / min(k) <= 4
    report(capsys, "AC06 real bounds stability", ok, f"K_adj levels 8..14: {[_f(v) for v in k]}")


def test_ac07_yoccoz(capsys):
    res = run_yoccoz(ExperimentConfig(), 60)
    _BODIES["yoccoz"] = res.report.csv_body()
    frac = res.flattest_fraction
    ok = res.spread <= 100 and frac is not None and 0.05 <= frac <= 0.95
    report(capsys, "AC07 Yoccoz geometry", ok, f"max r/min r {_f(res.spread)}, N/a {frac}")


def test_ac08_expansion(capsys):
    res = run_expansion(ExperimentConfig(), [16, 32, 64])
    _BODIES["expand"] = res.report.csv_body()
    neg, pos = res.fit.slope, res.fit_positive.slope
    ok = 2.5 <= neg <= 3.5 and -0.5 <= pos <= 0.5
    report(capsys, "AC08 expansion exponent", ok, f"x<0 slope {_f(neg)}, x>0 slope {_f(pos)}")


def _random_poly(rng):
    c = [mpfr(rng.randint(0, 200)) / 1000, 1 + mpfr(rng.randint(0, 1000)) / 1000]
    c += [mpfr(rng.randint(-50, 100)) / 1000, mpfr(rng.randint(0, 100)) / 1000]
    return PolynomialMap(c)


def test_ac09_nonlinearity(capsys):
    with precision(BITS):
        phis = [lambda x: mpfr(3), lambda x: 4 * gmpy2.sin(5 * x), lambda x: 2 / (1 + 2 * x)]
        trips = [round_trip_residual(phi, 0, 1) for phi in phis]
        rng = random.Random(11)
        worst = [0, 0]
        for _ in range(64):
            x = mpfr(rng.randint(1, 999)) / 1000
            n_res, s_res = chain_rule_residuals(_random_poly(rng), _random_poly(rng), x)
            worst = [max(worst[0], n_res), max(worst[1], s_res)]
    ok = all(t <= 1e-10 for t in trips) and all(w <= 8 for w in worst)
    report(
        capsys,
        "AC09 nonlinearity round trip and chain rules",
        ok,
        f"round trips {[_f(t) for t in trips]}, chain rule ulp N {_f(worst[0])}, S {_f(worst[1])}",
    )


def test_ac10_synchronization(capsys):
    digits = [40] + [1] * 12
    profiles = []
    for beta in ("0.1", "0.05"):
        cfg = ExperimentConfig(
            families=[FamilyConfig("arnold"), FamilyConfig("two_harmonic", {"beta": beta})], target_digits=digits
        )
        profiles.append(run_sync(cfg))
    p, q = profiles
    consts = [(p.l_sync, q.l_sync), (p.k_dxi, q.k_dxi), (p.k_h, q.k_h)]
    finite = all(gmpy2.is_finite(v) and v > 0 for pair in consts for v in pair)
    stable = all(max(u, v) / min(u, v) < 4 for u, v in consts)
    ok = finite and stable and q.epsilon < p.epsilon
    detail = f"eps {_f(p.epsilon)} -> {_f(q.epsilon)}; " + ", ".join(
        f"{name} {_f(u)} -> {_f(v)}" for name, (u, v) in zip(("L_sync", "K_dxi", "K_h"), consts)
    )
    report(capsys, "AC10 synchronization", ok, detail)


def test_ac11_lipschitz(capsys):
    res = run_lipschitz_probe(ExperimentConfig(), list(range(4, 15)))
    ok = all(r is not None and r <= 50 for r in res.ratios)
    report(capsys, "AC11 Lipschitz probe", ok, f"ratios levels 4..14 max {_f(res.max_ratio)}")


def test_ac12_rigidity(capsys):
    res = run_rigidity(ExperimentConfig(), list(range(4, 13)))
    v = dict(zip(res.levels, res.discrepancy))
    ok = v[12] <= v[4] / 2 and all(v[n + 1] <= v[n] for n in range(6, 12))
    report(capsys, "AC12 rigidity ratio decay", ok, f"levels 4..12: {[_f(v[n]) for n in range(4, 13)]}")


def test_ac13_determinism(capsys):
    clear_solve_cache()
    again = {
        "converge": run_converge(ExperimentConfig(depth=16, grid_size=257, precision_bits=BITS)).report.csv_body(),
        "yoccoz": run_yoccoz(ExperimentConfig(), 60).report.csv_body(),
        "expand": run_expansion(ExperimentConfig(), [16, 32, 64]).report.csv_body(),
    }
    same = {k: _BODIES.get(k) == v for k, v in again.items()}
    ok = all(same.values()) and len(_BODIES) == 3
    report(capsys, "AC13 determinism", ok, f"identical CSV bodies: {same}")
