"""Experiment drivers: convergence, Yoccoz geometry, expansion, synchronization,
Lipschitz probe and rigidity ratios.

Every driver returns an :class:`ExperimentReport`: a fixed column list, rows
of decimal strings at full precision and a header with the numerical
metadata. Wall-clock times go to the header only, so CSV bodies are
bit-identical across reruns of the same configuration.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from . import __version__
from .circle_map import (
    CircleMapLift,
    SolveResult,
    build_partition,
    common_prefix,
    lift_orbit,
    solve_parameter,
)
from .commuting_pair import (
    INFINITE_PERIOD,
    CommutingPair,
    boundary_orbit,
    canonical,
    distance,
    extract_pair,
    flattest_point,
    homothety,
    k_control,
    normalize,
    period,
    renormalize,
)
from .errors import (
    CombinatoricsError,
    ConfigurationError,
    NotRenormalizable,
    SolverDepthError,
    StepError,
)
from .numerics import (
    DEFAULT_BITS,
    FitResult,
    expand_digits,
    fit_loglinear,
    fit_semilog,
    precision,
    to_decimal,
)

GOLDEN_TARGET = 31

log = logging.getLogger(__name__)


# -- configuration ---------------------------------------------------------


@dataclass
class FamilyConfig:
    family: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_value(cls, value) -> "FamilyConfig":
        if isinstance(value, FamilyConfig):
            return value
        if isinstance(value, str):
            return cls(value, {})
        if isinstance(value, dict) and "family" in value:
            return cls(value["family"], {k: str(v) for k, v in dict(value.get("params", {})).items()})
        raise ConfigurationError(f"bad family spec {value!r}")


def read_config_dict(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    return data


def default_families() -> list:
    return [FamilyConfig("arnold"), FamilyConfig("two_harmonic", {"beta": "0.1"})]


@dataclass
class ExperimentConfig:
    precision_bits: int = DEFAULT_BITS
    grid_size: int = 257
    depth: int = 16
    max_iterations: int = 2**21
    families: list = field(default_factory=default_families)
    target_digits: list | None = None
    digit_pattern: list = field(default_factory=lambda: [1])
    digit_count: int = GOLDEN_TARGET
    solve_depth: int | None = None
    levels: list | None = None
    level: int = -1
    large_digit: int = 60
    tail_digits: int = 12
    expansion_digits: list = field(default_factory=lambda: [16, 32, 64])
    out_dir: str = "."
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        return cls.from_dict(read_config_dict(path))

    def validate(self) -> None:
        if self.precision_bits < 32:
            raise ConfigurationError("precision_bits must be at least 32")
        if self.grid_size < 3:
            raise ConfigurationError("grid_size must be at least 3")
        if self.depth < 1:
            raise ConfigurationError("depth must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigurationError("format must be csv or json")
        if not self.families:
            raise ConfigurationError("at least one family is required")
        self.families = [FamilyConfig.from_value(f) for f in self.families]
        for a in self.target or []:
            if int(a) != a or a <= 0:
                raise ConfigurationError(f"digits must be positive integers, got {a}")

    @property
    def target(self) -> list:
        if self.target_digits:
            return [int(a) for a in self.target_digits]
        return expand_digits(self.digit_pattern, self.digit_count)

    def digest(self) -> str:
        """SHA-1 of the canonical JSON of everything but the output location."""
        data = asdict(self)
        data.pop("out_dir", None)
        data.pop("format", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(blob).hexdigest()

    def require_two(self) -> None:
        if len(self.families) < 2:
            raise ConfigurationError("this experiment compares two families")


# -- reports ---------------------------------------------------------------


def dec(x, bits: int) -> str:
    if isinstance(x, (int, str)):
        return str(x)
    if x is None:
        return ""
    return to_decimal(x, bits)


@dataclass
class ExperimentReport:
    name: str
    columns: list
    rows: list
    header: dict
    summary: dict = field(default_factory=dict)
    extra_tables: dict = field(default_factory=dict)  # name -> (columns, rows)

    def csv_body(self, table: str | None = None) -> str:
        cols, rows = (self.columns, self.rows) if table is None else self.extra_tables[table]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        writer.writerows(rows)
        return buf.getvalue()

    def as_json(self) -> dict:
        return {
            "header": self.header,
            "summary": self.summary,
            "columns": self.columns,
            "rows": self.rows,
            "tables": {k: {"columns": c, "rows": r} for k, (c, r) in self.extra_tables.items()},
        }

    def write(self, out_dir: str, fmt: str = "csv") -> list:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        if fmt == "csv":
            path = os.path.join(out_dir, f"{self.name}.csv")
            with open(path, "w") as fh:
                fh.write(self.csv_body())
            written.append(path)
            for table in self.extra_tables:
                path = os.path.join(out_dir, f"{self.name}_{table}.csv")
                with open(path, "w") as fh:
                    fh.write(self.csv_body(table))
                written.append(path)
            path = os.path.join(out_dir, f"{self.name}.header.json")
            with open(path, "w") as fh:
                json.dump({"header": self.header, "summary": self.summary}, fh, indent=2)
            written.append(path)
        else:
            path = os.path.join(out_dir, f"{self.name}.json")
            with open(path, "w") as fh:
                json.dump(self.as_json(), fh, indent=2)
            written.append(path)
        return written


def _header(name: str, cfg: ExperimentConfig, started: float, **extra) -> dict:
    out = {
        "experiment": name,
        "version": __version__,
        "precision_bits": cfg.precision_bits,
        "grid_size": cfg.grid_size,
        "depth": cfg.depth,
        "config_hash": cfg.digest(),
        "families": [asdict(f) for f in cfg.families],
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    out.update(extra)
    return out


def _fit_dict(fit: FitResult | None, bits: int):
    if fit is None:
        return None
    return {
        "slope": dec(fit.slope, bits),
        "intercept": dec(fit.intercept, bits),
        "r_squared": dec(fit.r_squared, bits),
        "n_points": fit.n_points,
    }


# -- solving with memoization ----------------------------------------------

_SOLVE_CACHE: dict = {}


def clear_solve_cache() -> None:
    _SOLVE_CACHE.clear()


def solve_family(fam: FamilyConfig, digits: Sequence[int], cfg: ExperimentConfig, depth: int | None = None) -> SolveResult:
    """``solve_parameter`` memoized on everything that determines its output."""
    digits = tuple(int(a) for a in digits)
    depth = depth if depth is not None else (cfg.solve_depth or max(1, len(digits) - 3))
    key = (
        fam.family,
        tuple(sorted((k, str(v)) for k, v in fam.params.items())),
        digits,
        depth,
        cfg.precision_bits,
        cfg.max_iterations,
    )
    if key not in _SOLVE_CACHE:
        log.info("solving %s for %d digits", fam.family, len(digits))
        _SOLVE_CACHE[key] = solve_parameter(
            fam.family, fam.params, digits, depth, cfg.precision_bits, cfg.max_iterations
        )
    return _SOLVE_CACHE[key]


def _solve_pair_of_maps(cfg: ExperimentConfig, digits: Sequence[int], needed: int):
    cfg.require_two()
    a = solve_family(cfg.families[0], digits, cfg)
    b = solve_family(cfg.families[1], digits, cfg)
    shared = common_prefix(a.state.digits, b.state.digits)
    if min(shared, common_prefix(a.state.digits, digits)) < needed:
        raise SolverDepthError(
            f"solved maps share only {shared} digits (need {needed}); re-solve with a longer target"
        )
    return a, b


# -- convergence -----------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    d0: mpfr
    d1: mpfr
    d2: mpfr
    ratio: mpfr | None
    wall_time: float


@dataclass
class ConvergeResult:
    rows: list
    fit: FitResult | None  # log d2 against log n
    semilog_fit: FitResult | None  # log d2 against n
    report: ExperimentReport


def level_distances(sa: SolveResult, sb: SolveResult, levels: Sequence[int], cfg: ExperimentConfig) -> list:
    """Rows ``(n, d0, d1, d2, ratio, seconds)`` for normalized extracted pairs."""
    rows = []
    prev = None
    with precision(cfg.precision_bits):
        for n in levels:
            t0 = time.perf_counter()
            za = normalize(extract_pair(sa.fmap, sa.state, n))
            zb = normalize(extract_pair(sb.fmap, sb.state, n))
            m = distance(za, zb, 2, "moebius", cfg.grid_size)
            ratio = m.d2 / prev if prev is not None and prev > 0 else None
            rows.append(ConvergenceRow(n, m.d0, m.d1, m.d2, ratio, time.perf_counter() - t0))
            log.info("level %d: d2 = %.6e", n, float(m.d2))
            prev = m.d2
    return rows


def run_converge(cfg: ExperimentConfig) -> ConvergeResult:
    started = time.perf_counter()
    digits = cfg.target
    sa, sb = _solve_pair_of_maps(cfg, digits, cfg.depth + 2)
    rows = level_distances(sa, sb, range(1, cfg.depth + 1), cfg)
    bits = cfg.precision_bits
    lo = math.ceil(cfg.depth / 3)
    window = [r for r in rows if lo <= r.n <= cfg.depth]
    fit = semi = None
    with precision(bits):
        if len(window) >= 2 and all(r.d2 > 0 for r in window):
            fit = fit_loglinear([r.n for r in window], [r.d2 for r in window])
            semi = fit_semilog([r.n for r in window], [r.d2 for r in window])
    table = [[str(r.n), dec(r.d0, bits), dec(r.d1, bits), dec(r.d2, bits), dec(r.ratio, bits)] for r in rows]
    header = _header(
        "converge",
        cfg,
        started,
        target_digits=list(digits),
        omegas=[dec(sa.omega, bits), dec(sb.omega, bits)],
        achieved_depths=[sa.achieved_depth, sb.achieved_depth],
        wall_times=[round(r.wall_time, 3) for r in rows],
    )
    summary = {
        "fit_window": [lo, cfg.depth],
        "loglog_fit": _fit_dict(fit, bits),
        "semilog_fit": _fit_dict(semi, bits),
        "rate": dec(gmpy2.exp(semi.slope), bits) if semi is not None else None,
    }
    report = ExperimentReport("converge", ["n", "d0", "d1", "d2", "ratio"], table, header, summary)
    return ConvergeResult(rows, fit, semi, report)


# -- Yoccoz geometry --------------------------------------------------------


@dataclass
class YoccozResult:
    a: int
    lengths: list  # |I_i| for i = 1 .. a
    r: list  # |I_i| min(i, a-i)^2 for i = 1 .. a-1
    spread: mpfr  # max r / min r
    flattest_index: int | None
    flattest_fraction: float | None
    report: ExperimentReport


def large_digit_target(cfg: ExperimentConfig, a: int) -> list:
    return [a] + [1] * cfg.tail_digits


def circle_pair(fmap: CircleMapLift) -> CommutingPair:
    """The level ``-1`` pair ``(f, T^{-1})`` in canonical orientation."""
    from .numerics import ContinuedFractionState

    state = ContinuedFractionState((1,), ((0, 1), (1, 1)), (), False)
    return extract_pair(fmap, state, -1, validate=False)


def run_yoccoz(cfg: ExperimentConfig, a: int | None = None) -> YoccozResult:
    started = time.perf_counter()
    a = int(a or cfg.large_digit)
    fam = cfg.families[0]
    digits = large_digit_target(cfg, a)
    bits = cfg.precision_bits
    if fam.family == "rotation":
        from .circle_map import rotation_map

        fmap = rotation_map(digits, bits)
        omega = fmap.omega
    else:
        sol = solve_family(fam, digits, cfg)
        if common_prefix(sol.state.digits, digits) < 2:
            raise SolverDepthError(f"solver did not reach the digits {digits[:3]}")
        fmap, omega = sol.fmap, sol.omega
    with precision(bits):
        pair = circle_pair(fmap)
        chi = period(pair)
        if chi != a:
            raise SolverDepthError(f"pair period {chi} differs from the target digit {a}")
        xs = boundary_orbit(pair)
        lengths = [xs[i - 1] - xs[i] for i in range(1, a + 1)]
        r = [lengths[i - 1] * min(i, a - i) ** 2 for i in range(1, a)]
        spread = max(r) / min(r)
        index = frac = None
        p = None
        if fmap.critical:
            fp = flattest_point(pair)
            index, p = fp.index, fp.p
            frac = index / a if index is not None else None
    table = []
    for i in range(1, a + 1):
        m = min(i, a - i)
        table.append(
            [str(i), dec(xs[i], bits), dec(lengths[i - 1], bits), str(m), dec(r[i - 1], bits) if i < a else ""]
        )
    header = _header("yoccoz", cfg, started, a=a, omega=dec(omega, bits), target_digits=digits)
    summary = {
        "max_over_min_r": dec(spread, bits),
        "flattest_point": dec(p, bits) if p is not None else None,
        "flattest_index": index,
        "flattest_fraction": frac,
    }
    report = ExperimentReport("yoccoz", ["i", "x_i", "length", "min_i_a_minus_i", "r_i"], table, header, summary)
    return YoccozResult(a, lengths, r, spread, index, frac, report)


# -- expansion -------------------------------------------------------------


def _boundary_point(fmap: CircleMapLift, a: int):
    """``eta^a(xi(0))`` of the circle-level pair, or None if the period is not ``a``."""
    pair = circle_pair(fmap)
    if period(pair) != a:
        return None
    return boundary_orbit(pair)[a]


def omega_derivative(fmap: CircleMapLift, a: int, start_exp: int = 30, tol: str = "0.05"):
    """Central difference of ``x_a`` in the translation parameter with step halving.

    Returns ``(derivative, step)``; successive estimates must agree within ``tol``.
    """
    bits = fmap.bits
    with precision(bits):
        tol = mpfr(tol)
        omega = fmap.omega
        prev = None
        floor_exp = bits // 2
        for e in range(start_exp, floor_exp):
            delta = gmpy2.mul_2exp(mpfr(1), -e)
            hi = _boundary_point(fmap.with_params(omega=omega + delta), a)
            lo = _boundary_point(fmap.with_params(omega=omega - delta), a)
            if hi is None or lo is None:
                prev = None
                continue
            est = (hi - lo) / (2 * delta)
            if prev is not None and abs(est - prev) <= tol * abs(est):
                return est, delta
            prev = est
    raise StepError(f"no step keeps the period {a} fixed with a stable difference quotient")


@dataclass
class ExpansionResult:
    a_values: list
    negative: list  # |d x_a / d omega|
    positive: list  # |d eta(x_a / 2) / d omega|
    fit: FitResult
    fit_positive: FitResult
    report: ExperimentReport


def run_expansion(cfg: ExperimentConfig, a_values: Sequence[int] | None = None) -> ExpansionResult:
    started = time.perf_counter()
    a_values = [int(a) for a in (a_values or cfg.expansion_digits)]
    fam = cfg.families[0]
    bits = cfg.precision_bits
    neg, pos, rows, omegas = [], [], [], []
    with precision(bits):
        for a in a_values:
            sol = solve_family(fam, large_digit_target(cfg, a), cfg)
            d_neg, step = omega_derivative(sol.fmap, a)
            pair = circle_pair(sol.fmap)
            x = boundary_orbit(pair)[a] / 2
            hi = circle_pair(sol.fmap.with_params(omega=sol.omega + step)).eta.value(x)
            lo = circle_pair(sol.fmap.with_params(omega=sol.omega - step)).eta.value(x)
            d_pos = (hi - lo) / (2 * step)
            neg.append(abs(d_neg))
            pos.append(abs(d_pos))
            omegas.append(dec(sol.omega, bits))
            rows.append([str(a), dec(sol.omega, bits), dec(step, bits), dec(d_neg, bits), dec(d_pos, bits)])
        fit = fit_loglinear(a_values, neg)
        fit_pos = fit_loglinear(a_values, pos)
    header = _header("expand", cfg, started, a_values=a_values, omegas=omegas)
    summary = {"exponent_negative_side": _fit_dict(fit, bits), "exponent_positive_side": _fit_dict(fit_pos, bits)}
    report = ExperimentReport(
        "expand", ["a", "omega", "step", "d_boundary_d_omega", "d_eta_d_omega"], rows, header, summary
    )
    return ExpansionResult(a_values, neg, pos, fit, fit_pos, report)


# -- synchronization -------------------------------------------------------


@dataclass
class SyncProfile:
    level: int
    a: int
    epsilon: mpfr
    h: mpfr
    p_mismatch: mpfr
    delta_x: list  # x~_i - x_i, i = 0 .. a
    delta: list  # |dx_i - dx_{i-1}|, i = 1 .. a
    l_sync: mpfr
    k_dxi: mpfr
    k_h: mpfr
    report: ExperimentReport


def _aligned(pair: CommutingPair) -> CommutingPair:
    """Rescale so that ``xi(0) = 1``."""
    pair = canonical(pair)
    if pair.xi0 == 1:
        return pair
    return homothety(pair, 1 / pair.xi0)


def run_sync(cfg: ExperimentConfig, level: int | None = None) -> SyncProfile:
    started = time.perf_counter()
    level = cfg.level if level is None else level
    digits = cfg.target_digits or large_digit_target(cfg, cfg.large_digit)
    sa, sb = _solve_pair_of_maps(cfg, digits, level + 3)
    bits = cfg.precision_bits
    with precision(bits):
        z0 = _aligned(extract_pair(sa.fmap, sa.state, level))
        z1 = _aligned(extract_pair(sb.fmap, sb.state, level))
        a0, a1 = period(z0), period(z1)
        if a0 != a1 or a0 == INFINITE_PERIOD:
            raise NotRenormalizable(f"periods differ: {a0} vs {a1}")
        a = a0
        eps = distance(z0, z1, 2, "moebius", cfg.grid_size).d2
        fp0, fp1 = flattest_point(z0), flattest_point(z1)
        h = z0.eta.value(fp0.p) - z1.eta.value(fp0.p)
        xs0, xs1 = boundary_orbit(z0), boundary_orbit(z1)
        dx = [xs1[i] - xs0[i] for i in range(a + 1)]
        dd = [abs(dx[i] - dx[i - 1]) for i in range(1, a + 1)]
        if eps == 0:
            l_sync = k_dxi = k_h = mpfr(0)
        else:
            l_sync = abs(dx[a]) / eps
            k_dxi = max(i * abs(dx[i]) for i in range(1, a // 2 + 1)) / eps
            k_h = a * a * abs(h) / eps
    rows = []
    for i in range(a + 1):
        rows.append(
            [str(i), dec(xs0[i], bits), dec(xs1[i], bits), dec(dx[i], bits), dec(dd[i - 1], bits) if i else ""]
        )
    header = _header("sync", cfg, started, level=level, a=a, target_digits=list(digits), alignment="affine xi(0)=1")
    summary = {
        "epsilon": dec(eps, bits),
        "h": dec(h, bits),
        "flattest_point_mismatch": dec(abs(fp0.p - fp1.p), bits),
        "L_sync": dec(l_sync, bits),
        "K_dxi": dec(k_dxi, bits),
        "K_h": dec(k_h, bits),
    }
    report = ExperimentReport("sync", ["i", "x_i", "x_tilde_i", "delta_x_i", "delta_i"], rows, header, summary)
    return SyncProfile(level, a, eps, h, abs(fp0.p - fp1.p), dx, dd, l_sync, k_dxi, k_h, report)


# -- Lipschitz probe -------------------------------------------------------


@dataclass
class LipschitzResult:
    levels: list
    ratios: list  # None where d2 vanishes
    max_ratio: mpfr | None
    report: ExperimentReport


def _level_range(cfg: ExperimentConfig, default: tuple) -> list:
    lo, hi = cfg.levels if cfg.levels else default
    return list(range(int(lo), int(hi) + 1))


def run_lipschitz_probe(cfg: ExperimentConfig, levels: Sequence[int] | None = None) -> LipschitzResult:
    started = time.perf_counter()
    levels = list(levels) if levels is not None else _level_range(cfg, (4, 14))
    digits = cfg.target
    sa, sb = _solve_pair_of_maps(cfg, digits, max(levels) + 3)
    bits = cfg.precision_bits
    rows, ratios = [], []
    with precision(bits):
        for n in levels:
            za = normalize(extract_pair(sa.fmap, sa.state, n))
            zb = normalize(extract_pair(sb.fmap, sb.state, n))
            before = distance(za, zb, 2, "moebius", cfg.grid_size).d2
            after = distance(renormalize(za), renormalize(zb), 2, "moebius", cfg.grid_size).d2
            ratio = after / before if before > 0 else None
            ratios.append(ratio)
            rows.append([str(n), dec(before, bits), dec(after, bits), dec(ratio, bits)])
    defined = [r for r in ratios if r is not None]
    top = max(defined) if defined else None
    header = _header("lipschitz", cfg, started, levels=levels, target_digits=list(digits))
    summary = {"max_ratio": dec(top, bits) if top is not None else None}
    report = ExperimentReport("lipschitz", ["n", "d2_n", "d2_renormalized", "ratio"], rows, header, summary)
    return LipschitzResult(levels, ratios, top, report)


# -- rigidity --------------------------------------------------------------


@dataclass
class RigidityResult:
    levels: list
    discrepancy: list
    fit: FitResult | None
    report: ExperimentReport


def ratio_discrepancy(part_f, part_g):
    """Max over cyclically adjacent atoms ``I, J`` of ``|log(|I_g|/|I_f|) - log(|J_g|/|J_f|)|``."""
    labels_g = part_g.atom_by_label()
    if set(labels_g) != {a.label for a in part_f.atoms}:
        raise CombinatoricsError(f"partitions at level {part_f.level} carry different labels")
    order_g = [a.label for a in part_g.atoms]
    order_f = [a.label for a in part_f.atoms]
    if order_f != order_g:
        raise CombinatoricsError(f"atoms at level {part_f.level} are in different circle orders")
    atoms = part_f.atoms
    logs = [gmpy2.log(labels_g[a.label].length / a.length) for a in atoms]
    best = mpfr(0)
    for i in range(len(atoms)):
        v = abs(logs[i] - logs[(i + 1) % len(atoms)])
        if v > best:
            best = v
    return best


def run_rigidity(cfg: ExperimentConfig, levels: Sequence[int] | None = None) -> RigidityResult:
    started = time.perf_counter()
    levels = list(levels) if levels is not None else _level_range(cfg, (4, 12))
    digits = cfg.target
    sa, sb = _solve_pair_of_maps(cfg, digits, max(levels) + 2)
    bits = cfg.precision_bits
    rows, values = [], []
    with precision(bits):
        for n in levels:
            pf = build_partition(sa.fmap, sa.state, n)
            pg = build_partition(sb.fmap, sb.state, n)
            v = ratio_discrepancy(pf, pg)
            values.append(v)
            rows.append([str(n), dec(v, bits)])
        fit = None
        if len(levels) >= 2 and all(v > 0 for v in values):
            fit = fit_semilog(levels, values)
        # sampled conjugacy h(f^j(0)) = g^j(0) at the last level
        n = levels[-1]
        count = sa.state.convergents[n][1] + sa.state.convergents[n + 1][1]
        of = lift_orbit(sa.fmap, count)
        og = lift_orbit(sb.fmap, count)
        order = sorted(range(count), key=lambda j: of[j][0])
        conj = []
        for k, j in enumerate(order):
            nxt = order[(k + 1) % count]
            df = of[nxt][0] - of[j][0]
            dg = og[nxt][0] - og[j][0]
            if k + 1 == count:
                df += 1
                dg += 1
            conj.append([str(j), dec(of[j][0], bits), dec(og[j][0], bits), dec(dg / df, bits)])
    header = _header("rigidity", cfg, started, levels=levels, target_digits=list(digits))
    summary = {"semilog_fit": _fit_dict(fit, bits)}
    report = ExperimentReport(
        "rigidity",
        ["n", "max_log_ratio_discrepancy"],
        rows,
        header,
        summary,
        {"conjugacy": (["j", "f_j", "g_j", "slope"], conj)},
    )
    return RigidityResult(levels, values, fit, report)


# -- renormalization orbit of a single map ---------------------------------


def run_renorm_orbit(cfg: ExperimentConfig, start_level: int = 1) -> ExperimentReport:
    """Period, K-control and Schwarzian along ``R^k`` of one extracted pair."""
    started = time.perf_counter()
    digits = cfg.target
    sol = solve_family(cfg.families[0], digits, cfg)
    bits = cfg.precision_bits
    rows = []
    with precision(bits):
        pair = normalize(extract_pair(sol.fmap, sol.state, start_level))
        for k in range(cfg.depth):
            kc = k_control(pair)
            rows.append(
                [
                    str(start_level + k),
                    str(kc.period),
                    dec(pair.xi0, bits),
                    dec(kc.minimal_k, bits),
                    dec(kc.schwarzian_max, bits),
                ]
            )
            if k + 1 < cfg.depth:
                pair = renormalize(pair)
    header = _header("renorm_orbit", cfg, started, start_level=start_level, target_digits=list(digits))
    return ExperimentReport("renorm_orbit", ["n", "period", "xi0", "minimal_k", "schwarzian_max"], rows, header)
