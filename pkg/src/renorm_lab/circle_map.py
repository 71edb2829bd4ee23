"""Critical circle maps as degree-one lifts with the critical point at 0.

Orbits are iterated on the reduced coordinate ``y = x - floor(x)`` with the
integer part kept exactly, so long orbits never lose absolute precision to
the growth of the lift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
from gmpy2 import mpfr

from .errors import (
    ConfigurationError,
    DomainError,
    PeriodicOrbit,
    PrecisionExhausted,
    PreconditionError,
    RangeError,
)
from .numerics import (
    DEFAULT_BITS,
    ContinuedFractionState,
    Jet3,
    convergents,
    precision,
    refined_grid,
    scalar,
)

DEFAULT_MAX_LEVEL = 20
DEFAULT_MAX_ITERATIONS = 2**21


# -- families --------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """Closed-form lift of a one-parameter family.

    ``build(params, consts)`` returns ``(value, jet)`` where ``value(y)`` gives
    the lift at ``y`` and ``jet(y)`` the tuple ``(f, Df, D2f, D3f)``. Both
    expect ``y`` already reduced to ``[0, 1)`` and must satisfy
    ``f(y + 1) = f(y) + 1``.
    """

    name: str
    param_names: tuple
    build: Callable
    critical: bool = True
    criticality_index: int = 1
    defaults: dict = field(default_factory=dict)


FAMILIES: dict[str, FamilySpec] = {}


def register_family(spec: FamilySpec) -> None:
    FAMILIES[spec.name] = spec


def _consts():
    pi = gmpy2.const_pi()
    twopi = 2 * pi
    return {"twopi": twopi, "inv_twopi": 1 / twopi, "twopi_sq": twopi * twopi}


def _build_arnold(params, consts):
    omega = params["omega"]
    twopi, inv_twopi, twopi_sq = consts["twopi"], consts["inv_twopi"], consts["twopi_sq"]
    sin, sin_cos = gmpy2.sin, gmpy2.sin_cos

    def value(y):
        return y + omega - sin(twopi * y) * inv_twopi

    def jet(y):
        s, c = sin_cos(twopi * y)
        return (y + omega - s * inv_twopi, 1 - c, twopi * s, twopi_sq * c)

    return value, jet


def _one_minus_cos(s, c):
    # avoids the cancellation in 1 - c near the critical point
    return s * s / (1 + c) if c > 0 else 1 - c


def _build_two_harmonic(params, consts):
    omega, beta = params["omega"], params["beta"]
    twopi, inv_twopi, twopi_sq = consts["twopi"], consts["inv_twopi"], consts["twopi_sq"]
    a1 = (1 + beta) * inv_twopi
    a2 = beta * inv_twopi / 2
    b1 = 1 + beta
    sin_cos = gmpy2.sin_cos

    def value(y):
        s, c = sin_cos(twopi * y)
        return y + omega - a1 * s + a2 * (2 * s * c)

    def jet(y):
        s, c = sin_cos(twopi * y)
        s2 = 2 * s * c
        c2 = 2 * c * c - 1
        return (
            y + omega - a1 * s + a2 * s2,
            _one_minus_cos(s, c) * (1 - beta - 2 * beta * c),
            twopi * (b1 * s - 2 * beta * s2),
            twopi_sq * (b1 * c - 4 * beta * c2),
        )

    return value, jet


def _build_rotation(params, consts):
    omega = params["omega"]
    one, zero = mpfr(1), mpfr(0)

    def value(y):
        return y + omega

    def jet(y):
        return (y + omega, one, zero, zero)

    return value, jet


register_family(FamilySpec("arnold", ("omega",), _build_arnold))
register_family(
    FamilySpec("two_harmonic", ("omega", "beta"), _build_two_harmonic, defaults={"beta": "0.1"})
)
register_family(FamilySpec("rotation", ("omega",), _build_rotation, critical=False, criticality_index=0))


class CircleMapLift:
    """A member of a registered family, fixed at a working precision.

    Instances are immutable; ``value``/``jet`` act on reduced coordinates,
    :meth:`evaluate` on arbitrary real ``x``.
    """

    __slots__ = ("family", "params", "bits", "d", "critical", "_value", "_jet")

    def __init__(self, family: str, params: dict | None = None, bits: int = DEFAULT_BITS, d: int = 1):
        spec = FAMILIES.get(family)
        if spec is None:
            raise ConfigurationError(f"unknown circle map family {family!r}")
        params = dict(params or {})
        if spec.critical and d != spec.criticality_index:
            raise ConfigurationError(
                f"family {family!r} has criticality index {spec.criticality_index}, not {d}"
            )
        with precision(bits):
            merged = {}
            for name in spec.param_names:
                raw = params.pop(name, spec.defaults.get(name))
                if raw is None:
                    raise ConfigurationError(f"family {family!r} needs parameter {name!r}")
                merged[name] = scalar(raw, bits)
            if params:
                raise ConfigurationError(f"unexpected parameters for {family!r}: {sorted(params)}")
            value, jet = spec.build(merged, _consts())
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "d", d if spec.critical else 0)
        object.__setattr__(self, "critical", spec.critical)
        object.__setattr__(self, "_value", value)
        object.__setattr__(self, "_jet", jet)

    def __setattr__(self, name, value):
        raise AttributeError("CircleMapLift is immutable")

    @property
    def criticality(self) -> int:
        return 2 * self.d + 1

    @property
    def omega(self) -> mpfr:
        return self.params["omega"]

    def with_params(self, **changes) -> "CircleMapLift":
        params = dict(self.params)
        params.update(changes)
        return CircleMapLift(self.family, params, self.bits, self.d or 1)

    def value(self, y):
        """Lift at a reduced coordinate ``y``."""
        return self._value(y)

    def jet(self, y):
        """``(f, Df, D2f, D3f)`` at a reduced coordinate ``y``."""
        return self._jet(y)

    def describe(self) -> dict:
        from .numerics import to_decimal

        return {
            "family": self.family,
            "params": {k: to_decimal(v, self.bits) for k, v in self.params.items()},
            "bits": self.bits,
        }

    def __repr__(self):
        ps = ", ".join(f"{k}={float(v):.17g}" for k, v in self.params.items())
        return f"CircleMapLift({self.family}, {ps}, bits={self.bits})"


def evaluate(fmap: CircleMapLift, x) -> Jet3:
    """Value and first three derivatives of the lift at ``x``."""
    with precision(fmap.bits):
        x = mpfr(x)
        k = gmpy2.floor(x)
        f, d1, d2, d3 = fmap.jet(x - k)
        return Jet3(f + k, d1, d2, d3)


def schwarzian_of_map(fmap: CircleMapLift, x):
    """Schwarzian of the lift at a regular point (report-only diagnostic)."""
    j = evaluate(fmap, x)
    if j.d1 == 0:
        raise DomainError("Schwarzian undefined at a critical point")
    with precision(fmap.bits):
        n = j.d2 / j.d1
        return j.d3 / j.d1 - 3 * n * n / 2


# -- orbits ----------------------------------------------------------------


class ReducedOrbit:
    """Streaming orbit of a point under the lift, as ``(y, m)`` with ``x = y + m``."""

    __slots__ = ("fmap", "y", "m", "t", "hit_zero")

    def __init__(self, fmap: CircleMapLift, x0=0):
        x0 = mpfr(x0)
        k = int(gmpy2.floor(x0))
        self.fmap = fmap
        self.y = x0 - k
        self.m = k
        self.t = 0
        self.hit_zero = None

    def advance_to(self, t: int) -> None:
        """Iterate until the time index reaches ``t`` (never backwards)."""
        if t < self.t:
            raise DomainError("orbit streams forward only")
        value, floor = self.fmap._value, gmpy2.floor
        y, m = self.y, self.m
        for step in range(self.t, t):
            y = value(y)
            k = floor(y)
            if k:
                y -= k
                m += int(k)
            if y == 0 and self.hit_zero is None:
                self.hit_zero = step + 1
        self.y, self.m, self.t = y, m, t

    def offset_value(self, p: int):
        """``x_t - p`` computed without forming the large lift value."""
        return self.y + (self.m - p)


def lift_orbit(fmap: CircleMapLift, count: int, x0=0) -> list[tuple]:
    """``[(y_j, m_j)]`` for ``j < count`` with ``f^j(x0) = y_j + m_j``."""
    out = []
    with precision(fmap.bits):
        orb = ReducedOrbit(fmap, x0)
        for j in range(count):
            orb.advance_to(j)
            out.append((orb.y, orb.m))
    return out


def birkhoff_quotient(fmap: CircleMapLift, n: int):
    """``f^n(0) / n`` on the lift."""
    with precision(fmap.bits):
        orb = ReducedOrbit(fmap, 0)
        orb.advance_to(n)
        return (orb.y + orb.m) / n


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def closest_returns(
    fmap: CircleMapLift,
    max_level: int = DEFAULT_MAX_LEVEL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> ContinuedFractionState:
    """Continued-fraction digits of the rotation number from the critical orbit.

    The digit ``a_n`` is the number of times ``delta_n = f^{q_n}(0) - p_n`` can
    be added to ``delta_{n-1}`` without changing its sign, tested on the actual
    orbit points ``f^{q_{n-1} + a q_n}(0) - (p_{n-1} + a p_n)``.
    """
    with precision(fmap.bits):
        orb = ReducedOrbit(fmap, 0)
        p_prev, q_prev, sign_prev = 1, 0, -1
        p, q = 0, 1
        orb.advance_to(1)
        if orb.hit_zero is not None:
            raise PeriodicOrbit(orb.hit_zero)
        delta = orb.offset_value(0)
        if delta <= 0:
            raise PeriodicOrbit(1, "f(0) is not in (0, 1) mod 1: lift not normalised")
        digits, convs, points = [], [(0, 1)], [delta]
        truncated = False
        for _ in range(max_level):
            sign_cur = _sign(delta)
            a = 0
            last = None
            while True:
                t = q_prev + (a + 1) * q
                if t > max_iterations:
                    truncated = True
                    break
                orb.advance_to(t)
                if orb.hit_zero is not None:
                    raise PeriodicOrbit(orb.hit_zero)
                d = orb.offset_value(p_prev + (a + 1) * p)
                if d == 0:
                    raise PeriodicOrbit(t)
                if _sign(d) == sign_prev:
                    a += 1
                    last = d
                else:
                    break
            if truncated:
                break
            if a == 0:
                raise PrecisionExhausted(
                    f"closest-return recursion stalled at level {len(digits)} (orbit order lost)"
                )
            p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
            sign_prev = sign_cur
            delta = last
            digits.append(a)
            convs.append((p, q))
            points.append(delta)
        return ContinuedFractionState(tuple(digits), tuple(convs), tuple(points), truncated)


def rotation_reference_digits(theta: Fraction, max_level: int) -> list[int]:
    """Digits via the same closest-return recursion run on the exact rotation."""
    p_prev, q_prev, sign_prev = 1, 0, -1
    p, q = 0, 1
    digits = []
    for _ in range(max_level):
        delta = q * theta - p
        if delta == 0:
            break
        sign_cur = 1 if delta > 0 else -1
        a = 0
        while True:
            d = (q_prev + (a + 1) * q) * theta - (p_prev + (a + 1) * p)
            if d != 0 and (d > 0) == (sign_prev > 0):
                a += 1
            else:
                break
        if a == 0:
            break
        p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
        sign_prev = sign_cur
        digits.append(a)
    return digits


# -- dynamical partitions --------------------------------------------------


@dataclass(frozen=True)
class Atom:
    left: mpfr
    right: mpfr
    length: mpfr
    label: tuple  # ("n", j) for f^j(I_n) or ("n+1", j) for f^j(I_{n+1})


@dataclass(frozen=True)
class DynamicalPartition:
    level: int
    orbit: tuple  # circle values f^j(0), 0 <= j < q_n + q_{n+1}
    atoms: tuple  # sorted by left endpoint
    q_n: int
    q_next: int
    fmap: CircleMapLift | None = None

    def atom_by_label(self) -> dict:
        return {a.label: a for a in self.atoms}


def build_partition(fmap: CircleMapLift, cf: ContinuedFractionState, level: int) -> DynamicalPartition:
    """Atoms ``f^j(I_n)`` (``j < q_{n+1}``) and ``f^j(I_{n+1})`` (``j < q_n``)."""
    if level < 0 or len(cf.digits) < level + 1:
        raise PreconditionError(f"partition level {level} needs {level + 1} digits, have {len(cf.digits)}")
    p_n, q_n = cf.convergents[level]
    p_next, q_next = cf.convergents[level + 1]
    count = q_n + q_next
    with precision(fmap.bits):
        orbit = lift_orbit(fmap, count)
        atoms = []
        for label, span, shift, p_shift in (("n", q_next, q_n, p_n), ("n+1", q_n, q_next, p_next)):
            for j in range(span):
                y0, m0 = orbit[j]
                y1, m1 = orbit[j + shift]
                signed = (y1 - y0) + (m1 - m0 - p_shift)
                if signed > 0:
                    left, length = y0, signed
                else:
                    left, length = y1, -signed
                right = left + length
                if right >= 1:
                    right -= 1
                atoms.append(Atom(left, right, length, (label, j)))
        atoms.sort(key=lambda a: a.left)
        circle = tuple(y for y, _ in orbit)
    return DynamicalPartition(level, circle, tuple(atoms), q_n, q_next, fmap)


def partition_label_order(part: DynamicalPartition) -> list[tuple]:
    """Atom labels in circle order starting from the atom with left endpoint 0."""
    return [a.label for a in part.atoms]


def rotation_label_order(digits: Sequence[int], level: int) -> list[tuple]:
    """Labels of the rigid rotation's partition, from exact integer arithmetic."""
    convs = convergents(digits)
    if len(convs) < level + 2:
        raise PreconditionError("not enough digits for the reference rotation")
    p_big, q_big = convs[-1]
    p_n, q_n = convs[level]
    p_next, q_next = convs[level + 1]
    sign_n = 1 if level % 2 == 0 else -1

    def pos(j):
        return (j * p_big) % q_big

    entries = []
    for label, span, shift, sgn in (("n", q_next, q_n, sign_n), ("n+1", q_n, q_next, -sign_n)):
        for j in range(span):
            left = pos(j) if sgn > 0 else pos(j + shift)
            entries.append((left, (label, j)))
    entries.sort()
    return [lab for _, lab in entries]


def orbit_order_matches_rotation(part: DynamicalPartition, digits: Sequence[int]) -> bool:
    """Cyclic order of ``f^j(0)`` equals that of ``j*theta mod 1`` for the same digits."""
    convs = convergents(digits)
    p_big, q_big = convs[-1]
    count = len(part.orbit)
    if q_big < count:
        raise PreconditionError("reference convergent too short for this partition")
    ref = sorted(range(count), key=lambda j: (j * p_big) % q_big)
    got = sorted(range(count), key=lambda j: part.orbit[j])
    return ref == got


def check_tiling(part: DynamicalPartition, tol) -> bool:
    atoms = part.atoms
    total = sum((a.length for a in atoms), mpfr(0))
    if abs(total - 1) > tol:
        return False
    for a, b in zip(atoms, atoms[1:] + atoms[:1]):
        gap = b.left - a.right
        gap -= gmpy2.floor(gap + mpfr("0.5"))
        if abs(gap) > tol:
            return False
    return True


# -- real bounds -----------------------------------------------------------


@dataclass(frozen=True)
class RealBoundsReport:
    level: int
    k_adj: mpfr
    min_atom: mpfr
    k_dist: mpfr
    n_atoms: int


def _deriv_of_power(fmap: CircleMapLift, x, count: int):
    """``D f^count (x)`` by the chain rule along the orbit."""
    jet, floor = fmap._jet, gmpy2.floor
    y = x - floor(x)
    d = mpfr(1)
    for _ in range(count):
        f, d1, _, _ = jet(y)
        d *= d1
        y = f - floor(f)
    return d


def return_distortion(fmap: CircleMapLift, start, length, count: int, samples: int = 9):
    """Max ratio of ``D f^count`` over interior samples of ``[start, start+length]``."""
    with precision(fmap.bits):
        vals = []
        for i in range(1, samples + 1):
            x = start + length * i / (samples + 1)
            vals.append(abs(_deriv_of_power(fmap, x, count)))
        lo, hi = min(vals), max(vals)
        if lo == 0:
            raise PrecisionExhausted("derivative underflow while sampling distortion")
        return hi / lo


def adjacency_ratio(part: DynamicalPartition):
    """Max of ``|I|/|J|`` over cyclically adjacent atoms (both orders)."""
    atoms = part.atoms
    best = mpfr(1)
    for a, b in zip(atoms, atoms[1:] + atoms[:1]):
        r = a.length / b.length
        if r < 1:
            r = 1 / r
        if r > best:
            best = r
    return best


def real_bounds_report(part: DynamicalPartition, fmap: CircleMapLift | None = None) -> RealBoundsReport:
    fmap = fmap or part.fmap
    if fmap is None:
        raise PreconditionError("real_bounds_report needs the map that produced the partition")
    with precision(fmap.bits):
        floor_len = gmpy2.mul_2exp(mpfr(1), 8 - fmap.bits)
        min_atom = min(a.length for a in part.atoms)
        if min_atom < floor_len:
            raise PrecisionExhausted(f"atom of length {min_atom} below the precision floor")
        k_adj = adjacency_ratio(part)
        # f(I_{n+1}) runs from f(0) to f(f^{q_{n+1}}(0) - p_{n+1}); D f^{q_n - 1} on it.
        labels = part.atom_by_label()
        k_dist = mpfr(1)
        if part.q_n > 1:
            atom = labels[("n+1", 1)] if part.q_n > 1 else None
            k_dist = return_distortion(fmap, atom.left, atom.length, part.q_n - 1)
    return RealBoundsReport(part.level, k_adj, min_atom, k_dist, len(part.atoms))


def koebe_distortion_probe(fmap: CircleMapLift, part: DynamicalPartition, samples: int = 9):
    """Max derivative ratio of ``f^{q_{n+1}-1}`` over samples of ``f(I_n)``."""
    with precision(fmap.bits):
        if part.q_next <= 1:
            return mpfr(1)
        atom = part.atom_by_label()[("n", 1)]
        if atom.length < gmpy2.mul_2exp(mpfr(1), 8 - fmap.bits):
            raise PrecisionExhausted("f(I_n) too short for the working precision")
        return return_distortion(fmap, atom.left, atom.length, part.q_next - 1, samples)


# -- parameter solver ------------------------------------------------------


@dataclass(frozen=True)
class SolveResult:
    omega: mpfr
    fmap: CircleMapLift
    target_digits: tuple
    requested_depth: int
    achieved_depth: int
    bisection_steps: int
    state: ContinuedFractionState

    @property
    def verified(self) -> bool:
        return self.achieved_depth >= self.requested_depth


def _direction(fmap: CircleMapLift, targets: list[tuple[int, int]], budget: int) -> int:
    """+1 if the rotation number is below the target, -1 above, 0 undecided.

    Uses ``f^q(0) >= p  =>  rho >= p/q`` and ``f^q(0) <= p  =>  rho <= p/q``
    on the target convergents, which alternate around the target.
    """
    orb = ReducedOrbit(fmap, 0)
    for k, (p, q) in enumerate(targets):
        if q > budget:
            break
        orb.advance_to(q)
        d = orb.offset_value(p)
        want = 1 if k % 2 == 0 else -1
        if d == 0 or _sign(d) != want:
            return want
    return 0


def common_prefix(a: Sequence[int], b: Sequence[int]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def solve_parameter(
    family: str,
    fixed_params: dict | None,
    target_digits: Sequence[int],
    depth: int,
    bits: int = DEFAULT_BITS,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    bracket=("0", "1"),
) -> SolveResult:
    """Bisect the translation parameter until the orbit follows ``target_digits``."""
    target_digits = [int(a) for a in target_digits]
    if len(target_digits) < depth:
        raise PreconditionError(f"need at least {depth} target digits, got {len(target_digits)}")
    targets = convergents(target_digits)
    fixed = dict(fixed_params or {})
    fixed.pop("omega", None)
    with precision(bits):
        lo, hi = scalar(bracket[0], bits), scalar(bracket[1], bits)

        def member(w):
            return CircleMapLift(family, {**fixed, "omega": w}, bits)

        if _direction(member(lo), targets, max_iterations) < 0 or _direction(
            member(hi), targets, max_iterations
        ) > 0:
            raise RangeError(f"target digits {target_digits[:8]} not bracketed by omega in [{lo}, {hi}]")
        width_floor = gmpy2.mul_2exp(mpfr(1), 16 - bits)
        steps = 0
        mid = (lo + hi) / 2
        while hi - lo > width_floor:
            mid = (lo + hi) / 2
            steps += 1
            direction = _direction(member(mid), targets, max_iterations)
            if direction > 0:
                lo = mid
            elif direction < 0:
                hi = mid
            else:
                break
        # spot check of monotonicity at the final bracket
        if _direction(member(lo), targets, max_iterations) < 0 or _direction(
            member(hi), targets, max_iterations
        ) > 0:
            raise RangeError("rotation number is not monotone in omega on the final bracket")
        fmap = member(mid)
        try:
            state = closest_returns(fmap, max_level=len(target_digits), max_iterations=max_iterations)
            achieved = common_prefix(state.digits, target_digits)
        except PeriodicOrbit:
            state = ContinuedFractionState((), ((0, 1),), (), True)
            achieved = 0
    return SolveResult(mid, fmap, tuple(target_digits), depth, achieved, steps, state)


def rotation_map(digits: Sequence[int], bits: int = DEFAULT_BITS) -> CircleMapLift:
    """Rigid rotation reference by ``cf_to_real(digits)``."""
    from .numerics import cf_to_real

    return CircleMapLift("rotation", {"omega": cf_to_real(digits, bits)}, bits)


def monotone_check(fmap: CircleMapLift, grid_exp: int = 12, near_exp: int = 20) -> bool:
    """``Df >= 0`` on a ``2^grid_exp`` grid, zero only within ``2^-near_exp`` of integers."""
    with precision(fmap.bits):
        n = 2**grid_exp
        near = gmpy2.mul_2exp(mpfr(1), -near_exp)
        for i in range(n):
            y = mpfr(i) / n
            d1 = fmap.jet(y)[1]
            if d1 < 0:
                return False
            if d1 == 0 and min(y, 1 - y) > near:
                return False
        return True


def sample_points(lo, hi, count: int):
    return refined_grid(lo, hi, count, refine=0)
