"""Arbitrary-precision scalars, 3-jets, continued fractions and fit helpers.

Every real quantity in the lab is a ``gmpy2.mpfr``. Precision is carried by
the active gmpy2 context; :func:`precision` switches it for a block and
:func:`scalar` builds a value at an explicit precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpfr

from .errors import DomainError

DEFAULT_BITS = 212


def precision(bits: int):
    """Context manager running the enclosed block at ``bits`` of precision."""
    if bits < 2:
        raise DomainError(f"precision must be at least 2 bits, got {bits}")
    return gmpy2.context(gmpy2.get_context(), precision=int(bits))


def current_bits() -> int:
    return gmpy2.get_context().precision


def scalar(value, bits: int | None = None) -> mpfr:
    """Convert ``value`` (int, str, Fraction, float, mpfr) to an mpfr.

    Without ``bits`` the value is rounded to the active context precision.
    """
    bits = bits or current_bits()
    if isinstance(value, Fraction):
        value = gmpy2.mpq(value.numerator, value.denominator)
    return mpfr(value, bits)


def joint_bits(*values) -> int:
    """Precision for an operation mixing ``values``: the largest one present."""
    best = 0
    for v in values:
        if isinstance(v, mpfr):
            best = max(best, v.precision)
    return best or current_bits()


def ulp(x, bits: int | None = None) -> mpfr:
    """Unit in the last place of ``x`` at ``bits`` (zero maps to the smallest normal scale)."""
    bits = bits or current_bits()
    x = abs(mpfr(x))
    if x == 0:
        return mpfr(2) ** (1 - bits)
    exp = gmpy2.frexp(x)[0]
    return gmpy2.mul_2exp(mpfr(1), exp - bits)


def to_decimal(x, bits: int | None = None) -> str:
    """Decimal string that round-trips ``x`` at ``bits`` of precision."""
    bits = bits or getattr(x, "precision", None) or current_bits()
    digits = int(math.ceil(bits * math.log10(2))) + 2
    if not isinstance(x, type(mpfr(0))):
        x = mpfr(x, bits)
    if not gmpy2.is_finite(x):
        return str(x)
    if x == 0:
        return "0"
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+d}"


class Jet3:
    """A value with its first three derivatives at some evaluation point."""

    __slots__ = ("f", "d1", "d2", "d3")

    def __init__(self, f, d1, d2, d3):
        self.f = f
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3

    @classmethod
    def identity(cls, x) -> "Jet3":
        return cls(mpfr(x), mpfr(1), mpfr(0), mpfr(0))

    @classmethod
    def constant(cls, c) -> "Jet3":
        return cls(mpfr(c), mpfr(0), mpfr(0), mpfr(0))

    def as_tuple(self):
        return (self.f, self.d1, self.d2, self.d3)

    def compose(self, inner: "Jet3") -> "Jet3":
        """Jet of ``self o inner``; ``self`` must have been evaluated at ``inner.f``."""
        return jet_compose(self, inner)

    def is_affine(self) -> bool:
        return self.d2 == 0 and self.d3 == 0

    def __iter__(self):
        return iter(self.as_tuple())

    def __repr__(self):
        return f"Jet3({self.f}, {self.d1}, {self.d2}, {self.d3})"


def jet_compose(outer: Jet3, inner: Jet3) -> Jet3:
    """Faa di Bruno up to order three."""
    u1, u2, u3 = inner.d1, inner.d2, inner.d3
    g1, g2, g3 = outer.d1, outer.d2, outer.d3
    u1sq = u1 * u1
    return Jet3(
        outer.f,
        g1 * u1,
        g2 * u1sq + g1 * u2,
        g3 * u1sq * u1 + 3 * g2 * u1 * u2 + g1 * u3,
    )


# -- continued fractions ---------------------------------------------------


def gauss_map(theta):
    """``1/theta - floor(1/theta)``; exact for Fractions, rounded for mpfr."""
    if not 0 < theta < 1:
        raise DomainError(f"gauss_map needs 0 < theta < 1, got {theta}")
    if isinstance(theta, (Fraction, int)):
        inv = 1 / Fraction(theta)
        return inv - math.floor(inv)
    inv = 1 / mpfr(theta)
    return inv - gmpy2.floor(inv)


def _check_digits(digits: Sequence[int]) -> None:
    if len(digits) == 0:
        raise DomainError("continued fraction needs at least one digit")
    for a in digits:
        if int(a) != a or a <= 0:
            raise DomainError(f"continued fraction digits must be positive integers, got {a}")


def cf_to_fraction(digits: Sequence[int]) -> Fraction:
    """Exact value of ``1/(a_0 + 1/(a_1 + ...))``."""
    _check_digits(digits)
    value = Fraction(0)
    for a in reversed(digits):
        value = 1 / (a + value)
    return value


def cf_to_real(digits: Sequence[int], bits: int | None = None) -> mpfr:
    """The finite continued fraction ``[a_0, ..., a_{N-1}]`` rounded once to ``bits``."""
    return scalar(cf_to_fraction(digits), bits)


def convergents(digits: Sequence[int]) -> list[tuple[int, int]]:
    """``[(p_0, q_0), ..., (p_N, q_N)]`` with ``p_0/q_0 = 0/1`` and ``q_1 = a_0``."""
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = [(p, q)]
    for a in digits:
        p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
        out.append((p, q))
    return out


def cf_digits(value: Fraction, max_digits: int = 64) -> list[int]:
    """Digits of a rational in ``(0, 1)`` under the ``1/(a_0 + ...)`` convention."""
    if not 0 < value < 1:
        raise DomainError(f"expected a value in (0, 1), got {value}")
    digits = []
    x = Fraction(value)
    while x and len(digits) < max_digits:
        inv = 1 / x
        a = math.floor(inv)
        digits.append(a)
        x = inv - a
    return digits


def expand_digits(pattern: Sequence[int], length: int) -> list[int]:
    """Repeat ``pattern`` cyclically to ``length`` digits ([1] gives the golden mean)."""
    if not pattern:
        raise DomainError("digit pattern must be nonempty")
    return [int(pattern[i % len(pattern)]) for i in range(length)]


@dataclass(frozen=True)
class ContinuedFractionState:
    """Digits, convergents and the closest-return points of a critical orbit.

    ``convergents[n] == (p_n, q_n)`` for ``n = 0 .. len(digits)`` and
    ``closest_return_points[n] == f^{q_n}(0) - p_n`` on the lift.
    """

    digits: tuple
    convergents: tuple
    closest_return_points: tuple
    truncated: bool = False

    @property
    def q(self) -> list[int]:
        return [q for _, q in self.convergents]

    @property
    def p(self) -> list[int]:
        return [p for p, _ in self.convergents]

    def level_data(self, n: int) -> tuple[int, int]:
        """``(p_n, q_n)`` with the convention ``(p_{-1}, q_{-1}) = (1, 0)``."""
        if n == -1:
            return (1, 0)
        return self.convergents[n]


# -- fits and grids --------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: mpfr
    intercept: mpfr
    r_squared: mpfr
    n_points: int

    def as_dict(self) -> dict:
        return {
            "slope": to_decimal(self.slope),
            "intercept": to_decimal(self.intercept),
            "r_squared": to_decimal(self.r_squared),
            "n_points": self.n_points,
        }


def fit_loglinear(xs: Sequence, ys: Sequence) -> FitResult:
    """Least-squares line through ``(log x_i, log y_i)``, accumulated in index order."""
    if len(xs) != len(ys):
        raise DomainError(f"length mismatch: {len(xs)} x values, {len(ys)} y values")
    for v in list(xs) + list(ys):
        if not v > 0:
            raise DomainError(f"log-linear fit needs positive data, got {v}")
    return _linear_fit([gmpy2.log(mpfr(x)) for x in xs], [gmpy2.log(mpfr(y)) for y in ys])


def fit_semilog(ns: Sequence, ys: Sequence) -> FitResult:
    """Least-squares line through ``(n_i, log y_i)``; ``exp(slope)`` is the decay rate."""
    if len(ns) != len(ys):
        raise DomainError(f"length mismatch: {len(ns)} x values, {len(ys)} y values")
    for v in ys:
        if not v > 0:
            raise DomainError(f"semilog fit needs positive data, got {v}")
    return _linear_fit([mpfr(n) for n in ns], [gmpy2.log(mpfr(y)) for y in ys])


def _linear_fit(lx: list, ly: list) -> FitResult:
    if len(lx) < 2:
        raise DomainError("need at least two points for a fit")
    n = len(lx)
    mx = sum(lx, mpfr(0)) / n
    my = sum(ly, mpfr(0)) / n
    sxx = mpfr(0)
    sxy = mpfr(0)
    syy = mpfr(0)
    for u, v in zip(lx, ly):
        du, dv = u - mx, v - my
        sxx += du * du
        sxy += du * dv
        syy += dv * dv
    if sxx == 0:
        raise DomainError("all x values coincide; slope undefined")
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0:
        r2 = mpfr(1)
    else:
        r2 = (sxy * sxy) / (sxx * syy)
        r2 = min(max(r2, mpfr(0)), mpfr(1))
    return FitResult(slope, intercept, r2, n)


def uniform_grid(lo, hi, size: int) -> list[mpfr]:
    """``size`` equally spaced points on ``[lo, hi]``, endpoints included."""
    if size < 2:
        raise DomainError("grid needs at least two points")
    lo, hi = mpfr(lo), mpfr(hi)
    step = (hi - lo) / (size - 1)
    return [lo + step * i for i in range(size - 1)] + [hi]


def refined_grid(lo, hi, size: int, refine: int = 9, depth_exp: int = 10) -> list[mpfr]:
    """Uniform grid plus ``refine`` geometric points within ``2^-depth_exp`` of each end.

    The refinement is relative to the interval length so the grid is
    invariant under rescaling of ``[lo, hi]``.
    """
    lo, hi = mpfr(lo), mpfr(hi)
    pts = uniform_grid(lo, hi, size)
    width = hi - lo
    for k in range(refine):
        off = width * gmpy2.mul_2exp(mpfr(1), -depth_exp - k)
        pts.append(lo + off)
        pts.append(hi - off)
    return sorted(set(pts))


def ordered_max(values: Iterable, start=None):
    """Max in index order; ``start`` is returned for an empty sequence."""
    best = start
    for v in values:
        if best is None or v > best:
            best = v
    return best
