"""Nonlinearity ``N = D log D``, its integral inverse, Schwarzian derivative
and the affine factor decomposition of a long branch."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .commuting_pair import (
    AFFINE,
    CommutingPair,
    CompositionChain,
    INFINITE_PERIOD,
    boundary_orbit,
    canonical,
    period,
)
from .errors import DomainError, NotRenormalizable
from .numerics import Jet3, current_bits, precision, uniform_grid

DEFAULT_PANELS = 2**10
FACTOR_GRID = 33


class DiffeoOnInterval:
    """An increasing map on ``[lo, hi]`` with 3-jets available everywhere.

    ``source`` is anything with a ``jet(x) -> Jet3`` method (a
    :class:`CompositionChain`, a :class:`PolynomialMap`, an inverse
    nonlinearity).
    """

    def __init__(self, source, lo, hi, check: bool = True, samples: int = 17):
        self.source = source
        self.lo = mpfr(lo)
        self.hi = mpfr(hi)
        if not self.hi > self.lo:
            raise DomainError("interval must have lo < hi")
        if check:
            for x in uniform_grid(self.lo, self.hi, samples)[1:-1]:
                if not self.jet(x).d1 > 0:
                    raise DomainError(f"map is not increasing at {x}")

    @property
    def interval(self):
        return (self.lo, self.hi)

    def jet(self, x) -> Jet3:
        return self.source.jet(x)

    def value(self, x):
        return self.jet(x).f

    def __call__(self, x):
        return self.value(x)


class PolynomialMap:
    """``sum c_k x^k`` with exact derivative jets (coefficients low to high)."""

    def __init__(self, coeffs: Sequence):
        self.coeffs = [mpfr(c) for c in coeffs]

    def jet(self, x) -> Jet3:
        x = mpfr(x)
        f = d1 = d2 = d3 = mpfr(0)
        for c in reversed(self.coeffs):
            d3 = d3 * x + 3 * d2
            d2 = d2 * x + 2 * d1
            d1 = d1 * x + f
            f = f * x + c
        return Jet3(f, d1, d2, d3)

    def compose(self, inner: "PolynomialMap") -> "PolynomialMap":
        """Coefficients of ``self o inner``."""
        out = [mpfr(0)]
        for c in reversed(self.coeffs):
            prod = [mpfr(0)] * (len(out) + len(inner.coeffs) - 1)
            for i, u in enumerate(out):
                for j, v in enumerate(inner.coeffs):
                    prod[i + j] += u * v
            prod[0] += c
            out = prod
        return PolynomialMap(out)


class JetComposite:
    """``outer o inner`` for two jet sources."""

    def __init__(self, outer, inner):
        self.outer = outer
        self.inner = inner

    def jet(self, x) -> Jet3:
        j = self.inner.jet(x)
        return self.outer.jet(j.f).compose(j)


def _jet_of(f, x) -> Jet3:
    if hasattr(f, "jet"):
        j = f.jet(x)
        return j if isinstance(j, Jet3) else Jet3(*j)
    raise DomainError(f"object {f!r} has no derivative jets")


# -- pointwise operators ---------------------------------------------------


def nonlinearity(f, x) -> mpfr:
    """``D^2 f / D f`` at ``x``."""
    j = _jet_of(f, x)
    if not j.d1 > 0:
        raise DomainError(f"nonlinearity needs Df > 0, got {j.d1}")
    return j.d2 / j.d1


def nonlinearity_derivative(f, x) -> mpfr:
    """``D(Nf) = D^3 f / D f - (D^2 f / D f)^2`` from the jet."""
    j = _jet_of(f, x)
    if not j.d1 > 0:
        raise DomainError(f"nonlinearity needs Df > 0, got {j.d1}")
    n = j.d2 / j.d1
    return j.d3 / j.d1 - n * n


def schwarzian(f, x) -> mpfr:
    """``D^3 f / D f - 3/2 (D^2 f / D f)^2``."""
    j = _jet_of(f, x)
    if j.d1 == 0:
        raise DomainError("Schwarzian is undefined at a critical point")
    n = j.d2 / j.d1
    return j.d3 / j.d1 - 3 * n * n / 2


def nonlinearity_derivative_identity_check(f, x, bits: int | None = None) -> mpfr:
    """``|D(Nf)(x) - Sf(x) - (Nf(x))^2 / 2|`` with ``D(Nf)`` by a central difference.

    The step is ``2^(-bits/3)``; jets give ``Sf`` and ``Nf`` exactly.
    """
    bits = bits or current_bits()
    x = mpfr(x)
    h = gmpy2.mul_2exp(mpfr(1), -(bits // 3))
    dn = (nonlinearity(f, x + h) - nonlinearity(f, x - h)) / (2 * h)
    n = nonlinearity(f, x)
    return abs(dn - schwarzian(f, x) - n * n / 2)


def _schwarzian_terms(f, x):
    """``Sf(x)`` and the magnitude of the two terms it is formed from."""
    j = _jet_of(f, x)
    if j.d1 == 0:
        raise DomainError("Schwarzian is undefined at a critical point")
    n = j.d2 / j.d1
    a, b = j.d3 / j.d1, 3 * n * n / 2
    return a - b, abs(a) + b


def chain_rule_residuals(f, g, x) -> tuple:
    """Residuals of ``N(f o g) = Nf o g * Dg + Ng`` and ``S(f o g) = Sf o g * Dg^2 + Sg``.

    Each residual is divided by ``2^(1-bits)`` times the magnitude of the
    terms entering both sides (for ``S`` the two terms of its definition,
    which may cancel), so it reads in units of the last place.
    """
    comp = JetComposite(f, g)
    jg = _jet_of(g, x)
    unit = gmpy2.mul_2exp(mpfr(1), 1 - current_bits())
    n_lhs = nonlinearity(comp, x)
    a, b = nonlinearity(f, jg.f) * jg.d1, nonlinearity(g, x)
    n_res = abs(n_lhs - a - b) / (unit * (abs(n_lhs) + abs(a) + abs(b)))
    s_lhs, m_lhs = _schwarzian_terms(comp, x)
    sf, m_f = _schwarzian_terms(f, jg.f)
    sg, m_g = _schwarzian_terms(g, x)
    dg2 = jg.d1 * jg.d1
    s_res = abs(s_lhs - sf * dg2 - sg) / (unit * (m_lhs + m_f * dg2 + m_g))
    return n_res, s_res


# -- inverse ---------------------------------------------------------------


class SampledFunction:
    """Piecewise-linear interpolant of uniformly spaced samples on ``[a, b]``."""

    def __init__(self, samples: Sequence, a, b):
        if len(samples) < 65:
            raise DomainError("a sampled function needs at least 65 samples")
        self.values = [mpfr(v) for v in samples]
        self.a, self.b = mpfr(a), mpfr(b)
        self.h = (self.b - self.a) / (len(self.values) - 1)

    def _cell(self, x):
        k = int(gmpy2.floor((x - self.a) / self.h))
        return min(max(k, 0), len(self.values) - 2)

    def __call__(self, x):
        x = mpfr(x)
        k = self._cell(x)
        t = (x - self.a - k * self.h) / self.h
        return self.values[k] + t * (self.values[k + 1] - self.values[k])

    def slope(self, x):
        k = self._cell(mpfr(x))
        return (self.values[k + 1] - self.values[k]) / self.h

    def integral(self, x):
        """Exact ``int_a^x`` of the interpolant."""
        x = mpfr(x)
        k = self._cell(x)
        total = mpfr(0)
        for i in range(k):
            total += (self.values[i] + self.values[i + 1]) * self.h / 2
        left = self.a + k * self.h
        return total + (self.values[k] + self(x)) * (x - left) / 2


class InverseNonlinearity:
    """``N^{-1} phi`` on ``[a, b]``: the diffeo fixing both endpoints with ``N = phi``.

    The outer integral of ``exp(int_a^s phi)`` uses composite Simpson with a
    fixed number of panels; cumulative values at panel boundaries are stored.
    The inner integral is exact for sampled input and Simpson on a twice finer
    grid for callables. Derivatives: ``DF = C exp(Phi)``, ``D^2F = DF phi``,
    ``D^3F = DF (phi^2 + phi')``.
    """

    def __init__(self, phi, a, b, panels: int = DEFAULT_PANELS):
        self.a, self.b = mpfr(a), mpfr(b)
        if not self.b > self.a:
            raise DomainError("interval must have a < b")
        if isinstance(phi, (list, tuple)):
            phi = SampledFunction(phi, self.a, self.b)
        self.phi = phi
        self.panels = panels
        self.width = (self.b - self.a) / panels
        h = self.width
        # Phi at every half-panel node
        nodes = [self.a + h * k / 2 for k in range(2 * panels + 1)]
        self._big_phi = [mpfr(0)]
        for k in range(2 * panels):
            self._big_phi.append(self._big_phi[-1] + self._inner_piece(nodes[k], nodes[k + 1]))
        exps = [gmpy2.exp(v) for v in self._big_phi]
        self._cum = [mpfr(0)]
        for k in range(panels):
            e0, em, e1 = exps[2 * k], exps[2 * k + 1], exps[2 * k + 2]
            self._cum.append(self._cum[-1] + h * (e0 + 4 * em + e1) / 6)
        self.total = self._cum[-1]
        self.scale = (self.b - self.a) / self.total

    def _inner_piece(self, lo, hi):
        if isinstance(self.phi, SampledFunction):
            return self.phi.integral(hi) - self.phi.integral(lo)
        mid = (lo + hi) / 2
        return (hi - lo) * (self.phi(lo) + 4 * self.phi(mid) + self.phi(hi)) / 6

    def _panel(self, x):
        k = int(gmpy2.floor((x - self.a) / self.width))
        return min(max(k, 0), self.panels - 1)

    def big_phi(self, x):
        """``int_a^x phi`` consistent with the stored node values."""
        x = mpfr(x)
        if isinstance(self.phi, SampledFunction):
            return self.phi.integral(x)
        half = self.width / 2
        j = int(gmpy2.floor((x - self.a) / half))
        j = min(max(j, 0), 2 * self.panels - 1)
        # the piece from node j to node j+1 is exactly the stored increment, so Phi is continuous
        return self._big_phi[j] + self._inner_piece(self.a + half * j, x)

    def _outer(self, x):
        k = self._panel(x)
        left = self.a + self.width * k
        if x == left:
            return self._cum[k]
        mid = (left + x) / 2
        e0 = gmpy2.exp(self._big_phi[2 * k])
        em = gmpy2.exp(self.big_phi(mid))
        e1 = gmpy2.exp(self.big_phi(x))
        return self._cum[k] + (x - left) * (e0 + 4 * em + e1) / 6

    def value(self, x):
        x = mpfr(x)
        if x == self.b:
            return self.b
        return self.a + self.scale * self._outer(x)

    def __call__(self, x):
        return self.value(x)

    def derivative_of_phi(self, x):
        if isinstance(self.phi, SampledFunction):
            return self.phi.slope(x)
        h = gmpy2.mul_2exp(mpfr(1), -(current_bits() // 3)) * (self.b - self.a)
        return (self.phi(x + h) - self.phi(x - h)) / (2 * h)

    def jet(self, x) -> Jet3:
        x = mpfr(x)
        phi = self.phi(x)
        d1 = self.scale * gmpy2.exp(self.big_phi(x))
        return Jet3(self.value(x), d1, d1 * phi, d1 * (phi * phi + self.derivative_of_phi(x)))


def nonlinearity_inverse(phi, a, b, panels: int = DEFAULT_PANELS) -> DiffeoOnInterval:
    """``N^{-1} phi`` as a diffeo of ``[a, b]``; ``phi`` is a callable or >= 65 samples."""
    inv = InverseNonlinearity(phi, a, b, panels)
    return DiffeoOnInterval(inv, a, b, check=False)


def round_trip_residual(phi, a, b, points: int = 33, panels: int = DEFAULT_PANELS) -> mpfr:
    """``sup |N(N^{-1} phi) - phi|`` at interior points.

    ``N`` is taken as a central difference of ``log D(N^{-1} phi)``, where
    ``D(N^{-1} phi)`` comes from the quadrature, so the check exercises the
    inner integration rather than the closed-form jet.
    """
    inv = InverseNonlinearity(phi, a, b, panels)
    h = gmpy2.mul_2exp(mpfr(1), -(current_bits() // 3)) * (inv.b - inv.a)
    worst = mpfr(0)
    for x in uniform_grid(inv.a, inv.b, points + 2)[1:-1]:
        n = (inv.big_phi(x + h) - inv.big_phi(x - h)) / (2 * h)
        worst = max(worst, abs(n - inv.phi(x)))
    return worst


def lipschitz_ratio(phi, psi, a, b, grid_size: int = 65, panels: int = DEFAULT_PANELS):
    """``d_2(N^{-1} phi, N^{-1} psi) / d_0(phi, psi)`` on a uniform grid; None if ``phi == psi``."""
    f = InverseNonlinearity(phi, a, b, panels)
    g = InverseNonlinearity(psi, a, b, panels)
    d2 = mpfr(0)
    d0 = mpfr(0)
    for x in uniform_grid(f.a, f.b, grid_size):
        jf, jg = f.jet(x), g.jet(x)
        d2 = max(d2, abs(jf.f - jg.f), abs(jf.d1 - jg.d1), abs(jf.d2 - jg.d2))
        d0 = max(d0, abs(f.phi(x) - g.phi(x)))
    if d0 == 0:
        return None
    return d2 / d0


# -- factor decomposition --------------------------------------------------


@dataclass(frozen=True)
class FactorDecomposition:
    """``f_i = A_{i+1}^{-1} o eta o A_i`` on ``[0, 1]`` for ``i = 1 .. a-1``."""

    factors: tuple  # DiffeoOnInterval on [0, 1]
    frames: tuple  # (length, left) of A_i for i = 1 .. a
    period: int
    pair: CommutingPair

    def __len__(self):
        return len(self.factors)

    def frame(self, i: int):
        return self.frames[i - 1]

    def composed(self, x):
        for f in self.factors:
            x = f.value(x)
        return x

    def reference(self, x):
        """``A_a^{-1} o eta^{a-1} o A_1`` at ``x``."""
        length1, left1 = self.frame(1)
        la, lefta = self.frame(self.period)
        y = length1 * mpfr(x) + left1
        for _ in range(self.period - 1):
            y = self.pair.eta.value(y)
        return (y - lefta) / la

    def recomposition_error(self, samples: int = 17):
        worst = mpfr(0)
        for x in uniform_grid(0, 1, samples):
            worst = max(worst, abs(self.composed(x) - self.reference(x)))
        return worst


def decompose_branch(pair: CommutingPair) -> FactorDecomposition:
    """Affine factor decomposition of ``eta`` along the boundary orbit."""
    pair = canonical(pair)
    a = period(pair)
    if a == INFINITE_PERIOD:
        raise NotRenormalizable("decomposition needs a finite period")
    xs = boundary_orbit(pair)
    with precision(pair.bits):
        frames = tuple((xs[i - 1] - xs[i], xs[i]) for i in range(1, a + 1))
        factors = []
        for i in range(1, a):
            li, ci = frames[i - 1]
            lj, cj = frames[i]
            steps = ((AFFINE, li, ci),) + pair.eta.steps + ((AFFINE, 1 / lj, -cj / lj),)
            factors.append(DiffeoOnInterval(CompositionChain(steps), 0, 1, check=False))
    return FactorDecomposition(tuple(factors), frames, a, pair)


@dataclass(frozen=True)
class NonlinearitySums:
    sum_n: mpfr  # sum_i sup |N f_i|
    sum_dn: mpfr  # sum_i sup |D(N f_i)|
    sum_diff: mpfr | None  # sum_i sup |N f_i - N g_i|
    factors: int
    grid: int


def nonlinearity_sums(
    dec: FactorDecomposition, dec2: FactorDecomposition | None = None, grid: int = FACTOR_GRID
) -> NonlinearitySums:
    """Summed sup norms of the factor nonlinearities on a uniform grid per factor."""
    if dec2 is not None and len(dec2) != len(dec):
        raise DomainError(f"factor count mismatch: {len(dec)} vs {len(dec2)}")
    bits = dec.pair.bits if dec2 is None else max(dec.pair.bits, dec2.pair.bits)
    with precision(bits):
        pts = uniform_grid(0, 1, grid)
        s_n = mpfr(0)
        s_dn = mpfr(0)
        s_diff = mpfr(0) if dec2 is not None else None
        for i, f in enumerate(dec.factors):
            sup_n = sup_dn = sup_diff = mpfr(0)
            g = dec2.factors[i] if dec2 is not None else None
            for x in pts:
                n = nonlinearity(f, x)
                sup_n = max(sup_n, abs(n))
                sup_dn = max(sup_dn, abs(nonlinearity_derivative(f, x)))
                if g is not None:
                    sup_diff = max(sup_diff, abs(n - nonlinearity(g, x)))
            s_n += sup_n
            s_dn += sup_dn
            if s_diff is not None:
                s_diff += sup_diff
    return NonlinearitySums(s_n, s_dn, s_diff, len(dec), grid)
