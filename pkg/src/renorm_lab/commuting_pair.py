"""Critical commuting pairs as exact composition chains, and renormalization.

Conventions used throughout:

* A stored pair always satisfies ``xi(0) > 0 > eta(0)``: ``eta`` lives on
  ``[0, xi(0)]`` and ``xi`` on ``[eta(0), 0]``. Pairs extracted at odd levels
  arrive with the opposite orientation and are conjugated by ``x -> -x``.
* Pairs produced by this module are in case I, ``eta(xi(0)) >= 0``, so the
  period is read off the ``eta``-orbit of ``xi(0)``. A case II pair is brought
  to case I by the mirror conjugation that also swaps the two branches.
  With this convention ``pre_renormalize(extract_pair(n))`` and
  ``extract_pair(n + 1)`` are the same chains.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from .circle_map import CircleMapLift, koebe_distortion_probe  # noqa: F401  (re-exported)
from .errors import (
    DomainError,
    NotRenormalizable,
    PairValidationError,
    PeriodicOrbit,
    PreconditionError,
)
from .numerics import (
    DEFAULT_BITS,
    ContinuedFractionState,
    Jet3,
    precision,
    refined_grid,
    scalar,
    to_decimal,
    uniform_grid,
)

INFINITE_PERIOD = math.inf
FORMAT_VERSION = 1
DEFAULT_GRID = 257

MAP, SHIFT, AFFINE = "map", "shift", "affine"


def pair_tolerance(bits: int) -> mpfr:
    """``tau_pair = 2^(32 - bits)``."""
    return gmpy2.mul_2exp(mpfr(1, bits), 32 - bits)


# -- composition chains ----------------------------------------------------


def _push(steps: list, step: tuple) -> None:
    """Append ``step`` keeping the list in normal form.

    Runs of base-map applications and integer shifts are merged (they commute
    on a lift); consecutive affine steps are multiplied out and dropped when
    they reduce to the identity.
    """
    kind = step[0]
    if kind == MAP and step[2] == 0:
        return
    if kind == SHIFT and step[1] == 0:
        return
    if kind == AFFINE and step[1] == 1 and step[2] == 0:
        return
    if steps:
        last = steps[-1]
        if kind == MAP and last[0] == MAP and last[1] is step[1]:
            steps[-1] = (MAP, last[1], last[2] + step[2])
            return
        if kind == SHIFT and last[0] == SHIFT:
            steps.pop()
            _push(steps, (SHIFT, last[1] + step[1]))
            return
        if kind == MAP and last[0] == SHIFT:
            steps.pop()
            _push(steps, step)
            _push(steps, last)
            return
        if kind == AFFINE and last[0] == AFFINE:
            steps.pop()
            # merge at the operands' precision, whatever context the caller is in
            bits = max(x.precision for x in (last[1], last[2], step[1], step[2]))
            with precision(bits):
                merged = (AFFINE, last[1] * step[1], step[1] * last[2] + step[2])
            _push(steps, merged)
            return
    steps.append(step)


class CompositionChain:
    """An immutable chain of monotone primitive steps applied left to right.

    Steps are ``("map", lift, count)`` (``count`` applications of a lift),
    ``("shift", m)`` (translation by an integer) and ``("affine", alpha, beta)``
    for ``x -> alpha*x + beta``. Evaluation threads a 3-jet through the steps
    and keeps the integer part of lift values exact.
    """

    __slots__ = ("steps", "domain")

    def __init__(self, steps: Sequence[tuple] = (), domain=None):
        normal: list = []
        for s in steps:
            _push(normal, s)
        object.__setattr__(self, "steps", tuple(normal))
        object.__setattr__(self, "domain", domain)

    def __setattr__(self, name, value):
        raise AttributeError("CompositionChain is immutable")

    @classmethod
    def power(cls, fmap: CircleMapLift, count: int, shift: int = 0, domain=None):
        """``T^shift o f^count``."""
        return cls([(MAP, fmap, count), (SHIFT, shift)], domain)

    def then(self, other: "CompositionChain", domain=None) -> "CompositionChain":
        """``other o self``: apply ``self`` first."""
        return CompositionChain(self.steps + other.steps, domain if domain is not None else self.domain)

    def iterate(self, times: int, domain=None) -> "CompositionChain":
        steps: tuple = ()
        for _ in range(times):
            steps += self.steps
        return CompositionChain(steps, domain if domain is not None else self.domain)

    def conjugate_affine(self, alpha, beta=0, domain=None) -> "CompositionChain":
        """``A o self o A^{-1}`` for ``A(x) = alpha*x + beta``."""
        alpha = mpfr(alpha)
        beta = mpfr(beta)
        inv = (AFFINE, 1 / alpha, -beta / alpha) if not (alpha == -1 and beta == 0) else (AFFINE, alpha, beta)
        return CompositionChain((inv,) + self.steps + ((AFFINE, alpha, beta),), domain)

    def with_domain(self, domain) -> "CompositionChain":
        return CompositionChain(self.steps, domain)

    def post_affine(self, alpha, beta) -> "CompositionChain":
        return CompositionChain(self.steps + ((AFFINE, mpfr(alpha), mpfr(beta)),), self.domain)

    def base_evaluations(self) -> int:
        return sum(s[2] for s in self.steps if s[0] == MAP)

    def value(self, x):
        """Value only (no derivatives)."""
        v = mpfr(x)
        off = 0
        floor = gmpy2.floor
        for step in self.steps:
            kind = step[0]
            if kind == MAP:
                fval = step[1]._value
                k = floor(v)
                if k:
                    v -= k
                    off += int(k)
                for _ in range(step[2]):
                    v = fval(v)
                    k = floor(v)
                    if k:
                        v -= k
                        off += int(k)
            elif kind == SHIFT:
                off += step[1]
            else:
                alpha, beta = step[1], step[2]
                if alpha == -1 and beta == 0:
                    v, off = -v, -off
                else:
                    v = alpha * (v + off) + beta
                    off = 0
        return v + off

    def __call__(self, x):
        return self.value(x)

    def jet(self, x, start: tuple | None = None) -> Jet3:
        """3-jet at ``x``; ``start`` optionally supplies the jet of a precomposed map."""
        if start is None:
            v, d1, d2, d3 = mpfr(x), mpfr(1), mpfr(0), mpfr(0)
        else:
            v, d1, d2, d3 = start
        off = 0
        floor = gmpy2.floor
        for step in self.steps:
            kind = step[0]
            if kind == MAP:
                fjet = step[1]._jet
                k = floor(v)
                if k:
                    v -= k
                    off += int(k)
                for _ in range(step[2]):
                    f, g1, g2, g3 = fjet(v)
                    u1sq = d1 * d1
                    d3 = g3 * u1sq * d1 + 3 * g2 * d1 * d2 + g1 * d3
                    d2 = g2 * u1sq + g1 * d2
                    d1 = g1 * d1
                    k = floor(f)
                    if k:
                        f -= k
                        off += int(k)
                    v = f
            elif kind == SHIFT:
                off += step[1]
            else:
                alpha, beta = step[1], step[2]
                if alpha == -1 and beta == 0:
                    v, off = -v, -off
                else:
                    v = alpha * (v + off) + beta
                    off = 0
                d1, d2, d3 = alpha * d1, alpha * d2, alpha * d3
        return Jet3(v + off, d1, d2, d3)

    def __repr__(self):
        parts = []
        for s in self.steps:
            if s[0] == MAP:
                parts.append(f"{s[1].family}^{s[2]}")
            elif s[0] == SHIFT:
                parts.append(f"T^{s[1]}")
            else:
                parts.append(f"A({float(s[1]):.6g},{float(s[2]):.6g})")
        return "Chain[" + " -> ".join(parts) + "]"


MIRROR = (AFFINE, mpfr(-1), mpfr(0))


def _mirror_chain(chain: CompositionChain, domain) -> CompositionChain:
    return CompositionChain((MIRROR,) + chain.steps + (MIRROR,), domain)


# -- pairs -----------------------------------------------------------------


@dataclass(frozen=True)
class CommutingPair:
    """Two branches ``eta`` on ``[0, xi0]`` and ``xi`` on ``[eta0, 0]``.

    ``eta_critical``/``xi_critical`` say whether the origin is a critical point
    of the branch; it is not for the circle-level pair (``xi`` a translation)
    nor for rigid-rotation reference pairs.
    """

    eta: CompositionChain
    xi: CompositionChain
    eta0: mpfr
    xi0: mpfr
    bits: int = DEFAULT_BITS
    criticality: int = 3
    eta_critical: bool = True
    xi_critical: bool = True
    meta: dict = field(default_factory=dict, compare=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_chains(cls, eta: CompositionChain, xi: CompositionChain, bits: int, **kw) -> "CommutingPair":
        with precision(bits):
            eta0 = eta.value(0)
            xi0 = xi.value(0)
        return cls(
            eta.with_domain((mpfr(0), xi0)),
            xi.with_domain((eta0, mpfr(0))),
            eta0,
            xi0,
            bits,
            **kw,
        )

    @property
    def eta_domain(self):
        return (mpfr(0), self.xi0)

    @property
    def xi_domain(self):
        return (self.eta0, mpfr(0))

    @property
    def level(self):
        return self.meta.get("level")

    def common_value(self):
        """``eta(xi(0))`` and ``xi(eta(0))``."""
        with precision(self.bits):
            return self.eta.value(self.xi0), self.xi.value(self.eta0)

    def evaluate(self, x):
        """The piecewise map: ``xi`` on ``x < 0``, ``eta`` on ``x >= 0``."""
        with precision(self.bits):
            x = mpfr(x)
            return self.eta.value(x) if x >= 0 else self.xi.value(x)

    def _derived(self, eta, xi, **meta_changes) -> "CommutingPair":
        meta = dict(self.meta)
        meta.update(meta_changes)
        return CommutingPair.from_chains(
            eta,
            xi,
            self.bits,
            criticality=self.criticality,
            eta_critical=self.eta_critical,
            xi_critical=self.xi_critical,
            meta=meta,
        )


def mirror(pair: CommutingPair) -> CommutingPair:
    """Conjugate both branches by ``x -> -x`` keeping their labels."""
    out = pair._derived(_mirror_chain(pair.eta, None), _mirror_chain(pair.xi, None))
    return out


def swap_mirror(pair: CommutingPair) -> CommutingPair:
    """Conjugate by ``x -> -x`` and exchange the roles of the branches."""
    meta = dict(pair.meta)
    return CommutingPair.from_chains(
        _mirror_chain(pair.xi, None),
        _mirror_chain(pair.eta, None),
        pair.bits,
        criticality=pair.criticality,
        eta_critical=pair.xi_critical,
        xi_critical=pair.eta_critical,
        meta=meta,
    )


def orientation_case(pair: CommutingPair) -> int:
    """1 when ``eta(xi(0)) > 0`` (case I), 2 when it is negative (case II)."""
    c, _ = pair.common_value()
    if c == 0:
        raise PeriodicOrbit(0, "common value eta(xi(0)) is exactly 0")
    return 1 if c > 0 else 2


def canonical(pair: CommutingPair) -> CommutingPair:
    """Bring a pair to ``xi(0) > 0 > eta(0)`` and case I."""
    if pair.xi0 < 0 < pair.eta0:
        pair = mirror(pair)
    if not (pair.xi0 > 0 > pair.eta0):
        raise DomainError(f"pair straddles the origin incorrectly: eta(0)={pair.eta0}, xi(0)={pair.xi0}")
    if orientation_case(pair) == 2:
        pair = swap_mirror(pair)
    return pair


def homothety(pair: CommutingPair, alpha) -> CommutingPair:
    """``H o zeta o H^{-1}`` for ``H(x) = alpha*x`` with ``alpha > 0``."""
    with precision(pair.bits):
        alpha = mpfr(alpha)
        if not alpha > 0:
            raise DomainError("homothety factor must be positive")
        return pair._derived(pair.eta.conjugate_affine(alpha), pair.xi.conjugate_affine(alpha))


def vertical_translate(pair: CommutingPair, s) -> CommutingPair:
    """Both branches shifted up by ``s``; domains follow the new ``eta(0)``, ``xi(0)``."""
    with precision(pair.bits):
        s = mpfr(s)
        return pair._derived(pair.eta.post_affine(1, s), pair.xi.post_affine(1, s))


# -- extraction ------------------------------------------------------------


def extract_pair(
    fmap: CircleMapLift,
    cf: ContinuedFractionState,
    level: int,
    validate: bool = True,
) -> CommutingPair:
    """``(T^{-p_{n+1}} f^{q_{n+1}}, T^{-p_n} f^{q_n})`` on the lift.

    ``level = -1`` uses ``(p_{-1}, q_{-1}) = (1, 0)``: the circle map itself
    seen as a pair with ``xi`` a unit translation; its period is ``a_0``.
    For ``level >= 0`` the period is ``a_{level+1}``.
    """
    if level < -1:
        raise PreconditionError("levels start at -1")
    if len(cf.convergents) < level + 3:
        raise PreconditionError(
            f"level {level} needs digits through a_{level + 1}; have {len(cf.digits)} digits"
        )
    p_n, q_n = cf.level_data(level)
    p_next, q_next = cf.convergents[level + 1]
    critical = bool(fmap.critical)
    with precision(fmap.bits):
        eta = CompositionChain.power(fmap, q_next, -p_next)
        xi = CompositionChain.power(fmap, q_n, -p_n)
        pair = CommutingPair.from_chains(
            eta,
            xi,
            fmap.bits,
            criticality=fmap.criticality if critical else 1,
            eta_critical=critical,
            xi_critical=critical and q_n > 0,
            meta={
                "level": level,
                "family": fmap.family,
                "digits": tuple(cf.digits[level + 1 :]),
                "maps": (fmap,),
            },
        )
        pair = canonical(pair)
        if validate:
            check_pair(pair)
    return pair


# -- validation ------------------------------------------------------------


def validate(pair: CommutingPair, tau=None, samples: int = 17) -> dict:
    """Measured violation of each defining clause; empty when the pair is valid."""
    failures: dict = {}
    with precision(pair.bits):
        tau = mpfr(tau) if tau is not None else pair_tolerance(pair.bits)
        eta0, xi0 = pair.eta0, pair.xi0
        if not (xi0 > 0 > eta0):
            failures["orientation"] = f"eta(0)={to_decimal(eta0, 20)}, xi(0)={to_decimal(xi0, 20)}"
            return failures
        span = xi0 - eta0
        c1, c2 = pair.common_value()
        if abs(c1 - c2) > tau * span:
            failures["commutation"] = abs(c1 - c2)
        if c1 == 0:
            failures["commutation_nonzero"] = c1
        for name, chain, lo, hi in (("eta", pair.eta, mpfr(0), xi0), ("xi", pair.xi, eta0, mpfr(0))):
            for x in uniform_grid(lo, hi, samples + 2)[1:-1]:
                d1 = chain.jet(x).d1
                if not d1 > 0:
                    failures[f"monotone_{name}"] = d1
                    break
        for name, chain, flag, length in (
            ("eta", pair.eta, pair.eta_critical, xi0),
            ("xi", pair.xi, pair.xi_critical, -eta0),
        ):
            if not flag:
                continue
            j = chain.jet(mpfr(0))
            scale = abs(j.d3)
            if j.d3 == 0:
                failures[f"critical_{name}_d3"] = j.d3
            if abs(j.d1) > tau * scale * length * length:
                failures[f"critical_{name}_d1"] = j.d1
            if pair.criticality == 3 and abs(j.d2) > tau * scale * length:
                failures[f"critical_{name}_d2"] = j.d2
        left = pair.xi.then(pair.eta).jet(mpfr(0))
        right = pair.eta.then(pair.xi).jet(mpfr(0))
        length = min(xi0, -eta0)
        for k, a, b in ((1, left.d1, right.d1), (2, left.d2, right.d2), (3, left.d3, right.d3)):
            ref = abs(a) + abs(b) + abs(left.d3) * length ** (3 - k)
            if abs(a - b) > tau * ref:
                failures[f"derivative_match_{k}"] = abs(a - b)
    return failures


def check_pair(pair: CommutingPair, tau=None) -> CommutingPair:
    failures = validate(pair, tau)
    if failures:
        raise PairValidationError(failures)
    return pair


# -- period and renormalization --------------------------------------------


def period(pair: CommutingPair, max_iterations: int = 10**6):
    """The number ``a`` with ``eta^{a+1}(xi(0)) < 0 <= eta^a(xi(0))``, or ``inf``.

    Caches the boundary orbit ``x_i = eta^i(xi(0))`` for ``0 <= i <= a+1``.
    """
    cached = pair._cache.get("period")
    if cached is not None:
        return cached
    if orientation_case(pair) == 2:
        a = period(swap_mirror(pair), max_iterations)
        pair._cache["period"] = a
        return a
    with precision(pair.bits):
        x = pair.xi0
        orbit = [x]
        a = INFINITE_PERIOD
        for i in range(max_iterations):
            y = pair.eta.value(x)
            if y == 0:
                raise PeriodicOrbit(i + 1, "boundary orbit lands exactly on the origin")
            orbit.append(y)
            if y < 0:
                a = i
                break
            if y >= x:
                break
            x = y
    pair._cache["period"] = a
    if a != INFINITE_PERIOD:
        pair._cache["boundary_orbit"] = tuple(orbit)
    return a


def boundary_orbit(pair: CommutingPair) -> tuple:
    """``(x_0, ..., x_{a+1})`` with ``x_i = eta^i(xi(0))`` (case I pairs)."""
    a = period(pair)
    if a == INFINITE_PERIOD:
        raise NotRenormalizable("pair has infinite period")
    if "boundary_orbit" not in pair._cache:
        with precision(pair.bits):
            xs = [pair.xi0]
            for _ in range(a + 1):
                xs.append(pair.eta.value(xs[-1]))
        pair._cache["boundary_orbit"] = tuple(xs)
    return pair._cache["boundary_orbit"]


def pre_renormalize(pair: CommutingPair, canonical_form: bool = True) -> CommutingPair:
    """``(eta restricted to [0, eta^a(xi(0))], eta^a o xi)``.

    With ``canonical_form`` the result is returned in case I (mirrored and
    with branches swapped relative to the displayed formula).
    """
    pair = canonical(pair) if orientation_case(pair) == 2 or pair.xi0 < 0 else pair
    a = period(pair)
    if a == INFINITE_PERIOD:
        raise NotRenormalizable("pair has infinite period")
    meta = dict(pair.meta)
    if meta.get("level") is not None:
        meta["level"] = meta["level"] + 1
    if "digits" in meta:
        meta["digits"] = tuple(meta["digits"][1:])
    with precision(pair.bits):
        new_xi = pair.xi.then(pair.eta.iterate(a))
        out = CommutingPair.from_chains(
            pair.eta,
            new_xi,
            pair.bits,
            criticality=pair.criticality,
            eta_critical=pair.eta_critical,
            xi_critical=pair.eta_critical or pair.xi_critical,
            meta=meta,
        )
    if canonical_form:
        out = swap_mirror(out)
    return out


def normalize(pair: CommutingPair) -> CommutingPair:
    """Rescale by ``1/|I_xi|`` so that ``eta(0) = -1``."""
    with precision(pair.bits):
        length = -pair.eta0
        if length == 1:
            return pair
        return homothety(pair, 1 / length)


def renormalize(pair: CommutingPair) -> CommutingPair:
    return normalize(pre_renormalize(pair))


class DigitList(list):
    """A list of periods with a ``complete`` flag."""

    complete = True


def pair_rotation_digits(pair: CommutingPair, depth: int, max_iterations: int = 10**6) -> DigitList:
    """``[chi(zeta), chi(R zeta), ..., chi(R^{depth-1} zeta)]``."""
    out = DigitList()
    current = pair
    for k in range(depth):
        a = period(current, max_iterations)
        if a == INFINITE_PERIOD:
            out.complete = False
            break
        out.append(a)
        if k + 1 < depth:
            current = renormalize(current)
    return out


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class MobiusFrame:
    """``A(x) = a*x / (c*x + 1)`` with ``A(eta(0)) = -1``, ``A(0) = 0``, ``A(xi(0)) = 1``."""

    a: mpfr
    c: mpfr

    @classmethod
    def through(cls, eta0, xi0) -> "MobiusFrame":
        eta0, xi0 = mpfr(eta0), mpfr(xi0)
        if not (eta0 < 0 < xi0):
            raise DomainError("Mobius frame needs eta(0) < 0 < xi(0)")
        den = 2 * eta0 * xi0
        return cls((eta0 - xi0) / den, -(xi0 + eta0) / den)

    def __call__(self, x):
        x = mpfr(x)
        return self.a * x / (self.c * x + 1)

    def jet(self, x) -> Jet3:
        x = mpfr(x)
        w = 1 / (self.c * x + 1)
        w2 = w * w
        ac = self.a * self.c
        return Jet3(self.a * x * w, self.a * w2, -2 * ac * w2 * w, 6 * ac * self.c * w2 * w2)

    def inverse(self, y):
        y = mpfr(y)
        return y / (self.a - self.c * y)

    def inverse_jet(self, y) -> Jet3:
        y = mpfr(y)
        w = 1 / (self.a - self.c * y)
        w2 = w * w
        ac = self.a * self.c
        return Jet3(y * w, self.a * w2, 2 * ac * w2 * w, 6 * ac * self.c * w2 * w2)


def mobius_frame(pair: CommutingPair) -> MobiusFrame:
    with precision(pair.bits):
        return MobiusFrame.through(pair.eta0, pair.xi0)


@dataclass(frozen=True)
class MetricReport:
    d0: mpfr
    d1: mpfr
    d2: mpfr
    ratio_term: mpfr
    grid_size: int
    variant: str

    def value(self, r: int) -> mpfr:
        return (self.d0, self.d1, self.d2)[r]


def framed_jet(pair: CommutingPair, frame: MobiusFrame, y, side: int | None = None) -> Jet3:
    """Jet of ``A o zeta o A^{-1}`` at ``y`` in ``[-1, 1]``.

    ``side`` picks the branch at ``y = 0`` (the origin belongs to both);
    by default ``eta`` is used for ``y >= 0``.
    """
    start = frame.inverse_jet(y)
    use_eta = (y >= 0) if side is None else side > 0
    chain = pair.eta if use_eta else pair.xi
    inner = chain.jet(None, start.as_tuple())
    return frame.jet(inner.f).compose(inner)


def _affine_jet(pair: CommutingPair, t, side: int) -> Jet3:
    """Jet of ``eta o L_eta`` (``side > 0``) or ``xi o L_xi`` (``side < 0``)."""
    length = pair.xi0 if side > 0 else -pair.eta0
    chain = pair.eta if side > 0 else pair.xi
    return chain.jet(None, (length * t, length, mpfr(0), mpfr(0)))


def side_grids(grid_size: int):
    return refined_grid(-1, 0, grid_size), refined_grid(0, 1, grid_size)


def distance(
    pair1: CommutingPair,
    pair2: CommutingPair,
    r: int = 2,
    variant: str = "moebius",
    grid_size: int = DEFAULT_GRID,
) -> MetricReport:
    """Sampled ``d_r`` between two pairs (a lower bound of the sup norm).

    Both sides ``[-1, 0]`` and ``[0, 1]`` are sampled on the refined grid;
    the reported ``d0 <= d1 <= d2`` are all computed, ``r`` only validates input.
    """
    if r not in (0, 1, 2):
        raise DomainError("r must be 0, 1 or 2")
    if pair1.criticality != pair2.criticality:
        raise DomainError("pairs of different criticality are not comparable")
    bits = max(pair1.bits, pair2.bits)
    with precision(bits):
        ratio = abs(pair1.xi0 / pair1.eta0 - pair2.xi0 / pair2.eta0)
        if variant == "moebius":
            f1, f2 = mobius_frame(pair1), mobius_frame(pair2)

            def jets(y, side):
                return framed_jet(pair1, f1, y, side), framed_jet(pair2, f2, y, side)

        elif variant == "affine":
            n1, n2 = normalize(pair1), normalize(pair2)

            def jets(y, side):
                return _affine_jet(n1, y, side), _affine_jet(n2, y, side)

        else:
            raise DomainError(f"unknown metric variant {variant!r}")
        sup = [mpfr(0), mpfr(0), mpfr(0)]
        left, right = side_grids(grid_size)
        for side, grid in ((-1, left), (1, right)):
            for y in grid:
                j1, j2 = jets(y, side)
                for k, (u, v) in enumerate(((j1.f, j2.f), (j1.d1, j2.d1), (j1.d2, j2.d2))):
                    diff = abs(u - v)
                    if diff > sup[k]:
                        sup[k] = diff
        d0 = max(ratio, sup[0])
        d1 = max(d0, sup[1])
        d2 = max(d1, sup[2])
    return MetricReport(d0, d1, d2, ratio, grid_size, variant)


# -- K-control -------------------------------------------------------------


@dataclass(frozen=True)
class KControlReport:
    xi0: mpfr
    first_gap: mpfr  # xi(0) - eta(xi(0))
    last_gap: mpfr  # eta^{a-1}(xi(0)) - eta^a(xi(0))
    x_a: mpfr
    x_a1: mpfr
    c3_eta: mpfr
    c3_xi: mpfr
    min_deta: mpfr
    period: int
    minimal_k: mpfr
    violated: tuple
    schwarzian_max: mpfr

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = to_decimal(v, 30) if isinstance(v, mpfr) else v
        return out


def _c3_norm(chain: CompositionChain, lo, hi, grid_size: int):
    best = mpfr(0)
    for x in uniform_grid(lo, hi, grid_size):
        j = chain.jet(x)
        best = max(best, abs(j.f), abs(j.d1), abs(j.d2), abs(j.d3))
    return best


def _schwarzian_max(chain: CompositionChain, lo, hi, grid_size: int):
    best = None
    for x in uniform_grid(lo, hi, grid_size)[1:-1]:
        j = chain.jet(x)
        if j.d1 == 0:
            continue
        n = j.d2 / j.d1
        s = j.d3 / j.d1 - 3 * n * n / 2
        if best is None or s > best:
            best = s
    return best


def schwarzian_max(pair: CommutingPair, grid_size: int = 65) -> mpfr:
    """Max of ``S eta`` and ``S xi`` over interior samples away from the origin."""
    with precision(pair.bits):
        s1 = _schwarzian_max(pair.eta, mpfr(0), pair.xi0, grid_size)
        s2 = _schwarzian_max(pair.xi, pair.eta0, mpfr(0), grid_size) if pair.xi_critical else None
        vals = [s for s in (s1, s2) if s is not None]
        return max(vals) if vals else mpfr("-inf")


def k_control(pair: CommutingPair, grid_size: int = 65) -> KControlReport:
    """The seven K-control quantities of a normalized renormalizable pair."""
    pair = normalize(canonical(pair))
    a = period(pair)
    if a == INFINITE_PERIOD:
        raise NotRenormalizable("K-control needs a finite period")
    xs = boundary_orbit(pair)
    with precision(pair.bits):
        xi0 = pair.xi0
        first_gap = xs[0] - xs[1]
        last_gap = xs[a - 1] - xs[a] if a >= 1 else mpfr(0)
        x_a, x_a1 = xs[a], xs[a + 1]
        c3_eta = _c3_norm(pair.eta, mpfr(0), xi0, grid_size)
        c3_xi = _c3_norm(pair.xi, pair.eta0, mpfr(0), grid_size)
        min_deta = min(pair.eta.jet(x).d1 for x in uniform_grid(x_a, xi0, grid_size))
        inf = mpfr("inf")
        bounds = {
            "xi0": max(xi0, 1 / xi0) if xi0 > 0 else inf,
            "first_gap": 1 / first_gap if first_gap > 0 else inf,
            "last_gap": 1 / last_gap if last_gap > 0 else inf,
            "x_a": 1 / x_a if x_a > 0 else inf,
            "x_a1": -1 / x_a1 if x_a1 < 0 else inf,
            "c3": max(c3_eta, c3_xi),
            "min_deta": 1 / min_deta if min_deta > 0 else inf,
        }
        minimal = max([mpfr(1)] + list(bounds.values()))
        # a K that does not fit in a machine double counts as no K at all
        cap = gmpy2.mul_2exp(mpfr(1), 1024)
        violated = tuple(k for k, v in bounds.items() if gmpy2.is_infinite(v) or v >= cap)
        smax = schwarzian_max(pair, grid_size)
    return KControlReport(
        xi0, first_gap, last_gap, x_a, x_a1, c3_eta, c3_xi, min_deta, a, minimal, violated, smax
    )


# -- order -----------------------------------------------------------------


def order_leq(pair0: CommutingPair, pair1: CommutingPair, grid_size: int = 129, tol=None):
    """Largest ``t >= 0`` with ``zeta_0 + t <= zeta_1`` on the common domain, else None."""
    bits = max(pair0.bits, pair1.bits)
    with precision(bits):
        tol = mpfr(tol) if tol is not None else pair_tolerance(bits) * (pair1.xi0 - pair1.eta0)
        if pair0.eta0 > pair1.eta0 + tol or pair0.xi0 > pair1.xi0 + tol:
            return None
        t = None
        hi = min(pair0.xi0, pair1.xi0)
        lo = max(pair0.eta0, pair1.eta0)
        for chain0, chain1, a, b in ((pair0.eta, pair1.eta, mpfr(0), hi), (pair0.xi, pair1.xi, lo, mpfr(0))):
            if not b > a:
                continue
            for x in uniform_grid(a, b, grid_size):
                d = chain1.value(x) - chain0.value(x)
                if t is None or d < t:
                    t = d
        if t is None:
            return None
        if t < -tol:
            return None
        return max(t, mpfr(0))


# -- flattest point --------------------------------------------------------


@dataclass(frozen=True)
class FlattestPoint:
    p: mpfr
    deta: mpfr
    d2eta: mpfr
    gap: mpfr  # p - eta(p)
    index: int | None  # N with x_{N+1} <= p <= x_N


def flattest_point(pair: CommutingPair, grid_size: int = 257) -> FlattestPoint:
    """Minimizer of ``x - eta(x)`` on ``I_eta``, refined by bisection on ``D eta - 1``."""
    pair = canonical(pair)
    with precision(pair.bits):
        grid = uniform_grid(mpfr(0), pair.xi0, grid_size)
        gaps = [x - pair.eta.value(x) for x in grid]
        k = min(range(len(grid)), key=lambda i: gaps[i])
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        g_lo = pair.eta.jet(lo).d1 - 1
        g_hi = pair.eta.jet(hi).d1 - 1
        if not (g_lo >= 0 >= g_hi):
            p = grid[k]
        else:
            floor_width = gmpy2.mul_2exp(mpfr(1), 16 - pair.bits) * pair.xi0
            while hi - lo > floor_width:
                mid = (lo + hi) / 2
                if pair.eta.jet(mid).d1 - 1 > 0:
                    lo = mid
                else:
                    hi = mid
            p = (lo + hi) / 2
        j = pair.eta.jet(p)
        index = None
        a = period(pair)
        if a != INFINITE_PERIOD:
            xs = boundary_orbit(pair)
            for i in range(len(xs) - 1):
                if xs[i + 1] <= p <= xs[i]:
                    index = i
                    break
        gap = p - j.f
    return FlattestPoint(p, j.d1, j.d2, gap, index)


# -- serialization ---------------------------------------------------------


def _maps_of(pair: CommutingPair) -> list:
    seen: list = []
    for chain in (pair.eta, pair.xi):
        for s in chain.steps:
            if s[0] == MAP and all(s[1] is not m for m in seen):
                seen.append(s[1])
    return seen


def dumps_pair(pair: CommutingPair) -> str:
    """Human-readable versioned JSON record of a pair."""
    maps = _maps_of(pair)
    bits = pair.bits

    def enc(chain):
        out = []
        for s in chain.steps:
            if s[0] == MAP:
                out.append({"op": "map", "map": next(i for i, m in enumerate(maps) if m is s[1]), "count": s[2]})
            elif s[0] == SHIFT:
                out.append({"op": "shift", "m": s[1]})
            else:
                out.append({"op": "affine", "alpha": to_decimal(s[1], bits), "beta": to_decimal(s[2], bits)})
        return out

    period_cached = pair._cache.get("period")
    record = {
        "format": "renorm_lab.pair",
        "version": FORMAT_VERSION,
        "bits": bits,
        "criticality": pair.criticality,
        "eta_critical": pair.eta_critical,
        "xi_critical": pair.xi_critical,
        "level": pair.meta.get("level"),
        "family": pair.meta.get("family"),
        "digits": list(pair.meta.get("digits", ())),
        "maps": [m.describe() for m in maps],
        "eta": enc(pair.eta),
        "xi": enc(pair.xi),
        "period": None if period_cached is None else (None if period_cached == INFINITE_PERIOD else period_cached),
    }
    return json.dumps(record, indent=2)


def loads_pair(text: str) -> CommutingPair:
    record = json.loads(text)
    if record.get("format") != "renorm_lab.pair":
        raise DomainError("not a renorm_lab pair record")
    if record.get("version") != FORMAT_VERSION:
        raise DomainError(f"unsupported pair format version {record.get('version')}")
    bits = int(record["bits"])
    with precision(bits):
        maps = [CircleMapLift(m["family"], m["params"], bits) for m in record["maps"]]

        def dec(steps):
            out = []
            for s in steps:
                if s["op"] == "map":
                    out.append((MAP, maps[s["map"]], int(s["count"])))
                elif s["op"] == "shift":
                    out.append((SHIFT, int(s["m"])))
                else:
                    out.append((AFFINE, scalar(s["alpha"], bits), scalar(s["beta"], bits)))
            return CompositionChain(out)

        pair = CommutingPair.from_chains(
            dec(record["eta"]),
            dec(record["xi"]),
            bits,
            criticality=record["criticality"],
            eta_critical=record["eta_critical"],
            xi_critical=record["xi_critical"],
            meta={
                "level": record.get("level"),
                "family": record.get("family"),
                "digits": tuple(record.get("digits", ())),
                "maps": tuple(maps),
            },
        )
    if record.get("period") is not None:
        pair._cache["period"] = int(record["period"])
    return pair
