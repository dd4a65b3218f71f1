"""Functional forms of the isoperimetric inequality, checked in one dimension.

Test functions are piecewise linear with values in [0, 1], so ``|F'|`` is
piecewise constant and every integral splits into segment masses of the
density.  Given a certified profile bound ``c0 a~ log^{1/q}(1/a~)``:

* capacity:  ``int |F'| dmu >= c0 t log^{1/q}(1/t)``,
* q-capacity: ``int |F'|^q dmu >= c c0^q t log(1/t)``,
* q-log-Sobolev: ``int |F'|^q dmu >= c' c0^q Ent(F^q)``,

for ``F`` vanishing on a set of mass >= 1/2 and equal to 1 on a set of mass
>= t.  The first has an explicit constant and is asserted; for the other two
only empirical constants are reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .delta import ModulusSpec, Power, Truncated
from .oned import Density1D, tail_constant

__all__ = [
    "TestFunction1D",
    "ramp",
    "ramp_family",
    "segment_mass",
    "level_mass",
    "plateau_masses",
    "gradient_integral",
    "entropy_q",
    "certified_constants",
    "CapacityRow",
    "CapacityReport",
    "check_capacity",
    "EmpiricalConstants",
    "empirical_q_constants",
    "dyadic_levels",
]


@dataclass(frozen=True)
class TestFunction1D:
    """Piecewise-linear ``F`` through ``knots``, constant beyond the first and last knot."""

    knots: tuple

    __test__ = False  # keep pytest from collecting the class

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.knots)
        if not pts:
            raise ValueError("at least one knot is required")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knot abscissae must be strictly increasing")
        if any(not 0.0 <= p[1] <= 1.0 for p in pts):
            raise ValueError("values must lie in [0, 1]")
        object.__setattr__(self, "knots", pts)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.knots])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.knots])

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    def scaled(self, lam: float) -> "TestFunction1D":
        return TestFunction1D(tuple((x, lam * y) for x, y in self.knots))

    def pieces(self, support: tuple[float, float]):
        """``(lo, hi, F(lo), F(hi))`` covering the support, tails included."""
        lo_s, hi_s = support
        xs, ys = self.xs, self.ys
        out = []
        if lo_s < xs[0]:
            out.append((lo_s, min(xs[0], hi_s), ys[0], ys[0]))
        for (x0, y0), (x1, y1) in zip(self.knots, self.knots[1:]):
            a, b = max(x0, lo_s), min(x1, hi_s)
            if b > a:
                s = (y1 - y0) / (x1 - x0)
                out.append((a, b, y0 + s * (a - x0), y0 + s * (b - x0)))
        if hi_s > xs[-1]:
            out.append((max(xs[-1], lo_s), hi_s, ys[-1], ys[-1]))
        return out


def ramp(u: float, v: float, rising: bool = True) -> TestFunction1D:
    """0 left of ``u`` and 1 right of ``v`` (mirrored when ``rising`` is false)."""
    if not v > u:
        raise ValueError("need u < v")
    return TestFunction1D(((u, 0.0), (v, 1.0)) if rising else ((u, 1.0), (v, 0.0)))


def ramp_family(d: Density1D, count: int = 50, seed: int = 0) -> list[TestFunction1D]:
    """Ramps whose zero set has mass >= 1/2, in both orientations.

    Start levels are drawn between the median and the 1e-4 tail, widths are
    log-uniform relative to the interquartile scale.
    """
    rng = np.random.default_rng(seed)
    med = d.quantile(0.5)
    scale = d.quantile(0.75) - d.quantile(0.25)
    out = []
    for i in range(count):
        start_tail = 0.5 * 10 ** rng.uniform(-3.7, 0)  # mass beyond the start of the ramp
        width = scale * 10 ** rng.uniform(-3, 0.5)
        if i % 2 == 0:
            u = max(d.isf(start_tail), med)
            v = u + width
            if math.isfinite(d.support[1]) and v >= d.support[1]:
                v = u + 0.5 * (d.support[1] - u)
            out.append(ramp(u, v, rising=True))
        else:
            v = min(d.quantile(start_tail), med)
            u = v - width
            if math.isfinite(d.support[0]) and u <= d.support[0]:
                u = v - 0.5 * (v - d.support[0])
            out.append(ramp(u, v, rising=False))
    return out


def segment_mass(d: Density1D, a: float, b: float) -> float:
    """``mu[a, b]``, subtracting on whichever side keeps full precision."""
    if b <= a:
        return 0.0
    if b <= 0:
        return max(d.cdf(b) - d.cdf(a), 0.0)
    return max(d.sf(a) - d.sf(b), 0.0)


def level_mass(F: TestFunction1D, d: Density1D, s: float) -> float:
    """``mu{F > s}``."""
    total = 0.0
    for a, b, ya, yb in F.pieces(d.support):
        if ya > s and yb > s:
            total += segment_mass(d, a, b)
        elif ya > s or yb > s:
            c = a + (s - ya) / (yb - ya) * (b - a)
            total += segment_mass(d, a, c) if ya > s else segment_mass(d, c, b)
    return total


def plateau_masses(F: TestFunction1D, d: Density1D) -> tuple[float, float]:
    """``(mu{F = 0}, mu{F = 1})``."""
    zero = one = 0.0
    for a, b, ya, yb in F.pieces(d.support):
        if ya == yb == 0.0:
            zero += segment_mass(d, a, b)
        elif ya == yb == 1.0:
            one += segment_mass(d, a, b)
    return zero, one


def gradient_integral(F: TestFunction1D, d: Density1D, q: float = 1.0) -> float:
    """``int |F'|^q dmu``: each segment contributes ``|slope|^q`` times its mass."""
    if q < 1:
        raise ValueError("q must be >= 1")
    total = 0.0
    for (x0, y0), (x1, y1) in zip(F.knots, F.knots[1:]):
        if y1 != y0:
            total += abs((y1 - y0) / (x1 - x0)) ** q * segment_mass(d, x0, x1)
    return total


def _xlogx(v):
    return v * math.log(v) if v > 0 else 0.0


def entropy_q(F: TestFunction1D, d: Density1D, q: float) -> float:
    """``int F^q log(F^q / int F^q dmu) dmu``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    A = B = 0.0
    for a, b, ya, yb in F.pieces(d.support):
        if ya == yb:
            m = segment_mass(d, a, b)
            A += ya**q * m
            B += _xlogx(ya**q) * m
            continue
        # integrate over u in [0, 1] with x = a + u (b - a); short segments stay well scaled
        w = b - a
        opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)

        def Fq(u):
            return max(ya + (yb - ya) * u, 0.0) ** q

        A += w * integrate.quad(lambda u: Fq(u) * d._f(a + u * w), 0.0, 1.0, **opts)[0]
        B += w * integrate.quad(lambda u: _xlogx(Fq(u)) * d._f(a + u * w), 0.0, 1.0, **opts)[0]
    if not A > 0:
        raise ValueError("F vanishes almost everywhere")
    return max(B - A * math.log(A), 0.0)


def certified_constants(tail_delta: ModulusSpec) -> tuple[float, float]:
    """``(c0, q)`` with ``I(a~) >= c0 a~ log^{1/q}(1/a~)`` from a certified tail modulus.

    For ``alpha t^p`` the one-dimensional tail bound is exactly of this form
    with ``c0 = C alpha^{1/p}`` and ``q = p / (p - 1)``.  A power of degree 2
    truncated at ``R`` gives ``gamma(t) >= sqrt(kappa t)``, so ``q = 2``.
    """
    C, _ = tail_constant(tail_delta)
    if isinstance(tail_delta, Power):
        if tail_delta.p <= 1:
            raise ValueError("need p > 1 for a finite q")
        return C * tail_delta.alpha ** (1 / tail_delta.p), tail_delta.p / (tail_delta.p - 1)
    if isinstance(tail_delta, Truncated) and isinstance(tail_delta.base, Power) and tail_delta.base.p == 2:
        return C * math.sqrt(tail_delta.base.alpha), 2.0
    raise TypeError("certified constants are available for power moduli and truncated quadratics")


@dataclass(frozen=True)
class CapacityRow:
    t: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf


@dataclass(frozen=True)
class CapacityReport:
    c0: float
    q: float
    rows: tuple
    skipped: tuple

    @property
    def passed(self) -> bool:
        return all(r.lhs >= r.rhs * (1 - 1e-12) for r in self.rows)

    @property
    def min_ratio(self) -> float:
        return min((r.ratio for r in self.rows), default=math.inf)

    def to_json(self):
        return {"c0": self.c0, "q": self.q, "passed": self.passed, "min_ratio": self.min_ratio,
                "rows": [{"t": r.t, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio} for r in self.rows],
                "skipped": list(self.skipped)}


def _admissible(F: TestFunction1D, d: Density1D):
    zero, one = plateau_masses(F, d)
    if zero < 0.5 * (1 - 1e-12):
        return None, f"mu(F = 0) = {zero:.6g} < 1/2"
    if not one > 0:
        return None, "F never reaches 1 on a set of positive mass"
    return min(one, 0.5), None


def check_capacity(d: Density1D, c0: float, q: float, family: Sequence[TestFunction1D]) -> CapacityReport:
    """``int |F'| dmu >= c0 t log^{1/q}(1/t)`` with ``t = mu{F = 1}``, per member."""
    rows, skipped = [], []
    for i, F in enumerate(family):
        t, why = _admissible(F, d)
        if t is None:
            skipped.append(f"member {i}: {why}")
            continue
        rows.append(CapacityRow(t, gradient_integral(F, d, 1.0), c0 * t * math.log(1 / t) ** (1 / q)))
    return CapacityReport(c0, q, tuple(rows), tuple(skipped))


@dataclass(frozen=True)
class EmpiricalConstants:
    q_capacity: float
    log_sobolev: float
    members: int

    def to_json(self):
        return dict(self.__dict__)


def empirical_q_constants(d: Density1D, c0: float, q: float,
                          family: Sequence[TestFunction1D]) -> EmpiricalConstants:
    """Smallest observed ``c`` and ``c'`` over the admissible family members."""
    cap, ls, k = math.inf, math.inf, 0
    for F in family:
        t, _ = _admissible(F, d)
        if t is None:
            continue
        energy = gradient_integral(F, d, q)
        k += 1
        if t < 1:
            cap = min(cap, energy / (c0**q * t * math.log(1 / t)))
        ent = entropy_q(F, d, q)
        if ent > 0:
            ls = min(ls, float(energy / (c0**q * ent)))
    return EmpiricalConstants(cap, ls, k)


def dyadic_levels(F: TestFunction1D, d: Density1D, t: float | None = None) -> list[tuple[int, float, float]]:
    """Levels ``s_i`` with ``mu{F > s_i} = 2^{-i}`` for ``2^{-i}`` between ``t`` and 1/2.

    These cut ``F`` into the pieces ``max(0, min(1, (F - s_i)/(s_{i+1} - s_i)))``
    used to pass from the capacity bound to the q-capacity bound; consecutive
    levels enclose mass ``2^{-(i+1)}``.
    """
    if t is None:
        _, t = plateau_masses(F, d)
    top = level_mass(F, d, 0.0)
    out = []
    i = 1
    while 2.0**-i >= t:
        target = 2.0**-i
        if target <= top:
            if level_mass(F, d, 0.0) <= target:
                s = 0.0
            else:
                s = optimize.brentq(lambda s: level_mass(F, d, s) - target, 0.0, 1.0 - 1e-15, xtol=1e-15)
            out.append((i, s, level_mass(F, d, s)))
        i += 1
    return out
