"""One-dimensional log-concave densities, their exact isoperimetric profile and lower bounds.

For a log-concave density on the line, half-lines are extremal among all
Borel sets of a given mass, so the isoperimetric profile is

    I(a) = min(f(F^{-1}(a)), f(F^{-1}(1 - a))).

That exact value is the oracle the lower bounds below are checked against.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .delta import ModulusSpec, Truncated, Zero

__all__ = [
    "NonIntegrable",
    "NotUniformlyConvex",
    "Quadratic",
    "PowerPotential",
    "TruncatedQuadratic",
    "PiecewiseLinear",
    "potential_from_json",
    "Density1D",
    "normalize",
    "ProfilePoint",
    "exact_profile",
    "modulus_integral",
    "tail_constant",
    "tail_bound",
    "log_phi",
    "psi_inverse",
    "midpoint_bound",
    "cheeger_bound",
    "TailReport",
    "verify_tail_condition",
    "profile_rows",
    "rows_to_csv",
]

_E = math.e
_QUAD = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


class NonIntegrable(ValueError):
    pass


class NotUniformlyConvex(ValueError):
    pass


# ----------------------------------------------------------------------------
# Potentials g (density proportional to exp(-g)), minimum 0 at the origin
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Quadratic:
    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    support = (-math.inf, math.inf)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.kappa * x * x

    def centered(self):
        return self

    def to_json(self):
        return {"kind": "quadratic", "kappa": self.kappa}


@dataclass(frozen=True)
class PowerPotential:
    alpha: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0 or not self.p >= 1:
            raise ValueError("need alpha > 0 and p >= 1")

    support = (-math.inf, math.inf)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * np.abs(x) ** self.p

    def centered(self):
        return self

    def to_json(self):
        return {"kind": "power", "alpha": self.alpha, "p": self.p}


@dataclass(frozen=True)
class TruncatedQuadratic:
    """``kappa x^2`` on ``[-R, R]`` and ``+inf`` outside; ``kappa = 0`` is uniform."""

    kappa: float
    R: float

    def __post_init__(self):
        if self.kappa < 0 or not self.R > 0:
            raise ValueError("need kappa >= 0 and R > 0")

    @property
    def support(self):
        return (-self.R, self.R)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= self.R, self.kappa * x * x, np.inf)

    def centered(self):
        return self

    def to_json(self):
        return {"kind": "truncated_quadratic", "kappa": self.kappa, "R": self.R}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Convex piecewise-linear potential through ``knots``, extended linearly past the ends."""

    knots: tuple

    support = (-math.inf, math.inf)

    def __post_init__(self):
        pts = sorted((float(a), float(b)) for a, b in self.knots)
        if len(pts) < 2:
            raise ValueError("need at least two knots")
        x = np.array([a for a, _ in pts])
        if np.any(np.diff(x) <= 0):
            raise ValueError("knot abscissae must be distinct")
        slopes = np.diff([b for _, b in pts]) / np.diff(x)
        if np.any(np.diff(slopes) < -1e-12):
            raise ValueError("piecewise-linear potential is not convex")
        if not (slopes[0] < 0 < slopes[-1]):
            raise NonIntegrable("exp(-g) is not integrable: end slopes must have opposite signs")
        object.__setattr__(self, "knots", tuple(pts))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.array([a for a, _ in self.knots])
        gs = np.array([b for _, b in self.knots])
        s0 = (gs[1] - gs[0]) / (xs[1] - xs[0])
        s1 = (gs[-1] - gs[-2]) / (xs[-1] - xs[-2])
        out = np.interp(x, xs, gs)
        out = np.where(x < xs[0], gs[0] + s0 * (x - xs[0]), out)
        return np.where(x > xs[-1], gs[-1] + s1 * (x - xs[-1]), out)

    def centered(self):
        i = int(np.argmin([b for _, b in self.knots]))
        x0, g0 = self.knots[i]
        if x0 == 0 and g0 == 0:
            return self
        return PiecewiseLinear(tuple((a - x0, b - g0) for a, b in self.knots))

    def to_json(self):
        return {"kind": "piecewise_linear", "knots": [[a, b] for a, b in self.knots]}


def potential_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "quadratic":
        return Quadratic(float(obj["kappa"]))
    if kind == "power":
        return PowerPotential(float(obj["alpha"]), float(obj["p"]))
    if kind == "truncated_quadratic":
        return TruncatedQuadratic(float(obj["kappa"]), float(obj["R"]))
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(tuple(k) for k in obj["knots"]))
    raise ValueError(f"unknown density kind {kind!r}")


# ----------------------------------------------------------------------------
# Normalised density with cached cumulative masses
# ----------------------------------------------------------------------------


def _g(potential, x: float) -> float:
    return float(potential(x))


def _tail_edge(potential, side: int, tol: float) -> float:
    """Point past which the mass of exp(-g) is below ``tol``.

    Uses ``int_x^inf exp(-g) <= x / (g(x) - g(0)) * exp(-g(x))`` for convex g
    with minimum at 0.
    """
    lo, hi = potential.support
    end = hi if side > 0 else -lo
    if math.isfinite(end):
        return side * end
    x = 1.0
    while x < 1e8:
        gx = _g(potential, side * x)
        if gx > 0 and x / gx * math.exp(-gx) < tol:
            return side * x
        x *= 1.5
    raise NonIntegrable("tail envelope does not fall below tolerance")


@dataclass(frozen=True, eq=False)
class Density1D:
    potential: object
    Z: float
    nodes: np.ndarray = field(repr=False)
    left_mass: np.ndarray = field(repr=False)  # int_{-inf}^{node} f
    right_mass: np.ndarray = field(repr=False)  # int_{node}^{inf} f

    @property
    def support(self):
        return self.potential.support

    def g(self, x):
        """Potential with minimum 0 at the origin (unnormalised)."""
        return self.potential(x)

    def pdf(self, x):
        return np.exp(-self.potential(x)) / self.Z

    @property
    def max_density(self) -> float:
        return 1.0 / self.Z

    def _f(self, x: float) -> float:
        return math.exp(-_g(self.potential, x)) / self.Z

    def cdf(self, x: float) -> float:
        x = float(x)
        lo, hi = self.support
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        if x > 0:
            return 1.0 - self.sf(x)
        i = int(np.searchsorted(self.nodes, x, side="right")) - 1
        if i < 0:
            return integrate.quad(self._f, lo, x, **_QUAD)[0]
        return float(self.left_mass[i] + integrate.quad(self._f, self.nodes[i], x, **_QUAD)[0])

    def sf(self, x: float) -> float:
        x = float(x)
        lo, hi = self.support
        if x >= hi:
            return 0.0
        if x <= lo:
            return 1.0
        if x <= 0:
            return 1.0 - self.cdf(x)
        i = int(np.searchsorted(self.nodes, x, side="left"))
        if i >= len(self.nodes):
            return integrate.quad(self._f, x, hi, **_QUAD)[0]
        return float(self.right_mass[i] + integrate.quad(self._f, x, self.nodes[i], **_QUAD)[0])

    def _solve(self, fn, target: float, side: int) -> float:
        """Root of ``log fn(x) = log target`` on the left (side<0) or right half-line."""
        lo, hi = self.support
        masses = self.left_mass if side < 0 else self.right_mass
        if side < 0:
            idx = np.nonzero(masses <= target)[0]
            if len(idx):
                i = idx[-1]
                a, b = self.nodes[i], self.nodes[min(i + 1, len(self.nodes) - 1)]
            else:
                b = self.nodes[0]
                a = b - 1.0
                while math.isinf(lo) and fn(a) > target:
                    a = b + 2 * (a - b)
                a = max(a, lo)
        else:
            idx = np.nonzero(masses <= target)[0]
            if len(idx):
                i = idx[0]
                a, b = self.nodes[max(i - 1, 0)], self.nodes[i]
            else:
                a = self.nodes[-1]
                b = a + 1.0
                while math.isinf(hi) and fn(b) > target:
                    b = a + 2 * (b - a)
                b = min(b, hi)
        lt = math.log(target)

        def h(x):
            v = fn(x)
            return (math.log(v) if v > 0 else -800.0) - lt

        ha, hb = h(a), h(b)
        if ha == 0 or hb == 0 or ha * hb > 0:
            # a flat bracket only happens at roundoff level; take the closer end
            if min(abs(ha), abs(hb)) > 1e-12:
                raise ArithmeticError("quantile bracket lost")
            return float(a if abs(ha) <= abs(hb) else b)
        return float(optimize.brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))

    def quantile(self, a: float) -> float:
        """``F^{-1}(a)`` for ``a`` in (0, 1), solved to ~1e-14 relative mass."""
        if not 0 < a < 1:
            raise ValueError("quantile needs a in (0, 1)")
        if a > 0.5:
            return self.isf(1.0 - a)
        return self._solve(self.cdf, a, -1)

    def isf(self, b: float) -> float:
        """Point with upper-tail mass ``b``; accurate for tiny ``b``."""
        if not 0 < b < 1:
            raise ValueError("isf needs b in (0, 1)")
        if b > 0.5:
            return self.quantile(1.0 - b)
        return self._solve(self.sf, b, +1)

    def to_json(self):
        return self.potential.to_json()


def normalize(potential, tol: float = 1e-14, panels: int = 400) -> Density1D:
    """Normalise ``exp(-g)`` into a probability density and cache its cumulative masses."""
    potential = potential.centered()
    lo_edge = _tail_edge(potential, -1, tol)
    hi_edge = _tail_edge(potential, +1, tol)
    nodes = np.linspace(lo_edge, hi_edge, panels + 1)
    # keep 0 as a node, without near-duplicates around it
    nodes = np.union1d(nodes[np.abs(nodes) > 1e-9 * (hi_edge - lo_edge)], [0.0])

    def f(x):
        return math.exp(-_g(potential, x))

    panel = np.array([integrate.quad(f, a, b, **_QUAD)[0] for a, b in zip(nodes[:-1], nodes[1:])])
    lo, hi = potential.support
    left_tail = integrate.quad(f, lo, nodes[0], **_QUAD)[0] if math.isinf(lo) else 0.0
    right_tail = integrate.quad(f, nodes[-1], hi, **_QUAD)[0] if math.isinf(hi) else 0.0
    Z = left_tail + panel.sum() + right_tail
    if not (math.isfinite(Z) and Z > 0):
        raise NonIntegrable("normalising constant is not finite")
    left = np.concatenate([[left_tail], left_tail + np.cumsum(panel)]) / Z
    right = np.concatenate([right_tail + np.cumsum(panel[::-1])[::-1], [right_tail]]) / Z
    return Density1D(potential, Z, nodes, left, right)


@dataclass(frozen=True)
class ProfilePoint:
    a: float
    a_tilde: float
    value: float


def _tilde(a: float) -> float:
    if not 0 < a < 1:
        raise ValueError("mass must lie in (0, 1)")
    return min(a, 1.0 - a)


def exact_profile(d: Density1D, a: float) -> ProfilePoint:
    """Boundary measure of the cheaper half-line of mass ``a``."""
    at = _tilde(a)
    value = min(float(d.pdf(d.quantile(at))), float(d.pdf(d.isf(at))))
    return ProfilePoint(a, at, value)


# ----------------------------------------------------------------------------
# Bounds driven by a tail modulus: g(x) - g(0) >= delta(|x|)
# ----------------------------------------------------------------------------


def modulus_integral(delta: ModulusSpec, weight: float = 1.0, upper: float = math.inf) -> float:
    """``int_0^upper exp(-weight * delta(t)) dt``."""
    if isinstance(delta, Truncated):
        upper = min(upper, delta.cutoff)
    if delta.is_zero:
        if math.isinf(upper):
            return math.inf
        return upper

    def f(t):
        return math.exp(-weight * delta._value(t))

    # past t1 the integrand is below e^-40 and decays at least exponentially
    t1 = min(upper, delta.inverse(40.0 / weight))
    if not math.isfinite(t1):
        return math.inf
    pts = [t1 * k / 8 for k in range(1, 8)]
    head = integrate.quad(f, 0.0, t1, points=pts, **_QUAD)[0]
    tail = integrate.quad(f, t1, upper, **_QUAD)[0] if t1 < upper else 0.0
    return head + tail


def tail_constant(delta: ModulusSpec) -> tuple[float, float]:
    """``(C, M)`` with ``M = int_0^inf exp(-delta)`` and ``C = (e-1) / (2e max(delta(M), 1))``."""
    M = modulus_integral(delta)
    if math.isinf(M):
        return 0.0, M
    return (_E - 1) / (2 * _E * max(delta.value(M), 1.0)), M


def tail_bound(delta: ModulusSpec, a: float) -> ProfilePoint:
    """``C a~ gamma(log 1/a~)`` with ``gamma(t) = t / delta^{-1}(t)``.

    Lower bound on the profile of any density ``exp(-g)`` whose potential has
    its minimum at 0 and satisfies ``g(x) - g(0) >= delta(|x|)``.
    """
    at = _tilde(a)
    C, _ = tail_constant(delta)
    if C == 0:
        return ProfilePoint(a, at, 0.0)
    t = math.log(1.0 / at)
    return ProfilePoint(a, at, C * at * t / delta.inverse(t))


# ----------------------------------------------------------------------------
# Bound driven by the midpoint modulus itself
# ----------------------------------------------------------------------------


def log_phi(delta: ModulusSpec, t: float) -> float:
    """``log int_0^inf exp(t x - 2 delta(x)) dx``, computed with a shifted exponent."""
    if not delta.superlinear:
        raise NotUniformlyConvex("exp(t x - 2 delta(x)) is not integrable for every t")
    end = delta.cutoff

    def h(x):
        return t * x - 2 * delta._value(x)

    # bracket the mode, then the point where the integrand has dropped by e^-60
    grid_top = 1.0 if math.isinf(end) else end
    while math.isinf(end) and h(2 * grid_top) > h(grid_top) - 1:
        grid_top *= 2
    xs = np.linspace(0.0, grid_top, 257)
    hs = np.array([h(x) for x in xs])
    k = int(np.argmax(hs))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda x: -h(x), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, b)})
        mode = float(res.x) if -res.fun >= hs[k] else float(xs[k])
    else:
        mode = float(xs[k])
    m = h(mode)
    if math.isinf(end):
        top = max(mode, 1.0)
        while h(top) > m - 60:
            top *= 1.5
    else:
        top = end

    def f(x):
        return math.exp(h(x) - m)

    pts = [p for p in (mode,) if 0 < p < top]
    val = integrate.quad(f, 0.0, top, points=pts or None, **_QUAD)[0]
    if math.isinf(end):
        val += integrate.quad(f, top, math.inf, **_QUAD)[0]
    return m + math.log(val)


def psi_inverse(delta: ModulusSpec, s: float) -> float:
    """Solve ``t phi(t) = s`` for ``t > 0`` (``psi`` is increasing on ``(0, inf)``)."""
    if s <= 0:
        return 0.0
    ls = math.log(s)

    def f(t):
        return math.log(t) + log_phi(delta, t) - ls

    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        lo, hi = hi, 2 * hi
    if lo == 0.0:
        lo = hi
        while f(lo) > 0:
            lo /= 2
    return float(optimize.bisect(f, lo, hi, rtol=1e-12, xtol=1e-300, maxiter=400))


def midpoint_bound(delta: ModulusSpec, a: float) -> ProfilePoint:
    """``a~ psi^{-1}(1 / (2 a~))`` with ``psi(t) = t int_0^inf exp(t x - 2 delta(x)) dx``.

    ``delta`` is the midpoint modulus: ``(g(x)+g(y))/2 - g((x+y)/2) >= delta(|x-y|)``.
    """
    at = _tilde(a)
    return ProfilePoint(a, at, at * psi_inverse(delta, 1.0 / (2 * at)))


def cheeger_bound(d: Density1D, a: float) -> ProfilePoint:
    """``max f * a~``: the median density is at least half the maximum."""
    at = _tilde(a)
    return ProfilePoint(a, at, d.max_density * at)


# ----------------------------------------------------------------------------
# Certification of the hypotheses on a grid
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TailReport:
    tail_ok: np.ndarray
    tail_margin: float
    midpoint_margin: float

    @property
    def tail_holds(self) -> bool:
        return bool(np.all(self.tail_ok))

    @property
    def midpoint_holds(self) -> bool:
        return self.midpoint_margin >= 0

    def to_json(self):
        return {
            "tail_holds": self.tail_holds,
            "tail_margin": self.tail_margin,
            "midpoint_holds": self.midpoint_holds,
            "midpoint_margin": self.midpoint_margin,
        }


def _slack(*vals):
    return 1e-12 * (1.0 + max(abs(v) for v in vals))


def verify_tail_condition(
    d: Density1D,
    delta: ModulusSpec,
    grid: Sequence[float],
    midpoint_delta: ModulusSpec | None = None,
) -> TailReport:
    """Check ``g(x) - g(0) >= delta(|x|)`` per grid point, and the midpoint
    inequality with ``midpoint_delta`` (default ``delta``) over all grid pairs.

    Margins are the worst (smallest) slack; a rounding allowance of ~1e-12
    relative is granted before a point counts as failing.
    """
    xs = np.asarray(grid, dtype=float)
    g0 = float(d.g(0.0))
    gx = np.asarray(d.g(xs), dtype=float)
    dv = np.asarray(delta.value(np.abs(xs)), dtype=float)
    margins = []
    ok = np.ones(xs.shape, dtype=bool)
    for i, (x, g, v) in enumerate(zip(xs, gx, dv)):
        if math.isinf(g):
            continue
        m = (g - g0) - v
        ok[i] = m >= -_slack(g, v)
        margins.append(m)
    mdelta = midpoint_delta if midpoint_delta is not None else delta
    worst = math.inf
    fin = xs[np.isfinite(gx)]
    gfin = gx[np.isfinite(gx)]
    for i in range(len(fin)):
        for j in range(i + 1, len(fin)):
            mid = float(d.g(0.5 * (fin[i] + fin[j])))
            lhs = 0.5 * (gfin[i] + gfin[j]) - mid
            rhs = mdelta._value(abs(fin[i] - fin[j]))
            m = lhs - rhs
            if m >= -_slack(gfin[i], gfin[j], rhs):
                m = max(m, 0.0)
            worst = min(worst, m)
    tail_margin = min(margins) if margins else math.inf
    if tail_margin < 0 and bool(np.all(ok)):
        tail_margin = 0.0
    return TailReport(ok, float(tail_margin), float(worst))


# ----------------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------------

PROFILE_COLUMNS = ("a", "a_tilde", "exact", "prop1d", "propnew", "cheeger")


def profile_rows(
    d: Density1D,
    tail_delta: ModulusSpec,
    midpoint_delta: ModulusSpec | None,
    a_grid: Sequence[float],
) -> list[dict]:
    rows = []
    for a in a_grid:
        row = {
            "a": float(a),
            "a_tilde": _tilde(float(a)),
            "exact": exact_profile(d, a).value,
            "prop1d": tail_bound(tail_delta, a).value,
            "propnew": midpoint_bound(midpoint_delta, a).value if midpoint_delta is not None else math.nan,
            "cheeger": cheeger_bound(d, a).value,
        }
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict], columns: Sequence[str], header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]
                    for c in columns])
    return buf.getvalue()
