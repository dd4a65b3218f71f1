"""Moduli of convexity and uniform log-concavity, plus the normed spaces they live on.

A modulus is a function ``delta: [0, inf) -> [0, inf]`` with ``delta(t) / t``
non-decreasing.  Four shapes are supported: identically zero, a power
``alpha * t**p``, a tabulated piecewise-linear function, and a truncation
that jumps to ``+inf`` past a cutoff.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import gammaln

__all__ = [
    "ModulusSpec",
    "Zero",
    "Power",
    "Table",
    "Truncated",
    "convex_minorant",
    "lower_convex_hull",
    "lq_constants",
    "NormSpec",
    "LqNorm",
    "EuclideanNorm",
    "CustomNorm",
    "estimate_norm_modulus",
    "uniform_convexity_gap",
    "figiel_pisier_ratio",
    "modulus_from_json",
    "norm_from_json",
    "ModulusEstimationWarning",
]

_RATIO_RTOL = 1e-12


class ModulusEstimationWarning(UserWarning):
    pass


class ModulusSpec:
    """Base class; subclasses are frozen dataclasses."""

    #: right end of the finite domain (``inf`` when delta is finite everywhere)
    cutoff: float = math.inf

    def _value(self, t: float) -> float:
        raise NotImplementedError

    def _inverse(self, s: float) -> float:
        raise NotImplementedError

    def value(self, t):
        """delta(t); vectorised over arrays, ``inf`` past a truncation."""
        if np.ndim(t) == 0:
            t = float(t)
            if t < 0:
                raise ValueError("modulus evaluated at negative t")
            return self._value(t)
        arr = np.asarray(t, dtype=float)
        return np.array([self.value(x) for x in arr.ravel()]).reshape(arr.shape)

    __call__ = value

    def inverse(self, s):
        """Generalised inverse ``inf{t >= 0 : delta(t) >= s}`` (``inf`` if never reached)."""
        if np.ndim(s) == 0:
            s = float(s)
            if s <= 0:
                return 0.0
            return self._inverse(s)
        arr = np.asarray(s, dtype=float)
        return np.array([self.inverse(x) for x in arr.ravel()]).reshape(arr.shape)

    def scaled(self, c: float) -> "ModulusSpec":
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def superlinear(self) -> bool:
        """True when ``exp(t x - delta(x))`` is integrable on ``[0, inf)`` for every t."""
        return False

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(ModulusSpec):
    def _value(self, t):
        return 0.0

    def _inverse(self, s):
        return math.inf

    def scaled(self, c):
        return self

    @property
    def is_zero(self):
        return True

    def to_json(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class Power(ModulusSpec):
    """``alpha * t**p``.  Tail moduli may have ``p >= 1``; midpoint moduli need ``p >= 2``."""

    alpha: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Power modulus needs alpha > 0")
        if not self.p >= 1:
            raise ValueError("Power modulus needs p >= 1 so that delta(t)/t is non-decreasing")

    def _value(self, t):
        return self.alpha * t**self.p

    def _inverse(self, s):
        return (s / self.alpha) ** (1.0 / self.p)

    def scaled(self, c):
        if c == 0:
            return Zero()
        return Power(self.alpha * c, self.p)

    @property
    def superlinear(self):
        return self.p > 1

    def to_json(self):
        return {"kind": "power", "alpha": self.alpha, "p": self.p}


_EXTENSIONS = ("ratio_linear", "ratio_constant", "linear")


@dataclass(frozen=True)
class Table(ModulusSpec):
    """Piecewise-linear modulus through ``knots``.

    ``(0, 0)`` is prepended when missing.  Past the last knot the function is
    continued according to ``right_extension``:

    * ``ratio_linear`` -- ``delta(t)/t`` continues linearly with the slope of its last segment
    * ``ratio_constant`` -- ``delta(t)/t`` is frozen at its last value
    * ``linear`` -- ``delta`` continues with the slope of its last segment

    ``tail_rate`` fixes the slope of ``delta(t)/t`` in the ``ratio_linear``
    extension instead of reading it off the last two knots.
    """

    knots: tuple
    right_extension: str = "ratio_linear"
    tail_rate: float | None = None
    _t: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = [(float(a), float(b)) for a, b in self.knots]
        if not pts:
            raise ValueError("Table modulus needs at least one knot")
        if pts[0][0] > 0:
            pts.insert(0, (0.0, 0.0))
        t = np.array([a for a, _ in pts])
        v = np.array([b for _, b in pts])
        if self.right_extension not in _EXTENSIONS:
            raise ValueError(f"unknown right_extension {self.right_extension!r}")
        if self.tail_rate is not None and not self.tail_rate >= 0:
            raise ValueError("tail_rate must be non-negative")
        if t[0] != 0 or v[0] != 0:
            raise ValueError("Table modulus must start at (0, 0)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot abscissae must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("knot values must be finite and non-negative")
        if np.any(np.diff(v) < -_RATIO_RTOL * np.maximum(1.0, v[1:])):
            raise ValueError("modulus must be non-decreasing")
        ratio = v[1:] / t[1:]
        if np.any(np.diff(ratio) < -_RATIO_RTOL * np.maximum(1.0, ratio[1:])):
            raise ValueError("delta(t)/t must be non-decreasing")
        object.__setattr__(self, "knots", tuple(pts))
        object.__setattr__(self, "_t", t)
        object.__setattr__(self, "_v", v)

    # extension parameters
    def _tail(self):
        t, v = self._t, self._v
        tk, vk = t[-1], v[-1]
        rk = vk / tk if tk > 0 else 0.0
        if self.tail_rate is not None:
            rate = float(self.tail_rate)
        elif len(t) >= 3:
            r_prev = v[-2] / t[-2]
            rate = max((rk - r_prev) / (tk - t[-2]), 0.0)
        else:
            rate = 0.0
        slope = (vk - v[-2]) / (tk - t[-2]) if len(t) >= 2 else 0.0
        return tk, vk, rk, rate, slope

    def _value(self, t):
        if t <= self._t[-1]:
            return float(np.interp(t, self._t, self._v))
        tk, vk, rk, rate, slope = self._tail()
        if self.right_extension == "ratio_constant":
            return rk * t
        if self.right_extension == "linear":
            return vk + slope * (t - tk)
        return t * (rk + rate * (t - tk))

    def _inverse(self, s):
        t, v = self._t, self._v
        if s <= v[-1]:
            i = int(np.searchsorted(v, s, side="left"))
            if i == 0:
                return 0.0
            return float(t[i - 1] + (s - v[i - 1]) / (v[i] - v[i - 1]) * (t[i] - t[i - 1]))
        tk, vk, rk, rate, slope = self._tail()
        if self.right_extension == "linear":
            return tk + (s - vk) / slope if slope > 0 else math.inf
        if self.right_extension == "ratio_constant" or rate == 0:
            return s / rk if rk > 0 else math.inf
        # rate*t^2 + (rk - rate*tk)*t - s = 0, in the cancellation-free form
        b = rk - rate * tk
        disc = math.sqrt(b * b + 4 * rate * s)
        if b >= 0:
            return float(2 * s / (b + disc))
        return float((disc - b) / (2 * rate))

    def scaled(self, c):
        if c == 0:
            return Zero()
        rate = None if self.tail_rate is None else c * self.tail_rate
        return Table(tuple((a, c * b) for a, b in self.knots), self.right_extension, rate)

    @property
    def is_zero(self):
        return bool(np.all(self._v == 0)) and self.right_extension != "ratio_linear"

    @property
    def superlinear(self):
        return self.right_extension == "ratio_linear" and self._tail()[3] > 0

    def to_json(self):
        return {
            "kind": "table",
            "knots": [[a, b] for a, b in self.knots],
            "right_extension": self.right_extension,
            **({} if self.tail_rate is None else {"tail_rate": self.tail_rate}),
        }


@dataclass(frozen=True)
class Truncated(ModulusSpec):
    """Agrees with ``base`` on ``[0, cutoff]`` and is ``+inf`` beyond."""

    base: ModulusSpec
    cutoff: float

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def _value(self, t):
        if t > self.cutoff:
            return math.inf
        return self.base._value(t)

    def _inverse(self, s):
        if s <= self.base._value(self.cutoff):
            return min(self.base.inverse(s), self.cutoff)
        return float(self.cutoff)

    def scaled(self, c):
        return Truncated(self.base.scaled(c), self.cutoff)

    @property
    def superlinear(self):
        return True

    def to_json(self):
        return {"kind": "truncated", "base": self.base.to_json(), "cutoff": self.cutoff}


def modulus_from_json(obj: dict) -> ModulusSpec:
    kind = obj.get("kind")
    if kind == "zero":
        return Zero()
    if kind == "power":
        return Power(float(obj["alpha"]), float(obj["p"]))
    if kind == "table":
        return Table(tuple(tuple(k) for k in obj["knots"]), obj.get("right_extension", "ratio_linear"),
                     obj.get("tail_rate"))
    if kind == "truncated":
        return Truncated(modulus_from_json(obj["base"]), float(obj["cutoff"]))
    raise ValueError(f"unknown modulus kind {kind!r}")


def lower_convex_hull(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Lower hull of planar points (monotone chain), sorted by abscissa."""
    pts = sorted((float(a), float(b)) for a, b in points)
    hull: list[tuple[float, float]] = []
    for p in pts:
        if hull and hull[-1][0] == p[0]:
            if p[1] >= hull[-1][1]:
                continue
            hull.pop()
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point when it lies on or above the chord
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def convex_minorant(delta: ModulusSpec, t_max: float = 2.0, num: int = 513) -> ModulusSpec:
    """Greatest convex function below ``delta`` on a grid over ``[0, t_max]``.

    Powers (``p >= 1``) and zero are already convex and are returned unchanged.
    Tables are hulled over their knots plus the grid.  A straight extension is
    handled exactly by two far points on it; a superlinear extension is convex,
    so the hull leaves along a tangent onto it and then follows it.
    """
    if isinstance(delta, (Zero, Power)):
        return delta
    if isinstance(delta, Truncated):
        if isinstance(delta.base, (Zero, Power)):
            return delta
        inner = convex_minorant(delta.base, t_max=delta.cutoff, num=num)
        return Truncated(inner, delta.cutoff)
    if isinstance(delta, Table):
        tk, _, rk, rate, _ = delta._tail()
        if delta.right_extension != "ratio_linear" or rate == 0:
            # a straight tail: chords are exact, and two far points on it fix the
            # slope of the hull's linear continuation
            top = max(t_max, tk)
            far = 1e6 * max(1.0, tk)
            grid = np.union1d(np.linspace(0.0, top, num), np.append(delta._t, [tk + far, tk + 2 * far]))
            return Table(tuple(lower_convex_hull(zip(grid, delta.value(grid)))), right_extension="linear")
        # past tk delta is the convex quadratic q(t) = A t^2 + B t; hull the part up
        # to tk, then run the monotone-chain step against the curve: leave the last
        # vertex along its tangent to q, popping vertices that would make a kink
        A, B = rate, rk - rate * tk
        grid = np.union1d(np.linspace(0.0, tk, num), delta._t)
        head = lower_convex_hull(zip(grid, delta.value(grid)))

        def touch(x0, y0):
            return max(x0 + math.sqrt(max(x0 * x0 - (y0 - B * x0) / A, 0.0)), tk)

        while True:
            x0, y0 = head[-1]
            ts = touch(x0, y0)
            out = (A * ts * ts + B * ts - y0) / (ts - x0) if ts > x0 else 2 * A * x0 + B
            if len(head) >= 2:
                xp, yp = head[-2]
                if (y0 - yp) / (x0 - xp) > out:
                    head.pop()
                    continue
            break
        if ts > x0 * (1 + 1e-12):
            head.append((ts, A * ts * ts + B * ts))
        return Table(tuple(head), right_extension="ratio_linear", tail_rate=A)
    raise TypeError(f"unsupported modulus {type(delta).__name__}")


def lq_constants(q: float) -> tuple[float, float]:
    """``(p, alpha)`` with which the ``l_q`` norm is p-uniformly convex.

    The branches agree at ``q = 2``; it goes through the ``q >= 2`` branch.
    """
    if not q > 1 or math.isinf(q):
        raise ValueError("l_q is uniformly convex only for 1 < q < inf")
    if q >= 2:
        return float(q), 2.0**-q
    return 2.0, (q - 1) / 4


# ----------------------------------------------------------------------------
# Norms
# ----------------------------------------------------------------------------


class NormSpec:
    n: int
    scale: float = 1.0

    def _base(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _base_dual(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        """Norm of ``x`` along the last axis."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected vectors of dimension {self.n}, got {x.shape[-1]}")
        return self.scale * self._base(x)

    def dual(self, theta):
        """Dual norm ``sup {theta . z : ||z|| <= 1}``."""
        theta = np.asarray(theta, dtype=float)
        return self._base_dual(theta) / self.scale

    def unit_ball_volume(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class LqNorm(NormSpec):
    n: int
    q: float
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not self.q >= 1:
            raise ValueError("l_q is a norm only for q >= 1")

    def _base(self, x):
        if math.isinf(self.q):
            return np.max(np.abs(x), axis=-1)
        if self.q == 2:
            return np.sqrt(np.sum(x * x, axis=-1))
        # factor out the max coordinate so large q does not overflow
        m = np.max(np.abs(x), axis=-1)
        safe = np.where(m > 0, m, 1.0)
        return m * np.sum((np.abs(x) / safe[..., None]) ** self.q, axis=-1) ** (1.0 / self.q)

    def _base_dual(self, x):
        q = self.q
        qd = math.inf if q == 1 else (1.0 if math.isinf(q) else q / (q - 1))
        return LqNorm(self.n, qd)._base(x)

    def log_unit_ball_volume(self) -> float:
        q, n = self.q, self.n
        return n * math.log(2.0) + n * gammaln(1 + 1 / q) - gammaln(1 + n / q) - n * math.log(self.scale)

    def unit_ball_volume(self):
        return math.exp(self.log_unit_ball_volume())

    def unit_volume(self) -> "LqNorm":
        """Copy rescaled so that its unit ball has volume one."""
        base = LqNorm(self.n, self.q)
        return type(self)(**{**self._fields(), "scale": math.exp(base.log_unit_ball_volume() / self.n)})

    def _fields(self):
        return {"n": self.n, "q": self.q}

    def to_json(self):
        out = {"kind": "lq", "q": self.q, "n": self.n}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class EuclideanNorm(LqNorm):
    n: int
    q: float = field(default=2.0, init=False)
    scale: float = 1.0

    def _fields(self):
        return {"n": self.n}

    def to_json(self):
        out = {"kind": "euclidean", "n": self.n}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class CustomNorm(NormSpec):
    """User norm from a callable acting on the last axis, plus its dual."""

    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    dual_evaluator: Callable[[np.ndarray], np.ndarray]
    volume: float | None = None
    scale: float = 1.0

    def _base(self, x):
        return np.asarray(self.evaluator(x), dtype=float)

    def _base_dual(self, x):
        return np.asarray(self.dual_evaluator(x), dtype=float)

    def unit_ball_volume(self):
        if self.volume is None:
            raise ValueError("unit-ball volume not supplied for this custom norm")
        return self.volume / self.scale**self.n

    def to_json(self):
        raise TypeError("custom norms are not serialisable")


def norm_from_json(obj: dict) -> NormSpec:
    kind = obj.get("kind")
    scale = float(obj.get("scale", 1.0))
    if kind == "lq":
        return LqNorm(int(obj["n"]), float(obj["q"]), scale)
    if kind == "euclidean":
        return EuclideanNorm(int(obj["n"]), scale=scale)
    raise ValueError(f"unknown norm kind {kind!r}")


# ----------------------------------------------------------------------------
# Estimation of the modulus of convexity of a norm
# ----------------------------------------------------------------------------


def _midpoint_defect(norm: NormSpec, z: np.ndarray):
    n = norm.n
    a, b = z[:n], z[n:]
    na, nb = norm(a), norm(b)
    if na == 0 or nb == 0:
        return None
    x, y = a / na, b / nb
    return x, y, 1.0 - norm(0.5 * (x + y)), norm(x - y)


def _push_apart(norm, x, y, eps):
    """Move ``y`` away from ``x`` along the sphere until ``||x - y|| >= eps``."""
    d = norm(x - y)
    if d >= eps:
        return y
    step = 1e-12
    for _ in range(60):
        w = y + step * (y - x)
        w = w / norm(w)
        if norm(x - w) >= eps:
            return w
        step *= 2
    return None


def estimate_norm_modulus(
    norm: NormSpec,
    eps_grid: Sequence[float],
    *,
    starts: int = 8,
    penalties: Sequence[float] = (1e1, 1e3, 1e5, 1e7),
    seed: int = 0,
    safety_factor: float = 1.0,
) -> Table:
    """Estimate ``delta_V(eps) = inf {1 - ||(x+y)/2|| : ||x||,||y|| <= 1, ||x-y|| >= eps}``.

    Both points are kept on the unit sphere (where the infimum is attained) and
    the distance constraint is handled by a quadratic penalty with increasing
    weight, from several random starts, followed by a constrained polish.  Only
    feasible configurations are scored, so every value is an *upper* estimate
    of the infimum.  The estimates are then rectified so that ``delta(t)/t`` is
    non-decreasing, which keeps them upper estimates.

    Bounds built from the result are conservative only after shrinking it by
    ``safety_factor < 1``.
    """
    eps = np.unique(np.asarray(eps_grid, dtype=float))
    if np.any(eps < 0) or np.any(eps > 2):
        raise ValueError("eps must lie in [0, 2]")
    if not 0 < safety_factor <= 1:
        raise ValueError("safety_factor must lie in (0, 1]")
    if safety_factor == 1:
        warnings.warn(
            "estimated modulus is an upper estimate of delta_V; pass safety_factor < 1 "
            "for conservative downstream bounds",
            ModulusEstimationWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    n = norm.n
    best = np.full(eps.shape, math.inf)

    for k, e in enumerate(eps):
        if e == 0:
            best[k] = 0.0
            continue
        for _ in range(starts):
            z = rng.standard_normal(2 * n)

            def objective(z, rho, e=e):
                parts = _midpoint_defect(norm, z)
                if parts is None:
                    return 10.0
                _, _, val, d = parts
                return val + rho * max(0.0, e - d) ** 2

            for rho in penalties:
                z = optimize.minimize(objective, z, args=(rho,), method="BFGS").x
            cons = {"type": "ineq", "fun": lambda z, e=e: _midpoint_defect(norm, z)[3] - e}
            polished = optimize.minimize(
                objective, z, args=(0.0,), method="SLSQP", constraints=[cons],
                options={"ftol": 1e-14, "maxiter": 500},
            )
            for cand in (polished.x, z):
                parts = _midpoint_defect(norm, cand)
                if parts is None:
                    continue
                x, y, _, _ = parts
                y = _push_apart(norm, x, y, e)
                if y is None:
                    continue
                best[k] = min(best[k], 1.0 - norm(0.5 * (x + y)))
        if not math.isfinite(best[k]):
            warnings.warn(
                f"no feasible pair found for eps={e}; using the trivial bound 1",
                ModulusEstimationWarning,
                stacklevel=2,
            )
            best[k] = 1.0

    # upper estimates stay upper estimates under t * min_{s >= t} est(s)/s
    vals = np.maximum(best, 0.0)
    pos = eps > 0
    ratio = vals[pos] / eps[pos]
    ratio = np.minimum.accumulate(ratio[::-1])[::-1]
    vals[pos] = ratio * eps[pos]
    knots = [(0.0, 0.0)] + [(float(t), float(safety_factor * v)) for t, v in zip(eps[pos], vals[pos])]
    return Table(tuple(knots))


def uniform_convexity_gap(norm: NormSpec, x, y) -> float:
    """``(||x||^2 + ||y||^2)/2 - ||(x+y)/2||^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * (norm(x) ** 2 + norm(y) ** 2) - norm(0.5 * (x + y)) ** 2


def figiel_pisier_ratio(norm: NormSpec, modulus: ModulusSpec, count: int = 10_000, seed: int = 0) -> float:
    """Smallest sampled value of ``gap(x, y) / delta_V(||x - y|| / 4)``.

    Pairs are drawn with ``||x||^2 + ||y||^2 <= 2``; this is an empirical
    estimate (from above) of the universal constant in the Figiel--Pisier
    midpoint inequality.
    """
    rng = np.random.default_rng(seed)
    n = norm.n
    x = rng.standard_normal((count, n))
    y = rng.standard_normal((count, n))
    # half the pairs are near-parallel, where the ratio is smallest
    near = rng.random(count) < 0.5
    y[near] = x[near] + rng.exponential(0.3, (near.sum(), 1)) * rng.standard_normal((near.sum(), n))
    s = np.sqrt(0.5 * (norm(x) ** 2 + norm(y) ** 2))
    r = rng.random(count) ** 0.25
    x *= (r / s)[:, None]
    y *= (r / s)[:, None]
    d = norm(x - y)
    keep = d > 1e-9
    gap = 0.5 * (norm(x) ** 2 + norm(y) ** 2) - norm(0.5 * (x + y)) ** 2
    dv = modulus.value(d[keep] / 4)
    return float(np.min(gap[keep] / dv))
