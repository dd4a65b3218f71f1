"""From isoperimetric profiles to concentration of measure.

If ``mu+(A) >= a~ gamma(log 1/a~)`` for every set, then for a set ``B`` with
``a = 1 - mu(B)``

    1 - mu(B_eps) <= exp(-h_a^{-1}(eps)),   h_a(x) = int_{log 1/a}^x dy / gamma(y).

This module evaluates that conversion, the closed forms it specialises to,
the Gromov-Milman bounds for uniformly convex balls, and a Monte Carlo check
on half-spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .delta import LqNorm, ModulusSpec, convex_minorant
from .oned import rows_to_csv
from .profile import DEFAULT_C_PRIME, BoundCurve, body_constant
from .transport import sample_uniform_ball

__all__ = [
    "GammaProfile",
    "constant_gamma",
    "power_gamma",
    "gamma_from_curve",
    "h_value",
    "h_inverse",
    "profile_concentration",
    "power_concentration",
    "gromov_milman",
    "gromov_milman_threshold",
    "small_eps_constant",
    "small_eps_range",
    "small_eps_concentration",
    "EnlargementExperiment",
    "EnlargementResult",
    "mc_enlargement",
    "CONCENTRATION_COLUMNS",
    "concentration_rows",
    "concentration_csv",
]

_LOG2 = math.log(2.0)


class DivergentProfile(ValueError):
    pass


@dataclass(frozen=True)
class GammaProfile:
    """A positive function ``gamma`` on ``[log 2, inf)``.

    Below ``log 2`` it is read as ``gamma(log 1/(1 - e^{-y}))``, which is how
    a profile bound on the smaller side translates for sets of mass above 1/2.
    """

    gamma: Callable[[float], float] = field(repr=False)
    name: str = "gamma"
    params: dict = field(default_factory=dict)

    def __call__(self, y: float) -> float:
        if y >= _LOG2:
            return float(self.gamma(y))
        return float(self.gamma(-math.log(-math.expm1(-y))))


def constant_gamma(c: float) -> GammaProfile:
    if not c > 0:
        raise ValueError("c must be positive")
    return GammaProfile(lambda y: c, "constant", {"c": c})


def power_gamma(c0: float, p: float) -> GammaProfile:
    """``gamma(y) = c0 y^{1-1/p}``."""
    if not c0 > 0 or not p >= 1:
        raise ValueError("need c0 > 0 and p >= 1")
    return GammaProfile(lambda y: c0 * y ** (1 - 1 / p), "power", {"c0": c0, "p": p})


def gamma_from_curve(curve: BoundCurve) -> GammaProfile:
    """``gamma(y) = e^y I(e^{-y})`` for a profile lower bound ``I``."""
    return GammaProfile(lambda y: math.exp(y) * curve(math.exp(-y)), curve.name, curve.describe())


def _integral(g: GammaProfile, lo: float, hi: float) -> float:
    def inv(y):
        v = g(y)
        if not v > 0:
            raise DivergentProfile(f"gamma vanishes at y = {y}")
        return 1.0 / v

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    total = 0.0
    # the convention branch joins at log 2 with a kink, keep it a panel edge
    if lo < _LOG2 < hi:
        total += integrate.quad(inv, lo, _LOG2, **opts)[0]
        lo = _LOG2
    if hi > lo:
        total += integrate.quad(inv, lo, hi, **opts)[0]
    return total


def h_value(g: GammaProfile, a: float, x: float) -> float:
    """``int_{log 1/a}^x dy / gamma(y)``."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    lo = -math.log(a)
    if x < lo * (1 - 1e-15):
        raise ValueError("x must be at least log 1/a")
    return _integral(g, lo, max(x, lo))


def h_inverse(g: GammaProfile, a: float, eps: float, rtol: float = 1e-12) -> float:
    """The ``x >= log 1/a`` with ``h_a(x) = eps``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    lo = -math.log(a)
    if eps == 0:
        return lo

    # solve in the offset z = x - log 1/a so the tolerance is relative to it
    def f(z):
        return h_value(g, a, lo + z) - eps

    hi = max(eps * g(max(lo, _LOG2)), 1e-3)
    while f(hi) < 0:
        hi *= 2
        if hi > 1e300:
            raise DivergentProfile("h_a is bounded; gamma grows too fast")
    z = optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=rtol, maxiter=500)
    return lo + z


def profile_concentration(g: GammaProfile, a: float, eps: float) -> float:
    """``exp(-h_a^{-1}(eps))``: bound on ``1 - mu(B_eps)`` when ``1 - mu(B) = a``."""
    return math.exp(-h_inverse(g, a, eps))


def power_concentration(c0: float, p: float, a: float, eps: float) -> float:
    """``exp(-[(log 1/a)^{1/p} + c0 eps / p]^p)`` for ``a <= 1/2``."""
    if not 0 < a <= 0.5:
        raise ValueError("closed form needs 1 - mu(B) = a in (0, 1/2]")
    if not p >= 1 or not c0 > 0 or eps < 0:
        raise ValueError("need p >= 1, c0 > 0 and eps >= 0")
    return math.exp(-((-math.log(a)) ** (1 / p) + c0 * eps / p) ** p)


def gromov_milman(delta: ModulusSpec, n: int, lam: float, eps: float) -> float:
    """``exp(-2 n delta(eps)) / lam``; not clamped, so it may exceed 1."""
    if not 0 < lam <= 1:
        raise ValueError("lam must lie in (0, 1]")
    return math.exp(-2 * n * float(delta.value(eps))) / lam


def gromov_milman_threshold(alpha: float, p: float, n: int, lam: float) -> float:
    """Smallest ``eps`` with ``exp(-2 alpha n eps^p) / lam <= 1 - lam``."""
    return (math.log(1 / (lam * (1 - lam))) / (2 * alpha * n)) ** (1 / p)


def small_eps_constant(delta: ModulusSpec, n: int, c_prime: float = DEFAULT_C_PRIME) -> float:
    """``c' C_{n,delta}`` evaluated on the convex minorant of ``delta``."""
    return c_prime * body_constant(convex_minorant(delta), n)


def small_eps_range(delta: ModulusSpec, n: int, lam: float, c_prime: float = DEFAULT_C_PRIME) -> float:
    """Largest ``eps`` for which :func:`small_eps_concentration` applies."""
    d = convex_minorant(delta)
    C = small_eps_constant(delta, n, c_prime)
    a = 1 - lam
    return (math.e - 1) / (math.e * C) * float(d.inverse(math.e * math.log(1 / a) / (2 * n)))


def small_eps_concentration(delta: ModulusSpec, n: int, lam: float, eps: float,
                            c_prime: float = DEFAULT_C_PRIME) -> float | None:
    """``(1 - lam) exp(-2 n delta(C' eps))`` for small ``eps``; ``None`` beyond its range."""
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps > small_eps_range(delta, n, lam, c_prime):
        return None
    d = convex_minorant(delta)
    C = small_eps_constant(delta, n, c_prime)
    return (1 - lam) * math.exp(-2 * n * float(d.value(C * eps)))


# ----------------------------------------------------------------------------
# Monte Carlo on half-spaces
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EnlargementExperiment:
    norm: LqNorm
    theta: tuple
    t: float
    eps: tuple
    count: int
    seed: int
    streams: int = 1
    threads: int = 1

    @property
    def n(self) -> int:
        return self.norm.n


@dataclass(frozen=True)
class EnlargementResult:
    eps: np.ndarray
    empirical: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    base_mass: float
    base_sigma: float
    count: int

    def sigma(self) -> np.ndarray:
        p = self.empirical
        return np.sqrt(p * (1 - p) / self.count)


def mc_enlargement(exp: EnlargementExperiment, z: float = 3.0) -> EnlargementResult:
    """Empirical ``1 - lambda(B_eps)`` for ``B = {x . theta <= t}`` in the unit ball.

    The eps-extension of a half-space in a norm is the half-space shifted by
    ``eps ||theta||_*``, so one batch of samples serves every eps and the
    curve is exactly non-increasing.
    """
    theta = np.asarray(exp.theta, dtype=float)
    if theta.shape != (exp.n,) or not np.any(theta):
        raise ValueError("theta must be a non-zero vector of dimension n")
    eps = np.asarray(exp.eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("eps must be non-negative")
    x = sample_uniform_ball(exp.norm, exp.count, exp.seed, exp.streams, exp.threads)
    proj = x @ theta
    dual = float(exp.norm.dual(theta))
    N = exp.count
    emp = np.array([np.count_nonzero(proj >= exp.t + e * dual) / N for e in eps])
    sig = np.sqrt(emp * (1 - emp) / N)
    base = np.count_nonzero(proj <= exp.t) / N
    return EnlargementResult(eps, emp, np.clip(emp - z * sig, 0, 1), np.clip(emp + z * sig, 0, 1),
                             base, math.sqrt(base * (1 - base) / N), N)


CONCENTRATION_COLUMNS = ["eps", "empirical", "ci_lo", "ci_hi", "gm", "gm_improved", "cor19", "propA"]


def concentration_rows(res: EnlargementResult, delta: ModulusSpec, n: int, lam: float,
                       gamma: GammaProfile | None = None, c0: float | None = None,
                       p: float | None = None, c_prime: float = DEFAULT_C_PRIME) -> list[dict]:
    """Table of the empirical curve next to every available bound; blank where n/a."""
    a = 1 - lam
    rows = []
    for e, emp, lo, hi in zip(res.eps, res.empirical, res.ci_lo, res.ci_hi):
        e = float(e)
        imp = small_eps_concentration(delta, n, lam, e, c_prime)
        rows.append({
            "eps": e,
            "empirical": float(emp),
            "ci_lo": float(lo),
            "ci_hi": float(hi),
            "gm": gromov_milman(delta, n, lam, e),
            "gm_improved": "" if imp is None else imp,
            "cor19": "" if c0 is None or p is None or a > 0.5 else power_concentration(c0, p, a, e),
            "propA": "" if gamma is None else profile_concentration(gamma, a, e),
        })
    return rows


def concentration_csv(rows: list[dict], header: dict | None = None) -> str:
    return rows_to_csv(rows, CONCENTRATION_COLUMNS, header)
