"""Ball's body of a log-concave density and the radial map onto it.

For a density ``f`` on R^n the body ``K_f`` has gauge

    ||x||_{K_f} = (n * int_0^inf f(r x) r^{n-1} dr)^{-1/n}

and the radial map ``T(x) = u(x) x / ||x||_{K_f}`` with

    u(x) = (int_0^1 f(r x) r^{n-1} dr / int_0^inf f(r x) r^{n-1} dr)^{1/n}

pushes ``f dx`` to Lebesgue measure on ``K_f``.  Radial densities
``h(||x||) / Z`` get a vectorised fast path; anything exposing ``n`` and
``log_pdf`` goes through one-dimensional quadrature along rays.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize, stats
from scipy.special import gammainc, gammaincinv, gammaln

from .delta import LqNorm, NormSpec

__all__ = [
    "ExpPower",
    "TruncatedGaussian",
    "Indicator",
    "CustomProfile",
    "profile_from_json",
    "RadialDensity",
    "EvenDensity",
    "DivergentIntegral",
    "PreconditionError",
    "ray_log_integral",
    "kf_gauge",
    "u_factor",
    "transport_map",
    "sample_mu_lp",
    "sample_uniform_ball",
    "rejection_sample_ball",
    "LipschitzStats",
    "empirical_lipschitz",
    "PushforwardStats",
    "pushforward_uniformity",
    "kf0_radius",
    "klartag_milman_check",
    "MomentsReport",
    "moments_ratio",
    "moments_bounds",
    "FradeliziReport",
    "barycenter",
    "fradelizi_check",
    "write_sample_batch",
    "read_sample_batch",
]

_GL_X, _GL_W = leggauss(24)
_LOG_DROP = 60.0  # integrand below exp(-60) of its peak is ignored


class DivergentIntegral(ValueError):
    """The radial integral does not converge (input is not a density)."""


class PreconditionError(ValueError):
    pass


# ----------------------------------------------------------------------------
# radial profiles h : [0, inf) -> [0, inf)
# ----------------------------------------------------------------------------


class _Profile:
    end: float = math.inf
    breaks: tuple = ()

    def log_h(self, r):
        raise NotImplementedError

    def log_moment_closed(self, k: float):
        """``log int_0^inf h r^{k-1}`` when known in closed form, else None."""
        return None

    def radial_cdf_closed(self, s, n):
        return None


@dataclass(frozen=True)
class ExpPower(_Profile):
    """``h(r) = exp(-beta r^p)``."""

    p: float
    beta: float = 1.0

    def __post_init__(self):
        if not self.p >= 1 or not self.beta > 0:
            raise ValueError("need p >= 1 and beta > 0 for a log-concave profile")

    def log_h(self, r):
        return -self.beta * np.asarray(r, dtype=float) ** self.p

    def log_moment_closed(self, k):
        return gammaln(k / self.p) - math.log(self.p) - (k / self.p) * math.log(self.beta)

    def radial_cdf_closed(self, s, n):
        return gammainc(n / self.p, self.beta * np.asarray(s, dtype=float) ** self.p)

    def to_json(self):
        return {"kind": "exp_power", "p": self.p, "beta": self.beta}


@dataclass(frozen=True)
class TruncatedGaussian(_Profile):
    """``h(r) = exp(-beta r^2) 1[r <= R]``."""

    beta: float
    R: float

    def __post_init__(self):
        if not self.beta >= 0 or not self.R > 0:
            raise ValueError("need beta >= 0 and R > 0")

    @property
    def end(self):
        return self.R

    def log_h(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.R, -self.beta * r * r, -np.inf)

    def radial_cdf_closed(self, s, n):
        s = np.minimum(np.asarray(s, dtype=float), self.R)
        if self.beta == 0:
            return (s / self.R) ** n
        return gammainc(n / 2, self.beta * s * s) / gammainc(n / 2, self.beta * self.R**2)

    def to_json(self):
        return {"kind": "truncated_gaussian", "beta": self.beta, "R": self.R}


@dataclass(frozen=True)
class Indicator(_Profile):
    """``h(r) = 1[r <= 1]``: uniform measure on the unit ball."""

    end = 1.0

    def log_h(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 1.0, 0.0, -np.inf)

    def log_moment_closed(self, k):
        return -math.log(k)

    def radial_cdf_closed(self, s, n):
        return np.minimum(np.asarray(s, dtype=float), 1.0) ** n

    def to_json(self):
        return {"kind": "indicator"}


@dataclass(frozen=True)
class CustomProfile(_Profile):
    """Profile from a vectorised ``log h`` callable, supported on ``[0, end]``."""

    log_h_fn: Callable = field(repr=False)
    end: float = math.inf

    def log_h(self, r):
        return np.asarray(self.log_h_fn(np.asarray(r, dtype=float)), dtype=float)


def profile_from_json(obj: dict) -> _Profile:
    kind = obj.get("kind")
    if kind == "exp_power":
        return ExpPower(float(obj["p"]), float(obj.get("beta", 1.0)))
    if kind == "truncated_gaussian":
        return TruncatedGaussian(float(obj["beta"]), float(obj["R"]))
    if kind == "indicator":
        return Indicator()
    raise ValueError(f"unknown profile kind {kind!r}")


def _profile_is_log_concave(profile: _Profile, hi: float, num: int = 200) -> bool:
    r = np.linspace(0.0, hi, num)
    lh = profile.log_h(r)
    fin = np.isfinite(lh)
    # support must be an interval starting at 0
    if not fin[0] or np.any(np.diff(fin.astype(int)) > 0):
        return False
    lh = lh[fin]
    if lh.size < 3:
        return True
    mid = lh[1:-1] - 0.5 * (lh[:-2] + lh[2:])
    return bool(np.all(mid >= -1e-9 * (1 + np.abs(lh[1:-1]))))


# ----------------------------------------------------------------------------
# batched radial integrals
# ----------------------------------------------------------------------------


def _radial_log_integrand(profile: _Profile, n: int, r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        lr = np.log(r) if n > 1 else np.zeros_like(r)
    return profile.log_h(r) + (n - 1) * lr


def _peak(profile: _Profile, n: int) -> tuple[float, float]:
    """Location and log value of the max of ``h(r) r^{n-1}``."""
    if n == 1 and np.isfinite(profile.log_h(0.0)):
        # non-increasing log-concave profile peaks at 0
        hi = profile.end if math.isfinite(profile.end) else 1.0
        r = np.linspace(0, hi, 64)
        v = _radial_log_integrand(profile, 1, r)
        i = int(np.argmax(v))
        return float(r[i]), float(v[i])
    hi = profile.end if math.isfinite(profile.end) else 1.0
    while not math.isfinite(profile.end) and _radial_log_integrand(profile, n, 2 * hi) > _radial_log_integrand(profile, n, hi):
        hi *= 2
        if hi > 1e12:
            raise DivergentIntegral("radial integrand keeps growing")
    res = optimize.minimize_scalar(
        lambda r: -float(_radial_log_integrand(profile, n, r)),
        bounds=(0.0, 2 * hi if not math.isfinite(profile.end) else hi), method="bounded",
        options={"xatol": 1e-12 * hi},
    )
    r = float(res.x)
    v = float(_radial_log_integrand(profile, n, r))
    if math.isfinite(profile.end):
        ve = float(_radial_log_integrand(profile, n, profile.end))
        if ve >= v:
            r, v = profile.end, ve
    return r, v


def _upper_cut(profile: _Profile, n: int, r_star: float, v_star: float) -> float:
    if math.isfinite(profile.end):
        return profile.end
    hi = max(r_star, 1.0)
    while _radial_log_integrand(profile, n, hi) > v_star - _LOG_DROP:
        hi *= 1.5
        if hi > 1e15:
            raise DivergentIntegral("radial integrand does not decay; not a density")
    return hi


@dataclass(frozen=True)
class _RadialTable:
    edges: np.ndarray
    cum: np.ndarray  # cumulative panel integrals (scaled by exp(-shift))
    shift: float

    @property
    def log_total(self):
        return self.shift + math.log(self.cum[-1])


def _build_table(profile: _Profile, n: int, panels: int = 256) -> _RadialTable:
    r_star, v_star = _peak(profile, n)
    hi = _upper_cut(profile, n, r_star, v_star)
    edges = np.unique(np.concatenate([np.linspace(0.0, hi, panels + 1), [r_star],
                                      [b for b in profile.breaks if 0 < b < hi]]))
    a, b = edges[:-1], edges[1:]
    nodes = 0.5 * (b - a)[:, None] * (_GL_X[None, :] + 1) + a[:, None]
    vals = np.exp(_radial_log_integrand(profile, n, nodes) - v_star)
    pan = 0.5 * (b - a) * (vals @ _GL_W)
    cum = np.concatenate([[0.0], np.cumsum(pan)])
    if not cum[-1] > 0:
        raise DivergentIntegral("radial integral vanished")
    return _RadialTable(edges, cum, v_star)


def _table_cdf(profile: _Profile, n: int, tab: _RadialTable, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    flat = np.clip(s.ravel(), 0.0, tab.edges[-1])
    k = np.clip(np.searchsorted(tab.edges, flat, side="right") - 1, 0, len(tab.edges) - 2)
    a = tab.edges[k]
    nodes = 0.5 * (flat - a)[:, None] * (_GL_X[None, :] + 1) + a[:, None]
    vals = np.exp(_radial_log_integrand(profile, n, nodes) - tab.shift)
    part = 0.5 * (flat - a) * (vals @ _GL_W)
    out = (tab.cum[k] + part) / tab.cum[-1]
    return np.clip(out, 0.0, 1.0).reshape(s.shape)


# ----------------------------------------------------------------------------
# densities
# ----------------------------------------------------------------------------


class Density(Protocol):
    n: int

    def log_pdf(self, x) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Probability density ``h(||x||) / Z`` on R^n.

    ``method="quadrature"`` (default) evaluates radial CDFs with the batched
    Gauss-Legendre table; ``"closed"`` uses the profile's incomplete-gamma
    formula when it has one.
    """

    n: int
    norm: NormSpec
    profile: _Profile
    method: str = "quadrature"
    _tab: _RadialTable = field(init=False, repr=False)
    log_Z: float = field(init=False)

    def __post_init__(self):
        if self.norm.n != self.n:
            raise ValueError("norm dimension does not match n")
        if self.method not in ("quadrature", "closed"):
            raise ValueError("method must be 'quadrature' or 'closed'")
        tab = _build_table(self.profile, self.n)
        object.__setattr__(self, "_tab", tab)
        log_vol = self._log_vol()
        object.__setattr__(self, "log_Z", math.log(self.n) + log_vol + tab.log_total)

    def _log_vol(self) -> float:
        if hasattr(self.norm, "log_unit_ball_volume"):
            return self.norm.log_unit_ball_volume()
        return math.log(self.norm.unit_ball_volume())

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def is_log_concave(self) -> bool:
        hi = self._tab.edges[-1]
        return _profile_is_log_concave(self.profile, hi)

    def total_mass(self) -> float:
        """``n vol int h r^{n-1} / Z`` recomputed with adaptive quadrature."""
        log_int = ray_log_integral(lambda r: self.profile.log_h(r), self.n, end=self.profile.end)
        return math.exp(math.log(self.n) + self._log_vol() + log_int - self.log_Z)

    def log_pdf(self, x):
        return self.profile.log_h(self.norm(x)) - self.log_Z

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    @property
    def log_f0(self) -> float:
        return float(self.profile.log_h(0.0)) - self.log_Z

    def radial_cdf(self, s):
        """``int_0^s h r^{n-1} / int_0^inf h r^{n-1}``."""
        if self.method == "closed":
            out = self.profile.radial_cdf_closed(s, self.n)
            if out is not None:
                return np.asarray(out, dtype=float)
        return _table_cdf(self.profile, self.n, self._tab, s)

    def gauge(self, x):
        """``||x||_{K_f}``; for a radial density this is ``vol^{1/n} ||x||``."""
        return math.exp(self._log_vol() / self.n) * self.norm(x)

    def u(self, x):
        return self.radial_cdf(self.norm(x)) ** (1.0 / self.n)

    def transport(self, x):
        x = np.asarray(x, dtype=float)
        g = self.gauge(x)
        u = self.u(x)
        safe = np.where(g > 0, g, 1.0)
        return np.where((g > 0)[..., None], (u / safe)[..., None] * x, 0.0)

    def sample(self, count: int, seed: int, streams: int = 1, threads: int = 1) -> np.ndarray:
        """Exact draws for the profiles that admit a coordinate sampler."""
        prof, norm = self.profile, self.norm
        if not isinstance(norm, LqNorm):
            raise TypeError("sampling needs an l_q norm")
        if isinstance(prof, ExpPower) and prof.p == norm.q:
            x = sample_mu_lp(self.n, prof.p, count, seed, streams, threads)
            return x / (prof.beta ** (1 / prof.p) * norm.scale)
        if isinstance(prof, Indicator):
            return sample_uniform_ball(norm, count, seed, streams, threads)
        if isinstance(prof, TruncatedGaussian) and norm.q == 2:
            out, k, rng_seed = [], 0, seed
            while k < count:
                beta = prof.beta if prof.beta > 0 else 0.0
                if beta > 0:
                    x = sample_mu_lp(self.n, 2.0, count, rng_seed, streams, threads) / (math.sqrt(beta) * norm.scale)
                else:
                    x = sample_uniform_ball(LqNorm(self.n, 2.0, norm.scale / prof.R), count, rng_seed, streams, threads)
                x = x[norm(x) <= prof.R]
                out.append(x)
                k += len(x)
                rng_seed += 1_000_003
            return np.concatenate(out)[:count]
        raise TypeError("no exact sampler for this profile/norm combination")

    def to_json(self):
        return {"n": self.n, "norm": self.norm.to_json(), "profile": self.profile.to_json()}


@dataclass(frozen=True, eq=False)
class EvenDensity:
    """Log-concave density given by a vectorised ``log f`` (last axis = coordinates).

    The normalisation does not matter for gauges of ``K_f`` up to the factor
    ``Z^{1/n}``; pass ``log_Z`` if the evaluator is unnormalised.
    """

    n: int
    log_f: Callable = field(repr=False)
    log_Z: float = 0.0
    even: bool = True

    def log_pdf(self, x):
        return np.asarray(self.log_f(np.asarray(x, dtype=float)), dtype=float) - self.log_Z


# ----------------------------------------------------------------------------
# generic ray quadrature
# ----------------------------------------------------------------------------


def ray_log_integral(log_h: Callable, n: int, upper: float = math.inf, end: float = math.inf) -> float:
    """``log int_0^upper exp(log_h(r)) r^{n-1} dr`` for log-concave ``exp(log_h)``.

    The integrand is scaled by its peak value, so very large ``n`` does not
    underflow.  The peak and the support edge are located on a logarithmic
    grid and refined, then the pieces go to adaptive quadrature.
    """

    def phi(r):
        if r <= 0:
            r0 = 0.0
            v = float(np.asarray(log_h(np.asarray(r0))))
            return v if n == 1 else -math.inf
        v = float(np.asarray(log_h(np.asarray(r, dtype=float))))
        return v + (n - 1) * math.log(r)

    stop = min(upper, end)
    grid = np.logspace(-8, 8, 321)
    if math.isfinite(stop):
        grid = np.append(grid[grid < stop], stop)
    vals = np.array([phi(r) for r in grid])
    fin = np.isfinite(vals)
    if not fin.any():
        return -math.inf
    if fin[-1] and not math.isfinite(stop) and vals[-1] > np.max(vals[fin]) - _LOG_DROP:
        raise DivergentIntegral("integrand along the ray does not decay")
    i = int(np.argmax(np.where(fin, vals, -np.inf)))
    lo_b = grid[i - 1] if i > 0 else 0.0
    hi_b = grid[i + 1] if i + 1 < len(grid) and fin[i + 1] else grid[i]
    r_star, v_star = grid[i], vals[i]
    if hi_b > lo_b:
        res = optimize.minimize_scalar(lambda r: -phi(r) if math.isfinite(phi(r)) else 1e300,
                                       bounds=(lo_b, hi_b), method="bounded",
                                       options={"xatol": 1e-14 * hi_b})
        if math.isfinite(phi(res.x)) and phi(res.x) > v_star:
            r_star, v_star = float(res.x), phi(res.x)
    if n == 1 and math.isfinite(phi(0.0)) and phi(0.0) > v_star:
        r_star, v_star = 0.0, phi(0.0)
    # right end: support edge or where the integrand has become negligible
    j = i
    while j + 1 < len(grid) and fin[j + 1] and vals[j + 1] > v_star - _LOG_DROP:
        j += 1
    if j + 1 < len(grid) and not fin[j + 1]:
        a, b = grid[j], grid[j + 1]
        for _ in range(200):
            m = 0.5 * (a + b)
            if math.isfinite(phi(m)):
                a = m
            else:
                b = m
            if b - a <= 1e-15 * b:
                break
        cut = a
    elif j + 1 < len(grid):
        cut = grid[j + 1]
    else:
        cut = grid[j]

    def g(r):
        v = phi(r)
        return math.exp(v - v_star) if math.isfinite(v) else 0.0

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    total = 0.0
    lo_piece = min(r_star, cut)
    if lo_piece > 0:
        total += integrate.quad(g, 0.0, lo_piece, **opts)[0]
    if cut > lo_piece:
        total += integrate.quad(g, lo_piece, cut, **opts)[0]
    if not total > 0:
        return -math.inf
    return v_star + math.log(total)


def _ray_logs(density, x: np.ndarray, upper: float = math.inf) -> float:
    def log_h(r):
        return density.log_pdf(np.asarray(r, dtype=float)[..., None] * x)

    return ray_log_integral(log_h, density.n, upper=upper)


def kf_gauge(density, x, method: str = "auto") -> float:
    """Gauge of Ball's body at a single point ``x``.

    ``method="quadrature"`` forces the one-dimensional integral along the
    ray, which is the only option for non-radial densities.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return 0.0
    if method == "auto" and isinstance(density, RadialDensity):
        return float(density.gauge(x))
    L = _ray_logs(density, x)
    return math.exp(-(math.log(density.n) + L) / density.n)


def u_factor(density, x, method: str = "auto") -> float:
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return 0.0
    if method == "auto" and isinstance(density, RadialDensity):
        return float(density.u(x))
    whole = _ray_logs(density, x)
    part = _ray_logs(density, x, upper=1.0)
    return math.exp((part - whole) / density.n)


def transport_map(density, x, method: str = "auto") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if method == "auto" and isinstance(density, RadialDensity):
        return density.transport(x)
    if not np.any(x):
        return np.zeros_like(x)
    return u_factor(density, x, method) / kf_gauge(density, x, method) * x


# ----------------------------------------------------------------------------
# samplers
# ----------------------------------------------------------------------------


def _streamed(fn, count: int, seed: int, streams: int, threads: int) -> np.ndarray:
    if count < 0 or streams < 1:
        raise ValueError("need count >= 0 and streams >= 1")
    children = np.random.SeedSequence(seed).spawn(streams)
    sizes = [count // streams + (i < count % streams) for i in range(streams)]
    jobs = list(zip(children, sizes))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda j: fn(np.random.default_rng(j[0]), j[1]), jobs))
    else:
        parts = [fn(np.random.default_rng(c), k) for c, k in jobs]
    return np.concatenate(parts, axis=0)


def sample_mu_lp(n: int, p: float, count: int, seed: int, streams: int = 1, threads: int = 1) -> np.ndarray:
    """Draws from the density proportional to ``exp(-||x||_p^p)``.

    Coordinates are independent with ``|t|^p ~ Gamma(1/p)``, inverted through
    the regularised incomplete gamma function.  The result depends only on
    ``(seed, streams)``, never on ``threads``.
    """
    if not p >= 1:
        raise ValueError("need p >= 1")

    def draw(rng, k):
        g = gammaincinv(1.0 / p, rng.random((k, n)))
        sign = np.where(rng.random((k, n)) < 0.5, -1.0, 1.0)
        return sign * g ** (1.0 / p)

    return _streamed(draw, count, seed, streams, threads)


def sample_uniform_ball(norm: LqNorm, count: int, seed: int, streams: int = 1, threads: int = 1) -> np.ndarray:
    """Uniform points in ``{||x|| <= 1}`` as the radial image of ``exp(-||x||_q^q)``."""
    n, q = norm.n, norm.q
    x = sample_mu_lp(n, q, count, seed, streams, threads)
    r = LqNorm(n, q)(x)
    radius = gammainc(n / q, r**q) ** (1.0 / n)
    return (radius / (r * norm.scale))[:, None] * x


def rejection_sample_ball(norm: NormSpec, count: int, seed: int, box: float | None = None) -> np.ndarray:
    """Uniform points in the unit ball by rejection from the cube ``[-box, box]^n``."""
    box = (1.0 / norm.scale) if box is None else box
    rng = np.random.default_rng(seed)
    out, k = [], 0
    while k < count:
        z = rng.uniform(-box, box, size=(max(1024, 2 * (count - k)), norm.n))
        z = z[norm(z) <= 1.0]
        out.append(z)
        k += len(z)
    return np.concatenate(out)[:count]


# ----------------------------------------------------------------------------
# verification experiments
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PushforwardStats:
    count: int
    ks_statistic: float
    ks_pvalue: float
    critical_1pct: float
    mean_direction_norm: float

    @property
    def passed(self) -> bool:
        return self.ks_statistic < self.critical_1pct

    def to_json(self):
        return {**self.__dict__, "passed": self.passed}


def pushforward_uniformity(density: RadialDensity, samples: np.ndarray) -> PushforwardStats:
    """KS test of ``||T(x)||_{K_f}^n`` against U[0, 1] plus direction balance."""
    x = np.asarray(samples, dtype=float)
    t = density.transport(x)
    v = density.gauge(t) ** density.n
    res = stats.kstest(v, "uniform")
    e = np.linalg.norm(x, axis=1)
    dirs = x[e > 0] / e[e > 0, None]
    N = len(x)
    return PushforwardStats(N, float(res.statistic), float(res.pvalue), 1.63 / math.sqrt(N),
                            float(np.linalg.norm(dirs.mean(axis=0))))


@dataclass(frozen=True)
class LipschitzStats:
    pairs: int
    u_quotient: float
    t_quotient: float
    f0_root: float

    @property
    def u_normalized(self) -> float:
        return self.u_quotient / self.f0_root

    @property
    def t_normalized(self) -> float:
        return self.t_quotient / self.f0_root

    @property
    def factor_three_holds(self) -> bool:
        return self.t_quotient <= 3 * self.u_quotient * (1 + 1e-9)

    def to_json(self):
        return {"pairs": self.pairs, "u_quotient": self.u_quotient, "t_quotient": self.t_quotient,
                "f0_root": self.f0_root, "u_normalized": self.u_normalized,
                "t_normalized": self.t_normalized, "factor_three_holds": self.factor_three_holds}


def empirical_lipschitz(density: RadialDensity, pair_count: int, seed: int, streams: int = 1) -> LipschitzStats:
    """Largest observed Lipschitz quotients of ``u`` and ``T`` in the ``K_f`` metric.

    Half the pairs are independent draws, half are draws with a nearby point
    at log-uniform relative distance in [1e-4, 1]; pairs leaving the support
    are dropped.
    """
    n = density.n
    x = density.sample(2 * pair_count, seed, streams)
    a, b = x[:pair_count], x[pair_count:]
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(streams + 1)[-1])
    half = pair_count // 2
    scale = float(np.median(density.norm(a)))
    w = rng.standard_normal((half, n))
    w /= density.norm(w)[:, None]
    rho = scale * 10 ** rng.uniform(-4, 0, half)
    b = b.copy()
    b[:half] = a[:half] + rho[:, None] * w
    keep = np.isfinite(density.log_pdf(b)) & np.any(a != b, axis=1)
    a, b = a[keep], b[keep]
    d = density.gauge(a - b)
    uq = np.abs(density.u(a) - density.u(b)) / d
    tq = density.gauge(density.transport(a) - density.transport(b)) / d
    return LipschitzStats(int(keep.sum()), float(uq.max()), float(tq.max()),
                          math.exp(density.log_f0 / n))


def kf0_radius(density, theta, tol: float = 1e-12) -> float:
    """Radius ``s`` with ``g(s theta) = g(0) + n`` where ``g = -log f``; ``inf`` if unbounded."""
    theta = np.asarray(theta, dtype=float)
    if not np.any(theta):
        raise ValueError("direction must be non-zero")
    g0 = -float(density.log_pdf(np.zeros_like(theta)))
    if not math.isfinite(g0):
        raise PreconditionError("density must be positive at the origin")
    level = g0 + density.n

    def excess(s):
        v = -float(density.log_pdf(s * theta))
        return (v if math.isfinite(v) else 1e300) - level

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
        if hi > 1e15:
            return math.inf
    lo = 0.0
    # a support edge inside the level set: the level-set boundary is the edge
    if excess(hi) >= 1e299:
        lo_s, hi_s = 0.0, hi
        while excess(lo_s) < 0 and hi_s - lo_s > tol * hi:
            mid = 0.5 * (lo_s + hi_s)
            if excess(mid) >= 1e299:
                hi_s = mid
            else:
                lo_s = mid
        if excess(lo_s) < 0:
            return hi_s
        hi = lo_s if lo_s > 0 else hi
    return optimize.brentq(excess, lo, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class KlartagMilmanReport:
    directions: int
    max_first: float   # max r_K / (C sup f^{1/n} r_0), inclusion holds when <= 1
    max_second: float  # max f(0)^{1/n} r_0 / (D r_K)
    C: float
    D: float

    @property
    def first_holds(self) -> bool:
        return self.max_first <= 1.0

    @property
    def second_holds(self) -> bool:
        return self.max_second <= 1.0

    def to_json(self):
        return {**self.__dict__, "first_holds": self.first_holds, "second_holds": self.second_holds}


def klartag_milman_check(density, directions, C: float = math.e * 1.01, D: float = 2.5,
                         log_sup: float | None = None) -> KlartagMilmanReport:
    """Compare ``K_f`` with the level body ``{f >= f(0) e^{-n}}`` along rays.

    Tested inclusions: ``K_f within C (sup f)^{1/n} K_f^0`` and
    ``f(0)^{1/n} K_f^0 within D K_f``.  For an even density with maximum at the
    origin ``sup f = f(0)``, which is the default.
    """
    n = density.n
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    log_f0 = float(density.log_pdf(np.zeros(n)))
    log_sup = log_f0 if log_sup is None else log_sup
    first, second = [], []
    for th in dirs:
        rK = 1.0 / kf_gauge(density, th)
        r0 = kf0_radius(density, th)
        first.append(rK / (C * math.exp(log_sup / n) * r0))
        second.append(math.exp(log_f0 / n) * r0 / (D * rK))
    return KlartagMilmanReport(len(dirs), max(first), max(second), C, D)


@dataclass(frozen=True)
class MomentsReport:
    n: int
    ratio: float
    lower: float
    upper: float
    lower_asserted: bool

    @property
    def within(self) -> bool:
        ok_up = self.ratio <= self.upper * (1 + 1e-10)
        ok_lo = (not self.lower_asserted) or self.ratio >= self.lower * (1 - 1e-10)
        return ok_up and ok_lo


def moments_bounds(n: int) -> tuple[float, float]:
    """``(n^{(n+1)/n} / (e (n+1)), n! / ((n-1)!)^{(n+1)/n})``."""
    lower = math.exp((n + 1) / n * math.log(n) - 1 - math.log(n + 1))
    upper = math.exp(gammaln(n + 1) - (n + 1) / n * gammaln(n))
    return lower, upper


def moments_ratio(profile: _Profile, n: int) -> MomentsReport:
    """``int h r^n / (int h r^{n-1})^{(n+1)/n}`` for a profile with ``h(0) = 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    if abs(float(profile.log_h(0.0))) > 1e-12:
        raise ValueError("profile must satisfy h(0) = 1")
    r = np.linspace(0.0, profile.end if math.isfinite(profile.end) else 50.0, 2001)
    lh = profile.log_h(r)
    if np.all(lh[np.isfinite(lh)] == 0) and not math.isfinite(profile.end):
        raise ValueError("profile must be integrable")
    sup_ok = float(np.max(lh[np.isfinite(lh)])) <= n
    log_num = ray_log_integral(profile.log_h, n + 1, end=profile.end)
    log_den = ray_log_integral(profile.log_h, n, end=profile.end)
    ratio = math.exp(log_num - (n + 1) / n * log_den)
    lo, up = moments_bounds(n)
    return MomentsReport(n, ratio, lo, up, sup_ok)


def _support_interval(log_f: Callable, box: float, num: int = 2001) -> tuple[float, float] | None:
    """Support of a log-concave function of one variable inside ``[-box, box]``."""
    t = np.linspace(-box, box, num)
    fin = np.isfinite(log_f(t))
    if not fin.any():
        return None
    idx = np.flatnonzero(fin)

    def edge(inside, outside):
        for _ in range(200):
            m = 0.5 * (inside + outside)
            if np.isfinite(log_f(np.array([m]))[0]):
                inside = m
            else:
                outside = m
            if abs(outside - inside) <= 1e-15 * box:
                break
        return inside

    lo = t[0] if idx[0] == 0 else edge(t[idx[0]], t[idx[0] - 1])
    hi = t[-1] if idx[-1] == num - 1 else edge(t[idx[-1]], t[idx[-1] + 1])
    return float(lo), float(hi)


def _line_moments(log_f: Callable, box: float, shift: float) -> np.ndarray:
    """``(int w, int t w)`` over a line, ``w = exp(log_f - shift)``."""
    sup = _support_interval(log_f, box)
    if sup is None:
        return np.zeros(2)
    lo, hi = sup
    if hi <= lo:
        return np.zeros(2)

    def w(t):
        return math.exp(float(log_f(np.array([t]))[0]) - shift)

    m0 = integrate.quad(w, lo, hi, limit=200, epsabs=0.0, epsrel=1e-11)[0]
    # the first moment may cancel to ~0, so its tolerance is absolute
    m1 = integrate.quad(lambda t: t * w(t), lo, hi, limit=200,
                        epsabs=1e-12 * m0 * max(abs(lo), abs(hi), 1.0), epsrel=1e-11)[0]
    return np.array([m0, m1])


def barycenter(density, box: float) -> np.ndarray:
    """Barycentre of a log-concave density on R^1 or R^2 over ``[-box, box]^n``.

    Lines through a convex support meet it in intervals, so the edges are
    located by bisection and adaptive quadrature runs strictly inside.
    """
    n = density.n
    shift = float(density.log_pdf(np.zeros(n))) if np.isfinite(density.log_pdf(np.zeros(n))) else 0.0
    if n == 1:
        m0, m1 = _line_moments(lambda t: density.log_pdf(t[:, None]), box, shift)
        return np.array([m1 / m0])
    if n == 2:
        def row(x1):
            return _line_moments(
                lambda t: density.log_pdf(np.stack([np.full_like(t, x1), t], axis=-1)), box, shift)

        def col_log(t):
            # marginal support in x1: some point of the slice is in the support
            return np.array([0.0 if _support_interval(
                lambda s: density.log_pdf(np.stack([np.full_like(s, x), s], axis=-1)), box, 201)
                is not None else -np.inf for x in t])

        sup = _support_interval(col_log, box, 401)
        if sup is None:
            raise PreconditionError("density vanishes on the box")
        lo, hi = sup
        m0 = integrate.quad(lambda x: row(x)[0], lo, hi, limit=200, epsabs=0.0, epsrel=1e-9)[0]
        opts = dict(limit=200, epsabs=1e-9 * m0 * box, epsrel=1e-9)
        mx = integrate.quad(lambda x: x * row(x)[0], lo, hi, **opts)[0]
        my = integrate.quad(lambda x: row(x)[1], lo, hi, **opts)[0]
        return np.array([mx / m0, my / m0])
    raise ValueError("barycentre quadrature is implemented for n <= 2")


@dataclass(frozen=True)
class FradeliziReport:
    n: int
    barycenter: tuple
    ratio: float
    threshold: float

    @property
    def holds(self) -> bool:
        return self.ratio >= self.threshold * (1 - 1e-9)

    def to_json(self):
        return {**self.__dict__, "holds": self.holds}


def fradelizi_check(density, box: float, bary_tol: float = 1e-6) -> FradeliziReport:
    """``f(0) >= e^{-n} sup f`` for a log-concave density centred at its barycentre."""
    n = density.n
    bc = barycenter(density, box)
    if np.max(np.abs(bc)) > bary_tol * box:
        raise PreconditionError(f"barycentre {bc.tolist()} is not at the origin")

    def neg(z):
        v = float(density.log_pdf(np.asarray(z)))
        return -v if math.isfinite(v) else 1e300

    starts = [np.zeros(n)] + [np.full(n, s * box / 4) for s in (-1, 1)]
    best = min((optimize.minimize(neg, s0, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 20000})
                for s0 in starts), key=lambda r: r.fun)
    log_sup = -best.fun
    log_f0 = float(density.log_pdf(np.zeros(n)))
    return FradeliziReport(n, tuple(float(v) for v in bc), math.exp(log_f0 - log_sup), math.exp(-n))


# ----------------------------------------------------------------------------
# sample export
# ----------------------------------------------------------------------------


def write_sample_batch(path, samples: np.ndarray, meta: dict) -> None:
    """One JSON header line, then the samples as column-major float64."""
    x = np.asarray(samples, dtype=np.float64)
    head = {**meta, "count": int(x.shape[0]), "n": int(x.shape[1]), "order": "F", "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        fh.write(np.asfortranarray(x).astype("<f8").tobytes(order="F"))


def read_sample_batch(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        head = json.loads(fh.readline())
        buf = fh.read()
    x = np.frombuffer(buf, dtype="<f8").reshape((head["count"], head["n"]), order="F")
    return x.copy(), head
