"""Isoperimetric lower-bound curves ``a~ -> I(a~)`` in dimension n.

Each constructor returns a :class:`BoundCurve`: a pure evaluator plus the
parameters it was built from and a short provenance label, so that sweeps can
write a self-describing sidecar next to the numbers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, ndtri

from .delta import ModulusSpec, Power, Truncated
from .oned import modulus_integral, rows_to_csv, tail_bound, tail_constant

__all__ = [
    "BoundCurve",
    "ulc_constant",
    "ulc_curve",
    "power_curve",
    "bakry_ledoux_curve",
    "bobkov_curve",
    "p_convex_body_curve",
    "p_convex_body_constant",
    "body_constant",
    "convex_body_curve",
    "sweep",
    "sweep_csv",
    "sweep_sidecar",
    "DEFAULT_C_PRIME",
    "DEFAULT_LIPSCHITZ",
]

_E = math.e
HALF_CONSTANT = (_E - 1) / (2 * _E)

#: small-set constant that makes the body bound meet Bobkov's bound with r = 1
DEFAULT_C_PRIME = _E / (4 * (_E - 1))

#: sup of the Lipschitz quotient of the radial map, normalised by f(0)^{1/n},
#: observed for l_p exponential profiles (n in {2, 8, 16}, p in {2, 4}); it is
#: attained near the origin where T(x) ~ f(0)^{1/n} x
DEFAULT_LIPSCHITZ = 1.0


@dataclass(frozen=True)
class BoundCurve:
    name: str
    func: Callable[[float], float] = field(repr=False)
    provenance: str
    params: dict = field(default_factory=dict)

    def __call__(self, a_tilde):
        if np.ndim(a_tilde) == 0:
            x = float(a_tilde)
            if not 0 < x < 1:
                raise ValueError("bound curves are evaluated on mass in (0, 1)")
            return max(float(self.func(x)), 0.0)
        arr = np.asarray(a_tilde, dtype=float)
        return np.array([self(x) for x in arr.ravel()]).reshape(arr.shape)

    eval = __call__

    def describe(self) -> dict:
        return {"name": self.name, "provenance": self.provenance, "params": self.params}


def _mod_params(delta: ModulusSpec):
    try:
        return delta.to_json()
    except Exception:  # pragma: no cover - custom moduli
        return repr(delta)


def ulc_constant(delta: ModulusSpec) -> float:
    """``(e-1) / (2e max(2 delta(int_0^inf exp(-2 delta)), 1))``."""
    return tail_constant(delta.scaled(2.0))[0]


def ulc_curve(delta: ModulusSpec, name: str = "ulc") -> BoundCurve:
    """``C a~ gamma(log 1/a~)`` with ``gamma(t) = t / delta^{-1}(t/2)``.

    ``delta`` is the midpoint modulus of the measure.  Through the tail
    estimate ``g(x) - g(min) >= 2 delta(|x - min|)`` this is the one-dimensional
    tail bound applied to ``2 delta``, which is exactly how it is evaluated.
    """
    doubled = delta.scaled(2.0)

    def f(at):
        return tail_bound(doubled, at).value

    return BoundCurve(name, f, "uniformly log-concave measure", {"delta": _mod_params(delta)})


def power_curve(alpha: float, p: float, c: float | None = None, name: str = "power") -> BoundCurve:
    """``c alpha^{1/p} a~ log^{1-1/p}(1/a~)`` for ``delta(t) = alpha t^p``.

    The default ``c = (e-1)/(2e) 2^{1/p}`` is what the general curve gives for
    a power modulus, so the two coincide.
    """
    if p < 2:
        raise ValueError("a midpoint modulus alpha t^p needs p >= 2")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if c is None:
        c = HALF_CONSTANT * 2 ** (1 / p)
    k = c * alpha ** (1 / p)

    def f(at):
        return k * at * math.log(1 / at) ** (1 - 1 / p)

    return BoundCurve(name, f, "uniformly log-concave measure, power modulus",
                      {"alpha": alpha, "p": p, "c": c})


def bakry_ledoux_curve(name: str = "bakry_ledoux") -> BoundCurve:
    """Gaussian profile ``phi(Phi^{-1}(a~))``."""

    def f(at):
        x = ndtri(at)
        return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    return BoundCurve(name, f, "Bakry-Ledoux (curvature bounded below by 1)", {})


def bobkov_curve(r: float, ball_mass: float, mass_form: bool = False, name: str = "bobkov") -> BoundCurve:
    """``(1/2r)[a log 1/a + (1-a) log 1/(1-a) + log mu{||x|| <= r}]``, clamped at 0.

    With ``mass_form`` the argument is the raw mass ``mu(A)`` in (0, 1); the
    entropy term is symmetric, so both readings agree on ``(0, 1/2]``.
    """
    if not r > 0 or not 0 < ball_mass <= 1:
        raise ValueError("need r > 0 and ball_mass in (0, 1]")
    lb = math.log(ball_mass)

    def f(a):
        if not mass_form:
            a = min(a, 1 - a)
        ent = -a * math.log(a) - (1 - a) * math.log1p(-a)
        return max((ent + lb) / (2 * r), 0.0)

    return BoundCurve(name, f, "Bobkov (any log-concave measure)",
                      {"r": r, "ball_mass": ball_mass, "mass_form": mass_form})


def p_convex_body_curve(alpha: float, p: float, n: int, lipschitz: float = DEFAULT_LIPSCHITZ,
                        name: str = "p_convex_body") -> BoundCurve:
    """Uniform measure on the unit ball of a p-uniformly convex norm with constant alpha.

    The log-concave curve for ``exp(-||x||^p)`` is transported to the ball by a
    map with Lipschitz constant ``lipschitz * Gamma(1+n/p)^{-1/n}``, so the
    curve is multiplied by ``Gamma(1+n/p)^{1/n} / lipschitz``.
    """
    if p < 2 or n < 1:
        raise ValueError("need p >= 2 and n >= 1")
    base = ulc_curve(Power(alpha, p))
    factor = math.exp(gammaln(1 + n / p) / n) / lipschitz

    def f(at):
        return base.func(at) * factor

    return BoundCurve(name, f, "uniform measure on a p-uniformly convex ball",
                      {"alpha": alpha, "p": p, "n": n, "lipschitz": lipschitz})


def p_convex_body_constant(alpha: float, p: float, n: int, lipschitz: float = DEFAULT_LIPSCHITZ) -> float:
    """``c`` such that the p-convex ball curve is ``c a~ log^{1-1/p}(1/a~)``."""
    return HALF_CONSTANT * (2 * alpha) ** (1 / p) * math.exp(gammaln(1 + n / p) / n) / lipschitz


def body_constant(delta: ModulusSpec, n: int) -> float:
    """``(e-1) / (2e max(n delta(int_0^{1/4} exp(-2 n delta)), 1))``."""
    m = modulus_integral(delta, weight=2.0 * n, upper=0.25)
    return (_E - 1) / (2 * _E * max(n * delta.value(m), 1.0))


def convex_body_curve(delta: ModulusSpec, n: int, c_prime: float = DEFAULT_C_PRIME,
                      name: str = "convex_body") -> BoundCurve:
    """``c' C_{n,delta} a~ log(1/a~) / delta^{-1}(log(1/a~) / 2n)``.

    ``delta`` is the modulus of convexity of the norm.  The inverse is taken
    for delta truncated at 1/4, i.e. clipped at 1/4 once the argument exceeds
    ``delta(1/4)``; that covers sets of mass below ``exp(-2 n delta(1/4))``.
    """
    if not math.isfinite(delta.value(0.25)):
        raise ValueError("modulus must be finite on [0, 1/4]")
    C = body_constant(delta, n)
    clipped = Truncated(delta, 0.25)

    def f(at):
        L = math.log(1 / at)
        return c_prime * C * at * L / clipped.inverse(L / (2 * n))

    return BoundCurve(name, f, "uniform measure on a uniformly convex ball",
                      {"delta": _mod_params(delta), "n": n, "c_prime": c_prime, "C": C})


def sweep(curves: Sequence[BoundCurve], a_grid: Sequence[float], threads: int = 1) -> list[dict]:
    """Rows ``{"a_tilde": x, name: curve(x), ...}`` in grid order."""
    grid = [float(x) for x in a_grid]
    if not grid:
        raise ValueError("empty grid")
    if any(not 0 < x <= 0.5 for x in grid):
        raise ValueError("grid must lie in (0, 1/2]")

    def row(x):
        out = {"a_tilde": x}
        for c in curves:
            out[c.name] = c(x)
        return out

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(row, grid))
    return [row(x) for x in grid]


def sweep_csv(curves: Sequence[BoundCurve], rows: list[dict], header: dict | None = None) -> str:
    return rows_to_csv(rows, ["a_tilde"] + [c.name for c in curves], header)


def sweep_sidecar(curves: Sequence[BoundCurve], extra: dict | None = None) -> str:
    body = {"curves": [c.describe() for c in curves]}
    body.update(extra or {})
    return json.dumps(body, indent=2, sort_keys=True, default=str)
