import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoperim.concentration import (
    CONCENTRATION_COLUMNS,
    EnlargementExperiment,
    concentration_csv,
    concentration_rows,
    constant_gamma,
    gamma_from_curve,
    gromov_milman,
    gromov_milman_threshold,
    h_inverse,
    h_value,
    mc_enlargement,
    power_concentration,
    power_gamma,
    profile_concentration,
    small_eps_concentration,
    small_eps_range,
)
from isoperim.delta import EuclideanNorm, LqNorm, Power
from isoperim.profile import p_convex_body_constant, power_curve


def test_constant_gamma_gives_exponential_decay():
    # gamma = c gives h_a(x) = (x - log 1/a)/c, so the bound is a e^{-c eps}
    g = constant_gamma(2.0)
    assert profile_concentration(g, 0.3, 1.5) == pytest.approx(0.3 * math.exp(-3.0), rel=1e-10)


def test_convention_branch_below_log_two():
    g = power_gamma(1.0, 2.0)
    y = 0.3
    assert g(y) == pytest.approx(math.sqrt(-math.log(1 - math.exp(-y))))


def test_h_inverse_roundtrip_above_half():
    g = power_gamma(1.0, 2.0)
    x = h_inverse(g, 0.8, 0.7)
    assert h_value(g, 0.8, x) == pytest.approx(0.7, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(1.0, 6.0), st.floats(1e-9, 0.5), st.floats(0.0, 20.0))
def test_power_gamma_matches_closed_form(c0, p, a, eps):
    closed = ((-math.log(a)) ** (1 / p) + c0 * eps / p) ** p
    assert h_inverse(power_gamma(c0, p), a, eps) == pytest.approx(closed, rel=1e-9)


def test_concentration_decreasing_in_eps():
    g = power_gamma(0.7, 3.0)
    vals = [profile_concentration(g, 0.4, e) for e in np.linspace(0, 5, 30)]
    assert vals[0] == pytest.approx(0.4)
    assert np.all(np.diff(vals) < 0)


def test_gamma_from_curve_recovers_power_gamma():
    g = gamma_from_curve(power_curve(0.25, 2.0))
    c = power_curve(0.25, 2.0).params["c"]
    assert g(3.0) == pytest.approx(c * 0.25**0.5 * math.sqrt(3.0), rel=1e-12)


def test_power_concentration_domain():
    with pytest.raises(ValueError):
        power_concentration(1.0, 2.0, 0.6, 1.0)


def test_gromov_milman_and_threshold():
    alpha, p, n, lam = 0.125, 2.0, 16, 0.5
    e = gromov_milman_threshold(alpha, p, n, lam)
    assert gromov_milman(Power(alpha, p), n, lam, e) == pytest.approx(1 - lam, rel=1e-12)
    with pytest.raises(ValueError):
        gromov_milman(Power(alpha, p), n, 0.0, 0.1)


def test_small_eps_range_boundary():
    delta, n, lam = Power(0.125, 2), 16, 0.5
    top = small_eps_range(delta, n, lam)
    assert small_eps_concentration(delta, n, lam, top * 0.999) is not None
    assert small_eps_concentration(delta, n, lam, top * 1.001) is None
    assert small_eps_concentration(delta, n, lam, 0.0) == pytest.approx(1 - lam)


def test_mc_enlargement_is_monotone_and_reproducible():
    n = 6
    exp = EnlargementExperiment(LqNorm(n, 3.0), tuple([1.0] + [0.0] * (n - 1)), 0.0,
                                (0.0, 0.1, 0.3, 0.6), 20000, seed=4)
    r1, r2 = mc_enlargement(exp), mc_enlargement(exp)
    np.testing.assert_array_equal(r1.empirical, r2.empirical)
    assert np.all(np.diff(r1.empirical) <= 0)
    assert np.all(r1.ci_lo <= r1.empirical) and np.all(r1.empirical <= r1.ci_hi)


def test_mc_rejects_bad_direction():
    exp = EnlargementExperiment(EuclideanNorm(3), (0.0, 0.0, 0.0), 0.0, (0.1,), 10, seed=0)
    with pytest.raises(ValueError):
        mc_enlargement(exp)


def test_rows_blank_where_not_applicable():
    n = 16
    far = 1.01 * small_eps_range(Power(0.125, 2), n, 0.5)
    exp = EnlargementExperiment(EuclideanNorm(n), tuple([1.0] + [0.0] * (n - 1)), 0.0, (0.05, far), 5000, seed=1)
    res = mc_enlargement(exp)
    c0 = p_convex_body_constant(0.25, 2.0, n)
    rows = concentration_rows(res, Power(0.125, 2), n, 0.5, gamma=power_gamma(c0, 2.0), c0=c0, p=2.0)
    assert rows[-1]["gm_improved"] == ""
    assert rows[0]["cor19"] == pytest.approx(rows[0]["propA"], rel=1e-9)
    text = concentration_csv(rows)
    assert text.splitlines()[0] == ",".join(CONCENTRATION_COLUMNS)
    bare = concentration_rows(res, Power(0.125, 2), n, 0.5)
    assert bare[0]["cor19"] == "" and bare[0]["propA"] == ""
