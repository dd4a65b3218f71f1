import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import moduli
from isoperim.delta import (
    CustomNorm,
    EuclideanNorm,
    LqNorm,
    ModulusEstimationWarning,
    Power,
    Table,
    Truncated,
    Zero,
    convex_minorant,
    estimate_norm_modulus,
    lower_convex_hull,
    lq_constants,
    modulus_from_json,
    norm_from_json,
    uniform_convexity_gap,
)


def test_power_value_and_inverse_roundtrip():
    d = Power(0.25, 3)
    t = np.linspace(0, 4, 17)
    np.testing.assert_allclose(d.value(t), 0.25 * t**3)
    np.testing.assert_allclose(d.inverse(d.value(t)), t, atol=1e-14)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        Power(1, 2).value(-0.1)


def test_power_requires_p_at_least_one():
    with pytest.raises(ValueError):
        Power(1.0, 0.5)


def test_table_rejects_decreasing_ratio():
    with pytest.raises(ValueError):
        Table(((1.0, 1.0), (2.0, 1.5)))


def test_table_rejects_unsorted_knots():
    with pytest.raises(ValueError):
        Table(((1.0, 1.0), (1.0, 2.0)))


@pytest.mark.parametrize("ext", ["ratio_linear", "ratio_constant", "linear"])
def test_table_extensions_are_continuous_at_last_knot(ext):
    d = Table(((0.5, 0.1), (1.0, 0.5)), right_extension=ext)
    assert d.value(1.0 + 1e-12) == pytest.approx(0.5, abs=1e-10)
    s = np.linspace(0, 3, 31)
    np.testing.assert_allclose(d.value(d.inverse(s)), s, rtol=1e-12, atol=1e-14)


def test_table_inverse_stable_with_small_curvature():
    d = Table(((1.0, 1.0), (2.0, 2.0 + 1e-9)))
    s = np.logspace(0, 3, 50)
    np.testing.assert_allclose(d.value(d.inverse(s)), s, rtol=1e-13)


def test_truncated_is_infinite_past_cutoff():
    d = Truncated(Power(1, 2), 1.5)
    assert math.isinf(d.value(1.6))
    assert d.value(1.0) == 1.0
    assert d.superlinear


def test_scaling_and_zero():
    assert Power(0.5, 2).scaled(2).value(1.0) == 1.0
    assert Power(0.5, 2).scaled(0).is_zero
    assert Zero().value(3.0) == 0.0


@pytest.mark.parametrize("d", [Zero(), Power(0.2, 3), Table(((1, 1), (2, 3)), "linear"),
                               Table(((1, 1), (2, 3)), tail_rate=0.5), Truncated(Power(1, 2), 2.0)])
def test_json_roundtrip(d):
    back = modulus_from_json(d.to_json())
    t = np.linspace(0, 1.9, 11)
    np.testing.assert_array_equal(back.value(t), d.value(t))
    # past the last knot, where tail_rate matters
    assert back.value(7.0) == d.value(7.0)


def test_unknown_json_kind():
    with pytest.raises(ValueError):
        modulus_from_json({"kind": "spline"})


def test_lower_convex_hull_square_points():
    pts = [(0, 0), (1, 2), (2, 1), (3, 3)]
    assert lower_convex_hull(pts) == [(0, 0), (2, 1), (3, 3)]


def test_minorant_leaves_convex_power_unchanged():
    d = Power(1, 2)
    assert convex_minorant(d) is d


def test_minorant_follows_superlinear_tail():
    d = Table(((0.5, 0.5), (1.0, 1.5)))
    hull = convex_minorant(d)
    t = np.linspace(0, 6, 601)
    assert np.all(hull.value(t) <= d.value(t) * (1 + 1e-9) + 1e-12)
    # far out the hull rejoins delta
    assert hull.value(6.0) == pytest.approx(d.value(6.0), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(moduli())
def test_minorant_sandwich(delta):
    # the sandwich is needed on [0, 2]; the minorant property holds on the whole axis
    ts = np.linspace(0, 6, 121)
    hull = convex_minorant(delta)
    lo, mid, hi = delta.value(ts / 2), hull.value(ts), delta.value(ts)
    fin = np.isfinite(hi)
    assert np.all(lo[fin] <= mid[fin] + 1e-9 * (1 + hi[fin]))
    assert np.all(mid[fin] <= hi[fin] + 1e-9 * (1 + hi[fin]))
    # convexity on the grid
    assert np.all(np.diff(mid[fin], 2) >= -1e-9 * (1 + hi[fin][2:]))


@settings(max_examples=60, deadline=None)
@given(moduli())
def test_gamma_non_decreasing(delta):
    s = np.logspace(-4, 2, 50)
    gam = s / delta.inverse(s)
    assert np.all(np.diff(gam) >= -1e-9 * gam[1:])


@given(st.floats(1.01, 50))
def test_lq_constants_branches(q):
    p, alpha = lq_constants(q)
    if q >= 2:
        assert (p, alpha) == (q, 2.0**-q)
    else:
        assert (p, alpha) == (2.0, (q - 1) / 4)


@pytest.mark.parametrize("q", [1.0, math.inf, 0.5])
def test_lq_constants_rejects(q):
    with pytest.raises(ValueError):
        lq_constants(q)


def test_norm_values_and_duality():
    nrm = LqNorm(3, 3.0)
    x = np.array([1.0, -2.0, 0.5])
    assert nrm(x) == pytest.approx((1 + 8 + 0.125) ** (1 / 3))
    y = np.array([0.3, 0.1, -0.7])
    assert abs(x @ y) <= nrm(x) * nrm.dual(y) * (1 + 1e-12)


def test_unit_ball_volume_of_euclidean_disc():
    assert EuclideanNorm(2).unit_ball_volume() == pytest.approx(math.pi)
    assert LqNorm(4, 2.0).unit_volume().unit_ball_volume() == pytest.approx(1.0)


def test_norm_json_roundtrip():
    nrm = LqNorm(4, 3.0)
    back = norm_from_json(nrm.to_json())
    x = np.arange(1.0, 5.0)
    assert back(x) == pytest.approx(nrm(x))


def test_uniform_convexity_gap_euclidean():
    nrm = EuclideanNorm(2)
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert uniform_convexity_gap(nrm, x, y) == pytest.approx(0.5)


def test_estimated_l3_modulus_meets_clarkson_bound():
    eps = np.linspace(0.2, 2.0, 10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModulusEstimationWarning)
        est = estimate_norm_modulus(LqNorm(2, 3.0), eps, seed=1)
    clarkson = 1 - (1 - (eps / 2) ** 3) ** (1 / 3)
    assert np.all(est.value(eps) >= clarkson * (1 - 1e-5))


def test_custom_norm_modulus_matches_euclidean():
    euclid = lambda x: np.linalg.norm(x, axis=-1)  # noqa: E731
    nrm = CustomNorm(2, euclid, euclid)
    eps = np.array([0.5, 1.0, 1.5])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModulusEstimationWarning)
        est = estimate_norm_modulus(nrm, eps, seed=3)
    np.testing.assert_allclose(est.value(eps), 1 - np.sqrt(1 - eps**2 / 4), atol=1e-4)
