import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoperim.delta import Power, Table
from isoperim.profile import (
    HALF_CONSTANT,
    bakry_ledoux_curve,
    bobkov_curve,
    convex_body_curve,
    p_convex_body_constant,
    p_convex_body_curve,
    power_curve,
    sweep,
    sweep_csv,
    sweep_sidecar,
    ulc_curve,
)


def test_half_constant_value():
    assert HALF_CONSTANT == pytest.approx((math.e - 1) / (2 * math.e))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(2.0, 10.0), st.floats(1e-15, 0.5))
def test_ulc_matches_power_closed_form(alpha, p, a):
    closed = power_curve(alpha, p)(a)
    assert ulc_curve(Power(alpha, p))(a) == pytest.approx(closed, rel=1e-9)


def test_curves_accept_arrays():
    grid = np.array([1e-6, 1e-3, 0.25])
    vals = ulc_curve(Power(0.125, 2))(grid)
    assert vals.shape == (3,)
    assert vals[0] == ulc_curve(Power(0.125, 2))(1e-6)


def test_curve_domain_is_open_unit_interval():
    with pytest.raises(ValueError):
        bakry_ledoux_curve()(0.0)


def test_curves_are_symmetric_in_mass():
    c = ulc_curve(Power(0.5, 3))
    assert c(0.2) == pytest.approx(c(0.8))


def test_bakry_ledoux_value_at_half():
    # phi(Phi^{-1}(1/2)) = 1/sqrt(2 pi)
    assert bakry_ledoux_curve()(0.5) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_bobkov_clamped_and_symmetric():
    c = bobkov_curve(1.0, 0.5)
    assert c(1e-9) == 0.0
    assert c(0.3) == pytest.approx(c(0.7))
    assert bobkov_curve(1.0, 1.0)(0.5) == pytest.approx(math.log(2) / 2)


def test_p_convex_body_constant_consistent_with_curve():
    alpha, p, n = 0.25, 2.0, 16
    c = p_convex_body_constant(alpha, p, n)
    curve = p_convex_body_curve(alpha, p, n)
    for a in (1e-8, 1e-3, 0.3):
        assert curve(a) == pytest.approx(c * a * math.log(1 / a) ** (1 - 1 / p), rel=1e-10)


def test_p_convex_body_requires_p_two():
    with pytest.raises(ValueError):
        p_convex_body_curve(0.25, 1.5, 3)


def test_convex_body_curve_positive():
    curve = convex_body_curve(Power(0.125, 2), 8)
    vals = [curve(a) for a in np.logspace(-10, math.log10(0.5), 20)]
    assert min(vals) > 0


def test_convex_body_curve_with_table_modulus():
    delta = Table(((0.5, 0.03), (1.0, 0.13), (2.0, 1.0)))
    assert convex_body_curve(delta, 4)(1e-4) > 0


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep([bakry_ledoux_curve()], [])
    with pytest.raises(ValueError):
        sweep([bakry_ledoux_curve()], [0.7])


def test_sweep_threads_do_not_change_results():
    curves = [ulc_curve(Power(0.125, 2)), bakry_ledoux_curve()]
    grid = np.logspace(-9, math.log10(0.5), 30)
    assert sweep(curves, grid, threads=4) == sweep(curves, grid, threads=1)


def test_sweep_csv_and_sidecar():
    curves = [ulc_curve(Power(0.125, 2)), bakry_ledoux_curve()]
    rows = sweep(curves, [0.01, 0.5])
    text = sweep_csv(curves, rows)
    assert text.splitlines()[0] == "a_tilde,ulc,bakry_ledoux"
    side = json.loads(sweep_sidecar(curves, {"seed": None}))
    assert [c["name"] for c in side["curves"]] == ["ulc", "bakry_ledoux"]
