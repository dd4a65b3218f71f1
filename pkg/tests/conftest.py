import math

import numpy as np
import pytest
from hypothesis import strategies as st

from isoperim.delta import Power, Table, Truncated
from isoperim.oned import PowerPotential, Quadratic, TruncatedQuadratic, normalize

# acceptance criterion -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record():
    def _record(k: int, ok: bool, detail: str = ""):
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _record


def standard_suite():
    """(label, density, tail modulus, midpoint modulus) for the 1D checks."""
    out = [("gaussian", normalize(Quadratic(0.5)), Power(0.5, 2), Power(0.125, 2))]
    for p in (2, 3, 4):
        out.append((f"exp_abs_p{p}", normalize(PowerPotential(1.0, p)), Power(1.0, p), Power(2.0**-p, p)))
    kappa, R = 1.0, 1.5
    out.append(("truncated_quadratic", normalize(TruncatedQuadratic(kappa, R)),
                Truncated(Power(kappa, 2), R), Truncated(Power(kappa / 4, 2), 2 * R)))
    return out


@pytest.fixture(scope="session")
def suite():
    return standard_suite()


@st.composite
def moduli(draw):
    """Random moduli with ``delta(t)/t`` non-decreasing."""
    kind = draw(st.sampled_from(["power", "table", "truncated"]))
    if kind == "power":
        return Power(draw(st.floats(0.01, 10)), draw(st.floats(1.0, 8.0)))
    if kind == "truncated":
        return Truncated(Power(draw(st.floats(0.01, 10)), draw(st.floats(1.0, 6.0))),
                         draw(st.floats(0.1, 3.0)))
    k = draw(st.integers(2, 8))
    steps = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    ts = np.cumsum(steps)
    incs = draw(st.lists(st.floats(0.0, 2.0), min_size=k, max_size=k))
    ratios = 0.01 + np.cumsum(incs)
    return Table(tuple(zip(ts.tolist(), (ts * ratios).tolist())))


def log_grid(lo: float, hi: float, num: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), num)
