import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itnoise.errors import ConvergenceError
from itnoise.quadrature import gk_adaptive


def test_polynomial_exact():
    r = gk_adaptive(lambda x: 5 * x**4 - 3 * x**2 + 1, [0.0, 2.0])
    assert r.value == pytest.approx(32 - 8 + 2, rel=1e-14)
    assert r.n_intervals == 1


def test_narrow_lorentzian_with_breakpoints():
    g = 1e-6
    f = lambda x: g / ((x - 1) ** 2 + g * g)
    r = gk_adaptive(f, [0.0, 1 - 1e-3, 1.0, 1 + 1e-3, 2.0], rtol=1e-10)
    exact = 2 * math.atan(1 / g)
    assert r.value == pytest.approx(exact, rel=1e-9)


def test_interval_table_is_sorted_and_sums():
    r = gk_adaptive(np.sqrt, [0.0, 0.5, 1.0], rtol=1e-10)
    assert r.value == pytest.approx(2 / 3, rel=1e-9)
    assert np.all(np.diff(r.intervals[:, 0]) > 0)
    assert r.intervals[:, 2].sum() == pytest.approx(r.value)


def test_convergence_error_reports_worst_intervals():
    with pytest.raises(ConvergenceError) as info:
        gk_adaptive(lambda x: 1 / np.sqrt(np.abs(x - 0.3)), [0.0, 1.0], rtol=1e-14, max_intervals=40)
    worst = info.value.worst_intervals
    assert worst and worst[0][0] <= 0.3 <= worst[0][1]


@given(k=st.floats(0.1, 50.0), a=st.floats(-3, 0), b=st.floats(0.01, 3))
@settings(max_examples=50, deadline=None)
def test_cosine_integrals(k, a, b):
    r = gk_adaptive(lambda x: np.cos(k * x), [a, b], rtol=1e-11, atol=1e-13)
    assert r.value == pytest.approx((math.sin(k * b) - math.sin(k * a)) / k, rel=1e-9, abs=1e-11)
