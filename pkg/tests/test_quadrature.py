import math

import numpy as np
import pytest
from scipy import integrate

from nodefrag.quadrature import NumericError, integrate_log, one_minus_exp, phi2


def test_phi2_matches_direct_form_away_from_zero():
    z = np.array([1e-2, 0.5, 3.0, 40.0])
    assert np.allclose(phi2(z), np.exp(-z) - 1 + z, rtol=1e-13)


def test_phi2_small_argument_has_no_cancellation():
    z = np.array([1e-9, 1e-6, 5e-4])
    assert np.allclose(phi2(z), z * z / 2 - z ** 3 / 6, rtol=1e-9)


def test_one_minus_exp():
    assert one_minus_exp(np.array([0.0]))[0] == 0.0
    assert one_minus_exp(np.array([1e-12]))[0] == pytest.approx(1e-12, rel=1e-9)


def test_power_law_against_closed_form():
    # ∫_1^∞ x^{-2.5} dx = 1/1.5
    assert integrate_log(lambda x: x ** -2.5, 1.0, math.inf) == pytest.approx(1 / 1.5, rel=1e-10)


def test_singular_endpoint_against_scipy():
    f = lambda x: x ** -0.5 * np.exp(-x)
    ref = integrate.quad(lambda x: x ** -0.5 * math.exp(-x), 0, math.inf)[0]  # sqrt(pi)
    assert ref == pytest.approx(math.sqrt(math.pi), rel=1e-8)
    assert integrate_log(f, 0.0, math.inf) == pytest.approx(math.sqrt(math.pi), rel=1e-9)


def test_breakpoint_kink():
    f = lambda x: np.where(x < 2.0, x, 4.0 - x) * (x < 4.0)
    assert integrate_log(f, 0.5, 4.0, breakpoints=(2.0,)) == pytest.approx(4.0 - 0.125, rel=1e-10)


def test_divergent_integral_raises():
    with pytest.raises(NumericError) as info:
        integrate_log(lambda x: 1.0 / x ** 0.5, 1.0, math.inf)
    assert info.value.achieved is not None
