import math

import numpy as np
import pytest
from scipy import integrate

from nodefrag.exponent import (General, LevyMeasureSpec, Stable, Tilted, check_admissible,
                               eval_psi, eval_psi_prime, mark_intensity, nu1_constant,
                               pi_star_tail_stable, psi_inverse, stable_levy_constant, tilt,
                               truncate)
from nodefrag.quadrature import NumericError

# frozen from an independent scipy.quad/brentq computation
LAM_EPS = 282.0947917738782
M_EPS = 8.462843753216346
PSI_EPS_1 = 0.957732726609467
PSI_EPS_INV_1 = 1.0296544232342069
MARK_01 = 1.808530699883831


def tabulated(density, drift=0.0, lo=1e-9, hi=60.0, tail_low=2.5, tail_high=30.0, k=600):
    ell = np.geomspace(lo, hi, k)
    return General(drift, LevyMeasureSpec(ell, density(ell), tail_low, tail_high))


def tempered(alpha=1.5, drift=0.3):
    return tabulated(lambda x: x ** (-1 - alpha) * np.exp(-x), drift=drift, k=4000)


def tabulated_stable(stable):
    # exact power law: the table and both tail extensions coincide with it
    return tabulated(stable.levy_density, hi=1e3, tail_high=2.5, k=50)


def tempered_psi(lam, alpha=1.5, drift=0.3):
    return drift * lam + math.gamma(-alpha) * ((1 + lam) ** alpha - 1 - alpha * lam)


def test_stable_closed_forms(stable):
    assert eval_psi(stable, 4.0) == pytest.approx(8.0, rel=1e-15)
    assert eval_psi(stable, 0.0) == 0.0
    assert eval_psi_prime(stable, 1.0) == pytest.approx(1.5)
    assert stable_levy_constant(1.5) == pytest.approx(0.4231421876608172, rel=1e-12)


@pytest.mark.parametrize("bad", [1.0, 2.0, 0.5])
def test_stable_alpha_domain(bad):
    with pytest.raises(ValueError):
        Stable(bad)


def test_domain_errors(stable):
    with pytest.raises(ValueError):
        eval_psi(stable, -1.0)
    with pytest.raises(ValueError):
        psi_inverse(stable, -0.1)
    with pytest.raises(ValueError):
        tilt(stable, 0.0)
    with pytest.raises(ValueError):
        truncate(stable, 0.0)


def test_general_with_stable_density_matches_closed_form(stable):
    g = tabulated_stable(stable)
    assert eval_psi(g, 4.0) == pytest.approx(8.0, rel=1e-6)
    assert eval_psi(g, 0.0) == 0.0
    assert eval_psi_prime(g, 0.0) == g.drift


def test_general_against_tempered_closed_form():
    g = tempered()
    for lam in (0.5, 2.0, 10.0):
        # tolerance covers log-log interpolation of exp(-l) on the grid
        assert eval_psi(g, lam) == pytest.approx(tempered_psi(lam), rel=1e-5)


@pytest.mark.parametrize("mech", [Stable(1.5), Stable(1.2), tempered()])
def test_psi_prime_finite_difference(mech):
    h = 1e-5
    fd = (eval_psi(mech, 2 + h) - eval_psi(mech, 2 - h)) / (2 * h)
    assert eval_psi_prime(mech, 2.0) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("mech", [Stable(1.5), tempered()])
def test_psi_inverse_round_trip(mech):
    for y in (0.1, 1.0, 10.0, 1000.0):
        assert eval_psi(mech, psi_inverse(mech, y)) == pytest.approx(y, rel=1e-9)
    assert psi_inverse(mech, 0.0) == 0.0


def test_psi_inverse_stable_value(stable):
    assert psi_inverse(stable, 8.0) == pytest.approx(4.0, rel=1e-12)


def test_tilt(stable):
    t = tilt(stable, 1.0)
    assert isinstance(t, Tilted)
    assert eval_psi(t, 3.0) == pytest.approx(7.0, rel=1e-12)
    assert eval_psi(t, 0.0) == 0.0
    assert t.drift == pytest.approx(eval_psi_prime(stable, 1.0))
    for lam in (0.0, 1.0, 5.0):
        assert t.psi(lam) == pytest.approx(t.psi_quadrature(lam), rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("mech", [Stable(1.5), tempered()])
def test_tilt_semigroup(mech):
    a, b = tilt(tilt(mech, 1.0), 2.0), tilt(mech, 3.0)
    for lam in (0.5, 2.0, 8.0):
        assert eval_psi(a, lam) == pytest.approx(eval_psi(b, lam), rel=1e-9)


def test_truncate_stable_values(trunc, stable):
    assert trunc.jump_rate == pytest.approx(LAM_EPS, rel=1e-12)
    assert trunc.mean_jump_mass == pytest.approx(M_EPS, rel=1e-12)
    assert trunc.drain_rate == pytest.approx(M_EPS, rel=1e-12)
    assert trunc.psi(1.0) == pytest.approx(PSI_EPS_1, rel=1e-9)
    assert psi_inverse(trunc, 1.0) == pytest.approx(PSI_EPS_INV_1, rel=1e-9)
    fine = truncate(stable, 2.5e-3)
    assert fine.jump_rate > trunc.jump_rate and fine.mean_jump_mass > trunc.mean_jump_mass


def test_truncate_general_uses_quadrature(stable):
    g = tabulated_stable(stable)
    t = truncate(g, 1e-2)
    assert t.jump_rate == pytest.approx(LAM_EPS, rel=1e-6)
    assert t.mean_jump_mass == pytest.approx(M_EPS, rel=1e-6)


def test_truncated_psi_convex_increasing(trunc):
    v = np.linspace(0, 5, 21)
    p = np.array([trunc.psi(x) for x in v])
    assert p[0] == 0 and np.all(np.diff(p) > 0) and np.all(np.diff(p, 2) > 0)


def test_truncation_consistency(stable):
    # error ~ eps^(2 - alpha): refining eps by 4 gains 4^(1/2) = 2 from below
    for v in (0.5, 2.0):
        e1 = abs(truncate(stable, 1e-2).psi(v) - stable.psi(v))
        e2 = abs(truncate(stable, 2.5e-3).psi(v) - stable.psi(v))
        assert e1 / e2 >= 0.99 * 4 ** (2 - stable.alpha)


@pytest.mark.xfail(strict=True, reason="ratio tends to 4**(2-alpha) = 2 from below")
def test_truncation_error_shrinks_by_two_literal(stable):
    for v in (0.5, 2.0):
        e1 = abs(truncate(stable, 1e-2).psi(v) - stable.psi(v))
        e2 = abs(truncate(stable, 2.5e-3).psi(v) - stable.psi(v))
        assert e1 / e2 >= 2.0


def test_truncated_tilt_by(trunc):
    t = trunc.tilt_by(1.0)
    for v in (0.3, 2.0):
        assert t.psi(v) == pytest.approx(trunc.psi(v + 1) - trunc.psi(1), rel=1e-9)
    assert t.drain_rate == trunc.drain_rate
    tt = t.tilt_by(2.0)
    assert tt.psi(1.0) == pytest.approx(trunc.tilt_by(3.0).psi(1.0), rel=1e-10)


@pytest.mark.parametrize("alpha", [1.1, 1.5, 1.9])
def test_lambda_over_psi_vanishes(alpha):
    lam = np.array([1e2, 1e4, 1e8])
    ratio = lam / np.array([eval_psi(Stable(alpha), x) for x in lam])
    assert np.allclose(ratio, lam ** (1 - alpha), rtol=1e-12)
    assert np.all(np.diff(ratio) < 0)
    if alpha >= 1.5:
        assert ratio[-1] < 1e-3


@pytest.mark.xfail(strict=True, reason="lam/psi(lam) = lam**(1-alpha) = 0.158 at 1e8")
def test_lambda_over_psi_small_at_alpha_1_1_literal():
    assert 1e8 / eval_psi(Stable(1.1), 1e8) < 1e-3


def test_mark_intensity(stable):
    assert mark_intensity(stable, 0.0, 0.1) == 0.0
    lam_a = stable.c_alpha * 0.1 ** -1.5 / 1.5
    assert mark_intensity(stable, 1e6, 0.1) == pytest.approx(lam_a, rel=1e-6)
    assert mark_intensity(stable, 1.0, 0.1) == pytest.approx(MARK_01, rel=1e-9)
    f = lambda x: -math.expm1(-x) * stable.c_alpha * x ** -2.5
    ref = sum(integrate.quad(f, a, b, epsrel=1e-12, limit=200)[0]
              for a, b in [(0.01, 0.1), (0.1, 1), (1, 10), (10, 1e3), (1e3, math.inf)])
    assert mark_intensity(stable, 1.0, 0.01) == pytest.approx(ref, rel=1e-6)


def test_pi_star_and_nu1_constant():
    assert pi_star_tail_stable(1.5, 1.0) == pytest.approx(0.3732821739073952, rel=1e-12)
    assert pi_star_tail_stable(1.5, math.inf) == 0.0
    assert nu1_constant(1.5) == pytest.approx(1.1335719121851007, rel=1e-12)


def test_admissibility():
    assert check_admissible(Stable(1.5)).ok
    rep = check_admissible(tempered())
    assert rep.ok and rep.divergence_assumed_below
    # integrable l pi(dl) near zero: not admissible
    light = tabulated(lambda x: x ** -1.5, tail_low=1.5)
    assert not check_admissible(light).ok


def test_heavy_upper_tail_rejected():
    with pytest.raises(ValueError):
        LevyMeasureSpec(np.array([0.1, 1.0]), np.array([1.0, 1.0]), 2.5, 2.0)


def test_tilted_construction_checks_identity(stable):
    # the drift identity is verified numerically on construction
    assert Tilted(stable, 2.0).drift == pytest.approx(eval_psi_prime(stable, 2.0))


def test_nonconvergent_quadrature_is_reported():
    with pytest.raises(NumericError):
        from nodefrag.quadrature import integrate_log
        integrate_log(lambda x: x ** -1.0, 1.0, math.inf)
