from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from nbbm_lab import density as dn
from nbbm_lab import fbp


@pytest.mark.parametrize("alpha", [fbp.SQRT2, 1.6, 2.0])
def test_wave_closed_form(alpha):
    # unit mass, zero at the origin, w'(0) = 2 and the ODE holds
    mass, _ = integrate.quad(lambda x: fbp.wave_profile(alpha, x), 0, np.inf)
    assert mass == pytest.approx(1.0, rel=1e-9)
    assert fbp.wave_profile(alpha, 0.0) == 0.0
    h = 1e-6
    assert (fbp.wave_profile(alpha, h) / h) == pytest.approx(2.0, rel=1e-4)
    x = np.linspace(0.1, 5, 50)
    e = 1e-4
    w = lambda y: fbp.wave_profile(alpha, y)  # noqa: E731
    d2 = (w(x + e) - 2 * w(x) + w(x - e)) / e**2
    d1 = (w(x + e) - w(x - e)) / (2 * e)
    assert np.max(np.abs(0.5 * d2 + alpha * d1 + w(x))) < 1e-5


@pytest.mark.parametrize("alpha", [fbp.SQRT2, 2.0])
def test_wave_tail_matches_integral(alpha):
    for r in (0.0, 0.3, 2.0):
        val, _ = integrate.quad(lambda x: fbp.wave_profile(alpha, x), r, np.inf)
        assert fbp.wave_tail(alpha, r) == pytest.approx(val, rel=1e-9)
    assert fbp.wave_tail(alpha, -1.0) == 1.0


def test_wave_norms():
    assert fbp.wave_norm(fbp.SQRT2) == 2.0
    assert fbp.wave_norm(2.0) == pytest.approx(2 / math.sqrt(2))


def test_subcritical_speed_rejected():
    with pytest.raises(ValueError):
        fbp.traveling_wave(1.0)


def test_discrete_wave_residual_and_flux():
    w = fbp.traveling_wave()
    scale = w.density.values.max()
    assert fbp.wave_residual(w) <= 10 * w.density.dx**2 * scale
    assert fbp.right_derivative_at_zero(w) == pytest.approx(2.0, abs=10 * w.density.dx)
    assert w.density.mass == pytest.approx(1.0, abs=1e-12)


def test_perturbed_wave_fails_residual():
    w = fbp.traveling_wave()
    v = w.density.values * (1 + 0.01 * np.sin(np.arange(w.density.n) * w.density.dx))
    assert fbp._residual_of_values(v, w.density.dx, w.alpha) > 100 * fbp.wave_residual(w)


def test_boundary_curve():
    L = fbp.BoundaryCurve.linear(2.0, 1.0, intercept=0.5)
    assert L(0.5) == pytest.approx(1.5)
    assert fbp.BoundaryCurve.constant(3.0)(10.0) == 3.0
    with pytest.raises(ValueError):
        fbp.BoundaryCurve(np.array([0.0, 0.0]), np.array([1.0, 2.0]))


def test_absorption_at_constant_level_matches_reflection():
    # P_x(B stays above 0 up to t) = 2 Phi(x / sqrt t) - 1
    from scipy.stats import norm

    x, t = 0.5, 1.0
    rho = dn.DensityGrid(x - 5e-7, 1e-6, np.array([1e6]))
    c = fbp.hitting_survival(rho, fbp.BoundaryCurve.constant(0.0, t), t, 40000, 1e-2, seed=3)
    exact = 2 * norm.cdf(x / math.sqrt(t)) - 1
    p, se = c.survival[-1], c.stderr[-1] * math.exp(-t)
    assert abs(p - exact) <= 4 * se


def test_weighted_survival_of_wave_is_one():
    rho = fbp.traveling_wave().density
    L = fbp.BoundaryCurve.linear(fbp.SQRT2, 0.5)
    c = fbp.hitting_survival(rho, L, 0.5, 20000, 1e-3, seed=1, report_every=50)
    ok = c.stderr > 0
    assert np.all(np.abs(c.estimate[ok] - 1) <= 4 * c.stderr[ok])


def test_forward_tail_and_backward_density_against_wave():
    rho = fbp.traveling_wave().density
    t = 0.5
    L = fbp.BoundaryCurve.linear(fbp.SQRT2, t)
    a = 1.0
    est, se = fbp.forward_tail_mc(rho, L, a, t, 20000, seed=2)
    assert abs(est - fbp.wave_tail(fbp.SQRT2, a - fbp.SQRT2 * t)) <= 4 * se
    x = 1.2
    est, se = fbp.backward_density_mc(rho, L, x, t, 20000, seed=2)
    assert abs(est - fbp.wave_profile(fbp.SQRT2, x - fbp.SQRT2 * t)) <= 4 * se


def test_far_boundary_gives_free_tail():
    rho = fbp.traveling_wave().density
    t, a = 0.5, 1.0
    far = fbp.BoundaryCurve.constant(-1e6, t)
    est, se = fbp.forward_tail_mc(rho, far, a, t, 20000, seed=5, h=1e-2)
    assert abs(est - fbp.free_tail(rho, a, t)) <= 4 * se
    near = fbp.BoundaryCurve.linear(fbp.SQRT2, t)
    est, se = fbp.forward_tail_mc(rho, near, a, t, 5000, seed=5)
    assert fbp.free_tail(rho, a, t) >= est - 4 * se


def test_forward_shares_streams_with_survival():
    rho = fbp.traveling_wave().density
    t = 0.2
    L = fbp.BoundaryCurve.linear(fbp.SQRT2, t)
    est, _ = fbp.forward_tail_mc(rho, L, -np.inf, t, 2000, seed=7, h=1e-2)
    c = fbp.hitting_survival(rho, L, t, 2000, 1e-2, seed=7)
    assert est == c.estimate[-1]


def test_speed_estimators():
    assert abs(fbp.speed_estimate(1, 20.0, 2.0, seed=1)) < 1.0
    assert math.isnan(fbp.stationary_speed(1, 5.0, 1.0))
    v = fbp.speed_estimate(200, 20.0, 5.0, seed=2)
    assert 1.0 < v < fbp.SQRT2 + 0.1
    # jump-rate statistic ignores the crossings of the two leftmost: an upper bound
    assert fbp.stationary_speed(200, 20.0, 5.0, seed=2) > v
    with pytest.raises(ValueError):
        fbp.speed_estimate(10, 1.0, 2.0)
