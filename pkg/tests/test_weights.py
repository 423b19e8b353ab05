import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from insensitize.errors import ConfigurationError
from insensitize.grid import build_grid
from insensitize.solver import Trajectory
from insensitize.weights import (ScaledValue, WeightParams, WeightSpec, eval_carleman_weights,
                                 eval_extremal, eval_gamma, eval_modified_weights,
                                 weighted_sample, weighted_sample_scaled)

SPOT = WeightParams(lam=2.0, mu=1.5, x0=-1.0, T=1.0, L=1.0)


def test_gamma_branches():
    T = 2.0
    assert eval_gamma(T / 4, T) == pytest.approx(3 * T ** 2 / 16)
    assert eval_gamma(3 * T / 4, T) == pytest.approx(T ** 2 / 4)
    assert eval_gamma(T / 2, T) == pytest.approx(T ** 2 / 4)
    assert eval_gamma(np.nextafter(T / 2, T), T) == pytest.approx(T ** 2 / 4)
    with pytest.raises(ConfigurationError):
        eval_gamma(1.1 * T, T)


def test_spot_values():
    # mu must exceed 1 for WeightParams, so the mu = 1 spot values use an
    # unvalidated parameter object; the closed form needs only the fields
    p = object.__new__(WeightParams)
    for k, v in dict(lam=2.0, mu=1.0, x0=-1.0, T=1.0, L=1.0).items():
        object.__setattr__(p, k, v)
    w = eval_carleman_weights(0.5, 0.0, p)
    assert w.xi == pytest.approx(4 * math.e ** 3, rel=1e-14)
    assert float(w.xi) == pytest.approx(80.342, abs=1e-3)
    assert w.log_theta == pytest.approx(8 * (math.e ** 3 - math.e ** 10), rel=1e-14)
    ext = eval_extremal(0.5, p)
    assert ext.sigma_hat == 0.0 and ext.underflow
    assert ext.log_sigma_hat == pytest.approx(8 * (math.e ** 6 - math.e ** 10), rel=1e-14)
    assert ext.log_sigma_hat == pytest.approx(-1.73e5, rel=1e-2)


def test_parameter_validation():
    for kw in (dict(lam=1.0), dict(mu=0.5), dict(x0=0.0)):
        args = dict(lam=2.0, mu=1.5, x0=-0.5, T=1.0, L=1.0) | kw
        with pytest.raises(ConfigurationError):
            WeightParams(**args)
    with pytest.raises(ConfigurationError):
        eval_carleman_weights(0.0, 0.5, SPOT)
    with pytest.raises(ConfigurationError):
        eval_carleman_weights(1.0, 0.5, SPOT)
    with pytest.raises(ConfigurationError):
        eval_modified_weights(0.0, 0.5, SPOT)
    with pytest.raises(ConfigurationError):
        eval_carleman_weights(0.5, 1.5, SPOT)
    p = WeightParams.default(2.0, 3.0)
    assert (p.lam, p.mu, p.x0) == (8 * (2 + 4), 1.5, -1.5)


params = st.builds(WeightParams, lam=st.floats(1.01, 100), mu=st.floats(1.01, 4),
                   x0=st.floats(-3, -0.01), T=st.floats(0.1, 5), L=st.floats(0.1, 5))


@settings(max_examples=40, deadline=None)
@given(p=params)
def test_exponents_negative_and_extremal_bounds(p):
    t = np.linspace(0, p.T, 102)[1:-1]
    x = np.linspace(0, p.L, 100)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    cw = eval_carleman_weights(tt, xx, p)
    mw = eval_modified_weights(tt, xx, p)
    assert np.all(cw.log_theta < 0) and np.all(mw.log_sigma < 0)
    assert np.all((cw.theta >= 0) & (cw.theta < 1))
    assert np.all((mw.sigma >= 0) & (mw.sigma < 1))
    ext = eval_extremal(t, p)
    assert np.all(ext.nu_star[:, None] <= mw.nu * (1 + 1e-14))
    assert np.all(mw.nu <= ext.nu_hat[:, None] * (1 + 1e-14))
    assert np.all(ext.log_sigma_star[:, None] <= mw.log_sigma + 1e-9 * np.abs(mw.log_sigma))
    assert np.all(mw.log_sigma <= ext.log_sigma_hat[:, None] + 1e-9 * np.abs(mw.log_sigma))
    assert np.allclose(ext.nu_star, np.exp(-3 * p.mu * p.x0) / eval_gamma(t, p.T), rtol=1e-13)


def test_limits_in_time():
    p = WeightParams.default(1.0, 1.0)
    t = np.geomspace(1e-6, 0.5, 40)
    lt = eval_carleman_weights(t, 0.3, p).log_theta
    assert np.all(np.diff(lt) > 0)  # theta decreases monotonically towards t = 0
    assert eval_carleman_weights(1e-6, 0.3, p).theta == 0.0
    assert eval_modified_weights(1e-6, 0.3, p).sigma == 0.0
    # theta also vanishes at T, sigma stays at its t = T/2 value
    assert eval_carleman_weights(1 - 1e-6, 0.3, p).theta == 0.0
    late = eval_modified_weights(np.array([0.5, 0.75, 0.9, 1.0]), 0.3, p).log_sigma
    assert np.all(late == late[0]) and np.isfinite(late[0])


def test_family_agreement_on_first_half():
    p = WeightParams.default(1.0, 1.0)
    t = np.linspace(0.01, 0.5, 50)[:, None]
    x = np.linspace(0, 1, 33)[None, :]
    cw, mw = eval_carleman_weights(t, x, p), eval_modified_weights(t, x, p)
    assert np.array_equal(cw.log_xi, mw.log_nu)
    assert np.array_equal(cw.log_theta, mw.log_sigma)
    a = eval_modified_weights(0.75, x, p)
    b = eval_modified_weights(0.9, x, p)
    assert np.array_equal(a.nu, b.nu) and np.array_equal(a.log_sigma, b.log_sigma)


def test_weight_spec_parsing():
    s = WeightSpec.parse("lam^7 mu^8 xi^7 theta^2")
    assert s.power("xi") == 7 and s.power("theta") == 2 and s.power("nu") == 0
    assert WeightSpec.parse("λ ξ^(1/2) θ^2").power("xi") == 0.5
    assert WeightSpec.parse({"sigma": 2}).power("sigma") == 2
    assert WeightSpec.parse("1").powers == ()
    for bad in ("xi^1/3", "rho^2", "xi^^2", "theta^a"):
        with pytest.raises(ConfigurationError):
            WeightSpec.parse(bad)
    assert WeightSpec.parse("lam^3 mu^2").prefactor(SPOT) == pytest.approx(8 * 2.25)


def test_weighted_sample_examples():
    g = build_grid(1.0, 9, 1.0, 10)
    ones = Trajectory(np.ones((g.M + 1, g.N), dtype=complex), g)
    assert weighted_sample(ones, "1", SPOT, g) == pytest.approx(0.9, rel=1e-14)
    zero = Trajectory(np.zeros((g.M + 1, g.N), dtype=complex), g)
    assert weighted_sample(zero, "theta^2", SPOT, g) == 0.0
    huge = WeightParams(lam=1e12, mu=1.5, x0=-0.5, T=1.0, L=1.0)
    assert weighted_sample(ones, "theta^2", huge, g) == 0.0
    # the scaled form still carries the information
    sv = weighted_sample_scaled(ones, "theta^2", huge, g)
    assert sv.mantissa > 0 and sv.log < -1e12


@settings(max_examples=30, deadline=None)
@given(c=st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6), seed=st.integers(0, 1000))
def test_weighted_integral_homogeneous(c, seed):
    g = build_grid(1.0, 12, 1.0, 10)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((g.M, g.N)) + 1j * rng.standard_normal((g.M, g.N))
    p = WeightParams.default(1.0, 1.0)
    a = weighted_sample_scaled(f, "lam^7 mu^8 xi^7 theta^2", p, g)
    b = weighted_sample_scaled(c * f, "lam^7 mu^8 xi^7 theta^2", p, g)
    assert a.log_scale == b.log_scale
    assert b.mantissa == pytest.approx(abs(c) ** 2 * a.mantissa, rel=1e-12)


finite_sv = st.builds(ScaledValue, st.floats(-1e6, 1e6), st.floats(1e-100, 1e100))


@given(a=finite_sv, b=finite_sv)
def test_scaled_value_arithmetic(a, b):
    s = a + b
    assert s.log >= max(a.log, b.log) - 1e-12 * max(1, abs(a.log), abs(b.log))
    assert (a + b).log == pytest.approx((b + a).log, rel=1e-12, abs=1e-12)
    q = a / b
    assert q.log == pytest.approx(a.log - b.log, rel=1e-12, abs=1e-9)
    assert a.relative_difference(a) == 0.0
    assert (a + ScaledValue.zero()) == a


def test_scaled_value_value_and_zero():
    assert ScaledValue(math.log(3.0), 2.0).value == pytest.approx(6.0)
    assert ScaledValue(-1e6, 1.0).value == 0.0
    assert ScaledValue(1e6, 1.0).value == math.inf
    assert ScaledValue.zero().log == -math.inf
    with pytest.raises(ZeroDivisionError):
        ScaledValue(0.0, 1.0) / ScaledValue.zero()
