import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from insensitize.errors import ConfigurationError
from insensitize.experiments import (ManufacturedSolution, Pulse, convergence_study,
                                     manufactured_error, pulse_field, pulse_source, relative_drift,
                                     run_simulate)
from insensitize.grid import build_grid


def test_pulse_profiles():
    g = build_grid(1.0, 63, 1.0, 16)
    gauss = Pulse(2.0, 0.5, 0.1)
    assert gauss.profile(np.array([0.5]))[0] == pytest.approx(2.0)
    assert gauss.profile(np.array([0.6]))[0] == pytest.approx(2.0 * math.exp(-1.0))
    bump = Pulse(1.0, 0.5, 0.1, shape="bump")
    b = bump.profile(g.x)
    assert b.max() == pytest.approx(1.0) and np.all(b[np.abs(g.x - 0.5) >= 0.1] == 0)
    f = pulse_source(g, [Pulse(1.0, 0.5, 0.1, time="sine")])
    assert f.shape == (g.M, g.N)
    assert np.allclose(f[:, g.N // 2], np.sin(np.pi * g.t_half))
    r = pulse_source(g, [Pulse(1.0, 0.5, 0.1, time="ramp")])
    assert np.allclose(r[:, g.N // 2], g.t_half)
    assert np.all(pulse_field(g, []) == 0)


@pytest.mark.parametrize("kw", [{"width": 0.0}, {"shape": "box"}, {"time": "cosine"}])
def test_pulse_rejects_bad_arguments(kw):
    args = {"amplitude": 1.0, "center": 0.5, "width": 0.1} | kw
    with pytest.raises(ConfigurationError):
        Pulse(**args)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_pulse_source_is_linear(a, b):
    g = build_grid(1.0, 16, 1.0, 8)
    p, q = Pulse(1.0, 0.3, 0.1), Pulse(1.0, 0.7, 0.2, shape="bump", time="ramp")
    lhs = pulse_source(g, [Pulse(a, 0.3, 0.1), Pulse(b, 0.7, 0.2, shape="bump", time="ramp")])
    assert np.allclose(lhs, a * pulse_source(g, [p]) + b * pulse_source(g, [q]), atol=1e-12)


def test_manufactured_forcing_matches_finite_differences():
    ms = ManufacturedSolution(1.0, 0.7, 0.5 + 0.2j)
    t, x, h = 0.3, np.linspace(0.1, 0.9, 9), 1e-3
    u = lambda tt, xx: ms.exact(tt, xx)
    ut = (u(t + h, x) - u(t - h, x)) / (2 * h)
    uxx = (u(t, x + h) - 2 * u(t, x) + u(t, x - h)) / h ** 2
    hh = 1e-2
    uxxxx = (u(t, x + 2 * hh) - 4 * u(t, x + hh) + 6 * u(t, x) - 4 * u(t, x - hh) + u(t, x - 2 * hh)) / hh ** 4
    resid = 1j * ut + uxx - uxxxx - ms.zeta * np.abs(u(t, x)) ** 2 * u(t, x)
    # the five-point stencil carries a relative O(hh^2) error of about 6e-4 here
    assert np.allclose(resid, ms.forcing(t, x), rtol=2e-3, atol=1e-6)


def test_zero_solution_has_zero_error():
    g = build_grid(1.0, 16, 1.0, 32)
    assert manufactured_error(ManufacturedSolution(1.0, 0.0), g) == 0.0
    rows, orders = convergence_study(1.0, 1.0, [(16, 32), (32, 64), (64, 128)], amplitude=0.0)
    assert all(r["error"] == 0 for r in rows) and all(math.isnan(o) for o in orders)


@pytest.mark.parametrize("grids", [
    [(16, 32), (32, 64)],
    [(16, 32), (32, 32), (64, 128)],
    [(16, 32), (32, 128), (64, 256)],
    [(32, 64), (16, 32), (64, 128)],
])
def test_convergence_rejects_bad_refinement(grids):
    with pytest.raises(ConfigurationError):
        convergence_study(1.0, 1.0, grids)


def test_convergence_orders_near_two():
    _, orders = convergence_study(1.0, 1.0, [(16, 32), (32, 64), (64, 128)])
    assert all(1.8 <= o <= 2.2 for o in orders)


def test_simulate_zero_data_and_drift():
    g = build_grid(1.0, 16, 1.0, 32)
    traj, q, s = run_simulate(g, np.zeros(g.N), np.zeros((g.M, g.N)))
    assert np.all(traj.values == 0) and np.all(q["energy"] == 0)
    assert s["max_relative_norm_drift"] == 0 and not s["forced"]
    assert relative_drift(np.array([2.0, 2.0, 2.2])) == pytest.approx(0.1)
