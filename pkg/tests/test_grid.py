import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from insensitize.errors import ConfigurationError
from insensitize.grid import (build_clamped_fourth_derivative, build_dirichlet_second_derivative,
                              build_first_derivative, build_grid, indicator_mask, require_overlap)


def test_grid_spacing():
    g = build_grid(1.0, 9, 1.0, 10)
    assert g.dx == pytest.approx(0.1, abs=1e-15)
    assert g.dt == pytest.approx(0.1, abs=1e-15)
    g = build_grid(2 * np.pi, 127, 1.0, 256)
    assert g.dx == pytest.approx(2 * np.pi / 128, rel=1e-15)
    assert np.allclose(g.t_half, (np.arange(256) + 0.5) / 256)
    assert g.x[0] > 0 and g.x[-1] < g.L


@pytest.mark.parametrize("args", [(-1, 16, 1, 16), (1, 16, 0, 16), (1, 7, 1, 16), (1, 16, 1, 4)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_operators_symmetric_and_zero_preserving():
    g = build_grid(1.0, 20, 1.0, 10)
    for op in (build_dirichlet_second_derivative(g), build_clamped_fourth_derivative(g)):
        A = op.toarray()
        assert np.max(np.abs(A - A.T)) == 0.0
        assert np.all(op(np.zeros(g.N)) == 0)
    D4 = build_clamped_fourth_derivative(g).toarray() * g.dx ** 4
    assert D4[0, 0] == 7 and D4[-1, -1] == 7 and D4[5, 5] == 6
    D1 = build_first_derivative(g).toarray()
    assert np.max(np.abs(D1 + D1.T)) == 0.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(8, 80), seed=st.integers(0, 2 ** 32 - 1))
def test_definiteness_on_random_vectors(n, seed):
    g = build_grid(1.0, n, 1.0, 8)
    rng = np.random.default_rng(seed)
    D2, D4 = build_dirichlet_second_derivative(g), build_clamped_fourth_derivative(g)
    for _ in range(4):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert np.vdot(v, D2(v)).real <= 0
        assert np.vdot(v, D4(v)).real >= 0


def test_second_derivative_discrete_eigenpair():
    g = build_grid(1.0, 31, 1.0, 8)
    v = np.sin(np.pi * g.x / g.L)
    lam = -(2 / g.dx ** 2) * (1 - np.cos(np.pi * g.dx / g.L))
    assert np.allclose(build_dirichlet_second_derivative(g)(v), lam * v, rtol=0, atol=1e-10)


def _d4_error(n):
    g = build_grid(1.0, n, 1.0, 8)
    k = 2 * np.pi
    w = np.sin(np.pi * g.x) ** 2
    exact = -0.5 * k ** 4 * np.cos(k * g.x)
    return g.dx, np.sqrt(g.dx * np.sum((build_clamped_fourth_derivative(g)(w) - exact) ** 2))


def test_fourth_derivative_second_order():
    # oracle: the closed-form fourth derivative of sin^2, on three refinements
    (h1, e1), (h2, e2), (h3, e3) = _d4_error(31), _d4_error(63), _d4_error(127)
    for ha, ea, hb, eb in ((h1, e1, h2, e2), (h2, e2, h3, e3)):
        assert 1.8 <= np.log(ea / eb) / np.log(ha / hb) <= 2.2


def test_second_derivative_second_order():
    errs = []
    for n in (31, 63, 127):
        g = build_grid(1.0, n, 1.0, 8)
        u = np.sin(np.pi * g.x) ** 2
        exact = 2 * np.pi ** 2 * np.cos(2 * np.pi * g.x)
        errs.append((g.dx, np.max(np.abs(build_dirichlet_second_derivative(g)(u) - exact))))
    for (ha, ea), (hb, eb) in zip(errs[:-1], errs[1:]):
        assert 1.8 <= np.log(ea / eb) / np.log(ha / hb) <= 2.2


def test_masks():
    g = build_grid(1.0, 9, 1.0, 10)
    assert np.all(indicator_mask(g, 0.0, 1.0).values == 1)
    m = indicator_mask(g, 0.4, 0.6)
    assert np.flatnonzero(m.values).tolist() == [4]  # node 5, x = 0.5
    left, right = indicator_mask(g, 0, 0.5), indicator_mask(g, 0.5, 1.0)
    assert not left.intersects(right)
    with pytest.raises(ConfigurationError):
        require_overlap(left, right)
    with pytest.raises(ConfigurationError):
        indicator_mask(g, 0.6, 0.4)
    with pytest.raises(ConfigurationError):
        indicator_mask(g, -0.1, 0.4)
    assert np.all((m.values >= 0) & (m.values <= 1))
