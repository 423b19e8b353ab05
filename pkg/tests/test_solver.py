import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from insensitize.errors import ConfigurationError, NumericalError
from insensitize.experiments import convergence_study
from insensitize.grid import build_clamped_fourth_derivative, build_dirichlet_second_derivative, build_grid
from insensitize.solver import DispersiveSolver, Trajectory, l2_inner, l2_norm, sample_source

from conftest import cnormal


@pytest.fixture(scope="module")
def solver():
    return DispersiveSolver(build_grid(1.0, 32, 1.0, 64))


def test_zero_in_zero_out(solver):
    g = solver.grid
    z = np.zeros(g.N, dtype=complex)
    assert np.all(solver.cn_step(z, z, "forward") == 0)
    assert np.all(solver.cn_step(z, z, "backward") == 0)
    assert np.all(solver.solve_forward(z).values == 0)
    assert np.all(solver.solve_backward(z).values == 0)
    assert np.all(solver.solve_forward_nonlinear(z, None, 1.0).values == 0)
    with pytest.raises(ConfigurationError):
        solver.cn_step(z, z, "sideways")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), backward=st.booleans())
def test_single_step_unitary(seed, backward):
    s = DispersiveSolver(build_grid(1.0, 24, 1.0, 16))
    u = cnormal(np.random.default_rng(seed), s.grid.N)
    out = s.cn_step(u, np.zeros_like(u), "backward" if backward else "forward")
    assert abs(np.linalg.norm(out) / np.linalg.norm(u) - 1) <= 1e-12


def test_free_flow_conserves_norm_both_directions(rng):
    s = DispersiveSolver(build_grid(1.0, 64, 1.0, 2048))
    u0 = cnormal(rng, s.grid.N)
    for traj in (s.solve_forward(u0), s.solve_backward(u0)):
        n = traj.norms()
        assert np.max(np.abs(n / n[0] - 1)) <= 1e-11


def test_one_step_multiplier_on_discrete_eigenvector(solver):
    # oracle: dense eigenpair of D2 - D4 and the Cayley factor of CN
    g = solver.grid
    H = build_dirichlet_second_derivative(g).toarray() - build_clamped_fourth_derivative(g).toarray()
    lam, V = np.linalg.eigh(H)
    for k in (-1, -5, 0):
        w = V[:, k].astype(complex)
        tau = g.dt / 2
        factor = (1 + 1j * tau * lam[k]) / (1 - 1j * tau * lam[k])
        assert np.allclose(solver.step_forward(w, np.zeros_like(w)), factor * w, atol=1e-12)


def test_forward_backward_duality(solver, rng):
    g = solver.grid
    for _ in range(20):
        u0, p = cnormal(rng, g.N), cnormal(rng, g.N)
        lhs = l2_inner(solver.solve_forward(u0).final, p, g)
        rhs = l2_inner(u0, solver.solve_backward(p).initial, g)
        assert abs(lhs - rhs) <= 1e-10 * l2_norm(u0, g) * l2_norm(p, g)


def test_source_duality(solver, rng):
    # u(T) from a source f against a homogeneous backward solution from b:
    # <u(T), b> = -i dt dx sum_n f_n conj(vbar_n), vbar the half-step averages
    g = solver.grid
    for _ in range(5):
        f, b = cnormal(rng, (g.M, g.N)), cnormal(rng, g.N)
        uT = solver.solve_forward(np.zeros(g.N), f).final
        vbar = solver.solve_backward(b).midpoints()
        lhs = l2_inner(uT, b, g)
        rhs = -1j * g.dt * g.dx * np.sum(f * np.conj(vbar))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_banded_backend_matches_eigen(rng):
    g = build_grid(1.0, 32, 1.0, 128)
    e, b = DispersiveSolver(g), DispersiveSolver(g, backend="banded")
    u0, f = cnormal(rng, g.N), cnormal(rng, (g.M, g.N))
    ue, ub = e.solve_forward(u0, f), b.solve_forward(u0, f)
    assert np.max(np.abs(ue.values - ub.values)) <= 1e-8 * np.max(np.abs(ue.values))
    assert np.allclose(e.solve_Kh(u0), b.solve_Kh(u0), atol=1e-12)
    n = b.solve_backward(u0).norms()
    assert np.max(np.abs(n / n[0] - 1)) <= 1e-9
    with pytest.raises(ConfigurationError):
        DispersiveSolver(g, backend="qr")


def test_zeta_zero_is_linear_solve_bitwise(solver, rng):
    g = solver.grid
    u0, f = cnormal(rng, g.N), cnormal(rng, (g.M, g.N))
    assert np.array_equal(solver.solve_forward_nonlinear(u0, f, 0.0).values,
                          solver.solve_forward(u0, f).values)


def test_cubic_deviation_scales_like_amplitude_cubed(solver, rng):
    g = solver.grid
    shape = np.sin(np.pi * g.x) ** 2 * (1 + 0.5j * np.cos(3 * g.x))
    shape = shape / np.max(np.abs(shape))
    devs = []
    amps = (1e-3, 2e-3, 4e-3)
    for a in amps:
        lin = solver.solve_forward(a * shape).values
        nl = solver.solve_forward_nonlinear(a * shape, None, 1.0).values
        devs.append(np.max(np.abs(nl - lin)))
    slopes = np.diff(np.log(devs)) / np.diff(np.log(amps))
    assert np.all(np.abs(slopes - 3) < 0.1)


def test_inner_picard_failure_is_reported():
    g = build_grid(1.0, 16, 1.0, 8)
    s = DispersiveSolver(g, picard_maxit=2, picard_tol=1e-15)
    with pytest.raises(NumericalError) as err:
        s.solve_forward_nonlinear(50 * np.ones(g.N), None, 1.0)
    assert "residual" in err.value.diagnostics


def test_l2_inner_examples(rng):
    g = build_grid(1.0, 9, 1.0, 10)
    assert l2_norm(np.ones(9), g) ** 2 == pytest.approx(0.9, rel=1e-14)
    a, b = cnormal(rng, 9), cnormal(rng, 9)
    assert l2_inner(a, a, g).imag == 0 and l2_inner(a, a, g).real >= 0
    assert l2_inner(a, b, g) == pytest.approx(np.conj(l2_inner(b, a, g)), rel=1e-14)
    with pytest.raises(ConfigurationError):
        l2_inner(a, np.ones(10), g)


def test_source_sampling_and_trajectory_validation(small_grid):
    g = small_grid
    s = sample_source(g, lambda t: np.full(g.N, t))
    assert np.allclose(s[:, 0], g.t_half)
    with pytest.raises(ConfigurationError):
        sample_source(g, np.zeros((g.M + 1, g.N)))
    with pytest.raises(NumericalError):
        sample_source(g, np.full((g.M, g.N), np.nan))
    with pytest.raises(ConfigurationError):
        Trajectory(np.zeros((g.M, g.N)), g)


def test_manufactured_solution_second_order():
    _, orders = convergence_study(1.0, 1.0, [(32, 64), (64, 128), (128, 256)])
    assert all(1.8 <= o <= 2.2 for o in orders)
