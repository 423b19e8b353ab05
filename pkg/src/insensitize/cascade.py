"""Forward-backward cascade systems, the sentinel and its tau-derivative.

State and companion:

    i u_t + u_xx - u_xxxx - zeta |u|^2 u = f0 + 1_w h,                  u(0) = u0
    i v_t + v_xx - v_xxxx - conj(zeta) (conj(u)^2 conj(v) + 2 |u|^2 v)
                                         = f1 + 1_O u,                 v(T) = 0

Adjoint pair:

    i psi_t + psi_xx - psi_xxxx = g1,               psi(0) = psi0
    i phi_t + phi_xx - phi_xxxx = 1_O psi + g0,     phi(T) = 0

Couplings are sampled at half steps as averages of adjacent snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import Grid, Mask, require_overlap
from .solver import DispersiveSolver, SourceLike, Trajectory, l2_inner, l2_norm, sample_source


@lru_cache(maxsize=32)
def get_solver(grid: Grid, a2: float = 1.0, a4: float = -1.0) -> DispersiveSolver:
    """Shared read-only solver per grid; factorization happens once."""
    return DispersiveSolver(grid, a2=a2, a4=a4)


@dataclass(frozen=True)
class CascadeProblem:
    """Data of the controlled cascade. Sources and h are half-step samples (M, N).

    ``h`` is multiplied by the control mask on construction.
    """

    grid: Grid
    omega: Mask
    obs: Mask
    u0: Optional[np.ndarray] = None
    f0: SourceLike = None
    f1: SourceLike = None
    h: SourceLike = None
    zeta: complex = 0.0
    check_overlap: bool = True

    def __post_init__(self):
        g = self.grid
        u0 = np.zeros(g.N, dtype=complex) if self.u0 is None else np.asarray(self.u0, dtype=complex)
        if u0.shape != (g.N,):
            raise ConfigurationError(f"u0 has shape {u0.shape}, expected ({g.N},)")
        if not np.all(np.isfinite(u0)):
            raise ConfigurationError("u0 must be finite")
        for mask in (self.omega, self.obs):
            if mask.values.shape != (g.N,):
                raise ConfigurationError("mask does not match grid")
        if self.check_overlap:
            require_overlap(self.omega, self.obs)
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "f0", sample_source(g, self.f0))
        object.__setattr__(self, "f1", sample_source(g, self.f1))
        object.__setattr__(self, "h", sample_source(g, self.h) * self.omega.values[None, :])

    def with_(self, **changes) -> "CascadeProblem":
        return replace(self, **changes)


@dataclass(frozen=True)
class CascadeSolution:
    u_traj: Trajectory
    v_traj: Trajectory

    @property
    def v0(self) -> np.ndarray:
        return self.v_traj.values[0]


@dataclass(frozen=True)
class AdjointSolution:
    psi_traj: Trajectory
    phi_traj: Trajectory


def solve_cascade_linear(p: CascadeProblem, solver: DispersiveSolver | None = None) -> CascadeSolution:
    if p.zeta != 0:
        raise ConfigurationError("solve_cascade_linear needs zeta = 0")
    solver = solver or get_solver(p.grid)
    u = solver.solve_forward(p.u0, p.f0 + p.h)
    v = solver.solve_backward(np.zeros(p.grid.N, dtype=complex),
                              p.f1 + p.obs.values[None, :] * u.midpoints())
    return CascadeSolution(u, v)


def nonlinear_reactions(u: Trajectory, zeta: complex):
    """Zero-order terms of the v-equation, moved to the right-hand side."""
    zc = np.conj(zeta)
    uu = u.values

    def reaction(n, w):
        return zc * (np.conj(uu[n]) ** 2 * np.conj(w) + 2.0 * np.abs(uu[n]) ** 2 * w)

    return reaction


def solve_cascade_nonlinear(p: CascadeProblem, solver: DispersiveSolver | None = None) -> CascadeSolution:
    if p.zeta == 0:
        return solve_cascade_linear(p, solver)
    solver = solver or get_solver(p.grid)
    u = solver.solve_forward_nonlinear(p.u0, p.f0 + p.h, p.zeta)
    v = solver.solve_backward_reactive(np.zeros(p.grid.N, dtype=complex),
                                       p.f1 + p.obs.values[None, :] * u.midpoints(),
                                       nonlinear_reactions(u, p.zeta))
    return CascadeSolution(u, v)


def solve_cascade(p: CascadeProblem, solver: DispersiveSolver | None = None) -> CascadeSolution:
    return solve_cascade_nonlinear(p, solver)


def solve_adjoint_pair(psi0, g0: SourceLike, g1: SourceLike, obs: Mask, grid: Grid,
                       solver: DispersiveSolver | None = None) -> AdjointSolution:
    solver = solver or get_solver(grid)
    psi = solver.solve_forward(psi0, g1)
    phi = solver.solve_backward(np.zeros(grid.N, dtype=complex),
                                sample_source(grid, g0) + obs.values[None, :] * psi.midpoints())
    return AdjointSolution(psi, phi)


def sentinel_value(u_traj: Trajectory, obs: Mask) -> float:
    """J = 1/2 of the integral of |u|^2 over O x (0, T) (midpoint rule in time)."""
    g = u_traj.grid
    return 0.5 * g.dt * g.dx * float(np.sum(obs.values[None, :] * np.abs(u_traj.midpoints()) ** 2))


def insensitivity_derivative_adjoint(u_hat0, v0, grid: Grid) -> float:
    """dJ/dtau at tau = 0 from v(0): -Re of the integral of i conj(u_hat0) v(0)."""
    return float(-(1j * l2_inner(v0, u_hat0, grid)).real)


def _sentinel_at(p: CascadeProblem, u0, solver) -> float:
    solver = solver or get_solver(p.grid)
    u = solver.solve_forward_nonlinear(u0, p.f0 + p.h, p.zeta)
    return sentinel_value(u, p.obs)


def insensitivity_derivative_fd(p: CascadeProblem, u_hat0, tau: float,
                                solver: DispersiveSolver | None = None) -> float:
    """Centered difference [J(u0 + tau u_hat0) - J(u0 - tau u_hat0)] / (2 tau)."""
    if not tau > 0:
        raise ConfigurationError("tau must be positive")
    u_hat0 = np.asarray(u_hat0, dtype=complex)
    jp = _sentinel_at(p, p.u0 + tau * u_hat0, solver)
    jm = _sentinel_at(p, p.u0 - tau * u_hat0, solver)
    return (jp - jm) / (2.0 * tau)


def taylor_remainders(p: CascadeProblem, u_hat0, derivative: float,
                      taus: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
                      solver: DispersiveSolver | None = None) -> np.ndarray:
    """|J(u0 + tau u_hat0) - J(u0) - tau * derivative| for each tau.

    With the exact derivative these shrink like tau^2; with a wrong one, like tau.
    """
    j0 = _sentinel_at(p, p.u0, solver)
    u_hat0 = np.asarray(u_hat0, dtype=complex)
    return np.array([abs(_sentinel_at(p, p.u0 + t * u_hat0, solver) - j0 - t * derivative)
                     for t in taus])


def observed_slopes(taus: Sequence[float], values: Sequence[float]) -> np.ndarray:
    taus, values = np.asarray(taus, float), np.asarray(values, float)
    return np.log(values[:-1] / values[1:]) / np.log(taus[:-1] / taus[1:])


def richardson_slope(fd_values: Sequence[float], taus: Sequence[float]) -> float:
    """Convergence order of a tau-sequence from successive differences (three values)."""
    d = np.abs(np.diff(np.asarray(fd_values, float)))
    taus = np.asarray(taus, float)
    return float(np.log(d[0] / d[1]) / np.log(taus[0] / taus[1]))


def max_insensitivity(directions: np.ndarray, v0, grid: Grid) -> float:
    return max(abs(insensitivity_derivative_adjoint(d, v0, grid)) for d in directions)


def transposition_sides(p: CascadeProblem, g1: SourceLike,
                        solver: DispersiveSolver | None = None) -> tuple:
    """Both sides of the duality between the companion v and psi.

    With psi forward from 0 under source g1 and (u, v) the linear cascade of
    ``p`` (u0 = 0, h = 0 expected), returns

        lhs = int int g1 conj(v),    rhs = int_O int psi conj(u) + int int psi conj(f1)

    as complex numbers (the real parts give the usual real form with u
    conj(psi)). With snapshot averages at half steps the identity is
    exact for the Crank-Nicolson pair: the O(dt^2) resolvent corrections on
    the two sides are the same term.
    """
    if p.zeta != 0:
        raise ConfigurationError("the transposition identity is for the linear cascade")
    g = p.grid
    solver = solver or get_solver(g)
    sol = solve_cascade_linear(p, solver)
    g1 = sample_source(g, g1)
    psi = solver.solve_forward(np.zeros(g.N, dtype=complex), g1).midpoints()
    w = g.dt * g.dx
    lhs = w * np.sum(g1 * np.conj(sol.v_traj.midpoints()))
    coupling = w * np.sum(p.obs.values[None, :] * psi * np.conj(sol.u_traj.midpoints()))
    source = w * np.sum(psi * np.conj(p.f1))
    return complex(lhs), complex(coupling + source)
