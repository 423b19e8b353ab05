"""Insensitizing controls by penalized HUM.

The linear map S : h -> v(0) (cascade with all other data zeroed) and its
exact discrete adjoint S* give the penalized Gramian

    Lambda p = S W S* p + eps p,

solved for p against b = -v_free(0); the control is h = W S* p. W is the
identity ("plain") or the time weight nu_hat sigma_hat^2 ("carleman_weighted"),
rescaled to unit maximum because its raw value underflows for any useful
(lam, mu). Inner products: dx-weighted on fields, dt*dx-weighted on controls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cascade import (CascadeProblem, get_solver, max_insensitivity, nonlinear_reactions,
                      solve_cascade_linear, solve_cascade_nonlinear)
from .errors import ConfigurationError
from .grid import Grid, Mask, require_overlap
from .sampling import random_unit_field
from .solver import DispersiveSolver, l2_norm
from .weights import WeightParams, WeightSpec

log = logging.getLogger(__name__)

MODES = ("plain", "carleman_weighted")


@dataclass(frozen=True)
class ControlSpec:
    epsilon: float
    mode: str = "plain"
    cg_tol: float = 1e-10
    cg_maxit: int = 2000
    weight_params: Optional[WeightParams] = None
    n_test_directions: int = 10
    test_seed: int = 0
    # smallness cap ||exp(c/t) f||_{L2(Q_T)} <= delta for the nonlinear problem
    smallness_c: float = 0.0
    smallness_delta: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.cg_tol < 1:
            raise ConfigurationError("cg_tol must lie in (0, 1)")
        if self.cg_maxit < 1:
            raise ConfigurationError("cg_maxit must be at least 1")


@dataclass
class ControlResult:
    h: np.ndarray
    v0: np.ndarray
    v0_norm: float
    v_free_norm: float
    cg_iterations: int
    cg_residual_history: list
    converged: bool
    j_insensitivity_bound: float
    epsilon: float
    mode: str
    p0: np.ndarray
    outer_iterations: int = 1
    status: str = "converged"
    outer_history: list = field(default_factory=list)

    def record(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mode": self.mode,
            "v0_norm": self.v0_norm,
            "v_free_norm": self.v_free_norm,
            "h_norm": float(np.sqrt(np.sum(np.abs(self.h) ** 2))),
            "cg_iterations": self.cg_iterations,
            "cg_final_residual": self.cg_residual_history[-1] if self.cg_residual_history else 0.0,
            "converged": self.converged,
            "status": self.status,
            "outer_iterations": self.outer_iterations,
            "j_insensitivity_bound": self.j_insensitivity_bound,
        }


class ControlOperator:
    """S, S* and the penalized Gramian for a fixed grid and pair of masks."""

    def __init__(self, grid: Grid, omega: Mask, obs: Mask,
                 solver: Optional[DispersiveSolver] = None):
        self.grid, self.omega, self.obs = grid, omega, obs
        self.solver = solver or get_solver(grid)
        self._w = omega.values
        self._b = obs.values

    # S and S* -----------------------------------------------------------------
    def control_to_final(self, h: np.ndarray) -> np.ndarray:
        """v(0) of the linear cascade driven by 1_w h alone."""
        g, s = self.grid, self.solver
        h = np.asarray(h, dtype=complex)
        if h.shape != (g.M, g.N):
            raise ConfigurationError(f"control has shape {h.shape}, expected {(g.M, g.N)}")
        u_prev = np.zeros(g.N, dtype=complex)
        coupling = np.empty((g.M, g.N), dtype=complex)
        for n in range(g.M):
            u_next = s.step_forward(u_prev, self._w * h[n])
            coupling[n] = self._b * 0.5 * (u_prev + u_next)
            u_prev = u_next
        v = np.zeros(g.N, dtype=complex)
        for n in range(g.M - 1, -1, -1):
            v = s.step_backward(v, coupling[n])
        return v

    def adjoint_of_control_map(self, p0: np.ndarray) -> np.ndarray:
        """S* p0, the exact transpose of :meth:`control_to_final`.

        psi runs forward from p0; phi runs backward from 0 driven by the
        masked psi; the result is 1_w phi at half steps (up to the CN
        resolvents that make the identity exact).
        """
        g, s = self.grid, self.solver
        dt = g.dt
        psi = np.asarray(p0, dtype=complex)
        # a_n = 1_O P psi_n with P = -i dt K^{-1}
        a = np.empty((g.M, g.N), dtype=complex)
        for n in range(g.M):
            a[n] = self._b * (-1j * dt) * s.solve_K(psi)
            psi = s.propagate(psi)
        out = np.empty((g.M, g.N), dtype=complex)
        phi = 0.5 * a[g.M - 1]
        for j in range(g.M - 1, -1, -1):
            if j < g.M - 1:
                phi = s.propagate_adjoint(phi) + 0.5 * (a[j + 1] + a[j])
            # Q = i dt K^{-H}; dividing by dt converts to the dt*dx control product
            out[j] = self._w * 1j * s.solve_Kh(phi)
        return out

    # Gramian --------------------------------------------------------------------
    def time_weight(self, spec: ControlSpec) -> np.ndarray:
        if spec.mode == "plain":
            return np.ones(self.grid.M)
        params = spec.weight_params or WeightParams.default(self.grid.T, self.grid.L)
        logw = WeightSpec.parse("nu_hat sigma_hat^2").log_field(
            self.grid.t_half, self.grid.x[:1], params)[:, 0]
        return np.exp(logw - logw.max())

    def gramian_apply(self, p0: np.ndarray, spec: ControlSpec, weight: Optional[np.ndarray] = None):
        w = self.time_weight(spec) if weight is None else weight
        return self.control_to_final(w[:, None] * self.adjoint_of_control_map(p0)) + spec.epsilon * p0

    def gramian_norm_estimate(self, spec: ControlSpec, iterations: int = 20, seed: int = 0) -> float:
        """Power-iteration estimate of ||S W S*||."""
        rng = np.random.default_rng(seed)
        w = self.time_weight(spec)
        x = rng.standard_normal(self.grid.N) + 1j * rng.standard_normal(self.grid.N)
        est = 0.0
        for _ in range(iterations):
            x = x / np.linalg.norm(x)
            y = self.control_to_final(w[:, None] * self.adjoint_of_control_map(x))
            est = float(np.linalg.norm(y))
            x = y
        return est

    def inner_field(self, a, b) -> complex:
        return complex(self.grid.dx * np.vdot(b, a))

    def inner_control(self, a, b) -> complex:
        return complex(self.grid.dt * self.grid.dx * np.vdot(b, a))


def conjugate_residual(apply, b, tol, maxit, x0=None):
    """Conjugate residual iteration for a Hermitian positive definite operator.

    It is CG carried out in the operator's own inner product, so residual
    norms are nonincreasing. Returns (x, relative residual history, converged).
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), [0.0], True
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    r = b - apply(x) if x0 is not None else b.copy()
    history = [float(np.linalg.norm(r) / bnorm)]
    if history[-1] <= tol:
        return x, history, True
    Ar = apply(r)
    p, Ap = r.copy(), Ar.copy()
    rAr = np.vdot(r, Ar).real
    for _ in range(maxit):
        alpha = rAr / np.vdot(Ap, Ap).real
        x = x + alpha * p
        r = r - alpha * Ap
        history.append(float(np.linalg.norm(r) / bnorm))
        if history[-1] <= tol:
            return x, history, True
        Ar = apply(r)
        rAr_new = np.vdot(r, Ar).real
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    return x, history, False


def test_directions(grid: Grid, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.array([random_unit_field(grid, rng) for _ in range(count)])


def _solve_penalized(op: ControlOperator, b, spec: ControlSpec, x0=None):
    weight = op.time_weight(spec)
    p0, history, ok = conjugate_residual(
        lambda q: op.gramian_apply(q, spec, weight), b, spec.cg_tol, spec.cg_maxit, x0)
    h = weight[:, None] * op.adjoint_of_control_map(p0)
    return p0, h, history, ok


def hum_solve(p: CascadeProblem, spec: ControlSpec, op: Optional[ControlOperator] = None) -> ControlResult:
    """Penalized-HUM control for the linear cascade; ``p.h`` is ignored."""
    if p.zeta != 0:
        raise ConfigurationError("hum_solve handles the linear cascade (zeta = 0)")
    require_overlap(p.omega, p.obs)
    g = p.grid
    op = op or ControlOperator(g, p.omega, p.obs)
    free = solve_cascade_linear(p.with_(h=None), op.solver)
    b = -free.v0
    p0, h, history, ok = _solve_penalized(op, b, spec)
    if not ok:
        log.warning("penalized Gramian solve stopped at cg_maxit=%d, residual %.3e",
                    spec.cg_maxit, history[-1])
    final = solve_cascade_linear(p.with_(h=h), op.solver)
    dirs = test_directions(g, spec.n_test_directions, spec.test_seed)
    return ControlResult(
        h=h, v0=final.v0, v0_norm=l2_norm(final.v0, g), v_free_norm=l2_norm(free.v0, g),
        cg_iterations=len(history) - 1, cg_residual_history=history, converged=ok,
        j_insensitivity_bound=max_insensitivity(dirs, final.v0, g) if len(dirs) else 0.0,
        epsilon=spec.epsilon, mode=spec.mode, p0=p0,
        status="converged" if ok else "cg_maxit",
    )


def smallness_norm(f, grid: Grid, c: float) -> float:
    """||exp(c/t) f||_{L2(Q_T)} with the weight sampled at half steps."""
    w = np.exp(c / grid.t_half)
    return float(np.sqrt(grid.dt * grid.dx * np.sum((w[:, None] * np.abs(f)) ** 2)))


def _averaged(levels: np.ndarray) -> np.ndarray:
    return 0.5 * (levels[:-1] + levels[1:])


def nonlinear_insensitize(p: CascadeProblem, spec: ControlSpec, outer_tol: float = 1e-8,
                          outer_maxit: int = 10, op: Optional[ControlOperator] = None) -> ControlResult:
    """Fixed-point loop around the linear control problem.

    Each pass freezes the cubic terms of the current nonlinear trajectories
    as extra sources f0 + zeta|u|^2 u and f1 + conj(zeta)(conj(u)^2 conj(v)
    + 2|u|^2 v), solves the linear penalized problem (same Gramian, so the
    previous p0 warm-starts it) and re-solves the nonlinear cascade with
    the new control.
    """
    if p.zeta == 0:
        return hum_solve(p, spec, op)
    require_overlap(p.omega, p.obs)
    g = p.grid
    if np.any(p.u0 != 0):
        raise ConfigurationError("the nonlinear control problem assumes u0 = 0")
    size = smallness_norm(p.f0, g, spec.smallness_c)
    if size > spec.smallness_delta:
        raise ConfigurationError(
            f"source too large for the local result: ||exp(c/t) f|| = {size:.3e} "
            f"exceeds delta = {spec.smallness_delta:.3e}")
    op = op or ControlOperator(g, p.omega, p.obs)
    linear = p.with_(zeta=0.0, h=None)
    free = solve_cascade_nonlinear(p.with_(h=None), op.solver)
    dirs = test_directions(g, spec.n_test_directions, spec.test_seed)

    extra0 = np.zeros((g.M, g.N), dtype=complex)
    extra1 = np.zeros((g.M, g.N), dtype=complex)
    h_prev, p0 = None, None
    residuals, total_cg, history_all = [], 0, []
    growth = 0
    status = "outer_maxit"
    for k in range(1, outer_maxit + 1):
        b = -solve_cascade_linear(linear.with_(f0=p.f0 + extra0, f1=p.f1 + extra1), op.solver).v0
        p0, h, history, ok = _solve_penalized(op, b, spec, x0=p0)
        total_cg += len(history) - 1
        history_all.extend(history)
        sol = solve_cascade_nonlinear(p.with_(h=h), op.solver)
        r = l2_norm(sol.v0, g)
        residuals.append(r)
        step = np.inf if h_prev is None else (
            np.linalg.norm(h - h_prev) / max(np.linalg.norm(h), 1e-300))
        log.info("outer %d: |v(0)| = %.3e, relative h change = %.3e", k, r, step)
        if len(residuals) > 1 and r > residuals[-2]:
            growth += 1
        else:
            growth = 0
        if growth >= 3:
            status = "diverged"
            break
        if step < outer_tol or (np.linalg.norm(h) == 0 and h_prev is not None):
            status = "converged"
            break
        h_prev = h
        uu, vv = sol.u_traj.values, sol.v_traj.values
        react = nonlinear_reactions(sol.u_traj, p.zeta)
        extra0 = _averaged(p.zeta * np.abs(uu) ** 2 * uu)
        extra1 = _averaged(np.array([react(n, vv[n]) for n in range(g.M + 1)]))
    return ControlResult(
        h=h, v0=sol.v0, v0_norm=r, v_free_norm=l2_norm(free.v0, g),
        cg_iterations=total_cg, cg_residual_history=history_all,
        converged=status == "converged",
        j_insensitivity_bound=max_insensitivity(dirs, sol.v0, g) if len(dirs) else 0.0,
        epsilon=spec.epsilon, mode=spec.mode, p0=p0, outer_iterations=k,
        status=status, outer_history=residuals,
    )
