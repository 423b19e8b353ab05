"""Experiment families behind the command line.

Each ``run_*`` function takes resolved configuration objects, performs the
computation and returns plain data (arrays, rows, results); file output
lives in :mod:`insensitize.io`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .audit import DEFAULT_RHO, constant_scan, observability_ratio
from .cascade import (CascadeProblem, get_solver, insensitivity_derivative_adjoint,
                      insensitivity_derivative_fd, richardson_slope, solve_cascade,
                      taylor_remainders, observed_slopes)
from .control import ControlResult, ControlSpec, nonlinear_insensitize
from .errors import ConfigurationError
from .grid import Grid, Mask, build_grid
from .sampling import random_unit_field
from .solver import Trajectory, l2_norm
from .weights import WeightParams

log = logging.getLogger(__name__)


# sources ---------------------------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    """Localized profile amplitude * shape((x - center) / width) * time_factor(t).

    ``shape`` is "gaussian" (exp(-s^2)) or "bump" (exp(1 - 1/(1 - s^2)) on
    |s| < 1). ``time`` is "constant", "sine" (sin(pi t / T)) or "ramp" (t / T).
    """

    amplitude: float
    center: float
    width: float
    shape: str = "gaussian"
    time: str = "constant"

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigurationError("pulse width must be positive")
        if self.shape not in ("gaussian", "bump"):
            raise ConfigurationError(f"unknown pulse shape {self.shape!r}")
        if self.time not in ("constant", "sine", "ramp"):
            raise ConfigurationError(f"unknown pulse time profile {self.time!r}")

    def profile(self, x: np.ndarray) -> np.ndarray:
        s = (np.asarray(x, float) - self.center) / self.width
        if self.shape == "gaussian":
            return self.amplitude * np.exp(-s * s)
        inside = np.abs(s) < 1
        out = np.zeros_like(s)
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return self.amplitude * out

    def time_factor(self, t: np.ndarray, T: float) -> np.ndarray:
        t = np.asarray(t, float)
        if self.time == "constant":
            return np.ones_like(t)
        if self.time == "sine":
            return np.sin(np.pi * t / T)
        return t / T


def pulse_source(grid: Grid, pulses: Sequence[Pulse]) -> np.ndarray:
    """Half-step samples (M, N) of a sum of pulses."""
    out = np.zeros((grid.M, grid.N), dtype=complex)
    for p in pulses:
        out += p.time_factor(grid.t_half, grid.T)[:, None] * p.profile(grid.x)[None, :]
    return out


def pulse_field(grid: Grid, pulses: Sequence[Pulse]) -> np.ndarray:
    out = np.zeros(grid.N, dtype=complex)
    for p in pulses:
        out += p.profile(grid.x)
    return out


# manufactured solution ------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """u(t, x) = a exp(i t) sin^2(pi x / L), clamped at both ends.

    The forcing makes it an exact solution of
    i u_t + u_xx - u_xxxx - zeta |u|^2 u = f.
    """

    L: float
    amplitude: float = 1.0
    zeta: complex = 0.0

    def exact(self, t, x):
        w = np.sin(np.pi * np.asarray(x) / self.L) ** 2
        return self.amplitude * np.exp(1j * np.asarray(t)) * w

    def forcing(self, t, x):
        k = 2.0 * np.pi / self.L
        x = np.asarray(x)
        w = np.sin(np.pi * x / self.L) ** 2
        c = np.cos(k * x)
        a, ph = self.amplitude, np.exp(1j * np.asarray(t))
        linear = -w + 0.5 * k ** 2 * c + 0.5 * k ** 4 * c
        return a * ph * linear - self.zeta * (abs(a) ** 2 * a) * ph * w ** 3


def _check_refinement(grids: Sequence[tuple]) -> None:
    if len(grids) != 3:
        raise ConfigurationError("the refinement study needs exactly three grids")
    for (n0, m0), (n1, m1) in zip(grids[:-1], grids[1:]):
        if not (n1 > n0 and m1 > m0):
            raise ConfigurationError(f"grids must refine in both N and M: {grids}")
        if n1 * m0 != n0 * m1:
            raise ConfigurationError(f"grids must keep M/N fixed along the refinement path: {grids}")


def manufactured_error(ms: ManufacturedSolution, grid: Grid) -> float:
    """Max over snapshots of the discrete L2 error."""
    solver = get_solver(grid)
    tt, xx = grid.t_half[:, None], grid.x[None, :]
    f = ms.forcing(tt, xx)
    u0 = ms.exact(0.0, grid.x)
    traj = solver.solve_forward_nonlinear(u0, f, ms.zeta)
    exact = ms.exact(grid.t[:, None], grid.x[None, :])
    return float(np.max(Trajectory(traj.values - exact, grid).norms()))


def convergence_study(L: float, T: float, grids: Sequence[tuple], zeta: complex = 0.0,
                      amplitude: float = 1.0) -> tuple:
    """Errors per grid and the observed orders between successive grids.

    Orders are measured against dx; dt shrinks in proportion along the path.
    """
    grids = [tuple(int(v) for v in g) for g in grids]
    _check_refinement(grids)
    ms = ManufacturedSolution(L, amplitude, zeta)
    rows = []
    for n, m in grids:
        g = build_grid(L, n, T, m)
        rows.append({"N": n, "M": m, "dx": g.dx, "dt": g.dt, "error": manufactured_error(ms, g)})
    orders = []
    for a, b in zip(rows[:-1], rows[1:]):
        if a["error"] == 0 or b["error"] == 0:
            orders.append(math.nan)
        else:
            orders.append(math.log(a["error"] / b["error"]) / math.log(a["dx"] / b["dx"]))
    for r, o in zip(rows, [math.nan] + orders):
        r["observed_order"] = o
    return rows, orders


# simulate ----------------------------------------------------------------------

def conserved_quantities(traj: Trajectory, zeta: complex = 0.0, a2: float = 1.0,
                         a4: float = -1.0) -> dict:
    """Discrete mass and energy per snapshot.

    The energy -1/2 <H u, u> + Re(zeta)/4 int |u|^4 is exact for the free
    linear scheme; with the cubic term it is conserved to time-step error.
    """
    g = traj.grid
    solver = get_solver(g, a2, a4)
    u = traj.values
    mass = g.dx * np.sum(np.abs(u) ** 2, axis=1)
    Hu = np.array([solver.apply_H(row) for row in u])
    energy = -0.5 * g.dx * np.real(np.sum(np.conj(u) * Hu, axis=1))
    energy = energy + 0.25 * np.real(zeta) * g.dx * np.sum(np.abs(u) ** 4, axis=1)
    return {"t": g.t, "norm": np.sqrt(mass), "mass": mass, "energy": energy}


def relative_drift(series: np.ndarray) -> float:
    ref = abs(series[0])
    if ref == 0:
        return float(np.max(np.abs(series - series[0])))
    return float(np.max(np.abs(series - series[0])) / ref)


def run_simulate(grid: Grid, u0: np.ndarray, f0: np.ndarray, zeta: complex = 0.0) -> tuple:
    traj = get_solver(grid).solve_forward_nonlinear(u0, f0, zeta)
    q = conserved_quantities(traj, zeta)
    forced = bool(np.any(f0 != 0))
    summary = {
        "max_relative_norm_drift": relative_drift(q["norm"]),
        "max_relative_energy_drift": relative_drift(q["energy"]),
        "final_norm": float(np.sqrt(q["mass"][-1])),
        "forced": forced,
    }
    return traj, q, summary


# control ---------------------------------------------------------------------

def run_control(problem: CascadeProblem, specs: Sequence[ControlSpec], outer_tol: float = 1e-8,
                outer_maxit: int = 10, workers: int = 1) -> list:
    """One control per spec; the epsilon sweep runs in parallel when workers > 1."""

    def one(spec):
        return nonlinear_insensitize(problem, spec, outer_tol, outer_maxit)

    if workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, specs))
    return [one(s) for s in specs]


def v_profile(problem: CascadeProblem, h: Optional[np.ndarray]) -> np.ndarray:
    """(t, ||v(t)||) columns for the cascade driven by ``h``."""
    sol = solve_cascade(problem.with_(h=h))
    return np.column_stack([problem.grid.t, sol.v_traj.norms()])


# insensitivity check ---------------------------------------------------------

def insensitivity_table(problem: CascadeProblem, h: np.ndarray, directions: int, seed: int,
                        taus: Sequence[float] = (1e-2, 5e-3, 2.5e-3)) -> tuple:
    """Adjoint vs finite-difference derivative of the sentinel per random direction.

    Also runs the same directions with h = 0 for the baseline comparison.
    """
    g = problem.grid
    if len(taus) < 3:
        raise ConfigurationError("need at least three tau values")
    rng = np.random.default_rng([int(seed), 1])
    dirs = np.array([random_unit_field(g, rng) for _ in range(directions)])
    controlled = problem.with_(h=h)
    baseline = problem.with_(h=None)
    v0 = solve_cascade(controlled).v0
    v0_base = solve_cascade(baseline).v0
    v0_norm, base_norm = l2_norm(v0, g), l2_norm(v0_base, g)
    rows = []
    for k, d in enumerate(dirs):
        adj = insensitivity_derivative_adjoint(d, v0, g)
        fds = [insensitivity_derivative_fd(controlled, d, t) for t in taus]
        rem = taylor_remainders(controlled, d, adj, taus)
        row = {"direction": k, "adjoint": adj, "baseline_adjoint":
               insensitivity_derivative_adjoint(d, v0_base, g)}
        for t, v in zip(taus, fds):
            row[f"fd_tau_{t:g}"] = v
        row["fd_richardson_slope"] = _safe_slope(lambda: richardson_slope(fds, taus))
        row["taylor_slope"] = _safe_slope(lambda: float(np.min(observed_slopes(taus, rem))))
        row["abs_adjoint_over_v0_norm"] = abs(adj) / v0_norm if v0_norm > 0 else math.nan
        rows.append(row)
    max_c = max(abs(r["adjoint"]) for r in rows)
    max_b = max(abs(r["baseline_adjoint"]) for r in rows)
    summary = {
        "v0_norm": v0_norm, "baseline_v0_norm": base_norm,
        "max_abs_derivative": max_c, "baseline_max_abs_derivative": max_b,
        "reduction": max_b / max_c if max_c > 0 else math.inf,
        "cauchy_schwarz_holds": bool(max_c <= v0_norm * (1 + 1e-12)),
    }
    return rows, summary


def _safe_slope(fn) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            v = fn()
        except (ZeroDivisionError, FloatingPointError):
            return math.nan
    return float(v) if np.isfinite(v) else math.nan


# Carleman scan ---------------------------------------------------------------

def run_carleman_scan(grid: Grid, omega: Mask, obs: Mask, lambdas: Sequence[float],
                      mus: Sequence[float], samples: int, seed: int, x0: Optional[float] = None,
                      evaluator: str = "carleman", source_scale: float = 0.0,
                      rho: Sequence[str] = DEFAULT_RHO) -> tuple:
    """Constant table over (lam, mu) and per-sample observability reports at the first cell."""
    rows = constant_scan(lambdas, mus, samples, grid, omega, obs, seed, x0, evaluator, source_scale)
    x0 = -0.5 * grid.L if x0 is None else x0
    p = WeightParams(lam=float(lambdas[0]), mu=float(mus[0]), x0=x0, T=grid.T, L=grid.L)
    reports, summary = observability_ratio(samples, p, grid, omega, obs, seed, rho,
                                           source_scale=source_scale)
    return rows, [r.row() for r in reports], summary


def control_records(results: Sequence[ControlResult]) -> list:
    return [r.record() for r in results]
