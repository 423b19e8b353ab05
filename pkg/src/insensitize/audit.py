"""Both sides of the weighted energy (Carleman) and observability inequalities.

Every integral is a :class:`~insensitize.weights.ScaledValue`: at useful
(lam, mu) the weights span tens of thousands of orders of magnitude, so
ratios are formed in scaled form and reported through their log10. The
audit reports the empirical constant; it never asserts an inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .cascade import AdjointSolution, get_solver, solve_adjoint_pair
from .errors import ConfigurationError
from .grid import Grid, Mask, build_dirichlet_second_derivative, build_first_derivative
from .sampling import random_source, random_unit_field
from .solver import DispersiveSolver, SourceLike, Trajectory, sample_source
from .weights import ScaledValue, WeightParams, WeightSpec, weighted_sample_scaled

CARLEMAN_TERMS = ("lam^7 mu^8 xi^7 theta^2", "lam^5 mu^6 xi^5 theta^2",
                  "lam^3 mu^4 xi^3 theta^2", "lam mu^2 xi theta^2")
MODIFIED_TERMS = ("lam^7 mu^8 nu^7 sigma^2", "lam^5 mu^6 nu^5 sigma^2",
                  "lam^3 mu^4 nu^3 sigma^2")
DEFAULT_RHO = ("lam^7 mu^8 nu^7 sigma^2", "lam nu sigma^2", "sigma^2")


@dataclass(frozen=True)
class CarlemanReport:
    """Weighted squared norms on each side; ``ratio`` = lhs / (rhs_source + rhs_obs)."""

    lhs: ScaledValue
    rhs_source: ScaledValue
    rhs_obs: ScaledValue
    params: WeightParams
    sample_id: int = 0
    terms: dict = field(default_factory=dict, compare=False)

    @property
    def rhs(self) -> ScaledValue:
        return self.rhs_source + self.rhs_obs

    @property
    def ratio_scaled(self) -> Optional[ScaledValue]:
        return None if self.rhs.is_zero else self.lhs / self.rhs

    @property
    def log10_ratio(self) -> float:
        r = self.ratio_scaled
        if r is None:
            return math.nan
        return r.log / math.log(10.0)

    @property
    def ratio(self) -> float:
        """Plain float ratio; inf when it exceeds float range, nan when rhs = 0."""
        r = self.ratio_scaled
        return math.nan if r is None else r.value

    def row(self) -> dict:
        def l10(v: ScaledValue):
            return v.log / math.log(10.0)

        return {
            "sample_id": self.sample_id, "lam": self.params.lam, "mu": self.params.mu,
            "log10_lhs": l10(self.lhs), "log10_rhs_source": l10(self.rhs_source),
            "log10_rhs_obs": l10(self.rhs_obs), "log10_ratio": self.log10_ratio,
        }


def spatial_derivatives(values: np.ndarray, grid: Grid, order: int = 3) -> list:
    """[w, w_x, w_xx, w_xxx] along the last axis.

    w_xxx composes the Dirichlet second difference with the centered first
    difference, which keeps the clamped boundary handling of both.
    """
    D1 = build_first_derivative(grid)
    D2 = build_dirichlet_second_derivative(grid)
    values = np.asarray(values)
    out = [values]
    if order >= 1:
        d1 = (D1 @ values.T).T
        out.append(d1)
    if order >= 2:
        out.append(D2(values))
    if order >= 3:
        out.append(D2(d1))
    return out


def _sum(values: Iterable[ScaledValue]) -> ScaledValue:
    total = ScaledValue.zero()
    for v in values:
        total = total + v
    return total


def _weighted_derivative_terms(values, terms, p, grid, tag):
    derivs = spatial_derivatives(values, grid, order=len(terms) - 1)
    return {f"{tag}_d{k}": weighted_sample_scaled(d, w, p, grid) for k, (d, w) in enumerate(zip(derivs, terms))}


def _both_sides(sol: AdjointSolution, g0, g1, p, omega, terms, src_weight, obs_weight, sample_id):
    g = sol.psi_traj.grid
    parts = {}
    parts.update(_weighted_derivative_terms(sol.phi_traj.midpoints(), terms, p, g, "phi"))
    parts.update(_weighted_derivative_terms(sol.psi_traj.midpoints(), terms, p, g, "psi"))
    src = (weighted_sample_scaled(sample_source(g, g0), src_weight, p, g)
           + weighted_sample_scaled(sample_source(g, g1), src_weight, p, g))
    obs = weighted_sample_scaled(sol.phi_traj, obs_weight, p, g, omega)
    return CarlemanReport(_sum(parts.values()), src, obs, p, sample_id, parts)


def carleman_sides(sol: AdjointSolution, g0: SourceLike, g1: SourceLike, p: WeightParams,
                   omega: Mask, sample_id: int = 0) -> CarlemanReport:
    """Eight weighted terms (phi, psi and their first three derivatives) against
    theta^2 (|g0|^2 + |g1|^2) and lam mu xi theta^2 |phi|^2 on omega."""
    return _both_sides(sol, g0, g1, p, omega, CARLEMAN_TERMS, "theta^2",
                       "lam mu xi theta^2", sample_id)


def modified_carleman_sides(sol: AdjointSolution, g0: SourceLike, g1: SourceLike,
                            p: WeightParams, omega: Mask, sample_id: int = 0) -> CarlemanReport:
    """The (nu, sigma) version with derivatives up to second order."""
    return _both_sides(sol, g0, g1, p, omega, MODIFIED_TERMS, "sigma^2",
                       "lam nu sigma^2", sample_id)


# boundary traces -------------------------------------------------------------

def _right_trace_matrix(grid: Grid) -> np.ndarray:
    """Rows giving (u_xx, u_xxx) at x = L from the three nodes nearest to it.

    Taylor expansion about L with u(L) = u_x(L) = 0:
    u(L - k h) = (kh)^2/2 u_xx - (kh)^3/6 u_xxx + (kh)^4/24 u_xxxx + O(h^5).
    """
    h = grid.dx
    k = np.array([1.0, 2.0, 3.0])
    A = np.column_stack([(k * h) ** 2 / 2, -(k * h) ** 3 / 6, (k * h) ** 4 / 24])
    return np.linalg.inv(A)[:2]


def boundary_traces(values: np.ndarray, grid: Grid) -> tuple:
    """u_xx(., L) and u_xxx(., L) for an (..., N) array of clamped fields."""
    nearest = np.asarray(values)[..., [-1, -2, -3]]
    tr = nearest @ _right_trace_matrix(grid).T
    return tr[..., 0], tr[..., 1]


def _boundary_integral(trace: np.ndarray, spec: str, p: WeightParams, grid: Grid) -> ScaledValue:
    ws = WeightSpec.parse(spec)
    logw = ws.log_field(grid.t_half, [p.L], p)[:, 0]
    top = float(logw.max())
    mant = float(np.sum(np.exp(logw - top) * np.abs(trace) ** 2)) * grid.dt
    return ScaledValue(top, mant * ws.prefactor(p))


def boundary_carleman_sides(traj: Trajectory, source: SourceLike, p: WeightParams,
                            sample_id: int = 0) -> CarlemanReport:
    """Single equation i u_t + u_xxxx = f with boundary observation at x = L.

    ``rhs_source`` is the theta^2-weighted norm of f; ``rhs_obs`` holds the
    two boundary trace terms.
    """
    g = traj.grid
    mid = traj.midpoints()
    parts = _weighted_derivative_terms(mid, CARLEMAN_TERMS, p, g, "u")
    uxx, uxxx = boundary_traces(mid, g)
    bnd = (_boundary_integral(uxx, "lam^3 mu^3 xi^3 theta^2", p, g)
           + _boundary_integral(uxxx, "lam mu xi theta^2", p, g))
    src = weighted_sample_scaled(sample_source(g, source), "theta^2", p, g)
    return CarlemanReport(_sum(parts.values()), src, bnd, p, sample_id, parts)


def boundary_solver(grid: Grid) -> DispersiveSolver:
    """Propagator for i u_t + u_xxxx = f (no second-order term)."""
    return get_solver(grid, 0.0, 1.0)


# sampled audits ----------------------------------------------------------------

@dataclass(frozen=True)
class AdjointSample:
    sample_id: int
    psi0: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    solution: AdjointSolution


def sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    """Independent stream per sample, so tables do not depend on evaluation order."""
    return np.random.default_rng([int(seed), int(sample_id)])


def draw_adjoint_samples(grid: Grid, obs: Mask, count: int, seed: int,
                         source_scale: float = 0.0) -> list:
    if count < 1:
        raise ConfigurationError("need at least one sample")
    out = []
    for k in range(count):
        rng = sample_rng(seed, k)
        psi0 = random_unit_field(grid, rng)
        g0 = random_source(grid, rng, source_scale)
        g1 = random_source(grid, rng, source_scale)
        out.append(AdjointSample(k, psi0, g0, g1, solve_adjoint_pair(psi0, g0, g1, obs, grid)))
    return out


def observability_sides(s: AdjointSample, p: WeightParams, omega: Mask,
                        rho: Sequence[str] = DEFAULT_RHO) -> CarlemanReport:
    """rho1 (|phi|^2 + |psi|^2) against rho2 |phi|^2 on omega and rho3 (|g0|^2 + |g1|^2)."""
    g = s.solution.psi_traj.grid
    r1, r2, r3 = rho
    lhs = (weighted_sample_scaled(s.solution.phi_traj, r1, p, g)
           + weighted_sample_scaled(s.solution.psi_traj, r1, p, g))
    src = weighted_sample_scaled(s.g0, r3, p, g) + weighted_sample_scaled(s.g1, r3, p, g)
    obs = weighted_sample_scaled(s.solution.phi_traj, r2, p, g, omega)
    return CarlemanReport(lhs, src, obs, p, s.sample_id)


EVALUATORS = {
    "carleman": lambda s, p, omega: carleman_sides(s.solution, s.g0, s.g1, p, omega, s.sample_id),
    "modified": lambda s, p, omega: modified_carleman_sides(s.solution, s.g0, s.g1, p, omega, s.sample_id),
    "observability": lambda s, p, omega: observability_sides(s, p, omega),
}


def summarize(reports: Sequence[CarlemanReport]) -> dict:
    logs = np.array([r.log10_ratio for r in reports])
    finite = logs[np.isfinite(logs)]
    return {
        "samples": len(reports),
        "max_log10_ratio": float(finite.max()) if finite.size else math.nan,
        "median_log10_ratio": float(np.median(finite)) if finite.size else math.nan,
        "min_log10_ratio": float(finite.min()) if finite.size else math.nan,
    }


def observability_ratio(samples: int, p: WeightParams, grid: Grid, omega: Mask, obs: Mask,
                        seed: int = 0, rho: Sequence[str] = DEFAULT_RHO,
                        source_scale: float = 1.0) -> tuple:
    """Per-sample reports and their summary for random (psi0, g0, g1)."""
    draws = draw_adjoint_samples(grid, obs, samples, seed, source_scale)
    reports = [observability_sides(s, p, omega, rho) for s in draws]
    return reports, summarize(reports)


def constant_scan(lambda_list: Sequence[float], mu_list: Sequence[float], samples: int,
                  grid: Grid, omega: Mask, obs: Mask, seed: int = 0, x0: Optional[float] = None,
                  evaluator: str = "carleman", source_scale: float = 0.0) -> list:
    """Max/median empirical log10 constants per (lam, mu); one row per cell.

    The same adjoint samples serve every cell, so rows are directly comparable.
    """
    if not lambda_list or not mu_list:
        raise ConfigurationError("lambda and mu lists must be nonempty")
    if evaluator not in EVALUATORS:
        raise ConfigurationError(f"unknown evaluator {evaluator!r}; choose from {sorted(EVALUATORS)}")
    x0 = -0.5 * grid.L if x0 is None else x0
    draws = draw_adjoint_samples(grid, obs, samples, seed, source_scale)
    rows = []
    for lam in lambda_list:
        for mu in mu_list:
            p = WeightParams(lam=float(lam), mu=float(mu), x0=x0, T=grid.T, L=grid.L)
            reports = [EVALUATORS[evaluator](s, p, omega) for s in draws]
            rows.append({"lam": float(lam), "mu": float(mu), **summarize(reports)})
    return rows
