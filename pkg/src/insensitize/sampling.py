"""Seeded random fields restricted to low discrete modes.

Modes are eigenvectors of the clamped generator H = D2 - D4, so samples
satisfy the discrete boundary conditions. Only the lowest quarter is used:
high-frequency noise turns derivative integrals into quadrature noise.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import eigh

from .grid import Grid, build_clamped_fourth_derivative, build_dirichlet_second_derivative
from .solver import l2_norm

LOW_MODE_FRACTION = 0.25


@lru_cache(maxsize=16)
def low_modes(grid: Grid, fraction: float = LOW_MODE_FRACTION) -> np.ndarray:
    """(k, N) array of the k = ceil(fraction N) smoothest eigenvectors of H."""
    H = build_dirichlet_second_derivative(grid).toarray() - build_clamped_fourth_derivative(grid).toarray()
    lam, V = eigh(H)
    k = max(1, int(np.ceil(fraction * grid.N)))
    # H is negative definite: smoothest modes have the smallest |lambda|
    order = np.argsort(np.abs(lam))[:k]
    modes = V[:, order].T.copy()
    modes.setflags(write=False)
    return modes


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def random_unit_field(grid: Grid, rng: np.random.Generator,
                      fraction: float = LOW_MODE_FRACTION) -> np.ndarray:
    modes = low_modes(grid, fraction)
    f = complex_normal(rng, modes.shape[0]) @ modes
    return f / l2_norm(f, grid)


def random_source(grid: Grid, rng: np.random.Generator, scale: float = 1.0,
                  time_modes: int = 3, fraction: float = LOW_MODE_FRACTION) -> np.ndarray:
    """Half-step samples sum_j sin(j pi t / T) q_j(x) with L2(Q_T) norm ``scale``."""
    if scale == 0:
        return np.zeros((grid.M, grid.N), dtype=complex)
    modes = low_modes(grid, fraction)
    tt = grid.t_half / grid.T
    out = np.zeros((grid.M, grid.N), dtype=complex)
    for j in range(1, time_modes + 1):
        q = complex_normal(rng, modes.shape[0]) @ modes
        out += np.sin(j * np.pi * tt)[:, None] * q[None, :]
    norm = np.sqrt(grid.dt * grid.dx * np.sum(np.abs(out) ** 2))
    return out * (scale / norm)
