"""Space-time grid, clamped finite-difference operators and indicator masks.

Unknowns live on the N interior nodes ``x_i = i*dx`` (i = 1..N) of (0, L);
boundary values are eliminated. The clamped conditions u = u_x = 0 enter the
fourth-derivative stencil through the ghost reflection ``u_{-1} = u_1`` (and
its mirror at x = L), which keeps every operator exactly symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

MIN_POINTS = 8


@dataclass(frozen=True)
class Grid:
    """Uniform discretization of (0, L) x (0, T)."""

    L: float
    N: int
    T: float
    M: int

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.N + 1) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    @property
    def t_half(self) -> np.ndarray:
        """Half-step times ``(n + 1/2) dt``, n = 0..M-1."""
        return (np.arange(self.M) + 0.5) * self.dt

    def same_as(self, other: "Grid") -> bool:
        return (self.L, self.N, self.T, self.M) == (other.L, other.N, other.T, other.M)


def build_grid(L: float, N: int, T: float, M: int) -> Grid:
    if not (np.isfinite(L) and L > 0):
        raise ConfigurationError(f"domain length must be positive, got L={L}")
    if not (np.isfinite(T) and T > 0):
        raise ConfigurationError(f"horizon must be positive, got T={T}")
    if int(N) != N or N < MIN_POINTS:
        raise ConfigurationError(f"need an integer N >= {MIN_POINTS}, got N={N}")
    if int(M) != M or M < MIN_POINTS:
        raise ConfigurationError(f"need an integer M >= {MIN_POINTS}, got M={M}")
    return Grid(float(L), int(N), float(T), int(M))


@dataclass(frozen=True)
class BandedOperator:
    """Real symmetric banded matrix.

    ``bands[k, j]`` holds entry ``(j + k, j)`` (LAPACK lower storage), so
    ``bands[0]`` is the main diagonal and ``bands[k, N-k:]`` is padding.
    """

    bands: np.ndarray
    _csr: sp.csr_array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bands = np.asarray(self.bands, dtype=float)
        bands.setflags(write=False)
        object.__setattr__(self, "bands", bands)
        n = bands.shape[1]
        diags, offsets = [bands[0]], [0]
        for k in range(1, bands.shape[0]):
            diags += [bands[k, : n - k], bands[k, : n - k]]
            offsets += [-k, k]
        object.__setattr__(self, "_csr", sp.diags_array(diags, offsets=offsets, format="csr"))

    @property
    def bandwidth(self) -> int:
        return self.bands.shape[0] - 1

    @property
    def rows(self) -> int:
        return self.bands.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply along the last axis (works for single fields and trajectories)."""
        v = np.asarray(v)
        if v.ndim == 1:
            return self._csr @ v
        return (self._csr @ v.reshape(-1, v.shape[-1]).T).T.reshape(v.shape)

    __call__ = apply

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def tosparse(self) -> sp.csr_array:
        return self._csr.copy()


def build_dirichlet_second_derivative(grid: Grid) -> BandedOperator:
    n, h2 = grid.N, grid.dx**2
    bands = np.zeros((2, n))
    bands[0] = -2.0 / h2
    bands[1, : n - 1] = 1.0 / h2
    return BandedOperator(bands)


def build_clamped_fourth_derivative(grid: Grid) -> BandedOperator:
    n, h4 = grid.N, grid.dx**4
    bands = np.zeros((3, n))
    bands[0] = 6.0
    # ghost reflection u_{-1} = u_1 with u_0 = 0: 6 + 1 on the corner rows
    bands[0, 0] = bands[0, -1] = 7.0
    bands[1, : n - 1] = -4.0
    bands[2, : n - 2] = 1.0
    return BandedOperator(bands / h4)


def build_first_derivative(grid: Grid) -> sp.csr_array:
    """Centered first difference with u = 0 at both ends (skew-symmetric)."""
    n, h = grid.N, grid.dx
    off = np.full(n - 1, 0.5 / h)
    return sp.diags_array([-off, off], offsets=[-1, 1], format="csr")


@dataclass(frozen=True)
class Mask:
    """Per-node indicator of an interval (a, b) on a grid."""

    a: float
    b: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def empty(self) -> bool:
        return not np.any(self.values > 0)

    def intersects(self, other: "Mask") -> bool:
        return bool(np.any(self.values * other.values > 0))

    def __mul__(self, field):
        return self.values * field

    __rmul__ = __mul__


def indicator_mask(grid: Grid, a: float, b: float) -> Mask:
    if not a < b:
        raise ConfigurationError(f"mask interval needs a < b, got ({a}, {b})")
    if a < 0 or b > grid.L:
        raise ConfigurationError(f"mask interval ({a}, {b}) leaves [0, {grid.L}]")
    x = grid.x
    # nodes on an endpoint are outside; the slack absorbs round-off in x_i = i*dx
    tol = 1e-9 * grid.dx
    return Mask(float(a), float(b), ((x > a + tol) & (x < b - tol)).astype(float))


def require_overlap(omega: Mask, obs: Mask) -> None:
    """The control and observation regions must share at least one node."""
    if not omega.intersects(obs):
        raise ConfigurationError(
            f"control region ({omega.a}, {omega.b}) and observation region "
            f"({obs.a}, {obs.b}) do not intersect on this grid"
        )
