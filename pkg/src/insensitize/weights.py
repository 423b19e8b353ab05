"""Carleman weight families evaluated in log space.

With eta(x) = x - x0 (x0 < 0) and E(x) = exp(3 mu eta(x)) - exp(5 mu |eta|_inf):

    xi = exp(3 mu eta) / (t (T - t)),      l = lam * E / (t (T - t)),   theta = exp(l)
    nu = exp(3 mu eta) / gamma(t),          m = lam * E / gamma(t),      sigma = exp(m)

where gamma(t) = t (T - t) on [0, T/2] and T^2/4 afterwards. E < 0 on [0, L],
so l and m are negative and, for realistic (lam, mu), astronomically so:
theta and sigma underflow in float64. Everything here works on the
logarithms and exponentiates once at the end with an explicit clamp.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, NamedTuple, Union

import numpy as np

from .errors import ConfigurationError
from .grid import Grid

LOG_UNDERFLOW = -745.0


@dataclass(frozen=True)
class WeightParams:
    lam: float
    mu: float
    x0: float
    T: float
    L: float

    def __post_init__(self):
        if not self.lam > 1:
            raise ConfigurationError(f"lambda must exceed 1, got {self.lam}")
        if not self.mu > 1:
            raise ConfigurationError(f"mu must exceed 1, got {self.mu}")
        if not self.x0 < 0:
            raise ConfigurationError(f"x0 must be negative, got {self.x0}")
        if not (self.T > 0 and self.L > 0):
            raise ConfigurationError("T and L must be positive")

    @classmethod
    def default(cls, T: float, L: float, lam: float | None = None, mu: float = 1.5) -> "WeightParams":
        """x0 = -L/2, mu = 1.5 and lam = 8 (T + T^2) unless given."""
        return cls(lam=8.0 * (T + T * T) if lam is None else lam, mu=mu, x0=-0.5 * L, T=T, L=L)

    @property
    def eta_max(self) -> float:
        return self.L - self.x0

    def eta(self, x):
        return np.asarray(x, dtype=float) - self.x0

    def exponent_numerator(self, x):
        """exp(3 mu eta(x)) - exp(5 mu |eta|_inf), negative on [0, L]."""
        return np.exp(3 * self.mu * self.eta(x)) - math.exp(5 * self.mu * self.eta_max)


def _clamped_exp(log_value):
    log_value = np.asarray(log_value, dtype=float)
    return np.where(log_value < LOG_UNDERFLOW, 0.0, np.exp(np.maximum(log_value, LOG_UNDERFLOW)))


def _check_x(x, p: WeightParams):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > p.L):
        raise ConfigurationError(f"x must lie in [0, {p.L}]")
    return x


def eval_gamma(t, T: float):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise ConfigurationError(f"t must lie in [0, {T}]")
    out = np.where(t <= 0.5 * T, t * (T - t), 0.25 * T * T)
    return float(out) if out.ndim == 0 else out


class CarlemanWeights(NamedTuple):
    xi: np.ndarray
    log_xi: np.ndarray
    log_theta: np.ndarray
    theta: np.ndarray
    underflow: bool


class ModifiedWeights(NamedTuple):
    nu: np.ndarray
    log_nu: np.ndarray
    log_sigma: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    underflow: bool


class ExtremalWeights(NamedTuple):
    nu_star: np.ndarray
    nu_hat: np.ndarray
    log_sigma_star: np.ndarray
    log_sigma_hat: np.ndarray
    sigma_star: np.ndarray
    sigma_hat: np.ndarray
    underflow: bool


def eval_carleman_weights(t, x, p: WeightParams) -> CarlemanWeights:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t >= p.T):
        raise ConfigurationError("theta/xi are singular at t = 0 and t = T; use interior times")
    x = _check_x(x, p)
    denom = t * (p.T - t)
    log_xi = 3 * p.mu * p.eta(x) - np.log(denom)
    l = p.lam * p.exponent_numerator(x) / denom
    return CarlemanWeights(np.exp(log_xi), log_xi, l, _clamped_exp(l), bool(np.any(l < LOG_UNDERFLOW)))


def eval_modified_weights(t, x, p: WeightParams) -> ModifiedWeights:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t > p.T):
        raise ConfigurationError("nu/sigma are singular at t = 0; need t in (0, T]")
    x = _check_x(x, p)
    gamma = np.asarray(eval_gamma(t, p.T))
    log_nu = 3 * p.mu * p.eta(x) - np.log(gamma)
    m = p.lam * p.exponent_numerator(x) / gamma
    return ModifiedWeights(np.exp(log_nu), log_nu, m, _clamped_exp(m), gamma,
                           bool(np.any(m < LOG_UNDERFLOW)))


def eval_extremal(t, p: WeightParams) -> ExtremalWeights:
    """Extrema over x in [0, L]; eta is increasing, so they sit at x = 0 and x = L."""
    lo = eval_modified_weights(t, 0.0, p)
    hi = eval_modified_weights(t, p.L, p)
    return ExtremalWeights(lo.nu, hi.nu, lo.log_sigma, hi.log_sigma, lo.sigma, hi.sigma,
                           lo.underflow or hi.underflow)


# scaled arithmetic -------------------------------------------------------------

@dataclass(frozen=True)
class ScaledValue:
    """Nonnegative number ``mantissa * exp(log_scale)``.

    Weighted integrals routinely sit far outside float64 range; keeping the
    exponent separate lets ratios be formed without ever leaving it.
    """

    log_scale: float
    mantissa: float

    @classmethod
    def zero(cls) -> "ScaledValue":
        return cls(0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0.0

    @property
    def log(self) -> float:
        return -math.inf if self.is_zero else self.log_scale + math.log(self.mantissa)

    @property
    def value(self) -> float:
        if self.is_zero:
            return 0.0
        lv = self.log
        return 0.0 if lv < LOG_UNDERFLOW else (math.inf if lv > 709.0 else math.exp(lv))

    def __add__(self, other: "ScaledValue") -> "ScaledValue":
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        top = max(self.log_scale, other.log_scale)
        mant = (self.mantissa * math.exp(self.log_scale - top)
                + other.mantissa * math.exp(other.log_scale - top))
        return ScaledValue(top, mant)

    def __truediv__(self, other: "ScaledValue") -> "ScaledValue":
        if other.is_zero:
            raise ZeroDivisionError("division by a zero ScaledValue")
        return ScaledValue(self.log_scale - other.log_scale, self.mantissa / other.mantissa)

    def scale(self, factor: float) -> "ScaledValue":
        return ScaledValue(self.log_scale, self.mantissa * factor)

    def relative_difference(self, other: "ScaledValue") -> float:
        """|self/other - 1| computed without leaving the scaled representation."""
        if self.is_zero or other.is_zero:
            return 0.0 if self.is_zero and other.is_zero else math.inf
        return abs(math.expm1(self.log_scale - other.log_scale
                              + math.log(self.mantissa / other.mantissa)))


# weight expressions ------------------------------------------------------------

SYMBOLS = ("lam", "mu", "xi", "theta", "nu", "sigma",
           "nu_star", "nu_hat", "sigma_star", "sigma_hat")
_ALIASES = {"lambda": "lam", "λ": "lam", "μ": "mu", "ξ": "xi", "θ": "theta",
            "ν": "nu", "σ": "sigma"}
_TOKEN = re.compile(r"^([A-Za-z_λμξθνσ]+)(?:\^(\(?[-+]?[0-9./]+\)?))?$")

WeightSpecLike = Union[str, Mapping[str, float], "WeightSpec"]


@dataclass(frozen=True)
class WeightSpec:
    """Product of integer or half-integer powers of weight symbols."""

    powers: tuple

    @classmethod
    def parse(cls, spec: WeightSpecLike) -> "WeightSpec":
        if isinstance(spec, WeightSpec):
            return spec
        if isinstance(spec, Mapping):
            items = list(spec.items())
        elif isinstance(spec, str):
            items = []
            text = spec.replace("*", " ").strip()
            if text not in ("", "1"):
                for tok in text.split():
                    m = _TOKEN.match(tok)
                    if not m:
                        raise ConfigurationError(f"malformed weight term {tok!r} in {spec!r}")
                    items.append((m.group(1), (m.group(2) or "1").strip("()")))
        else:
            raise ConfigurationError(f"cannot interpret weight spec {spec!r}")
        powers: dict[str, Fraction] = {}
        for name, power in items:
            name = _ALIASES.get(name, name)
            if name not in SYMBOLS:
                raise ConfigurationError(f"unknown weight symbol {name!r}")
            try:
                frac = Fraction(str(power))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigurationError(f"bad power {power!r} for {name}") from exc
            if (2 * frac).denominator != 1:
                raise ConfigurationError(f"power of {name} must be an integer or half-integer")
            powers[name] = powers.get(name, Fraction(0)) + frac
        return cls(tuple(sorted((k, v) for k, v in powers.items() if v != 0)))

    def power(self, name: str) -> Fraction:
        return dict(self.powers).get(name, Fraction(0))

    def prefactor(self, p: WeightParams) -> float:
        return float(p.lam ** self.power("lam") * p.mu ** self.power("mu"))

    def log_field(self, t, x, p: WeightParams) -> np.ndarray:
        """log of the weight without the lam/mu prefactor on the (t, x) mesh."""
        t = np.asarray(t, dtype=float)[:, None]
        x = np.asarray(x, dtype=float)[None, :]
        out = np.zeros(np.broadcast_shapes(t.shape, x.shape))
        pw = dict(self.powers)
        if "xi" in pw or "theta" in pw:
            cw = eval_carleman_weights(t, x, p)
            out = out + float(self.power("xi")) * cw.log_xi + float(self.power("theta")) * cw.log_theta
        if "nu" in pw or "sigma" in pw:
            mw = eval_modified_weights(t, x, p)
            out = out + float(self.power("nu")) * mw.log_nu + float(self.power("sigma")) * mw.log_sigma
        if any(k in pw for k in ("nu_star", "nu_hat", "sigma_star", "sigma_hat")):
            ew = eval_extremal(t[:, 0], p)
            out = out + (float(self.power("nu_star")) * np.log(ew.nu_star)
                         + float(self.power("nu_hat")) * np.log(ew.nu_hat)
                         + float(self.power("sigma_star")) * ew.log_sigma_star
                         + float(self.power("sigma_hat")) * ew.log_sigma_hat)[:, None]
        return out


def _half_step_values(field, grid: Grid) -> np.ndarray:
    from .solver import Trajectory

    if isinstance(field, Trajectory):
        return field.midpoints()
    vals = np.asarray(field)
    if vals.shape != (grid.M, grid.N):
        raise ConfigurationError(f"expected half-step samples of shape {(grid.M, grid.N)}")
    return vals


def weighted_sample_scaled(field, weight_spec: WeightSpecLike, p: WeightParams, grid: Grid,
                           mask=None) -> ScaledValue:
    """Midpoint-rule integral of weight * |field|^2 over (0, T) x (0, L).

    ``field`` is a Trajectory (averaged to half steps) or an (M, N) array of
    half-step samples. ``mask`` restricts the spatial support. Weight
    evaluation happens only at half-step times, never at t = 0 or T.
    """
    spec = WeightSpec.parse(weight_spec)
    vals = np.abs(_half_step_values(field, grid)) ** 2
    support = np.ones(grid.N) if mask is None else np.asarray(getattr(mask, "values", mask), float)
    if not np.any(support > 0):
        return ScaledValue.zero()
    cols = support > 0
    # scale by the largest weight where the field is nonzero; this set is
    # unchanged by nonzero rescaling of the field, so ratios stay exact
    logw = spec.log_field(grid.t_half, grid.x[cols], p)
    live = vals[:, cols] > 0
    if not np.any(live):
        return ScaledValue.zero()
    top = float(np.max(logw[live]))
    w = np.zeros_like(logw)
    w[live] = _clamped_exp(logw[live] - top)
    mant = float(np.sum(w * vals[:, cols] * support[None, cols])) * grid.dt * grid.dx
    return ScaledValue(top, mant * spec.prefactor(p))


def weighted_sample(field, weight_spec: WeightSpecLike, p: WeightParams, grid: Grid,
                    mask=None) -> float:
    return weighted_sample_scaled(field, weight_spec, p, grid, mask).value
