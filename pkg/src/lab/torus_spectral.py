"""Periodic fields on the unit torus, spectral operators, mollifiers and norms.

The torus is [0, 1)^2 with integer wavevectors ξ ∈ ℤ²; every derivative multiplier
carries the 2π factor (∂_j ↦ 2πiξ_j). First-derivative multipliers vanish on the
Nyquist lines so that every operator maps real fields to real fields exactly; modes
whose wavevector is zero after that convention (the mean and the pure Nyquist modes)
form the null set removed by ``project_nonzero``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, List, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import fft

from lab.params import INF, Exponent, parse_exponent


class ResolutionError(ValueError):
    """A scale is not resolved by the grid or the time sampling."""

    def __init__(self, message: str, required_n: int | None = None, recommendation: str = ""):
        super().__init__(message)
        self.required_n = required_n
        self.recommendation = recommendation


class ResolutionWarning(UserWarning):
    """A scale is marginally resolved; results stay valid but smoothing is ineffective."""


class Rank(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector2"
    SYM = "sym_traceless_2x2"

    @property
    def components(self) -> int:
        return _COMPONENTS[self.value]

    @property
    def code(self) -> int:
        return _CODES[self.value]


_COMPONENTS = {"scalar": 1, "vector2": 2, "sym_traceless_2x2": 3}
_CODES = {"scalar": 0, "vector2": 1, "sym_traceless_2x2": 2}
TRACE_TOLERANCE = 1e-12


class Grid(BaseModel):
    """Uniform n×n grid on the unit torus."""

    model_config = ConfigDict(frozen=True)

    n: int

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 8 or value & (value - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {value}")
        return value

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        return _coordinates(self.n)

    def modes(self) -> "Modes":
        return _modes(self.n)


@dataclass(frozen=True)
class Modes:
    """Wavevector tables of one grid size (read-only arrays)."""

    k1: np.ndarray  # raw integer wavenumbers
    k2: np.ndarray
    xi1: np.ndarray  # Nyquist-zeroed, used for derivatives
    xi2: np.ndarray
    xi_abs2: np.ndarray
    k_abs: np.ndarray
    resolvable: np.ndarray
    dealias: np.ndarray


@lru_cache(maxsize=16)
def _coordinates(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x = np.arange(n) / n
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    x1.setflags(write=False)
    x2.setflags(write=False)
    return x1, x2


@lru_cache(maxsize=16)
def _modes(n: int) -> Modes:
    k = np.fft.fftfreq(n, 1.0 / n)
    xi = k.copy()
    xi[n // 2] = 0.0
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    xi1, xi2 = np.meshgrid(xi, xi, indexing="ij")
    xi_abs2 = xi1**2 + xi2**2
    coef_dealiasing = 2.0 / 3.0
    kmax = coef_dealiasing * (n // 2)
    arrays = dict(
        k1=k1,
        k2=k2,
        xi1=xi1,
        xi2=xi2,
        xi_abs2=xi_abs2,
        k_abs=np.sqrt(k1**2 + k2**2),
        resolvable=xi_abs2 > 0,
        dealias=(np.abs(k1) < kmax) & (np.abs(k2) < kmax),
    )
    for array in arrays.values():
        array.setflags(write=False)
    return Modes(**arrays)


# Field containers --------------------------------------------------------------


def _freeze(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a scalar, vector or symmetric traceless tensor on a grid.

    Values have shape (components, n, n); a symmetric traceless tensor stores
    (R11, R12, R22).
    """

    grid: Grid
    rank: Rank
    values: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.rank.components, self.grid.n, self.grid.n)
        if self.values.shape != expected:
            raise ValueError(f"{self.rank.value} field needs shape {expected}, got {self.values.shape}")
        object.__setattr__(self, "values", _freeze(self.values))
        if self.rank is Rank.SYM:
            _check_trace(self.values)

    @cached_property
    def spectral(self) -> np.ndarray:
        return _fft(self.values)

    @classmethod
    def zeros(cls, grid: Grid, rank: Rank) -> "Field":
        return cls(grid, rank, np.zeros((rank.components, grid.n, grid.n)))

    @classmethod
    def scalar(cls, grid: Grid, values: np.ndarray) -> "Field":
        return cls(grid, Rank.SCALAR, np.asarray(values)[None])

    @classmethod
    def vector(cls, grid: Grid, v1: np.ndarray, v2: np.ndarray) -> "Field":
        return cls(grid, Rank.VECTOR, np.stack([v1, v2]))

    def __add__(self, other: "Field") -> "Field":
        _same_layout(self, other)
        return Field(self.grid, self.rank, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_layout(self, other)
        return Field(self.grid, self.rank, self.values - other.values)

    def scaled(self, factor: float) -> "Field":
        return Field(self.grid, self.rank, factor * self.values)


@dataclass(frozen=True, eq=False)
class TimeSampledField:
    """Frames of one field at increasing sample times; values (nt, components, n, n).

    ``period`` is set when the samples are a uniform periodic grid on [0, period);
    time derivatives and temporal mollification require it.
    """

    grid: Grid
    rank: Rank
    times: np.ndarray
    values: np.ndarray
    period: float | None = 1.0

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1D array")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        expected = (times.size, self.rank.components, self.grid.n, self.grid.n)
        if self.values.shape != expected:
            raise ValueError(f"time-sampled {self.rank.value} needs shape {expected}, got {self.values.shape}")
        if self.period is not None:
            uniform = np.arange(times.size) * (self.period / times.size)
            if not np.allclose(times, uniform, rtol=0, atol=1e-12 * self.period):
                raise ValueError("periodic sampling must be the uniform grid on [0, period)")
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "values", _freeze(self.values))
        if self.rank is Rank.SYM:
            _check_trace(self.values)

    @classmethod
    def uniform(
        cls, grid: Grid, rank: Rank, values: np.ndarray, period: float = 1.0
    ) -> "TimeSampledField":
        nt = values.shape[0]
        return cls(grid, rank, uniform_times(nt, period), values, period)

    @classmethod
    def zeros_like(cls, other: "TimeSampledField", rank: Rank | None = None) -> "TimeSampledField":
        rank = rank or other.rank
        shape = (other.times.size, rank.components, other.grid.n, other.grid.n)
        return replace(other, rank=rank, values=np.zeros(shape))

    @property
    def nt(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        if self.period is None:
            raise ValueError("dt is defined for periodic uniform sampling only")
        return self.period / self.nt

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights in time (rectangle rule when periodic, else trapezoid)."""
        if self.period is not None:
            return np.full(self.nt, self.dt)
        if self.nt == 1:
            return np.ones(1)
        gaps = np.diff(self.times)
        weights = np.zeros(self.nt)
        weights[:-1] += gaps / 2
        weights[1:] += gaps / 2
        return weights

    def frame(self, index: int) -> Field:
        return Field(self.grid, self.rank, self.values[index])

    @property
    def frames(self) -> List[Field]:
        return [self.frame(i) for i in range(self.nt)]

    def with_values(self, values: np.ndarray, rank: Rank | None = None) -> "TimeSampledField":
        return replace(self, values=values, rank=rank or self.rank)

    def __add__(self, other: "TimeSampledField") -> "TimeSampledField":
        _same_layout(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "TimeSampledField") -> "TimeSampledField":
        _same_layout(self, other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor: float | np.ndarray) -> "TimeSampledField":
        """Multiply by a constant or by a per-frame factor of shape (nt,)."""
        factor = np.asarray(factor, dtype=np.float64)
        if factor.ndim == 1:
            factor = factor[:, None, None, None]
        return self.with_values(factor * self.values)


Sampled = Union[Field, TimeSampledField]


def uniform_times(nt: int, period: float = 1.0) -> np.ndarray:
    return np.arange(nt) * (period / nt)


def _check_trace(values: np.ndarray) -> None:
    trace = values[..., 0, :, :] + values[..., 2, :, :]
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale > 0 and float(np.max(np.abs(trace))) > TRACE_TOLERANCE * scale:
        raise ValueError("symmetric traceless field has a non-zero trace")


def _same_layout(a: Sampled, b: Sampled) -> None:
    if type(a) is not type(b) or a.rank is not b.rank or a.grid != b.grid:
        raise TypeError(f"layout mismatch: {a.rank.value} vs {b.rank.value}")
    if isinstance(a, TimeSampledField) and a.times.shape != b.times.shape:
        raise TypeError("time samplings differ")


def _rebuild(f: Sampled, values: np.ndarray, rank: Rank) -> Sampled:
    if isinstance(f, TimeSampledField):
        return f.with_values(values, rank)
    return Field(f.grid, rank, values)


def _require(f: Sampled, *ranks: Rank) -> None:
    if f.rank not in ranks:
        names = ", ".join(rank.value for rank in ranks)
        raise TypeError(f"operator expects {names}, got {f.rank.value}")


def _fft(values: np.ndarray) -> np.ndarray:
    return fft.fft2(values, axes=(-2, -1))


def _ifft(coefficients: np.ndarray) -> np.ndarray:
    return fft.ifft2(coefficients, axes=(-2, -1)).real


def _spectral(f: Sampled) -> np.ndarray:
    if isinstance(f, Field):
        return f.spectral
    return _fft(f.values)


def _component(spectral: np.ndarray, index: int) -> np.ndarray:
    return spectral[..., index, :, :]


def _stack(parts: List[np.ndarray]) -> np.ndarray:
    return np.stack(parts, axis=-3)


def apply_multiplier(f: Sampled, multiplier: np.ndarray) -> Sampled:
    """Apply one Fourier multiplier to every component."""
    return _rebuild(f, _ifft(_spectral(f) * multiplier), f.rank)


# Differential operators ----------------------------------------------------------


def _derivative(modes: Modes, axis: int) -> np.ndarray:
    xi = modes.xi1 if axis == 0 else modes.xi2
    return 2j * np.pi * xi


def gradient(f: Sampled) -> Sampled:
    _require(f, Rank.SCALAR)
    modes = f.grid.modes()
    spectral = _component(_spectral(f), 0)
    parts = [spectral * _derivative(modes, axis) for axis in (0, 1)]
    return _rebuild(f, _ifft(_stack(parts)), Rank.VECTOR)


def perp_gradient(f: Sampled) -> Sampled:
    """∇⊥f = (−∂₂f, ∂₁f)."""
    _require(f, Rank.SCALAR)
    modes = f.grid.modes()
    spectral = _component(_spectral(f), 0)
    parts = [-spectral * _derivative(modes, 1), spectral * _derivative(modes, 0)]
    return _rebuild(f, _ifft(_stack(parts)), Rank.VECTOR)


def divergence(v: Sampled) -> Sampled:
    """Divergence of a vector (scalar result) or of a symmetric tensor (vector result)."""
    _require(v, Rank.VECTOR, Rank.SYM)
    modes = v.grid.modes()
    d1, d2 = _derivative(modes, 0), _derivative(modes, 1)
    spectral = _spectral(v)
    if v.rank is Rank.VECTOR:
        div = d1 * _component(spectral, 0) + d2 * _component(spectral, 1)
        return _rebuild(v, _ifft(div[..., None, :, :]), Rank.SCALAR)
    r11, r12, r22 = (_component(spectral, i) for i in range(3))
    parts = [d1 * r11 + d2 * r12, d1 * r12 + d2 * r22]
    return _rebuild(v, _ifft(_stack(parts)), Rank.VECTOR)


def directional_derivative(f: Sampled, direction: Tuple[float, float]) -> Sampled:
    """(d·∇)f applied componentwise."""
    modes = f.grid.modes()
    multiplier = direction[0] * _derivative(modes, 0) + direction[1] * _derivative(modes, 1)
    return apply_multiplier(f, multiplier)


def laplacian(f: Sampled) -> Sampled:
    """Even operator: uses the raw |k|², Nyquist line included."""
    modes = f.grid.modes()
    return apply_multiplier(f, -4.0 * np.pi**2 * modes.k_abs**2)


def fractional_laplacian(f: Sampled, alpha: float) -> Sampled:
    """(−Δ)^α with multiplier (2π|k|)^{2α} on the raw wavevector; the mean is sent to zero."""
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    modes = f.grid.modes()
    multiplier = np.zeros_like(modes.k_abs)
    nonzero = modes.k_abs > 0
    multiplier[nonzero] = (2.0 * np.pi * modes.k_abs[nonzero]) ** (2.0 * alpha)
    return apply_multiplier(f, multiplier)


def inverse_laplacian(f: Sampled) -> Sampled:
    modes = f.grid.modes()
    multiplier = np.zeros_like(modes.xi_abs2)
    resolvable = modes.resolvable
    multiplier[resolvable] = -1.0 / (4.0 * np.pi**2 * modes.xi_abs2[resolvable])
    return apply_multiplier(f, multiplier)


def inverse_abs_gradient(f: Sampled) -> Sampled:
    """|∇|^{-1} on non-zero modes, multiplier 1/(2π|ξ|) with the raw wavevector."""
    modes = f.grid.modes()
    multiplier = np.zeros_like(modes.k_abs)
    nonzero = modes.k_abs > 0
    multiplier[nonzero] = 1.0 / (2.0 * np.pi * modes.k_abs[nonzero])
    return apply_multiplier(f, multiplier)


def leray_project(v: Sampled) -> Sampled:
    """Helmholtz–Leray projection onto divergence-free vector fields."""
    _require(v, Rank.VECTOR)
    modes = v.grid.modes()
    spectral = _spectral(v)
    v1, v2 = _component(spectral, 0), _component(spectral, 1)
    inv = np.zeros_like(modes.xi_abs2)
    inv[modes.resolvable] = 1.0 / modes.xi_abs2[modes.resolvable]
    along = (modes.xi1 * v1 + modes.xi2 * v2) * inv
    parts = [v1 - modes.xi1 * along, v2 - modes.xi2 * along]
    return _rebuild(v, _ifft(_stack(parts)), Rank.VECTOR)


def spatial_mean(f: Sampled) -> np.ndarray:
    """Per-component spatial means, shape (..., components)."""
    return f.values.mean(axis=(-2, -1))


def inverse_divergence(v: Sampled, mean_tolerance: float = 1e-10) -> Sampled:
    """ℛv: symmetric traceless tensor with div ℛv = v for mean-free v."""
    _require(v, Rank.VECTOR)
    scale = float(np.max(np.abs(v.values))) if v.values.size else 0.0
    mean = float(np.max(np.abs(spatial_mean(v)))) if v.values.size else 0.0
    if scale > 0 and mean >= mean_tolerance * scale:
        raise ValueError(f"inverse divergence needs a mean-free field (mean {mean:.3e}, max {scale:.3e})")
    modes = v.grid.modes()
    spectral = _spectral(v)
    v1, v2 = _component(spectral, 0), _component(spectral, 1)
    inv = np.zeros_like(modes.xi_abs2)
    inv[modes.resolvable] = 1.0 / (2.0 * np.pi * modes.xi_abs2[modes.resolvable])
    m1, m2 = -1j * modes.xi1 * inv, -1j * modes.xi2 * inv
    r11 = m1 * v1 - m2 * v2
    r12 = m1 * v2 + m2 * v1
    values = _ifft(_stack([r11, r12, -r11]))
    values[..., 2, :, :] = -values[..., 0, :, :]
    return _rebuild(v, values, Rank.SYM)


def project_nonzero(f: Sampled) -> Sampled:
    """ℙ_{≠0}: remove the modes without a resolvable wavevector (the mean included)."""
    return apply_multiplier(f, f.grid.modes().resolvable.astype(np.float64))


def project_high(f: Sampled, cutoff: float) -> Sampled:
    """ℙ_{≥cutoff}: remove modes with |ξ| < cutoff."""
    return apply_multiplier(f, (f.grid.modes().k_abs >= cutoff).astype(np.float64))


def dealias(f: Sampled) -> Sampled:
    return apply_multiplier(f, f.grid.modes().dealias.astype(np.float64))


# Products and tensors -------------------------------------------------------------


def _product_inputs(u: Sampled, v: Sampled, truncate: bool) -> Tuple[np.ndarray, np.ndarray]:
    _require(u, Rank.VECTOR)
    _require(v, Rank.VECTOR)
    if truncate:
        return dealias(u).values, dealias(v).values
    return u.values, v.values


def sym_traceless_product(u: Sampled, v: Sampled, truncate: bool = True) -> Sampled:
    """Traceless part of (u⊗v + v⊗u)/2, 2/3-rule dealiased when ``truncate``."""
    a, b = _product_inputs(u, v, truncate)
    p11 = a[..., 0, :, :] * b[..., 0, :, :]
    p22 = a[..., 1, :, :] * b[..., 1, :, :]
    p12 = 0.5 * (a[..., 0, :, :] * b[..., 1, :, :] + a[..., 1, :, :] * b[..., 0, :, :])
    half = 0.5 * (p11 - p22)
    values = _stack([half, p12, -half])
    result = _rebuild(u, values, Rank.SYM)
    return dealias(result) if truncate else result


def dot_product(u: Sampled, v: Sampled, truncate: bool = True) -> Sampled:
    """u·v, the trace of u⊗v."""
    a, b = _product_inputs(u, v, truncate)
    values = (a * b).sum(axis=-3, keepdims=True)
    result = _rebuild(u, values, Rank.SCALAR)
    return dealias(result) if truncate else result


def sym_traceless(r11: np.ndarray, r12: np.ndarray, r22: np.ndarray) -> np.ndarray:
    """Component stack of the traceless part of [[r11, r12], [r12, r22]]."""
    half = 0.5 * (r11 - r22)
    return _stack([half, r12, -half])


def magnitude(f: Sampled) -> np.ndarray:
    """Pointwise Euclidean (vector) or Frobenius (tensor) magnitude."""
    values = f.values
    if f.rank is Rank.SCALAR:
        return np.abs(values[..., 0, :, :])
    if f.rank is Rank.VECTOR:
        return np.sqrt(values[..., 0, :, :] ** 2 + values[..., 1, :, :] ** 2)
    return np.sqrt(values[..., 0, :, :] ** 2 + 2 * values[..., 1, :, :] ** 2 + values[..., 2, :, :] ** 2)


# Time handling ----------------------------------------------------------------------


def time_derivative(f: TimeSampledField, order: int = 4) -> TimeSampledField:
    """Periodic central differences of order 2 or 4 on the uniform time grid."""
    if f.period is None:
        raise ValueError("time derivative needs periodic uniform sampling")
    values, dt = f.values, f.dt
    if order == 2:
        derivative = (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * dt)
    elif order == 4:
        derivative = (
            -np.roll(values, -2, axis=0)
            + 8 * np.roll(values, -1, axis=0)
            - 8 * np.roll(values, 1, axis=0)
            + np.roll(values, 2, axis=0)
        ) / (12 * dt)
    else:
        raise ValueError(f"unsupported difference order {order}")
    return f.with_values(derivative)


def richardson_estimate(f: TimeSampledField) -> float:
    """Relative gap between the 4th- and 2nd-order derivatives, a bound on the error scale."""
    fine = time_derivative(f, 4).values
    coarse = time_derivative(f, 2).values
    scale = float(np.max(np.abs(fine)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(fine - coarse))) / scale


def _bump(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r, dtype=np.float64)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def mollifier_multiplier(grid: Grid, ell: float) -> np.ndarray:
    """Fourier multiplier of the unit-mass bump of radius ℓ on the grid."""
    x1, x2 = grid.coordinates()
    d1 = (x1 + 0.5) % 1.0 - 0.5
    d2 = (x2 + 0.5) % 1.0 - 0.5
    kernel = _bump(np.sqrt(d1**2 + d2**2) / ell)
    if kernel.sum() == 0:
        kernel[0, 0] = 1.0
    kernel /= kernel.sum()
    return fft.fft2(kernel).real


def time_kernel_weights(dt: float, ell: float) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets and unit-sum weights of the temporal bump of radius ℓ."""
    reach = int(math.ceil(ell / dt))
    offsets = np.arange(-reach, reach + 1)
    weights = _bump(offsets * dt / ell)
    keep = weights > 0
    offsets, weights = offsets[keep], weights[keep]
    if offsets.size < 2:
        raise ResolutionError(
            f"time mollifier of radius {ell:g} is not resolved by dt = {dt:g}",
            recommendation="increase time_samples or the mollification scale",
        )
    return offsets, weights / weights.sum()


def time_convolve(f: TimeSampledField, offsets: np.ndarray, weights: np.ndarray) -> TimeSampledField:
    values = np.zeros_like(f.values)
    for offset, weight in zip(offsets, weights):
        values += weight * np.roll(f.values, int(offset), axis=0)
    return f.with_values(values)


def mollify(f: Sampled, ell: float, in_time: bool = True) -> Sampled:
    """Space convolution with the radius-ℓ bump, then time convolution when sampled in time."""
    if ell <= 0:
        raise ValueError(f"mollification scale must be positive, got {ell}")
    if ell <= f.grid.spacing:
        warnings.warn(
            f"spatial mollifier radius {ell:g} is below the grid spacing {f.grid.spacing:g}",
            ResolutionWarning,
            stacklevel=2,
        )
    smoothed = apply_multiplier(f, mollifier_multiplier(f.grid, ell))
    if not in_time or isinstance(smoothed, Field):
        return smoothed
    if smoothed.period is None:
        raise ValueError("temporal mollification needs periodic uniform sampling")
    offsets, weights = time_kernel_weights(smoothed.dt, ell)
    return time_convolve(smoothed, offsets, weights)


# Norms ---------------------------------------------------------------------------------


class NormSpec(BaseModel):
    """Norm descriptor: lebesgue L^p, mixed L^γ_t L^p_x, holder C^N, sobolev H^β."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["lebesgue", "mixed", "holder", "sobolev"]
    p: Exponent = parse_exponent(2)
    gamma: Exponent = parse_exponent(2)
    order: int = 0
    beta: float = 0.0

    @field_validator("p", "gamma", mode="before")
    @classmethod
    def _parse(cls, value: object) -> object:
        return parse_exponent(value)

    @classmethod
    def lebesgue(cls, p: object) -> "NormSpec":
        return cls(kind="lebesgue", p=p)

    @classmethod
    def mixed(cls, gamma: object, p: object) -> "NormSpec":
        return cls(kind="mixed", gamma=gamma, p=p)

    @classmethod
    def holder(cls, order: int) -> "NormSpec":
        return cls(kind="holder", order=order)

    @classmethod
    def sobolev(cls, beta: float) -> "NormSpec":
        return cls(kind="sobolev", beta=beta)


def _lp(values: np.ndarray, p: Exponent, axes: Tuple[int, ...]) -> np.ndarray:
    if p == INF:
        return np.max(values, axis=axes)
    p = float(p)
    return np.mean(values**p, axis=axes) ** (1.0 / p)


def _time_lp(values: np.ndarray, weights: np.ndarray, gamma: Exponent) -> float:
    if gamma == INF:
        return float(np.max(values))
    gamma = float(gamma)
    return float(np.sum(weights * values**gamma) ** (1.0 / gamma))


def spatial_norms(f: Sampled, p: Exponent) -> np.ndarray:
    """L^p_x norm of each frame (a 0-d array for a Field)."""
    return _lp(magnitude(f), p, axes=(-2, -1))


def _holder_space(f: Sampled, order: int) -> np.ndarray:
    """max_{|β|≤N} sup_x |∂^β f| per frame."""
    best = np.max(magnitude(f), axis=(-2, -1))
    modes = f.grid.modes()
    spectral = _spectral(f)
    for total in range(1, order + 1):
        for first in range(total + 1):
            multiplier = _derivative(modes, 0) ** first * _derivative(modes, 1) ** (total - first)
            derivative = _rebuild(f, _ifft(spectral * multiplier), f.rank)
            best = np.maximum(best, np.max(magnitude(derivative), axis=(-2, -1)))
    return best


def _sobolev(f: Sampled, beta: float) -> np.ndarray:
    modes = f.grid.modes()
    n2 = f.grid.n**2
    weight = (1.0 + 4.0 * np.pi**2 * modes.k_abs**2) ** beta
    power = np.abs(_spectral(f) / n2) ** 2
    return np.sqrt(np.sum(weight * power, axis=(-3, -2, -1)))


def norm(f: Sampled, spec: NormSpec) -> float:
    """Evaluate a norm by grid quadrature (space) and the sampling weights (time)."""
    if spec.kind == "lebesgue":
        if isinstance(f, Field):
            return float(spatial_norms(f, spec.p))
        return _time_lp(spatial_norms(f, spec.p), f.weights, spec.p)
    if spec.kind == "mixed":
        if not isinstance(f, TimeSampledField):
            raise ValueError("mixed norms need a TimeSampledField")
        return _time_lp(spatial_norms(f, spec.p), f.weights, spec.gamma)
    if spec.kind == "holder":
        if spec.order < 0:
            raise ValueError(f"C^N order must be non-negative, got {spec.order}")
        if isinstance(f, Field):
            return float(_holder_space(f, spec.order))
        best = float(np.max(_holder_space(f, spec.order)))
        derivative = f
        for m in range(1, spec.order + 1):
            derivative = time_derivative(derivative)
            best = max(best, float(np.max(_holder_space(derivative, spec.order - m))))
        return best
    if spec.kind == "sobolev":
        return float(np.max(_sobolev(f, spec.beta)))
    raise ValueError(f"unsupported norm descriptor {spec.kind!r}")


def spectral_l2(f: Sampled) -> float:
    """Spatial L² norm from the Fourier coefficients (Plancherel)."""
    return float(np.max(_sobolev(f, 0.0)))


# Sampling helpers ---------------------------------------------------------------------


def sample(grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Field:
    """Scalar field from a closed form evaluated on the grid."""
    x1, x2 = grid.coordinates()
    return Field.scalar(grid, np.broadcast_to(fn(x1, x2), (grid.n, grid.n)))


def random_band_limited(
    grid: Grid, rank: Rank, rng: np.random.Generator, kmax: int = 8, mean_free: bool = True
) -> Field:
    """Random real field with modes |ξ_j| <= kmax."""
    modes = grid.modes()
    band = (np.abs(modes.k1) <= kmax) & (np.abs(modes.k2) <= kmax)
    if mean_free:
        band &= modes.resolvable
    components = []
    for _ in range(rank.components):
        coefficients = rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal((grid.n, grid.n))
        components.append(_ifft(coefficients * band))
    values = np.stack(components)
    if rank is Rank.SYM:
        values = sym_traceless(values[0], values[1], values[2])
    return Field(grid, rank, values)


def random_solenoidal(grid: Grid, rng: np.random.Generator, kmax: int = 8) -> Field:
    return perp_gradient(random_band_limited(grid, Rank.SCALAR, rng, kmax))


# Snapshots ------------------------------------------------------------------------------


_HEADER = np.dtype([("rank", "<i8"), ("n", "<i8"), ("time", "<f8")])


def write_snapshot(path: Path, field: Field, time: float = 0.0) -> None:
    """Binary header (rank code, n, time) followed by row-major little-endian float64 values."""
    header = np.array([(field.rank.code, field.grid.n, time)], dtype=_HEADER)
    with path.open("wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path: Path) -> Tuple[Field, float]:
    raw = path.read_bytes()
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    rank = next(r for r in Rank if r.code == int(header["rank"]))
    grid = Grid(n=int(header["n"]))
    values = np.frombuffer(raw[_HEADER.itemsize :], dtype="<f8")
    return Field(grid, rank, values.reshape(rank.components, grid.n, grid.n)), float(header["time"])
