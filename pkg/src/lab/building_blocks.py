"""Intermittent jets, correctors and potentials, temporal concentration patterns.

Every block is a closed-form function of (x, t). Time enters the jets only through
the phase k1·x + μt and the temporal pattern only through τ·frac(σt), so time
derivatives are taken analytically.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Dict, List, Literal, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, Field as PydanticField
from scipy import integrate

from lab.geometry import WavevectorSet, default_wavevectors
from lab.params import (
    DeskMode,
    Exponent,
    FunctionSpaceSpec,
    INF,
    IterationParams,
    ScaleSet,
    derive_scales,
    reciprocal,
)
from lab.regression import RegressionResult, fit_power_law, fit_slope
from lab.torus_spectral import (
    Field,
    Grid,
    Rank,
    ResolutionError,
    directional_derivative,
    divergence,
    dot_product,
    gradient,
    perp_gradient,
    sym_traceless_product,
)
from policies import ResolutionPolicy, ToleranceLadder

SUPPORT_CUTOFF = 1e-3  # exp(−1/u) underflows to zero below this
GAUSS_NODES = 256
TIME_SHIFT_COUNT = 4
SweepKind = Literal["W", "Wc", "Psi", "Wc_over_W", "g", "h"]
SWEEP_KINDS: Tuple[str, ...] = ("W", "Wc", "Psi", "Wc_over_W", "g", "h")


# Bump profiles ----------------------------------------------------------------------


@lru_cache(maxsize=None)
def _bump_polynomial(order: int) -> Polynomial:
    """P_n with B^(n) = B·P_n / (1 − x²)^(2n) for B = exp(−1/(1 − x²))."""
    poly = Polynomial([1.0])
    x = Polynomial([0.0, 1.0])
    u = Polynomial([1.0, 0.0, -1.0])
    for n in range(order):
        poly = poly.deriv() * u**2 + (4 * n * x * u - 2 * x) * poly
    return poly


def bump(x, order: int = 0) -> np.ndarray:
    """n-th derivative of exp(−1/(1 − x²)), zero outside (−1, 1)."""
    x = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x)
    u = 1.0 - flat**2
    out = np.zeros_like(flat)
    inside = u > SUPPORT_CUTOFF
    xi, ui = flat[inside], u[inside]
    out[inside] = np.exp(-1.0 / ui) * _bump_polynomial(order)(xi) / ui ** (2 * order)
    return out.reshape(x.shape)


def _integral(fn: Callable[[float], float], lo: float = -1.0, hi: float = 1.0) -> float:
    value, _ = integrate.quad(lambda z: float(fn(z)), lo, hi, limit=200, epsabs=1e-14, epsrel=1e-13)
    return value


@dataclass(frozen=True)
class Profile:
    """φ = c_φ B′ and ψ = c_ψ B′ on [−1, 1], normalized by (1/2π)∫φ² = (1/2π)∫ψ² = 1."""

    c_phi: float
    c_psi: float
    phi_order: int = 1
    psi_order: int = 1

    def phi(self, z, derivative: int = 0) -> np.ndarray:
        return self.c_phi * bump(z, self.phi_order + derivative)

    def psi(self, z, derivative: int = 0) -> np.ndarray:
        return self.c_psi * bump(z, self.psi_order + derivative)

    def evaluator(self, name: Literal["phi", "psi"], derivative: int = 0) -> Callable:
        fn = self.phi if name == "phi" else self.psi
        return lambda z: fn(z, derivative)

    def square_integral(self, name: Literal["phi", "psi"], derivative: int = 0) -> float:
        fn = self.evaluator(name, derivative)
        return _integral(lambda z: fn(z) ** 2)

    def mean(self, name: Literal["phi", "psi"]) -> float:
        return _integral(self.evaluator(name))

    def lp_norm(self, name: Literal["phi", "psi"], p: float) -> float:
        fn = self.evaluator(name)
        return _integral(lambda z: abs(fn(z)) ** p) ** (1.0 / p)


@lru_cache(maxsize=1)
def make_profiles() -> Profile:
    raw = _integral(lambda z: bump(z, 1) ** 2)
    constant = math.sqrt(2.0 * math.pi / raw)
    return Profile(c_phi=constant, c_psi=constant)


def rescale_profile(fn: Callable, r: float) -> Callable:
    """z ↦ r^{-1/2} fn(z/r); L²-invariant, support radius r."""
    if not 0 < r <= 1:
        raise ValueError(f"rescaling radius must lie in (0, 1], got {r}")
    factor = r**-0.5
    return lambda z: factor * fn(np.asarray(z, dtype=np.float64) / r)


def periodize(fn: Callable) -> Callable:
    """1-periodic extension of a function supported in [−1, 1]."""

    def periodic(z):
        wrapped = (np.asarray(z, dtype=np.float64) + 0.5) % 1.0 - 0.5
        return fn(wrapped - 1.0) + fn(wrapped) + fn(wrapped + 1.0)

    return periodic


# Periodicity repair ----------------------------------------------------------------


def repair_periodicity(scales: ScaleSet, n_lambda: int) -> Tuple[ScaleSet, List[str]]:
    """Round λr⊥ and σ to positive integers and make Aμ a multiple of σ.

    A = λr⊥N_Λ is the jet frequency; the rounding keeps every block periodic on the
    unit torus and on the unit time interval.
    """
    m = max(1, round(scales.lam * scales.r_perp))
    r_perp = m / scales.lam
    sigma = float(max(1, round(scales.sigma)))
    frequency = m * n_lambda
    mu = sigma * max(1, round(frequency * scales.mu / sigma)) / frequency
    updates = {"r_perp": r_perp, "sigma": sigma, "mu": mu}
    repairs = dict(scales.repairs)
    notes = []
    for name, realized in updates.items():
        derived = getattr(scales, name)
        if abs(realized - derived) > 1e-12 * max(abs(derived), 1.0):
            repairs[name] = (derived, realized)
            notes.append(f"{name}: {derived:.6g} -> {realized:.6g} (periodicity repair)")
    return scales.model_copy(update={**updates, "repairs": repairs}), notes


def required_grid(lam: float, factor: int) -> int:
    return ResolutionPolicy(factor).required(lam)


def check_resolution(grid: Grid, lam: float, factor: int = 4) -> None:
    if grid.n < factor * lam:
        required = required_grid(lam, factor)
        raise ResolutionError(
            f"grid n = {grid.n} does not resolve λ = {lam:g} (needs n >= {factor}λ)",
            required_n=required,
            recommendation=f"use --grid {required} or a smaller λ",
        )


def jet_width(lam: float, n_lambda: int) -> float:
    """Across half-width r⊥/A = 1/(λN_Λ) of every jet, in x."""
    return 1.0 / (lam * n_lambda)


def resolves_jets(grid: Grid, lam: float, n_lambda: int, points: int) -> bool:
    return ResolutionPolicy.points_per_width(grid.n, jet_width(lam, n_lambda)) >= points


def check_jet_resolution(grid: Grid, lam: float, n_lambda: int, points: int | None = None) -> None:
    """Raise unless the grid puts ``points`` samples across a jet half-width."""
    policy = ResolutionPolicy()
    points = points or policy.jet_points
    width = jet_width(lam, n_lambda)
    if not resolves_jets(grid, lam, n_lambda, points):
        required = policy.required_for_width(width, points)
        have = policy.points_per_width(grid.n, width)
        raise ResolutionError(
            f"grid n = {grid.n} puts {have:.2f} points across a jet half-width 1/(λN_Λ) = {width:.4g}; "
            f"needs {points}",
            required_n=required,
            recommendation=f"use --grid {required} or a smaller λ",
        )


def required_time_samples(scales: ScaleSet, per_feature: int = 16) -> int:
    """Power of two with ``per_feature`` samples per σ^{-1}τ^{-1} feature of g_(k)."""
    n = 8
    while n < per_feature * scales.sigma * scales.tau:
        n *= 2
    return n


def check_time_sampling(time_samples: int, scales: ScaleSet, per_feature: int = 16) -> None:
    required = required_time_samples(scales, per_feature)
    if time_samples < required:
        raise ResolutionError(
            f"{time_samples} time samples give {time_samples / (scales.sigma * scales.tau):.2f} per feature of "
            f"g_(k) (στ = {scales.sigma * scales.tau:.4g}); needs {per_feature}",
            recommendation=f"set time_samples = {required}",
        )


# Jets ---------------------------------------------------------------------------------


_BLOCK_ORDERS = {"W": (0, 1), "Wc": (1, 0), "Psi": (0, 0)}


@dataclass(frozen=True)
class JetSample:
    """Closed-form jet quantities at one time; vectors have a leading axis of length 2."""

    W: np.ndarray
    Wc: np.ndarray
    Psi: np.ndarray
    Psi_grad: np.ndarray
    W_dt: np.ndarray
    W_jacobian: np.ndarray  # [i, j] = ∂_j W_i
    Psi_dt: np.ndarray
    energy: np.ndarray  # |W|²
    energy_dt: np.ndarray
    energy_grad: np.ndarray  # ∇|W|² from the Jacobian

    def flux_divergence(self) -> np.ndarray:
        """div(W⊗W)_i = Σ_j (∂_j W_i) W_j + W_i div W."""
        jac = self.W_jacobian
        div = jac[0, 0] + jac[1, 1]
        return np.einsum("ij...,j...->i...", jac, self.W) + self.W * div


@dataclass(frozen=True)
class Jet:
    """W_k, W_k^c and Ψ_k of one direction at realized (repaired) scales."""

    k: Tuple[float, float]
    k1: Tuple[float, float]
    scales: ScaleSet
    n_lambda: int
    profile: Profile

    def __post_init__(self) -> None:
        m = self.scales.lam * self.scales.r_perp
        if m < 1 - 1e-9 or abs(m - round(m)) > 1e-9:
            raise ValueError(f"λr⊥ = {m:.6g} is not a positive integer; call repair_periodicity")
        cycles = self.frequency * self.scales.mu / self.scales.sigma
        if abs(cycles - round(cycles)) > 1e-9 * max(cycles, 1.0):
            raise ValueError(f"Aμ/σ = {cycles:.6g} is not an integer; call repair_periodicity")

    @property
    def multiplier(self) -> int:
        return int(round(self.scales.lam * self.scales.r_perp))

    @property
    def frequency(self) -> int:
        """A = λr⊥N_Λ."""
        return int(round(self.scales.lam * self.scales.r_perp)) * self.n_lambda

    @cached_property
    def kappa(self) -> float:
        """Makes ‖W_k‖_{L²} = 1."""
        product = self.profile.square_integral("phi") * self.profile.square_integral("psi", 1)
        return product**-0.5

    def _phases(self, x1, x2, t) -> Tuple[np.ndarray, np.ndarray]:
        along = self.k1[0] * x1 + self.k1[1] * x2 + self.scales.mu * t
        across = self.k[0] * x1 + self.k[1] * x2
        return self.frequency * along, self.frequency * across

    def _factor(self, name: Literal["phi", "psi"], z: np.ndarray, derivative: int) -> np.ndarray:
        """r^{-1/2} f^(d)(z/r), periodized; the chain-rule factors are applied by callers."""
        r = self.scales.r_par if name == "phi" else self.scales.r_perp
        fn = self.profile.evaluator(name, derivative)
        return r**-0.5 * periodize(lambda w: fn(w / r))(z)

    def amplitude(self, block: str) -> float:
        s = self.scales
        return {"W": self.kappa, "Wc": self.kappa * s.r_perp / s.r_par, "Psi": self.kappa * s.r_perp}[block]

    def derivative_magnitude(self, block: str, x1, x2, t, N: int = 0, M: int = 0) -> np.ndarray:
        """Pointwise Frobenius magnitude of ∇^N ∂_t^M of a block, in the (k1, k) frame."""
        if block not in _BLOCK_ORDERS:
            raise ValueError(f"unknown block {block!r}")
        f0, g0 = _BLOCK_ORDERS[block]
        s = self.scales
        z_phi, z_psi = self._phases(x1, x2, t)
        along = self.frequency / s.r_par
        across = self.frequency / s.r_perp
        total = 0.0
        for a in range(N + 1):
            b = N - a
            coefficient = self.amplitude(block) * along ** (a + M) * s.mu**M * across**b
            term = coefficient * self._factor("phi", z_phi, f0 + a + M) * self._factor("psi", z_psi, g0 + b)
            total = total + math.comb(N, a) * term**2
        return np.sqrt(total)

    def sample(self, x1: np.ndarray, x2: np.ndarray, t: float) -> JetSample:
        s = self.scales
        kappa, frequency = self.kappa, self.frequency
        z_phi, z_psi = self._phases(x1, x2, t)
        f0, f1 = self._factor("phi", z_phi, 0), self._factor("phi", z_phi, 1)
        g0, g1, g2 = (self._factor("psi", z_psi, d) for d in (0, 1, 2))
        k1 = np.array(self.k1)[:, None, None]
        k = np.array(self.k)[:, None, None]
        along = frequency / s.r_par
        across = frequency / s.r_perp

        W = -kappa * f0 * g1 * k1
        Wc = kappa * (s.r_perp / s.r_par) * f1 * g0 * k
        Psi = kappa * s.r_perp * f0 * g0
        Psi_grad = kappa * s.r_perp * (f1 * along * g0 * k1 + f0 * g1 * across * k)
        W_dt = -kappa * f1 * (along * s.mu) * g1 * k1
        Psi_dt = kappa * s.r_perp * f1 * (along * s.mu) * g0
        # ∇ of the scalar factor f0·g1, then the outer product with −κk1
        factor_grad = f1 * along * g1 * k1 + f0 * g2 * across * k
        jacobian = -kappa * k1[:, None] * factor_grad[None, :]
        return JetSample(
            W=W,
            Wc=Wc,
            Psi=Psi,
            Psi_grad=Psi_grad,
            W_dt=W_dt,
            W_jacobian=jacobian,
            Psi_dt=Psi_dt,
            energy=np.sum(W * W, axis=0),
            energy_dt=2.0 * np.sum(W * W_dt, axis=0),
            energy_grad=2.0 * np.einsum("i...,ij...->j...", W, jacobian),
        )


def build_jets(
    scales: ScaleSet, wavevectors: WavevectorSet | None = None, profile: Profile | None = None
) -> List[Jet]:
    """One jet per direction; scales must already be repaired."""
    wavevectors = wavevectors or default_wavevectors()
    profile = profile or make_profiles()
    return [
        Jet(wavevectors.k(i), wavevectors.k1(i), scales, wavevectors.n_lambda, profile)
        for i in range(len(wavevectors))
    ]


def sample_jet(
    jet: Jet, grid: Grid, t: float, resolution_factor: int = 4
) -> Tuple[Field, Field, Field]:
    """(W_k, W_k^c, Ψ_k) sampled from the closed forms at time t."""
    check_resolution(grid, jet.scales.lam, resolution_factor)
    x1, x2 = grid.coordinates()
    sample = jet.sample(x1, x2, t)
    return (
        Field(grid, Rank.VECTOR, sample.W),
        Field(grid, Rank.VECTOR, sample.Wc),
        Field.scalar(grid, sample.Psi),
    )


class IdentityReport(BaseModel):
    """Relative residuals of closed-form identities, resolution-limited checks and diagnostics.

    ``residuals`` are gated at the caller's identity tolerance; ``resolved`` carry their
    own budgets because they only converge as the grid refines.
    """

    residuals: Dict[str, float] = PydanticField(default_factory=dict)
    resolved: Dict[str, float] = PydanticField(default_factory=dict)
    budgets: Dict[str, float] = PydanticField(default_factory=dict)
    diagnostics: Dict[str, float] = PydanticField(default_factory=dict)
    notes: List[str] = PydanticField(default_factory=list)

    def passed(self, tolerance: float) -> bool:
        exact = all(value <= tolerance for value in self.residuals.values())
        return exact and all(value <= self.budgets[name] for name, value in self.resolved.items())

    def worst(self) -> Tuple[str, float]:
        if not self.residuals:
            return "", 0.0
        name = max(self.residuals, key=self.residuals.get)
        return name, self.residuals[name]

    def gate(self, name: str, value: float, budget: float) -> None:
        self.budgets[name] = budget
        _merge(self.resolved, name, value)


def relative_gap(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs))) / scale


def l2_gap(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """‖lhs − rhs‖_{L²} over the larger of the two L² norms."""
    scale = max(float(np.sqrt(np.mean(lhs**2))), float(np.sqrt(np.mean(rhs**2))))
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.mean((lhs - rhs) ** 2))) / scale


def _merge(target: Dict[str, float], name: str, value: float) -> None:
    target[name] = max(target.get(name, 0.0), value)


def spectral_flux_divergence(W: Field) -> np.ndarray:
    """div(W⊗W) = div(W⊗̊W) + ½∇|W|², pointwise products of the samples."""
    traceless = sym_traceless_product(W, W, truncate=False)
    trace = dot_product(W, W, truncate=False)
    return divergence(traceless).values + 0.5 * gradient(trace).values


def check_jet_identities(
    jet: Jet,
    grid: Grid,
    times: Sequence[float],
    resolution_factor: int = 4,
    policy: ResolutionPolicy | None = None,
    ladder: ToleranceLadder | None = None,
) -> IdentityReport:
    """Curl relation, energy flux and potential transport, the stated periodicities.

    The closed-form checks hold at any grid. Spectral derivatives of the sampled jets,
    the L² normalization and the zero mean are gated once the grid resolves a jet
    half-width (``policy.jet_points`` for quadratures, ``policy.spectral_points`` for
    derivatives) and skipped with a note otherwise.
    """
    check_resolution(grid, jet.scales.lam, resolution_factor)
    policy = policy or ResolutionPolicy()
    ladder = ladder or ToleranceLadder()
    x1, x2 = grid.coordinates()
    s = jet.scales
    k1 = np.array(jet.k1)[:, None, None]
    width = jet_width(s.lam, jet.n_lambda)
    points = policy.points_per_width(grid.n, width)
    quadrature = points >= policy.jet_points
    spectral = points >= policy.spectral_points
    report = IdentityReport()
    report.diagnostics["points_per_jet_width"] = points
    for name, ready, needed in (("quadrature", quadrature, policy.jet_points), ("spectral", spectral, policy.spectral_points)):
        if not ready:
            report.notes.append(
                f"{name} checks skipped: {points:.2f} points per jet half-width, need {needed} "
                f"(grid {policy.required_for_width(width, needed)})"
            )
    for t in times:
        sample = jet.sample(x1, x2, t)
        curl = np.stack([-sample.Psi_grad[1], sample.Psi_grad[0]]) / jet.frequency
        _merge(report.residuals, "curl_potential", relative_gap(curl, sample.W + sample.Wc))
        flux = s.mu * sample.flux_divergence()
        _merge(report.residuals, "energy_flux", relative_gap(sample.energy_dt * k1, flux))
        along = np.sum(k1 * sample.energy_grad, axis=0)
        _merge(report.residuals, "energy_transport", relative_gap(sample.energy_dt, s.mu * along))
        potential_along = np.sum(k1 * sample.Psi_grad, axis=0)
        _merge(report.residuals, "potential_transport", relative_gap(sample.Psi_dt, s.mu * potential_along))
        shifted = jet.sample(x1, x2, t + 1.0 / s.sigma)
        _merge(report.residuals, "time_periodicity", relative_gap(shifted.W, sample.W))
        for dx1, dx2, name in ((1.0 / jet.multiplier, 0.0, "space_periodicity_x1"), (0.0, 1.0 / jet.multiplier, "space_periodicity_x2")):
            moved = jet.sample(x1 + dx1, x2 + dx2, t)
            _merge(report.residuals, name, relative_gap(moved.W, sample.W))

        # Both sides spectral: W ∥ k1 makes div(W⊗W) = (k1·∇)|W|² k1 exact on the grid.
        W = Field(grid, Rank.VECTOR, sample.W)
        spectral_flux = s.mu * spectral_flux_divergence(W)
        energy = Field.scalar(grid, sample.energy)
        spectral_along = s.mu * directional_derivative(energy, jet.k1).values[0] * k1
        _merge(report.residuals, "spectral_energy_flux", relative_gap(spectral_flux, spectral_along))

        l2 = float(np.sqrt(np.mean(sample.energy)))
        mean = float(np.max(np.abs(sample.W.mean(axis=(-2, -1)))))
        _merge(report.diagnostics, "l2_W", l2)
        _merge(report.diagnostics, "mean_W", mean / max(l2, 1e-300))
        psi = Field.scalar(grid, sample.Psi)
        spectral_curl = perp_gradient(psi).values / jet.frequency
        curl_gap = l2_gap(spectral_curl, sample.W + sample.Wc)
        flux_gap = l2_gap(spectral_flux, sample.energy_dt * k1)
        transport_gap = l2_gap(s.mu * directional_derivative(psi, jet.k1).values[0], sample.Psi_dt)
        _merge(report.diagnostics, "spectral_curl_potential", curl_gap)
        _merge(report.diagnostics, "spectral_flux_vs_closed_form", flux_gap)
        _merge(report.diagnostics, "spectral_potential_transport", transport_gap)
        if quadrature:
            report.gate("unit_l2", abs(l2 - 1.0), ladder.quadrature)
            report.gate("mean_W", mean / max(l2, 1e-300), ladder.quadrature)
        if spectral:
            report.gate("spectral_curl_potential", curl_gap, ladder.spectral)
            report.gate("spectral_flux_vs_closed_form", flux_gap, ladder.spectral)
            report.gate("spectral_potential_transport", transport_gap, ladder.spectral)
    return report


# Temporal patterns ---------------------------------------------------------------------


@lru_cache(maxsize=1)
def _gauss_legendre() -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(GAUSS_NODES)


@dataclass(frozen=True)
class TemporalPattern:
    """g_(k) and h_(k): bumps of width ``width`` shifted to ``shifts``, τ-concentrated, σ-oscillating."""

    tau: float
    sigma: float
    shifts: Tuple[float, ...]
    width: float
    c_g: float

    def base(self, s, derivative: int = 0) -> np.ndarray:
        """Unconcentrated bump on [0, width] with ∫g² = 1."""
        s = np.asarray(s, dtype=np.float64)
        slope = 2.0 / self.width
        return self.c_g * slope**derivative * bump(slope * s - 1.0, derivative)

    def _local(self, index: int, t) -> Tuple[np.ndarray, np.ndarray]:
        frac = (self.sigma * np.asarray(t, dtype=np.float64)) % 1.0
        return self.tau * frac - self.shifts[index], frac

    def g(self, index: int, t, derivative: int = 0) -> np.ndarray:
        """∂_t^M g_(k)(t) = σ^M τ^{M+1/2} g^(M)(τ·frac(σt) − t_k)."""
        s, _ = self._local(index, t)
        factor = self.sigma**derivative * self.tau ** (derivative + 0.5)
        return factor * self.base(s, derivative)

    def cumulative(self, s) -> np.ndarray:
        """Q(s) = ∫_0^s g², clipped to [0, 1]."""
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.width)
        nodes, weights = _gauss_legendre()
        points = s[..., None] * (nodes + 1.0) / 2.0
        values = np.sum(weights * self.base(points) ** 2, axis=-1) * s / 2.0
        return np.clip(values, 0.0, 1.0)

    def h(self, index: int, t) -> np.ndarray:
        """h_(k)(t) = ∫_0^{frac(σt)} (g_{k,τ}² − 1)."""
        s, frac = self._local(index, t)
        return self.cumulative(s) - frac

    def h_dt(self, index: int, t) -> np.ndarray:
        return self.sigma * (self.g(index, t) ** 2 - 1.0)

    def supports(self, index: int) -> List[Tuple[float, float]]:
        """Support intervals of g_(k) inside [0, 1)."""
        start = self.shifts[index] / (self.tau * self.sigma)
        length = self.width / (self.tau * self.sigma)
        period = 1.0 / self.sigma
        return [(start + j * period, start + length + j * period) for j in range(int(round(self.sigma)))]


def make_temporal(
    scales: ScaleSet,
    count: int = TIME_SHIFT_COUNT,
    width: float | None = None,
    shifts: Sequence[float] | None = None,
    periodic: bool = True,
) -> TemporalPattern:
    """Shifts t_k = k/count and bump width 1/(4·count) unless given.

    ``periodic`` asks for an integer σ, so that g_(k) is periodic on the unit time interval.
    """
    if scales.tau < 1:
        raise ValueError(f"τ = {scales.tau:g} must be at least 1")
    if scales.sigma < 1:
        raise ValueError(f"σ = {scales.sigma:g} must be at least 1")
    if periodic and abs(scales.sigma - round(scales.sigma)) > 1e-12:
        raise ValueError(f"σ = {scales.sigma:g} must be a positive integer; call repair_periodicity")
    width = width if width is not None else 1.0 / (4 * count)
    shifts = tuple(shifts) if shifts is not None else tuple(i / count for i in range(count))
    overlaps = []
    for i, a in enumerate(shifts):
        if a < 0 or a + width > 1:
            overlaps.append(f"{i}: [{a:g}, {a + width:g}] leaves [0, 1]")
        for j in range(i + 1, len(shifts)):
            b = shifts[j]
            if a < b + width and b < a + width:
                overlaps.append(f"({i}, {j})")
    if overlaps:
        raise ValueError(f"temporal shifts collide: {', '.join(overlaps)}")
    raw = _integral(lambda y: bump(y) ** 2)
    c_g = math.sqrt(2.0 / (width * raw))
    return TemporalPattern(tau=scales.tau, sigma=scales.sigma, shifts=shifts, width=width, c_g=c_g)


def temporal_norm(pattern: TemporalPattern, index: int, gamma: Exponent, derivative: int = 0) -> float:
    """‖∂_t^M g_(k)‖_{L^γ(0,1)}: one support by adaptive quadrature, σ periods per unit time."""
    fn = lambda t: float(pattern.g(index, t, derivative))  # noqa: E731
    intervals = pattern.supports(index)
    if gamma == INF:
        dense = np.linspace(*intervals[0], 4097)
        return float(np.max(np.abs(pattern.g(index, dense, derivative))))
    power = float(gamma)
    a, b = intervals[0]
    one = _integral(lambda t: abs(fn(t)) ** power, a, b)
    return (pattern.sigma * one) ** (1.0 / power)


def h_sup(pattern: TemporalPattern, index: int, samples: int = 8192) -> float:
    t = np.linspace(0.0, 1.0 / pattern.sigma, samples, endpoint=False)
    return float(np.max(np.abs(pattern.h(index, t))))


def h_difference(pattern: TemporalPattern, index: int, times, step: float | None = None) -> np.ndarray:
    """Fourth-order central difference of h_(k); the step defaults to 1/400 of a g support."""
    step = step or pattern.width / (pattern.tau * pattern.sigma) / 400.0
    t = np.asarray(times, dtype=np.float64)
    h = lambda offset: pattern.h(index, t + offset * step)  # noqa: E731
    return (h(-2) - 8.0 * h(-1) + 8.0 * h(1) - h(2)) / (12.0 * step)


def check_temporal_identities(
    pattern: TemporalPattern, times: Sequence[float], checkpoints: int = 16, ladder: ToleranceLadder | None = None
) -> IdentityReport:
    """Normalization, disjointness, ‖h‖ ≤ 1 and the h-derivative identity.

    ∂_t h = σ(g² − 1) is checked twice without using the closed form of ∂_t h: by
    central differences of h on a dense grid over the supports, and in integrated form
    against adaptive quadrature of g² − 1.
    """
    ladder = ladder or ToleranceLadder()
    report = IdentityReport()
    times = np.asarray(times, dtype=np.float64)
    count = len(pattern.shifts)
    for index in range(count):
        norm2 = temporal_norm(pattern, index, Fraction(2)) ** 2
        _merge(report.residuals, "normalization", abs(norm2 - 1.0))
        bound = h_sup(pattern, index)
        report.diagnostics[f"h_sup_{index}"] = bound
        _merge(report.residuals, "h_bound", max(0.0, bound - 1.0))
        start, stop = pattern.supports(index)[0]
        dense = np.concatenate([times, np.linspace(start, stop, 257)])
        expected = pattern.sigma * (pattern.g(index, dense) ** 2 - 1.0)
        report.gate("h_derivative", relative_gap(h_difference(pattern, index, dense), expected), ladder.stencil)
        edges = [0.0] + [p for interval in pattern.supports(index) for p in interval]
        for t in np.linspace(0.0, 1.0, checkpoints, endpoint=False)[1:]:
            inside = [p for p in edges if p < t]
            integral = sum(
                _integral(lambda u: float(pattern.g(index, u)) ** 2 - 1.0, lo, hi)
                for lo, hi in zip(inside, inside[1:] + [t])
            )
            gap = abs((float(pattern.h(index, t)) - float(pattern.h(index, 0.0))) / pattern.sigma - integral)
            _merge(report.residuals, "h_integrated", gap)
    overlap = 0.0
    for i in range(count):
        for j in range(i + 1, count):
            overlap = max(overlap, float(np.max(np.abs(pattern.g(i, times) * pattern.g(j, times)))))
    report.residuals["disjoint_supports"] = overlap
    return report


# Scaling sweeps -----------------------------------------------------------------------


def _nominal_exponent(kind: str, exps: Dict[str, Fraction], p: Exponent, gamma: Exponent, N: int, M: int) -> Fraction:
    inv_p, inv_gamma = reciprocal(p), reciprocal(gamma)
    half = Fraction(1, 2)
    jet = (exps["r_perp"] + exps["r_par"]) * (inv_p - half) + N + M * (1 + exps["r_perp"] - exps["r_par"] + exps["mu"])
    if kind == "W":
        return jet
    if kind == "Wc":
        return jet + exps["r_perp"] - exps["r_par"]
    if kind == "Psi":
        return jet + exps["r_perp"]
    if kind == "Wc_over_W":
        return exps["r_perp"] - exps["r_par"]
    if kind == "g":
        return M * exps["sigma"] + (M + half - inv_gamma) * exps["tau"]
    return Fraction(0)


def _realized_law(kind: str, s: ScaleSet, p: Exponent, gamma: Exponent, N: int, M: int) -> float:
    inv_p, inv_gamma = float(reciprocal(p)), float(reciprocal(gamma))
    jet = (s.r_perp * s.r_par) ** (inv_p - 0.5) * s.lam**N * (s.lam * s.r_perp * s.mu / s.r_par) ** M
    if kind == "W":
        return jet
    if kind == "Wc":
        return jet * s.r_perp / s.r_par
    if kind == "Psi":
        return jet * s.r_perp
    if kind == "Wc_over_W":
        return s.r_perp / s.r_par
    if kind == "g":
        return s.sigma**M * s.tau ** (M + 0.5 - inv_gamma)
    return 1.0


def _spatial_lp(values: np.ndarray, p: Exponent) -> float:
    if p == INF:
        return float(np.max(values))
    power = float(p)
    return float(np.mean(values**power) ** (1.0 / power))


def measure_block(
    kind: str,
    scales: ScaleSet,
    p: Exponent,
    gamma: Exponent,
    N: int = 0,
    M: int = 0,
    direction: int = 0,
    resolution_factor: int = 16,
    time_samples: int = 4,
    wavevectors: WavevectorSet | None = None,
) -> float:
    """Norm of one block at one scale set: C_t L^p_x for jets, L^γ_t for g, C_t for h."""
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; expected one of {', '.join(SWEEP_KINDS)}")
    if kind in ("g", "h"):
        pattern = make_temporal(scales, periodic=False)
        if kind == "g":
            return temporal_norm(pattern, direction, gamma, M)
        return h_sup(pattern, direction)
    wavevectors = wavevectors or default_wavevectors()
    jet = build_jets(scales, wavevectors)[direction]
    grid = Grid(n=required_grid(scales.lam, resolution_factor))
    x1, x2 = grid.coordinates()
    times = np.arange(time_samples) / (time_samples * scales.sigma)
    if kind == "Wc_over_W":
        ratios = [
            _spatial_lp(jet.derivative_magnitude("Wc", x1, x2, t), p)
            / _spatial_lp(jet.derivative_magnitude("W", x1, x2, t), p)
            for t in times
        ]
        return float(max(ratios))
    return float(max(_spatial_lp(jet.derivative_magnitude(kind, x1, x2, t, N, M), p) for t in times))


def sweep_scales(
    params: IterationParams,
    space: FunctionSpaceSpec,
    lam: int,
    n_lambda: int,
    ell: float = 1 / 16,
    repair: bool = True,
) -> ScaleSet:
    scales = derive_scales(params, space, desk=DeskMode(lam=lam, ell=ell))
    if not repair:
        return scales
    repaired, _ = repair_periodicity(scales, n_lambda)
    return repaired


def scaling_sweep(
    kind: SweepKind,
    p: Exponent,
    gamma: Exponent,
    N: int,
    M: int,
    lambdas: Sequence[int],
    params: IterationParams,
    space: FunctionSpaceSpec,
    tolerance: float | None = None,
    direction: int = 0,
    resolution_factor: int = 16,
    workers: int = 1,
) -> RegressionResult:
    """Fit the λ-slope of a block norm against its nominal exponent.

    Temporal blocks are measured at the unrounded σ, since g_(k) needs no periodicity
    on its own; jets need the repaired scales, and the slope of their law at those
    scales is kept as ``realized``.
    """
    if len(lambdas) < 4:
        raise ValueError(f"a sweep needs at least 4 λ values, got {len(lambdas)}")
    wavevectors = default_wavevectors()
    temporal = kind in ("g", "h")
    scale_sets = [
        sweep_scales(params, space, lam, wavevectors.n_lambda, repair=not temporal) for lam in lambdas
    ]

    def measure(scales: ScaleSet) -> float:
        return measure_block(kind, scales, p, gamma, N, M, direction, resolution_factor, wavevectors=wavevectors)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = list(pool.map(measure, scale_sets))
    realized = fit_slope(lambdas, [_realized_law(kind, s, p, gamma, N, M) for s in scale_sets])
    nominal = float(_nominal_exponent(kind, scale_sets[0].exponents, p, gamma, N, M))
    if tolerance is None:
        tolerance = 0.05 if temporal else 0.1
    mode = "bound" if kind == "h" else "match"
    result = fit_power_law(lambdas, values, nominal, tolerance, mode=mode, nominal=nominal)
    return result.model_copy(update={"realized": realized})
