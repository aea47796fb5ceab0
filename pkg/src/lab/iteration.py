"""One convex-integration step on sampled fields.

Pipeline: mollify the relaxed solution, build amplitudes from the stress, add the
four perturbations, and close the new Reynolds stress so that the relaxed system holds
at the next level with the stored time derivative. Every stage is pure.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field as PydanticField

from lab import torus_spectral as ts
from lab.building_blocks import (
    Jet,
    TemporalPattern,
    bump,
    build_jets,
    check_jet_resolution,
    check_resolution,
    check_time_sampling,
    l2_gap,
    make_temporal,
    relative_gap,
    repair_periodicity,
)
from lab.geometry import WavevectorSet, decompose, default_wavevectors
from lab.params import FunctionSpaceSpec, ScaleSet, reciprocal
from lab.torus_spectral import NormSpec, Rank, TimeSampledField


class ConstructionError(RuntimeError):
    """Id − R/ρ left the certified ball while building amplitudes."""

    def __init__(self, message: str, frame: int | None = None, margin: float | None = None):
        super().__init__(message)
        self.frame = frame
        self.margin = margin


@dataclass(frozen=True)
class RelaxedSolution:
    """(u, R̊, P) at level q plus the time derivative the relaxed system is closed with."""

    u: TimeSampledField
    R: TimeSampledField
    P: TimeSampledField
    u_dt: TimeSampledField
    q: int = 0

    def __post_init__(self) -> None:
        for name, rank in (("u", Rank.VECTOR), ("R", Rank.SYM), ("P", Rank.SCALAR), ("u_dt", Rank.VECTOR)):
            value = getattr(self, name)
            if value.rank is not rank:
                raise TypeError(f"{name} must be {rank.value}, got {value.rank.value}")
            if value.grid != self.u.grid or value.times.shape != self.u.times.shape:
                raise TypeError(f"{name} is sampled on a different grid or time grid")

    @property
    def grid(self) -> ts.Grid:
        return self.u.grid


# Helpers ---------------------------------------------------------------------------


def _project(v: TimeSampledField) -> TimeSampledField:
    """ℙ_H ℙ_{≠0}."""
    return ts.leray_project(ts.project_nonzero(v))


def _relative(residual: np.ndarray, *terms: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(term))) for term in terms)
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(residual))) / scale


def _flux(u: TimeSampledField, dealias: bool) -> Tuple[TimeSampledField, TimeSampledField]:
    """Traceless part and trace of D(u, u)."""
    return ts.sym_traceless_product(u, u, dealias), ts.dot_product(u, u, dealias)


def _flux_divergence(u: TimeSampledField, dealias: bool) -> TimeSampledField:
    """div D(u, u) = div D̊(u, u) + ½∇ tr D(u, u)."""
    traceless, trace = _flux(u, dealias)
    return ts.divergence(traceless) + ts.gradient(trace).scaled(0.5)


def time_support(*fields: TimeSampledField) -> np.ndarray:
    """Frames where any of the fields is not exactly zero."""
    active = np.zeros(fields[0].nt, dtype=bool)
    for f in fields:
        active |= np.any(f.values != 0, axis=(1, 2, 3))
    return active


def periodic_distance(mask: np.ndarray, dt: float) -> np.ndarray:
    """Distance of every frame to the nearest active frame on the periodic time grid."""
    nt = mask.size
    active = np.flatnonzero(mask)
    if active.size == 0:
        return np.full(nt, math.inf)
    gap = np.abs(np.arange(nt)[:, None] - active[None, :])
    return np.min(np.minimum(gap, nt - gap), axis=1) * dt


def relaxed_residual(sol: RelaxedSolution, alpha: float, dealias: bool = False) -> Tuple[float, float]:
    """Relative residual of ∂_t u + (−Δ)^α u + div(u⊗u) + ∇P − div R̊, and of its ℙ_H part."""
    dissipation = ts.fractional_laplacian(sol.u, alpha)
    transport = _flux_divergence(sol.u, dealias)
    pressure = ts.gradient(sol.P)
    stress = ts.divergence(sol.R)
    total = sol.u_dt + dissipation + transport + pressure - stress
    terms = (sol.u_dt.values, dissipation.values, transport.values, pressure.values, stress.values)
    projected = ts.leray_project(sol.u_dt + dissipation + transport - stress)
    return _relative(total.values, *terms), _relative(projected.values, *terms)


def make_initial_velocity(
    grid: ts.Grid,
    time_samples: int,
    seed: int,
    kmax: int = 2,
    amplitude: float = 1.0,
    center: float = 0.5,
    width: float = 0.2,
) -> TimeSampledField:
    """Band-limited divergence-free u₀ = B((t − center)/width)·∇⊥ψ with a seeded stream function."""
    rng = np.random.default_rng(seed)
    stream = ts.random_band_limited(grid, Rank.SCALAR, rng, kmax)
    velocity = ts.perp_gradient(stream)
    peak = float(np.max(np.abs(velocity.values)))
    if peak > 0:
        velocity = velocity.scaled(amplitude / peak)
    times = ts.uniform_times(time_samples)
    envelope = bump((times - center) / width) / bump(0.0)
    values = envelope[:, None, None, None] * velocity.values[None]
    return TimeSampledField.uniform(grid, Rank.VECTOR, values)


# Operations -------------------------------------------------------------------------


def initial_step(
    u0: TimeSampledField, alpha: float, dealias: bool = False, tolerance: float = 1e-10
) -> RelaxedSolution:
    """R̊₀ = ℛ(∂_t u₀ + (−Δ)^α u₀) + u₀⊗̊u₀ and P₀ = −½|u₀|² minus its mean."""
    if u0.rank is not Rank.VECTOR:
        raise TypeError(f"u0 must be a vector field, got {u0.rank.value}")
    scale = float(np.max(np.abs(u0.values)))
    div = float(np.max(np.abs(ts.divergence(u0).values)))
    if div > tolerance * max(scale, 1e-300):
        raise ValueError(f"u0 is not divergence-free: max|div u0| = {div:.3e}")
    mean = float(np.max(np.abs(ts.spatial_mean(u0))))
    if mean > tolerance * max(scale, 1e-300):
        raise ValueError(f"u0 is not mean-free: max|mean| = {mean:.3e}")
    u_dt = ts.time_derivative(u0)
    linear = ts.project_nonzero(u_dt + ts.fractional_laplacian(u0, alpha))
    traceless, trace = _flux(u0, dealias)
    stress = ts.inverse_divergence(linear) + traceless
    pressure = ts.project_nonzero(trace).scaled(-0.5)
    return RelaxedSolution(u=u0, R=stress, P=pressure, u_dt=u_dt, q=0)


@dataclass(frozen=True)
class MollifiedState:
    u: TimeSampledField
    u_dt: TimeSampledField
    P: TimeSampledField
    R_ell: TimeSampledField
    R_com: TimeSampledField
    R_star: TimeSampledField
    ell: float
    notes: List[str] = field(default_factory=list)


def mollify_state(sol: RelaxedSolution, ell: float, dealias: bool = False) -> MollifiedState:
    """Mollify in space and time; the commutator stress collects the nonlinearity mismatch."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ts.ResolutionWarning)
        u_ell = ts.mollify(sol.u, ell)
        u_dt_ell = ts.mollify(sol.u_dt, ell)
        R_ell = ts.mollify(sol.R, ell)
        traceless, trace = _flux(sol.u, dealias)
        traceless_ell, trace_ell = _flux(u_ell, dealias)
        R_com = traceless_ell - ts.mollify(traceless, ell)
        P_ell = ts.mollify(sol.P, ell) + (ts.mollify(trace, ell) - trace_ell).scaled(0.5)
    notes = sorted({str(w.message) for w in caught if issubclass(w.category, ts.ResolutionWarning)})
    return MollifiedState(
        u=u_ell,
        u_dt=u_dt_ell,
        P=P_ell,
        R_ell=R_ell,
        R_com=R_com,
        R_star=R_ell + R_com,
        ell=ell,
        notes=notes,
    )


def mollified_residual(state: MollifiedState, alpha: float, dealias: bool = False) -> Tuple[float, float]:
    sol = RelaxedSolution(u=state.u, R=state.R_star, P=state.P, u_dt=state.u_dt)
    return relaxed_residual(sol, alpha, dealias)


def smooth_step(y: np.ndarray) -> np.ndarray:
    """C^∞ transition from 0 (y <= 0) to 1 (y >= 1)."""
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, 1.0)
    left = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
    right = np.where(y < 1, np.exp(-1.0 / np.where(y < 1, 1.0 - y, 1.0)), 0.0)
    return left / (left + right)


def cutoff_chi(z: np.ndarray) -> np.ndarray:
    """χ = 1 on [0, 1], χ(z) = z on [2, ∞), smooth in between with z/2 <= χ <= 2z."""
    z = np.asarray(z, dtype=np.float64)
    s = smooth_step(z - 1.0)
    return (1.0 - s) + s * z


def temporal_cutoff(target: TimeSampledField, ell: float) -> np.ndarray:
    """f_u: mollified indicator of N_{ℓ/2}(supp_t target), clipped, exactly 1 on the support."""
    active = time_support(target)
    if not active.any():
        return np.zeros(target.nt)
    distance = periodic_distance(active, target.dt)
    indicator = (distance <= ell / 2).astype(np.float64)
    offsets, weights = ts.time_kernel_weights(target.dt, ell / 2)
    smoothed = np.zeros_like(indicator)
    for offset, weight in zip(offsets, weights):
        smoothed += weight * np.roll(indicator, int(offset))
    smoothed = np.clip(smoothed, 0.0, 1.0)
    smoothed[active] = 1.0
    return smoothed


@dataclass(frozen=True)
class AmplitudeSet:
    """ρ_u, f_u and a_(k) with finite-difference ∂_t a_(k); arrays are (nt, n, n) per direction."""

    rho: np.ndarray
    f: np.ndarray
    a: np.ndarray
    a_dt: np.ndarray
    target: TimeSampledField
    delta: float
    c_r: float


def build_amplitudes(
    target: TimeSampledField, scales: ScaleSet, wavevectors: WavevectorSet
) -> AmplitudeSet:
    """a_(k) = ρ^{1/2} f γ_(k)(Id − R̊/ρ) with ρ = 2δ/C_R·χ(|R̊|/δ)."""
    if not wavevectors.certified:
        raise ValueError("wavevector set has no certified radius")
    if scales.delta_q1 <= 0:
        raise ValueError(f"δ_(q+1) must be positive, got {scales.delta_q1}")
    delta, c_r = scales.delta_q1, wavevectors.c_r
    magnitude = ts.magnitude(target)
    rho = 2.0 * delta / c_r * cutoff_chi(magnitude / delta)
    f = temporal_cutoff(target, scales.ell)
    r11, r12, r22 = (target.values[:, i] for i in range(3))
    try:
        squares = decompose(wavevectors, 1.0 - r11 / rho, -r12 / rho, 1.0 - r22 / rho)
    except ValueError as exc:
        ratio = magnitude / rho
        frame = int(np.unravel_index(np.argmax(ratio), ratio.shape)[0])
        margin = c_r - float(np.max(ratio))
        raise ConstructionError(f"amplitude construction failed at frame {frame}: {exc}", frame, margin) from exc
    a = np.sqrt(rho) * f[:, None, None] * np.sqrt(squares)
    a_dt = np.stack(
        [
            ts.time_derivative(TimeSampledField.uniform(target.grid, Rank.SCALAR, ak[:, None], target.period)).values[:, 0]
            for ak in a
        ]
    )
    return AmplitudeSet(rho=rho, f=f, a=a, a_dt=a_dt, target=target, delta=delta, c_r=c_r)


def check_amplitudes(amps: AmplitudeSet, wavevectors: WavevectorSet) -> Dict[str, float]:
    """Floor of ρ, the stress ratio bound, f on the support and the dyad identity."""
    ratio = ts.magnitude(amps.target) / amps.rho
    active = time_support(amps.target)
    total = np.zeros((3,) + amps.rho.shape)
    for index in range(len(wavevectors)):
        a, b = wavevectors.k1(index)
        weight = amps.a[index] ** 2
        total += np.stack([weight * a * a, weight * a * b, weight * b * b])
    f2 = (amps.f**2)[:, None, None]
    R = amps.target.values
    expected = np.stack([amps.rho * f2 - f2 * R[:, 0], -f2 * R[:, 1], amps.rho * f2 - f2 * R[:, 2]])
    return {
        "rho_floor": float(np.min(amps.rho)) * amps.c_r / amps.delta,
        "stress_ratio": float(np.max(ratio)) / amps.c_r,
        "f_min": float(np.min(amps.f)),
        "f_max": float(np.max(amps.f)),
        "f_on_support": float(np.min(amps.f[active])) if active.any() else 1.0,
        "dyad_identity": relative_gap(total, expected),
    }


@dataclass(frozen=True)
class Perturbation:
    """w_p, w_c, w_t, w_o with their time derivatives and the oscillation sources."""

    w_p: TimeSampledField
    w_c: TimeSampledField
    w_t: TimeSampledField
    w_o: TimeSampledField
    w: TimeSampledField
    w_dt: TimeSampledField
    principal_dt: TimeSampledField
    w_t_dt: TimeSampledField
    w_o_dt: TimeSampledField
    osc1_source: TimeSampledField
    osc2_source: TimeSampledField
    osc3_source: TimeSampledField
    checks: Dict[str, float] = field(default_factory=dict)


def _sym_components(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(11, 12, 22) components of v⊗w for vectors with a leading axis of length 2."""
    return np.stack([v[0] * w[0], v[0] * w[1], v[1] * w[1]])


def build_perturbations(
    amps: AmplitudeSet,
    jets: Sequence[Jet],
    pattern: TemporalPattern,
    scales: ScaleSet,
) -> Perturbation:
    """Principal part, incompressibility corrector and the two temporal correctors.

    Jet amplitudes are divided by the grid mean of |W_k|² so that the zero mode of
    W_k⊗W_k is exactly k1⊗k1 on the grid. w_c = Σ g(ã W^c + Ψ∇⊥ã/A) is built from the
    closed forms; the divergence-free sum w_p + w_c entering u_{q+1} is ∇⊥(Σ ãgΨ)/A.
    """
    like = amps.target
    grid, times = like.grid, like.times
    nt, n = like.nt, grid.n
    x1, x2 = grid.coordinates()
    frequency = jets[0].frequency
    vec = lambda: np.zeros((nt, 2, n, n))  # noqa: E731
    w_p, w_c, wt_src, wt_src_dt, wo_src, wo_src_dt = vec(), vec(), vec(), vec(), vec(), vec()
    osc1, osc2, osc3, balance_t, balance_o = vec(), vec(), vec(), vec(), vec()
    S = np.zeros((nt, 1, n, n))
    S_dt = np.zeros((nt, 1, n, n))
    rest = np.zeros((nt, 3, n, n))

    scalar = lambda values: TimeSampledField.uniform(grid, Rank.SCALAR, values[:, None], like.period)  # noqa: E731
    grad_a2 = [ts.gradient(scalar(a**2)).values for a in amps.a]
    grad_a2_dt = [ts.gradient(scalar(2.0 * a * a_dt)).values for a, a_dt in zip(amps.a, amps.a_dt)]
    grad_a = [ts.gradient(scalar(a)).values for a in amps.a]

    for i, t in enumerate(times):
        if not np.any(amps.a[:, i]):
            continue
        for k, jet in enumerate(jets):
            sample = jet.sample(x1, x2, t)
            k1 = np.array(jet.k1)[:, None, None]
            c = float(np.mean(sample.energy))
            c_dt = float(np.mean(sample.energy_dt))
            a, a_dt = amps.a[k, i], amps.a_dt[k, i]
            a_eff = a / math.sqrt(c)
            a_eff_dt = a_dt / math.sqrt(c) - 0.5 * a * c_dt / c**1.5
            g = float(pattern.g(k, t))
            g_dt = float(pattern.g(k, t, 1))
            h = float(pattern.h(k, t))
            h_dt = float(pattern.h_dt(k, t))

            w_p[i] += a_eff * g * sample.W
            grad_eff_a = grad_a[k][i] / math.sqrt(c)
            perp_a = np.stack([-grad_eff_a[1], grad_eff_a[0]])
            w_c[i] += g * (a_eff * sample.Wc + perp_a * sample.Psi / frequency)
            S[i, 0] += a_eff * g * sample.Psi
            S_dt[i, 0] += (a_eff_dt * g + a_eff * g_dt) * sample.Psi + a_eff * g * sample.Psi_dt

            weight = a_eff**2 * g**2
            weight_dt = 2 * a_eff * a_eff_dt * g**2 + 2 * a_eff**2 * g * g_dt
            wt_src[i] += weight * sample.energy * k1
            wt_src_dt[i] += (weight_dt * sample.energy + weight * sample.energy_dt) * k1
            along = np.sum(k1 * grad_a2[k][i], axis=0)
            along_dt = np.sum(k1 * grad_a2_dt[k][i], axis=0)
            wo_src[i] += h * along * k1
            wo_src_dt[i] += (h_dt * along + h * along_dt) * k1

            grad_eff = grad_a2[k][i] / c
            osc1[i] += g**2 * (sample.W * np.sum(sample.W * grad_eff, axis=0) - c * k1 * np.sum(k1 * grad_eff, axis=0))
            osc2[i] += weight_dt * sample.energy * k1
            osc3[i] += h * along_dt * k1
            balance_t[i] += weight * np.sum(k1 * sample.energy_grad, axis=0) * k1
            balance_o[i] += (g**2 - 1.0) * along * k1

            dyad = _sym_components(sample.W, sample.W)
            rest[i] += weight * (dyad - dyad.mean(axis=(-2, -1), keepdims=True))
            rest[i] += a**2 * (g**2 - 1.0) * _sym_components(k1, k1)

    field_of = lambda values, rank=Rank.VECTOR: like.with_values(values, rank)  # noqa: E731
    principal = ts.perp_gradient(field_of(S, Rank.SCALAR)).scaled(1.0 / frequency)
    principal_dt = ts.perp_gradient(field_of(S_dt, Rank.SCALAR)).scaled(1.0 / frequency)
    wp_field = field_of(w_p)
    wc_field = field_of(w_c)
    w_t = _project(field_of(wt_src)).scaled(-1.0 / scales.mu)
    w_t_dt = _project(field_of(wt_src_dt)).scaled(-1.0 / scales.mu)
    w_o = _project(field_of(wo_src)).scaled(-1.0 / scales.sigma)
    w_o_dt = _project(field_of(wo_src_dt)).scaled(-1.0 / scales.sigma)
    w = principal + w_t + w_o
    w_dt = principal_dt + w_t_dt + w_o_dt

    checks = {}
    div = ts.divergence(principal).values
    gradients = [ts.gradient(field_of(principal.values[:, j : j + 1], Rank.SCALAR)).values[:, j] for j in (0, 1)]
    checks["div_principal"] = _relative(div, *gradients)
    checks["corrector_representation"] = l2_gap((wp_field + wc_field).values, principal.values)
    transport = _project(field_of(balance_t)).values
    source = _project(field_of(osc2)).values / -scales.mu
    checks["temporal_balance"] = _relative(w_t_dt.values + transport - source, w_t_dt.values, transport, source)
    spread = _project(field_of(balance_o)).values
    source = _project(field_of(osc3)).values / -scales.sigma
    checks["oscillation_balance"] = _relative(w_o_dt.values + spread - source, w_o_dt.values, spread, source)
    checks["oscillation_identity"] = _oscillation_identity(wp_field.values, amps, rest)
    return Perturbation(
        w_p=wp_field,
        w_c=wc_field,
        w_t=w_t,
        w_o=w_o,
        w=w,
        w_dt=w_dt,
        principal_dt=principal_dt,
        w_t_dt=w_t_dt,
        w_o_dt=w_o_dt,
        osc1_source=_project(field_of(osc1)),
        osc2_source=_project(field_of(osc2)).scaled(-1.0 / scales.mu),
        osc3_source=_project(field_of(osc3)).scaled(-1.0 / scales.sigma),
        checks=checks,
    )


def _oscillation_identity(w_p: np.ndarray, amps: AmplitudeSet, rest: np.ndarray) -> float:
    """w_p⊗w_p + R̊ − ρf²Id − Σã²g²ℙ_{≠0}(W⊗W) − Σa²(g²−1)k1⊗k1 − (1 − f²)R̊, relative."""
    wpwp = np.stack([w_p[:, 0] ** 2, w_p[:, 0] * w_p[:, 1], w_p[:, 1] ** 2], axis=1)
    R = amps.target.values
    f2 = (amps.f**2)[:, None, None]
    iso = amps.rho * f2
    identity = np.stack([iso, np.zeros_like(iso), iso], axis=1)
    residual = wpwp + R - identity - rest - (1.0 - f2[:, None]) * R
    return _relative(residual, wpwp, R, identity)


@dataclass(frozen=True)
class StressDecomposition:
    """Components of R̊_{q+1}.

    ``osc`` is the oscillation block of the stress; ``osc_defect`` is what osc1 + osc2 + osc3
    leave of it, a discretization error that is measured and gated, never a component.
    """

    lin: TimeSampledField
    osc: TimeSampledField
    osc1: TimeSampledField
    osc2: TimeSampledField
    osc3: TimeSampledField
    osc_defect: TimeSampledField
    cor: TimeSampledField
    com: TimeSampledField
    total: TimeSampledField
    com_included: bool

    def components(self) -> Dict[str, TimeSampledField]:
        return {
            "R_lin": self.lin,
            "R_osc": self.osc,
            "R_osc1": self.osc1,
            "R_osc2": self.osc2,
            "R_osc3": self.osc3,
            "R_cor": self.cor,
            "R_com": self.com,
        }


def assemble_next(
    sol: RelaxedSolution,
    state: MollifiedState,
    pert: Perturbation,
    amps: AmplitudeSet,
    alpha: float,
    absorb_commutator: bool = True,
    dealias: bool = False,
) -> Tuple[RelaxedSolution, StressDecomposition]:
    """u_{q+1} = u_ℓ + w, R̊_{q+1} = R_lin + R_osc + R_cor (+ R_com), P_{q+1} from the elliptic relation."""
    inverse = lambda v: ts.inverse_divergence(ts.leray_project(v))  # noqa: E731
    u1 = state.u + pert.w
    u1_dt = state.u_dt + pert.w_dt
    # w − w_p, so that u_{q+1} is split exactly; differs from w_c + w_t + w_o by the sampled ∇⊥
    rest = pert.w - pert.w_p

    cross = ts.sym_traceless_product(state.u, pert.w, dealias).scaled(2.0)
    lin = inverse(pert.principal_dt + ts.fractional_laplacian(pert.w, alpha) + ts.divergence(cross))
    corrector = ts.sym_traceless_product(pert.w_p, rest, dealias).scaled(2.0) + ts.sym_traceless_product(rest, rest, dealias)
    cor = inverse(ts.divergence(corrector))
    principal_flux = ts.sym_traceless_product(pert.w_p, pert.w_p, dealias)
    osc = inverse(ts.divergence(principal_flux + amps.target) + pert.w_t_dt + pert.w_o_dt)
    osc1 = ts.inverse_divergence(pert.osc1_source)
    osc2 = ts.inverse_divergence(pert.osc2_source)
    osc3 = ts.inverse_divergence(pert.osc3_source)
    defect = osc - osc1 - osc2 - osc3
    com = inverse(ts.divergence(state.R_com))
    total = lin + osc + cor
    if not absorb_commutator:
        total = total + com

    traceless, trace = _flux(u1, dealias)
    pressure = ts.inverse_laplacian(ts.divergence(ts.divergence(total - traceless)))
    pressure = pressure - ts.project_nonzero(trace).scaled(0.5)
    solution = RelaxedSolution(u=u1, R=total, P=pressure, u_dt=u1_dt, q=sol.q + 1)
    decomposition = StressDecomposition(
        lin=lin,
        osc=osc,
        osc1=osc1,
        osc2=osc2,
        osc3=osc3,
        osc_defect=defect,
        cor=cor,
        com=com,
        total=total,
        com_included=not absorb_commutator,
    )
    return solution, decomposition


def stress_consistency(stress: TimeSampledField) -> float:
    """Relative gap between R̊ and ℛℙ_H div R̊."""
    again = ts.inverse_divergence(ts.leray_project(ts.divergence(stress)))
    return relative_gap(stress.values, again.values)


def osc_decomposition_ratio(decomp: StressDecomposition) -> float:
    """‖R_osc − R_osc1 − R_osc2 − R_osc3‖_{L¹} / ‖R_osc‖_{L¹}."""
    l1 = NormSpec.lebesgue(1)
    scale = ts.norm(decomp.osc, l1)
    if scale == 0:
        return 0.0
    return ts.norm(decomp.osc_defect, l1) / scale


# Report --------------------------------------------------------------------------------


class StepReport(BaseModel):
    """Measured norms, predicted exponents and identity residuals of one step."""

    q: int
    lam: float
    norms: Dict[str, float] = PydanticField(default_factory=dict)
    predicted: Dict[str, float] = PydanticField(
        default_factory=dict, description="log_λ exponents of the matching norms."
    )
    inductive: Dict[str, Tuple[float, float]] = PydanticField(
        default_factory=dict, description="name -> (measured, reference bound); reported only."
    )
    checks: Dict[str, float] = PydanticField(default_factory=dict)
    support_violations: List[int] = PydanticField(default_factory=list)
    notes: List[str] = PydanticField(default_factory=list)

    @property
    def support_ok(self) -> bool:
        return not self.support_violations

    def csv_rows(self) -> List[List[str]]:
        rows = [["norm", name, repr(value)] for name, value in self.norms.items()]
        rows += [["predicted", name, repr(value)] for name, value in self.predicted.items()]
        rows += [["check", name, repr(value)] for name, value in self.checks.items()]
        for name, (measured, bound) in self.inductive.items():
            rows.append(["inductive", name, f"{measured!r}/{bound!r}"])
        return rows


def predicted_exponents(scales: ScaleSet, space: FunctionSpaceSpec) -> Dict[str, float]:
    """log_λ exponents of the L^γ_t L^p_x perturbation norms and the L¹_t L^ϱ_x stress bounds.

    Each stress exponent is the largest λ-power among the terms bounding it; ℓ is held
    fixed. The corrector stress uses 1/p₂ = 1/ϱ − 1/2 since it is measured in L^ϱ.
    """
    e = scales.exponents
    inv_p, inv_gamma = reciprocal(space.p), reciprocal(space.gamma)
    half = Fraction(1, 2)
    r_perp, r_par, mu, tau, sigma = (e[name] for name in ("r_perp", "r_par", "mu", "tau", "sigma"))
    concentration = r_perp + r_par
    principal = concentration * (inv_p - half) + tau * (half - inv_gamma)
    inv_varrho = 1 / scales.varrho
    l2_varrho = concentration * (inv_varrho - half)
    l1_varrho = concentration * (inv_varrho - 1)
    dissipation = 2 * space.alpha - 1
    osc = {
        "R_osc1": -1 + r_perp * (inv_varrho - 2) + r_par * (inv_varrho - 1),
        "R_osc2": sigma + tau - mu + l1_varrho,
        "R_osc3": -sigma,
    }
    inv_p2 = inv_varrho - half
    values = {
        "w_p": principal,
        "w_c": principal + r_perp - r_par,
        "w_t": -mu + concentration * (inv_p - 1) + tau * (1 - inv_gamma),
        "w_o": -sigma,
        "R_lin": max(
            tau / 2 + sigma - 1 + l2_varrho,
            r_perp - r_par + mu + l2_varrho - tau / 2,
            dissipation + l2_varrho - tau / 2,
            dissipation - mu + l1_varrho,
            -sigma,
        ),
        "R_osc": max(osc.values()),
        "R_cor": max(
            concentration * (inv_p2 - half) + r_perp - r_par,
            -mu + concentration * (inv_p2 - 1) + tau / 2,
            -sigma,
        ),
    }
    values.update(osc)
    return {name: float(value) for name, value in values.items()}


def measure_step(
    sol_q: RelaxedSolution,
    sol_q1: RelaxedSolution,
    decomp: StressDecomposition,
    pert: Perturbation,
    amps: AmplitudeSet,
    state: MollifiedState,
    scales: ScaleSet,
    space: FunctionSpaceSpec,
    alpha: float,
    wavevectors: WavevectorSet,
    beta_prime: float = 0.0,
    dealias: bool = False,
) -> StepReport:
    report = StepReport(q=sol_q1.q, lam=scales.lam, notes=list(state.notes))
    l2 = NormSpec.lebesgue(2)
    l1_l2 = NormSpec.mixed(1, 2)
    mixed = NormSpec.mixed(space.gamma, space.p)
    for name, w in (("w_p", pert.w_p), ("w_c", pert.w_c), ("w_t", pert.w_t), ("w_o", pert.w_o), ("w", pert.w)):
        report.norms[f"{name}.L2_tx"] = ts.norm(w, l2)
        report.norms[f"{name}.L1_t_L2_x"] = ts.norm(w, l1_l2)
        report.norms[f"{name}.Lgamma_t_Lp_x"] = ts.norm(w, mixed)
    principal = report.norms["w_p.L2_tx"]
    report.norms["w_c_over_w_p"] = report.norms["w_c.L2_tx"] / principal if principal > 0 else 0.0
    report.norms["R_next.L1_tx"] = ts.norm(decomp.total, NormSpec.lebesgue(1))
    varrho = NormSpec.mixed(1, scales.varrho)
    for name, component in decomp.components().items():
        report.norms[f"{name}.L1_t_Lvarrho_x"] = ts.norm(component, varrho)
    report.norms["R_q.L1_tx"] = ts.norm(sol_q.R, NormSpec.lebesgue(1))
    report.predicted = predicted_exponents(scales, space)

    increment = sol_q1.u - sol_q.u
    lam, lam_q = scales.lam, scales.lambda_q
    report.inductive = {
        "u_C1_vs_lambda7": (ts.norm(sol_q1.u, NormSpec.holder(1)), lam**7),
        "R_C1_vs_lambda16": (ts.norm(sol_q1.R, NormSpec.holder(1)), lam**16),
        "increment_L2_vs_delta_q1": (ts.norm(increment, l2), scales.delta_q1**0.5),
        "increment_L1L2_vs_delta_q2": (ts.norm(increment, l1_l2), scales.delta_q2**0.5),
        "increment_LgammaLp_vs_delta_q2": (ts.norm(increment, mixed), scales.delta_q2**0.5),
        "R_next_L1_vs_delta_q2": (report.norms["R_next.L1_tx"], scales.delta_q2),
        "increment_H_beta": (ts.norm(increment, NormSpec.sobolev(beta_prime)), scales.delta_q1**0.5),
    }
    for index in range(len(wavevectors)):
        field_a = TimeSampledField.uniform(sol_q.grid, Rank.SCALAR, amps.a[index][:, None], sol_q.u.period)
        report.inductive[f"a_{index}_L2_vs_delta_q1"] = (ts.norm(field_a, l2), scales.delta_q1**0.5)
        report.norms[f"a_{index}.C1_tx"] = ts.norm(field_a, NormSpec.holder(1))
    report.norms["rho.min"] = float(np.min(amps.rho))
    report.norms["rho.max"] = float(np.max(amps.rho))

    absolute, projected = relaxed_residual(sol_q1, alpha, dealias)
    report.checks.update(pert.checks)
    report.checks.update({f"amplitude.{k}": v for k, v in check_amplitudes(amps, wavevectors).items()})
    report.checks["residual_next"] = absolute
    report.checks["residual_next_projected"] = projected
    report.checks["stress_consistency"] = stress_consistency(decomp.total)
    report.checks["div_u_next"] = _relative(ts.divergence(sol_q1.u).values, sol_q1.u.values)
    report.checks["mollified_residual"] = mollified_residual(state, alpha, dealias)[0]
    report.norms["osc_defect.L1_tx"] = ts.norm(decomp.osc_defect, NormSpec.lebesgue(1))
    report.checks["osc_decomposition"] = osc_decomposition_ratio(decomp)

    base = time_support(sol_q.R)
    distance = periodic_distance(base, sol_q.u.dt)
    moving = time_support(pert.w)
    report.support_violations = [int(i) for i in np.flatnonzero(moving & (distance >= 2 * scales.ell))]
    return report


# Driver --------------------------------------------------------------------------------


@dataclass(frozen=True)
class StepOutcome:
    solution: RelaxedSolution
    state: MollifiedState
    amplitudes: AmplitudeSet
    perturbation: Perturbation
    decomposition: StressDecomposition
    report: StepReport
    scales: ScaleSet


def run_step(
    sol: RelaxedSolution,
    scales: ScaleSet,
    space: FunctionSpaceSpec,
    wavevectors: WavevectorSet | None = None,
    absorb_commutator: bool = True,
    dealias: bool = False,
    resolution_factor: int = 4,
    beta_prime: float = 0.0,
    jet_points: int | None = None,
) -> StepOutcome:
    """Mollify, build amplitudes and perturbations, assemble level q+1 and measure it.

    The grid must resolve λ and put ``jet_points`` samples across a jet half-width, and
    the time grid must sample every feature of g_(k); otherwise ResolutionError.
    Products are pointwise unless ``dealias``, in which case the 2/3 truncation of
    w_p⊗w_p lands in the oscillation defect.
    """
    wavevectors = wavevectors or default_wavevectors()
    check_resolution(sol.grid, scales.lam, resolution_factor)
    scales, notes = repair_periodicity(scales, wavevectors.n_lambda)
    check_jet_resolution(sol.grid, scales.lam, wavevectors.n_lambda, jet_points)
    check_time_sampling(sol.u.nt, scales)
    alpha = float(space.alpha)
    state = mollify_state(sol, scales.ell, dealias)
    target = state.R_star if absorb_commutator else state.R_ell
    amps = build_amplitudes(target, scales, wavevectors)
    jets = build_jets(scales, wavevectors)
    pattern = make_temporal(scales, count=len(wavevectors))
    pert = build_perturbations(amps, jets, pattern, scales)
    solution, decomp = assemble_next(sol, state, pert, amps, alpha, absorb_commutator, dealias)
    report = measure_step(
        sol, solution, decomp, pert, amps, state, scales, space, alpha, wavevectors, beta_prime, dealias
    )
    report.notes.extend(notes)
    return StepOutcome(solution, state, amps, pert, decomp, report, scales)
