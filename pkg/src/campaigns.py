"""Verification campaigns: config loading, runners and artifact writers."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Mapping, Sequence, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import fft

from lab import torus_spectral as ts
from lab.building_blocks import (
    SWEEP_KINDS,
    IdentityReport,
    build_jets,
    bump,
    check_jet_identities,
    check_temporal_identities,
    jet_width,
    make_temporal,
    repair_periodicity,
    required_time_samples,
    scaling_sweep,
)
from lab.geometry import (
    BASE_COEFFICIENTS,
    coefficient_table,
    decompose,
    decompose_exact,
    default_wavevectors,
    reconstruct,
    sample_ball,
)
from lab.iteration import (
    ConstructionError,
    RelaxedSolution,
    StepReport,
    initial_step,
    make_initial_velocity,
    run_step,
)
from lab.params import (
    INF,
    DeskMode,
    Exponent,
    FunctionSpaceSpec,
    IterationParams,
    ScaleSet,
    as_float,
    check_constraints,
    derive_scales,
    parse_exponent,
)
from lab.regression import RegressionResult, fit_power_law
from lab.torus_spectral import Field as SpatialField
from lab.torus_spectral import Grid, NormSpec, Rank, ResolutionError
from policies import ResolutionPolicy, SlopePolicy, ToleranceLadder

CampaignKind = Literal["identities", "sweep", "lemma64", "lemma65", "step", "constraints"]
KINDS: Tuple[str, ...] = ("identities", "sweep", "lemma64", "lemma65", "step", "constraints")
DEFAULT_CONFIG_DIR = Path("configs")
TREND_COMPONENTS = ("R_lin", "R_osc", "R_osc1", "R_osc2", "R_osc3", "R_cor")

# (kind, p, gamma, N, M) for ``sweep_kind=all``.
SWEEP_GRID: Tuple[Tuple[str, str, str, int, int], ...] = (
    ("W", "1", "inf", 0, 0),
    ("W", "2", "inf", 0, 0),
    ("W", "1", "inf", 1, 0),
    ("W", "2", "inf", 1, 0),
    ("Wc", "2", "inf", 0, 0),
    ("Psi", "2", "inf", 0, 0),
    ("Wc_over_W", "2", "inf", 0, 0),
    ("g", "2", "1", 0, 0),
    ("g", "2", "2", 0, 0),
    ("g", "2", "2", 0, 1),
    ("h", "2", "inf", 0, 0),
)


class ConfigError(ValueError):
    """A campaign config cannot be read or validated."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


# Settings ----------------------------------------------------------------------


class LabSettings(BaseModel):
    """Process-level settings taken from the environment."""

    threads: int = Field(default=1, ge=1, description="Workers for sweep points and FFTs.")
    config: Path | None = Field(default=None, description="Default campaign config path.")

    @classmethod
    def from_env(cls) -> "LabSettings":
        raw = os.getenv("LAB_THREADS", "").strip()
        try:
            threads = int(raw) if raw else 1
        except ValueError as exc:
            raise ConfigError(f"LAB_THREADS must be an integer, got {raw!r}", "LAB_THREADS") from exc
        config = os.getenv("LAB_CONFIG")
        return cls(threads=threads, config=Path(config) if config else None)


def _int_list(value: Any) -> List[int]:
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",") if part.strip()]
        return [int(part) for part in parts]
    if isinstance(value, int):
        return [value]
    return [int(item) for item in value]


class Campaign(BaseModel):
    """One campaign: kind, function space, iteration parameters, scales and tolerances."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    kind: CampaignKind
    alpha: str = Field(default="1", description="Dissipation exponent α ∈ [1, 3/2).")
    gamma: str = Field(default="inf", description="Time integrability γ.")
    p: str = Field(default="2", description="Space integrability p.")
    epsilon: str = Field(default="1/40", description="Slack exponent ε.")
    a: int = 2
    b: int = 2
    beta: float = 1e-6
    q: int = Field(default=0, ge=0)
    lambdas: List[int] = Field(default_factory=lambda: [8], alias="lambda")
    grid_n: int | None = Field(default=None, description="Spatial grid; derived from λ when unset.")
    time_samples: int | None = Field(
        default=None, ge=8, description="Time grid; 16 samples per σ⁻¹τ⁻¹ feature of g_(k) when unset."
    )
    desk_mode: bool = True
    ell: float = Field(default=1 / 8, gt=0, lt=0.5)
    delta: float | None = Field(default=None, gt=0)
    delta_from_stress: bool = False
    seed: int = Field(default=0, ge=0)
    resolution_factor: int = Field(default=4, ge=1)
    jet_points: int = Field(
        default=ResolutionPolicy().jet_points, ge=1, description="Grid points per jet half-width 1/(λN_Λ) in a step."
    )
    spectral_points: int = Field(default=ResolutionPolicy().spectral_points, ge=1)
    jet_grid_max: int = Field(default=2048, ge=8, description="Largest grid for resolution-limited jet checks.")
    dealias: bool = Field(default=False, description="2/3-truncate the step's products instead of pointwise.")
    absorb_commutator: bool = True
    steps: int = Field(default=1, ge=1)
    trend: bool = Field(default=False, description="Independent steps per λ with slope fits.")
    beta_prime: float = Field(default=0.0, ge=0)
    identity_trials: int = Field(default=8, ge=1)
    sweep_kind: str = "W"
    sweep_p: str = "2"
    sweep_gamma: str = "inf"
    sweep_N: int = Field(default=0, ge=0)
    sweep_M: int = Field(default=0, ge=0)
    sweep_direction: int = Field(default=0, ge=0, le=3)
    sweep_resolution: int = Field(default=16, ge=2)
    sigmas: List[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    lemma_p: str = "2"
    lemma_amplitude: float = Field(default=0.5, description="Size of the non-constant part of f or a.")
    tol_identity: float = Field(default=ToleranceLadder().identity, gt=0)
    tol_operator: float = Field(default=ToleranceLadder().operator, gt=0)
    tol_residual: float = Field(default=ToleranceLadder().residual, gt=0)
    tol_quadrature: float = Field(default=ToleranceLadder().quadrature, gt=0)
    tol_spectral: float = Field(default=ToleranceLadder().spectral, gt=0)
    tol_osc_defect: float = Field(default=ToleranceLadder().decomposition, gt=0)
    tol_slope: float = Field(default=SlopePolicy().spatial, gt=0)
    tol_slope_temporal: float = Field(default=SlopePolicy().temporal, gt=0)
    tol_lemma_slope: float = Field(default=SlopePolicy().lemma, gt=0)
    output: Path = Path("artifacts")

    @field_validator("lambdas", "sigmas", mode="before")
    @classmethod
    def _parse_list(cls, value: Any) -> List[int]:
        return _int_list(value)

    @field_validator("alpha", "gamma", "p", "epsilon", "sweep_p", "sweep_gamma", "lemma_p", mode="before")
    @classmethod
    def _parse_rational(cls, value: Any) -> str:
        return str(parse_exponent(value))

    @model_validator(mode="after")
    def _check_kind(self) -> "Campaign":
        slopes = SlopePolicy()
        if self.kind == "sweep":
            slopes.assert_enough_points(self.lambdas, "λ-sweep")
            slopes.assert_geometric(self.lambdas, "λ-sweep")
            if self.sweep_kind != "all" and self.sweep_kind not in SWEEP_KINDS:
                raise ValueError(f"sweep_kind must be 'all' or one of {', '.join(SWEEP_KINDS)}")
        if self.kind == "lemma64":
            slopes.assert_enough_points(self.sigmas, "σ-sweep")
            slopes.assert_geometric(self.sigmas, "σ-sweep")
        if self.kind == "lemma65" or (self.kind == "step" and self.trend):
            slopes.assert_enough_points(self.lambdas, "λ-sweep")
            slopes.assert_geometric(self.lambdas, "λ-sweep")
        if self.kind == "step" and not self.trend and self.steps > len(self.lambdas):
            raise ValueError(f"steps = {self.steps} needs that many λ values, got {len(self.lambdas)}")
        if self.grid_n is not None and (self.grid_n < 8 or self.grid_n & (self.grid_n - 1)):
            raise ValueError(f"grid_n must be a power of two >= 8, got {self.grid_n}")
        return self

    # Loading ---------------------------------------------------------------------

    @classmethod
    def from_file(cls, path: Path, overrides: Mapping[str, Any] | None = None) -> "Campaign":
        """Read a key=value file; CLI overrides win over file values."""
        if not path.exists():
            raise ConfigError(f"Config file {path} does not exist.")
        raw = {key.strip().lower(): value for key, value in dotenv_values(path).items()}
        return cls.from_values(raw, overrides)

    @classmethod
    def from_values(
        cls, values: Mapping[str, Any], overrides: Mapping[str, Any] | None = None
    ) -> "Campaign":
        known = {name for name in cls.model_fields} | {"lambda"}
        merged = {key: value for key, value in values.items() if value is not None}
        merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
        for key in sorted(merged):
            if key not in known or key == "lambdas":
                raise ConfigError(f"Unknown config key {key!r}.", key)
        try:
            return cls.model_validate(merged)
        except ValidationError as exc:
            first = exc.errors()[0]
            key = ".".join(str(part) for part in first.get("loc", ())) or None
            raise ConfigError(f"Invalid config: {first.get('msg', exc)}", key) from exc

    # Derived objects ---------------------------------------------------------------

    def space(self) -> FunctionSpaceSpec:
        return FunctionSpaceSpec(alpha=self.alpha, gamma=self.gamma, p=self.p)

    def params(self) -> IterationParams:
        return IterationParams(a=self.a, b=self.b, beta=self.beta, epsilon=self.epsilon)

    def desk(self, lam: int, delta: float | None = None) -> DeskMode | None:
        if not self.desk_mode:
            return None
        return DeskMode(lam=lam, ell=self.ell, delta=delta if delta is not None else self.delta)

    def grid_for(self, lam: float, factor: int | None = None) -> Grid:
        if self.grid_n is not None:
            return Grid(n=self.grid_n)
        return Grid(n=ResolutionPolicy(factor or self.resolution_factor).required(lam))

    def step_grid(self, lam: float) -> Grid:
        """Grid resolving λ and putting ``jet_points`` samples across a jet half-width."""
        if self.grid_n is not None:
            return Grid(n=self.grid_n)
        policy = ResolutionPolicy(self.resolution_factor, self.jet_points)
        width = jet_width(lam, default_wavevectors().n_lambda)
        return Grid(n=max(policy.required(lam), policy.required_for_width(width)))

    def jet_check_grid(self, lam: float) -> Grid:
        """Grid for the jet identities: resolution-limited checks as far as ``jet_grid_max`` allows."""
        if self.grid_n is not None:
            return Grid(n=self.grid_n)
        policy = ResolutionPolicy(self.resolution_factor, self.jet_points, self.spectral_points)
        width = jet_width(lam, default_wavevectors().n_lambda)
        wanted = [policy.required_for_width(width, points) for points in (self.spectral_points, self.jet_points)]
        affordable = [n for n in wanted if n <= self.jet_grid_max]
        return Grid(n=max([policy.required(lam)] + affordable[:1]))

    def time_grid(self, scales: Sequence[ScaleSet]) -> int:
        """Explicit time_samples, else the sampling every scale set needs."""
        if self.time_samples is not None:
            return self.time_samples
        return max(required_time_samples(s) for s in scales)

    def manifest(self) -> Dict[str, str]:
        rows = {}
        for name, value in self.model_dump().items():
            if name == "output":
                continue
            if isinstance(value, list):
                value = ",".join(str(item) for item in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = repr(value)
            rows[f"config.{name}"] = "" if value is None else str(value)
        return rows


# Results -------------------------------------------------------------------------


class CheckRow(BaseModel):
    """One residual compared against its budget; ungated rows are reported only."""

    group: str
    name: str
    value: float
    budget: float
    passed: bool
    gated: bool = True


class CsvTable(BaseModel):
    header: List[str]
    rows: List[List[str]] = Field(default_factory=list)


class CampaignResult(BaseModel):
    kind: str
    seed: int
    checks: List[CheckRow] = Field(default_factory=list)
    regressions: Dict[str, RegressionResult] = Field(default_factory=dict)
    tables: Dict[str, CsvTable] = Field(default_factory=dict)
    manifest: Dict[str, str] = Field(default_factory=dict)
    failures: List[Dict[str, str]] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    snapshots: Dict[str, Any] = Field(default_factory=dict, exclude=True, description="file name -> (Field, time).")

    @property
    def passed(self) -> bool:
        return (
            not self.failures
            and all(row.passed for row in self.checks if row.gated)
            and all(result.passed for result in self.regressions.values())
        )

    def add_check(self, group: str, name: str, value: float, budget: float, gated: bool = True) -> None:
        self.checks.append(
            CheckRow(group=group, name=name, value=value, budget=budget, passed=value <= budget, gated=gated)
        )

    def add_regression(self, name: str, result: RegressionResult) -> None:
        self.regressions[name] = result
        table = CsvTable(header=["scale", "value", "predicted_slope", "fitted_slope"], rows=result.csv_rows())
        self.tables[f"sweep_{name}"] = table

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [row.model_dump() for row in self.checks],
            "regressions": {
                name: {
                    "fitted": result.fitted,
                    "predicted": result.predicted,
                    "nominal": result.nominal,
                    "realized": result.realized,
                    "tolerance": result.tolerance,
                    "mode": result.mode,
                    "degenerate": result.degenerate,
                    "passed": result.passed,
                }
                for name, result in self.regressions.items()
            },
            "failures": self.failures,
            "notes": self.notes,
        }


def _record_scales(result: CampaignResult, scales: ScaleSet, prefix: str) -> None:
    for key, value in scales.manifest().items():
        result.manifest[f"{prefix}.{key}"] = value


def _record_tolerances(result: CampaignResult, campaign: Campaign) -> None:
    ladder = ToleranceLadder()
    result.manifest["tolerance.exact"] = repr(ladder.exact)
    result.manifest["tolerance.finite_difference"] = repr(ladder.finite_difference)
    result.manifest["tolerance.stencil"] = repr(ladder.stencil)
    names = ("identity", "operator", "residual", "quadrature", "spectral", "osc_defect")
    for name in names + ("slope", "slope_temporal", "lemma_slope"):
        result.manifest[f"tolerance.{name}"] = repr(getattr(campaign, f"tol_{name}"))


# Identity suite --------------------------------------------------------------------


def _relative(residual: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.max(np.abs(reference)))
    if scale == 0:
        return float(np.max(np.abs(residual)))
    return float(np.max(np.abs(residual))) / scale


def _operator_checks(campaign: Campaign, result: CampaignResult) -> None:
    grid = campaign.grid_for(16)
    rng = np.random.default_rng(campaign.seed)
    worst: Dict[str, float] = {}
    for _ in range(campaign.identity_trials):
        v = ts.random_band_limited(grid, Rank.VECTOR, rng)
        phi = ts.random_band_limited(grid, Rank.SCALAR, rng)
        once = ts.leray_project(v)
        gradient = ts.gradient(phi)
        values = {
            "div_inverse_divergence": _relative((ts.divergence(ts.inverse_divergence(v)) - v).values, v.values),
            "leray_idempotent": _relative((ts.leray_project(once) - once).values, once.values),
            "leray_gradient": _relative(ts.leray_project(gradient).values, gradient.values),
            "fractional_laplacian_alpha1": _relative(
                (ts.fractional_laplacian(v, 1.0) + ts.laplacian(v)).values, ts.laplacian(v).values
            ),
        }
        for name, value in values.items():
            worst[name] = max(worst.get(name, 0.0), value)
    ladder = ToleranceLadder()
    budgets = {"div_inverse_divergence": campaign.tol_operator}
    for name, value in worst.items():
        result.add_check("operators", name, value, budgets.get(name, ladder.exact))


def _geometry_checks(campaign: Campaign, result: CampaignResult, samples: int = 1000) -> None:
    wavevectors = default_wavevectors()
    ladder = ToleranceLadder()
    identity = ((1, 0), (0, 1))
    exact = decompose_exact(identity, wavevectors.decomposition)
    mismatch = sum(abs(float(x - y)) for x, y in zip(exact, BASE_COEFFICIENTS))
    result.add_check("geometry", "base_coefficients", mismatch, 0.0)
    rng = np.random.default_rng(campaign.seed)
    r11, r12, r22 = sample_ball(wavevectors, rng, samples)
    squares = decompose(wavevectors, r11, r12, r22)
    rebuilt = reconstruct(wavevectors, squares)
    target = np.stack([r11, r12, r22])
    result.add_check("geometry", "reconstruction", _relative(rebuilt - target, target), ladder.exact)
    floor = float(np.min(squares))
    result.add_check("geometry", "min_coefficient_margin", -floor, 0.0)
    for name, value in coefficient_table(wavevectors).items():
        result.manifest[f"geometry.{name}"] = repr(value)


def _gate_report(
    result: CampaignResult, group: str, report: IdentityReport, tolerance: float, exact: Sequence[str] = ()
) -> None:
    for name, value in report.residuals.items():
        result.add_check(group, name, value, 0.0 if name in exact else tolerance)
    for name, value in report.resolved.items():
        result.add_check(group, name, value, report.budgets[name])
    for name, value in report.diagnostics.items():
        result.add_check(group, name, value, math.inf, gated=False)
    result.notes.extend(f"{group}: {note}" for note in report.notes)


def _block_checks(campaign: Campaign, result: CampaignResult) -> None:
    wavevectors = default_wavevectors()
    params, space = campaign.params(), campaign.space()
    policy = ResolutionPolicy(campaign.resolution_factor, campaign.jet_points, campaign.spectral_points)
    ladder = ToleranceLadder(quadrature=campaign.tol_quadrature, spectral=campaign.tol_spectral)
    for lam in campaign.lambdas:
        scales = derive_scales(params, space, q=campaign.q, desk=campaign.desk(lam))
        scales, notes = repair_periodicity(scales, wavevectors.n_lambda)
        result.notes.extend(f"λ={lam}: {note}" for note in notes)
        _record_scales(result, scales, f"scales.lambda{lam}")
        grid = campaign.jet_check_grid(lam)
        result.manifest[f"jets.lambda{lam}.grid_n"] = str(grid.n)
        times = [0.0, 0.25 / scales.sigma, 0.5 / scales.sigma]
        for index, jet in enumerate(build_jets(scales, wavevectors)):
            report = check_jet_identities(jet, grid, times, campaign.resolution_factor, policy, ladder)
            _gate_report(result, f"jets.lambda{lam}.k{index}", report, campaign.tol_identity)
        pattern = make_temporal(scales, count=len(wavevectors))
        times = ts.uniform_times(campaign.time_grid([scales]))
        report = check_temporal_identities(pattern, times, ladder=ladder)
        _gate_report(result, f"temporal.lambda{lam}", report, campaign.tol_identity, ("h_bound", "disjoint_supports"))


def run_identity_suite(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    """Operator core, the dyad decomposition, jet identities and temporal identities."""
    result = CampaignResult(kind="identities", seed=campaign.seed)
    _operator_checks(campaign, result)
    _geometry_checks(campaign, result)
    _block_checks(campaign, result)
    return result


# Sweeps ---------------------------------------------------------------------------


def run_sweep_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    settings = settings or LabSettings()
    result = CampaignResult(kind="sweep", seed=campaign.seed)
    if campaign.sweep_kind == "all":
        grid = SWEEP_GRID
    else:
        grid = (
            (
                campaign.sweep_kind,
                campaign.sweep_p,
                campaign.sweep_gamma,
                campaign.sweep_N,
                campaign.sweep_M,
            ),
        )
    for kind, p, gamma, N, M in grid:
        tolerance = campaign.tol_slope_temporal if kind in ("g", "h") else campaign.tol_slope
        fit = scaling_sweep(
            kind,
            parse_exponent(p),
            parse_exponent(gamma),
            N,
            M,
            campaign.lambdas,
            campaign.params(),
            campaign.space(),
            tolerance=tolerance,
            direction=campaign.sweep_direction,
            resolution_factor=campaign.sweep_resolution,
            workers=settings.threads,
        )
        name = f"{kind}_p{p}_gamma{gamma}_N{N}_M{M}".replace("/", "-")
        result.add_regression(name, fit)
    return result


# Auxiliary rate checks -----------------------------------------------------------


def smooth_weight(amplitude: float = 0.5) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """1 + amplitude·sin 2πx₁."""
    return lambda x1, x2: 1.0 + amplitude * np.sin(2 * np.pi * x1) + 0.0 * x2


def sine_profile(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.sin(2 * np.pi * x1) + 0.0 * x2


def bump_weight(amplitude: float = 0.5, width: float = 0.25) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """1 + amplitude·B((x₁ mod 1 − ½)/width)/B(0): smooth with every Fourier mode present."""
    profile = bump_profile(width)
    return lambda x1, x2: 1.0 + amplitude * profile(x1, x2) / float(bump(0.0))


def bump_profile(width: float = 0.25) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Periodic bump in x₁ of half-width ``width``; g(σ·) stays 1/σ-periodic for integer σ."""
    return lambda x1, x2: bump((np.mod(x1, 1.0) - 0.5) / width) + 0.0 * x2


def cosine_weight(amplitude: float = 0.5) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """1 + amplitude·cos 2πx₂."""
    return lambda x1, x2: 1.0 + amplitude * np.cos(2 * np.pi * x2) + 0.0 * x1


def single_mode(x1: np.ndarray, x2: np.ndarray, lam: int) -> np.ndarray:
    """(cos 2πλx₁, 0): one Fourier mode with |ξ| = λ."""
    return np.stack([np.cos(2 * np.pi * lam * x1), 0.0 * x2])


def _lp(values: np.ndarray, p: Exponent) -> float:
    return ts.norm(_as_field(values), NormSpec.lebesgue(p))


def _as_field(values: np.ndarray) -> SpatialField:
    n = values.shape[-1]
    grid = Grid(n=n)
    if values.ndim == 2:
        return SpatialField.scalar(grid, values)
    return SpatialField(grid, Rank.VECTOR, values)


def c1_norm(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: Grid) -> float:
    """max(sup|f|, sup|∇f|) of a scalar closed form sampled on the grid."""
    field = ts.sample(grid, fn)
    return ts.norm(field, NormSpec.holder(1))


def hessian_sup(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: Grid) -> float:
    """sup_x max_ij |∂_i∂_j a|."""
    gradient = ts.gradient(ts.sample(grid, fn))
    best = 0.0
    for component in range(2):
        second = ts.gradient(SpatialField.scalar(grid, gradient.values[component]))
        best = max(best, float(np.max(np.abs(second.values))))
    return best


def run_decorrelation_check(
    p: Exponent,
    sigmas: Sequence[int],
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid_n: int | None = None,
    tolerance: float = SlopePolicy().lemma,
    floor_fraction: float = 1e-12,
) -> RegressionResult:
    """Gap |‖f g(σ·)‖_p − ‖f‖_p‖g(σ·)‖_p| against the σ^{-1/p} bound.

    The gap is normalised by ‖f‖_{C¹}‖g‖_p; gaps below ``floor_fraction`` of that scale
    are rounding noise and clamped, so smooth inputs whose gap vanishes are degenerate.
    """
    p = parse_exponent(p)
    SlopePolicy().assert_enough_points(sigmas, "σ-sweep")
    if any(int(s) != s or s < 1 for s in sigmas):
        raise ValueError(f"σ values must be positive integers, got {list(sigmas)}")
    grid = Grid(n=grid_n) if grid_n else Grid(n=ResolutionPolicy(16).required(max(sigmas)))
    ResolutionPolicy(4).assert_resolved(grid.n, max(sigmas))
    x1, x2 = grid.coordinates()
    base = np.broadcast_to(f(x1, x2), (grid.n, grid.n))
    scale_f = c1_norm(f, grid)
    if scale_f == 0:
        raise ValueError("f has vanishing C¹ norm; the decorrelation bound is empty")
    f_norm = _lp(base, p)
    gaps = []
    for sigma in sigmas:
        oscillating = np.broadcast_to(g(sigma * x1, sigma * x2), (grid.n, grid.n))
        g_norm = _lp(oscillating, p)
        gap = abs(_lp(base * oscillating, p) - f_norm * g_norm)
        gaps.append(gap / (scale_f * g_norm) if g_norm > 0 else 0.0)
    predicted = -1.0 / as_float(p) if p != INF else 0.0
    return fit_power_law(
        [float(s) for s in sigmas],
        gaps,
        predicted,
        tolerance,
        mode="bound",
        nominal=predicted,
        floor=floor_fraction,
    )


def run_stationary_phase_check(
    p: Exponent,
    lambdas: Sequence[int],
    a: Callable[[np.ndarray, np.ndarray], np.ndarray],
    f: Callable[[np.ndarray, np.ndarray, int], np.ndarray],
    tolerance: float = SlopePolicy().lemma,
    resolution_factor: int = 4,
    grid_n: int | None = None,
) -> Tuple[RegressionResult, float]:
    """‖|∇|^{-1}ℙ_{≠0}(a ℙ_{≥λ} f)‖_p against λ^{-1}; also returns the fitted constant."""
    p = parse_exponent(p)
    SlopePolicy().assert_enough_points(lambdas, "λ-sweep")
    policy = ResolutionPolicy(resolution_factor)
    grid = Grid(n=grid_n) if grid_n else Grid(n=policy.required(max(lambdas)))
    policy.assert_resolved(grid.n, max(lambdas))
    x1, x2 = grid.coordinates()
    weight = np.broadcast_to(a(x1, x2), (grid.n, grid.n))
    values = []
    for lam in lambdas:
        field = _as_field(np.asarray(f(x1, x2, lam), dtype=np.float64))
        high = ts.project_high(field, lam)
        if float(np.max(np.abs(high.values))) <= 1e-14 * max(float(np.max(np.abs(field.values))), 1e-300):
            raise ValueError(f"f has no content at |ξ| >= {lam}; the stationary phase bound is vacuous")
        product = ts.project_nonzero(_as_field(high.values * weight))
        smoothed = ts.inverse_abs_gradient(product)
        values.append(ts.norm(smoothed, NormSpec.lebesgue(p)) / ts.norm(field, NormSpec.lebesgue(p)))
    fit = fit_power_law([float(lam) for lam in lambdas], values, -1.0, tolerance, mode="match", nominal=-1.0)
    scales = np.asarray(lambdas, dtype=np.float64)
    constant = float(np.exp(np.mean(np.log(np.maximum(values, 1e-300)) - fit.fitted * np.log(scales))))
    return fit, constant


def run_lemma64_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    result = CampaignResult(kind="lemma64", seed=campaign.seed)
    fit = run_decorrelation_check(
        campaign.lemma_p,
        campaign.sigmas,
        bump_weight(campaign.lemma_amplitude),
        bump_profile(),
        grid_n=campaign.grid_n,
        tolerance=campaign.tol_lemma_slope,
    )
    result.add_regression("decorrelation", fit)
    if fit.degenerate:
        result.notes.append("decorrelation gap vanished at every σ (below the rounding floor)")
    return result


def run_lemma65_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    result = CampaignResult(kind="lemma65", seed=campaign.seed)
    a = cosine_weight(campaign.lemma_amplitude)
    fit, constant = run_stationary_phase_check(
        campaign.lemma_p,
        campaign.lambdas,
        a,
        single_mode,
        tolerance=campaign.tol_lemma_slope,
        resolution_factor=campaign.resolution_factor,
        grid_n=campaign.grid_n,
    )
    result.add_regression("stationary_phase", fit)
    grid = Grid(n=ResolutionPolicy(campaign.resolution_factor).required(max(campaign.lambdas)))
    result.manifest["lemma.fitted_constant"] = repr(constant)
    result.manifest["lemma.hessian_sup"] = repr(hessian_sup(a, grid))
    return result


# Iteration steps -----------------------------------------------------------------


def _step_checks(result: CampaignResult, campaign: Campaign, group: str, report: StepReport) -> None:
    ladder = ToleranceLadder()
    budgets = {
        "oscillation_identity": campaign.tol_identity,
        "div_principal": campaign.tol_operator,
        "temporal_balance": campaign.tol_identity,
        "oscillation_balance": campaign.tol_identity,
        "osc_decomposition": campaign.tol_osc_defect,
        "residual_next_projected": campaign.tol_residual,
        "stress_consistency": campaign.tol_identity,
        "div_u_next": campaign.tol_identity,
        "amplitude.dyad_identity": campaign.tol_identity,
    }
    for name, value in report.checks.items():
        if name in budgets:
            result.add_check(group, name, value, budgets[name])
        else:
            result.add_check(group, name, value, math.inf, gated=False)
    result.add_check(group, "amplitude.stress_ratio_within_ball", report.checks["amplitude.stress_ratio"], 1.0)
    result.add_check(group, "amplitude.f_on_support", 1.0 - report.checks["amplitude.f_on_support"], ladder.exact)
    result.add_check(group, "support_violations", float(len(report.support_violations)), 0.0)


def _step_table(rows: List[List[str]], step: int, report: StepReport) -> None:
    for row in report.csv_rows():
        rows.append([str(step)] + row)


def _start(campaign: Campaign, grid: Grid, time_samples: int) -> RelaxedSolution:
    u0 = make_initial_velocity(grid, time_samples, campaign.seed)
    return initial_step(u0, float(campaign.space().alpha), campaign.dealias)


def _step_scales(campaign: Campaign, levels: Sequence[Tuple[int, int]]) -> List[ScaleSet]:
    """Repaired scales of each (q, λ), for sizing the grids up front."""
    params, space, n_lambda = campaign.params(), campaign.space(), default_wavevectors().n_lambda
    return [
        repair_periodicity(derive_scales(params, space, q=q, desk=campaign.desk(lam)), n_lambda)[0]
        for q, lam in levels
    ]


def _record_grid(result: CampaignResult, grid: Grid, time_samples: int) -> None:
    result.manifest["step.grid_n"] = str(grid.n)
    result.manifest["step.time_samples"] = str(time_samples)


def run_step_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    """m consecutive steps at the configured λ sequence, or a λ-trend of single steps."""
    if campaign.trend:
        return run_trend_campaign(campaign, settings)
    result = CampaignResult(kind="step", seed=campaign.seed)
    lambdas = campaign.lambdas[: campaign.steps]
    grid = Grid(n=max(campaign.step_grid(lam).n for lam in lambdas))
    time_samples = campaign.time_grid(_step_scales(campaign, list(enumerate(lambdas))))
    _record_grid(result, grid, time_samples)
    space, params = campaign.space(), campaign.params()
    wavevectors = default_wavevectors()
    sol = _start(campaign, grid, time_samples)
    result.manifest["initial.R0_L1_tx"] = repr(ts.norm(sol.R, NormSpec.lebesgue(1)))
    rows: List[List[str]] = []
    increments = []
    for step, lam in enumerate(lambdas):
        delta = ts.norm(sol.R, NormSpec.lebesgue(1)) if campaign.delta_from_stress else None
        scales = derive_scales(params, space, q=sol.q, desk=campaign.desk(lam, delta))
        outcome = run_step(
            sol,
            scales,
            space,
            wavevectors,
            absorb_commutator=campaign.absorb_commutator,
            dealias=campaign.dealias,
            resolution_factor=campaign.resolution_factor,
            beta_prime=campaign.beta_prime,
            jet_points=campaign.jet_points,
        )
        report = outcome.report
        _record_scales(result, outcome.scales, f"scales.step{step}")
        _step_checks(result, campaign, f"step{step}", report)
        _step_table(rows, step, report)
        result.notes.extend(f"step {step}: {note}" for note in report.notes)
        increments.append(report.inductive["increment_H_beta"][0])
        sol = outcome.solution
    result.tables["step"] = CsvTable(header=["step", "section", "name", "value"], rows=rows)
    result.tables["increments"] = CsvTable(
        header=["step", "increment_H_beta", "cumulative"],
        rows=[[str(i), repr(v), repr(float(sum(increments[: i + 1])))] for i, v in enumerate(increments)],
    )
    result.manifest["final.q"] = str(sol.q)
    result.snapshots = {f"u_q{sol.q}.bin": (sol.u.frame(sol.u.nt // 2), float(sol.u.times[sol.u.nt // 2]))}
    return result


def run_trend_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    """One step per λ from the same u₀; fit how stresses and w_c/w_p scale with λ.

    Every step shares the grid of the largest λ, so the largest λ sets the cost.
    """
    result = CampaignResult(kind="step", seed=campaign.seed)
    grid = campaign.step_grid(max(campaign.lambdas))
    time_samples = campaign.time_grid(_step_scales(campaign, [(0, lam) for lam in campaign.lambdas]))
    _record_grid(result, grid, time_samples)
    space, params = campaign.space(), campaign.params()
    wavevectors = default_wavevectors()
    sol = _start(campaign, grid, time_samples)
    series: Dict[str, List[float]] = {name: [] for name in TREND_COMPONENTS + ("w_c_over_w_p",)}
    predicted: Dict[str, float] = {}
    rows: List[List[str]] = []
    for lam in campaign.lambdas:
        scales = derive_scales(params, space, q=sol.q, desk=campaign.desk(lam))
        outcome = run_step(
            sol,
            scales,
            space,
            wavevectors,
            absorb_commutator=campaign.absorb_commutator,
            dealias=campaign.dealias,
            resolution_factor=campaign.resolution_factor,
            beta_prime=campaign.beta_prime,
            jet_points=campaign.jet_points,
        )
        report = outcome.report
        predicted = report.predicted
        _record_scales(result, outcome.scales, f"scales.lambda{lam}")
        _step_checks(result, campaign, f"lambda{lam}", report)
        _step_table(rows, lam, report)
        for name in series:
            key = name if name == "w_c_over_w_p" else f"{name}.L1_t_Lvarrho_x"
            series[name].append(report.norms[key])
    result.tables["step"] = CsvTable(header=["lambda", "section", "name", "value"], rows=rows)
    scales = [float(lam) for lam in campaign.lambdas]
    epsilon = float(params.epsilon)
    result.add_regression(
        "w_c_over_w_p",
        fit_power_law(scales, series["w_c_over_w_p"], -8 * epsilon, campaign.tol_lemma_slope, nominal=-8 * epsilon),
    )
    # Gated for non-growth; the bound's own exponent is kept as the nominal slope.
    for name in TREND_COMPONENTS:
        result.add_regression(
            name, fit_power_law(scales, series[name], 0.0, 0.0, mode="bound", nominal=predicted.get(name))
        )
    return result


# Constraints ----------------------------------------------------------------------


def run_constraints_campaign(campaign: Campaign, settings: LabSettings | None = None) -> CampaignResult:
    result = CampaignResult(kind="constraints", seed=campaign.seed)
    params, space = campaign.params(), campaign.space()
    scales = derive_scales(params, space, q=campaign.q, desk=campaign.desk(campaign.lambdas[0]))
    _record_scales(result, scales, "scales")
    report = check_constraints(scales, params, space)
    rows = []
    for row in report.rows:
        result.add_check("constraints", row.name, 0.0 if row.passed else 1.0, 0.0, gated=row.enforced)
        rows.append([row.name, row.relation, repr(row.lhs), repr(row.rhs), str(row.passed).lower(), str(row.enforced).lower()])
    result.tables["constraints"] = CsvTable(
        header=["name", "relation", "lhs", "rhs", "passed", "enforced"], rows=rows
    )
    for name in report.desk_failures():
        result.notes.append(f"{name} fails but is not enforced in desk mode")
    return result


RUNNERS: Dict[str, Callable[[Campaign, LabSettings | None], CampaignResult]] = {
    "identities": run_identity_suite,
    "sweep": run_sweep_campaign,
    "lemma64": run_lemma64_campaign,
    "lemma65": run_lemma65_campaign,
    "step": run_step_campaign,
    "constraints": run_constraints_campaign,
}


# Orchestration --------------------------------------------------------------------


def _failure(kind: str, exc: Exception, recommendation: str) -> Dict[str, str]:
    return {"kind": kind, "cause": str(exc), "recommendation": recommendation}


def run_campaign(
    campaign: Campaign, out_dir: Path | None = None, settings: LabSettings | None = None
) -> Tuple[int, CampaignResult]:
    """Run, write artifacts, return (exit code, result): 0 pass, 1 a check failed, 2 aborted."""
    settings = settings or LabSettings()
    out_dir = out_dir or campaign.output
    runner = RUNNERS[campaign.kind]
    try:
        with fft.set_workers(settings.threads):
            result = runner(campaign, settings)
    except ResolutionError as exc:
        result = CampaignResult(kind=campaign.kind, seed=campaign.seed)
        recommendation = exc.recommendation or f"Increase grid_n to at least {exc.required_n}."
        result.failures.append(_failure("resolution", exc, recommendation))
    except ConstructionError as exc:
        result = CampaignResult(kind=campaign.kind, seed=campaign.seed)
        result.failures.append(
            _failure("construction", exc, "Lower the stress level (delta) or raise lambda so R/ρ stays in the ball.")
        )
    except (ValueError, TypeError) as exc:
        result = CampaignResult(kind=campaign.kind, seed=campaign.seed)
        result.failures.append(_failure("config", exc, "Check the campaign parameters against the admissible ranges."))

    result.manifest.update(campaign.manifest())
    result.manifest["seed"] = str(campaign.seed)
    _record_tolerances(result, campaign)
    for index, failure in enumerate(result.failures):
        for key, value in failure.items():
            result.manifest[f"failure.{index}.{key}"] = value
    result.manifest["passed"] = str(result.passed).lower()
    write_artifacts(result, out_dir)
    if result.failures:
        return 2, result
    return (0 if result.passed else 1), result


# Writers ---------------------------------------------------------------------------


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_dat(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    lines = ["# " + " ".join(header)] + [" ".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(path: Path, manifest: Mapping[str, str]) -> None:
    lines = [f"{key}={manifest[key]}" for key in sorted(manifest)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_artifacts(result: CampaignResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    checks = [
        [row.group, row.name, repr(row.value), repr(row.budget), str(row.passed).lower(), str(row.gated).lower()]
        for row in result.checks
    ]
    if checks:
        write_csv(out_dir / f"{result.kind}_checks.csv", ["group", "name", "value", "budget", "passed", "gated"], checks)
    for name, table in result.tables.items():
        write_csv(out_dir / f"{name}.csv", table.header, table.rows)
        if name.startswith("sweep_"):
            write_dat(out_dir / f"{name}.dat", table.header, table.rows)
    for name, (field, time) in result.snapshots.items():
        ts.write_snapshot(out_dir / name, field, time)
    write_manifest(out_dir / "manifest.txt", result.manifest)
    (out_dir / "summary.json").write_text(json.dumps(result.summary(), indent=2), encoding="utf-8")
