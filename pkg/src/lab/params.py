"""Parameter algebra: function-space exponents, iteration parameters and level scales."""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Any, Dict, List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

INF = "inf"
Exponent = Union[Fraction, Literal["inf"]]


def parse_exponent(value: Any) -> Fraction | str:
    """Parse "num/den", ints, floats or "inf" into an exact exponent."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"Cannot parse exponent from {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return INF
        return Fraction(repr(value))
    if isinstance(value, str):
        text = value.strip().lower()
        if text in {"inf", "infinity", "∞"}:
            return INF
        return Fraction(text)
    raise ValueError(f"Cannot parse exponent from {value!r}")


def reciprocal(value: Exponent) -> Fraction:
    """1/x with 1/∞ = 0."""
    if value == INF:
        return Fraction(0)
    return 1 / value


def as_float(value: Exponent) -> float:
    return math.inf if value == INF else float(value)


def _power(log_base: float, exponent: float) -> float:
    """exp(exponent * log_base) with overflow mapped to inf."""
    try:
        return math.exp(exponent * log_base)
    except OverflowError:
        return math.inf


class FunctionSpaceSpec(BaseModel):
    """Dissipation exponent and the mixed Lebesgue exponents (γ, p)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: Fraction = Field(description="Dissipation exponent, 1 <= alpha < 3/2.")
    gamma: Exponent = Field(description="Temporal integrability exponent in [1, inf].")
    p: Exponent = Field(description="Spatial integrability exponent in [1, inf].")

    @field_validator("alpha", "gamma", "p", mode="before")
    @classmethod
    def _parse(cls, value: Any) -> Fraction | str:
        return parse_exponent(value)

    @model_validator(mode="after")
    def _check_ranges(self) -> "FunctionSpaceSpec":
        if self.alpha == INF or not (1 <= self.alpha < Fraction(3, 2)):
            raise ValueError(f"alpha must lie in [1, 3/2), got {self.alpha}")
        for name in ("gamma", "p"):
            value = getattr(self, name)
            if value != INF and value < 1:
                raise ValueError(f"{name} must lie in [1, inf], got {value}")
        return self

    def supercritical_gap(self) -> Fraction:
        """(4α−4)/γ + 2/p − (2α−1); positive in the supercritical regime."""
        alpha = self.alpha
        return (4 * alpha - 4) * reciprocal(self.gamma) + 2 * reciprocal(self.p) - (2 * alpha - 1)

    def is_supercritical(self) -> bool:
        return self.supercritical_gap() > 0

    def epsilon_ceiling(self) -> Fraction:
        """Largest admissible slack exponent: (1/20)·min{3−2α, supercritical gap}."""
        return Fraction(1, 20) * min(3 - 2 * self.alpha, self.supercritical_gap())


class IterationParams(BaseModel):
    """Base frequency a, super-exponential rate b, regularity β and slack ε."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: int = Field(default=2, ge=2, description="Base frequency.")
    b: int = Field(default=2, ge=2, description="Super-exponential rate (even).")
    beta: float = Field(default=1e-6, gt=0, description="Regularity exponent.")
    epsilon: Fraction = Field(description="Slack exponent (positive rational).")

    @field_validator("epsilon", mode="before")
    @classmethod
    def _parse_epsilon(cls, value: Any) -> Fraction:
        parsed = parse_exponent(value)
        if parsed == INF or parsed <= 0:
            raise ValueError(f"epsilon must be a positive rational, got {value!r}")
        return parsed

    @field_validator("b")
    @classmethod
    def _even_b(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"b must be even, got {value}")
        return value


class DeskMode(BaseModel):
    """Small-λ regime: λ = λ_{q+1} set directly, ℓ and δ given explicitly."""

    model_config = ConfigDict(frozen=True)

    lam: int = Field(ge=2, description="Frequency λ_{q+1} used at the desk.")
    ell: float = Field(default=1 / 16, gt=0, lt=0.5, description="Mollification scale.")
    delta: float | None = Field(
        default=None, gt=0, description="Override for δ_{q+1} (defaults to λ^(−2β))."
    )


class ScaleSet(BaseModel):
    """All scales of one iteration level, with exact exponents in log_λ units."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: int
    epsilon: Fraction
    desk_mode: bool
    log_lambda_q: float = Field(description="ln λ_q")
    log_lambda: float = Field(description="ln λ_{q+1}")
    lambda_q: float
    lambda_q1: float
    lam: float = Field(description="λ = λ_{q+1}")
    delta_q1: float
    delta_q2: float
    ell: float
    r_perp: float
    r_par: float
    mu: float
    tau: float
    sigma: float
    varrho: Fraction
    exponents: Dict[str, Fraction] = Field(default_factory=dict)
    repairs: Dict[str, Tuple[float, float]] = Field(
        default_factory=dict, description="name -> (derived value, realized value)."
    )

    def power(self, exponent: Fraction | float) -> float:
        """λ^exponent."""
        return _power(self.log_lambda, float(exponent))

    def manifest(self) -> Dict[str, str]:
        rows = {
            "q": str(self.q),
            "epsilon": str(self.epsilon),
            "desk_mode": str(self.desk_mode).lower(),
            "lambda_q": repr(self.lambda_q),
            "lambda": repr(self.lam),
            "delta_q1": repr(self.delta_q1),
            "delta_q2": repr(self.delta_q2),
            "ell": repr(self.ell),
            "r_perp": repr(self.r_perp),
            "r_par": repr(self.r_par),
            "mu": repr(self.mu),
            "tau": repr(self.tau),
            "sigma": repr(self.sigma),
            "varrho": str(self.varrho),
        }
        for name, value in self.exponents.items():
            rows[f"exponent.{name}"] = str(value)
        for name, (derived, realized) in self.repairs.items():
            rows[f"repair.{name}"] = f"{derived!r}->{realized!r}"
        return rows


def scale_exponents(space: FunctionSpaceSpec, epsilon: Fraction) -> Dict[str, Fraction]:
    """Exponents of r⊥, r∥, μ, τ, σ in log_λ units."""
    alpha = space.alpha
    return {
        "r_perp": -1 + 2 * epsilon,
        "r_par": -1 + 10 * epsilon,
        "mu": 2 * alpha - 1 + 4 * epsilon,
        "tau": 4 * alpha - 4 + 16 * epsilon,
        "sigma": 2 * epsilon,
    }


def varrho_for(epsilon: Fraction) -> Fraction:
    """Calderón–Zygmund exponent (2−12ε)/(2−13ε)."""
    return (2 - 12 * epsilon) / (2 - 13 * epsilon)


def exponent_identities(epsilon: Fraction) -> Dict[str, Tuple[Fraction, Fraction]]:
    """Exact (lhs, rhs) pairs of the ϱ exponent identities."""
    varrho = varrho_for(epsilon)
    concentration = -2 + 12 * epsilon  # log_λ of r⊥·r∥
    return {
        "varrho_slack": ((2 - 12 * epsilon) * (1 - 1 / varrho), epsilon),
        "concentration_l1": (concentration * (1 / varrho - 1), epsilon),
        "concentration_l2": (concentration * (1 / varrho - Fraction(1, 2)), -1 + 7 * epsilon),
    }


def derive_scales(
    params: IterationParams,
    space: FunctionSpaceSpec,
    q: int = 0,
    desk: DeskMode | None = None,
) -> ScaleSet:
    """Derive every scale of level q; desk mode replaces λ_{q+1}, ℓ and optionally δ."""
    if q < 0:
        raise ValueError(f"level q must be non-negative, got {q}")
    epsilon = params.epsilon
    if desk is None:
        if not space.is_supercritical():
            raise ValueError(
                f"(gamma, p) = ({space.gamma}, {space.p}) is not supercritical for "
                f"alpha = {space.alpha}; use desk mode to proceed"
            )
        ceiling = space.epsilon_ceiling()
        if epsilon > ceiling:
            raise ValueError(f"epsilon = {epsilon} exceeds the admissible ceiling {ceiling}")
        if not (params.b * epsilon).denominator == 1:
            raise ValueError(f"b*epsilon = {params.b * epsilon} must be an integer")
    if 2 - 13 * epsilon <= 0:
        raise ValueError(f"epsilon = {epsilon} leaves no Calderón–Zygmund exponent")

    if desk is None:
        log_lambda_q = params.b**q * math.log(params.a)
        log_lambda = params.b ** (q + 1) * math.log(params.a)
        log_lambda_q2 = params.b ** (q + 2) * math.log(params.a)
        ell = _power(log_lambda_q, -20.0)
        delta_q1 = _power(log_lambda, -2 * params.beta)
    else:
        log_lambda = math.log(desk.lam)
        log_lambda_q = log_lambda / params.b
        log_lambda_q2 = log_lambda * params.b
        ell = desk.ell
        delta_q1 = desk.delta if desk.delta is not None else _power(log_lambda, -2 * params.beta)
    delta_q2 = _power(log_lambda_q2, -2 * params.beta)

    exponents = scale_exponents(space, epsilon)
    values = {name: _power(log_lambda, float(exp)) for name, exp in exponents.items()}
    return ScaleSet(
        q=q,
        epsilon=epsilon,
        desk_mode=desk is not None,
        log_lambda_q=log_lambda_q,
        log_lambda=log_lambda,
        lambda_q=_power(log_lambda_q, 1.0),
        lambda_q1=_power(log_lambda, 1.0),
        lam=_power(log_lambda, 1.0),
        delta_q1=delta_q1,
        delta_q2=delta_q2,
        ell=ell,
        r_perp=values["r_perp"],
        r_par=values["r_par"],
        mu=values["mu"],
        tau=values["tau"],
        sigma=values["sigma"],
        varrho=varrho_for(epsilon),
        exponents=exponents,
    )


# Constraint report ------------------------------------------------------------


class ConstraintRow(BaseModel):
    """One inequality (or exact identity) with both sides evaluated."""

    name: str
    relation: str
    lhs: float
    rhs: float
    passed: bool
    enforced: bool = True


class ConstraintReport(BaseModel):
    rows: List[ConstraintRow] = Field(default_factory=list)
    desk_mode: bool = False

    def failures(self, enforced_only: bool = False) -> List[ConstraintRow]:
        return [
            row for row in self.rows if not row.passed and (row.enforced or not enforced_only)
        ]

    def desk_failures(self) -> List[str]:
        """Constraints failing but not enforced because of desk mode."""
        return [row.name for row in self.rows if not row.passed and not row.enforced]

    @property
    def passed(self) -> bool:
        return not self.failures(enforced_only=True)

    def csv_rows(self) -> List[List[str]]:
        return [[row.name, repr(row.lhs), repr(row.rhs), str(row.passed).lower()] for row in self.rows]


def _row(
    name: str, lhs: float | Fraction, relation: str, rhs: float | Fraction, enforced: bool = True
) -> ConstraintRow:
    checks = {
        "<": lambda x, y: x < y,
        "<=": lambda x, y: x <= y,
        ">=": lambda x, y: x >= y,
        ">": lambda x, y: x > y,
        "==": lambda x, y: x == y,
    }
    passed = bool(checks[relation](lhs, rhs))
    return ConstraintRow(
        name=name, relation=relation, lhs=float(lhs), rhs=float(rhs), passed=passed, enforced=enforced
    )


def perturbation_exponent(space: FunctionSpaceSpec, epsilon: Fraction) -> Fraction:
    """2α−1−2/p−(4α−4)/γ + ε(2+12/p−16/γ), the λ-exponent of the mixed-norm perturbation bound."""
    alpha = space.alpha
    inv_p, inv_gamma = reciprocal(space.p), reciprocal(space.gamma)
    base = 2 * alpha - 1 - 2 * inv_p - (4 * alpha - 4) * inv_gamma
    return base + epsilon * (2 + 12 * inv_p - 16 * inv_gamma)


def check_constraints(
    scales: ScaleSet, params: IterationParams, space: FunctionSpaceSpec
) -> ConstraintReport:
    """Evaluate every inequality of the scheme; a, b, β ones are not enforced at the desk."""
    eps = params.epsilon
    strict = not scales.desk_mode
    alpha = space.alpha
    gap = space.supercritical_gap()
    base = gap * -1
    rows = [
        _row("alpha_range_low", alpha, ">=", 1),
        _row("alpha_range_high", alpha, "<", Fraction(3, 2)),
        _row("supercritical", gap, ">", 0, enforced=strict),
        _row("b_lower", params.b, ">", Fraction(1000) / eps, enforced=strict),
        _row("beta_upper", params.beta, "<", 1 / (100 * params.b**2), enforced=strict),
        _row("epsilon_ceiling", eps, "<=", space.epsilon_ceiling(), enforced=strict),
        _row(
            "b_epsilon_integer",
            params.b * eps,
            "==",
            Fraction(round(params.b * eps)),
            enforced=strict,
        ),
        _row(
            "perturbation_exponent",
            perturbation_exponent(space, eps),
            "<",
            -6 * eps,
            enforced=strict,
        ),
        _row("perturbation_exponent_bound", base + 14 * eps, "<", -6 * eps, enforced=strict),
    ]
    # ℓ λ_q^14 <= δ_{q+1} and 2ℓ << δ_{q+2}^{1/2}, compared in log space.
    log_ell = math.log(scales.ell) if scales.ell > 0 else -math.inf
    log_delta_q1 = math.log(scales.delta_q1) if scales.delta_q1 > 0 else -math.inf
    log_delta_q2 = math.log(scales.delta_q2) if scales.delta_q2 > 0 else -math.inf
    rows.append(
        _row(
            "mollification_scale",
            log_ell + 14 * scales.log_lambda_q,
            "<=",
            log_delta_q1,
            enforced=strict,
        )
    )
    rows.append(
        _row("support_margin", math.log(2) + log_ell, "<", 0.5 * log_delta_q2, enforced=strict)
    )
    rows.append(_row("varrho_low", scales.varrho, ">", 1))
    rows.append(_row("varrho_high", scales.varrho, "<", 2))
    for name, (lhs, rhs) in exponent_identities(eps).items():
        rows.append(_row(name, lhs, "==", rhs))
    return ConstraintReport(rows=rows, desk_mode=scales.desk_mode)
