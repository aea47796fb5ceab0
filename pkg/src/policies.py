"""Guardrail policies for the estimate lab."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class ToleranceLadder:
    """Relative residual budgets, from exact algebra down to resolution-limited checks."""

    exact: float = 1e-12
    operator: float = 1e-10
    identity: float = 1e-9
    finite_difference: float = 1e-8
    residual: float = 1e-6
    stencil: float = 1e-4
    # Sampled jets: trapezoid quadrature, then spectral derivatives of bump profiles.
    quadrature: float = 2e-2
    spectral: float = 5e-2
    # ‖R_osc − (osc1 + osc2 + osc3)‖ / ‖R_osc‖ on a jet-resolving grid.
    decomposition: float = 0.25

    def assert_within(self, name: str, value: float, budget: float) -> None:
        if not value <= budget:
            raise ValueError(f"{name} residual {value:.3e} exceeds the budget {budget:.1e}.")

    def failing(self, residuals: Mapping[str, float], budget: float) -> list[str]:
        return sorted(name for name, value in residuals.items() if not value <= budget)


@dataclass(frozen=True)
class SlopePolicy:
    """Tolerances for log-log slope fits."""

    spatial: float = 0.1
    temporal: float = 0.05
    lemma: float = 0.15
    min_points: int = 4
    ratio_tolerance: float = 1e-9

    def assert_enough_points(self, points: Sequence[float], what: str = "sweep") -> None:
        if len(points) < self.min_points:
            raise ValueError(
                f"A {what} needs at least {self.min_points} points, got {len(points)}."
            )

    def assert_geometric(self, points: Sequence[float], what: str = "sweep") -> None:
        ordered = sorted(points)
        if len(set(ordered)) != len(ordered) or ordered[0] <= 0:
            raise ValueError(f"The {what} points must be distinct and positive: {list(points)}.")
        ratios = [b / a for a, b in zip(ordered, ordered[1:])]
        if any(not math.isclose(r, ratios[0], rel_tol=self.ratio_tolerance) for r in ratios):
            raise ValueError(f"The {what} points must share a constant ratio: {list(points)}.")

    def for_kind(self, kind: str) -> float:
        return self.temporal if kind in ("g", "h") else self.spatial


def _power_of_two(minimum: float, floor: int = 8) -> int:
    n = floor
    while n < minimum:
        n *= 2
    return n


@dataclass(frozen=True)
class ResolutionPolicy:
    """Grid points per axis required per unit of λ, and per jet half-width."""

    factor: int = 4
    jet_points: int = 4
    spectral_points: int = 32

    def required(self, lam: float) -> int:
        return _power_of_two(self.factor * lam)

    def assert_resolved(self, n: int, lam: float) -> None:
        if n < self.factor * lam:
            raise ValueError(
                f"Grid {n} under-resolves λ = {lam:g}; use at least {self.required(lam)} points."
            )

    @staticmethod
    def points_per_width(n: int, width: float) -> float:
        return n * width

    def required_for_width(self, width: float, points: int | None = None) -> int:
        """Smallest power-of-two grid with ``points`` samples across ``width``."""
        return _power_of_two((points or self.jet_points) / width)
