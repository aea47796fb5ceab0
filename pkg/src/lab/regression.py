"""Log-log power-law fits of measured norms against a scale parameter."""
from __future__ import annotations

from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

MIN_POINTS = 4


class RegressionResult(BaseModel):
    """Fitted exponent of one sweep and its verdict."""

    points: List[Tuple[float, float]] = Field(description="(scale, measured value) pairs.")
    fitted: float = Field(description="Least-squares slope of log value against log scale.")
    predicted: float = Field(description="Slope the fit is judged against.")
    nominal: float | None = Field(default=None, description="Exponent before periodicity repairs.")
    realized: float | None = Field(
        default=None, description="Slope of the scaling law at the repaired scales; reported only."
    )
    residual: float
    tolerance: float
    passed: bool
    mode: Literal["match", "bound"] = "match"
    degenerate: bool = Field(default=False, description="Every measured value sat at the floor.")

    def csv_rows(self) -> List[List[str]]:
        return [
            [repr(scale), repr(value), repr(self.predicted), repr(self.fitted)]
            for scale, value in self.points
        ]


def fit_slope(scales: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log(values) on log(scales) by ordinary least squares."""
    scales = np.asarray(scales, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if scales.size < MIN_POINTS:
        raise ValueError(f"a power-law fit needs at least {MIN_POINTS} points, got {scales.size}")
    if np.any(scales <= 0) or np.any(values <= 0):
        raise ValueError("power-law fits need positive scales and values")
    slope, _ = np.polyfit(np.log(scales), np.log(values), 1)
    return float(slope)


def fit_power_law(
    scales: Sequence[float],
    values: Sequence[float],
    predicted: float,
    tolerance: float,
    mode: Literal["match", "bound"] = "match",
    nominal: float | None = None,
    floor: float = 1e-300,
) -> RegressionResult:
    """Fit and judge a sweep.

    ``match`` passes when |fitted − predicted| <= tolerance; ``bound`` passes when
    fitted <= predicted + tolerance. Values at or below ``floor`` are clamped to it;
    a sweep entirely at the floor is degenerate and passes only in ``bound`` mode.
    """
    values = [max(float(v), floor) for v in values]
    points = [(float(s), v) for s, v in zip(scales, values)]
    if len(points) < MIN_POINTS:
        raise ValueError(f"a power-law fit needs at least {MIN_POINTS} points, got {len(points)}")
    if all(v <= floor for v in values):
        return RegressionResult(
            points=points,
            fitted=0.0,
            predicted=predicted,
            nominal=nominal,
            residual=0.0,
            tolerance=tolerance,
            passed=mode == "bound",
            mode=mode,
            degenerate=True,
        )
    fitted = fit_slope(scales, values)
    residual = fitted - predicted
    passed = abs(residual) <= tolerance if mode == "match" else residual <= tolerance
    return RegressionResult(
        points=points,
        fitted=fitted,
        predicted=predicted,
        nominal=nominal,
        residual=residual,
        tolerance=tolerance,
        passed=passed,
        mode=mode,
    )
