"""Rational wavevectors and the positive dyad decomposition of matrices near the identity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import optimize

Vec = Tuple[Fraction, Fraction]
Matrix = Tuple[Tuple[Fraction, Fraction], Tuple[Fraction, Fraction]]

# k and its partner k1 = (k₂, −k₁), so that k = k1^⊥ with ⊥(a, b) = (−b, a).
DIRECTIONS: Tuple[Vec, ...] = (
    (Fraction(0), Fraction(1)),
    (Fraction(1), Fraction(0)),
    (Fraction(3, 5), Fraction(4, 5)),
    (Fraction(3, 5), Fraction(-4, 5)),
)
BASE_COEFFICIENTS: Tuple[Fraction, ...] = (
    Fraction(17, 25),
    Fraction(41, 50),
    Fraction(1, 4),
    Fraction(1, 4),
)
# γ² = base + COORDINATE_MAP · (R11 − 1, R12, R22 − 1)
COORDINATE_MAP: Tuple[Tuple[Fraction, Fraction, Fraction], ...] = (
    (Fraction(1), Fraction(0), Fraction(0)),
    (Fraction(0), Fraction(0), Fraction(1)),
    (Fraction(0), Fraction(-25, 24), Fraction(0)),
    (Fraction(0), Fraction(25, 24), Fraction(0)),
)
FLOOR_FRACTION = 0.02
_C4_FACTORS = (1.0, 0.5, -0.25, 0.375, -0.9375)  # d^j/dy^j sqrt(y) = c_j y^(1/2 - j)


def perp(v: Vec) -> Vec:
    return (-v[1], v[0])


def partner(k: Vec) -> Vec:
    """k1 with k1^⊥ = k."""
    return (k[1], -k[0])


def dyad(v: Vec) -> Matrix:
    return ((v[0] * v[0], v[0] * v[1]), (v[1] * v[0], v[1] * v[1]))


def _lcm_denominator(vectors: Sequence[Vec]) -> int:
    result = 1
    for vector in vectors:
        for component in vector:
            result = math.lcm(result, component.denominator)
    return result


def _rational_rank(rows: List[List[Fraction]]) -> int:
    rows = [list(row) for row in rows]
    rank, columns = 0, len(rows[0]) if rows else 0
    for column in range(columns):
        pivot = next((i for i in range(rank, len(rows)) if rows[i][column] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][column] != 0:
                factor = rows[i][column] / rows[rank][column]
                rows[i] = [a - factor * b for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


@dataclass(frozen=True)
class GammaDecomposition:
    """Affine coefficients γ_(k)² = base + linear_map·(R11 − 1, R12, R22 − 1)."""

    base: Tuple[Fraction, ...] = BASE_COEFFICIENTS
    linear_map: Tuple[Tuple[Fraction, Fraction, Fraction], ...] = COORDINATE_MAP

    def gradient_matrices(self) -> np.ndarray:
        """G_k with γ_k²(Id + E) = base_k + ⟨G_k, E⟩_F for symmetric E; shape (4, 2, 2)."""
        out = np.zeros((len(self.base), 2, 2))
        for index, (c11, c12, c22) in enumerate(self.linear_map):
            out[index] = [[float(c11), float(c12) / 2], [float(c12) / 2, float(c22)]]
        return out

    def floor(self) -> float:
        return FLOOR_FRACTION * float(min(self.base))


@dataclass(frozen=True)
class WavevectorSet:
    """Directions k with partners k1, the integrality constant and the certified radius."""

    directions: Tuple[Tuple[Vec, Vec], ...]
    n_lambda: int
    decomposition: GammaDecomposition = field(default_factory=GammaDecomposition)
    c_r: float = 0.0
    m_star: float = math.inf
    worst_direction: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __len__(self) -> int:
        return len(self.directions)

    @property
    def certified(self) -> bool:
        return self.c_r > 0

    def k(self, index: int) -> Tuple[float, float]:
        return tuple(float(c) for c in self.directions[index][0])

    def k1(self, index: int) -> Tuple[float, float]:
        return tuple(float(c) for c in self.directions[index][1])

    def dyad_rank(self) -> int:
        rows = [[d[0][0], d[0][1], d[1][1]] for d in (dyad(k1) for _, k1 in self.directions)]
        return _rational_rank(rows)

    def table_rows(self) -> List[List[str]]:
        rows = []
        for (k, k1), base in zip(self.directions, self.decomposition.base):
            rows.append([str(k[0]), str(k[1]), str(k1[0]), str(k1[1]), str(base)])
        return rows


# API ----------------------------------------------------------------------------


def build_wavevector_set() -> WavevectorSet:
    directions = tuple((k, partner(k)) for k in DIRECTIONS)
    for k, k1 in directions:
        if k[0] ** 2 + k[1] ** 2 != 1:
            raise ValueError(f"direction {k} is not a unit vector")
        if perp(k1) != k:
            raise ValueError(f"partner {k1} is not orthogonal to {k}")
    n_lambda = _lcm_denominator([v for pair in directions for v in pair])
    return WavevectorSet(directions=directions, n_lambda=n_lambda)


def decompose_exact(matrix: Matrix, decomposition: GammaDecomposition | None = None) -> Tuple[Fraction, ...]:
    """γ_(k)² of a rational symmetric matrix, in exact arithmetic."""
    decomposition = decomposition or GammaDecomposition()
    if matrix[0][1] != matrix[1][0]:
        raise ValueError("matrix must be symmetric")
    coords = (matrix[0][0] - 1, matrix[0][1], matrix[1][1] - 1)
    return tuple(
        base + sum(c * x for c, x in zip(row, coords))
        for base, row in zip(decomposition.base, decomposition.linear_map)
    )


def reconstruct_exact(wavevectors: WavevectorSet, coefficients: Sequence[Fraction]) -> Matrix:
    total = [[Fraction(0), Fraction(0)], [Fraction(0), Fraction(0)]]
    for (_, k1), coefficient in zip(wavevectors.directions, coefficients):
        d = dyad(k1)
        for i in range(2):
            for j in range(2):
                total[i][j] += coefficient * d[i][j]
    return ((total[0][0], total[0][1]), (total[1][0], total[1][1]))


def _affine(decomposition: GammaDecomposition, r11, r12, r22) -> np.ndarray:
    r11, r12, r22 = (np.asarray(c, dtype=np.float64) for c in (r11, r12, r22))
    coords = (r11 - 1.0, r12, r22 - 1.0)
    return np.stack(
        [
            float(base) + sum(float(c) * x for c, x in zip(row, coords))
            for base, row in zip(decomposition.base, decomposition.linear_map)
        ]
    )


def frobenius_distance(r11, r12, r22) -> np.ndarray:
    """‖R − Id‖_F for symmetric R given by components."""
    r11, r12, r22 = (np.asarray(c, dtype=np.float64) for c in (r11, r12, r22))
    return np.sqrt((r11 - 1.0) ** 2 + 2 * r12**2 + (r22 - 1.0) ** 2)


def decompose(wavevectors: WavevectorSet, r11, r12, r22, check_ball: bool = True) -> np.ndarray:
    """γ_(k)² at every point, shape (4, ...); components may be arrays."""
    if check_ball:
        if not wavevectors.certified:
            raise ValueError("wavevector set has no certified radius; call certify_ball first")
        distance = frobenius_distance(r11, r12, r22)
        worst = float(np.max(distance)) if distance.size else 0.0
        if worst > wavevectors.c_r:
            raise ValueError(
                f"matrix leaves the certified ball: ‖R − Id‖_F = {worst:.6g} > C_R = "
                f"{wavevectors.c_r:.6g} (margin {wavevectors.c_r - worst:.3e})"
            )
    return _affine(wavevectors.decomposition, r11, r12, r22)


def gamma(wavevectors: WavevectorSet, r11, r12, r22, check_ball: bool = True) -> np.ndarray:
    squares = decompose(wavevectors, r11, r12, r22, check_ball)
    if np.any(squares <= 0):
        raise ValueError(f"non-positive coefficient {float(np.min(squares)):.3e}")
    return np.sqrt(squares)


def gamma_gradient(wavevectors: WavevectorSet, r11, r12, r22) -> np.ndarray:
    """∂γ_(k)/∂(R11, R12, R22), shape (4, 3, ...)."""
    values = gamma(wavevectors, r11, r12, r22)
    rows = np.array([[float(c) for c in row] for row in wavevectors.decomposition.linear_map])
    extra = (None,) * (values.ndim - 1)
    return rows[(slice(None), slice(None)) + extra] / (2.0 * values[:, None])


def reconstruct(wavevectors: WavevectorSet, squares: np.ndarray) -> np.ndarray:
    """Σ γ_(k)² k1⊗k1 as components (R11, R12, R22)."""
    out = np.zeros((3,) + squares.shape[1:])
    for index, (_, k1) in enumerate(wavevectors.directions):
        a, b = float(k1[0]), float(k1[1])
        out[0] += squares[index] * a * a
        out[1] += squares[index] * a * b
        out[2] += squares[index] * b * b
    return out


# Certification --------------------------------------------------------------------


def _unit_direction(e: np.ndarray) -> np.ndarray:
    """Orthonormal Frobenius coordinates (e1, e2, e3) to a symmetric matrix."""
    return np.array([[e[0], e[1] / math.sqrt(2)], [e[1] / math.sqrt(2), e[2]]])


def _fibonacci_sphere(count: int) -> np.ndarray:
    index = np.arange(count) + 0.5
    polar = np.arccos(1 - 2 * index / count)
    azimuth = math.pi * (1 + 5**0.5) * index
    return np.stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1
    )


def _exit_radius(decomposition: GammaDecomposition, direction: np.ndarray, floor: float) -> float:
    matrix = _unit_direction(direction)

    def margin(radius: float) -> float:
        squares = _affine(
            decomposition, 1 + radius * matrix[0, 0], radius * matrix[0, 1], 1 + radius * matrix[1, 1]
        )
        return float(np.min(squares)) - floor

    radius = 0.05
    while margin(radius) > 0:
        radius *= 2
        if radius > 64:
            return math.inf
    if radius == 0.05:
        return float(optimize.brentq(margin, 0.0, radius, xtol=1e-14))
    return float(optimize.brentq(margin, radius / 2, radius, xtol=1e-14))


def certify_ball(wavevectors: WavevectorSet, samples: int = 2000) -> WavevectorSet:
    """Largest Frobenius radius around Id keeping every γ_(k)² above the floor."""
    decomposition = wavevectors.decomposition
    floor = decomposition.floor()
    candidates = [_fibonacci_sphere(samples)]
    for g in decomposition.gradient_matrices():
        scale = np.linalg.norm(g)
        if scale > 0:
            candidates.append(-np.array([[g[0, 0], math.sqrt(2) * g[0, 1], g[1, 1]]]) / scale)
    directions = np.concatenate(candidates)
    radii = np.array([_exit_radius(decomposition, d, floor) for d in directions])
    worst = int(np.argmin(radii))
    c_r = float(radii[worst])
    certified = replace(
        wavevectors, c_r=c_r, worst_direction=tuple(float(x) for x in directions[worst])
    )
    return replace(certified, m_star=estimate_m_star(certified))


def boundary_matrix(wavevectors: WavevectorSet) -> Tuple[float, float, float]:
    """Id + C_R·(worst direction) as (R11, R12, R22)."""
    matrix = _unit_direction(np.array(wavevectors.worst_direction))
    c = wavevectors.c_r
    return 1 + c * matrix[0, 0], c * matrix[0, 1], 1 + c * matrix[1, 1]


def sample_ball(
    wavevectors: WavevectorSet, rng: np.random.Generator, count: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform random symmetric matrices inside the certified ball."""
    direction = rng.standard_normal((count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = wavevectors.c_r * rng.random(count) ** (1 / 3)
    e = direction * radius[:, None]
    return 1 + e[:, 0], e[:, 1] / math.sqrt(2), 1 + e[:, 2]


def estimate_m_star(wavevectors: WavevectorSet, samples: int = 4096, seed: int = 0) -> float:
    """Sampled Σ_k ‖γ_(k)‖_{C⁴} over the ball, coordinate derivatives of √(affine)."""
    rng = np.random.default_rng(seed)
    r11, r12, r22 = sample_ball(wavevectors, rng, samples)
    b11, b12, b22 = boundary_matrix(wavevectors)
    r11, r12, r22 = (np.append(c, [b, v]) for c, b, v in zip((r11, r12, r22), (b11, b12, b22), (1.0, 0.0, 1.0)))
    squares = _affine(wavevectors.decomposition, r11, r12, r22)
    total = 0.0
    for y, row in zip(squares, wavevectors.decomposition.linear_map):
        slope = max(abs(float(c)) for c in row)
        per_order = [
            float(np.max(np.abs(factor * y ** (0.5 - j)))) * slope**j
            for j, factor in enumerate(_C4_FACTORS)
        ]
        total += max(per_order)
    return total


@lru_cache(maxsize=1)
def default_wavevectors() -> WavevectorSet:
    return certify_ball(build_wavevector_set())


def coefficient_table(wavevectors: WavevectorSet) -> Dict[str, float]:
    return {
        "n_lambda": float(wavevectors.n_lambda),
        "c_r": wavevectors.c_r,
        "m_star": wavevectors.m_star,
        "floor": wavevectors.decomposition.floor(),
    }
