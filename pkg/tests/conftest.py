"""Shared desk-scale fixtures."""
from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from lab.building_blocks import repair_periodicity
from lab.geometry import default_wavevectors
from lab.params import DeskMode, FunctionSpaceSpec, IterationParams, derive_scales
from lab.torus_spectral import Grid

DESK_LAMBDA = 8
DESK_GRID = 32
DESK_EPSILON = Fraction(1, 40)
# A step that fits in memory with 4 points per jet half-width
STEP_LAMBDA = 4
STEP_GRID = 128
STEP_TIMES = 32


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def space() -> FunctionSpaceSpec:
    return FunctionSpaceSpec(alpha=1, gamma="inf", p=2)


@pytest.fixture(scope="session")
def params() -> IterationParams:
    return IterationParams(epsilon=DESK_EPSILON)


@pytest.fixture(scope="session")
def wavevectors():
    return default_wavevectors()


@pytest.fixture(scope="session")
def desk_scales(params, space, wavevectors):
    scales = derive_scales(params, space, desk=DeskMode(lam=DESK_LAMBDA, ell=1 / 8))
    repaired, _ = repair_periodicity(scales, wavevectors.n_lambda)
    return repaired


@pytest.fixture(scope="session")
def desk_grid() -> Grid:
    return Grid(n=DESK_GRID)


@pytest.fixture(scope="session")
def step_scales(params, space, wavevectors):
    scales = derive_scales(params, space, desk=DeskMode(lam=STEP_LAMBDA, ell=1 / 8))
    repaired, _ = repair_periodicity(scales, wavevectors.n_lambda)
    return repaired


@pytest.fixture(scope="session")
def step_grid() -> Grid:
    return Grid(n=STEP_GRID)
