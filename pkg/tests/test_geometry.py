from fractions import Fraction

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from lab.geometry import (
    BASE_COEFFICIENTS,
    boundary_matrix,
    build_wavevector_set,
    coefficient_table,
    decompose,
    decompose_exact,
    gamma,
    gamma_gradient,
    reconstruct,
    reconstruct_exact,
    sample_ball,
)


def test_wavevector_set_is_rational_and_integral():
    ws = build_wavevector_set()
    assert len(ws) == 4
    assert ws.n_lambda == 5
    for k, k1 in ws.directions:
        assert k[0] ** 2 + k[1] ** 2 == 1
        assert k1[0] * k[0] + k1[1] * k[1] == 0
        for component in (*k, *k1):
            assert (ws.n_lambda * component).denominator == 1
    assert ws.dyad_rank() == 3
    assert not ws.certified


def test_identity_decomposes_into_base_coefficients():
    identity = ((Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
    coefficients = decompose_exact(identity)
    assert coefficients == (Fraction(17, 25), Fraction(41, 50), Fraction(1, 4), Fraction(1, 4))
    assert coefficients == BASE_COEFFICIENTS


@pytest.mark.parametrize(
    "matrix",
    [
        ((Fraction(11, 10), Fraction(1, 20)), (Fraction(1, 20), Fraction(9, 10))),
        ((Fraction(1), Fraction(-1, 7)), (Fraction(-1, 7), Fraction(1))),
        ((Fraction(3, 4), Fraction(0)), (Fraction(0), Fraction(5, 4))),
    ],
)
def test_exact_reconstruction(matrix):
    ws = build_wavevector_set()
    assert reconstruct_exact(ws, decompose_exact(matrix)) == matrix


def test_off_diagonal_moves_only_the_oblique_pair():
    s = Fraction(1, 10)
    shifted = decompose_exact(((Fraction(1), s), (s, Fraction(1))))
    base = BASE_COEFFICIENTS
    assert shifted[0] == base[0] and shifted[1] == base[1]
    assert shifted[2] - base[2] == -(shifted[3] - base[3])
    assert shifted[2] != base[2]


def test_decompose_rejects_asymmetric_matrix():
    with pytest.raises(ValueError, match="symmetric"):
        decompose_exact(((Fraction(1), Fraction(1)), (Fraction(0), Fraction(1))))


def test_certified_ball(wavevectors):
    assert wavevectors.certified
    assert 0 < wavevectors.c_r < 1
    assert math.isfinite(wavevectors.m_star) and wavevectors.m_star > 0
    r11, r12, r22 = boundary_matrix(wavevectors)
    squares = decompose(wavevectors, r11, r12, r22, check_ball=False)
    smallest = float(np.min(squares))
    assert 0 <= smallest <= 0.05 * float(min(BASE_COEFFICIENTS))


def test_decompose_outside_ball_names_the_margin(wavevectors):
    with pytest.raises(ValueError, match="margin"):
        decompose(wavevectors, 2.0, 0.0, 2.0)


def test_uncertified_set_refuses_to_decompose():
    with pytest.raises(ValueError, match="certified"):
        decompose(build_wavevector_set(), 1.0, 0.0, 1.0)


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_reconstruction_inside_ball(wavevectors, seed):
    rng = np.random.default_rng(seed)
    r11, r12, r22 = sample_ball(wavevectors, rng, 1000)
    squares = decompose(wavevectors, r11, r12, r22)
    assert float(np.min(squares)) > 0
    rebuilt = reconstruct(wavevectors, squares)
    assert_allclose(rebuilt, np.stack([r11, r12, r22]), rtol=0, atol=1e-12)


def test_gamma_gradient_matches_finite_differences(wavevectors, rng):
    r11, r12, r22 = (float(c[0]) for c in sample_ball(wavevectors, rng, 1))
    r11, r12, r22 = 1 + 0.5 * (r11 - 1), 0.5 * r12, 1 + 0.5 * (r22 - 1)
    analytic = gamma_gradient(wavevectors, r11, r12, r22)
    h = 1e-6
    point = [r11, r12, r22]
    for axis in range(3):
        up, down = list(point), list(point)
        up[axis] += h
        down[axis] -= h
        numeric = (gamma(wavevectors, *up) - gamma(wavevectors, *down)) / (2 * h)
        assert_allclose(numeric, analytic[:, axis], atol=1e-6)


def test_coefficient_table(wavevectors):
    table = coefficient_table(wavevectors)
    assert table["n_lambda"] == 5.0
    assert table["c_r"] == wavevectors.c_r
    assert table["floor"] == pytest.approx(0.02 * 0.25)
    assert len(wavevectors.table_rows()) == 4
