import pytest
from hypothesis import given, settings, strategies as st

from lab.regression import fit_power_law, fit_slope

SCALES = [8, 16, 32, 64]


@settings(max_examples=25, deadline=None)
@given(
    exponent=st.floats(min_value=-3, max_value=3, allow_nan=False),
    constant=st.floats(min_value=1e-3, max_value=1e3),
)
def test_exact_power_law_is_recovered(exponent, constant):
    values = [constant * s**exponent for s in SCALES]
    assert fit_slope(SCALES, values) == pytest.approx(exponent, abs=1e-9)


def test_match_mode_is_two_sided():
    values = [s**-1.0 for s in SCALES]
    assert fit_power_law(SCALES, values, predicted=-1.0, tolerance=0.1).passed
    assert not fit_power_law(SCALES, values, predicted=-0.5, tolerance=0.1).passed
    assert not fit_power_law(SCALES, values, predicted=-1.5, tolerance=0.1).passed


def test_bound_mode_accepts_faster_decay():
    values = [s**-2.0 for s in SCALES]
    result = fit_power_law(SCALES, values, predicted=-1.0, tolerance=0.0, mode="bound")
    assert result.passed
    assert result.residual == pytest.approx(-1.0)
    growing = [s**0.5 for s in SCALES]
    assert not fit_power_law(SCALES, growing, predicted=0.0, tolerance=0.1, mode="bound").passed


def test_values_at_the_floor_are_degenerate():
    zeros = [0.0] * 4
    bound = fit_power_law(SCALES, zeros, predicted=-1.0, tolerance=0.1, mode="bound", floor=1e-12)
    match = fit_power_law(SCALES, zeros, predicted=-1.0, tolerance=0.1, floor=1e-12)
    assert bound.degenerate and bound.passed
    assert match.degenerate and not match.passed


def test_fit_needs_four_positive_points():
    with pytest.raises(ValueError, match="at least 4"):
        fit_slope([8, 16, 32], [1.0, 0.5, 0.25])
    with pytest.raises(ValueError, match="positive"):
        fit_slope(SCALES, [1.0, 0.0, 1.0, 1.0])


def test_csv_rows_carry_both_slopes():
    result = fit_power_law(SCALES, [1.0, 0.5, 0.25, 0.125], predicted=-1.0, tolerance=0.1, nominal=-1.0)
    rows = result.csv_rows()
    assert len(rows) == 4
    assert rows[0][0] == "8.0"
    assert float(rows[0][3]) == pytest.approx(-1.0)
