import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from pydantic import ValidationError

from lab import torus_spectral as ts
from lab.torus_spectral import Field, Grid, NormSpec, Rank, ResolutionError, TimeSampledField

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) / float(np.max(np.abs(b)))


@pytest.mark.parametrize("n", [6, 12, 4, 100])
def test_grid_requires_power_of_two(n):
    with pytest.raises(ValidationError):
        Grid(n=n)


def test_field_shape_is_checked():
    with pytest.raises(ValueError, match="shape"):
        Field(Grid(n=8), Rank.VECTOR, np.zeros((3, 8, 8)))


def test_sym_field_rejects_trace():
    values = np.ones((3, 8, 8))
    with pytest.raises(ValueError, match="trace"):
        Field(Grid(n=8), Rank.SYM, values)


def test_values_are_read_only():
    field = Field.zeros(Grid(n=8), Rank.SCALAR)
    with pytest.raises(ValueError):
        field.values[0, 0, 0] = 1.0


def test_gradient_of_single_mode():
    grid = Grid(n=32)
    field = ts.sample(grid, lambda x1, x2: np.sin(2 * np.pi * 3 * x1) * np.cos(2 * np.pi * x2))
    x1, x2 = grid.coordinates()
    grad = ts.gradient(field).values
    assert_allclose(grad[0], 6 * np.pi * np.cos(6 * np.pi * x1) * np.cos(2 * np.pi * x2), atol=1e-11)
    assert_allclose(grad[1], -2 * np.pi * np.sin(6 * np.pi * x1) * np.sin(2 * np.pi * x2), atol=1e-11)


def test_rank_mismatch_is_a_type_error():
    grid = Grid(n=8)
    with pytest.raises(TypeError):
        ts.gradient(Field.zeros(grid, Rank.VECTOR))
    with pytest.raises(TypeError):
        Field.zeros(grid, Rank.SCALAR) + Field.zeros(grid, Rank.VECTOR)


@given(seed=seeds)
@settings(max_examples=25, deadline=None)
def test_divergence_inverts_inverse_divergence(seed):
    rng = np.random.default_rng(seed)
    v = ts.random_band_limited(Grid(n=32), Rank.VECTOR, rng)
    stress = ts.inverse_divergence(v)
    assert stress.rank is Rank.SYM
    assert _relative(ts.divergence(stress).values, v.values) <= 1e-10


@given(seed=seeds)
@settings(max_examples=25, deadline=None)
def test_leray_projection_is_idempotent_and_kills_gradients(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(n=32)
    v = ts.random_band_limited(grid, Rank.VECTOR, rng)
    once = ts.leray_project(v)
    twice = ts.leray_project(once)
    assert float(np.max(np.abs(twice.values - once.values))) <= 1e-12 * float(np.max(np.abs(once.values)))
    assert float(np.max(np.abs(ts.divergence(once).values))) <= 1e-10 * float(np.max(np.abs(v.values)))
    grad = ts.gradient(ts.random_band_limited(grid, Rank.SCALAR, rng))
    assert float(np.max(np.abs(ts.leray_project(grad).values))) <= 1e-12 * float(np.max(np.abs(grad.values)))


@given(seed=seeds)
@settings(max_examples=25, deadline=None)
def test_fractional_laplacian_at_one_is_minus_laplacian(seed):
    rng = np.random.default_rng(seed)
    f = ts.random_band_limited(Grid(n=32), Rank.SCALAR, rng)
    lhs = ts.fractional_laplacian(f, 1.0).values
    rhs = -ts.laplacian(f).values
    assert float(np.max(np.abs(lhs - rhs))) <= 1e-12 * float(np.max(np.abs(rhs)))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.25])
def test_fractional_laplacian_on_one_mode(alpha):
    grid = Grid(n=32)
    f = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * (3 * x1 + 4 * x2)))
    out = ts.fractional_laplacian(f, alpha).values
    assert_allclose(out, (2 * np.pi * 5) ** (2 * alpha) * f.values, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0])
def test_even_operators_keep_the_nyquist_line(alpha):
    grid = Grid(n=16)
    f = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * 8 * x1) * np.cos(2 * np.pi * x2))
    k2 = 8**2 + 1
    assert_allclose(ts.laplacian(f).values, -4 * np.pi**2 * k2 * f.values, atol=1e-9)
    assert_allclose(
        ts.fractional_laplacian(f, alpha).values, (4 * np.pi**2 * k2) ** alpha * f.values, atol=1e-9
    )


def test_fractional_laplacian_rejects_negative_order():
    with pytest.raises(ValueError):
        ts.fractional_laplacian(Field.zeros(Grid(n=8), Rank.SCALAR), -0.5)


def test_inverse_divergence_needs_mean_free_input():
    grid = Grid(n=16)
    v = Field.vector(grid, np.ones((16, 16)), np.zeros((16, 16)))
    with pytest.raises(ValueError, match="mean-free"):
        ts.inverse_divergence(v)


def test_inverse_abs_gradient_and_high_projection():
    grid = Grid(n=64)
    low = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * 2 * x1))
    high = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * 16 * x2))
    total = low + high
    assert_allclose(ts.project_high(total, 16).values, high.values, atol=1e-12)
    assert_allclose(ts.inverse_abs_gradient(high).values, high.values / (2 * np.pi * 16), atol=1e-14)
    assert_allclose(ts.project_nonzero(total).values.mean(), 0.0, atol=1e-14)


def test_dealias_removes_upper_third():
    grid = Grid(n=32)
    kept = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * 10 * x1))
    removed = ts.sample(grid, lambda x1, x2: np.cos(2 * np.pi * 11 * x2))
    assert_allclose(ts.dealias(kept + removed).values, kept.values, atol=1e-12)


def test_sym_traceless_product_of_shear():
    grid = Grid(n=16)
    x1, x2 = grid.coordinates()
    u = Field.vector(grid, np.sin(2 * np.pi * x2), np.zeros((16, 16)))
    product = ts.sym_traceless_product(u, u)
    assert_allclose(product.values[0], 0.5 * np.sin(2 * np.pi * x2) ** 2, atol=1e-12)
    assert_allclose(product.values[1], 0.0, atol=1e-12)
    assert_allclose(product.values[2], -product.values[0], atol=0)


def test_time_derivative_is_fourth_order():
    grid = Grid(n=8)
    nt = 128
    times = ts.uniform_times(nt)
    values = np.sin(2 * np.pi * times)[:, None, None, None] * np.ones((nt, 1, 8, 8))
    f = TimeSampledField.uniform(grid, Rank.SCALAR, values)
    expected = 2 * np.pi * np.cos(2 * np.pi * times)
    assert_allclose(ts.time_derivative(f).values[:, 0, 0, 0], expected, atol=1e-5)
    assert ts.richardson_estimate(f) < 1e-2


def test_periodic_sampling_must_be_uniform():
    grid = Grid(n=8)
    with pytest.raises(ValueError, match="uniform"):
        TimeSampledField(grid, Rank.SCALAR, np.array([0.0, 0.3]), np.zeros((2, 1, 8, 8)))


@pytest.mark.parametrize(
    "spec",
    [NormSpec.lebesgue(1), NormSpec.lebesgue(2), NormSpec.lebesgue("inf"), NormSpec.mixed(1, 2), NormSpec.mixed("inf", 3)],
)
def test_norms_of_unit_constant(spec):
    grid = Grid(n=8)
    f = TimeSampledField.uniform(grid, Rank.SCALAR, np.ones((16, 1, 8, 8)))
    assert ts.norm(f, spec) == pytest.approx(1.0, rel=1e-14)


def test_mixed_norm_integrates_in_time():
    grid = Grid(n=8)
    nt = 128
    times = ts.uniform_times(nt)
    profile = np.abs(np.sin(2 * np.pi * times))
    values = profile[:, None, None, None] * np.ones((nt, 1, 8, 8))
    f = TimeSampledField.uniform(grid, Rank.SCALAR, values)
    assert ts.norm(f, NormSpec.mixed(1, 2)) == pytest.approx(2 / np.pi, rel=5e-4)
    assert ts.norm(f, NormSpec.mixed("inf", 2)) == pytest.approx(1.0, rel=1e-12)


def test_sobolev_zero_matches_l2():
    grid = Grid(n=32)
    f = ts.sample(grid, lambda x1, x2: np.sin(2 * np.pi * 3 * x1))
    assert ts.norm(f, NormSpec.sobolev(0.0)) == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert ts.spectral_l2(f) == pytest.approx(ts.norm(f, NormSpec.lebesgue(2)), rel=1e-12)
    assert ts.norm(f, NormSpec.sobolev(1.0)) > ts.norm(f, NormSpec.sobolev(0.0))


def test_holder_norm_of_single_mode():
    grid = Grid(n=64)
    f = ts.sample(grid, lambda x1, x2: np.sin(2 * np.pi * x1))
    assert ts.norm(f, NormSpec.holder(0)) == pytest.approx(1.0, abs=1e-3)
    assert ts.norm(f, NormSpec.holder(1)) == pytest.approx(2 * np.pi, rel=1e-12)


def test_spatial_mollifier_warns_below_grid_spacing():
    grid = Grid(n=8)
    f = Field.zeros(grid, Rank.SCALAR)
    with pytest.warns(ts.ResolutionWarning):
        ts.mollify(f, 0.05)


def test_time_mollifier_needs_resolution():
    with pytest.raises(ResolutionError):
        ts.time_kernel_weights(dt=0.1, ell=0.05)


def test_mollifier_preserves_mean_and_constants():
    grid = Grid(n=16)
    f = TimeSampledField.uniform(grid, Rank.SCALAR, np.full((32, 1, 16, 16), 3.0))
    assert_allclose(ts.mollify(f, 0.25).values, 3.0, rtol=1e-12)


def test_snapshot_round_trip(tmp_path, rng):
    field = ts.random_solenoidal(Grid(n=16), rng, kmax=4)
    path = tmp_path / "u.bin"
    ts.write_snapshot(path, field, time=0.25)
    loaded, time = ts.read_snapshot(path)
    assert time == 0.25
    assert loaded.rank is Rank.VECTOR
    assert np.array_equal(loaded.values, field.values)
