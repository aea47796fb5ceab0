import numpy as np
import pytest
from numpy.testing import assert_allclose

from lab import torus_spectral as ts
from lab.building_blocks import required_time_samples
from lab.geometry import build_wavevector_set
from lab.iteration import (
    build_amplitudes,
    cutoff_chi,
    initial_step,
    make_initial_velocity,
    osc_decomposition_ratio,
    periodic_distance,
    predicted_exponents,
    relaxed_residual,
    run_step,
    smooth_step,
    temporal_cutoff,
    time_support,
)
from lab.params import DeskMode, derive_scales
from lab.torus_spectral import NormSpec, Rank, TimeSampledField


@pytest.fixture(scope="module")
def initial(step_grid, step_scales):
    u0 = make_initial_velocity(step_grid, required_time_samples(step_scales), seed=0)
    return initial_step(u0, alpha=1.0)


@pytest.fixture(scope="module")
def outcome(initial, step_scales, space, wavevectors):
    return run_step(initial, step_scales, space, wavevectors)


def test_initial_velocity_is_solenoidal_and_seeded(desk_grid):
    u0 = make_initial_velocity(desk_grid, 16, seed=3)
    again = make_initial_velocity(desk_grid, 16, seed=3)
    other = make_initial_velocity(desk_grid, 16, seed=4)
    assert np.array_equal(u0.values, again.values)
    assert not np.array_equal(u0.values, other.values)
    assert np.max(np.abs(ts.divergence(u0).values)) < 1e-12
    assert np.max(np.abs(u0.values[0])) == 0.0


def test_initial_step_closes_the_relaxed_system(initial):
    absolute, projected = relaxed_residual(initial, 1.0)
    assert absolute < 1e-10
    assert projected < 1e-10
    assert initial.q == 0
    assert np.max(np.abs(ts.spatial_mean(initial.P))) < 1e-12


def test_initial_step_rejects_bad_velocity(desk_grid, rng):
    stream = ts.random_band_limited(desk_grid, Rank.SCALAR, rng, kmax=2)
    compressible = np.repeat(ts.gradient(stream).values[None], 4, axis=0)
    with pytest.raises(ValueError, match="divergence-free"):
        initial_step(TimeSampledField.uniform(desk_grid, Rank.VECTOR, compressible), 1.0)

    constant = np.ones((4, 2, desk_grid.n, desk_grid.n))
    with pytest.raises(ValueError, match="mean-free"):
        initial_step(TimeSampledField.uniform(desk_grid, Rank.VECTOR, constant), 1.0)

    scalar = TimeSampledField.uniform(desk_grid, Rank.SCALAR, np.zeros((4, 1, desk_grid.n, desk_grid.n)))
    with pytest.raises(TypeError):
        initial_step(scalar, 1.0)


def test_cutoff_chi_shape():
    z = np.linspace(0.0, 6.0, 601)
    chi = cutoff_chi(z)
    assert_allclose(chi[z <= 1], 1.0)
    assert_allclose(chi[z >= 2], z[z >= 2])
    assert np.all(chi >= z / 2)
    assert np.all(np.diff(smooth_step(np.linspace(-1, 2, 301))) >= 0)


def test_periodic_distance_wraps():
    mask = np.zeros(8, dtype=bool)
    mask[0] = True
    assert_allclose(periodic_distance(mask, 0.125), [0, 1, 2, 3, 4, 3, 2, 1] * np.float64(0.125))
    assert np.all(np.isinf(periodic_distance(np.zeros(4, dtype=bool), 0.25)))


def test_temporal_cutoff_covers_the_support(desk_grid):
    values = np.zeros((64, 3, desk_grid.n, desk_grid.n))
    values[28:36, 1] = 0.5
    target = TimeSampledField.uniform(desk_grid, Rank.SYM, values)
    f = temporal_cutoff(target, ell=1 / 8)
    assert_allclose(f[28:36], 1.0)
    assert np.all((f >= 0) & (f <= 1))
    assert f[0] == 0.0 and f[63] == 0.0


def test_amplitudes_need_a_certified_set(initial, step_scales):
    with pytest.raises(ValueError, match="certified"):
        build_amplitudes(initial.R, step_scales, build_wavevector_set())


def test_step_identities(outcome):
    checks = outcome.report.checks
    assert checks["div_principal"] <= 1e-10
    for name in ("oscillation_identity", "temporal_balance", "oscillation_balance", "stress_consistency", "div_u_next"):
        assert checks[name] <= 1e-9, name
    assert checks["amplitude.dyad_identity"] <= 1e-9
    assert checks["residual_next_projected"] <= 1e-6


def test_step_amplitude_bounds(outcome):
    checks = outcome.report.checks
    assert checks["amplitude.rho_floor"] >= 2.0 - 1e-12
    assert checks["amplitude.stress_ratio"] <= 1.0
    assert checks["amplitude.f_on_support"] == 1.0
    assert 0.0 <= checks["amplitude.f_min"] <= checks["amplitude.f_max"] <= 1.0


def test_step_report_contents(outcome, step_scales):
    report = outcome.report
    assert report.q == 1
    assert report.lam == step_scales.lam
    assert report.support_ok
    for name in ("R_lin", "R_osc1", "R_osc2", "R_osc", "R_osc3", "R_cor", "R_com"):
        assert np.isfinite(report.norms[f"{name}.L1_t_Lvarrho_x"])
    assert report.norms["w_c_over_w_p"] > 0
    measured, bound = report.inductive["increment_H_beta"]
    assert measured > 0 and bound > 0
    rows = report.csv_rows()
    assert {row[0] for row in rows} == {"norm", "predicted", "check", "inductive"}


def test_oscillation_blocks_sum_to_the_stress(outcome):
    d = outcome.decomposition
    total = d.osc1.values + d.osc2.values + d.osc3.values + d.osc_defect.values
    assert_allclose(total, d.osc.values, atol=1e-12 * max(1.0, float(np.max(np.abs(d.osc.values)))))
    assert_allclose(d.total.values, (d.lin + d.osc + d.cor).values, atol=1e-14)
    assert not d.com_included


def test_unabsorbed_commutator_stays_in_the_stress(initial, step_scales, space, wavevectors):
    result = run_step(initial, step_scales, space, wavevectors, absorb_commutator=False)
    d = result.decomposition
    assert d.com_included
    assert_allclose(d.total.values, (d.lin + d.osc + d.cor + d.com).values, atol=1e-14)
    assert result.report.checks["residual_next_projected"] <= 1e-6
    assert result.report.checks["stress_consistency"] <= 1e-9


def test_step_refuses_an_unresolved_grid(initial, params, space, wavevectors):
    scales = derive_scales(params, space, desk=DeskMode(lam=64, ell=1 / 8))
    with pytest.raises(ts.ResolutionError):
        run_step(initial, scales, space, wavevectors)


def test_step_refuses_grids_that_miss_the_jets(initial, params, space, wavevectors):
    # n = 128 resolves λ = 8 but puts 3.2 points across a jet half-width
    scales = derive_scales(params, space, desk=DeskMode(lam=8, ell=1 / 8))
    with pytest.raises(ts.ResolutionError, match="half-width") as info:
        run_step(initial, scales, space, wavevectors)
    assert info.value.required_n == 256


def test_step_refuses_coarse_time_sampling(step_grid, step_scales, space, wavevectors):
    sparse = initial_step(make_initial_velocity(step_grid, 4, seed=0), alpha=1.0)
    with pytest.raises(ts.ResolutionError, match="time samples"):
        run_step(sparse, step_scales, space, wavevectors)


def test_corrector_is_the_closed_form(outcome):
    report = outcome.report
    assert report.norms["w_c.L2_tx"] > 0
    assert report.norms["w_c_over_w_p"] > 0
    # w_p + w_c against the sampled curl of the potentials
    assert 0.0 <= report.checks["corrector_representation"] < 0.5


def test_oscillation_defect_is_measured(outcome):
    d = outcome.decomposition
    report = outcome.report
    ratio = osc_decomposition_ratio(d)
    assert report.checks["osc_decomposition"] == ratio
    assert ratio == pytest.approx(report.norms["osc_defect.L1_tx"] / ts.norm(d.osc, NormSpec.lebesgue(1)))
    assert "R_osc_defect" not in d.components()


def test_support_follows_the_previous_stress(initial, outcome, step_scales):
    base = time_support(initial.R)
    assert base.any() and not base.all()
    moving = time_support(outcome.perturbation.w)
    distance = periodic_distance(base, initial.u.dt)
    assert np.all(distance[moving] < 2 * step_scales.ell)
    assert outcome.report.support_ok


def test_predicted_exponents_follow_the_stress_bounds(params, space):
    scales = derive_scales(params, space, desk=DeskMode(lam=4, ell=1 / 8))
    predicted = predicted_exponents(scales, space)
    epsilon = float(params.epsilon)
    assert predicted["R_lin"] == pytest.approx(-epsilon)
    assert predicted["R_osc1"] == pytest.approx(-epsilon)
    assert predicted["R_osc2"] == pytest.approx(-0.625)
    assert predicted["R_osc3"] == pytest.approx(-2 * epsilon)
    assert predicted["R_osc"] == pytest.approx(-epsilon)
    assert predicted["R_cor"] == pytest.approx(-epsilon)
    assert predicted["w_c"] < predicted["w_p"]
