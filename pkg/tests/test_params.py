from fractions import Fraction

import math

import pytest
from pydantic import ValidationError

from lab.params import (
    INF,
    DeskMode,
    FunctionSpaceSpec,
    IterationParams,
    check_constraints,
    derive_scales,
    exponent_identities,
    parse_exponent,
    perturbation_exponent,
    reciprocal,
    scale_exponents,
    varrho_for,
)


@pytest.mark.parametrize(
    "raw, expected",
    [("1/12", Fraction(1, 12)), ("inf", INF), ("∞", INF), (2, Fraction(2)), (0.5, Fraction(1, 2))],
)
def test_parse_exponent(raw, expected):
    assert parse_exponent(raw) == expected


def test_reciprocal_of_infinity_is_zero():
    assert reciprocal(INF) == 0
    assert reciprocal(Fraction(4)) == Fraction(1, 4)


@pytest.mark.parametrize("alpha", ["1/2", "3/2", "2"])
def test_alpha_outside_range_is_rejected(alpha):
    with pytest.raises(ValidationError):
        FunctionSpaceSpec(alpha=alpha, gamma="inf", p=2)


def test_epsilon_ceiling_at_alpha_one():
    space = FunctionSpaceSpec(alpha=1, gamma="inf", p=1)
    assert space.supercritical_gap() == 1
    assert space.epsilon_ceiling() == Fraction(1, 20)


def test_energy_endpoint_is_not_supercritical():
    space = FunctionSpaceSpec(alpha=1, gamma="inf", p=2)
    assert space.supercritical_gap() == 0
    assert not space.is_supercritical()
    with pytest.raises(ValueError, match="desk mode"):
        derive_scales(IterationParams(epsilon="1/40"), space)


def test_odd_b_is_rejected():
    with pytest.raises(ValidationError):
        IterationParams(b=3, epsilon="1/40")


def test_varrho_for_one_twelfth():
    eps = Fraction(1, 12)
    assert varrho_for(eps) == Fraction(12, 11)
    lhs, rhs = exponent_identities(eps)["varrho_slack"]
    assert lhs == rhs == eps


@pytest.mark.parametrize("eps", [Fraction(1, 12), Fraction(1, 40), Fraction(1, 1000), Fraction(3, 97)])
def test_exponent_identities_are_exact(eps):
    for name, (lhs, rhs) in exponent_identities(eps).items():
        assert lhs == rhs, name


def test_desk_scales_follow_the_exponents(params, space):
    scales = derive_scales(params, space, desk=DeskMode(lam=64, ell=1 / 8))
    exps = scale_exponents(space, params.epsilon)
    assert scales.lam == pytest.approx(64.0)
    assert scales.desk_mode
    for name in ("r_perp", "r_par", "mu", "tau", "sigma"):
        assert getattr(scales, name) == pytest.approx(64.0 ** float(exps[name]), rel=1e-12)
    assert scales.r_perp < scales.r_par < 1
    assert scales.ell == 1 / 8
    assert 1 < scales.varrho < 2


def test_derive_scales_is_deterministic(params, space):
    desk = DeskMode(lam=32)
    assert derive_scales(params, space, desk=desk) == derive_scales(params, space, desk=desk)


def test_negative_level_is_rejected(params, space):
    with pytest.raises(ValueError, match="non-negative"):
        derive_scales(params, space, q=-1, desk=DeskMode(lam=8))


def test_full_mode_rejects_epsilon_above_ceiling():
    space = FunctionSpaceSpec(alpha=1, gamma="inf", p=1)
    with pytest.raises(ValueError, match="ceiling"):
        derive_scales(IterationParams(b=2, epsilon="1/10"), space)


def test_full_mode_scales_use_super_exponential_frequencies():
    space = FunctionSpaceSpec(alpha=1, gamma="inf", p=1)
    params = IterationParams(a=2, b=40, epsilon="1/20")
    scales = derive_scales(params, space, q=0)
    assert scales.log_lambda_q == pytest.approx(math.log(2))
    assert scales.log_lambda == pytest.approx(40 * math.log(2))
    assert not scales.desk_mode


def test_perturbation_exponent_at_energy_endpoint():
    space = FunctionSpaceSpec(alpha=1, gamma="inf", p=2)
    eps = Fraction(1, 20)
    assert perturbation_exponent(space, eps) == 8 * eps


def test_constraint_report_in_desk_mode(params, space):
    scales = derive_scales(params, space, desk=DeskMode(lam=8))
    report = check_constraints(scales, params, space)
    names = {row.name for row in report.rows}
    assert {"supercritical", "b_lower", "mollification_scale", "varrho_low"} <= names
    assert "supercritical" in report.desk_failures()
    assert "b_lower" in report.desk_failures()
    assert report.passed
    for row in report.rows:
        if row.name in ("varrho_slack", "concentration_l1", "concentration_l2"):
            assert row.passed


def test_constraint_report_rows_serialize(params, space):
    scales = derive_scales(params, space, desk=DeskMode(lam=8))
    rows = check_constraints(scales, params, space).csv_rows()
    assert all(len(row) == 4 for row in rows)
    assert all(row[3] in ("true", "false") for row in rows)


def test_small_epsilon_limit_is_supercritical():
    space = FunctionSpaceSpec(alpha="5/4", gamma=2, p=2)
    eps = Fraction(1, 10**6)
    assert perturbation_exponent(space, eps) < -6 * eps
