import csv

import numpy as np
import pytest

from dice_mpc.errors import SolverError
from dice_mpc.mpc import MpcConfig, run_mpc
from dice_mpc.nlp import solve
from dice_mpc.scc import (END_OF_HORIZON, CrossValidation, SccSeries, cross_validate, last_informative_step,
                          pulse_experiment, pulse_series, scc_from_lambdas, scc_from_multipliers, scc_pulse)
from dice_mpc.transcription import I_C, I_E, OcpSpec, build_ocp1

from .conftest import SCC_RHOS

PUBLISHED_SCC = {
    0.005: {2015: 73.95, 2020: 89.31, 2030: 124.20},
    0.015: {2015: 27.14, 2020: 32.28, 2030: 44.54},
    0.03: {2015: 10.84, 2020: 12.54, 2030: 16.98},
}


def test_ratio_definition():
    series = scc_from_lambdas([1, 2], [2015, 2020], [-0.02, 0.0], [0.5, 0.4], rho=0.015)
    np.testing.assert_allclose(series.values, [40.0, 0.0], rtol=1e-12)
    assert series.points[0].method == "multiplier"
    assert series.points[0].rho == 0.015
    assert series.at_year(2020) == 0.0


def test_unusable_lambda_c_is_skipped():
    series = scc_from_lambdas([1, 2, 3], [2015, 2020, 2025], [-0.02, -0.02, -0.02], [0.0, -0.1, np.nan])
    assert not series.points
    assert [step for step, _ in series.skipped] == [1, 2, 3]
    assert "wrong sign" in series.skipped[1][1]


def test_series_lookup_and_csv(tmp_path):
    series = scc_from_lambdas([1], [2015], [-0.02], [0.5], rho=0.015)
    with pytest.raises(KeyError):
        series.at_year(2020)
    path = tmp_path / "scc.csv"
    series.to_csv(str(path))
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["year", "scc", "method", "lambda_E", "lambda_C", "rho"]
    assert rows[1] == ["2015", "40", "multiplier", "-0.02", "0.5", "0.015"]


def test_multiplier_signs(solved_n20):
    _, result = solved_n20
    lam_E, lam_C = result.series(I_E), result.series(I_C)
    assert np.all(lam_E[:18] < 0)
    assert np.all(lam_C[:18] > 0)


def test_multiplier_scc_positive(solved_n20):
    _, result = solved_n20
    series = scc_from_multipliers(result)
    assert series.points[0].year == 2015
    assert [pt.step for pt in series.points] == list(range(1, last_informative_step(20) + 1))
    assert np.all(series.values > 0)


def test_end_of_horizon_steps_are_skipped(solved_n20):
    _, result = solved_n20
    series = scc_from_multipliers(result)
    assert series.skipped_steps == [19, 20, 21]
    assert all(reason == END_OF_HORIZON for _, reason in series.skipped)
    scale = abs(result.multiplier(1, I_E))
    assert abs(result.multiplier(19, I_E)) <= 1e-8 * scale
    assert abs(result.multiplier(20, I_E)) <= 1e-8 * scale
    with pytest.raises(KeyError):
        series.at_year(2105)


def test_informative_mask_skips_steps():
    series = scc_from_lambdas([1, 2], [2015, 2020], [-0.02, 0.0], [0.5, 0.4], informative=[True, False])
    assert [pt.step for pt in series.points] == [1]
    assert series.skipped == [(2, END_OF_HORIZON)]


def test_short_closed_loop_skips_second_slot(p2016):
    run = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=3), N_sim=2))
    series = scc_from_multipliers(run)
    assert [pt.step for pt in series.points] == [1]
    assert series.skipped_steps == [2]


def test_multiplier_scc_needs_optimal_solve(p2016):
    result = solve(build_ocp1(OcpSpec(params=p2016, horizon=5, T_max=0.95)))
    with pytest.raises(SolverError):
        scc_from_multipliers(result)


def test_scc_invariant_under_objective_scaling(solved_n10, p2016):
    _, scaled = solved_n10
    raw = solve(build_ocp1(OcpSpec(params=p2016, horizon=10, scaled_objective=False)))
    a, b = scc_from_multipliers(scaled), scc_from_multipliers(raw)
    np.testing.assert_allclose(a.values[:8], b.values[:8], rtol=1e-3)


def test_closed_loop_series(p2016):
    run = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=10), N_sim=2))
    series = scc_from_multipliers(run)
    assert series.years.tolist() == [2015, 2020]
    assert {pt.method for pt in series.points} == {"mpc"}
    np.testing.assert_allclose(series.values, run.scc)


def test_zero_pulse(solved_n10):
    problem, result = solved_n10
    run = pulse_experiment(problem, result, 2020, 0.0)
    assert run.scc == 0.0
    np.testing.assert_array_equal(run.C_base, run.C_pulse)
    np.testing.assert_array_equal(run.M_AT_base, run.M_AT_pulse)


def test_pulse_enters_atmosphere(solved_n10, p2016):
    problem, result = solved_n10
    run = pulse_experiment(problem, result, 2020, 10.0)
    j = run.step
    assert j == 2
    np.testing.assert_array_equal(run.M_AT_base[:j], run.M_AT_pulse[:j])
    assert run.M_AT_pulse[j] - run.M_AT_base[j] == pytest.approx(10.0 * p2016.xi2, rel=1e-9)


def test_pulse_scc_positive_and_small_deviation(solved_n10):
    problem, result = solved_n10
    run = pulse_experiment(problem, result, 2020, 10.0, discount="flat", rate=0.05)
    assert run.scc > 0
    assert run.max_relative_deviation < 1e-3
    assert run.weights[0] == pytest.approx(1.05 ** -5)


def test_pulse_linearity(solved_n10):
    problem, result = solved_n10
    small = pulse_experiment(problem, result, 2020, 1.0).scc
    large = pulse_experiment(problem, result, 2020, 10.0).scc
    assert small == pytest.approx(large, rel=0.02)


def test_marginal_utility_weights_decline(solved_n10):
    problem, result = solved_n10
    run = pulse_experiment(problem, result, 2025, 1.0, discount="marginal_utility", tail_steps=5)
    assert len(run.weights) == 5
    assert 0.0 < run.weights[0] < 1.0
    assert np.all(np.diff(run.weights) < 0)


@pytest.mark.parametrize("year, size, discount", [
    (2100, 1.0, "flat"),
    (2020, -1.0, "flat"),
    (2020, 1.0, "hyperbolic"),
])
def test_pulse_rejects_bad_arguments(solved_n10, year, size, discount):
    problem, result = solved_n10
    with pytest.raises(ValueError):
        pulse_experiment(problem, result, year, size, discount)


def test_off_grid_year(solved_n10):
    problem, result = solved_n10
    with pytest.raises(ValueError):
        pulse_experiment(problem, result, 2022, 1.0)


def test_cross_validation_agrees(solved_n20):
    problem, result = solved_n20
    mult = scc_from_multipliers(result)
    years = list(range(2015, 2055, 5))
    pulses = SccSeries()
    for year in years:
        j = problem.params.step_of_year(year)
        pulses.extend(pulse_series(problem, result, [year], 1e-3, discount="marginal_utility",
                                   tail_steps=problem.N - j))
    report = cross_validate(mult, pulses)
    assert isinstance(report, CrossValidation)
    assert [row.year for row in report.rows] == years
    assert report.passed, report.rows


def test_cross_validation_flags_mismatched_discounting(solved_n20):
    problem, result = solved_n20
    mult = scc_from_multipliers(result)
    pulses = pulse_series(problem, result, [2020, 2030], 1.0, discount="flat", rate=0.0)
    report = cross_validate(mult, pulses)
    assert report.flagged_years == [2020, 2030]
    assert not report.passed


def test_cross_validation_flags_zero_pulse(solved_n10):
    _, result = solved_n10
    mult = scc_from_multipliers(result)
    report = cross_validate(mult, {2020: 0.0})
    assert report.rows[0].relative_deviation == 1.0
    assert report.flagged_years == [2020]


def test_reoptimized_pulse_matches_multiplier(solved_n10):
    problem, result = solved_n10
    value = scc_pulse(problem, result, 2020, 1.0, reoptimize=True)
    assert value == pytest.approx(scc_from_multipliers(result).at_year(2020), rel=0.05)
    assert scc_pulse(problem, result, 2020, 0.0, reoptimize=True) == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("rho", SCC_RHOS)
def test_scc_by_rho_matches_published(scc_by_rho_results, rho):
    _, result = scc_by_rho_results[rho]
    assert result.optimal
    series = scc_from_multipliers(result)
    for year, expected in PUBLISHED_SCC[rho].items():
        assert series.at_year(year) == pytest.approx(expected, rel=0.05), year


@pytest.mark.slow
def test_scc_by_rho_orderings(scc_by_rho_results):
    values = {rho: scc_from_multipliers(scc_by_rho_results[rho][1]) for rho in SCC_RHOS}
    for year in (2015, 2020, 2030):
        column = [values[rho].at_year(year) for rho in SCC_RHOS]
        assert column[0] > column[1] > column[2]
    for rho in SCC_RHOS:
        row = [values[rho].at_year(year) for year in (2015, 2020, 2030)]
        assert row[0] < row[1] < row[2]


@pytest.mark.slow
def test_unconstrained_peak_warming(scc_by_rho_results):
    problem, result = scc_by_rho_results[0.015]
    peak = max(problem.trajectory(result.primal)["T_AT"])
    assert 3.0 <= peak <= 4.5


@pytest.mark.slow
def test_flat_pulse_same_order_as_published(scc_by_rho_results):
    problem, result = scc_by_rho_results[0.015]
    value = pulse_experiment(problem, result, 2020, 10.0, discount="flat", rate=0.05).scc
    assert 0.2 * PUBLISHED_SCC[0.015][2020] < value < 5.0 * PUBLISHED_SCC[0.015][2020]
