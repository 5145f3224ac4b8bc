import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dice_mpc.errors import DomainError
from dice_mpc.exogenous import (abatement_cost_coeff, build_exogenous_path, forcing_exo, land_emissions,
                                population_step, sigma_step, tfp_step)
from dice_mpc.params import load_parameter_set


def test_population_step():
    assert population_step(11500.0, 11500.0, 0.134) == pytest.approx(11500.0)
    assert population_step(7403.0, 11500.0, 0.134) == pytest.approx(7853.0, abs=0.1)
    assert population_step(5000.0, 11500.0, 0.134) > 5000.0


def test_population_step_domain():
    with pytest.raises(DomainError):
        population_step(0.0, 11500.0, 0.134)


def test_tfp_step():
    assert tfp_step(5.115, 0.076, 0.005, 5.0, 1) == pytest.approx(5.5357, abs=1e-3)
    assert tfp_step(5.115, 0.0, 0.005, 5.0, 1) == 5.115
    assert tfp_step(5.115, 0.076, 0.005, 5.0, 2000) == pytest.approx(5.115, rel=1e-12)


def test_tfp_step_sign_flip():
    with pytest.raises(DomainError, match="below 1"):
        tfp_step(5.115, 1.5, 0.005, 5.0, 1)


def test_sigma_step():
    assert sigma_step(0.3503, 0.0152, 0.001, 5.0, 1) == pytest.approx(0.32467, abs=1e-4)
    assert sigma_step(0.3503, 0.0, 0.001, 5.0, 1) == 0.3503
    assert sigma_step(0.3503, 0.0152, 0.001, 5.0, 7) < 0.3503


def test_abatement_cost_coeff():
    assert abatement_cost_coeff(0.3503, 550.0, 0.025, 2.6, 1) == pytest.approx(0.074101, abs=1e-5)
    assert abatement_cost_coeff(0.0, 550.0, 0.025, 2.6, 1) == 0.0


def test_forcing_ramp():
    assert forcing_exo(1, 0.5, 1.0, 17.0) == 0.5
    assert forcing_exo(18, 0.5, 1.0, 17.0) == pytest.approx(1.0)
    assert forcing_exo(100, 0.5, 1.0, 17.0) == 1.0


def test_land_emissions():
    assert land_emissions(1, 2.6, 0.115) == 2.6
    assert land_emissions(2, 2.6, 0.115) == pytest.approx(2.301)
    assert land_emissions(9, 2.6, 0.0) == 2.6


def test_path_one_step(p2016):
    path = build_exogenous_path(p2016, 1)
    np.testing.assert_allclose(path.L, [7403.0, 7853.0], atol=0.1)
    np.testing.assert_allclose(path.A, [5.115, 5.5357], atol=1e-3)
    assert path.years.tolist() == [2015.0, 2020.0]
    assert path.year(2) == 2020.0


def test_path_zero_horizon(p2016):
    path = build_exogenous_path(p2016, 0)
    assert path.L.tolist() == [p2016.L0]
    assert path.A.tolist() == [p2016.A0]
    assert path.sigma.tolist() == [p2016.sigma0]
    assert path.at(1)["E_Land"] == p2016.E_L0


def test_path_negative_horizon(p2016):
    with pytest.raises(ValueError):
        build_exogenous_path(p2016, -1)


def test_population_approaches_asymptote(p2013):
    path = build_exogenous_path(p2013, 100)
    assert path.L[-1] == pytest.approx(10500.0, rel=0.01)


@settings(max_examples=20, deadline=None)
@given(vintage=st.sampled_from(["2013R", "2016R"]), horizon=st.integers(1, 120))
def test_monotone_and_bounded(vintage, horizon):
    p = load_parameter_set(vintage)
    path = build_exogenous_path(p, horizon)
    for seq in (path.L, path.A, path.sigma, path.theta1, path.F_EX, path.E_Land):
        assert seq.size == horizon + 1
    assert np.all(np.diff(path.L) > 0)
    assert np.all(np.diff(path.A) > 0)
    assert np.all(np.diff(path.sigma) < 0)
    assert np.all(np.diff(path.theta1) < 0)
    assert np.all(np.diff(path.E_Land) < 0)
    assert np.all(np.diff(path.F_EX) >= 0)
    assert np.all(path.L < 1.0 + p.La)
    assert np.all(path.F_EX <= p.f1)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(0, 60), m=st.integers(0, 60))
def test_shift_consistency(n, m):
    p = load_parameter_set("2016R")
    short, long_ = build_exogenous_path(p, n), build_exogenous_path(p, m)
    k = min(n, m) + 1
    for name in ("L", "A", "sigma", "theta1", "F_EX", "E_Land"):
        np.testing.assert_array_equal(getattr(short, name)[:k], getattr(long_, name)[:k])


def test_path_csv(tmp_path, p2016):
    path = build_exogenous_path(p2016, 3)
    out = tmp_path / "exogenous.csv"
    path.to_csv(str(out))
    with open(out) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "year", "L", "A", "sigma", "theta1", "F_EX", "E_Land"]
    assert len(rows) == 5
    assert rows[1][:3] == ["1", "2015", "7403"]
