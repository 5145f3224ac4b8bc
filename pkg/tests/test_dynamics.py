import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dice_mpc import dynamics
from dice_mpc.dynamics import (Controls, EndogenousState, build_climate_matrices, capital_step, carbon_step,
                               climate_step, consumption, damages_factor, discount_factor, emissions_rate,
                               equilibrium_temperature, gross_output, marginal_utility, net_output,
                               radiative_forcing, utility, welfare_objective)
from dice_mpc.errors import DomainError
from dice_mpc.exogenous import build_exogenous_path
from dice_mpc.params import derived_climate_inputs, load_parameter_set

P16 = load_parameter_set("2016R")
positive = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)


def test_gross_output():
    assert gross_output(5.115, 223.0, 7403.0, 0.3) == pytest.approx(105.2, abs=0.2)
    assert gross_output(5.115, 0.0, 7403.0, 0.3) == 0.0
    assert gross_output(10.23, 223.0, 7403.0, 0.3) == pytest.approx(2 * gross_output(5.115, 223.0, 7403.0, 0.3))


@pytest.mark.parametrize("T, expected", [(0.0, 1.0), (3.0, 0.97920), (0.85, 0.998298)])
def test_damages_factor(T, expected):
    assert damages_factor(T, 0.00236, 2.0) == pytest.approx(expected, abs=1e-5)


def test_net_output():
    assert net_output(105.2, 0.0, 0.074101, 0.0, P16) == 105.2
    assert net_output(105.2, 0.85, 0.074101, 0.03, P16) == pytest.approx(105.02, abs=0.01)
    full = net_output(105.2, 0.85, 0.074101, 1.0, P16)
    assert full == pytest.approx(damages_factor(0.85, P16.a2, P16.a3) * (1 - 0.074101) * 105.2)


def test_emissions_rate():
    assert emissions_rate(0.3503, 0.03, 105.2, 2.6) == pytest.approx(38.35, abs=0.01)
    assert emissions_rate(0.3503, 1.0, 105.2, 2.6) == 2.6
    assert emissions_rate(0.0, 0.5, 105.2, 0.0) == 0.0


def test_radiative_forcing():
    assert radiative_forcing(2 * 588.0, 0.0, 3.6813, 588.0) == pytest.approx(3.6813)
    assert radiative_forcing(851.0, 0.5, 3.6813, 588.0) == pytest.approx(2.4634, abs=1e-3)
    assert radiative_forcing(588.0, 0.0, 3.6813, 588.0) == 0.0
    with pytest.raises(DomainError, match="M_AT"):
        radiative_forcing(0.0, 0.5, 3.6813, 588.0)


def test_climate_step():
    T = climate_step([0.85, 0.0068], 2.4634, P16.phi_T, P16.xi1)
    np.testing.assert_allclose(T, [0.9887, 0.02788], atol=1e-4)
    np.testing.assert_array_equal(climate_step([0.0, 0.0], 0.0, P16.phi_T, P16.xi1), [0.0, 0.0])


def test_climate_converges_to_equilibrium():
    F = 4.0
    T = np.zeros(2)
    for _ in range(3000):
        T = climate_step(T, F, P16.phi_T, P16.xi1)
    lam = derived_climate_inputs(P16)["lambda"]
    assert T[0] == pytest.approx(F / lam, rel=1e-6)
    assert equilibrium_temperature(F, P16) == pytest.approx(F / lam, rel=1e-12)


def test_climate_dissipative():
    T = np.array([3.0, 1.0])
    norms = []
    for _ in range(200):
        T = climate_step(T, 0.0, P16.phi_T, P16.xi1)
        norms.append(np.linalg.norm(T))
    assert norms[-1] < 0.02 * norms[0]
    assert all(b < a for a, b in zip(norms[10:], norms[11:]))


def test_carbon_step():
    M = carbon_step([851.0, 460.0, 1740.0], 38.35, P16.phi_M, P16.xi2, P16.delta)
    np.testing.assert_allclose(M, [891.3, 471.29, 1740.67], atol=0.05)


@settings(max_examples=100, deadline=None)
@given(M=st.lists(st.floats(1.0, 1e4), min_size=3, max_size=3), E=st.floats(-50.0, 200.0))
def test_carbon_conservation(M, E):
    M = np.array(M)
    M_next = carbon_step(M, E, P16.phi_M, P16.xi2, P16.delta)
    drift = M_next.sum() - M.sum() - P16.xi2 * P16.delta * E
    assert abs(drift) <= 3e-5 * M.sum()


def test_capital_step():
    assert (1.0 - P16.delta_K) ** P16.delta == pytest.approx(0.59049)
    assert capital_step(223.0, 105.02, 0.25, 0.1, 5.0) == pytest.approx(262.9, abs=0.5)
    assert capital_step(223.0, 105.02, 0.0, 0.1, 5.0) == pytest.approx(0.59049 * 223.0)


def test_consumption():
    assert consumption(105.02, 0.0) == 105.02
    assert consumption(105.02, 1.0) == 0.0
    assert consumption(105.02, 0.25) == pytest.approx(78.76, abs=0.01)


def test_utility():
    assert utility(78.76, 7403.0, 1.45) == pytest.approx(10774.0, rel=2e-4)
    assert utility(7.403, 7403.0, 1.45) == 0.0
    with pytest.raises(DomainError):
        utility(0.0, 7403.0, 1.45)


@pytest.mark.parametrize("alpha", [1.0 - 1e-6, 1.0 + 1e-6])
def test_utility_log_limit(alpha):
    C, L = 78.76, 7403.0
    log_form = L * np.log(1000.0 * C / L)
    assert utility(C, L, alpha) == pytest.approx(log_form, rel=1e-3)
    assert utility(C, L, 1.0) == pytest.approx(log_form)


def test_marginal_utility_matches_difference():
    C, L, h = 78.76, 7403.0, 1e-4
    fd = (utility(C + h, L, 1.45) - utility(C - h, L, 1.45)) / (2 * h)
    assert marginal_utility(C, L, 1.45) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(C=st.floats(1.0, 500.0), L=st.floats(1000.0, 12000.0), alpha=st.floats(0.5, 3.0))
def test_utility_concave(C, L, alpha):
    h = 1e-2 * C
    second = utility(C + h, L, alpha) - 2 * utility(C, L, alpha) + utility(C - h, L, alpha)
    assert second < 0


@settings(max_examples=100, deadline=None)
@given(C=st.floats(1e-3, 1e6), L=st.floats(1.0, 12000.0), alpha=st.floats(1.05, 3.0))
def test_utility_bounded_above(C, L, alpha):
    assert utility(C, L, alpha) <= L / (alpha - 1.0) * (1 + 1e-12)


def test_welfare_objective():
    U1 = utility(78.76, 7403.0, 1.45)
    single = welfare_objective([78.76], [7403.0], 0.015, 5.0, P16.scale1, P16.scale2, P16)
    assert single == pytest.approx(P16.scale2 + P16.scale1 * U1)
    assert welfare_objective([78.76], [7403.0], 0.015, 5.0, 1.0, 0.0, P16) == pytest.approx(U1)
    two = welfare_objective([78.76, 78.76], [7403.0, 7403.0], 0.015, 5.0, 1.0, 0.0, P16)
    assert (two - U1) / U1 == pytest.approx(1.015 ** -5, abs=1e-5)
    assert discount_factor(2, 0.015, 5.0) == pytest.approx(0.92826, abs=1e-5)
    with pytest.raises(ValueError):
        welfare_objective([1.0, 2.0], [7403.0], 0.015, 5.0, 1.0, 0.0, P16)


@settings(max_examples=100, deadline=None)
@given(A=positive, K=positive, L=positive, factor=st.floats(1.01, 3.0))
def test_output_increasing(A, K, L, factor):
    Y = gross_output(A, K, L, 0.3)
    assert gross_output(A * factor, K, L, 0.3) > Y
    assert gross_output(A, K * factor, L, 0.3) > Y
    assert gross_output(A, K, L * factor, 0.3) > Y


@settings(max_examples=100, deadline=None)
@given(T=st.floats(0.0, 8.0), dT=st.floats(0.01, 2.0), mu=st.floats(0.0, 0.9), dmu=st.floats(0.01, 0.1))
def test_net_output_and_emissions_decreasing(T, dT, mu, dmu):
    Q = net_output(100.0, T, 0.07, mu, P16)
    assert net_output(100.0, T + dT, 0.07, mu, P16) < Q
    assert net_output(100.0, T, 0.07, mu + dmu, P16) < Q
    assert emissions_rate(0.3, mu + dmu, 100.0, 2.6) < emissions_rate(0.3, mu, 100.0, 2.6)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 10.0), T=st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=2), F=st.floats(-5.0, 5.0),
       M=st.lists(st.floats(1.0, 3000.0), min_size=3, max_size=3), E=st.floats(0.0, 100.0),
       K=st.floats(1.0, 1000.0), Qs=st.floats(0.0, 100.0))
def test_superposition(a, T, F, M, E, K, Qs):
    T, M = np.array(T), np.array(M)
    np.testing.assert_allclose(climate_step(a * T, a * F, P16.phi_T, P16.xi1),
                               a * climate_step(T, F, P16.phi_T, P16.xi1), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(carbon_step(a * M, a * E, P16.phi_M, P16.xi2, P16.delta),
                               a * carbon_step(M, E, P16.phi_M, P16.xi2, P16.delta), rtol=1e-12)
    assert capital_step(a * K, a * Qs, 1.0, 0.1, 5.0) == pytest.approx(a * capital_step(K, Qs, 1.0, 0.1, 5.0),
                                                                       rel=1e-12)


def test_build_climate_matrices_reproduces_table():
    d = derived_climate_inputs(P16)
    phi_T, xi1 = build_climate_matrices(d["C_AT"], d["C_LO"], d["lambda"], d["gamma_heat"], P16.delta)
    np.testing.assert_allclose(phi_T, P16.phi_T, rtol=1e-12)
    assert xi1 == pytest.approx(P16.xi1)
    assert d["lambda"] + d["gamma_heat"] == pytest.approx(1.2756, abs=1e-4)


def test_build_climate_matrices_limits():
    phi_T, _ = build_climate_matrices(50.0, 20.0, 1.2, 0.0, 5.0)
    assert phi_T[0, 1] == 0.0 and phi_T[1, 0] == 0.0
    phi_T, _ = build_climate_matrices(50.0, 20.0, 0.0, 0.0, 5.0)
    np.testing.assert_array_equal(np.diag(phi_T), [1.0, 1.0])


def test_build_climate_matrices_unstable():
    with pytest.raises(DomainError, match="unstable"):
        build_climate_matrices(5.0, 20.0, 1.2, 0.1, 5.0)


def test_controls_bounds():
    Controls(0.0, 1.0)
    with pytest.raises(DomainError):
        Controls(1.2, 0.2)
    with pytest.raises(DomainError):
        Controls(0.2, -0.1)


def test_flows_and_step(p2016):
    exo = build_exogenous_path(p2016, 1).at(1)
    state = EndogenousState.initial(p2016)
    f = dynamics.flows(state, Controls(0.03, 0.25), 1, exo, p2016)
    assert f.I == pytest.approx(f.Q * 0.25)
    assert f.C == pytest.approx(f.Q - f.I)
    assert f.Omega == pytest.approx(0.998298, abs=1e-6)
    assert f.Y >= f.Q > 0
    nxt = dynamics.step(state, Controls(0.03, 0.25), 1, exo, p2016)
    assert nxt.T_AT == pytest.approx(0.9887, abs=1e-3)
    assert nxt.K == pytest.approx(262.9, abs=0.5)


def test_welfare_objective_uses_vintage_alpha():
    p = P16.with_overrides(alpha=2.0)
    value = welfare_objective([78.76], [7403.0], 0.015, 5.0, 1.0, 0.0, p)
    assert value == pytest.approx(utility(78.76, 7403.0, 2.0))
    assert value != pytest.approx(utility(78.76, 7403.0, 1.45))
