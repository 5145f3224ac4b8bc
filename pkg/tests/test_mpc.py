import numpy as np
import pytest

from dice_mpc.errors import ProblemError, SolverError
from dice_mpc.mpc import MpcConfig, run_mpc
from dice_mpc.nlp import SolverStatus, solve
from dice_mpc.transcription import I_C, I_E, I_INDEX, I_MU, I_S, I_T_AT, OcpSpec, augmented_step, build_ocp1

HORIZONS = (10, 20, 40, 60)


@pytest.fixture(scope="module")
def short_run(p2016):
    return run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=10), N_sim=4))


def test_single_step_is_open_loop_solve(solved_n10, p2016):
    _, result = solved_n10
    run = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=10), N_sim=1))
    assert run.steps == 1
    np.testing.assert_allclose(run.states[0], result.states[0], rtol=1e-12)
    assert run.lambda_E[0] == pytest.approx(result.multiplier(1, I_E), rel=1e-12)
    assert run.lambda_C[0] == pytest.approx(result.multiplier(1, I_C), rel=1e-12)
    assert not run.shift_gaps


def test_short_run_records_every_step(short_run):
    assert short_run.steps == 4
    assert short_run.statuses == [SolverStatus.OPTIMAL] * 4
    np.testing.assert_array_equal(np.rint(short_run.state_matrix[:, I_INDEX]), [1, 2, 3, 4])
    np.testing.assert_array_equal(short_run.years, [2015, 2020, 2025, 2030])
    assert len(short_run.lambda_E) == len(short_run.lambda_C) == len(short_run.results) == 4
    assert len(short_run.shift_gaps) == 3
    assert all(np.isfinite(short_run.shift_gaps))


def test_applied_states_follow_the_dynamics(short_run, p2016):
    X = short_run.state_matrix
    for i in range(1, X.shape[0]):
        predicted = augmented_step(X[i - 1], X[i, [I_MU, I_S]], p2016)
        np.testing.assert_allclose(predicted, X[i], rtol=1e-6, atol=1e-8)


def test_multipliers_come_from_second_slot(short_run):
    for i in range(1, short_run.steps):
        previous = short_run.results[i - 1]
        assert short_run.lambda_E[i] == previous.multiplier(2, I_E)
        assert short_run.lambda_C[i] == previous.multiplier(2, I_C)


def test_compat_flag_uses_first_slot(p2016):
    run = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=10), N_sim=2, compat_lambda_c=True))
    assert run.lambda_C[1] == run.results[0].multiplier(1, I_C)
    assert run.lambda_E[1] == run.results[0].multiplier(2, I_E)


def test_scc_positive(short_run):
    assert np.all(short_run.scc > 0)
    assert np.all(np.array(short_run.lambda_E) < 0)


def test_cold_start_reaches_same_states(short_run, p2016):
    cold = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=10), N_sim=4, warm_start=False))
    np.testing.assert_allclose(cold.state_matrix[:, I_MU], short_run.state_matrix[:, I_MU], atol=1e-4)


def test_on_step_callback(p2016):
    seen = []
    run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=5), N_sim=2), on_step=lambda i, run: seen.append(run.steps))
    assert seen == [1, 2]


def test_trajectory_and_welfare(short_run):
    table = short_run.trajectory()
    assert list(table["step"]) == [1, 2, 3, 4]
    assert short_run.welfare == short_run.state_matrix[-1, -1]
    assert len(short_run.summaries()) == 4


@pytest.mark.parametrize("N_sim, horizon", [(0, 10), (2.5, 10), (3, 0)])
def test_invalid_config(p2016, N_sim, horizon):
    with pytest.raises(ProblemError):
        MpcConfig(spec=OcpSpec(params=p2016, horizon=horizon), N_sim=N_sim)


def test_failing_step_carries_partial_run(p2016):
    with pytest.raises(SolverError) as excinfo:
        run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=5, T_max=0.95), N_sim=3))
    assert excinfo.value.status == SolverStatus.INFEASIBLE
    assert excinfo.value.partial.steps == 0


def test_cap_holds_along_closed_loop(p2016):
    run = run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=20, T_max=2.5), N_sim=3))
    assert np.all(run.state_matrix[:, I_T_AT] <= 2.5 + 1e-6)
    for result in run.results:
        assert np.max(result.states[:, I_T_AT]) <= 2.5 + 1e-6


@pytest.fixture(scope="module")
def reference_n120(p2016):
    result = solve(build_ocp1(OcpSpec(params=p2016, horizon=120)))
    assert result.optimal
    return result


@pytest.fixture(scope="module")
def horizon_sweep(p2016):
    return {N: run_mpc(MpcConfig(spec=OcpSpec(params=p2016, horizon=N), N_sim=40)) for N in HORIZONS}


@pytest.mark.slow
def test_long_horizon_closed_loop_tracks_open_loop(horizon_sweep, reference_n120):
    X = horizon_sweep[60].state_matrix
    ref = reference_n120.states[:40]
    np.testing.assert_allclose(X[:, I_T_AT], ref[:, I_T_AT], atol=0.05)
    np.testing.assert_allclose(X[:, I_MU], ref[:, I_MU], atol=0.05)
    np.testing.assert_allclose(X[:, I_S], ref[:, I_S], atol=0.01)


@pytest.mark.slow
def test_first_step_scc_approaches_long_horizon_value(horizon_sweep, reference_n120):
    lam_E, lam_C = reference_n120.multiplier(1, I_E), reference_n120.multiplier(1, I_C)
    reference = -1000.0 * lam_E / lam_C
    gaps = [abs(horizon_sweep[N].scc[0] - reference) for N in HORIZONS]
    assert all(b <= a + 1e-3 * reference for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.03 * reference


@pytest.mark.slow
def test_trajectory_error_shrinks_with_horizon(horizon_sweep, reference_n120):
    ref = reference_n120.states[:40]
    errors = [np.max(np.abs(horizon_sweep[N].state_matrix[:, I_T_AT] - ref[:, I_T_AT])) for N in HORIZONS]
    assert all(b <= a + 1e-6 for a, b in zip(errors, errors[1:]))


@pytest.mark.slow
def test_closed_loop_welfare_nondecreasing_in_horizon(horizon_sweep):
    welfare = [horizon_sweep[N].welfare for N in HORIZONS]
    assert all(b >= a - 1e-6 * abs(a) for a, b in zip(welfare, welfare[1:]))
