import numpy as np
import pytest

from phmc_coupling import tuning
from phmc_coupling.errors import BracketError
from phmc_coupling.models import tps_build
from phmc_coupling.potentials import potential_library
from phmc_coupling.sampler import PhmcKernel
from phmc_coupling.tuning import TRACE_COLUMNS, measure_acceptance, tune_stepsize


def test_gaussian_target_keeps_the_full_duration(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 0.7, 0.1)
    result = tune_stepsize(kernel, trials=100)
    assert result.dt == 0.7
    assert result.acceptance == 1.0
    assert len(result.trace) == 1


def test_acceptance_is_deterministic_in_dt(tps_mixture):
    kernel = PhmcKernel.for_model(tps_mixture, 1.0, 0.1)
    assert measure_acceptance(kernel, 0.3, 200, seed=4) == measure_acceptance(kernel, 0.3, 200, seed=4)


def test_tuned_step_reaches_target(tps_mixture):
    kernel = PhmcKernel.for_model(tps_mixture, 2.0, 0.1)
    result = tune_stepsize(kernel, target=0.99, trials=200, seed=1)
    assert 0 < result.dt <= 2.0
    assert result.acceptance >= 0.99
    assert list(result.trace.columns) == TRACE_COLUMNS
    assert result.trace["iteration"].tolist() == list(range(len(result.trace)))


def test_unreachable_target_raises(tps_mixture, monkeypatch):
    monkeypatch.setattr(tuning, "measure_acceptance", lambda *args, **kwargs: 0.5)
    kernel = PhmcKernel.for_model(tps_mixture, 1.0, 0.1)
    with pytest.raises(BracketError):
        tune_stepsize(kernel, trials=50)


def test_tuning_arguments(tps_gaussian):
    with pytest.raises(ValueError):
        tune_stepsize(PhmcKernel.for_model(tps_gaussian, 1.0, 0.1, metropolis=False))
    with pytest.raises(ValueError):
        tune_stepsize(PhmcKernel.for_model(tps_gaussian, 1.0, 0.1), target=1.0)


@pytest.fixture
def tps_quadratic():
    return tps_build(1.0, 1, 16, potential=potential_library("quadratic", {"scale": 20.0}))


def test_acceptance_falls_as_the_step_grows(tps_quadratic):
    kernel = PhmcKernel.for_model(tps_quadratic, 1.0, 0.1)
    sweep = [measure_acceptance(kernel, dt, 1000, seed=2) for dt in (0.01, 0.03, 0.1, 0.3, 0.6, 1.0)]
    assert sweep[0] > sweep[-1]
    assert np.all(np.diff(sweep) <= 0.01)


def test_bisection_trace_is_monotone(tps_quadratic):
    kernel = PhmcKernel.for_model(tps_quadratic, 1.0, 0.1)
    result = tune_stepsize(kernel, target=0.99, trials=1000, seed=3)
    trace = result.trace.sort_values("dt")
    assert len(trace) > 1
    assert np.all(np.diff(trace["acceptance"].to_numpy()) <= 0.01)
