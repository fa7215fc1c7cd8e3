import math

import numpy as np
import pytest

from phmc_coupling.rng import RngStream
from phmc_coupling.sampler import (
    DETERMINISTIC,
    GEOMETRIC,
    CsvChainSink,
    DurationRule,
    Energy,
    PhmcKernel,
    energy,
    phmc_step,
    randomized_phmc_step,
    run_chain,
)
from phmc_coupling.spectral import sample_gaussian


def test_quarter_turn_returns_the_velocity(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, math.pi / 2, 0.1, metropolis=False)
    x = RngStream(3).standard_normal(tps_gaussian.dim)
    xi = sample_gaussian(tps_gaussian.covariance, RngStream(7)).coefficients
    out = phmc_step(x, kernel, RngStream(7))
    np.testing.assert_allclose(out.coefficients, xi, atol=1e-15)


def test_gaussian_target_is_always_accepted(tps_gaussian, rng):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1)
    result = randomized_phmc_step(np.zeros((50, tps_gaussian.dim)), kernel, rng)
    assert np.all(result.accepted)
    np.testing.assert_array_equal(result.accept_prob, 1.0)


def test_geometric_step_count_mean(tps_gaussian, rng):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1)
    result = randomized_phmc_step(np.zeros((20_000, tps_gaussian.dim)), kernel, rng)
    steps = np.asarray(result.steps)
    assert steps.min() >= 1
    p = 0.1
    se = math.sqrt(1 - p) / p / math.sqrt(steps.size)
    assert abs(steps.mean() - 10.0) <= 3 * se


def test_metropolis_probabilities_are_probabilities(tps_mixture, rng):
    kernel = PhmcKernel.for_model(tps_mixture, 1.0, 0.2)
    x = sample_gaussian(tps_mixture.covariance, rng, size=100).coefficients
    result = randomized_phmc_step(x, kernel, rng)
    prob = np.asarray(result.accept_prob)
    assert np.all((prob >= 0.0) & (prob <= 1.0))
    assert prob.mean() > 0.5


def test_energy_of_origin_is_potential_only(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1, metropolis=False)
    zero = np.zeros(tps_gaussian.dim)
    assert energy(zero, zero, kernel) == 0.0
    e1 = np.zeros(tps_gaussian.dim)
    e1[0] = 1.0
    assert energy(zero, e1, kernel) == pytest.approx(0.5 / tps_gaussian.covariance.eigenvalues[0])


def test_energy_must_be_finite():
    with pytest.raises(ValueError):
        Energy(math.inf)


def test_kernel_validation(tps_gaussian):
    with pytest.raises(ValueError):
        DurationRule("uniform")
    with pytest.raises(ValueError):
        DurationRule(GEOMETRIC, 0.5)
    with pytest.raises(ValueError):
        PhmcKernel.for_model(tps_gaussian, 1.0, 0.1, metropolis=True, duration=DETERMINISTIC)
    with pytest.raises(ValueError):
        PhmcKernel.for_model(tps_gaussian, 0.0, 0.1, metropolis=False)
    with pytest.raises(ValueError):
        phmc_step(np.zeros(tps_gaussian.dim), PhmcKernel.for_model(tps_gaussian, 1.0, 0.1), RngStream(0))


def test_with_duration_rescales_mean_steps(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1).with_duration(2.0)
    assert kernel.duration.mean_steps == pytest.approx(20.0)
    assert kernel.with_step(0.5).duration.mean_steps == pytest.approx(4.0)


def test_exact_chain_reproduces_prior_variance(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, math.pi / 2, 0.1, metropolis=False)
    stats = run_chain(np.zeros((200, tps_gaussian.dim)), kernel, 50, RngStream(9))
    assert stats.n_samples == 200 * 50
    lam = tps_gaussian.covariance.eigenvalues
    se = lam * math.sqrt(2.0 / stats.n_samples)
    assert np.all(np.abs(stats.variance - lam) <= 5 * se)
    assert stats.acceptance_rate == 1.0


def test_chain_csv_is_byte_identical_for_equal_seeds(tmp_path, tps_mixture):
    kernel = PhmcKernel.for_model(tps_mixture, 0.5, 0.1)
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        with CsvChainSink(path, tps_mixture.dim) as sink:
            run_chain(np.zeros(tps_mixture.dim), kernel, 20, RngStream(5), sink)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    header = paths[0].read_text().splitlines()[0]
    assert header.startswith("step,accepted,k,energy,q_0,")
    assert len(paths[0].read_text().splitlines()) == 21


def test_sink_thinning(tmp_path, tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1)
    with CsvChainSink(tmp_path / "c.csv", tps_gaussian.dim, thin=5) as sink:
        run_chain(np.zeros((2, tps_gaussian.dim)), kernel, 10, RngStream(1), sink)
    rows = (tmp_path / "c.csv").read_text().splitlines()[1:]
    assert [row.split(",")[0] for row in rows] == ["5", "5", "10", "10"]


def test_burn_in_and_invalid_length(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 1.0, 0.1)
    stats = run_chain(np.zeros(tps_gaussian.dim), kernel, 10, RngStream(1), burn_in=4)
    assert stats.n_samples == 6
    assert stats.to_dict()["n_steps"] == 10
    with pytest.raises(ValueError):
        run_chain(np.zeros(tps_gaussian.dim), kernel, 0, RngStream(1))
