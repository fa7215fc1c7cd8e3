import math

import numpy as np
import pytest

from phmc_coupling.models import (
    build_model,
    circle_loop,
    constant_path,
    discrete_potential,
    pimd_build,
    pimd_continuum_trace,
    pimd_eigenvalues,
    tps_build,
    tps_eigenvalues,
)
from phmc_coupling.potentials import potential_library
from phmc_coupling.spectral import GRID, SpectralVector


def test_tps_continuum_eigenvalues():
    continuum, _ = tps_eigenvalues(2.0, 5)
    k = np.arange(1, 6)
    np.testing.assert_allclose(continuum, (2.0 / (k * np.pi)) ** 2, rtol=1e-15)


def test_tps_single_node_discrete_eigenvalue():
    continuum, discrete = tps_eigenvalues(math.pi, 1)
    assert continuum[0] == pytest.approx(1.0)
    assert discrete[0] == pytest.approx(math.pi**2 / 8.0, rel=1e-14)


def test_pimd_first_frequency_is_exactly_inverse_a():
    continuum, discrete = pimd_eigenvalues(1.3, 0.7, 9)
    assert continuum[0] == discrete[0] == 1.0 / 0.7


def test_pimd_continuum_second_frequency():
    continuum, _ = pimd_eigenvalues(2 * math.pi, 1.0, 8)
    assert continuum[1] == pytest.approx(0.5, rel=1e-14)
    assert continuum[2] == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("m", [1, 2, 3, 8, 15, 32])
def test_matrix_eigenvalues_match_formula(m):
    for model in (tps_build(1.3, 2, m), pimd_build(1.7, 0.1, 2, m)):
        dense = np.sort(np.linalg.eigvalsh(model.covariance_matrix()))[::-1]
        formula = model.covariance.eigenvalues
        np.testing.assert_allclose(dense, formula, rtol=1e-10)


@pytest.mark.parametrize("build", [lambda: tps_build(1.0, 2, 6), lambda: pimd_build(1.0, 0.5, 2, 7), lambda: pimd_build(1.0, 0.5, 2, 8)])
def test_basis_is_orthonormal_in_weighted_product(build):
    basis = build().basis
    gram = basis.weight * basis.matrix @ basis.matrix.T
    np.testing.assert_allclose(gram, np.eye(basis.points), atol=1e-12)


@pytest.mark.parametrize("build", [tps_build, pimd_build])
def test_fast_transform_agrees_with_dense(build, rng):
    args = (1.0, 2, 9) if build is tps_build else (1.0, 0.3, 2, 10)
    dense = build(*args)
    fast = build(*args, fast=True)
    grid = rng.standard_normal((3, dense.dim))
    np.testing.assert_allclose(fast.to_eigen(grid), dense.to_eigen(grid), atol=1e-12)
    coeffs = rng.standard_normal((3, dense.dim))
    np.testing.assert_allclose(fast.to_grid(coeffs), dense.to_grid(coeffs), atol=1e-12)


def test_eigen_grid_roundtrip_preserves_norm(rng, tps_gaussian):
    coeffs = rng.standard_normal(tps_gaussian.dim)
    grid = tps_gaussian.to_grid(coeffs)
    assert tps_gaussian.weight * np.sum(grid**2) == pytest.approx(np.sum(coeffs**2), rel=1e-12)


def test_discrete_potential_zero(tps_gaussian, rng):
    x = SpectralVector(rng.standard_normal(tps_gaussian.dim), tps_gaussian.weight, GRID)
    value, grad = discrete_potential(tps_gaussian, x)
    assert value == 0.0
    np.testing.assert_array_equal(grad.coefficients, 0.0)


def test_discrete_potential_quadratic_is_half_weighted_norm(rng):
    model = tps_build(1.0, 2, 7, potential=potential_library("quadratic", {"scale": 1.0}))
    x = SpectralVector(rng.standard_normal(model.dim), model.weight, GRID)
    value, _ = discrete_potential(model, x)
    assert value == pytest.approx(0.5 * x.inner(x), rel=1e-12)


def test_discrete_potential_gradient_matches_finite_differences(rng):
    potential = potential_library("normal-mixture", {"means": [[-1.0, 0.5], [1.0, 0.0]], "sigma": 0.8})
    model = tps_build(1.0, 2, 5, start=np.array([0.0, 0.0]), end=np.array([1.0, 1.0]), potential=potential)
    grid = rng.standard_normal(model.dim)
    _, grad = discrete_potential(model, SpectralVector(grid, model.weight, GRID))
    step = 1e-6
    fd = np.empty(model.dim)
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = step
        hi, _ = discrete_potential(model, SpectralVector(grid + e, model.weight, GRID))
        lo, _ = discrete_potential(model, SpectralVector(grid - e, model.weight, GRID))
        fd[i] = (hi - lo) / (2 * step)
    np.testing.assert_allclose(grad.coefficients, fd, rtol=1e-6, atol=1e-9)


def test_constant_path_nodes():
    model = tps_build(1.0, 2, 6, start=np.array([0.0, 0.0]), end=np.array([2.0, 2.0]))
    state = constant_path(model, np.array([1.0, -1.0]))
    np.testing.assert_allclose(model.path(state), np.tile([1.0, -1.0], (6, 1)), atol=1e-12)


def test_circle_loop_radius():
    model = pimd_build(1.0, 0.1, 2, 16)
    loop = model.path(circle_loop(model, np.array([1.0, 1.0]), 2.0))
    np.testing.assert_allclose(np.linalg.norm(loop - [1.0, 1.0], axis=-1), 2.0, rtol=1e-12)


def test_circle_loop_needs_two_dimensions():
    with pytest.raises(ValueError):
        circle_loop(pimd_build(1.0, 0.1, 1, 8), np.array([0.0]), 1.0)


def test_pimd_trace_converges_to_continuum():
    beta, a, d = 1.0, 0.1, 1
    gaps = [abs(pimd_build(beta, a, d, m).covariance.trace() - pimd_continuum_trace(beta, a, d)) for m in (64, 256, 1024)]
    assert max(gaps) < 1e-2
    assert gaps[2] < 1e-3


def test_drift_constants_of_mixture(tps_mixture):
    drift = tps_mixture.drift()
    lam1 = tps_mixture.covariance.eigenvalues[0]
    assert drift.L == pytest.approx(1.0 + lam1 * tps_mixture.potential.L_G)
    assert drift.K == 0.5
    assert drift.A == pytest.approx(tps_mixture.potential.M_G**2 / math.pi**4)


def test_build_model_from_mapping():
    model = build_model(
        {"kind": "pimd", "d": 2, "m": 8, "beta": 1.0, "a": 0.1, "potential": {"name": "normal-mixture", "params": {"components": 3, "seed": 1}}}
    )
    assert model.kind == "pimd" and model.dim == 16
    assert model.potential.name == "normal-mixture"


def test_invalid_model_parameters():
    with pytest.raises(ValueError):
        tps_build(0.0, 1, 4)
    with pytest.raises(ValueError):
        pimd_build(1.0, 0.0, 1, 4)
