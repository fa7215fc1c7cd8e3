import math

import numpy as np
import pytest

from phmc_coupling.errors import UnknownPotentialError
from phmc_coupling.potentials import audit_point_potential, available_potentials, girsanov_potential, potential_library
from phmc_coupling.rng import RngStream


def _fd_gradient(potential, u, step=1e-6):
    out = np.empty_like(u)
    for i in range(u.shape[-1]):
        e = np.zeros(u.shape[-1])
        e[i] = step
        out[..., i] = (potential.value(u + e) - potential.value(u - e)) / (2 * step)
    return out


def test_library_names():
    assert {"zero", "quadratic", "normal-mixture", "laplace-mixture", "banana", "three-well"} <= set(available_potentials())


def test_unknown_potential():
    with pytest.raises(UnknownPotentialError, match="nope"):
        potential_library("nope")


def test_single_component_mixture_is_quadratic_at_origin():
    pot = potential_library("normal-mixture", {"means": [[0.0, 0.0]], "sigma": 2.0})
    np.testing.assert_allclose(pot.gradient(np.zeros(2)), 0.0, atol=1e-15)
    u = np.array([1.0, -3.0])
    assert pot.value(u) - pot.value(np.zeros(2)) == pytest.approx(0.5 * np.sum(u**2) / 4.0)
    assert pot.M_G == 0.0


@pytest.mark.parametrize(
    "name, params",
    [
        ("banana", {"sigma": 1.5, "curvature": 0.7}),
        ("normal-mixture", {"components": 5, "seed": 3}),
        ("laplace-mixture", {"components": 4, "seed": 3}),
        ("three-well", {}),
    ],
)
def test_gradient_matches_finite_differences(name, params):
    pot = potential_library(name, params)
    u = RngStream(4).standard_normal((20, 2)) * 2.0
    np.testing.assert_allclose(pot.gradient(u), _fd_gradient(pot, u), rtol=1e-6, atol=1e-6)


def test_banana_minimum_at_one_one():
    pot = potential_library("banana", {"sigma": 1.0, "curvature": 2.0})
    np.testing.assert_allclose(pot.gradient(np.array([1.0, 1.0])), 0.0, atol=1e-14)
    assert pot.value(np.array([1.0, 1.0])) == 0.0


def test_seeded_mixture_means_on_rectangle():
    pot = potential_library("normal-mixture", {"components": 20, "low": 0.0, "high": 10.0, "seed": 7})
    means = np.asarray(pot.params["means"])
    assert means.shape == (20, 2)
    assert np.all((means >= 0.0) & (means <= 10.0))
    again = potential_library("normal-mixture", {"components": 20, "low": 0.0, "high": 10.0, "seed": 7})
    np.testing.assert_array_equal(np.asarray(again.params["means"]), means)


def test_audit_normal_mixture_constants():
    pot = potential_library("normal-mixture", {"means": [[-1.0], [1.0]], "sigma": 1.0})
    audit = audit_point_potential(pot, RngStream(5), n_points=2000)
    assert audit.within_bound
    assert audit.grad_at_origin == pytest.approx(0.0, abs=1e-15)
    assert audit.fd_max_rel_error < 1e-6


def test_girsanov_potential_of_quadratic_landscape():
    # Psi = |u|^2 / 2 gives G = |u|^2 / 2 - d / 2
    pot = girsanov_potential(lambda u: np.asarray(u, dtype=float), lambda u: np.full(np.shape(u)[:-1], 2.0), dim=2)
    u = np.array([[0.3, -1.2]])
    assert pot.value(u)[0] == pytest.approx(0.5 * np.sum(u**2) - 1.0)
    np.testing.assert_allclose(pot.gradient(u), u, rtol=1e-6)


def test_infinite_constants_are_declared_for_non_lipschitz_potentials():
    assert math.isinf(potential_library("banana").L_G)
