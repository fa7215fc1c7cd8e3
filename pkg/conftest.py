"""Shared pytest fixtures: seeded streams and small desk models."""

from __future__ import annotations

import pytest

from phmc_coupling.models import pimd_build, tps_build
from phmc_coupling.potentials import potential_library
from phmc_coupling.rng import RngStream


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance checks (minutes)")


@pytest.fixture
def rng() -> RngStream:
    return RngStream(12345)


@pytest.fixture
def tps_gaussian():
    """TPS with G = 0, d = 1, m = 8."""
    return tps_build(1.0, 1, 8)


@pytest.fixture
def tps_mixture():
    """TPS desk model: d = 1, m = 32, two-component normal mixture at +-1."""
    potential = potential_library("normal-mixture", {"means": [[-1.0], [1.0]], "sigma": 1.0})
    return tps_build(1.0, 1, 32, potential=potential)


@pytest.fixture
def pimd_mixture():
    """PIMD desk model: d = 2, m = 16, seeded twenty-component normal mixture."""
    potential = potential_library("normal-mixture", {"components": 20, "low": 0.0, "high": 10.0, "seed": 7})
    return pimd_build(1.0, 0.1, 2, 16, potential=potential)
