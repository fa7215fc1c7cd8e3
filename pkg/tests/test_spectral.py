import math

import numpy as np
import pytest

from phmc_coupling.errors import DimensionMismatchError, ModeSplitError, RepresentationError
from phmc_coupling.models import tps_build
from phmc_coupling.rng import RngStream
from phmc_coupling.spectral import (
    GRID,
    ModeSplit,
    SobolevIndex,
    SpectralOperator,
    SpectralVector,
    dumps,
    hs_inner,
    hs_norm,
    loads,
    sample_gaussian,
    split,
    weighted_trace,
)

LAMBDA = SpectralOperator(np.array([1.0, 0.5, 0.25]), "C")


def test_hs_inner_plain_norm_at_s0():
    e1 = np.array([1.0, 0.0, 0.0])
    assert hs_inner(e1, e1, LAMBDA, 0.0) == 1.0


@pytest.mark.parametrize("s, expected", [(1.0 - 1e-15, 4.0), (-1.0, 0.25)])
def test_hs_inner_scales_by_eigenvalue_power(s, expected):
    e2 = np.array([0.0, 1.0, 0.0])
    assert hs_inner(e2, e2, LAMBDA, s) == pytest.approx(expected, rel=1e-12)


def test_sobolev_index_must_be_below_one():
    with pytest.raises(ValueError):
        SobolevIndex(1.0)


def test_parseval_per_mode_contributions(rng):
    x = rng.standard_normal(3)
    for s in (-1.0, 0.0, 0.5):
        expected = float(np.sum(LAMBDA.eigenvalues ** (-s) * x**2))
        assert hs_norm(x, LAMBDA, s) ** 2 == pytest.approx(expected, rel=1e-12)


def test_hs_inner_batched(rng):
    x = rng.standard_normal((5, 3))
    out = hs_inner(x, x, LAMBDA)
    assert out.shape == (5,)
    np.testing.assert_allclose(out, np.sum(x**2, axis=-1))


def test_dimension_mismatch_is_reported():
    with pytest.raises(DimensionMismatchError) as err:
        hs_norm(np.ones(2), LAMBDA)
    assert err.value.expected == 3 and err.value.actual == 2


def test_operator_rejects_non_positive_or_increasing():
    with pytest.raises(ValueError):
        SpectralOperator(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        SpectralOperator(np.array([0.5, 1.0]))


def test_grid_vector_rejected_where_eigen_expected():
    grid = SpectralVector(np.ones(3), 0.5, GRID)
    with pytest.raises(RepresentationError):
        hs_norm(grid, LAMBDA)


def test_grid_inner_product_uses_quadrature_weight():
    v = SpectralVector(np.array([1.0, 2.0]), 0.25, GRID)
    assert v.inner(v) == pytest.approx(0.25 * 5.0)


def test_sample_gaussian_unit_variance():
    xi = sample_gaussian(SpectralOperator(np.array([1.0])), RngStream(1), size=100_000).coefficients[:, 0]
    se = math.sqrt(2.0 / xi.size)
    assert abs(xi.var() - 1.0) <= 3 * se
    assert abs(xi.mean()) <= 3 / math.sqrt(xi.size)


def test_sample_gaussian_mode_variances():
    C = SpectralOperator(np.array([4.0, 1.0]))
    xi = sample_gaussian(C, RngStream(2), size=100_000).coefficients
    for j, lam in enumerate(C.eigenvalues):
        se = lam * math.sqrt(2.0 / xi.shape[0])
        assert abs(xi[:, j].var() - lam) <= 3 * se
        assert abs(xi[:, j].mean()) <= 3 * math.sqrt(lam / xi.shape[0])


def test_weighted_trace_plain():
    C = SpectralOperator(np.array([1.0, 0.5]))
    assert weighted_trace(C, C, 0.0) == 1.5


def test_weighted_trace_dimension_check():
    with pytest.raises(DimensionMismatchError):
        weighted_trace(SpectralOperator(np.ones(2)), LAMBDA)


def test_tps_continuum_trace_reference():
    model = tps_build(math.sqrt(6.0), 1, 8)
    assert model.continuum.analytic_trace == pytest.approx(1.0)


def test_split_examples():
    low, high = split(np.array([3.0, 5.0, 7.0]), ModeSplit(1))
    np.testing.assert_array_equal(low.coefficients, [3.0, 0.0, 0.0])
    np.testing.assert_array_equal(high.coefficients, [0.0, 5.0, 7.0])
    _, high = split(np.array([3.0, 5.0, 7.0]), ModeSplit(3))
    np.testing.assert_array_equal(high.coefficients, np.zeros(3))


def test_split_is_orthogonal(rng):
    x = rng.standard_normal(3)
    low, high = split(x, ModeSplit(2))
    for s in (0.0, 0.5):
        assert hs_norm(x, LAMBDA, s) ** 2 == pytest.approx(hs_norm(low, LAMBDA, s) ** 2 + hs_norm(high, LAMBDA, s) ** 2)


def test_mode_split_out_of_range():
    with pytest.raises(ModeSplitError):
        ModeSplit(0)
    with pytest.raises(ModeSplitError):
        split(np.zeros(3), ModeSplit(4))


def test_json_documents_exact_with_hex_floats(rng):
    vec = SpectralVector(rng.standard_normal((2, 3)), 1.0 / 3.0)
    back = loads(dumps(vec, hex_floats=True))
    np.testing.assert_array_equal(back.coefficients, vec.coefficients)
    assert back.weight == vec.weight
    op = loads(dumps(LAMBDA))
    np.testing.assert_array_equal(op.eigenvalues, LAMBDA.eigenvalues)
