import pytest

from phmc_coupling.rng import RngStream
from phmc_coupling.validate import (
    CHECK_COLUMNS,
    check_contraction,
    check_dimension_freeness,
    check_eigenvalue_lemmas,
    check_exact_meeting,
    check_failure_law,
    check_implication_sweep,
    check_lyapunov,
    check_marginals,
    check_matrix_agreement,
    check_splitting,
    check_stationarity,
    desk_mixture_model,
    run_suite,
)


def test_desk_model():
    model = desk_mixture_model(m=8)
    assert model.kind == "tps" and model.dim == 8


def test_closed_form_checks():
    for result in (check_eigenvalue_lemmas(max_m=64), check_matrix_agreement(max_m=12), check_dimension_freeness()):
        assert result.ok, result


def test_implication_sweep():
    result = check_implication_sweep(RngStream(1), points=200)
    assert result.ok and result.value == 0.0


def test_splitting_checks():
    results = check_splitting(RngStream(2))
    assert [r.check for r in results] == ["splitting-reversibility", "splitting-exact-gaussian", "splitting-order"]
    assert all(r.ok for r in results), results


def test_exact_meeting_check():
    result = check_exact_meeting(RngStream(3), replicas=200)
    assert result.ok, result


def test_failure_law_check():
    assert check_failure_law(RngStream(4), cases=3, n_samples=20_000).ok


def test_check_rows():
    row = check_eigenvalue_lemmas(max_m=4).to_dict()
    assert list(row) == CHECK_COLUMNS


@pytest.mark.slow
def test_marginal_check():
    assert check_marginals(RngStream(5), samples=4000).ok


@pytest.mark.slow
def test_quadratic_landscape_variances():
    result = check_stationarity(RngStream(8))
    assert result.ok, result


@pytest.mark.slow
def test_lyapunov_check():
    assert check_lyapunov(RngStream(6), replicas=2000, points=3).ok


@pytest.mark.slow
def test_contraction_check():
    assert check_contraction(RngStream(7), replicas=2000, pairs=5).ok


@pytest.mark.slow
def test_quick_suite_passes():
    frame = run_suite(11)
    assert list(frame.columns) == CHECK_COLUMNS
    assert frame["ok"].all(), frame[~frame["ok"]]
