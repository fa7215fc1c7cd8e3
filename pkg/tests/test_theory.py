import math
from types import SimpleNamespace

import numpy as np
import pytest

from phmc_coupling.coupling import CouplingKernel
from phmc_coupling.errors import ConditionFailedError
from phmc_coupling.rng import RngStream
from phmc_coupling.sampler import PhmcKernel
from phmc_coupling.spectral import ModeSplit
from phmc_coupling.theory import (
    LEMMA_COLUMNS,
    ConditionReport,
    DriftConstants,
    application_constants,
    condition_a0a,
    contraction_constants,
    coupled_dynamics_bounds,
    discrete_constants,
    dynamics_bounds,
    eigenvalue_lemma_check,
    empirical_contraction_check,
    lyapunov_bound,
    lyapunov_check,
    minimal_radius,
    mixing_time,
    mixing_time_bound,
    model_contraction_constants,
    phmc_drift_constants,
    pimd_constants,
    tps_constants,
    wasserstein_bound,
)

UNIT = DriftConstants(L=1.0, K=1.0)


# --------------------------------------------------------------------------------------
# Drift constants and conditions
# --------------------------------------------------------------------------------------


def test_drift_constants_validation():
    with pytest.raises(ValueError):
        DriftConstants(L=0.5, K=0.1)
    with pytest.raises(ValueError, match="K <= L"):
        DriftConstants(L=1.0, K=2.0)
    with pytest.raises(ValueError):
        DriftConstants(L=1.0, K=0.5, A=-1.0)


def test_condition_report():
    report = ConditionReport("x", 1.0, 2.0)
    assert report.ok and report.ratio == 0.5 and report.margin == 1.0
    with pytest.raises(ConditionFailedError) as err:
        ConditionReport("y", 3.0, 2.0).require()
    assert err.value.condition == "y" and err.value.ratio == 1.5


def test_lyapunov_bound_example():
    assert lyapunov_bound(0.0, UNIT, 1.0, 0.1) == pytest.approx(0.05)


def test_lyapunov_precondition_boundary():
    boundary = math.sqrt(1.0 / 48.0)
    lyapunov_bound(1.0, UNIT, 1.0, boundary)
    with pytest.raises(ConditionFailedError):
        lyapunov_bound(1.0, UNIT, 1.0, boundary * 1.01)


@pytest.mark.parametrize("T", [0.01, 0.05, 0.1])
def test_lyapunov_bound_covers_the_gaussian_flow(T):
    # U = 0: E|X'|^2 = cos^2 T |x|^2 + sin^2 T trace
    constants = DriftConstants(L=1.0, K=0.5)
    for x2 in (0.0, 1.0, 100.0):
        for trace in (0.1, 1.0):
            exact = math.cos(T) ** 2 * x2 + math.sin(T) ** 2 * trace
            assert exact <= lyapunov_bound(x2, constants, trace, T)


def test_lyapunov_check_on_gaussian_model(tps_gaussian):
    kernel = PhmcKernel.for_model(tps_gaussian, 0.09, 0.01, metropolis=False)
    x = np.full(tps_gaussian.dim, 0.5)
    report = lyapunov_check(kernel, x, DriftConstants(L=1.0, K=0.5), 4000, RngStream(6))
    assert report.ok
    assert report.to_dict()["bound"] == report.bound


def test_minimal_radius_reference():
    assert minimal_radius(UNIT, 1.0, 1.0) == pytest.approx(8 * math.sqrt(40), rel=1e-14)
    assert 8 * math.sqrt(40) == pytest.approx(50.596, abs=1e-3)


def test_contraction_constants_reference():
    bundle = contraction_constants(UNIT, 1.0, 1.0, 1.0, 0.01, strict=False)
    assert bundle.R == pytest.approx(50.596, abs=1e-3)
    assert bundle.alpha == 4.0
    assert bundle.a == pytest.approx(100.0)
    assert bundle.gamma == pytest.approx(1.0 / (4.0 * bundle.R))
    assert bundle.gamma == pytest.approx(0.004941, abs=1e-6)
    assert bundle.log_epsilon == pytest.approx(-math.log(160.0) - bundle.R / 0.01)
    assert not bundle.condition.ok


def test_contraction_constants_strict_and_radius():
    T = 0.9 * math.sqrt(1.0 / (256.0 * 2560.0))
    bundle = contraction_constants(UNIT, 1.0, 1.0, 1.0, T)
    assert bundle.condition.ok
    assert bundle.R == bundle.R_min
    with pytest.raises(ConditionFailedError):
        contraction_constants(UNIT, 1.0, 1.0, 1.0, 0.1)
    with pytest.raises(ConditionFailedError):
        contraction_constants(UNIT, 1.0, 1.0, 1.0, T, R=10.0)


def test_rate_is_positive_across_a_sweep():
    rng = RngStream(31)
    for _ in range(50):
        L = 1.0 + 5.0 * float(rng.uniform())
        drift = DriftConstants(L=L, K=0.5 * float(rng.uniform()) + 0.01, A=float(rng.uniform()))
        s_min = 0.5 + float(rng.uniform())
        s_max = s_min * (1.0 + 3.0 * float(rng.uniform()))
        trace = 0.1 + float(rng.uniform())
        R = minimal_radius(drift, trace, s_max)
        report = condition_a0a(drift, s_min, s_max, R, 1.0)
        T = 0.9 * math.sqrt(report.rhs / report.lhs)
        bundle = contraction_constants(drift, s_min, s_max, trace, T)
        assert bundle.log_c > -math.inf and math.isfinite(bundle.log_c)


def test_constants_are_pure():
    first = contraction_constants(UNIT, 1.0, 2.0, 1.0, 0.01, strict=False).to_tagged_dict()
    second = contraction_constants(UNIT, 1.0, 2.0, 1.0, 0.01, strict=False).to_tagged_dict()
    assert first == second
    assert {"Calpha", "Cgamma", "Ca", "Ce", "crate", "Cdefi", "A0A"} <= set(first)


# --------------------------------------------------------------------------------------
# Mixing time
# --------------------------------------------------------------------------------------


def _rates(T=0.5, R=2.0):
    return SimpleNamespace(T=T, R=R, K=0.5, log_c=math.log(0.1), log_C=math.log(3.0), log_epsilon=math.log(0.01))


def test_mixing_time_zero_at_the_numerator():
    rates = _rates()
    numerator = 3.0 * (1.0 + 0.25 / math.sqrt(0.5) * math.exp(-2.0))
    assert mixing_time(rates, numerator) == 0


def test_halving_delta_adds_log_two_over_c():
    rates = _rates()
    diff = mixing_time_bound(rates, 0.005) - mixing_time_bound(rates, 0.01)
    assert diff == pytest.approx(math.log(2.0) / 0.1, rel=1e-12)
    assert mixing_time(rates, 0.01) == math.ceil(mixing_time_bound(rates, 0.01))


def test_initial_moment_lengthens_mixing():
    rates = _rates()
    assert mixing_time(rates, 0.01, M1=10.0) > mixing_time(rates, 0.01)


def test_mixing_time_needs_T_below_R():
    with pytest.raises(ConditionFailedError):
        mixing_time(_rates(T=2.0, R=2.0), 0.01)
    with pytest.raises(ValueError):
        mixing_time(_rates(), 0.0)


def test_wasserstein_bound_decays_at_rate_c():
    rates = _rates()
    ratio = wasserstein_bound(rates, 11) / wasserstein_bound(rates, 1)
    assert ratio == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_astronomical_mixing_time_is_exact_integer():
    bundle = contraction_constants(UNIT, 1.0, 1.0, 1.0, 0.001)
    steps = mixing_time(bundle, 0.01)
    assert isinstance(steps, int) and steps > 10**1000


# --------------------------------------------------------------------------------------
# TPS and PIMD bundles
# --------------------------------------------------------------------------------------


def test_tps_gaussian_degenerate_case():
    bundle = tps_constants(1.0, 2, 1.0, 0.0, 0.1)
    assert bundle.kappa == 0.0 and bundle.m_ell == 0 and bundle.n == 0
    assert bundle.condition_ok


def test_tps_drift_assignments():
    tau, M_G, L_G = 2.0, 1.5, 3.0
    bundle = tps_constants(tau, 1, M_G, L_G, 0.01)
    kappa = 2 * tau**2 * L_G / math.pi**2
    assert bundle.kappa == pytest.approx(kappa)
    assert bundle.drift.L == pytest.approx(1.0 + kappa)
    assert bundle.drift.A == pytest.approx(tau**5 * M_G**2 / math.pi**4)
    assert bundle.m_ell == math.floor(math.sqrt(3 * kappa))
    assert bundle.m_star == math.ceil((bundle.m_ell + 1) * math.pi / 2)
    assert bundle.admits(bundle.m_star + 1) and not bundle.admits(bundle.m_star)


def test_pimd_degenerate_and_assignments():
    assert pimd_constants(1.0, 0.1, 2, 1.0, 0.0, 0.01).n == 0
    beta, a, M_G = 2.0, 0.5, 1.2
    bundle = pimd_constants(beta, a, 3, M_G, 1.0, 0.01)
    assert bundle.K == 0.5
    assert bundle.drift.A == pytest.approx(0.5 * beta * M_G**2 / a**2)
    assert bundle.n == 2 * bundle.m_ell * 3 - 3


def _application(which, u, d, M_G, L_G, T):
    if which == "tps":
        return tps_constants(0.5 + 2.5 * u, d, M_G, L_G, T)
    return pimd_constants(0.5 + 2.5 * u, 0.05 + u, d, M_G, L_G, T)


@pytest.mark.parametrize("which", ["tps", "pimd"])
def test_model_condition_implies_general_condition(which):
    rng = RngStream(17)
    for _ in range(200):
        u = float(rng.uniform())
        M_G = 3.0 * float(rng.uniform())
        L_G = 0.1 + 5.0 * float(rng.uniform())
        d = 1 + int(3 * float(rng.uniform()))
        probe = _application(which, u, d, M_G, L_G, 1.0).condition
        bundle = _application(which, u, d, M_G, L_G, 0.9 * math.sqrt(probe.rhs / probe.lhs))
        assert bundle.condition_ok
        assert bundle.implied_a0a().ok


def test_constants_are_dimension_free(tps_mixture):
    from phmc_coupling.models import tps_build

    bundles = [application_constants(tps_build(1.0, 1, m, potential=tps_mixture.potential), 0.01) for m in (64, 256)]
    assert bundles[0].to_tagged_dict() == bundles[1].to_tagged_dict()


def test_discrete_constant_below_dimension_free_constant(tps_mixture):
    T = 0.01
    dimension_free = application_constants(tps_mixture, T)
    discrete = discrete_constants(tps_mixture, T)
    assert discrete.R == dimension_free.R
    assert discrete.log_C <= dimension_free.log_C
    assert discrete.trace <= dimension_free.trace_bound


def test_model_contraction_constants_fall_back_to_d_low_modes(tps_gaussian):
    bundle = model_contraction_constants(tps_gaussian, 0.01)
    lam1 = tps_gaussian.covariance.eigenvalues[0]
    assert bundle.sigma_min == pytest.approx(lam1**-0.5)


def test_phmc_drift_constants():
    from phmc_coupling.spectral import SpectralOperator

    C = SpectralOperator(np.array([1.0, 0.5, 0.1]))
    drift = phmc_drift_constants(C, 1.0)
    assert drift.L == 2.0 and drift.n == 2
    assert phmc_drift_constants(C, 0.0).n == 0


def test_dynamics_bounds():
    bounds = dynamics_bounds(1.0, 2.0, 0.5, 2.0, 0.1)
    assert bounds["q_sup"] == 4.0
    assert bounds["q_deviation"] == pytest.approx(2.0 * 0.01 * 2.0)
    coupled = coupled_dynamics_bounds(1.0, 0.5, 2.0, 0.1)
    assert coupled["q_sup"] == pytest.approx(1.02)


# --------------------------------------------------------------------------------------
# Eigenvalue comparison and Monte Carlo checks
# --------------------------------------------------------------------------------------


def test_eigenvalue_lemma_single_node():
    report = eigenvalue_lemma_check("tps", {"tau": math.pi}, 1)
    assert list(report.frame.columns) == LEMMA_COLUMNS
    assert report.frame["continuum"].iloc[0] == pytest.approx(1.0)
    assert report.frame["discrete"].iloc[0] == pytest.approx(math.pi**2 / 8)
    assert report.ok


def test_pimd_zero_frequency_is_exact():
    report = eigenvalue_lemma_check("pimd", {"beta": 1.0, "a": 0.3}, 16)
    assert report.frame["e1_lhs"].iloc[0] == 0.0
    assert report.ok


@pytest.mark.parametrize("m", [1, 2, 3, 7, 64, 255, 512])
def test_eigenvalue_lemmas_hold(m):
    assert eigenvalue_lemma_check("tps", {"tau": 1.7}, m).ok
    assert eigenvalue_lemma_check("pimd", {"beta": 2.0, "a": 0.1}, m).ok


def test_eigenvalue_lemma_unknown_model():
    with pytest.raises(ValueError):
        eigenvalue_lemma_check("ring", {}, 4)


def test_contraction_ratio_is_zero_on_the_diagonal(tps_gaussian):
    constants = model_contraction_constants(tps_gaussian, 0.01)
    kernel = CouplingKernel(PhmcKernel.for_model(tps_gaussian, 0.01, 0.01, metropolis=False), "radius", ModeSplit(1), R=constants.R)
    x = np.ones(tps_gaussian.dim)
    report = empirical_contraction_check(kernel, constants, [(x, x)], 10, RngStream(2), workers=1)
    assert report.frame["ratio"].iloc[0] == 0.0
    assert report.ok


def test_unbounded_landscapes_have_no_constants():
    with pytest.raises(ValueError, match="finite"):
        tps_constants(1.0, 2, 1.0, math.inf, 0.1)
    with pytest.raises(ValueError, match="finite"):
        pimd_constants(1.0, 0.1, 2, math.inf, 1.0, 0.1)
    with pytest.raises(ValueError):
        DriftConstants(L=math.inf, K=0.5)
