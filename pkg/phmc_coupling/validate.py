"""Property suite behind the ``validate`` command.

Each check returns a :class:`CheckResult` with the measured statistic and the
threshold it is compared to; :func:`run_suite` collects them into a table.  The
quick suite covers the exact and closed-form properties plus the cheaper Monte
Carlo checks; ``full=True`` adds the Lyapunov and one-step contraction checks on
the TPS normal-mixture desk model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp
from tqdm import tqdm

from .coupling import SHIFT, CoupledPair, CouplingKernel, coupled_step, coupling_failure_probability
from .flow import EXACT_LINEAR, Drift, IntegratorConfig, PhasePoint, flow_ode
from .models import PathModel, pimd_build, tps_build
from .potentials import potential_library
from .rng import RngStream
from .sampler import DETERMINISTIC, DurationRule, PhmcKernel, phmc_step, run_chain
from .spectral import ModeSplit, SpectralOperator, sample_gaussian
from .theory import (
    ApplicationConstants,
    DriftConstants,
    application_constants,
    eigenvalue_lemma_check,
    empirical_contraction_check,
    lyapunov_check,
    model_contraction_constants,
    pimd_constants,
    tps_constants,
)

logger = logging.getLogger(__name__)

__all__ = ["CheckResult", "CHECK_COLUMNS", "run_suite", "desk_mixture_model"]

CHECK_COLUMNS = ["check", "ok", "value", "threshold", "detail"]


@dataclass(frozen=True)
class CheckResult:
    check: str
    ok: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {"check": self.check, "ok": self.ok, "value": self.value, "threshold": self.threshold, "detail": self.detail}


def desk_mixture_model(m: int = 32, tau: float = 1.0) -> PathModel:
    """TPS desk model: d = 1, two-component normal mixture at +-1."""
    potential = potential_library("normal-mixture", {"means": [[-1.0], [1.0]], "sigma": 1.0})
    return tps_build(tau, 1, m, potential=potential)


def _exact_kernel(model: PathModel, T: float, drift: Drift | None = None, dt: float | None = None) -> PhmcKernel:
    drift = drift or model.drift()
    scheme = EXACT_LINEAR if drift.is_linear else "symmetric-splitting"
    return PhmcKernel(
        T=T,
        duration=DurationRule(DETERMINISTIC),
        integrator=IntegratorConfig(dt or T, scheme),
        C=model.covariance,
        C_tilde=model.covariance,
        drift=drift,
        model=model,
    )


# --------------------------------------------------------------------------------------
# Exact properties
# --------------------------------------------------------------------------------------


def check_eigenvalue_lemmas(max_m: int = 512) -> CheckResult:
    worst = 0.0
    cases = [("tps", {"tau": 1.0}), ("tps", {"tau": 3.0}), ("pimd", {"beta": 1.0, "a": 0.1}), ("pimd", {"beta": 2.0, "a": 1.0})]
    for model, params in cases:
        for m in range(1, max_m + 1):
            worst = max(worst, eigenvalue_lemma_check(model, params, m).max_violation)
    return CheckResult("eigenvalue-lemmas", worst <= 1e-12, worst, 1e-12, f"m = 1..{max_m}, TPS and PIMD")


def check_matrix_agreement(max_m: int = 32) -> CheckResult:
    worst = 0.0
    for m in range(1, max_m + 1):
        for model in (tps_build(1.3, 2, m), pimd_build(1.7, 0.1, 2, m)):
            dense = np.sort(np.linalg.eigvalsh(model.covariance_matrix()))[::-1]
            formula = np.sort(model.covariance.eigenvalues)[::-1]
            worst = max(worst, float(np.max(np.abs(dense - formula) / formula)))
    return CheckResult("matrix-eigenvalues", worst <= 1e-10, worst, 1e-10, f"dense oracle, m <= {max_m}")


def check_dimension_freeness(T: float = 0.01) -> CheckResult:
    potential = potential_library("normal-mixture", {"means": [[-1.0, 0.0], [1.0, 0.0]], "sigma": 1.0})
    bundles = []
    for m in (64, 256, 1024):
        bundles.append(application_constants(tps_build(1.0, 2, m, potential=potential), T).to_tagged_dict())
        bundles.append(application_constants(pimd_build(1.0, 0.1, 2, m, potential=potential), T).to_tagged_dict())
    same = all(b == bundles[i % 2] for i, b in enumerate(bundles))
    return CheckResult("dimension-free-constants", same, float(not same), 0.0, "m in 64, 256, 1024")


def check_implication_sweep(rng: RngStream, points: int = 1000) -> CheckResult:
    """Model duration conditions imply the general one at the a-priori sigma bounds."""
    failures = 0
    draws = 0
    while draws < points:
        u = rng.uniform(6)
        d = 1 + int(4 * u[0])
        M_G = 5.0 * u[1]
        L_G = 0.1 + 10.0 * u[2]
        if draws % 2 == 0:
            tau = 0.5 + 4.5 * u[3]

            def make(T: float) -> ApplicationConstants:
                return tps_constants(tau, d, M_G, L_G, T)

        else:
            beta, a = 0.5 + 4.5 * u[3], 0.1 + 1.9 * u[4]

            def make(T: float) -> ApplicationConstants:
                return pimd_constants(beta, a, d, M_G, L_G, T)

        trial = make(1.0)
        if trial.m_ell < 1:
            continue
        # lhs grows like T^2 and rhs does not depend on T
        T = math.sqrt(trial.condition.rhs / trial.condition.lhs) * (0.1 + 0.89 * u[5])
        consts = make(T)
        draws += 1
        if consts.condition_ok and not consts.implied_a0a().ok:
            failures += 1
    return CheckResult("condition-implication", failures == 0, float(failures), 0.0, f"{points} random parameter points")


def check_splitting(rng: RngStream) -> List[CheckResult]:
    model = desk_mixture_model(m=8)
    drift = model.drift()
    x = sample_gaussian(model.covariance, rng).coefficients
    v = sample_gaussian(model.covariance, rng).coefficients
    z = PhasePoint.of(x, v, model.weight)
    cfg = IntegratorConfig(0.01)

    fwd = flow_ode(z, 1.0, cfg, drift)
    back = flow_ode(fwd.flip(), 1.0, cfg, drift).flip()
    rev = float(max(np.max(np.abs(back.q.coefficients - x)), np.max(np.abs(back.v.coefficients - v))))

    # zero potential routed through the splitting kernels rather than the closed form
    zero = Drift(model.covariance, gradient=lambda q: np.zeros_like(q))
    out = flow_ode(PhasePoint.of(x, v, model.weight), 0.7, IntegratorConfig(0.05), zero)
    exact = (math.cos(0.7) * x + math.sin(0.7) * v, -math.sin(0.7) * x + math.cos(0.7) * v)
    exact_err = float(max(np.max(np.abs(out.q.coefficients - exact[0])), np.max(np.abs(out.v.coefficients - exact[1]))))

    ref = flow_ode(z, 1.0, IntegratorConfig(0.1 / 64), drift).q.coefficients
    err1 = np.linalg.norm(flow_ode(z, 1.0, IntegratorConfig(0.1), drift).q.coefficients - ref)
    err2 = np.linalg.norm(flow_ode(z, 1.0, IntegratorConfig(0.05), drift).q.coefficients - ref)
    order = math.log2(err1 / err2) if err2 > 0 else math.inf
    return [
        CheckResult("splitting-reversibility", rev <= 1e-10, rev, 1e-10),
        CheckResult("splitting-exact-gaussian", exact_err <= 1e-12, exact_err, 1e-12),
        CheckResult("splitting-order", 1.7 <= order <= 2.3, order, 2.0, "expected in [1.7, 2.3]"),
    ]


# --------------------------------------------------------------------------------------
# Coupling properties
# --------------------------------------------------------------------------------------


def check_exact_meeting(rng: RngStream, replicas: int = 1000, durations=(0.1, 0.5, 1.0)) -> CheckResult:
    model = tps_build(1.0, 1, 16)
    split = ModeSplit(4)
    worst = 0.0
    shifts = 0
    for i, T in enumerate(durations):
        for j, (drift, rule) in enumerate(((model.drift(), "cot-T"), (Drift(model.covariance, free=True), "one-over-T"))):
            kernel = CouplingKernel(_exact_kernel(model, T, drift), rule, split, meet_threshold=1e-300)
            stream = rng.child(i, j)
            x = sample_gaussian(model.covariance, stream, size=replicas).coefficients
            y = sample_gaussian(model.covariance, stream, size=replicas).coefficients * 0.01 + x
            pair = coupled_step(CoupledPair.start(x, y, kernel), kernel, stream)
            hit = np.asarray(pair.branch) == SHIFT
            shifts += int(hit.sum())
            if hit.any():
                diff = (pair.X.coefficients - pair.Y.coefficients)[hit, : split.n]
                worst = max(worst, float(np.max(np.linalg.norm(diff, axis=-1))))
    return CheckResult("exact-low-mode-meeting", worst <= 1e-12 and shifts > 0, worst, 1e-12, f"{shifts} shift events")


def check_failure_law(rng: RngStream, cases: int = 10, n_samples: int = 100_000) -> CheckResult:
    C_low = SpectralOperator(tps_build(1.0, 1, 16).covariance.eigenvalues[:4], "low")
    worst = 0.0
    ok = True
    for i in range(cases):
        stream = rng.child(i)
        gamma = 0.1 + 1.9 * float(stream.uniform())
        z = stream.standard_normal(4) * np.sqrt(C_low.eigenvalues) * (0.05 + 1.5 * float(stream.uniform()))
        est = coupling_failure_probability(z, gamma, C_low, n_samples, stream)
        slack = 3.0 * est.se + 1e-12
        gap = abs(est.empirical - est.tv_exact)
        worst = max(worst, gap / slack)
        ok &= gap <= slack and est.empirical <= est.bound + slack
    return CheckResult("coupling-failure-law", ok, worst, 1.0, "|empirical - exact| / (3 SE)")


def check_marginals(rng: RngStream, samples: int = 10_000) -> CheckResult:
    model = desk_mixture_model(m=16)
    base = _exact_kernel(model, 0.5, dt=0.05)
    kernel = CouplingKernel(base, "one-over-T", ModeSplit(3))
    x = sample_gaussian(model.covariance, rng.child(0)).coefficients
    y = sample_gaussian(model.covariance, rng.child(1)).coefficients
    coupled = coupled_step(
        CoupledPair.start(np.broadcast_to(x, (samples, x.size)), np.broadcast_to(y, (samples, y.size)), kernel),
        kernel,
        rng.child(2),
    ).Y.coefficients
    independent = phmc_step(np.broadcast_to(y, (samples, y.size)).copy(), base, rng.child(3)).coefficients
    modes = [0, 1, 2, model.dim - 3, model.dim - 2, model.dim - 1]
    pvalues = [ks_2samp(coupled[:, k], independent[:, k]).pvalue for k in modes]
    threshold = 0.01 / len(modes)
    return CheckResult("coupling-marginals", min(pvalues) >= threshold, float(min(pvalues)), threshold, "KS p-value, 3 low + 3 high modes")


def check_stationarity(rng: RngStream, chains: int = 200, steps: int = 600, burn_in: int = 100) -> CheckResult:
    """Metropolis chain on a quadratic TPS landscape against its Gaussian target.

    With ``G(u) = |u|^2 / 2`` the target is Gaussian with mode variances
    ``lambda_j / (1 + lambda_j)``, which serves as the closed-form oracle in
    place of a dense covariance inversion. The quick suite keeps
    ``chains * (steps - burn_in)`` = 10^5 correlated samples per mode, enough
    for the 5% tolerance; the full suite runs 2000 chains (10^6 samples).
    """
    model = tps_build(1.0, 1, 8, potential=potential_library("quadratic", {"scale": 1.0}))
    lam = model.covariance.eigenvalues
    target = lam / (1.0 + lam)
    kernel = PhmcKernel.for_model(model, 1.0, 0.1)
    x0 = sample_gaussian(model.covariance, rng.child(0), size=chains).coefficients
    stats = run_chain(x0, kernel, steps, rng.child(1), burn_in=burn_in)
    worst = float(np.max(np.abs(stats.variance / target - 1.0)))
    return CheckResult("stationary-variances", worst <= 0.05, worst, 0.05, f"acceptance {stats.acceptance_rate:.3f}")


# --------------------------------------------------------------------------------------
# Monte Carlo theory checks
# --------------------------------------------------------------------------------------


def check_lyapunov(rng: RngStream, replicas: int = 10_000, points: int = 10) -> CheckResult:
    model = desk_mixture_model(m=32)
    drift = DriftConstants.from_drift(model.drift())
    T = 0.9 * math.sqrt(drift.K / (48.0 * drift.L**2))
    kernel = _exact_kernel(model, T, dt=T / 10)
    worst = math.inf
    for i in range(points):
        stream = rng.child(i)
        x = sample_gaussian(model.covariance, stream).coefficients * (1.0 + 4.0 * float(stream.uniform()))
        report = lyapunov_check(kernel, x, drift, replicas, stream)
        worst = min(worst, report.margin)
    return CheckResult("foster-lyapunov", worst >= 0.0, worst, 0.0, "min(bound + 3 SE - mean)")


def check_contraction(rng: RngStream, replicas: int = 10_000, pairs: int = 20) -> CheckResult:
    model = desk_mixture_model(m=32)
    trial = model_contraction_constants(model, 1.0)
    T = 0.9 * math.sqrt(trial.condition.rhs / trial.condition.lhs)
    constants = model_contraction_constants(model, T, strict=True)
    n = max(constants.drift.n, model.d)
    kernel = CouplingKernel(_exact_kernel(model, T, dt=T), constants.gamma, ModeSplit(n), meet_threshold=1e-300)
    starts = []
    for i in range(pairs):
        stream = rng.child(i)
        x = sample_gaussian(model.covariance, stream).coefficients
        y = x + T * stream.standard_normal(x.size) * np.sqrt(model.covariance.eigenvalues)
        starts.append((x, y))
    report = empirical_contraction_check(kernel, constants, starts, replicas, rng.child(pairs))
    return CheckResult("one-step-contraction", report.ok, report.worst_margin, 0.0, "min(exp(-c) + 3 SE - ratio)")


def run_suite(seed: int, *, full: bool = False, progress: bool = False) -> pd.DataFrame:
    """Run the property suite and return one row per check."""
    rng = RngStream(seed)
    checks: List[Callable[[], CheckResult | List[CheckResult]]] = [
        check_eigenvalue_lemmas,
        check_matrix_agreement,
        check_dimension_freeness,
        lambda: check_implication_sweep(rng.child(1)),
        lambda: check_splitting(rng.child(2)),
        lambda: check_exact_meeting(rng.child(3)),
        lambda: check_failure_law(rng.child(4)),
        lambda: check_marginals(rng.child(5)),
        lambda: check_stationarity(rng.child(8)),
    ]
    if full:
        checks[-1] = lambda: check_stationarity(rng.child(8), chains=2000)
        checks += [lambda: check_lyapunov(rng.child(6)), lambda: check_contraction(rng.child(7))]
    rows = []
    for check in tqdm(checks, disable=not progress, desc="validate", leave=False):
        result = check()
        for item in result if isinstance(result, list) else [result]:
            level = logging.INFO if item.ok else logging.WARNING
            logger.log(level, "%s: %s (value %.3g, threshold %.3g)", item.check, "ok" if item.ok else "FAILED", item.value, item.threshold)
            rows.append(item.to_dict())
    return pd.DataFrame(rows, columns=CHECK_COLUMNS)
