"""Explicit constants and conditions of the contraction theory.

Every function here is pure.  Constants that carry ``exp(+-R/T)`` factors are kept
as logarithms (``log_c``, ``log_C``, ``log_epsilon``) so realistic parameters neither
overflow nor underflow; :func:`mixing_time` is evaluated exactly with
:mod:`decimal` and returned as a Python integer.

Tagged dictionaries (``to_tagged_dict``) key every constant by the name of the
inequality or definition it comes from (``"Calpha"``, ``"crate"``, ``"R_TPS"``...);
the ``constants`` CLI command writes them to JSON.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from decimal import MAX_EMAX, ROUND_CEILING, Decimal, localcontext
from typing import Any, Dict, Mapping, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ConditionFailedError
from .metrics import AlphaNorm, SemimetricParams, semimetric_rho
from .models import PathModel, pimd_eigenvalues, pimd_frequencies, tps_eigenvalues
from .replicas import run_replicas
from .rng import RngStream
from .spectral import SobolevIndex, SpectralOperator, coefficients_of, hs_norm, weighted_trace

logger = logging.getLogger(__name__)

__all__ = [
    "DriftConstants",
    "ConditionReport",
    "TheoremConstants",
    "ApplicationConstants",
    "DiscreteConstants",
    "LemmaReport",
    "ContractionReport",
    "LyapunovReport",
    "lyapunov_precondition",
    "lyapunov_bound",
    "coupled_lyapunov_bound",
    "minimal_radius",
    "condition_a0a",
    "condition_a0a_ratio",
    "contraction_constants",
    "model_contraction_constants",
    "mixing_time",
    "mixing_time_bound",
    "wasserstein_bound",
    "tps_constants",
    "pimd_constants",
    "application_constants",
    "phmc_drift_constants",
    "discrete_constants",
    "dynamics_bounds",
    "coupled_dynamics_bounds",
    "eigenvalue_lemma_check",
    "empirical_contraction_check",
    "lyapunov_check",
    "CONTRACTION_COLUMNS",
    "LEMMA_COLUMNS",
]

# Relative slack for floating-point comparisons at the boundary of a condition.
TOL = 1e-12
LEMMA_TOL = 1e-12

ArrayOrFloat = Union[float, np.ndarray]

CONTRACTION_COLUMNS = ["pair", "rho", "mean_rho_next", "se", "ratio", "ratio_se", "bound", "margin", "ok"]
LEMMA_COLUMNS = ["k", "continuum", "discrete", "e1_lhs", "e1_rhs", "e2_lhs", "e2_rhs", "violation"]


def _exp(x: float) -> float:
    if x > 709.0:
        return math.inf
    return math.exp(x)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be positive and finite, got {value}")


# --------------------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftConstants:
    """Lipschitz constant ``L``, drift constants ``K``/``A`` and low-mode count ``n``."""

    L: float
    K: float
    A: float = 0.0
    n: int = 0

    def __post_init__(self) -> None:
        if not 1.0 <= self.L < math.inf:
            raise ValueError(f"L must be finite and >= 1, got {self.L}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not self.A >= 0:
            raise ValueError(f"A must be non-negative, got {self.A}")
        if self.n < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        if self.K > self.L * (1 + TOL):
            raise ValueError(f"K={self.K} exceeds L={self.L}; the drift condition forces K <= L")

    @classmethod
    def from_drift(cls, drift: Any) -> "DriftConstants":
        """Constants declared by a :class:`~phmc_coupling.flow.Drift`."""
        return cls(L=float(drift.L), K=float(drift.K), A=float(drift.A), n=int(drift.n))

    def to_dict(self) -> Dict[str, Any]:
        return {"L": self.L, "K": self.K, "A": self.A, "n": self.n}


@dataclass(frozen=True)
class ConditionReport:
    """Both sides of an inequality ``lhs <= rhs``."""

    name: str
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + TOL)

    @property
    def ratio(self) -> float:
        if self.rhs == math.inf:
            return 0.0
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def require(self) -> "ConditionReport":
        if not self.ok:
            raise ConditionFailedError(self.name, self.lhs, self.rhs)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"condition": self.name, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "ok": self.ok}


class RateConstants(Protocol):
    """What :func:`mixing_time` and :func:`wasserstein_bound` read."""

    T: float
    R: float
    log_c: float
    log_C: float
    log_epsilon: float

    @property
    def K(self) -> float: ...


def lyapunov_precondition(constants: DriftConstants, T: float) -> ConditionReport:
    return ConditionReport("L T^2 <= K/(48 L)", constants.L * T**2, constants.K / (48.0 * constants.L))


def lyapunov_bound(x_norm2: float | np.ndarray, constants: DriftConstants, trace_term: float, T: float) -> float | np.ndarray:
    """Foster-Lyapunov bound ``(1 - K T^2/2) |x|_s^2 + 5 (A + trace) T^2`` on ``E|X'|_s^2``.

    Raises:
        ConditionFailedError: If ``L T^2 > K / (48 L)``.
    """
    _positive(T=T)
    lyapunov_precondition(constants, T).require()
    return (1.0 - 0.5 * constants.K * T**2) * x_norm2 + 5.0 * (constants.A + trace_term) * T**2


def coupled_lyapunov_bound(
    x_norm2: float | np.ndarray, y_norm2: float | np.ndarray, constants: DriftConstants, trace_term: float, T: float
) -> float | np.ndarray:
    """Lyapunov bound for the sum ``|X'|_s^2 + |Y'|_s^2`` of a coupled pair."""
    _positive(T=T)
    lyapunov_precondition(constants, T).require()
    total = np.asarray(x_norm2) + np.asarray(y_norm2)
    value = (1.0 - 0.5 * constants.K * T**2) * total + 10.0 * (constants.A + trace_term) * T**2
    return float(value) if np.ndim(value) == 0 else value


def minimal_radius(constants: DriftConstants, trace_term: float, sigma_max: float) -> float:
    """Smallest admissible ``R = 8 sqrt(40) (A + trace)^{1/2} sigma_max L K^{-1/2}``."""
    return 8.0 * math.sqrt(40.0) * math.sqrt(constants.A + trace_term) * sigma_max * constants.L / math.sqrt(constants.K)


def condition_a0a_ratio(constants: DriftConstants, sigma_ratio: float, R: float, T: float, name: str = "A0A") -> ConditionReport:
    """Duration condition stated through ``sigma_max / sigma_min`` only."""
    L, K = constants.L, constants.K
    lhs = sigma_ratio * L * T**2
    second = math.inf if sigma_ratio == 0 else 1.0 / (256.0 * L * R**2 * sigma_ratio)
    return ConditionReport(name, lhs, min(K / (48.0 * L), second))


def condition_a0a(constants: DriftConstants, sigma_min: float, sigma_max: float, R: float, T: float) -> ConditionReport:
    """``(s_max/s_min) L T^2 <= min(K/(48 L), s_min/(256 L R^2 s_max))``."""
    _positive(sigma_min=sigma_min, sigma_max=sigma_max, R=R, T=T)
    return condition_a0a_ratio(constants, sigma_max / sigma_min, R, T)


# --------------------------------------------------------------------------------------
# General contraction bundle
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoremConstants:
    """Constants of the one-step contraction and of the Wasserstein/mixing bounds."""

    T: float
    drift: DriftConstants
    sigma_min: float
    sigma_max: float
    trace_term: float
    R: float
    R_min: float
    alpha: float
    gamma: float
    a: float
    log_epsilon: float
    log_c: float
    log_C: float
    condition: ConditionReport

    @property
    def K(self) -> float:
        return self.drift.K

    @property
    def epsilon(self) -> float:
        return _exp(self.log_epsilon)

    @property
    def c(self) -> float:
        return _exp(self.log_c)

    @property
    def C_cor(self) -> float:
        return _exp(self.log_C)

    def semimetric(self) -> SemimetricParams:
        return SemimetricParams(a=self.a, R=self.R, eps=self.epsilon)

    def to_tagged_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            **self.drift.to_dict(),
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "trace": self.trace_term,
            "Calpha": self.alpha,
            "Cgamma": self.gamma,
            "Ca": self.a,
            "Ce": self.epsilon,
            "log_Ce": self.log_epsilon,
            "ieq:R": self.R,
            "ieq:R_min": self.R_min,
            "crate": self.c,
            "log_crate": self.log_c,
            "Cdefi": self.C_cor,
            "log_Cdefi": self.log_C,
            "A0A": self.condition.to_dict(),
        }


def contraction_constants(
    drift: DriftConstants,
    sigma_min: float,
    sigma_max: float,
    trace_term: float,
    T: float,
    R: float | None = None,
    *,
    strict: bool = True,
) -> TheoremConstants:
    """Full constant bundle for duration *T*.

    Args:
        drift: Drift constants ``L``, ``K``, ``A``, ``n``.
        sigma_min: Smallest ``sqrt(lambda^s / lambda_tilde)`` over the low modes.
        sigma_max: Largest such value.
        trace_term: ``trace(C_tilde C^{-s})``.
        T: Duration.
        R: Radius; defaults to :func:`minimal_radius`.
        strict: Raise when the duration condition fails instead of only reporting it.

    Raises:
        ConditionFailedError: If *R* is below the minimal radius, or if the duration
            condition fails and *strict* is set.
    """
    _positive(sigma_min=sigma_min, sigma_max=sigma_max, trace_term=trace_term, T=T)
    R_min = minimal_radius(drift, trace_term, sigma_max)
    if R is None:
        R = R_min
    ConditionReport("ieq:R", R_min, R).require()
    condition = condition_a0a(drift, sigma_min, sigma_max, R, T)
    if strict:
        condition.require()
    elif not condition.ok:
        logger.info("Duration condition fails at T=%g (lhs/rhs = %.3g)", T, condition.ratio)

    total = drift.A + trace_term
    far = max(R, T)
    log_c = min(_log(drift.K * T**2 / 16.0), _log(T * far / 128.0) - far / T)
    log_C = max(_log(2.0 * T / sigma_min), math.log(23.0) + 0.5 * math.log(total) + R / (2.0 * T))
    log_epsilon = -math.log(160.0) - math.log(total) - R / T
    return TheoremConstants(
        T=T,
        drift=drift,
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        trace_term=trace_term,
        R=R,
        R_min=R_min,
        alpha=4.0 * sigma_max * drift.L,
        gamma=min(1.0 / T, 1.0 / (4.0 * R)),
        a=1.0 / T,
        log_epsilon=log_epsilon,
        log_c=log_c,
        log_C=log_C,
        condition=condition,
    )


def _low_modes(model: PathModel, n: int) -> int:
    return n if n >= 1 else model.d


def model_contraction_constants(model: PathModel, T: float, R: float | None = None, *, strict: bool = False) -> TheoremConstants:
    """Contraction bundle from the actual discrete operator of *model* (``C_tilde = C``, s = 0)."""
    drift = DriftConstants.from_drift(model.drift())
    n = _low_modes(model, drift.n)
    sigma = model.covariance.eigenvalues[:n] ** -0.5
    return contraction_constants(
        drift,
        float(sigma.min()),
        float(sigma.max()),
        model.covariance.trace(),
        T,
        R,
        strict=strict,
    )


# --------------------------------------------------------------------------------------
# Mixing time and Wasserstein bound
# --------------------------------------------------------------------------------------


def _log_numerator(constants: RateConstants, M1: float) -> float:
    if M1 < 0:
        raise ValueError(f"M1 must be non-negative, got {M1}")
    tail = 0.25 / math.sqrt(constants.K) * _exp(-constants.R / (2.0 * constants.T))
    first = 0.0 if M1 == 0 else _exp(0.5 * constants.log_epsilon) * M1
    return constants.log_C + math.log1p(first + tail)


def mixing_time_bound(constants: RateConstants, delta: float, M1: float = 0.0) -> float:
    """Un-rounded ``(1/c) log(C (1 + sqrt(eps) M1 + K^{-1/2} e^{-R/(2T)}/4) / delta)``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    diff = _log_numerator(constants, M1) - math.log(delta)
    return diff * _exp(-constants.log_c)


def mixing_time(constants: RateConstants, delta: float, M1: float = 0.0) -> int:
    """Number of steps after which the Wasserstein distance to the target is below *delta*.

    Raises:
        ConditionFailedError: If ``T >= R``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not constants.T < constants.R:
        raise ConditionFailedError("T < R", constants.T, constants.R)
    log_num = _log_numerator(constants, M1)
    diff = log_num - math.log(delta)
    if diff <= TOL * max(1.0, abs(log_num)):
        return 0
    with localcontext() as ctx:
        ctx.prec = 60
        ctx.Emax = MAX_EMAX
        steps = Decimal(diff) * Decimal(-constants.log_c).exp()
        return int(steps.to_integral_value(rounding=ROUND_CEILING))


def wasserstein_bound(constants: RateConstants, k: int, M1: float = 0.0) -> float:
    """Right-hand side ``C (1 + sqrt(eps) M1 + K^{-1/2} e^{-R/(2T)}/4) e^{-c k}``."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return _exp(_log_numerator(constants, M1) - _exp(constants.log_c) * k)


# --------------------------------------------------------------------------------------
# TPS / PIMD pipelines
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ApplicationConstants:
    """Dimension-free constants of the TPS or PIMD contraction result.

    The ``*_bound`` fields are the a-priori bounds on ``sigma_max``, ``1/sigma_min``,
    their ratio and the trace of the discrete covariance that turn the model
    condition into the general duration condition.
    """

    model: str
    T: float
    kappa: float
    m_ell: int
    n: int
    m_star: int
    drift: DriftConstants
    R: float
    log_c: float
    log_C: float
    log_epsilon: float
    condition: ConditionReport
    sigma_max_bound: float
    sigma_min_inverse_bound: float
    sigma_ratio_bound: float
    trace_bound: float

    @property
    def K(self) -> float:
        return self.drift.K

    @property
    def c(self) -> float:
        return _exp(self.log_c)

    @property
    def C_cor(self) -> float:
        return _exp(self.log_C)

    @property
    def epsilon(self) -> float:
        return _exp(self.log_epsilon)

    @property
    def condition_ok(self) -> bool:
        return self.condition.ok

    def admits(self, m: int) -> bool:
        """Whether a discretisation with *m* nodes is covered (``m > m_star``)."""
        return m > self.m_star

    def implied_a0a(self) -> ConditionReport:
        """General duration condition evaluated at the a-priori sigma ratio bound."""
        return condition_a0a_ratio(self.drift, self.sigma_ratio_bound, self.R, self.T)

    def to_tagged_dict(self) -> Dict[str, Any]:
        tag = self.model.upper()
        return {
            "model": self.model,
            "T": self.T,
            "kappa": self.kappa,
            "m_ell": self.m_ell,
            "n": self.n,
            "m_star": self.m_star,
            "L": self.drift.L,
            "K": self.drift.K,
            "A": self.drift.A,
            f"R_{tag}": self.R,
            f"crate_{tag}": self.c,
            f"log_crate_{tag}": self.log_c,
            f"C_{tag}": self.C_cor,
            f"log_C_{tag}": self.log_C,
            f"eps_{tag}": self.epsilon,
            f"log_eps_{tag}": self.log_epsilon,
            f"A0A_{tag}": self.condition.to_dict(),
            "sigma_max_bound": self.sigma_max_bound,
            "sigma_min_inverse_bound": self.sigma_min_inverse_bound,
            "sigma_ratio_bound": self.sigma_ratio_bound,
            "trace_bound": self.trace_bound,
        }


def _application_rate(T: float, R: float) -> float:
    far = max(R, T)
    return min(_log(T**2 / 32.0), _log(T**2 * far / 128.0) - far / T)


def tps_constants(tau: float, d: int, M_G: float, L_G: float, T: float) -> ApplicationConstants:
    """Dimension-free constants for TPS with time horizon *tau* in dimension *d*."""
    _positive(tau=tau, T=T)
    if d < 1 or not 0 <= M_G < math.inf or not 0 <= L_G < math.inf:
        raise ValueError(f"need d >= 1 and finite non-negative M_G, L_G (d={d}, M_G={M_G}, L_G={L_G})")
    kappa = 2.0 * tau**2 * L_G / math.pi**2
    root = math.sqrt(3.0 * kappa)
    m_ell = math.floor(root)
    drift = DriftConstants(L=1.0 + kappa, K=0.5, A=tau**5 * M_G**2 / math.pi**4, n=m_ell * d)
    R = 16.0 * math.sqrt(20.0) * math.pi * math.sqrt(kappa) * (1 + kappa) * math.sqrt((tau / math.pi) ** 3 * M_G**2 + d)
    second = math.inf if root == 0 else 1.0 / (512.0 * root * (1 + kappa) * R**2)
    condition = ConditionReport("A0A_TPS", 2.0 * root * (1 + kappa) * T**2, min(1.0 / (96.0 * (1 + kappa)), second))
    log_C = max(
        _log(T * tau),
        math.log(23.0) + 0.5 * math.log(drift.A + d * tau**2 / 3.0) + R / (2.0 * T),
    )
    log_epsilon = -_log(tau**5 * M_G**2) - R / T
    return ApplicationConstants(
        model="tps",
        T=T,
        kappa=kappa,
        m_ell=m_ell,
        n=drift.n,
        m_star=math.ceil((m_ell + 1) * math.pi / 2.0),
        drift=drift,
        R=R,
        log_c=_application_rate(T, R),
        log_C=log_C,
        log_epsilon=log_epsilon,
        condition=condition,
        sigma_max_bound=math.sqrt(6.0 * L_G),
        sigma_min_inverse_bound=2.0 * tau / math.pi,
        sigma_ratio_bound=2.0 * m_ell,
        trace_bound=d * tau**2 / 3.0,
    )


def pimd_constants(beta: float, a: float, d: int, M_G: float, L_G: float, T: float) -> ApplicationConstants:
    """Dimension-free constants for PIMD at inverse temperature *beta* with mass shift *a*."""
    _positive(beta=beta, a=a, T=T)
    if d < 1 or not 0 <= M_G < math.inf or not 0 <= L_G < math.inf:
        raise ValueError(f"need d >= 1 and finite non-negative M_G, L_G (d={d}, M_G={M_G}, L_G={L_G})")
    kappa = 6.0 * L_G / a
    m_ell = math.ceil(math.sqrt(1.5 * L_G) * beta / math.pi)
    drift = DriftConstants(L=1.0 + kappa, K=0.5, A=0.5 * beta * M_G**2 / a**2, n=max(0, 2 * m_ell * d - d))
    R = 16.0 * math.sqrt(20.0) * (1 + kappa) ** 1.5 * math.sqrt(0.5 * beta * M_G**2 / a + 2.0 * d * (beta**2 * a + 1.0))
    condition = ConditionReport(
        "A0A_PIMD",
        (1 + kappa) ** 1.5 * T**2,
        min(1.0 / (96.0 * (1 + kappa)), 1.0 / (256.0 * (1 + kappa) ** 1.5 * R**2)),
    )
    trace_bound = 2.0 * d * (1.0 / a + beta**2)
    log_C = max(
        _log(2.0 * T * math.sqrt(a)),
        math.log(23.0) + 0.5 * math.log(drift.A + trace_bound) + R / (2.0 * T),
    )
    log_epsilon = -math.log(80.0) + 2.0 * math.log(a) - _log(beta * M_G**2) - R / T
    return ApplicationConstants(
        model="pimd",
        T=T,
        kappa=kappa,
        m_ell=m_ell,
        n=drift.n,
        m_star=math.ceil(2.0 * math.pi * m_ell),
        drift=drift,
        R=R,
        log_c=_application_rate(T, R),
        log_C=log_C,
        log_epsilon=log_epsilon,
        condition=condition,
        sigma_max_bound=math.sqrt(a + 6.0 * L_G),
        sigma_min_inverse_bound=1.0 / math.sqrt(a),
        sigma_ratio_bound=math.sqrt(1.0 + kappa),
        trace_bound=trace_bound,
    )


def application_constants(model: PathModel, T: float) -> ApplicationConstants:
    """:func:`tps_constants` or :func:`pimd_constants` for the parameters of *model*."""
    pot = model.potential
    if model.kind == "tps":
        return tps_constants(model.tau, model.d, pot.M_G, pot.L_G, T)
    if model.kind == "pimd":
        return pimd_constants(model.beta, model.a, model.d, pot.M_G, pot.L_G, T)
    raise ValueError(f"no dimension-free constants for model kind {model.kind!r}")


# --------------------------------------------------------------------------------------
# Supplementary constants
# --------------------------------------------------------------------------------------


def phmc_drift_constants(C: SpectralOperator, L_g: float, *, s: float = 0.0, K: float = 0.5, A: float = 0.0) -> DriftConstants:
    """``L = 1 + lambda_1^{1-s} L_g`` and ``n`` = number of modes with ``lambda^{1-s} >= 1/(3 L_g)``."""
    if L_g < 0:
        raise ValueError(f"L_g must be non-negative, got {L_g}")
    scaled = C.power(1.0 - s)
    n = int(np.count_nonzero(scaled >= 1.0 / (3.0 * L_g))) if L_g > 0 else 0
    return DriftConstants(L=1.0 + float(scaled[0]) * L_g, K=K, A=A, n=n)


@dataclass(frozen=True)
class DiscreteConstants:
    """Dimension-dependent ``C_m`` and ``eps_m`` of the discrete operator."""

    sigma_min: float
    sigma_max: float
    trace: float
    A: float
    R: float
    log_C: float
    log_epsilon: float

    @property
    def C(self) -> float:
        return _exp(self.log_C)

    @property
    def epsilon(self) -> float:
        return _exp(self.log_epsilon)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "trace": self.trace,
            "A": self.A,
            "R": self.R,
            "C_m": self.C,
            "log_C_m": self.log_C,
            "eps_m": self.epsilon,
            "log_eps_m": self.log_epsilon,
        }


def discrete_constants(model: PathModel, T: float, R: float | None = None) -> DiscreteConstants:
    """``C_m``/``eps_m`` of *model* at radius *R* (default: the model's dimension-free R)."""
    _positive(T=T)
    if R is None:
        R = application_constants(model, T).R
    drift = model.drift()
    n = _low_modes(model, int(drift.n))
    eig = model.covariance.eigenvalues
    sigma = eig[:n] ** -0.5
    trace = model.covariance.trace()
    total = float(drift.A) + trace
    return DiscreteConstants(
        sigma_min=float(sigma.min()),
        sigma_max=float(sigma.max()),
        trace=trace,
        A=float(drift.A),
        R=R,
        log_C=max(_log(2.0 * T / float(sigma.min())), math.log(23.0) + 0.5 * math.log(total) + R / (2.0 * T)),
        log_epsilon=-math.log(160.0) - math.log(total) - R / T,
    )


def dynamics_bounds(x_norm: ArrayOrFloat, x_plus_tv_norm: ArrayOrFloat, v_norm: ArrayOrFloat, L: float, t: float) -> Dict[str, ArrayOrFloat]:
    """A-priori bounds on the flow up to time *t* started at ``(x, v)``.

    Keys: ``q_deviation`` bounds ``sup |q_r - (x + r v)|``, ``v_deviation`` bounds
    ``sup |v_r - v|``, ``q_sup`` and ``v_sup`` bound ``sup |q_r|`` and ``sup |v_r|``.
    Norms may be arrays with one entry per trajectory.
    """
    big = np.maximum(x_norm, x_plus_tv_norm)
    return {
        "q_deviation": L * t**2 * big,
        "v_deviation": L * t * (1 + L * t**2) * big,
        "q_sup": 2.0 * big,
        "v_sup": v_norm + 2.0 * L * t * big,
    }


def coupled_dynamics_bounds(dx_norm: ArrayOrFloat, dx_plus_tdu_norm: ArrayOrFloat, L: float, t: float) -> Dict[str, ArrayOrFloat]:
    """A-priori bounds on the difference of two flows with differences ``dx``/``du``."""
    big = np.maximum(dx_norm, dx_plus_tdu_norm)
    return {
        "q_deviation": L * t**2 * big,
        "v_deviation": L * t * (1 + L * t**2) * big,
        "q_sup": (1 + L * t**2) * big,
    }


# --------------------------------------------------------------------------------------
# Eigenvalue comparison
# --------------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LemmaReport:
    model: str
    m: int
    frame: pd.DataFrame

    @property
    def max_violation(self) -> float:
        return float(self.frame["violation"].max()) if len(self.frame) else 0.0

    @property
    def ok(self) -> bool:
        return self.max_violation <= LEMMA_TOL


def _violation(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, (lhs - rhs) / np.maximum(1.0, np.abs(rhs)))


def eigenvalue_lemma_check(model: str, params: Mapping[str, float], m: int) -> LemmaReport:
    """Compare discrete and continuum eigenvalues frequency by frequency.

    For TPS (params ``tau``) every ``k = 1..m`` is checked against
    ``0 <= Lambda - lambda <= lambda k^2 pi^2 / (6 (m+1)^2)`` and
    ``sqrt(Lambda_1/Lambda_k) <= sqrt(lambda_1/lambda_k) (1 + pi^2/(16 (m+1)^2))``.
    For PIMD (params ``beta``, ``a``) frequencies up to ``ceil((m+1)/2)`` are checked
    against ``0 <= Lambda - lambda <= 2 lambda theta_k^2`` and the unfactored ratio bound.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if model == "tps":
        tau = float(params["tau"])
        continuum, discrete = tps_eigenvalues(tau, m)
        k = np.arange(1, m + 1)
        e1_rhs = continuum * k**2 * np.pi**2 / (6.0 * (m + 1) ** 2)
        factor = 1.0 + np.pi**2 / (16.0 * (m + 1) ** 2)
    elif model == "pimd":
        beta, a = float(params["beta"]), float(params["a"])
        freqs = pimd_frequencies(m)
        _, first = np.unique(freqs, return_index=True)
        continuum_all, discrete_all = pimd_eigenvalues(beta, a, m)
        f = freqs[first]
        keep = f <= math.ceil((m + 1) / 2) - 1
        f, continuum, discrete = f[keep], continuum_all[first][keep], discrete_all[first][keep]
        k = f + 1
        theta = f * np.pi / m
        e1_rhs = continuum * 2.0 * theta**2
        factor = 1.0
    else:
        raise ValueError(f"model must be 'tps' or 'pimd', got {model!r}")
    e1_lhs = discrete - continuum
    e2_lhs = np.sqrt(discrete[0] / discrete)
    e2_rhs = np.sqrt(continuum[0] / continuum) * factor
    violation = np.maximum.reduce(
        [
            _violation(e1_lhs, e1_rhs),
            _violation(np.zeros_like(e1_lhs), e1_lhs),
            _violation(e2_lhs, e2_rhs),
        ]
    )
    frame = pd.DataFrame(
        {
            "k": k,
            "continuum": continuum,
            "discrete": discrete,
            "e1_lhs": e1_lhs,
            "e1_rhs": e1_rhs,
            "e2_lhs": e2_lhs,
            "e2_rhs": e2_rhs,
            "violation": violation,
        },
        columns=LEMMA_COLUMNS,
    )
    return LemmaReport(model, m, frame)


# --------------------------------------------------------------------------------------
# Monte Carlo checks
# --------------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContractionReport:
    frame: pd.DataFrame
    bound: float

    @property
    def ok(self) -> bool:
        return bool(self.frame["ok"].all())

    @property
    def worst_margin(self) -> float:
        return float(self.frame["margin"].min())


def empirical_contraction_check(
    kernel: Any,
    constants: TheoremConstants,
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
    replicas: int,
    rng: RngStream,
    *,
    s: SobolevIndex | float = 0.0,
    workers: int | None = None,
    progress: bool = False,
) -> ContractionReport:
    """Monte Carlo estimate of ``E rho(X', Y') / rho(x, y)`` for each pair.

    A pair passes when the ratio is at most ``exp(-c)`` plus three standard errors.
    Failures are reported in the frame, not raised.

    Args:
        kernel: A :class:`~phmc_coupling.coupling.CouplingKernel`.
        constants: Bundle supplying ``alpha``, ``a``, ``R``, ``epsilon`` and ``c``.
        pairs: Starting states ``(x, y)`` in eigen coordinates.
        replicas: Coupled transitions per pair.
        rng: Parent stream; pair *i* uses ``rng.child(i)``.
    """
    from .coupling import CoupledPair, coupled_step

    if replicas < 2:
        raise ValueError("at least two replicas are needed for a standard error")
    s_index = s if isinstance(s, SobolevIndex) else SobolevIndex(float(s))
    norm = AlphaNorm(constants.alpha, kernel.split, kernel.base.C, kernel.base.C_tilde, s_index)
    params = constants.semimetric()
    bound = _exp(-constants.c)

    def run(task: Tuple[int, np.ndarray, np.ndarray]) -> Dict[str, Any]:
        index, x, y = task
        x = np.asarray(coefficients_of(x), dtype=float)
        y = np.asarray(coefficients_of(y), dtype=float)
        rho = float(semimetric_rho(x, y, norm, params))
        start = CoupledPair.start(
            np.broadcast_to(x, (replicas, x.size)), np.broadcast_to(y, (replicas, y.size)), kernel
        )
        after = coupled_step(start, kernel, rng.child(index))
        values = np.asarray(semimetric_rho(after.X, after.Y, norm, params))
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(replicas))
        ratio = mean / rho if rho > 0 else 0.0
        ratio_se = se / rho if rho > 0 else 0.0
        margin = bound + 3.0 * ratio_se - ratio
        return {
            "pair": index,
            "rho": rho,
            "mean_rho_next": mean,
            "se": se,
            "ratio": ratio,
            "ratio_se": ratio_se,
            "bound": bound,
            "margin": margin,
            "ok": margin >= 0.0,
        }

    tasks = [(i, x, y) for i, (x, y) in enumerate(pairs)]
    rows = run_replicas(run, tasks, workers=workers, progress=progress, desc="contraction")
    frame = pd.DataFrame(rows, columns=CONTRACTION_COLUMNS)
    failed = int((~frame["ok"]).sum()) if len(frame) else 0
    if failed:
        logger.warning("Contraction check failed for %d of %d pairs", failed, len(frame))
    return ContractionReport(frame, bound)


@dataclass(frozen=True)
class LyapunovReport:
    x_norm2: float
    mean: float
    se: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound + 3.0 * self.se - self.mean

    @property
    def ok(self) -> bool:
        return self.margin >= 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_norm2": self.x_norm2,
            "mean": self.mean,
            "se": self.se,
            "bound": self.bound,
            "margin": self.margin,
            "ok": self.ok,
        }


def lyapunov_check(
    kernel: Any,
    x: np.ndarray,
    constants: DriftConstants,
    replicas: int,
    rng: RngStream,
    s: SobolevIndex | float = 0.0,
) -> LyapunovReport:
    """Monte Carlo estimate of ``E|X'|_s^2`` from *x* against :func:`lyapunov_bound`.

    Args:
        kernel: Exact (non-Metropolis) :class:`~phmc_coupling.sampler.PhmcKernel`.
    """
    from .sampler import phmc_step

    if replicas < 2:
        raise ValueError("at least two replicas are needed for a standard error")
    trace = weighted_trace(kernel.C_tilde, kernel.C, s)
    x = np.asarray(coefficients_of(x), dtype=float)
    x_norm2 = float(hs_norm(x, kernel.C, s)) ** 2
    bound = float(lyapunov_bound(x_norm2, constants, trace, kernel.T))
    after = phmc_step(np.broadcast_to(x, (replicas, x.size)).copy(), kernel, rng)
    values = np.asarray(hs_norm(after, kernel.C, s)) ** 2
    return LyapunovReport(
        x_norm2=x_norm2,
        mean=float(values.mean()),
        se=float(values.std(ddof=1) / math.sqrt(replicas)),
        bound=bound,
    )
