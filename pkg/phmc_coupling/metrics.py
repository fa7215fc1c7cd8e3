"""Distances used to state and measure contraction of the coupling.

``||x||_alpha = ||C_tilde^{-1/2} x_low|| + alpha |x_high|_s``, the concave profile
``f(r) = (1 - exp(-a min(r, R))) / a`` and the semimetric
``rho(x, y) = sqrt(f(||x - y||_alpha) (1 + eps |x|_s^2 + eps |y|_s^2))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import pandas as pd
from scipy.stats import wasserstein_distance

from .rng import RngStream
from .spectral import ModeSplit, SobolevIndex, SpectralOperator, SpectralVector, coefficients_of, hs_norm

logger = logging.getLogger(__name__)

__all__ = [
    "AlphaNorm",
    "SemimetricParams",
    "alpha_norm",
    "f_eval",
    "f_left_derivative",
    "semimetric_rho",
    "empirical_wasserstein_decay",
    "marginal_wasserstein",
    "fit_decay_rate",
    "DECAY_COLUMNS",
]

DECAY_COLUMNS = ["step", "mean_distance", "se", "log_mean"]


@dataclass(frozen=True, eq=False)
class AlphaNorm:
    alpha: float
    split: ModeSplit
    C: SpectralOperator
    C_tilde: SpectralOperator
    s: SobolevIndex = field(default_factory=SobolevIndex)

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        self.split.validate(self.C.dim)

    @property
    def _sigma(self) -> np.ndarray:
        n = self.split.n
        return np.sqrt(self.C.power(self.s.s)[:n] / self.C_tilde.eigenvalues[:n])

    @property
    def sigma_min(self) -> float:
        return float(np.min(self._sigma))

    @property
    def sigma_max(self) -> float:
        return float(np.max(self._sigma))


@dataclass(frozen=True)
class SemimetricParams:
    a: float
    R: float
    eps: float = 0.0

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.R > 0):
            raise ValueError(f"a and R must be positive (a={self.a}, R={self.R})")
        if not self.eps >= 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")


Vector = Union[SpectralVector, np.ndarray]


def alpha_norm(x: Vector, cfg: AlphaNorm) -> np.ndarray | float:
    coeffs = coefficients_of(x)
    n = cfg.split.n
    low = np.sqrt(np.sum(coeffs[..., :n] ** 2 / cfg.C_tilde.eigenvalues[:n], axis=-1))
    high = np.sqrt(np.sum(cfg.C.power(-cfg.s.s)[n:] * coeffs[..., n:] ** 2, axis=-1))
    value = low + cfg.alpha * high
    return float(value) if np.ndim(value) == 0 else value


def f_eval(r: np.ndarray | float, params: SemimetricParams) -> np.ndarray | float:
    capped = np.minimum(np.asarray(r, dtype=float), params.R)
    value = -np.expm1(-params.a * capped) / params.a
    return float(value) if np.ndim(value) == 0 else value


def f_left_derivative(r: np.ndarray | float, params: SemimetricParams) -> np.ndarray | float:
    r = np.asarray(r, dtype=float)
    value = np.where(r <= params.R, np.exp(-params.a * r), 0.0)
    return float(value) if np.ndim(value) == 0 else value


def semimetric_rho(x: Vector, y: Vector, cfg: AlphaNorm, params: SemimetricParams) -> np.ndarray | float:
    xc, yc = coefficients_of(x), coefficients_of(y)
    dist = alpha_norm(xc - yc, cfg)
    weight = 1.0 + params.eps * (hs_norm(xc, cfg.C, cfg.s) ** 2 + hs_norm(yc, cfg.C, cfg.s) ** 2)
    value = np.sqrt(np.asarray(f_eval(dist, params)) * weight)
    return float(value) if np.ndim(value) == 0 else value


InitialLaw = Union[Vector, Callable[[RngStream, int], np.ndarray]]


def _initial(law: InitialLaw, rng: RngStream, replicas: int) -> np.ndarray:
    if callable(law):
        return np.asarray(law(rng, replicas), dtype=float)
    coeffs = coefficients_of(law)
    return np.broadcast_to(coeffs, (replicas, coeffs.shape[-1])).copy()


def empirical_wasserstein_decay(
    kernel,
    x0: InitialLaw,
    y0: InitialLaw,
    k_steps: int,
    replicas: int,
    rng: RngStream,
    s: SobolevIndex | float = 0.0,
) -> pd.DataFrame:
    """Mean coupled distance ``E|X_k - Y_k|_s`` for ``k = 0..k_steps``.

    The mean over coupled replicas is an upper bound on the L1 Wasserstein distance
    of the two marginal laws.  *x0*/*y0* are fixed states or samplers
    ``(rng, replicas) -> array``.

    Args:
        kernel: A :class:`~phmc_coupling.coupling.CouplingKernel`.
    """
    from .coupling import CoupledPair, coupled_step

    if replicas < 2:
        raise ValueError("at least two replicas are needed for a standard error")
    C = kernel.base.C
    pair = CoupledPair.start(_initial(x0, rng, replicas), _initial(y0, rng, replicas), kernel)
    rows = []
    for step in range(k_steps + 1):
        if step:
            pair = coupled_step(pair, kernel, rng)
        dist = np.asarray(hs_norm(pair.X.coefficients - pair.Y.coefficients, C, s))
        mean = float(dist.mean())
        rows.append(
            {
                "step": step,
                "mean_distance": mean,
                "se": float(dist.std(ddof=1) / math.sqrt(replicas)),
                "log_mean": math.log(mean) if mean > 0 else -math.inf,
            }
        )
    return pd.DataFrame(rows, columns=DECAY_COLUMNS)


def marginal_wasserstein(samples_a: np.ndarray, samples_b: np.ndarray) -> np.ndarray:
    """Per-mode 1-D Wasserstein distances between two sample clouds ``(n, N)``."""
    a = np.atleast_2d(samples_a)
    b = np.atleast_2d(samples_b)
    return np.array([wasserstein_distance(a[:, j], b[:, j]) for j in range(a.shape[1])])


def fit_decay_rate(series: pd.DataFrame, start: int = 0) -> float:
    """Least-squares slope of ``log_mean`` against ``step`` over finite entries."""
    frame = series[(series["step"] >= start) & np.isfinite(series["log_mean"])]
    if len(frame) < 2:
        return -math.inf
    slope, _ = np.polyfit(frame["step"].to_numpy(float), frame["log_mean"].to_numpy(float), 1)
    return float(slope)
