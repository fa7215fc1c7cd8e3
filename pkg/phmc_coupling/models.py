"""Finite-difference path models: transition path sampling (TPS) and path integral
molecular dynamics (PIMD).

Both models expose their covariance as a :class:`SpectralOperator` with analytic
eigenvalues, an analytic :class:`SpectralBasis` (sine basis for Dirichlet paths, real
Fourier basis for loops), and the discrete potential ``U_m = weight * sum_j G(x_j + M_j)``.
The sampler works in eigen coordinates that are orthonormal for the weighted inner
product, so velocities are simply ``N(0, covariance)`` there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Tuple

import numpy as np
from scipy import fft as sp_fft

from .flow import Drift
from .potentials import PointPotential, potential_library
from .spectral import EIGEN, GRID, SpectralBasis, SpectralOperator, SpectralVector

logger = logging.getLogger(__name__)

__all__ = [
    "PathModel",
    "TpsModel",
    "PimdModel",
    "tps_build",
    "pimd_build",
    "build_model",
    "discrete_potential",
    "tps_eigenvalues",
    "pimd_eigenvalues",
    "pimd_frequencies",
    "tps_continuum_trace",
    "pimd_continuum_trace",
    "constant_path",
    "circle_loop",
]


# --------------------------------------------------------------------------------------
# Eigenvalue formulas
# --------------------------------------------------------------------------------------


def tps_eigenvalues(tau: float, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-frequency ``(continuum, discrete)`` eigenvalues, k = 1..m.

    ``lambda_k = (tau / (k pi))^2`` and ``Lambda_k = lambda_k (theta_k / sin theta_k)^2``
    with ``theta_k = k pi / (2 (m + 1))``.
    """
    k = np.arange(1, m + 1, dtype=float)
    theta = k * np.pi / (2 * (m + 1))
    continuum = (tau / (k * np.pi)) ** 2
    discrete = continuum * (theta / np.sin(theta)) ** 2
    return continuum, discrete


def pimd_frequencies(m: int) -> np.ndarray:
    """Frequency index f of each real Fourier basis function, in basis order."""
    pairs = (m - 1) // 2
    freqs = [0]
    for f in range(1, pairs + 1):
        freqs.extend((f, f))
    if m % 2 == 0:
        freqs.append(m // 2)
    return np.asarray(freqs, dtype=int)


def pimd_eigenvalues(beta: float, a: float, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-basis-function ``(continuum, discrete)`` eigenvalues.

    Frequency f corresponds to ``k = f + 1``, ``omega_k = 2 f pi / beta`` and
    ``theta_k = f pi / m``; ``Lambda = 1 / (a + omega^2 sin^2(theta) / theta^2)``.
    """
    f = pimd_frequencies(m).astype(float)
    h = beta / m
    continuum = 1.0 / (a + (2 * np.pi * f / beta) ** 2)
    discrete = 1.0 / (a + (4.0 / h**2) * np.sin(np.pi * f / m) ** 2)
    return continuum, discrete


def tps_continuum_trace(tau: float, d: int) -> float:
    return d * tau**2 / 6.0


def pimd_continuum_trace(beta: float, a: float, d: int) -> float:
    root = math.sqrt(a)
    return d / (2 * a) + (d * beta / (4 * root)) * (1 + 2 / math.expm1(root * beta))


# --------------------------------------------------------------------------------------
# Bases
# --------------------------------------------------------------------------------------


def _sine_basis(tau: float, m: int, d: int, fast: bool) -> SpectralBasis:
    h = tau / (m + 1)
    idx = np.arange(1, m + 1, dtype=float)
    matrix = math.sqrt(2.0 / tau) * np.sin(np.outer(idx, idx) * np.pi / (m + 1))
    scale = math.sqrt(h)

    def forward(grid: np.ndarray) -> np.ndarray:
        return scale * sp_fft.dst(grid, type=1, axis=-2, norm="ortho")

    def inverse(coeffs: np.ndarray) -> np.ndarray:
        return sp_fft.dst(coeffs, type=1, axis=-2, norm="ortho") / scale

    return SpectralBasis(matrix, h, d, forward, inverse, use_fast=fast)


def _fourier_basis(beta: float, m: int, d: int, fast: bool) -> SpectralBasis:
    h = beta / m
    freqs = pimd_frequencies(m)
    j = np.arange(m, dtype=float)
    matrix = np.empty((m, m))
    matrix[0] = 1.0 / math.sqrt(beta)
    pairs = (m - 1) // 2
    for f in range(1, pairs + 1):
        phase = 2 * np.pi * f * j / m
        matrix[2 * f - 1] = math.sqrt(2.0 / beta) * np.cos(phase)
        matrix[2 * f] = math.sqrt(2.0 / beta) * np.sin(phase)
    if m % 2 == 0 and m > 1:
        matrix[m - 1] = np.cos(np.pi * j) / math.sqrt(beta)
    assert len(freqs) == m

    pair_scale = h * math.sqrt(2.0 / beta)
    flat_scale = h / math.sqrt(beta)

    def forward(grid: np.ndarray) -> np.ndarray:
        spec = sp_fft.rfft(grid, axis=-2)
        out = np.empty(grid.shape)
        out[..., 0, :] = flat_scale * spec[..., 0, :].real
        out[..., 1 : 2 * pairs : 2, :] = pair_scale * spec[..., 1 : pairs + 1, :].real
        out[..., 2 : 2 * pairs + 1 : 2, :] = -pair_scale * spec[..., 1 : pairs + 1, :].imag
        if m % 2 == 0 and m > 1:
            out[..., m - 1, :] = flat_scale * spec[..., m // 2, :].real
        return out

    def inverse(coeffs: np.ndarray) -> np.ndarray:
        shape = coeffs.shape[:-2] + (m // 2 + 1, coeffs.shape[-1])
        spec = np.zeros(shape, dtype=complex)
        spec[..., 0, :] = m * coeffs[..., 0, :] / math.sqrt(beta)
        spec[..., 1 : pairs + 1, :] = (m / math.sqrt(2.0 * beta)) * (
            coeffs[..., 1 : 2 * pairs : 2, :] - 1j * coeffs[..., 2 : 2 * pairs + 1 : 2, :]
        )
        if m % 2 == 0 and m > 1:
            spec[..., m // 2, :] = m * coeffs[..., m - 1, :] / math.sqrt(beta)
        return sp_fft.irfft(spec, n=m, axis=-2)

    return SpectralBasis(matrix, h, d, forward, inverse, use_fast=fast)


# --------------------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathModel:
    """Common state and behaviour of the discretised path models."""

    d: int
    m: int
    potential: PointPotential
    covariance: SpectralOperator = field(repr=False)
    continuum: SpectralOperator = field(repr=False)
    basis: SpectralBasis = field(repr=False)
    mean_path: np.ndarray = field(repr=False)

    kind = "path"

    @property
    def weight(self) -> float:
        return self.basis.weight

    @property
    def dim(self) -> int:
        return self.m * self.d

    # conversions -----------------------------------------------------------------

    def to_eigen(self, grid: np.ndarray | SpectralVector) -> np.ndarray:
        return self.basis.to_eigen(grid)

    def to_grid(self, coefficients: np.ndarray | SpectralVector) -> np.ndarray:
        return self.basis.to_grid(coefficients)

    def eigen_vector(self, coefficients: np.ndarray) -> SpectralVector:
        return SpectralVector(coefficients, self.weight, EIGEN)

    def path(self, coefficients: np.ndarray | SpectralVector) -> np.ndarray:
        """Node positions ``(..., m, d)`` including the mean path."""
        grid = self.to_grid(coefficients)
        return grid.reshape(grid.shape[:-1] + (self.m, self.d)) + self.mean_path

    # potential -------------------------------------------------------------------

    def potential_energy(self, coefficients: np.ndarray | SpectralVector) -> np.ndarray:
        """``U_m`` of eigen-coordinate states (batched over leading axes)."""
        if self.potential.is_zero:
            coeffs = np.asarray(getattr(coefficients, "coefficients", coefficients))
            return np.zeros(coeffs.shape[:-1])
        return self.weight * np.sum(self.potential.value(self.path(coefficients)), axis=-1)

    def gradient_coefficients(self, coefficients: np.ndarray) -> np.ndarray:
        """Eigen coordinates of the grid gradient of ``G_m`` (no quadrature weight)."""
        nodes = self.path(coefficients)
        grad = self.potential.gradient(nodes)
        return self.to_eigen(grad.reshape(grad.shape[:-2] + (self.dim,)))

    def drift(self) -> Drift:
        """The preconditioned drift ``b(x) = -x - C grad G_m(x)`` with declared constants."""
        lam1 = float(self.covariance.eigenvalues[0])
        L_G = self.potential.L_G
        n = int(np.count_nonzero(self.covariance.eigenvalues * L_G >= 1.0 / 3.0)) if L_G > 0 else 0
        gradient = None if self.potential.is_zero else self.gradient_coefficients
        return Drift(
            covariance=self.covariance,
            gradient=gradient,
            L=1.0 + lam1 * L_G,
            K=0.5,
            A=self.drift_offset(),
            n=min(n, self.dim),
        )

    def drift_offset(self) -> float:
        raise NotImplementedError

    # dense oracles ---------------------------------------------------------------

    def node_laplacian(self) -> np.ndarray:
        raise NotImplementedError

    def laplacian_matrix(self) -> np.ndarray:
        """Second-difference matrix on the flat grid (entries at index offset ``d``)."""
        return np.kron(self.node_laplacian(), np.eye(self.d))

    def precision_matrix(self) -> np.ndarray:
        """Grid matrix whose inverse is the covariance ``C``."""
        return -self.laplacian_matrix()

    def covariance_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.precision_matrix())


@dataclass(frozen=True, eq=False)
class TpsModel(PathModel):
    tau: float = 1.0
    start: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    end: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    kind = "tps"

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.m + 2) / (self.m + 1)

    def drift_offset(self) -> float:
        return self.tau**5 * self.potential.M_G**2 / math.pi**4 if self.potential.M_G > 0 else 0.0

    def node_laplacian(self) -> np.ndarray:
        h = self.weight
        lap = -2.0 * np.eye(self.m) + np.eye(self.m, k=1) + np.eye(self.m, k=-1)
        return lap / h**2


@dataclass(frozen=True, eq=False)
class PimdModel(PathModel):
    beta: float = 1.0
    a: float = 1.0

    kind = "pimd"

    @property
    def times(self) -> np.ndarray:
        return self.beta * np.arange(self.m + 1) / self.m

    def drift_offset(self) -> float:
        return 0.5 * self.beta * self.potential.M_G**2 / self.a**2 if self.potential.M_G > 0 else 0.0

    def node_laplacian(self) -> np.ndarray:
        h = self.weight
        lap = np.zeros((self.m, self.m))
        for j in range(self.m):
            lap[j, j] -= 2.0
            lap[j, (j + 1) % self.m] += 1.0
            lap[j, (j - 1) % self.m] += 1.0
        return lap / h**2

    def precision_matrix(self) -> np.ndarray:
        return -self.laplacian_matrix() + self.a * np.eye(self.dim)


def tps_build(
    tau: float,
    d: int,
    m: int,
    *,
    start: np.ndarray | None = None,
    end: np.ndarray | None = None,
    potential: PointPotential | None = None,
    fast: bool = False,
) -> TpsModel:
    """Dirichlet path model on ``[0, tau]`` with ``m`` interior nodes in R^d.

    Args:
        tau: Time horizon.
        d: Particle dimension.
        m: Number of interior grid points (``m >= 1``).
        start: Left endpoint ``a`` (defaults to the origin).
        end: Right endpoint ``b`` (defaults to the origin).
        potential: Point potential G (defaults to ``zero``).
        fast: Use the discrete sine transform instead of the dense basis matrix.
    """
    if m < 1 or d < 1 or not tau > 0:
        raise ValueError(f"TPS model needs tau > 0, d >= 1, m >= 1 (got tau={tau}, d={d}, m={m})")
    start_arr = np.zeros(d) if start is None else np.asarray(start, dtype=float).reshape(d)
    end_arr = np.zeros(d) if end is None else np.asarray(end, dtype=float).reshape(d)
    continuum, discrete = tps_eigenvalues(tau, m)
    t = tau * np.arange(1, m + 1) / (m + 1)
    mean_path = start_arr + (t / tau)[:, None] * (end_arr - start_arr)
    model = TpsModel(
        d=d,
        m=m,
        potential=potential or potential_library("zero"),
        covariance=SpectralOperator(np.repeat(discrete, d), "tps-discrete"),
        continuum=SpectralOperator(np.repeat(continuum, d), "tps-continuum", tps_continuum_trace(tau, d)),
        basis=_sine_basis(tau, m, d, fast),
        mean_path=mean_path,
        tau=float(tau),
        start=start_arr,
        end=end_arr,
    )
    logger.debug("Built TPS model tau=%s d=%d m=%d potential=%s", tau, d, m, model.potential.name)
    return model


def pimd_build(
    beta: float,
    a: float,
    d: int,
    m: int,
    *,
    potential: PointPotential | None = None,
    fast: bool = False,
) -> PimdModel:
    """Periodic loop model on ``[0, beta)`` with ``m`` nodes and offset ``a``."""
    if m < 1 or d < 1 or not beta > 0 or not a > 0:
        raise ValueError(f"PIMD model needs beta, a > 0, d, m >= 1 (got beta={beta}, a={a}, d={d}, m={m})")
    continuum, discrete = pimd_eigenvalues(beta, a, m)
    model = PimdModel(
        d=d,
        m=m,
        potential=potential or potential_library("zero"),
        covariance=SpectralOperator(np.repeat(discrete, d), "pimd-discrete"),
        continuum=SpectralOperator(np.repeat(continuum, d), "pimd-continuum", pimd_continuum_trace(beta, a, d)),
        basis=_fourier_basis(beta, m, d, fast),
        mean_path=np.zeros((m, d)),
        beta=float(beta),
        a=float(a),
    )
    logger.debug("Built PIMD model beta=%s a=%s d=%d m=%d potential=%s", beta, a, d, m, model.potential.name)
    return model


def build_model(spec: Mapping[str, Any], seed: int | None = None) -> PathModel:
    """Build a model from a configuration mapping (``kind``, sizes, ``potential``)."""
    pot_cfg = dict(spec.get("potential", {"name": "zero"}))
    name = pot_cfg.pop("name", "zero")
    potential = potential_library(name, pot_cfg.get("params", pot_cfg), seed=seed)
    kind = spec.get("kind", "tps")
    fast = spec.get("transform", "dense") == "fast"
    if kind == "tps":
        return tps_build(
            float(spec["tau"]),
            int(spec["d"]),
            int(spec["m"]),
            start=spec.get("start"),
            end=spec.get("end"),
            potential=potential,
            fast=fast,
        )
    if kind == "pimd":
        return pimd_build(float(spec["beta"]), float(spec["a"]), int(spec["d"]), int(spec["m"]), potential=potential, fast=fast)
    raise ValueError(f"Unsupported model kind: {kind}")


# --------------------------------------------------------------------------------------
# Operations on states
# --------------------------------------------------------------------------------------


def discrete_potential(model: PathModel, x: SpectralVector) -> Tuple[np.ndarray | float, SpectralVector]:
    """``U_m`` and its Euclidean gradient with respect to the grid values of *x*."""
    if x.representation != GRID:
        x = model.basis.grid_vector(x)
    nodes = x.coefficients.reshape(x.batch_shape + (model.m, model.d)) + model.mean_path
    value = model.weight * np.sum(model.potential.value(nodes), axis=-1)
    grad = model.weight * model.potential.gradient(nodes)
    grad_vec = SpectralVector(grad.reshape(x.coefficients.shape), model.weight, GRID)
    return (float(value) if np.ndim(value) == 0 else value), grad_vec


def constant_path(model: PathModel, point: np.ndarray) -> SpectralVector:
    """State whose nodes all sit at *point* (relative to the mean path for TPS)."""
    nodes = np.broadcast_to(np.asarray(point, dtype=float), (model.m, model.d)) - model.mean_path
    return model.eigen_vector(model.to_eigen(nodes.reshape(model.dim)))


def circle_loop(model: PathModel, center: np.ndarray, radius: float) -> SpectralVector:
    """Loop of nodes evenly spaced on a circle in the first two coordinates."""
    if model.d < 2:
        raise ValueError("circle_loop needs d >= 2")
    phase = 2 * np.pi * np.arange(model.m) / model.m
    nodes = np.tile(np.asarray(center, dtype=float).reshape(model.d), (model.m, 1))
    nodes[:, 0] += radius * np.cos(phase)
    nodes[:, 1] += radius * np.sin(phase)
    nodes -= model.mean_path
    return model.eigen_vector(model.to_eigen(nodes.reshape(model.dim)))
