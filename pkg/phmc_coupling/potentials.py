"""Point potentials G: R^d -> R used by the path models.

Each :class:`PointPotential` evaluates value and gradient on arrays of shape
``(..., d)``.  Declared constants follow the split ``G(u) = q0 |u|^2 / 2 + G_b(u)``:
``quadratic_coefficient`` is ``q0`` and ``M_G`` bounds ``|grad G_b|``, while ``L_G``
is a global Lipschitz constant of ``grad G``.  Pure bounded-gradient potentials have
``q0 = 0``.  ``inf`` marks a constant that does not exist.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import UnknownPotentialError
from .rng import RngStream

logger = logging.getLogger(__name__)

__all__ = [
    "PointPotential",
    "PotentialAudit",
    "potential_library",
    "available_potentials",
    "girsanov_potential",
    "audit_point_potential",
    "LAPLACE_DELTA",
]

LAPLACE_DELTA = 1e-2

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class PointPotential:
    name: str
    value: ArrayFn
    gradient: ArrayFn
    M_G: float
    L_G: float
    dim: int | None = None
    quadratic_coefficient: float = 0.0
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.value(u)


@dataclass(frozen=True)
class PotentialAudit:
    grad_at_origin: float
    sup_gradient_sampled: float
    within_bound: bool
    fd_max_rel_error: float


# --------------------------------------------------------------------------------------
# Library entries
# --------------------------------------------------------------------------------------


def _zero(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    return PointPotential(
        name="zero",
        value=lambda u: np.zeros(np.shape(u)[:-1]),
        gradient=lambda u: np.zeros(np.shape(u)),
        M_G=0.0,
        L_G=0.0,
        dim=params.get("dim"),
    )


def _quadratic(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    scale = float(params.get("scale", 1.0))
    return PointPotential(
        name="quadratic",
        value=lambda u: 0.5 * scale * np.sum(np.asarray(u) ** 2, axis=-1),
        gradient=lambda u: scale * np.asarray(u, dtype=float),
        M_G=0.0,
        L_G=abs(scale),
        dim=params.get("dim"),
        quadratic_coefficient=scale,
        params={"scale": scale},
    )


def _mixture_means(params: Mapping[str, Any], seed: int | None) -> np.ndarray:
    if "means" in params:
        means = np.atleast_2d(np.asarray(params["means"], dtype=float))
    else:
        dim = int(params.get("dim", 2))
        count = int(params.get("components", 20))
        low, high = float(params.get("low", 0.0)), float(params.get("high", 10.0))
        rng = RngStream(int(params.get("seed", 0 if seed is None else seed)))
        means = low + (high - low) * rng.uniform((count, dim))
    return means


def _log_weights(params: Mapping[str, Any], count: int) -> np.ndarray:
    weights = np.asarray(params.get("weights", np.full(count, 1.0 / count)), dtype=float)
    if weights.shape != (count,) or np.any(weights <= 0):
        raise ValueError(f"mixture weights must be {count} positive numbers")
    return np.log(weights / weights.sum())


def _normal_mixture(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    means = _mixture_means(params, seed)
    sigma = float(params.get("sigma", 1.0))
    log_w = _log_weights(params, means.shape[0])
    inv_var = 1.0 / sigma**2

    def logits(u: np.ndarray) -> np.ndarray:
        diff = np.asarray(u, dtype=float)[..., None, :] - means
        return log_w - 0.5 * inv_var * np.sum(diff**2, axis=-1)

    def value(u: np.ndarray) -> np.ndarray:
        return -logsumexp(logits(u), axis=-1)

    def gradient(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        probs = softmax(logits(u), axis=-1)
        return inv_var * (u - probs @ means)

    diameter = float(np.max(np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)))
    return PointPotential(
        name="normal-mixture",
        value=value,
        gradient=gradient,
        M_G=float(np.max(np.linalg.norm(means, axis=-1))) * inv_var,
        L_G=max(inv_var, diameter**2 * inv_var**2 / 4.0 - inv_var),
        dim=means.shape[1],
        quadratic_coefficient=inv_var,
        params={"means": means.tolist(), "sigma": sigma},
    )


def _laplace_mixture(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    means = _mixture_means(params, seed)
    scale = float(params.get("scale", 1.0))
    delta = float(params.get("delta", LAPLACE_DELTA))
    log_w = _log_weights(params, means.shape[0])

    def radii(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        diff = np.asarray(u, dtype=float)[..., None, :] - means
        return diff, np.sqrt(np.sum(diff**2, axis=-1) + delta**2)

    def value(u: np.ndarray) -> np.ndarray:
        _, r = radii(u)
        return -logsumexp(log_w - r / scale, axis=-1)

    def gradient(u: np.ndarray) -> np.ndarray:
        diff, r = radii(u)
        probs = softmax(log_w - r / scale, axis=-1)
        return np.sum((probs / (scale * r))[..., None] * diff, axis=-2)

    return PointPotential(
        name="laplace-mixture",
        value=value,
        gradient=gradient,
        M_G=1.0 / scale,
        L_G=1.0 / (scale * delta) + 1.0 / scale**2,
        dim=means.shape[1],
        params={"means": means.tolist(), "scale": scale, "delta": delta},
    )


def _banana(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    sigma_b = float(params.get("sigma", 1.0))
    curvature = float(params.get("curvature", 1.0))
    offset = 1.0 - curvature  # puts the global minimum at (1, 1)

    def value(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        return (u1 - 1.0) ** 2 / (2 * sigma_b**2) + 0.5 * (u2 - curvature * u1**2 - offset) ** 2

    def gradient(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        valley = u2 - curvature * u1**2 - offset
        return np.stack([(u1 - 1.0) / sigma_b**2 - 2.0 * curvature * u1 * valley, valley], axis=-1)

    return PointPotential(
        name="banana",
        value=value,
        gradient=gradient,
        M_G=math.inf,
        L_G=math.inf,
        dim=2,
        params={"sigma": sigma_b, "curvature": curvature, "offset": offset},
    )


# three-hole landscape: two deep wells near (+-1.05, -0.04), a shallow one near (0, 1.54)
_WELLS = ((3.0, 0.0, 1.0 / 3.0), (-3.0, 0.0, 5.0 / 3.0), (-5.0, 1.0, 0.0), (-5.0, -1.0, 0.0))
_QUARTIC = 0.2


def _three_well_parts(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient and Laplacian of the three-well landscape."""
    u = np.asarray(u, dtype=float)
    x, y = u[..., 0], u[..., 1]
    value = _QUARTIC * x**4 + _QUARTIC * (y - 1.0 / 3.0) ** 4
    gx = 4 * _QUARTIC * x**3
    gy = 4 * _QUARTIC * (y - 1.0 / 3.0) ** 3
    lap = 12 * _QUARTIC * x**2 + 12 * _QUARTIC * (y - 1.0 / 3.0) ** 2
    for amp, cx, cy in _WELLS:
        dx, dy = x - cx, y - cy
        bump = amp * np.exp(-(dx**2) - dy**2)
        value = value + bump
        gx = gx - 2 * dx * bump
        gy = gy - 2 * dy * bump
        lap = lap + (4 * (dx**2 + dy**2) - 4) * bump
    return value, np.stack([gx, gy], axis=-1), lap


def _three_well(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    scale = float(params.get("scale", 1.0))
    return PointPotential(
        name="three-well",
        value=lambda u: scale * _three_well_parts(u)[0],
        gradient=lambda u: scale * _three_well_parts(u)[1],
        M_G=math.inf,
        L_G=math.inf,
        dim=2,
        params={"scale": scale},
    )


def _three_well_path(params: Mapping[str, Any], seed: int | None) -> PointPotential:
    scale = float(params.get("scale", 1.0))
    potential = girsanov_potential(
        lambda u: scale * _three_well_parts(u)[1],
        lambda u: scale * _three_well_parts(u)[2],
        name="three-well-path",
        dim=2,
    )
    return potential


_LIBRARY: Dict[str, Callable[[Mapping[str, Any], int | None], PointPotential]] = {
    "zero": _zero,
    "quadratic": _quadratic,
    "normal-mixture": _normal_mixture,
    "laplace-mixture": _laplace_mixture,
    "banana": _banana,
    "three-well": _three_well,
    "three-well-path": _three_well_path,
}


def available_potentials() -> list[str]:
    return sorted(_LIBRARY)


def potential_library(name: str, params: Mapping[str, Any] | None = None, seed: int | None = None) -> PointPotential:
    """Build the named potential.

    Args:
        name: One of :func:`available_potentials`.
        params: Potential parameters (means, sigma, scale, curvature, ...).  Mixtures
            without explicit ``means`` draw ``components`` means uniformly on
            ``[low, high]^dim`` from ``params["seed"]`` (falling back to *seed*).
        seed: Fallback seed for randomly generated parameters.

    Raises:
        UnknownPotentialError: If *name* is not in the library.
    """
    try:
        builder = _LIBRARY[name]
    except KeyError:
        raise UnknownPotentialError(name, list(_LIBRARY)) from None
    potential = builder(dict(params or {}), seed)
    logger.debug("Built potential %s (M_G=%s, L_G=%s)", name, potential.M_G, potential.L_G)
    return potential


def girsanov_potential(
    grad_psi: ArrayFn,
    laplacian_psi: ArrayFn,
    *,
    name: str = "girsanov",
    dim: int | None = None,
    fd_step: float = 1e-5,
    M_G: float = math.inf,
    L_G: float = math.inf,
) -> PointPotential:
    """Path potential ``G = |grad Psi|^2 / 2 - Laplacian(Psi) / 2`` from a landscape Psi.

    The gradient of G is evaluated by central differences of G with step *fd_step*.
    """

    def value(u: np.ndarray) -> np.ndarray:
        g = grad_psi(u)
        return 0.5 * np.sum(g**2, axis=-1) - 0.5 * laplacian_psi(u)

    def gradient(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for i in range(u.shape[-1]):
            step = np.zeros(u.shape[-1])
            step[i] = fd_step
            out[..., i] = (value(u + step) - value(u - step)) / (2 * fd_step)
        return out

    return PointPotential(name=name, value=value, gradient=gradient, M_G=M_G, L_G=L_G, dim=dim)


def audit_point_potential(
    potential: PointPotential,
    rng: RngStream,
    *,
    dim: int | None = None,
    n_points: int = 10_000,
    radius: float = 10.0,
    fd_step: float = 1e-6,
) -> PotentialAudit:
    """Spot-check the declared constants and the gradient of *potential*.

    Samples *n_points* uniformly in ``[-radius, radius]^d``; the sampled gradient bound
    is taken on the bounded part ``grad G - q0 u``.
    """
    d = dim or potential.dim or 1
    points = radius * (2.0 * rng.uniform((n_points, d)) - 1.0)
    grad = potential.gradient(points)
    bounded = grad - potential.quadratic_coefficient * points
    sup_grad = float(np.max(np.linalg.norm(bounded, axis=-1)))
    origin = float(np.linalg.norm(potential.gradient(np.zeros(d))))

    fd = np.empty_like(points)
    for i in range(d):
        step = np.zeros(d)
        step[i] = fd_step
        fd[:, i] = (potential.value(points + step) - potential.value(points - step)) / (2 * fd_step)
    rel = np.linalg.norm(fd - grad, axis=-1) / np.maximum(1.0, np.linalg.norm(grad, axis=-1))
    return PotentialAudit(
        grad_at_origin=origin,
        sup_gradient_sampled=sup_grad,
        within_bound=sup_grad <= potential.M_G * (1 + 1e-9),
        fd_max_rel_error=float(np.max(rel)),
    )
