"""Preconditioned Hamiltonian dynamics ``q' = v, v' = b(q)``.

For the pHMC drift ``b(q) = -q - C grad G_m(q)`` the dynamics split into the
harmonic rotation (exact) and a kick by ``-C grad G_m``; the palindromic splitting
step is kick(dt/2), rotate(dt), kick(dt/2).  States are handled as eigen-coordinate
arrays with arbitrary leading batch dimensions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import DimensionMismatchError, IntegratorDivergenceError, RepresentationError
from .spectral import EIGEN, SpectralOperator, SpectralVector

logger = logging.getLogger(__name__)

__all__ = [
    "EXACT_LINEAR",
    "SPLITTING",
    "DIVERGENCE_LIMIT",
    "PhasePoint",
    "Drift",
    "IntegratorConfig",
    "flow_rotation",
    "flow_kick",
    "splitting_step",
    "flow_ode",
    "integrate_steps",
    "trajectory",
    "trajectory_frame",
    "resolve_exact_dt",
]

EXACT_LINEAR = "exact-linear"
SPLITTING = "symmetric-splitting"
DIVERGENCE_LIMIT = 1e8

Gradient = Callable[[np.ndarray], np.ndarray]
Recorder = Callable[[int, float, np.ndarray, np.ndarray], None]


@dataclass(frozen=True, eq=False)
class PhasePoint:
    q: SpectralVector
    v: SpectralVector

    def __post_init__(self) -> None:
        if self.q.coefficients.shape != self.v.coefficients.shape:
            raise DimensionMismatchError("phase point", self.q.dim, self.v.dim)
        if self.q.representation != self.v.representation:
            raise RepresentationError("q and v must share a representation")

    @classmethod
    def of(cls, q: np.ndarray, v: np.ndarray, weight: float = 1.0) -> "PhasePoint":
        return cls(SpectralVector(q, weight, EIGEN), SpectralVector(v, weight, EIGEN))

    def flip(self) -> "PhasePoint":
        return PhasePoint(self.q, -self.v)


@dataclass(frozen=True, eq=False)
class Drift:
    """Drift ``b`` with declared constants.

    ``gradient`` maps eigen coordinates of q to eigen coordinates of ``grad G_m``;
    ``None`` means the linear drift ``b(q) = -q``.  ``free=True`` selects ``b = 0``
    (straight-line motion, used as a reference dynamics in tests).
    """

    covariance: SpectralOperator | None = None
    gradient: Optional[Gradient] = None
    free: bool = False
    L: float = 1.0
    K: float = 1.0
    A: float = 0.0
    n: int = 0

    @property
    def is_linear(self) -> bool:
        return self.gradient is None

    def force(self, q: np.ndarray) -> np.ndarray:
        """``-C grad G_m(q)`` in eigen coordinates."""
        if self.gradient is None:
            return np.zeros_like(q)
        return -self.covariance.eigenvalues * self.gradient(q)

    def __call__(self, q: np.ndarray | SpectralVector) -> np.ndarray:
        q = np.asarray(getattr(q, "coefficients", q), dtype=float)
        if self.free:
            return np.zeros_like(q)
        return -q + self.force(q)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    scheme: str = SPLITTING

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"step size must be positive, got {self.dt}")
        if self.scheme not in (EXACT_LINEAR, SPLITTING):
            raise ValueError(f"Unsupported integrator scheme: {self.scheme}")


# --------------------------------------------------------------------------------------
# Array kernels
# --------------------------------------------------------------------------------------


def _rotate(q: np.ndarray, v: np.ndarray, t: float | np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    c, s = np.cos(t), np.sin(t)
    return c * q + s * v, -s * q + c * v


def _kick(q: np.ndarray, v: np.ndarray, t: float | np.ndarray, drift: Drift) -> np.ndarray:
    if drift.gradient is None:
        return v
    return v + t * drift.force(q)


def _split_step(q: np.ndarray, v: np.ndarray, dt: float | np.ndarray, drift: Drift) -> Tuple[np.ndarray, np.ndarray]:
    v = _kick(q, v, 0.5 * dt, drift)
    q, v = _rotate(q, v, dt)
    v = _kick(q, v, 0.5 * dt, drift)
    return q, v


def _guard(q: np.ndarray, step: int) -> None:
    norm = float(np.max(np.linalg.norm(q, axis=-1))) if q.size else 0.0
    if not math.isfinite(norm) or norm > DIVERGENCE_LIMIT:
        logger.debug("Divergence guard tripped at step %d (|q|=%s)", step, norm)
        raise IntegratorDivergenceError(step, norm)


def _point(z: PhasePoint, q: np.ndarray, v: np.ndarray) -> PhasePoint:
    return PhasePoint(z.q.replace(q), z.v.replace(v))


# --------------------------------------------------------------------------------------
# Public flows
# --------------------------------------------------------------------------------------


def flow_rotation(z: PhasePoint, t: float) -> PhasePoint:
    """Exact flow of ``q' = v, v' = -q`` over time *t*."""
    q, v = _rotate(z.q.coefficients, z.v.coefficients, t)
    return _point(z, q, v)


def flow_kick(z: PhasePoint, t: float, C: SpectralOperator, gradient: Gradient | None) -> PhasePoint:
    """Exact flow of ``q' = 0, v' = -C grad G_m(q)``; *gradient* returns eigen coordinates."""
    if gradient is None:
        return z
    q = z.q.coefficients
    v = z.v.coefficients - t * C.eigenvalues * gradient(q)
    return _point(z, q, v)


def splitting_step(z: PhasePoint, cfg: IntegratorConfig, drift: Drift) -> PhasePoint:
    """One palindromic step kick(dt/2) rotate(dt) kick(dt/2)."""
    if cfg.scheme != SPLITTING:
        raise ValueError("splitting_step requires the symmetric-splitting scheme")
    q, v = _split_step(z.q.coefficients, z.v.coefficients, cfg.dt, drift)
    return _point(z, q, v)


def _step_sizes(T: float, dt: float) -> np.ndarray:
    count = max(1, math.ceil(T / dt - 1e-9))
    sizes = np.full(count, dt)
    sizes[-1] = T - dt * (count - 1)
    return sizes


def flow_ode(
    z: PhasePoint,
    T: float,
    cfg: IntegratorConfig,
    drift: Drift,
    recorder: Recorder | None = None,
) -> PhasePoint:
    """Approximate the flow over duration *T*.

    Linear and free drifts are integrated in closed form.  Otherwise ``ceil(T/dt)``
    splitting steps are taken, the last one shortened so that *T* is hit exactly.

    Raises:
        IntegratorDivergenceError: state non-finite or ``|q| > 1e8`` after some step.
    """
    if T < 0:
        raise ValueError(f"duration must be non-negative, got {T}")
    q, v = z.q.coefficients, z.v.coefficients
    if recorder is not None:
        recorder(0, 0.0, q, v)
    if T == 0:
        return z
    if drift.free:
        q = q + T * v
        _guard(q, 1)
        if recorder is not None:
            recorder(1, T, q, v)
        return _point(z, q, v)
    if drift.is_linear:
        q, v = _rotate(q, v, T)
        if recorder is not None:
            recorder(1, T, q, v)
        return _point(z, q, v)
    if cfg.scheme == EXACT_LINEAR:
        raise ValueError("exact-linear scheme used with a nonlinear drift")

    t = 0.0
    for step, size in enumerate(_step_sizes(T, cfg.dt), start=1):
        q, v = _split_step(q, v, size, drift)
        _guard(q, step)
        t += size
        if recorder is not None:
            recorder(step, t, q, v)
    return _point(z, q, v)


def integrate_steps(q: np.ndarray, v: np.ndarray, dt: float, steps: np.ndarray | int, drift: Drift) -> Tuple[np.ndarray, np.ndarray]:
    """Apply ``psi_dt`` *steps* times; *steps* may differ per batch row.

    Rows whose step count is reached are frozen while the others continue.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    steps = np.asarray(steps)
    if drift.is_linear and not drift.free:
        # palindromic step is an exact rotation when there is no kick
        t = (dt * steps)[..., None] if steps.ndim else dt * int(steps)
        return _rotate(q, v, t)
    total = int(np.max(steps)) if steps.size else 0
    for step in range(1, total + 1):
        if drift.free:
            q_new, v_new = q + dt * v, v
        else:
            q_new, v_new = _split_step(q, v, dt, drift)
        active = (steps >= step)
        if steps.ndim:
            active = active[..., None]
        q = np.where(active, q_new, q)
        v = np.where(active, v_new, v)
        _guard(q, step)
    return q, v


def trajectory(z: PhasePoint, T: float, cfg: IntegratorConfig, drift: Drift) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times and stacked ``(q, v)`` states visited by :func:`flow_ode`.

    Linear and free drifts are sampled on the same ``dt`` grid through their
    closed forms.
    """
    times, qs, vs = [], [], []

    def record(step: int, t: float, q: np.ndarray, v: np.ndarray) -> None:
        times.append(t)
        qs.append(np.array(q, copy=True))
        vs.append(np.array(v, copy=True))

    if drift.is_linear or drift.free:
        record(0, 0.0, z.q.coefficients, z.v.coefficients)
        t = 0.0
        for size in _step_sizes(T, cfg.dt) if T > 0 else []:
            t += size
            end = flow_ode(z, t, cfg, drift)
            record(0, t, end.q.coefficients, end.v.coefficients)
    else:
        flow_ode(z, T, cfg, drift, recorder=record)
    return np.asarray(times), np.stack(qs), np.stack(vs)


def trajectory_frame(times: np.ndarray, qs: np.ndarray, vs: np.ndarray) -> pd.DataFrame:
    """Long-format table ``step, t, mode, q, v`` of an unbatched trajectory."""
    steps, modes = np.meshgrid(np.arange(len(times)), np.arange(qs.shape[-1]), indexing="ij")
    return pd.DataFrame(
        {
            "step": steps.ravel(),
            "t": np.repeat(times, qs.shape[-1]),
            "mode": modes.ravel(),
            "q": qs.reshape(len(times), -1).ravel(),
            "v": vs.reshape(len(times), -1).ravel(),
        }
    )


def resolve_exact_dt(
    z: PhasePoint,
    T: float,
    drift: Drift,
    dt: float,
    *,
    tol: float = 1e-10,
    min_dt: float = 1e-7,
) -> float:
    """Halve *dt* until halving once more changes ``q_T`` by less than *tol*."""
    if drift.is_linear or drift.free:
        return dt
    current = flow_ode(z, T, IntegratorConfig(dt), drift).q.coefficients
    while dt / 2 >= min_dt:
        finer = flow_ode(z, T, IntegratorConfig(dt / 2), drift).q.coefficients
        if float(np.max(np.linalg.norm(finer - current, axis=-1))) < tol:
            return dt
        dt, current = dt / 2, finer
    logger.warning("Exact-mode step size hit the floor %.1e without reaching tol %.1e", min_dt, tol)
    return dt
