"""The pHMC Markov kernel.

``phmc_step`` is the exact kernel ``x -> q_T(x, xi)``, ``xi ~ N(0, C_tilde)``.
``randomized_phmc_step`` is the numerical Metropolis-adjusted variant: a geometric
number of splitting steps followed by an accept/reject on the energy
``E(q, v) = <v, C^-1 v>/2 + U_m(q) + <q, C^-1 q>/2``.  Random draws are consumed in a
fixed order (velocity, step count, uniform) whether or not the proposal is accepted.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Protocol, Tuple

import numpy as np
from tqdm import tqdm

from .errors import IntegratorDivergenceError
from .flow import Drift, IntegratorConfig, PhasePoint, flow_ode, integrate_steps
from .rng import RngStream, StreamBatch
from .spectral import EIGEN, SpectralOperator, SpectralVector, coefficients_of, sample_gaussian

logger = logging.getLogger(__name__)

__all__ = [
    "DETERMINISTIC",
    "GEOMETRIC",
    "EXPONENTIAL",
    "DurationRule",
    "Energy",
    "PhmcKernel",
    "StepResult",
    "ChainStats",
    "ChainSink",
    "CsvChainSink",
    "energy",
    "evaluate_energy",
    "phmc_step",
    "randomized_phmc_step",
    "metropolis_transition",
    "draw_duration",
    "flow_positions",
    "run_chain",
]

DETERMINISTIC = "deterministic"
GEOMETRIC = "geometric-steps"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class DurationRule:
    """How the integration time of one transition is chosen.

    ``deterministic`` integrates for exactly T, ``geometric-steps`` takes a geometric
    number of steps on {1, 2, ...} with mean ``mean_steps``, ``exponential`` draws the
    duration from an exponential law with mean T.
    """

    kind: str = DETERMINISTIC
    mean_steps: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in (DETERMINISTIC, GEOMETRIC, EXPONENTIAL):
            raise ValueError(f"Unsupported duration rule: {self.kind}")
        if self.kind == GEOMETRIC and (self.mean_steps is None or not self.mean_steps >= 1):
            raise ValueError(f"geometric duration needs mean_steps >= 1, got {self.mean_steps}")

    @property
    def success_probability(self) -> float:
        return 1.0 / float(self.mean_steps or 1.0)


@dataclass(frozen=True)
class Energy:
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"energy must be finite, got {self.value}")


@dataclass(frozen=True, eq=False)
class PhmcKernel:
    """Full configuration of one pHMC transition.

    Attributes:
        T: Duration (mean duration for randomized rules).
        duration: Duration randomisation.
        integrator: Step size and scheme.
        C: Reference covariance.
        C_tilde: Velocity covariance.
        drift: Preconditioned drift with declared constants.
        model: Path model supplying ``U_m`` (required for Metropolis).
        metropolis: Use the Metropolis-adjusted randomized kernel.
    """

    T: float
    duration: DurationRule
    integrator: IntegratorConfig
    C: SpectralOperator
    C_tilde: SpectralOperator
    drift: Drift
    model: Any = field(default=None, repr=False)
    metropolis: bool = False

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError(f"duration T must be positive, got {self.T}")
        if self.C.dim != self.C_tilde.dim:
            raise ValueError("C and C_tilde must have the same dimension")
        if self.metropolis:
            if self.duration.kind != GEOMETRIC:
                raise ValueError("the Metropolis-adjusted kernel needs a geometric-steps duration")
            if self.model is None and not self.drift.is_linear:
                raise ValueError("the Metropolis-adjusted kernel needs a model supplying U_m")
            if not np.array_equal(self.C.eigenvalues, self.C_tilde.eigenvalues):
                raise ValueError("the Metropolis-adjusted kernel draws velocities from C (C_tilde must equal C)")

    @property
    def dim(self) -> int:
        return self.C.dim

    @property
    def weight(self) -> float:
        return float(getattr(self.model, "weight", 1.0))

    @classmethod
    def for_model(
        cls,
        model: Any,
        T: float,
        dt: float,
        *,
        metropolis: bool = True,
        duration: str | None = None,
        scheme: str = "symmetric-splitting",
    ) -> "PhmcKernel":
        """Kernel on *model* with ``C_tilde = C``; Metropolis kernels use mean ``T/dt`` steps."""
        kind = duration or (GEOMETRIC if metropolis else DETERMINISTIC)
        rule = DurationRule(kind, max(1.0, T / dt) if kind == GEOMETRIC else None)
        return cls(
            T=T,
            duration=rule,
            integrator=IntegratorConfig(dt, scheme),
            C=model.covariance,
            C_tilde=model.covariance,
            drift=model.drift(),
            model=model,
            metropolis=metropolis,
        )

    def with_duration(self, T: float) -> "PhmcKernel":
        """Same kernel with duration *T* (geometric mean rescaled to ``T/dt``)."""
        rule = self.duration
        if rule.kind == GEOMETRIC:
            rule = DurationRule(GEOMETRIC, max(1.0, T / self.integrator.dt))
        return replace(self, T=T, duration=rule)

    def with_step(self, dt: float) -> "PhmcKernel":
        rule = self.duration
        if rule.kind == GEOMETRIC:
            rule = DurationRule(GEOMETRIC, max(1.0, self.T / dt))
        return replace(self, integrator=IntegratorConfig(dt, self.integrator.scheme), duration=rule)

    def potential_energy(self, q: np.ndarray) -> np.ndarray:
        if self.model is None:
            return np.zeros(np.shape(q)[:-1])
        return self.model.potential_energy(q)


@dataclass(frozen=True, eq=False)
class StepResult:
    next: SpectralVector
    accepted: np.ndarray | bool
    steps: np.ndarray | int
    energy: np.ndarray | float
    accept_prob: np.ndarray | float


# --------------------------------------------------------------------------------------
# Energy
# --------------------------------------------------------------------------------------


def energy(q: np.ndarray, v: np.ndarray, kernel: PhmcKernel) -> np.ndarray | float:
    """Hamiltonian of eigen-coordinate states (batched over leading axes)."""
    q = coefficients_of(q)
    v = coefficients_of(v)
    inv = 1.0 / kernel.C.eigenvalues
    value = 0.5 * np.sum(inv * v * v, axis=-1) + kernel.potential_energy(q) + 0.5 * np.sum(inv * q * q, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def evaluate_energy(q: SpectralVector, v: SpectralVector, kernel: PhmcKernel) -> Energy:
    return Energy(float(energy(q, v, kernel)))


# --------------------------------------------------------------------------------------
# Transitions
# --------------------------------------------------------------------------------------


def draw_duration(kernel: PhmcKernel, rng: RngStream | StreamBatch) -> float | np.ndarray:
    """Integration time of one unadjusted transition; one draw per row for a :class:`StreamBatch`."""
    if kernel.duration.kind != EXPONENTIAL:
        return kernel.T
    if isinstance(rng, StreamBatch):
        return rng.exponential(kernel.T, size=len(rng))
    return float(rng.exponential(kernel.T))


def flow_positions(x: np.ndarray, xi: np.ndarray, T: float | np.ndarray, kernel: PhmcKernel) -> np.ndarray:
    """Positions ``q_T(x, xi)``; an array *T* gives each row its own duration."""
    if np.ndim(T) == 0:
        return flow_ode(PhasePoint.of(x, xi, kernel.weight), float(T), kernel.integrator, kernel.drift).q.coefficients
    rows = [flow_ode(PhasePoint.of(x[i], xi[i], kernel.weight), float(t), kernel.integrator, kernel.drift) for i, t in enumerate(T)]
    return np.stack([end.q.coefficients for end in rows])


def _exact_transition(x: np.ndarray, kernel: PhmcKernel, rng: RngStream | StreamBatch) -> Tuple[np.ndarray, np.ndarray, float | np.ndarray]:
    xi = sample_gaussian(kernel.C_tilde, rng, size=x.shape[:-1]).coefficients
    T = draw_duration(kernel, rng)
    return flow_positions(x, xi, T, kernel), xi, T


def phmc_step(x: SpectralVector | np.ndarray, kernel: PhmcKernel, rng: RngStream) -> SpectralVector:
    """Exact pHMC transition ``X' = q_T(x, xi)``."""
    if kernel.metropolis:
        raise ValueError("phmc_step is the unadjusted kernel; use randomized_phmc_step")
    q, _, _ = _exact_transition(coefficients_of(x), kernel, rng)
    return SpectralVector(q, kernel.weight, EIGEN)


def metropolis_transition(
    x: np.ndarray,
    xi: np.ndarray,
    steps: np.ndarray | int,
    uniform: np.ndarray | float,
    kernel: PhmcKernel,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Randomized transition from pre-drawn velocity, step count and uniform.

    Returns:
        ``(next, accepted, accept_prob, start_energy)``.
    """
    q, v = integrate_steps(x, xi, kernel.integrator.dt, steps, kernel.drift)
    start = np.asarray(energy(x, xi, kernel))
    if kernel.drift.is_linear:
        # the rotation conserves E exactly
        prob = np.ones_like(start)
    else:
        delta = np.asarray(energy(q, v, kernel)) - start
        with np.errstate(over="ignore", invalid="ignore"):
            prob = np.where(delta <= 0.0, 1.0, np.exp(-np.where(delta > 0.0, delta, 0.0)))
        prob = np.where(np.isfinite(prob), prob, 0.0)
    accepted = np.asarray(uniform) < prob
    mask = accepted[..., None] if np.ndim(accepted) else accepted
    nxt = np.where(mask, q, x)
    return nxt, accepted, prob, start


def randomized_phmc_step(x: SpectralVector | np.ndarray, kernel: PhmcKernel, rng: RngStream) -> StepResult:
    """Numerical randomized pHMC: geometric step count, splitting proposal, Metropolis filter."""
    if not kernel.metropolis:
        raise ValueError("randomized_phmc_step needs a Metropolis-adjusted kernel")
    x = coefficients_of(x)
    batch = x.shape[:-1]
    xi = sample_gaussian(kernel.C_tilde, rng, size=batch).coefficients
    steps = rng.geometric(kernel.duration.success_probability, size=batch if batch else None)
    uniform = rng.uniform(batch if batch else None)
    nxt, accepted, prob, start = metropolis_transition(x, xi, steps, uniform, kernel)
    return StepResult(
        next=SpectralVector(nxt, kernel.weight, EIGEN),
        accepted=bool(accepted) if not batch else accepted,
        steps=int(steps) if not batch else steps,
        energy=float(start) if not batch else start,
        accept_prob=float(prob) if not batch else prob,
    )


# --------------------------------------------------------------------------------------
# Chains
# --------------------------------------------------------------------------------------


class ChainSink(Protocol):
    def write(self, step: int, accepted: np.ndarray, steps: np.ndarray, energies: np.ndarray, states: np.ndarray) -> None:
        ...


class CsvChainSink:
    """Streams chain rows ``step, accepted, k, energy, q_0..q_{N-1}`` to a CSV file.

    Batched chains write one row per chain, in chain order.  Floats use ``repr`` so
    equal runs produce identical bytes.
    """

    def __init__(self, path: Path, dim: int, thin: int = 1) -> None:
        self.path = Path(path)
        self.thin = max(1, int(thin))
        self._fp = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fp)
        self._writer.writerow(["step", "accepted", "k", "energy"] + [f"q_{j}" for j in range(dim)])

    def write(self, step: int, accepted: np.ndarray, steps: np.ndarray, energies: np.ndarray, states: np.ndarray) -> None:
        if step % self.thin:
            return
        for acc, k, e, row in zip(np.atleast_1d(accepted), np.atleast_1d(steps), np.atleast_1d(energies), np.atleast_2d(states)):
            self._writer.writerow([step, int(bool(acc)), int(k), repr(float(e))] + [repr(float(c)) for c in row])

    def close(self) -> None:
        self._fp.close()

    def __enter__(self) -> "CsvChainSink":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


@dataclass(frozen=True, eq=False)
class ChainStats:
    n_steps: int
    n_samples: int
    accepted: int
    proposals: int
    mean_k: float
    mean: np.ndarray
    variance: np.ndarray
    final: SpectralVector

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_steps": self.n_steps,
            "n_samples": self.n_samples,
            "acceptance_rate": self.acceptance_rate,
            "mean_k": self.mean_k,
            "mean": [float(v) for v in self.mean],
            "variance": [float(v) for v in self.variance],
        }


class _Moments:
    """Pooled per-mode running mean and variance (parallel Welford updates)."""

    def __init__(self, dim: int) -> None:
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(rows)
        n_b = rows.shape[0]
        mean_b = rows.mean(axis=0)
        m2_b = np.sum((rows - mean_b) ** 2, axis=0)
        total = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / total)
        self.m2 = self.m2 + m2_b + delta**2 * (self.count * n_b / total)
        self.count = total

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.count - 1) if self.count > 1 else np.zeros_like(self.m2)


def run_chain(
    x0: SpectralVector | np.ndarray,
    kernel: PhmcKernel,
    n_steps: int,
    rng: RngStream,
    sink: Optional[ChainSink] = None,
    *,
    burn_in: int = 0,
    progress: bool = False,
) -> ChainStats:
    """Iterate *kernel* from *x0* (one chain per leading batch row).

    Moments are pooled over chains and over steps after *burn_in*.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    x = np.array(coefficients_of(x0), dtype=float)
    moments = _Moments(kernel.dim)
    accepted_total = 0
    proposals = 0
    k_total = 0.0
    default_k = math.ceil(kernel.T / kernel.integrator.dt)

    for step in tqdm(range(1, n_steps + 1), disable=not progress, desc="chain", leave=False):
        try:
            if kernel.metropolis:
                result = randomized_phmc_step(x, kernel, rng)
                x = result.next.coefficients
                accepted, ks, energies = result.accepted, result.steps, result.energy
            else:
                start = x
                x, xi, _ = _exact_transition(start, kernel, rng)
                accepted = np.ones(x.shape[:-1], dtype=bool)
                ks = np.full(x.shape[:-1], default_k)
                energies = energy(start, xi, kernel)
        except IntegratorDivergenceError as exc:
            logger.error("Chain diverged at step %d", step)
            raise IntegratorDivergenceError(step, exc.norm) from exc

        accepted_arr = np.atleast_1d(accepted)
        accepted_total += int(np.count_nonzero(accepted_arr))
        proposals += accepted_arr.size
        k_total += float(np.sum(ks))
        if step > burn_in:
            moments.update(x.reshape(-1, kernel.dim))
        if sink is not None:
            sink.write(step, accepted, ks, energies, x)

    return ChainStats(
        n_steps=n_steps,
        n_samples=moments.count,
        accepted=accepted_total,
        proposals=proposals,
        mean_k=k_total / proposals if proposals else 0.0,
        mean=moments.mean,
        variance=moments.variance,
        final=SpectralVector(x, kernel.weight, EIGEN),
    )
