"""Two-scale coupling of pHMC transitions.

Low modes use a maximal coupling of ``N(0, C_tilde)`` with its shift by ``gamma z``
(falling back to the reflection of the velocity); high modes share the velocity.
With ``z = x - y``:

    eta_low = xi_low + gamma z_low   if U <= rho_{-gamma z_low}(xi_low)
            = R xi_low                otherwise
    eta_high = xi_high

and ``X' = q_T(x, xi)``, ``Y' = q_T(y, eta)``.  Metropolis-adjusted kernels share the
step count (and by default the accept/reject uniform) between both components.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm

from .errors import ReflectionUndefinedError
from .metrics import AlphaNorm, alpha_norm
from .replicas import run_replicas
from .rng import RngStream, StreamBatch
from .sampler import PhmcKernel, draw_duration, flow_positions, metropolis_transition
from .spectral import EIGEN, ModeSplit, SpectralOperator, SpectralVector, coefficients_of, sample_gaussian

logger = logging.getLogger(__name__)

__all__ = [
    "GAMMA_RULES",
    "RADIUS_RULES",
    "SYNC",
    "SHIFT",
    "REFLECT",
    "CouplingKernel",
    "CoupledPair",
    "FailureEstimate",
    "resolve_gamma",
    "reflection_apply",
    "max_coupling_density",
    "coupled_step",
    "coupling_failure_probability",
    "coupling_trace",
    "meeting_times",
    "coupling_time_experiment",
    "COUPLING_COLUMNS",
    "TRACE_COLUMNS",
]

GAMMA_RULES = ("zero", "one-over-T", "cot-T", "radius", "theorem-2.1")

# Rule names that resolve through the contraction radius R.
RADIUS_RULES = frozenset({"radius", "theorem-2.1"})

SYNC, SHIFT, REFLECT = 0, 1, 2

COUPLING_COLUMNS = ["gamma_rule", "T", "replica", "meet_steps", "censored"]
TRACE_COLUMNS = ["step", "distance", "branch", "coalesced"]

Rng = Union[RngStream, StreamBatch]


def resolve_gamma(rule: Union[str, float], T: float, R: float | None = None) -> float:
    """Numeric gamma for a rule name or a literal non-negative number."""
    if isinstance(rule, str):
        if rule == "zero":
            value = 0.0
        elif rule == "one-over-T":
            value = 1.0 / T
        elif rule == "cot-T":
            value = 1.0 / math.tan(T)
        elif rule in RADIUS_RULES:
            if R is None:
                raise ValueError(f"gamma rule {rule!r} needs the radius R")
            value = min(1.0 / T, 1.0 / (4.0 * R))
        else:
            raise ValueError(f"Unknown gamma rule: {rule} (known: {', '.join(GAMMA_RULES)})")
    else:
        value = float(rule)
    if not (math.isfinite(value) and value >= 0.0):
        raise ValueError(f"gamma rule {rule!r} at T={T} resolves to {value}, expected a finite non-negative number")
    return value


@dataclass(frozen=True, eq=False)
class CouplingKernel:
    """Two-scale coupling built on a pHMC kernel.

    Attributes:
        base: Marginal kernel of both components.
        gamma: Rule name from :data:`GAMMA_RULES` or a number.
        split: Low/high mode split.
        meet_threshold: Alpha-norm distance at which the pair is declared coalesced.
        norm: Alpha norm used for the meeting test (defaults to alpha = 1).
        shared_uniform: Share the Metropolis uniform between the components.
        R: Radius for the ``radius`` rule.
    """

    base: PhmcKernel
    gamma: Union[str, float]
    split: ModeSplit
    meet_threshold: float = 1e-8
    norm: AlphaNorm | None = field(default=None, repr=False)
    shared_uniform: bool = True
    R: float | None = None

    def __post_init__(self) -> None:
        self.split.validate(self.base.dim)
        if not self.meet_threshold > 0:
            raise ValueError(f"meet_threshold must be positive, got {self.meet_threshold}")
        if self.norm is None:
            object.__setattr__(self, "norm", AlphaNorm(1.0, self.split, self.base.C, self.base.C_tilde))
        resolve_gamma(self.gamma, self.base.T, self.R)

    @property
    def gamma_value(self) -> float:
        return resolve_gamma(self.gamma, self.base.T, self.R)

    def with_duration(self, T: float) -> "CouplingKernel":
        return replace(self, base=self.base.with_duration(T))

    def with_gamma(self, gamma: Union[str, float]) -> "CouplingKernel":
        return replace(self, gamma=gamma)

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
        return alpha_norm(np.asarray(x) - np.asarray(y), self.norm)


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Current states of both components.

    ``coalesced`` (per batch row) is absorbing; coalesced rows satisfy ``Y == X``.
    ``branch`` holds the low-mode branch of the last step (SYNC, SHIFT or REFLECT).
    """

    X: SpectralVector
    Y: SpectralVector
    coalesced: np.ndarray | bool = False
    branch: np.ndarray | int | None = None

    @classmethod
    def start(cls, x: SpectralVector | np.ndarray, y: SpectralVector | np.ndarray, kernel: CouplingKernel) -> "CoupledPair":
        xc = np.array(coefficients_of(x), dtype=float)
        yc = np.array(coefficients_of(y), dtype=float)
        xc, yc = np.broadcast_arrays(xc, yc)
        met = np.asarray(kernel.distance(xc, yc)) <= kernel.meet_threshold
        yc = np.where(met[..., None] if met.ndim else met, xc, yc)
        weight = kernel.base.weight
        coalesced = bool(met) if met.ndim == 0 else met
        return cls(SpectralVector(xc.copy(), weight, EIGEN), SpectralVector(yc.copy(), weight, EIGEN), coalesced)


# --------------------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------------------


def _like(template: SpectralVector | np.ndarray, values: np.ndarray) -> SpectralVector | np.ndarray:
    return template.replace(values) if isinstance(template, SpectralVector) else values


def reflection_apply(
    xi_low: SpectralVector | np.ndarray,
    z_low: SpectralVector | np.ndarray,
    C_tilde: SpectralOperator,
) -> SpectralVector | np.ndarray:
    """``C^{1/2} (I - 2 e e^T) C^{-1/2} xi`` with ``e = C^{-1/2} z / |C^{-1/2} z|`` (C = C_tilde).

    Raises:
        ReflectionUndefinedError: If ``z_low`` vanishes.
    """
    xi = coefficients_of(xi_low)
    z = coefficients_of(z_low)
    root = np.sqrt(C_tilde.eigenvalues)
    white_z = z / root
    length = np.linalg.norm(white_z, axis=-1, keepdims=True)
    if np.any(length == 0.0):
        raise ReflectionUndefinedError("reflection needs a non-zero low-mode difference")
    e = white_z / length
    white_xi = xi / root
    reflected = white_xi - 2.0 * e * np.sum(e * white_xi, axis=-1, keepdims=True)
    return _like(xi_low, root * reflected)


def max_coupling_density(h: SpectralVector | np.ndarray, x: SpectralVector | np.ndarray, C_tilde: SpectralOperator) -> np.ndarray | float:
    """Density ``exp(<C^-1 h, x> - <C^-1 h, h>/2)`` of ``N(h, C)`` relative to ``N(0, C)``."""
    hc = coefficients_of(h)
    xc = coefficients_of(x)
    inv = 1.0 / C_tilde.eigenvalues
    value = np.exp(np.sum(inv * hc * xc, axis=-1) - 0.5 * np.sum(inv * hc * hc, axis=-1))
    return float(value) if np.ndim(value) == 0 else value


def _coupled_velocities(
    x: np.ndarray, y: np.ndarray, kernel: CouplingKernel, rng: Rng
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``xi`` and build ``eta``; returns ``(xi, eta, branch)``."""
    batch = x.shape[:-1]
    C_tilde = kernel.base.C_tilde
    n = kernel.split.n
    gamma = kernel.gamma_value

    xi = sample_gaussian(C_tilde, rng, size=batch).coefficients
    u = np.asarray(rng.uniform(batch if batch else None))

    lam = C_tilde.eigenvalues[:n]
    z_low = (x - y)[..., :n]
    xi_low = xi[..., :n]
    norm2 = np.sum(z_low**2 / lam, axis=-1)
    sync = (norm2 == 0.0) | (gamma == 0.0)

    shift_vec = gamma * z_low
    log_ratio = -np.sum(shift_vec * xi_low / lam, axis=-1) - 0.5 * gamma**2 * norm2
    with np.errstate(divide="ignore"):
        shift = ~sync & (np.log(u) <= log_ratio)
    reflect = ~sync & ~shift

    # reflection with a safe direction on rows where it is not used
    safe_z = np.where(sync[..., None], 1.0, z_low)
    reflected = coefficients_of(reflection_apply(xi_low, safe_z, SpectralOperator(lam, "C_tilde_low")))
    eta_low = np.where(shift[..., None], xi_low + shift_vec, np.where(reflect[..., None], reflected, xi_low))
    eta = np.concatenate([eta_low, xi[..., n:]], axis=-1)
    branch = np.where(sync, SYNC, np.where(shift, SHIFT, REFLECT))
    return xi, eta, branch


def coupled_step(pair: CoupledPair, kernel: CouplingKernel, rng: Rng) -> CoupledPair:
    """One transition of the two-scale coupling.

    Draw order: velocity, coupling uniform, then (Metropolis kernels) step count and
    accept/reject uniform(s).  Coalesced rows are moved synchronously and stay equal.
    """
    base = kernel.base
    x = pair.X.coefficients
    y = pair.Y.coefficients
    batch = x.shape[:-1]
    xi, eta, branch = _coupled_velocities(x, y, kernel, rng)

    if base.metropolis:
        steps = rng.geometric(base.duration.success_probability, size=batch if batch else None)
        u_x = rng.uniform(batch if batch else None)
        u_y = u_x if kernel.shared_uniform else rng.uniform(batch if batch else None)
        x_next, _, _, _ = metropolis_transition(x, xi, steps, u_x, base)
        y_next, _, _, _ = metropolis_transition(y, eta, steps, u_y, base)
    else:
        T = draw_duration(base, rng)
        x_next = flow_positions(x, xi, T, base)
        y_next = flow_positions(y, eta, T, base)

    met = np.asarray(pair.coalesced) | (np.asarray(kernel.distance(x_next, y_next)) <= kernel.meet_threshold)
    y_next = np.where(met[..., None] if met.ndim else met, x_next, y_next)
    return CoupledPair(
        X=pair.X.replace(x_next),
        Y=pair.Y.replace(y_next),
        coalesced=bool(met) if met.ndim == 0 else met,
        branch=int(branch) if np.ndim(branch) == 0 else branch,
    )


# --------------------------------------------------------------------------------------
# Failure probability of the low-mode maximal coupling
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureEstimate:
    empirical: float
    se: float
    tv_exact: float
    bound: float


def coupling_failure_probability(
    z_low: SpectralVector | np.ndarray,
    gamma: float,
    C_tilde: SpectralOperator,
    n_samples: int,
    rng: RngStream,
) -> FailureEstimate:
    """Monte Carlo frequency of the reflection branch against its closed form.

    With ``h = |gamma C_tilde^{-1/2} z_low|`` the exact probability is
    ``2 (Phi(h/2) - 1/2)`` and it never exceeds ``h / sqrt(2 pi)``.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be at least 1000, got {n_samples}")
    z = coefficients_of(z_low)
    h = float(gamma * np.sqrt(np.sum(z**2 / C_tilde.eigenvalues)))
    if h == 0.0:
        return FailureEstimate(0.0, 0.0, 0.0, 0.0)
    xi = sample_gaussian(C_tilde, rng, size=n_samples).coefficients
    u = rng.uniform(n_samples)
    shift = -gamma * z
    log_ratio = np.sum(shift * xi / C_tilde.eigenvalues, axis=-1) - 0.5 * h**2
    with np.errstate(divide="ignore"):
        failures = np.log(u) > log_ratio
    freq = float(np.mean(failures))
    return FailureEstimate(
        empirical=freq,
        se=math.sqrt(max(freq * (1 - freq), 1e-300) / n_samples),
        tv_exact=float(2.0 * (norm.cdf(h / 2.0) - 0.5)),
        bound=h / math.sqrt(2.0 * math.pi),
    )


# --------------------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------------------


def coupling_trace(
    x0: SpectralVector | np.ndarray,
    y0: SpectralVector | np.ndarray,
    kernel: CouplingKernel,
    n_steps: int,
    rng: RngStream,
    *,
    stop_at_meet: bool = True,
) -> pd.DataFrame:
    """Distance of a single coupled run after every step (step 0 is the start)."""
    pair = CoupledPair.start(x0, y0, kernel)
    rows = [{"step": 0, "distance": float(kernel.distance(pair.X.coefficients, pair.Y.coefficients)),
             "branch": -1, "coalesced": bool(pair.coalesced)}]
    for step in range(1, n_steps + 1):
        if stop_at_meet and pair.coalesced:
            break
        was_coalesced = bool(pair.coalesced)
        pair = coupled_step(pair, kernel, rng)
        dist = kernel.distance(pair.X.coefficients, pair.Y.coefficients)
        if pair.coalesced and not was_coalesced:
            logger.debug("Coupled run met after %d steps", step)
        rows.append({"step": step, "distance": float(dist), "branch": int(pair.branch), "coalesced": bool(pair.coalesced)})
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def meeting_times(
    x0: SpectralVector | np.ndarray,
    y0: SpectralVector | np.ndarray,
    kernel: CouplingKernel,
    streams: Sequence[RngStream],
    max_steps: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """First meeting step of one coupled run per stream, simulated as one batch.

    Returns:
        ``(meet_steps, censored)``; censored runs report *max_steps*.
    """
    count = len(streams)
    xc = np.broadcast_to(coefficients_of(x0), (count, kernel.base.dim))
    yc = np.broadcast_to(coefficients_of(y0), (count, kernel.base.dim))
    pair = CoupledPair.start(xc, yc, kernel)
    batch = StreamBatch(streams)
    meet = np.where(pair.coalesced, 0, -1)
    for step in range(1, max_steps + 1):
        if np.all(meet >= 0):
            break
        pair = coupled_step(pair, kernel, batch)
        meet = np.where((meet < 0) & pair.coalesced, step, meet)
    censored = meet < 0
    return np.where(censored, max_steps, meet), censored


def _rule_name(rule: Union[str, float]) -> str:
    return rule if isinstance(rule, str) else repr(float(rule))


def coupling_time_experiment(
    x0: SpectralVector | np.ndarray,
    y0: SpectralVector | np.ndarray,
    kernel: CouplingKernel,
    rules: Iterable[Union[str, float]],
    T_grid: Iterable[float],
    replicas: int,
    rng: RngStream,
    *,
    max_steps: int = 10_000,
    workers: int | None = None,
    chunk_size: int = 25,
    progress: bool = False,
) -> pd.DataFrame:
    """Meeting-time table over a grid of durations and gamma rules.

    Replica *r* at grid index *i* uses stream ``rng.child(i, r)`` for every rule, so
    the rules are compared on common random numbers.  Rows are ordered by rule, T and
    replica regardless of the worker count.
    """
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    rules = list(rules)
    grid = [float(T) for T in T_grid]

    tasks: List[Tuple[Union[str, float], int, float, List[int]]] = []
    for rule in rules:
        for i, T in enumerate(grid):
            for start in range(0, replicas, chunk_size):
                tasks.append((rule, i, T, list(range(start, min(start + chunk_size, replicas)))))

    def run(task: Tuple[Union[str, float], int, float, List[int]]) -> Tuple[np.ndarray, np.ndarray]:
        rule, i, T, reps = task
        sub = kernel.with_duration(T).with_gamma(rule)
        return meeting_times(x0, y0, sub, [rng.child(i, r) for r in reps], max_steps)

    logger.info("Running %d coupled replicas over %d durations and %d gamma rules", replicas, len(grid), len(rules))
    results = run_replicas(run, tasks, workers=workers, progress=progress, desc="coupling")

    rows = []
    for (rule, _, T, reps), (meet, censored) in zip(tasks, results):
        for r, steps, cens in zip(reps, meet, censored):
            rows.append({"gamma_rule": _rule_name(rule), "T": T, "replica": r, "meet_steps": int(steps), "censored": bool(cens)})
    frame = pd.DataFrame(rows, columns=COUPLING_COLUMNS)
    n_censored = int(frame["censored"].sum())
    if n_censored:
        logger.warning("%d replicas did not meet within %d steps (censored)", n_censored, max_steps)
    return frame
