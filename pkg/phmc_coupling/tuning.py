"""Step-size tuning for the Metropolis-adjusted kernel.

The step size is bisected (geometrically) on ``[1e-6, T]`` until the mean acceptance
probability over a fixed batch of trial proposals lands in
``[target, target + tolerance]``.  Every evaluation reuses the same random stream,
so the measured acceptance is a deterministic function of ``dt``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import BracketError
from .rng import RngStream
from .sampler import PhmcKernel, metropolis_transition
from .spectral import coefficients_of, sample_gaussian

logger = logging.getLogger(__name__)

__all__ = ["TuningResult", "measure_acceptance", "tune_stepsize", "MIN_DT", "TRACE_COLUMNS"]

MIN_DT = 1e-6
TRACE_COLUMNS = ["iteration", "dt", "acceptance"]


@dataclass(frozen=True, eq=False)
class TuningResult:
    dt: float
    acceptance: float
    trace: pd.DataFrame


def measure_acceptance(kernel: PhmcKernel, dt: float, trials: int, seed: int, x0: np.ndarray | None = None) -> float:
    """Mean Metropolis acceptance probability of *trials* proposals at step size *dt*.

    Trial states are *x0* (broadcast) or, by default, draws from ``N(0, C)``.
    """
    rng = RngStream(seed)
    k = kernel.with_step(dt)
    if x0 is None:
        x = sample_gaussian(k.C, rng, size=trials).coefficients
    else:
        x = np.broadcast_to(coefficients_of(x0), (trials, k.dim)).copy()
    xi = sample_gaussian(k.C_tilde, rng, size=trials).coefficients
    steps = rng.geometric(k.duration.success_probability, size=trials)
    uniform = rng.uniform(trials)
    _, _, prob, _ = metropolis_transition(x, xi, steps, uniform, k)
    return float(np.mean(prob))


def tune_stepsize(
    kernel: PhmcKernel,
    target: float = 0.99,
    trials: int = 1000,
    seed: int = 0,
    *,
    x0: np.ndarray | None = None,
    tolerance: float = 0.005,
    max_iter: int = 60,
    progress: bool = False,
) -> TuningResult:
    """Largest-found ``dt`` whose acceptance lies in ``[target, target + tolerance]``.

    Returns ``T`` itself when ``dt = T`` already reaches the target (e.g. G = 0).

    Raises:
        BracketError: If the search closes in on ``dt = 1e-6`` without reaching the target.
    """
    if not kernel.metropolis:
        raise ValueError("step-size tuning needs a Metropolis-adjusted kernel")
    if not 0 < target < 1:
        raise ValueError(f"target acceptance must lie in (0, 1), got {target}")
    rows = []

    def evaluate(dt: float) -> float:
        acc = measure_acceptance(kernel, dt, trials, seed, x0)
        rows.append({"iteration": len(rows), "dt": dt, "acceptance": acc})
        logger.debug("dt=%.3e acceptance=%.4f", dt, acc)
        return acc

    hi = kernel.T
    acc_hi = evaluate(hi)
    if acc_hi >= target:
        return TuningResult(hi, acc_hi, pd.DataFrame(rows, columns=TRACE_COLUMNS))

    # lo is only ever a point known (or assumed, for MIN_DT) to reach the target
    lo, best, best_acc = MIN_DT, None, math.nan
    for _ in tqdm(range(max_iter), disable=not progress, desc="tuning", leave=False):
        mid = math.sqrt(lo * hi)
        acc = evaluate(mid)
        if acc >= target:
            lo, best, best_acc = mid, mid, acc
            if acc <= target + tolerance:
                break
        else:
            hi = mid
        if hi / lo < 1.01:
            break
    else:
        logger.warning("Step-size search stopped after %d iterations (acceptance %.4f)", max_iter, best_acc)
    if best is None:
        raise BracketError(f"no step size in [{MIN_DT:g}, {kernel.T:g}] reaches acceptance {target} (last {rows[-1]['acceptance']:.4f} at dt={rows[-1]['dt']:.3g})")
    logger.info("Tuned dt=%.4g (acceptance %.4f, target %.3f)", best, best_acc, target)
    return TuningResult(best, best_acc, pd.DataFrame(rows, columns=TRACE_COLUMNS))
