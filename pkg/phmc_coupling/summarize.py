"""Aggregate replica tables into per-grid-point summaries and plot data.

Coupling-time tables (one row per ``(gamma_rule, T, replica)``) are grouped by
``(gamma_rule, T)``.  Censored replicas enter the mean at their censoring step, so
the reported mean is a lower bound whenever ``censored > 0``.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List

import numpy as np
import pandas as pd

from .coupling import COUPLING_COLUMNS

logger = logging.getLogger(__name__)

__all__ = [
    "SUMMARY_COLUMNS",
    "MINIMUM_COLUMNS",
    "PLOT_COLUMNS",
    "summarize_coupling_times",
    "minimum_by_rule",
    "coupling_time_plot_data",
    "trace_plot_data",
    "decay_plot_data",
]

SUMMARY_COLUMNS = ["gamma_rule", "T", "replicas", "mean_meet", "median_meet", "se_meet", "censored", "censored_fraction"]
MINIMUM_COLUMNS = ["gamma_rule", "T_min", "mean_meet_min"]
PLOT_COLUMNS = ["x", "y", "series"]


def _se(values: pd.Series) -> float:
    if len(values) < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def summarize_coupling_times(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean/median/SE of meeting steps and censoring counts per ``(gamma_rule, T)``.

    Row order follows the first appearance of each grid point in *frame*.
    """
    missing = [c for c in COUPLING_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"coupling-time table lacks columns: {', '.join(missing)}")
    rows: List[Dict[str, object]] = []
    for (rule, T), group in frame.groupby(["gamma_rule", "T"], sort=False):
        steps = group["meet_steps"].astype(float)
        censored = int(group["censored"].astype(bool).sum())
        rows.append(
            {
                "gamma_rule": rule,
                "T": float(T),
                "replicas": int(len(group)),
                "mean_meet": float(steps.mean()),
                "median_meet": float(steps.median()),
                "se_meet": _se(steps),
                "censored": censored,
                "censored_fraction": censored / len(group),
            }
        )
        if censored:
            logger.warning("%d of %d replicas censored at gamma=%s, T=%g", censored, len(group), rule, T)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def minimum_by_rule(summary: pd.DataFrame) -> pd.DataFrame:
    """Duration minimising the mean coupling time, per gamma rule."""
    rows = []
    for rule, group in summary.groupby("gamma_rule", sort=False):
        best = group.loc[group["mean_meet"].idxmin()]
        rows.append({"gamma_rule": rule, "T_min": float(best["T"]), "mean_meet_min": float(best["mean_meet"])})
    return pd.DataFrame(rows, columns=MINIMUM_COLUMNS)


def coupling_time_plot_data(summary: pd.DataFrame) -> pd.DataFrame:
    """Mean coupling time against T, one series per gamma rule."""
    frame = pd.DataFrame(
        {
            "x": summary["T"].astype(float),
            "y": summary["mean_meet"].astype(float),
            "series": summary["gamma_rule"].astype(str),
        },
        columns=PLOT_COLUMNS,
    )
    return frame.reset_index(drop=True)


def trace_plot_data(traces: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """Distance against step for labelled coupling traces."""
    parts = [
        pd.DataFrame({"x": t["step"].astype(int), "y": t["distance"].astype(float), "series": label}, columns=PLOT_COLUMNS)
        for label, t in traces.items()
    ]
    if not parts:
        return pd.DataFrame(columns=PLOT_COLUMNS)
    return pd.concat(parts, ignore_index=True)


def decay_plot_data(series: pd.DataFrame, label: str = "mean_distance") -> pd.DataFrame:
    """Mean coupled distance against step (non-positive means dropped for log axes)."""
    frame = series[series["mean_distance"] > 0]
    return pd.DataFrame(
        {"x": frame["step"].astype(int), "y": np.asarray(frame["mean_distance"], dtype=float), "series": label},
        columns=PLOT_COLUMNS,
    ).reset_index(drop=True)
