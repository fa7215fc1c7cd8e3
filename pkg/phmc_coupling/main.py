"""CLI entrypoint for phmc_coupling.

Usage examples:
    # Mean coupling time against T for the configured gamma rules
    python -m phmc_coupling coupling-times --config config.toml --out results

    # Constant bundle of the configured model, then the property suite
    python -m phmc_coupling constants --seed 1
    python -m phmc_coupling validate --seed 1 --full
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .config import COMMANDS, ExperimentConfig, load_config
from .coupling import COUPLING_COLUMNS, RADIUS_RULES, TRACE_COLUMNS, CouplingKernel, coupling_time_experiment, coupling_trace
from .errors import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    IntegratorDivergenceError,
    PhmcError,
)
from .flow import EXACT_LINEAR
from .metrics import DECAY_COLUMNS, empirical_wasserstein_decay, fit_decay_rate
from .models import PathModel
from .report import export_pdf, write_json, write_manifest, write_svg_chart, write_table
from .rng import SPLITTING_RULE, RngStream
from .sampler import CsvChainSink, PhmcKernel, run_chain
from .spectral import ModeSplit
from .summarize import (
    MINIMUM_COLUMNS,
    PLOT_COLUMNS,
    SUMMARY_COLUMNS,
    coupling_time_plot_data,
    decay_plot_data,
    minimum_by_rule,
    summarize_coupling_times,
    trace_plot_data,
)
from .theory import (
    application_constants,
    condition_a0a_ratio,
    discrete_constants,
    lyapunov_precondition,
    mixing_time,
    model_contraction_constants,
)
from .tuning import TRACE_COLUMNS as TUNING_COLUMNS
from .tuning import tune_stepsize
from .validate import CHECK_COLUMNS, run_suite

logger = logging.getLogger("phmc_coupling")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
CONDITION_COLUMNS = ["condition", "lhs", "rhs", "ratio", "ok"]
STREAM_INITIAL, STREAM_EXPERIMENT, STREAM_CHAIN, STREAM_TRACE, STREAM_DECAY = range(5)


class ValidationFailed(PhmcError):
    """A command ran to completion but at least one checked property failed."""


@dataclass
class RunContext:
    """Everything a command handler needs; handlers record their outputs here."""

    config: ExperimentConfig
    args: argparse.Namespace
    staging: Path
    rng: RngStream
    outputs: List[str]
    extra: Dict[str, Any]
    tables: Dict[str, pd.DataFrame]
    constants: Dict[str, Any]

    def table(self, frame: pd.DataFrame, name: str, columns: Sequence[str]) -> None:
        write_table(frame, self.staging / name, columns)
        self.outputs.append(name)

    def json(self, data: Dict[str, Any], name: str) -> None:
        write_json(data, self.staging / name)
        self.outputs.append(name)

    def chart(self, plot: pd.DataFrame, name: str, **labels: str) -> None:
        if self.args.no_svg:
            return
        write_svg_chart(plot, self.staging / name, **labels)
        self.outputs.append(name)


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(prog="phmc_coupling", description="pHMC sampling and two-scale coupling experiments")
    parser.add_argument("command", nargs="?", choices=COMMANDS, default=None, help="Experiment to run (defaults to the config file's command).")
    parser.add_argument("--config", type=Path, default=None, help="TOML or JSON config (defaults to the package config.toml).")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (overrides out_dir).")
    parser.add_argument("--seed", type=int, default=None, help="Master seed (overrides the config).")
    parser.add_argument("--replicas", type=int, default=None, help="Replicas per grid point / chains.")
    parser.add_argument("--steps", type=int, default=None, help="Chain length or trace length.")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads (PHMC_THREADS takes precedence).")
    parser.add_argument("--full", action="store_true", help="validate: include the Lyapunov and contraction Monte Carlo checks.")
    parser.add_argument("--pdf", action="store_true", help="Also write a PDF summary report.")
    parser.add_argument("--no-svg", action="store_true", help="Skip the SVG line charts.")
    parser.add_argument("--progress", action="store_true", help="Show progress bars.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging.")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only.")
    return parser.parse_args(argv)


# ----------------------------------------------------------------------
# Kernel assembly
# ----------------------------------------------------------------------


def _kernel(ctx: RunContext, model: PathModel) -> PhmcKernel:
    """pHMC kernel from the config; Metropolis kernels without ``dt`` are tuned."""
    cfg = ctx.config.kernel
    drift = model.drift()
    scheme = EXACT_LINEAR if drift.is_linear else cfg.scheme
    dt = cfg.dt
    if dt is None and not cfg.metropolis:
        dt = cfg.T
    kernel = PhmcKernel.for_model(
        model, cfg.T, dt or cfg.T, metropolis=cfg.metropolis, duration=cfg.duration, scheme=scheme
    )
    if cfg.metropolis and cfg.dt is None:
        tuned = tune_stepsize(
            kernel,
            cfg.target_acceptance,
            cfg.tuning_trials,
            ctx.config.seed,
            progress=ctx.args.progress,
        )
        ctx.table(tuned.trace, "tuning.csv", TUNING_COLUMNS)
        ctx.extra["tuned_dt"] = tuned.dt
        ctx.extra["tuned_acceptance"] = tuned.acceptance
        kernel = kernel.with_step(tuned.dt)
    logger.info("Kernel: T=%g dt=%g metropolis=%s", kernel.T, kernel.integrator.dt, kernel.metropolis)
    return kernel


def _coupling_kernel(ctx: RunContext, model: PathModel, base: PhmcKernel) -> CouplingKernel:
    cfg = ctx.config.kernel
    n = cfg.n or max(model.drift().n, model.d)
    R = None
    if cfg.gamma in RADIUS_RULES or RADIUS_RULES.intersection(cfg.gamma_rules):
        R = model_contraction_constants(model, cfg.T).R
    return CouplingKernel(base, cfg.gamma, ModeSplit(n), meet_threshold=cfg.meet_threshold, R=R)


def _initial_states(ctx: RunContext, model: PathModel) -> tuple[np.ndarray, np.ndarray]:
    rng = ctx.rng.child(STREAM_INITIAL)
    return ctx.config.initial_x.state(model, rng.child(0)), ctx.config.initial_y.state(model, rng.child(1))


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def _cmd_sample(ctx: RunContext, model: PathModel) -> None:
    config = ctx.config
    kernel = _kernel(ctx, model)
    x0 = config.initial_x.state(model, ctx.rng.child(STREAM_INITIAL, 0), replicas=config.replicas)
    with CsvChainSink(ctx.staging / "chain.csv", model.dim, thin=config.thin) as sink:
        stats = run_chain(x0, kernel, config.steps, ctx.rng.child(STREAM_CHAIN), sink, burn_in=config.burn_in, progress=ctx.args.progress)
    ctx.outputs.append("chain.csv")
    ctx.json(stats.to_dict(), "chain_stats.json")
    logger.info("Chain finished: acceptance %.4f, mean steps %.2f", stats.acceptance_rate, stats.mean_k)


def _cmd_couple(ctx: RunContext, model: PathModel) -> None:
    config = ctx.config
    coupling = _coupling_kernel(ctx, model, _kernel(ctx, model))
    x0, y0 = _initial_states(ctx, model)

    traces: Dict[str, pd.DataFrame] = {}
    for j, rule in enumerate(config.kernel.gamma_rules):
        traces[str(rule)] = coupling_trace(x0, y0, coupling.with_gamma(rule), config.steps, ctx.rng.child(STREAM_TRACE, j))
    frame = pd.concat([t.assign(gamma_rule=rule) for rule, t in traces.items()], ignore_index=True)
    ctx.table(frame, "traces.csv", ["gamma_rule"] + TRACE_COLUMNS)
    plot = trace_plot_data(traces)
    ctx.table(plot, "traces_plot.csv", PLOT_COLUMNS)
    ctx.chart(plot, "traces.svg", title="Coupled distance", x_label="step", y_label="distance")

    decays, rates = [], {}
    for j, rule in enumerate(config.kernel.gamma_rules):
        series = empirical_wasserstein_decay(
            coupling.with_gamma(rule), x0, y0, config.steps, max(2, config.replicas), ctx.rng.child(STREAM_DECAY, j)
        )
        rates[str(rule)] = fit_decay_rate(series)
        decays.append(series.assign(gamma_rule=str(rule)))
    ctx.table(pd.concat(decays, ignore_index=True), "decay.csv", ["gamma_rule"] + DECAY_COLUMNS)
    ctx.table(
        pd.concat([decay_plot_data(d, label=d["gamma_rule"].iloc[0]) for d in decays], ignore_index=True),
        "decay_plot.csv",
        PLOT_COLUMNS,
    )
    ctx.extra["decay_rates"] = rates


def _cmd_coupling_times(ctx: RunContext, model: PathModel) -> None:
    config = ctx.config
    coupling = _coupling_kernel(ctx, model, _kernel(ctx, model))
    x0, y0 = _initial_states(ctx, model)
    grid = config.kernel.T_grid or (config.kernel.T,)
    frame = coupling_time_experiment(
        x0,
        y0,
        coupling,
        config.kernel.gamma_rules,
        grid,
        config.replicas,
        ctx.rng.child(STREAM_EXPERIMENT),
        max_steps=config.kernel.max_steps,
        workers=config.workers,
        progress=ctx.args.progress,
    )
    summary = summarize_coupling_times(frame)
    minimum = minimum_by_rule(summary)
    plot = coupling_time_plot_data(summary)
    ctx.table(frame, "coupling_times.csv", COUPLING_COLUMNS)
    ctx.table(summary, "coupling_summary.csv", SUMMARY_COLUMNS)
    ctx.table(minimum, "coupling_minimum.csv", MINIMUM_COLUMNS)
    ctx.table(plot, "coupling_times_plot.csv", PLOT_COLUMNS)
    ctx.chart(plot, "coupling_times.svg", title="Mean coupling time", x_label="T", y_label="mean meeting step")
    ctx.tables.update({"coupling summary": summary, "minimum over T": minimum})
    for row in minimum.itertuples(index=False):
        logger.info("gamma=%s: minimum mean coupling time %.2f at T=%g", row.gamma_rule, row.mean_meet_min, row.T_min)


def _constants_bundle(model: PathModel, T: float, delta: float) -> Dict[str, Any]:
    general = model_contraction_constants(model, T)
    bundle: Dict[str, Any] = {"general": general.to_tagged_dict()}
    app = application_constants(model, T)
    bundle["application"] = app.to_tagged_dict()
    bundle["discrete"] = discrete_constants(model, T, app.R).to_dict()
    bundle["m_admitted"] = app.admits(model.m)
    if general.condition.ok and T < general.R:
        bundle["mixing_time"] = mixing_time(general, delta)
    else:
        bundle["mixing_time"] = None
        logger.warning("No mixing-time bound at T=%g: duration condition fails", T)
    return bundle


def _cmd_constants(ctx: RunContext, model: PathModel) -> None:
    bundle = _constants_bundle(model, ctx.config.kernel.T, ctx.config.kernel.delta)
    ctx.json(bundle, "constants.json")
    ctx.constants.update(bundle["general"])


def _cmd_check_conditions(ctx: RunContext, model: PathModel) -> None:
    T = ctx.config.kernel.T
    general = model_contraction_constants(model, T)
    app = application_constants(model, T)
    reports = [
        lyapunov_precondition(general.drift, T),
        general.condition,
        app.condition,
        condition_a0a_ratio(app.drift, app.sigma_ratio_bound, app.R, T, name=f"A0A implied by {app.condition.name}"),
    ]
    rows = [{"condition": r.name, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "ok": r.ok} for r in reports]
    frame = pd.DataFrame(rows, columns=CONDITION_COLUMNS)
    ctx.table(frame, "conditions.csv", CONDITION_COLUMNS)
    ctx.tables["conditions"] = frame
    failed = [r.name for r in reports if not r.ok]
    if failed:
        raise ValidationFailed(f"conditions fail at T={T}: {', '.join(failed)}")


def _cmd_validate(ctx: RunContext, model: PathModel) -> None:
    frame = run_suite(ctx.config.seed, full=ctx.args.full, progress=ctx.args.progress)
    ctx.table(frame, "validation.csv", CHECK_COLUMNS)
    ctx.tables["validation"] = frame
    failed = frame.loc[~frame["ok"].astype(bool), "check"].tolist()
    if failed:
        raise ValidationFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}")


HANDLERS: Dict[str, Callable[[RunContext, PathModel], None]] = {
    "sample": _cmd_sample,
    "couple": _cmd_couple,
    "coupling-times": _cmd_coupling_times,
    "constants": _cmd_constants,
    "check-conditions": _cmd_check_conditions,
    "validate": _cmd_validate,
}


# ----------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------


def _publish(staging: Path, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for item in sorted(staging.iterdir()):
        target = out_dir / item.name
        if target.exists():
            target.unlink()
        shutil.move(str(item), str(target))
    staging.rmdir()


def run(config: ExperimentConfig, args: argparse.Namespace) -> int:
    """Execute *config*; outputs appear in ``config.out_dir`` only if the command completes.

    Returns:
        Process exit code (0 ok, 1 validation or condition failure, 3 divergence).
    """
    out_dir = Path(config.out_dir)
    staging = out_dir.with_name(f".{out_dir.name}.partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    ctx = RunContext(config, args, staging, RngStream(config.seed), [], {}, {}, {})
    status = EXIT_OK
    try:
        model = config.model.build(seed=config.seed)
        logger.info("Running %s on %s model (d=%d, m=%d, N=%d)", config.command, model.kind, model.d, model.m, model.dim)
        try:
            HANDLERS[config.command](ctx, model)
        except ValidationFailed as exc:
            # the table that shows the failure is still published
            logger.error("%s", exc)
            status = EXIT_VALIDATION
        ctx.outputs.append("manifest.json")
        manifest_path = write_manifest(
            staging,
            config.to_dict(),
            version=__version__,
            splitting_rule=SPLITTING_RULE,
            outputs=ctx.outputs,
            extra={"exit_status": status, **ctx.extra},
        )
        if args.pdf:
            manifest = json.loads(manifest_path.read_text())
            export_pdf(staging / "report.pdf", manifest, constants=ctx.constants, tables=ctx.tables)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    _publish(staging, out_dir)
    logger.info("Wrote %d files to %s", len(ctx.outputs) + int(args.pdf), out_dir)
    return status


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def main(argv: Sequence[str] | None = None) -> int:  # noqa: D401
    """Parse arguments, run the command and map failures onto exit codes."""
    args = parse_args(argv)
    _configure_logging(args)
    try:
        config = load_config(
            args.config,
            command=args.command,
            seed=args.seed,
            replicas=args.replicas,
            steps=args.steps,
            workers=args.workers,
            out_dir=args.out,
        )
        return run(config, args)
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG
    except IntegratorDivergenceError as exc:
        logger.error("Numerical divergence: %s", exc)
        return EXIT_DIVERGENCE
    except PhmcError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except ValueError as exc:
        # invalid model or kernel parameters that slipped past config parsing
        logger.error("Invalid parameters: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
