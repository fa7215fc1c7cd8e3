"""Experiment configuration.

A configuration file is TOML (``.toml``) or JSON (``.json``).  When no file is given
the package-local ``config.toml`` is used.  Values given on the command line
override the file; the file overrides the dataclass defaults below.

Sections::

    seed = 1
    command = "coupling-times"
    replicas = 100

    [model]            # kind, d, m, tau | beta + a, start, end, transform
    [model.potential]  # name + params
    [kernel]           # T, dt, gamma, metropolis, duration, n, T_grid, gamma_rules, ...
    [initial.x]        # kind = zero | constant | circle | gaussian
    [initial.y]
"""

from __future__ import annotations

import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from .errors import ConfigError
from .models import PathModel, build_model, circle_loop, constant_path
from .potentials import available_potentials
from .rng import RngStream
from .spectral import SpectralVector, sample_gaussian

logger = logging.getLogger(__name__)

__all__ = [
    "COMMANDS",
    "DEFAULT_CONFIG_PATH",
    "PotentialConfig",
    "ModelConfig",
    "KernelConfig",
    "InitialConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

COMMANDS = ("sample", "couple", "coupling-times", "constants", "check-conditions", "validate")
MODEL_KINDS = ("tps", "pimd")
INITIAL_KINDS = ("zero", "constant", "circle", "gaussian")
DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.toml"


# --------------------------------------------------------------------------------------
# Field helpers
# --------------------------------------------------------------------------------------


def _number(raw: Mapping[str, Any], key: str, path: str, default: float | None, *, positive: bool = False) -> float | None:
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"must be finite, got {value}")
    if positive and not value > 0:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"must be positive, got {value}")
    return value


def _integer(raw: Mapping[str, Any], key: str, path: str, default: int | None, *, minimum: int | None = None) -> int | None:
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"must be >= {minimum}, got {value}")
    return int(value)


def _choice(raw: Mapping[str, Any], key: str, path: str, default: str, options: Tuple[str, ...]) -> str:
    value = raw.get(key, default)
    if value not in options:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected one of {', '.join(options)}, got {value!r}")
    return value


def _vector(raw: Mapping[str, Any], key: str, path: str) -> Tuple[float, ...] | None:
    value = raw.get(key)
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{path}.{key}", f"expected a list of numbers, got {value!r}")
    return tuple(float(v) for v in value)


def _section(raw: Mapping[str, Any], key: str, path: str) -> Mapping[str, Any]:
    value = raw.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a table, got {type(value).__name__}")
    return value


def _reject_unknown(raw: Mapping[str, Any], known: set[str], path: str) -> None:
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}".lstrip("."), "unknown field")


# --------------------------------------------------------------------------------------
# Sections
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialConfig:
    name: str = "zero"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, raw: Mapping[str, Any], path: str = "model.potential") -> "PotentialConfig":
        _reject_unknown(raw, {"name", "params"}, path)
        name = raw.get("name", "zero")
        if name not in available_potentials():
            raise ConfigError(f"{path}.name", f"unknown potential {name!r} (known: {', '.join(available_potentials())})")
        params = _section(raw, "params", path)
        return cls(name=name, params=dict(params))


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "tps"
    d: int = 1
    m: int = 32
    tau: float = 1.0
    beta: float = 1.0
    a: float = 1.0
    start: Tuple[float, ...] | None = None
    end: Tuple[float, ...] | None = None
    transform: str = "dense"
    potential: PotentialConfig = field(default_factory=PotentialConfig)

    @classmethod
    def parse(cls, raw: Mapping[str, Any], path: str = "model") -> "ModelConfig":
        _reject_unknown(raw, {f.name for f in fields(cls)}, path)
        d = _integer(raw, "d", path, 1, minimum=1)
        start = _vector(raw, "start", path)
        end = _vector(raw, "end", path)
        for key, vec in (("start", start), ("end", end)):
            if vec is not None and len(vec) != d:
                raise ConfigError(f"{path}.{key}", f"expected {d} entries, got {len(vec)}")
        return cls(
            kind=_choice(raw, "kind", path, "tps", MODEL_KINDS),
            d=d,
            m=_integer(raw, "m", path, 32, minimum=1),
            tau=_number(raw, "tau", path, 1.0, positive=True),
            beta=_number(raw, "beta", path, 1.0, positive=True),
            a=_number(raw, "a", path, 1.0, positive=True),
            start=start,
            end=end,
            transform=_choice(raw, "transform", path, "dense", ("dense", "fast")),
            potential=PotentialConfig.parse(_section(raw, "potential", path), f"{path}.potential"),
        )

    def to_mapping(self) -> Dict[str, Any]:
        data = asdict(self)
        data["potential"] = {"name": self.potential.name, "params": dict(self.potential.params)}
        return data

    def build(self, seed: int | None = None) -> PathModel:
        return build_model(self.to_mapping(), seed=seed)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel and experiment-grid settings.

    ``dt = None`` means: tune the step size for Metropolis kernels, integrate the
    Gaussian part exactly otherwise (``dt = T``).  ``n = None`` takes the low-mode
    count from the model's drift constants (at least one mode block).
    """

    T: float = 0.5
    dt: float | None = None
    gamma: str | float = "one-over-T"
    metropolis: bool = True
    duration: str | None = None
    scheme: str = "symmetric-splitting"
    n: int | None = None
    meet_threshold: float = 1e-8
    max_steps: int = 10000
    T_grid: Tuple[float, ...] = ()
    gamma_rules: Tuple[str, ...] = ("zero", "one-over-T")
    target_acceptance: float = 0.99
    tuning_trials: int = 1000
    delta: float = 0.01

    @classmethod
    def parse(cls, raw: Mapping[str, Any], path: str = "kernel") -> "KernelConfig":
        from .coupling import GAMMA_RULES
        from .flow import EXACT_LINEAR, SPLITTING
        from .sampler import DETERMINISTIC, EXPONENTIAL, GEOMETRIC

        _reject_unknown(raw, {f.name for f in fields(cls)}, path)
        gamma = raw.get("gamma", "one-over-T")
        if isinstance(gamma, str):
            if gamma not in GAMMA_RULES:
                raise ConfigError(f"{path}.gamma", f"expected one of {', '.join(GAMMA_RULES)} or a number, got {gamma!r}")
        else:
            gamma = _number(raw, "gamma", path, None)
            if gamma < 0:
                raise ConfigError(f"{path}.gamma", f"must be non-negative, got {gamma}")
        metropolis = raw.get("metropolis", True)
        if not isinstance(metropolis, bool):
            raise ConfigError(f"{path}.metropolis", f"expected true or false, got {metropolis!r}")
        duration = raw.get("duration")
        if duration is not None and duration not in (DETERMINISTIC, GEOMETRIC, EXPONENTIAL):
            raise ConfigError(f"{path}.duration", f"unknown duration rule {duration!r}")
        if metropolis and duration not in (None, GEOMETRIC):
            raise ConfigError(f"{path}.duration", "Metropolis-adjusted kernels use geometric-steps")
        rules = raw.get("gamma_rules", ["zero", "one-over-T"])
        if not isinstance(rules, (list, tuple)) or not rules:
            raise ConfigError(f"{path}.gamma_rules", "expected a non-empty list")
        for rule in rules:
            if rule not in GAMMA_RULES:
                raise ConfigError(f"{path}.gamma_rules", f"unknown gamma rule {rule!r}")
        T_grid = _vector(raw, "T_grid", path) or ()
        if any(t <= 0 for t in T_grid):
            raise ConfigError(f"{path}.T_grid", "durations must be positive")
        T = _number(raw, "T", path, 0.5, positive=True)
        # cot T turns negative once T reaches pi/2
        if gamma == "cot-T" and T >= math.pi / 2:
            raise ConfigError(f"{path}.gamma", f"cot-T needs T < pi/2, got T = {T}")
        if "cot-T" in rules and max(T_grid or (T,)) >= math.pi / 2:
            raise ConfigError(f"{path}.gamma_rules", f"cot-T needs every duration below pi/2, largest is {max(T_grid or (T,))}")
        target = _number(raw, "target_acceptance", path, 0.99, positive=True)
        if target >= 1.0:
            raise ConfigError(f"{path}.target_acceptance", f"must be below 1, got {target}")
        return cls(
            T=T,
            dt=_number(raw, "dt", path, None, positive=True),
            gamma=gamma,
            metropolis=metropolis,
            duration=duration,
            scheme=_choice(raw, "scheme", path, SPLITTING, (SPLITTING, EXACT_LINEAR)),
            n=_integer(raw, "n", path, None, minimum=1),
            meet_threshold=_number(raw, "meet_threshold", path, 1e-8, positive=True),
            max_steps=_integer(raw, "max_steps", path, 10000, minimum=1),
            T_grid=T_grid,
            gamma_rules=tuple(rules),
            target_acceptance=target,
            tuning_trials=_integer(raw, "tuning_trials", path, 1000, minimum=2),
            delta=_number(raw, "delta", path, 0.01, positive=True),
        )


@dataclass(frozen=True)
class InitialConfig:
    """Initial state: the zero path, a constant path, a circular loop or a Gaussian draw."""

    kind: str = "zero"
    point: Tuple[float, ...] | None = None
    center: Tuple[float, ...] | None = None
    radius: float = 1.0

    @classmethod
    def parse(cls, raw: Mapping[str, Any], path: str) -> "InitialConfig":
        _reject_unknown(raw, {f.name for f in fields(cls)}, path)
        kind = _choice(raw, "kind", path, "zero", INITIAL_KINDS)
        point = _vector(raw, "point", path)
        center = _vector(raw, "center", path)
        if kind == "constant" and point is None:
            raise ConfigError(f"{path}.point", "required for a constant initial path")
        if kind == "circle" and center is None:
            raise ConfigError(f"{path}.center", "required for a circular initial loop")
        return cls(kind=kind, point=point, center=center, radius=_number(raw, "radius", path, 1.0, positive=True))

    def state(self, model: PathModel, rng: RngStream, replicas: int | None = None) -> np.ndarray:
        """Eigen coordinates of the initial state (``(replicas, N)`` when *replicas* is given)."""
        if self.kind == "gaussian":
            return sample_gaussian(model.covariance, rng, size=replicas).coefficients
        if self.kind == "zero":
            coeffs = np.zeros(model.dim)
        elif self.kind == "constant":
            coeffs = _checked(constant_path, model, self.point)
        else:
            coeffs = _checked(circle_loop, model, self.center, self.radius)
        if replicas is None:
            return coeffs
        return np.broadcast_to(coeffs, (replicas, model.dim)).copy()


def _checked(builder, model: PathModel, vector: Tuple[float, ...], *extra: float) -> np.ndarray:
    if len(vector) != model.d:
        raise ConfigError("initial", f"expected {model.d} coordinates, got {len(vector)}")
    state: SpectralVector = builder(model, np.asarray(vector), *extra)
    return state.coefficients


# --------------------------------------------------------------------------------------
# Top level
# --------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int
    model: ModelConfig = field(default_factory=ModelConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    initial_x: InitialConfig = field(default_factory=InitialConfig)
    initial_y: InitialConfig = field(default_factory=lambda: InitialConfig(kind="gaussian"))
    replicas: int = 100
    steps: int = 1000
    burn_in: int = 0
    thin: int = 1
    pairs: int = 20
    workers: int | None = None
    out_dir: Path = Path("results")
    source: str | None = None

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready mapping of every effective value."""
        data = asdict(self)
        data["out_dir"] = str(self.out_dir)
        return data

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply non-``None`` overrides (CLI flags)."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        for key in ("replicas", "steps"):
            if key in changes and changes[key] < 1:
                raise ConfigError(key, f"must be >= 1, got {changes[key]}")
        if "workers" in changes and changes["workers"] < 1:
            raise ConfigError("workers", f"must be >= 1, got {changes['workers']}")
        if "command" in changes and changes["command"] not in COMMANDS:
            raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}, got {changes['command']!r}")
        if "out_dir" in changes:
            changes["out_dir"] = Path(changes["out_dir"])
        return replace(self, **changes)


_TOP_LEVEL = {"command", "seed", "model", "kernel", "initial", "replicas", "steps", "burn_in", "thin", "pairs", "workers", "out_dir"}


def parse_config(raw: Mapping[str, Any], *, source: str | None = None, command: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validate a parsed configuration mapping.

    Raises:
        ConfigError: Naming the dotted path of the first invalid field.
    """
    _reject_unknown(raw, _TOP_LEVEL, "")
    command = command or raw.get("command")
    if command is None:
        raise ConfigError("command", "required (in the file or on the command line)")
    if command not in COMMANDS:
        raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}, got {command!r}")
    seed_value = seed if seed is not None else raw.get("seed")
    if seed_value is None:
        raise ConfigError("seed", "required (in the file or via --seed)")
    if isinstance(seed_value, bool) or not isinstance(seed_value, int) or seed_value < 0:
        raise ConfigError("seed", f"expected a non-negative integer, got {seed_value!r}")
    initial = _section(raw, "initial", "")
    _reject_unknown(initial, {"x", "y"}, "initial")
    workers = _integer(raw, "workers", "", None, minimum=1)
    return ExperimentConfig(
        command=command,
        seed=int(seed_value),
        model=ModelConfig.parse(_section(raw, "model", "")),
        kernel=KernelConfig.parse(_section(raw, "kernel", "")),
        initial_x=InitialConfig.parse(_section(initial, "x", "initial"), "initial.x"),
        initial_y=InitialConfig.parse(_section(initial, "y", "initial") or {"kind": "gaussian"}, "initial.y"),
        replicas=_integer(raw, "replicas", "", 100, minimum=1),
        steps=_integer(raw, "steps", "", 1000, minimum=1),
        burn_in=_integer(raw, "burn_in", "", 0, minimum=0),
        thin=_integer(raw, "thin", "", 1, minimum=1),
        pairs=_integer(raw, "pairs", "", 20, minimum=1),
        workers=workers,
        out_dir=Path(raw.get("out_dir", "results")),
        source=source,
    )


def _read(path: Path) -> Mapping[str, Any]:
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    text = path.read_text()
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            return tomllib.loads(text)
        if suffix == ".json":
            return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
    raise ConfigError("config", f"unsupported config format {suffix!r} (use .toml or .json)")


def load_config(path: Path | None = None, *, command: str | None = None, seed: int | None = None, **overrides: Any) -> ExperimentConfig:
    """Read, validate and override a configuration file.

    Args:
        path: TOML or JSON file; the package default when ``None``.
        command: Command override.
        seed: Master seed override.
        **overrides: Further top-level overrides (``replicas``, ``steps``, ``workers``,
            ``out_dir``); ``None`` values are ignored.
    """
    path = path or DEFAULT_CONFIG_PATH
    raw = _read(Path(path))
    config = parse_config(raw, source=str(path), command=command, seed=seed)
    config = config.with_overrides(**overrides)
    logger.debug("Loaded configuration from %s (command=%s, seed=%d)", path, config.command, config.seed)
    return config
