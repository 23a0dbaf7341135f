"""Declarative run configuration read from a TOML file.

Grammar (all keys optional unless marked)::

    [run]
    n_train = 150            # N, training runs of the model (>= 2)
    n_test = 1000            # held-out points for builtin models (0 disables)
    m_mc = 10000             # M, Monte-Carlo samples per design block (>= 2)
    n_gp = 500               # N_GP, posterior realisations (>= 2)
    n_boot = 300             # B, bootstrap resamples (>= 2)
    seed = 0
    kernel = "squared_exponential"    # or "matern52"
    second_order = false
    second_order_mode = "mean_only"   # or "full"
    ci = "normal"                     # or "percentile"
    level = 0.95
    restarts = 10
    block_size = 1024        # rows per joint realisation block; 0 = one block
    workers = 1              # threads; results do not depend on it
    convergence = []         # training sizes for the convergence table
    projection_bins = 20
    projection_probes = 10000
    output_dir = "gpsobol-out"        # relative to the config file

    [model]                  # required
    builtin = "builtin:ishigami?a=7&b=0.1"
    # or an external command:
    command = "{python} model.py {input} {output}"   # {python}: this interpreter
    workdir = "."            # relative to the config file
    timeout = 3600.0
    output_column = "y"
    batch_size = 1
    parallelism = 1
    env_passthrough = ["PATH", "HOME"]   # omit to inherit the full environment

    [[parameters]]           # required for external models
    name = "x1"
    lower = 0.0
    upper = 1.0
    unit = "mm"              # optional, informational

Builtin models supply their own parameter space when ``[[parameters]]`` is
absent.  The config hash covers every key that can change results; paths,
``workers`` and ``parallelism`` are excluded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import BenchmarkFn, from_selector
from .errors import ConfigError
from .gp.kernels import KernelKind
from .runner import ModelSpec
from .space import Parameter, ParameterSpace

RUN_KEYS = {
    "n_train", "n_test", "m_mc", "n_gp", "n_boot", "seed", "kernel", "second_order",
    "second_order_mode", "ci", "level", "restarts", "block_size", "workers", "convergence",
    "projection_bins", "projection_probes", "output_dir",
}
MODEL_KEYS = {
    "builtin", "command", "workdir", "timeout", "output_column", "batch_size", "parallelism",
    "env_passthrough",
}
PARAM_KEYS = {"name", "lower", "upper", "unit"}


@dataclass(frozen=True)
class RunConfig:
    space: ParameterSpace
    model: ModelSpec | BenchmarkFn
    selector: str | None = None
    n_train: int = 150
    n_test: int = 1000
    m_mc: int = 10000
    n_gp: int = 500
    n_boot: int = 300
    seed: int = 0
    kernel: KernelKind = KernelKind.SQUARED_EXPONENTIAL
    second_order: bool = False
    second_order_mode: str = "mean_only"
    ci: str = "normal"
    level: float = 0.95
    restarts: int = 10
    block_size: int = 1024
    workers: int = 1
    parallelism: int = 1
    convergence: tuple[int, ...] = ()
    projection_bins: int = 20
    projection_probes: int = 10000
    output_dir: Path = Path("gpsobol-out")
    units: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("n_train", "m_mc", "n_gp", "n_boot"):
            if int(getattr(self, key)) < 2:
                raise ConfigError(f"{key} must be >= 2, got {getattr(self, key)}")
        for key in ("n_test", "restarts", "block_size", "workers", "parallelism",
                    "projection_bins", "projection_probes"):
            if int(getattr(self, key)) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if self.restarts < 1 or self.workers < 1 or self.parallelism < 1:
            raise ConfigError("restarts, workers and parallelism must be >= 1")
        if self.projection_bins < 2 or self.projection_probes < 1:
            raise ConfigError("projection needs >= 2 bins and >= 1 probe")
        if self.second_order_mode not in ("mean_only", "full"):
            raise ConfigError("second_order_mode must be 'mean_only' or 'full'")
        if self.ci not in ("normal", "percentile"):
            raise ConfigError("ci must be 'normal' or 'percentile'")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        if any(n < 2 or n > self.n_train for n in self.convergence):
            raise ConfigError("convergence sizes must lie in [2, n_train]")
        if isinstance(self.model, ModelSpec) and tuple(self.model.names) != tuple(self.space.names):
            raise ConfigError("model parameter names differ from the parameter space")
        if isinstance(self.model, BenchmarkFn) and self.model.dim != self.space.dim:
            raise ConfigError(f"builtin model takes {self.model.dim} parameters, "
                              f"space has {self.space.dim}")

    @property
    def is_builtin(self) -> bool:
        return isinstance(self.model, BenchmarkFn)

    def canonical(self) -> dict:
        """Result-relevant settings as plain data; the basis of :attr:`hash`."""
        if self.is_builtin:
            model = {"builtin": self.selector}
        else:
            model = {"command": self.model.command, "output_column": self.model.output_column,
                     "batch_size": self.model.batch_size}
        return {
            "parameters": self.space.to_dict(),
            "model": model,
            "n_train": self.n_train,
            "n_test": self.n_test if self.is_builtin else 0,
            "m_mc": self.m_mc,
            "n_gp": self.n_gp,
            "n_boot": self.n_boot,
            "seed": self.seed,
            "kernel": self.kernel.value,
            "second_order": self.second_order,
            "second_order_mode": self.second_order_mode,
            "ci": self.ci,
            "level": self.level,
            "restarts": self.restarts,
            "block_size": self.block_size,
            "convergence": list(self.convergence),
            "projection_bins": self.projection_bins,
            "projection_probes": self.projection_probes,
        }

    @property
    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_keys(table: dict, allowed: set, where: str):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _int(table, key, default):
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _space(items) -> tuple[ParameterSpace, dict]:
    if not isinstance(items, list) or not items:
        raise ConfigError("[[parameters]] must list at least one parameter")
    params, units = [], {}
    for n, item in enumerate(items, start=1):
        _check_keys(item, PARAM_KEYS, f"parameter {n}")
        try:
            params.append(Parameter(str(item["name"]), float(item["lower"]), float(item["upper"])))
        except KeyError as exc:
            raise ConfigError(f"parameter {n} lacks {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"parameter {n}: {exc}") from None
        if "unit" in item:
            units[params[-1].name] = str(item["unit"])
    try:
        return ParameterSpace(params), units
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def from_dict(data: dict, base_dir=".") -> RunConfig:
    """Build a :class:`RunConfig` from parsed TOML; relative paths use ``base_dir``."""
    _check_keys(data, {"run", "model", "parameters"}, "top level")
    run = data.get("run", {})
    model_t = data.get("model")
    _check_keys(run, RUN_KEYS, "[run]")
    if not isinstance(model_t, dict):
        raise ConfigError("missing [model] table")
    _check_keys(model_t, MODEL_KEYS, "[model]")
    base = Path(base_dir)

    units: dict = {}
    space = None
    if "parameters" in data:
        space, units = _space(data["parameters"])
    selector = None
    if ("builtin" in model_t) == ("command" in model_t):
        raise ConfigError("[model] needs exactly one of 'builtin' or 'command'")
    if "builtin" in model_t:
        selector = str(model_t["builtin"])
        if not selector.startswith("builtin:"):
            selector = "builtin:" + selector
        model = from_selector(selector)
        if space is None:
            space = model.space
    else:
        if space is None:
            raise ConfigError("external models need [[parameters]]")
        env = model_t.get("env_passthrough")
        model = ModelSpec(
            command=str(model_t["command"]),
            names=tuple(space.names),
            workdir=str(base / model_t.get("workdir", ".")),
            timeout=float(model_t.get("timeout", 3600.0)),
            output_column=str(model_t.get("output_column", "y")),
            batch_size=_int(model_t, "batch_size", 1),
            env_passthrough=None if env is None else tuple(str(v) for v in env),
        )
    try:
        kernel = KernelKind.parse(run.get("kernel", "squared_exponential"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    conv = run.get("convergence", [])
    if not isinstance(conv, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in conv):
        raise ConfigError("convergence must be a list of integers")
    second = run.get("second_order", False)
    if not isinstance(second, bool):
        raise ConfigError("second_order must be true or false")
    return RunConfig(
        space=space,
        model=model,
        selector=selector,
        n_train=_int(run, "n_train", 150),
        n_test=_int(run, "n_test", 1000),
        m_mc=_int(run, "m_mc", 10000),
        n_gp=_int(run, "n_gp", 500),
        n_boot=_int(run, "n_boot", 300),
        seed=_int(run, "seed", 0),
        kernel=kernel,
        second_order=second,
        second_order_mode=str(run.get("second_order_mode", "mean_only")),
        ci=str(run.get("ci", "normal")),
        level=float(run.get("level", 0.95)),
        restarts=_int(run, "restarts", 10),
        block_size=_int(run, "block_size", 1024),
        workers=_int(run, "workers", 1),
        parallelism=_int(model_t, "parallelism", 1),
        convergence=tuple(sorted(set(conv))),
        projection_bins=_int(run, "projection_bins", 20),
        projection_probes=_int(run, "projection_probes", 10000),
        output_dir=base / run.get("output_dir", "gpsobol-out"),
        units=units,
    )


def load(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data, base_dir=path.parent)
