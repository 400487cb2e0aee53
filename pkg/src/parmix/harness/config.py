"""Run configuration: a YAML file with ``task``, ``model``, ``mixing`` and ``run`` sections.

Every key listed in ``SCHEMA`` without a default is required; unknown keys
are errors. Seed precedence: explicit override > ``PARMIX_SEED`` > file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..models.neural import ModelDims
from ..schedule import MixingConfig
from ..sstrain import METHODS
from .tasks import TaskSpec

REQUIRED = object()
SEED_ENV = "PARMIX_SEED"
MAX_SEQUENTIAL_LEN = 64

SCHEMA: dict[str, dict[str, Any]] = {
    "task": {"kind": REQUIRED, "vocab_size": REQUIRED, "min_len": REQUIRED, "max_len": REQUIRED,
             "n_train": REQUIRED, "n_eval": REQUIRED, "repeat_k": 2},
    "model": {"d_model": REQUIRED, "n_heads": REQUIRED, "d_ff": REQUIRED, "n_layers": REQUIRED,
              "max_positions": REQUIRED},
    "mixing": {"p_max": REQUIRED, "passes": REQUIRED, "warmup_steps": REQUIRED, "total_steps": REQUIRED,
               "shape": REQUIRED, "fixed_coins": False},
    "run": {"method": REQUIRED, "batch_size": REQUIRED, "total_steps": REQUIRED, "eval_interval": REQUIRED,
            "seed": REQUIRED, "output_dir": REQUIRED, "learning_rate": 1e-3, "record_timing": True},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    model: ModelDims
    mixing: MixingConfig
    method: str
    batch_size: int
    total_steps: int
    eval_interval: int
    seed: int
    output_dir: Path
    learning_rate: float = 1e-3
    record_timing: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"run.method must be one of {METHODS}, got {self.method!r}")
        if self.batch_size < 1 or self.total_steps < 1 or self.eval_interval < 1:
            raise ConfigError("run.batch_size, run.total_steps and run.eval_interval must be positive")
        if self.method == "sequential-ss" and self.task.max_target_len + 1 > MAX_SEQUENTIAL_LEN:
            raise ConfigError(
                f"sequential-ss is limited to target length <= {MAX_SEQUENTIAL_LEN} "
                f"(task yields {self.task.max_target_len} + end token)"
            )
        if self.task.seed != self.seed:
            object.__setattr__(self, "task", replace(self.task, seed=self.seed))

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, seed=seed, task=replace(self.task, seed=seed))


def _set_path(raw: dict, dotted: str, value: Any) -> None:
    section, _, key = dotted.partition(".")
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key: {dotted}")
    raw.setdefault(section, {})[key] = value


def parse_config(raw: Mapping[str, Any], overrides: Mapping[str, Any] | None = None,
                 env: Mapping[str, str] | None = None) -> RunConfig:
    """Validate a raw mapping and build a :class:`RunConfig`.

    ``overrides`` maps dotted keys (``"run.seed"``) to values and wins over
    ``PARMIX_SEED`` in ``env``, which wins over the file.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a mapping with sections task, model, mixing, run")
    data = {s: dict(v) if isinstance(v, Mapping) else v for s, v in raw.items()}
    for section in data:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section: {section}")
        if not isinstance(data[section], dict):
            raise ConfigError(f"config section {section} must be a mapping")
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            _set_path(data, "run.seed", int(env[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    for dotted, value in (overrides or {}).items():
        _set_path(data, dotted, value)

    resolved: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = data.get(section, {})
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown config key: {section}.{key}")
        resolved[section] = {}
        for key, default in keys.items():
            if key in given:
                resolved[section][key] = given[key]
            elif default is REQUIRED:
                raise ConfigError(f"missing config key: {section}.{key}")
            else:
                resolved[section][key] = default
    run = resolved["run"]
    try:
        return RunConfig(
            task=TaskSpec(seed=int(run["seed"]), **resolved["task"]),
            model=ModelDims(**resolved["model"]),
            mixing=MixingConfig(**resolved["mixing"]),
            method=str(run["method"]),
            batch_size=int(run["batch_size"]),
            total_steps=int(run["total_steps"]),
            eval_interval=int(run["eval_interval"]),
            seed=int(run["seed"]),
            output_dir=Path(run["output_dir"]),
            learning_rate=float(run["learning_rate"]),
            record_timing=bool(run["record_timing"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: Mapping[str, Any] | None = None, env: Mapping[str, str] | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw or {}, overrides, env)


def dump_config(config: RunConfig) -> str:
    t, m, x = config.task, config.model, config.mixing
    raw = {
        "task": {"kind": t.kind, "vocab_size": t.vocab_size, "min_len": t.min_len, "max_len": t.max_len,
                 "n_train": t.n_train, "n_eval": t.n_eval, "repeat_k": t.repeat_k},
        "model": {"d_model": m.d_model, "n_heads": m.n_heads, "d_ff": m.d_ff, "n_layers": m.n_layers,
                  "max_positions": m.max_positions},
        "mixing": {"p_max": x.p_max, "passes": x.passes, "warmup_steps": x.warmup_steps,
                   "total_steps": x.total_steps, "shape": x.shape, "fixed_coins": x.fixed_coins},
        "run": {"method": config.method, "batch_size": config.batch_size, "total_steps": config.total_steps,
                "eval_interval": config.eval_interval, "seed": config.seed, "output_dir": str(config.output_dir),
                "learning_rate": config.learning_rate, "record_timing": config.record_timing},
    }
    return yaml.safe_dump(raw, sort_keys=False)
