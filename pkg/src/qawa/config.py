"""JSON run configuration.

A config file is one JSON object.  Top-level keys:

``command``
    one of :data:`COMMANDS`.
``seed``, ``out``, ``shots``
    global seed (default 42), output directory (default ``results``) and
    an optional shot count overriding every training block.
``problem``, ``qaoa``, ``qawa``, ``copula``, ``experiment``, ``benchmark``,
``distributed``, ``validation``
    parameter blocks; every key is optional and unknown keys are errors.

Nested optimizer/training blocks take the fields of
:class:`~qawa.optim.OptimizerConfig` and :class:`~qawa.oracle.TrainingConfig`.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .distlearn import DistributedConfig
from .errors import InputError
from .experiments import BenchmarkConfig, CopulaExperimentConfig, CorrelationExperimentConfig, ValidationConfig
from .optim import OptimizerConfig
from .oracle import TrainingConfig

DEFAULT_SEED = 42
SEED_ENV = "QAWA_SEED"
COMMANDS = ("benchmark", "validate", "copula", "fig4", "distributed", "qaoa", "train")


@dataclass
class ProblemBlock:
    spec: str | None = None  # portfolio JSON written by ``qawa ingest``
    n: int = 4
    lam: float = 0.5
    days: int = 252


@dataclass
class QaoaBlock:
    p: int = 3
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


@dataclass
class QawaBlock:
    coin_theta: float = 1.5707963267948966
    target: float | None = None  # scalar target; None trains on brute-force alignment
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(coin_f="constant"))


@dataclass
class DistributedBlock:
    m: int = 2
    subsets: list[list[int]] | None = None
    settings: DistributedConfig = field(default_factory=DistributedConfig)


@dataclass
class RunConfig:
    command: str = "qaoa"
    seed: int | None = None
    out: str = "results"
    shots: int | None = None
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    qaoa: QaoaBlock = field(default_factory=QaoaBlock)
    qawa: QawaBlock = field(default_factory=QawaBlock)
    copula: CopulaExperimentConfig = field(default_factory=CopulaExperimentConfig)
    experiment: CorrelationExperimentConfig = field(default_factory=CorrelationExperimentConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    distributed: DistributedBlock = field(default_factory=DistributedBlock)
    validation: ValidationConfig = field(default_factory=ValidationConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _default_of(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return dataclasses.MISSING


def build(cls, data, where: str = "config"):
    """Instantiate dataclass ``cls`` from a dict, recursing into nested blocks."""
    if not isinstance(data, dict):
        raise InputError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise InputError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = _default_of(fields[name])
        if dataclasses.is_dataclass(default) and not isinstance(default, type):
            kwargs[name] = build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from None


def parse_config(data: dict) -> RunConfig:
    cfg = build(RunConfig, data)
    if cfg.command not in COMMANDS:
        raise InputError(f"config: unknown command {cfg.command!r}; expected one of {', '.join(COMMANDS)}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(data)


def resolve_seed(flag: int | None, config_seed: int | None, env=None) -> int:
    """CLI flag, then ``QAWA_SEED``, then the config file, then 42."""
    env = os.environ if env is None else env
    if flag is not None:
        return int(flag)
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    if config_seed is not None:
        return int(config_seed)
    return DEFAULT_SEED
