"""INI-file configuration mapped onto the runtime dataclasses.

Only values present in the file override defaults, so a config can be as
small as one section. Unknown sections and keys are rejected to catch
typos early.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .gateway import GatewayConfig
from .orchestrator import OrchestratorConfig
from .ppo import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    corpus: str = ""
    dataset: str = ""
    index: str = ""
    params: str = ""
    out_dir: str = "runs"


def _default_gateway() -> GatewayConfig:
    return GatewayConfig(base_url="http://localhost:8000", model="")


@dataclass
class AppConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    gateway: GatewayConfig = field(default_factory=_default_gateway)
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)
    training: TrainConfig = field(default_factory=TrainConfig)


_SECTION_FIELDS = {
    "paths": ("corpus", "dataset", "index", "params", "out_dir"),
    "gateway": (
        "base_url",
        "model",
        "api_key_env",
        "temperature",
        "timeout_s",
        "max_retries",
        "backoff_base_s",
        "max_concurrency",
    ),
    "orchestrator": (
        "max_turn",
        "k",
        "fallback_enabled",
        "parallel_workers",
        "turn_cost_mode",
    ),
    "training": (
        "alpha",
        "gamma",
        "gae_lambda",
        "clip_epsilon",
        "kl_beta",
        "learning_rate",
        "batch_size",
        "epochs_per_batch",
        "n_batches",
        "seed",
        "max_turn",
        "advantage_norm",
        "turn_cost_mode",
    ),
}


def _coerce(current, raw: str, section: str, key: str):
    kind = type(current)
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as err:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from err


def load_config(path: str) -> AppConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = AppConfig()
    targets = {
        "paths": cfg.paths,
        "gateway": cfg.gateway,
        "orchestrator": cfg.orchestrator,
        "training": cfg.training,
    }
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTION_FIELDS[section]
        target = targets[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(getattr(target, key), raw, section, key))
    return cfg
