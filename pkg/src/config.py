#!/usr/bin/env python3
"""
Run configuration for the command-line tools.

Values resolve in this order: explicit flag, ``--config`` file (flat
``key = value`` lines, ``#`` comments), the ``DAT_SEED`` environment
variable for the seed, then built-in defaults.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .errors import ConfigError, ParseError

SEED_ENV = "DAT_SEED"
LOGS_DIR = Path("./logs")

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from e


def parse_bool(value: str) -> bool:
    word = value.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def parse_config_text(content: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; keys are normalized to flag destinations (dashes to underscores)."""
    values: Dict[str, str] = {}
    for number, raw in enumerate(content.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw!r}", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", number)
        key = key.lstrip("-").replace("-", "_")
        if key in values:
            raise ParseError(f"duplicate key {key!r}", number)
        values[key] = value
    return values


def load_config_file(path: Path) -> Dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_config_text(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one command invocation."""

    command: str
    seed: int
    log_level: str = "INFO"
    logs_dir: Path = LOGS_DIR
    paths: Dict[str, Optional[Path]] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)

    def require(self, *names: str) -> None:
        missing = [name for name in names if self.paths.get(name) is None]
        if missing:
            flags = ", ".join("--" + name.replace("_", "-") for name in missing)
            raise ConfigError(f"{self.command} requires {flags}")

    def path(self, name: str) -> Optional[Path]:
        return self.paths.get(name)

    def to_log(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "log_level": self.log_level,
            "paths": {k: (str(v) if v is not None else None) for k, v in self.paths.items()},
            "options": dict(self.options),
        }

    @classmethod
    def from_namespace(cls, namespace: Any, path_keys: Iterable[str]) -> "RunConfig":
        values = dict(vars(namespace))
        values.pop("handler", None)
        values.pop("config", None)
        command = values.pop("command")
        seed = values.pop("seed")
        log_level = values.pop("log_level", "INFO")
        logs_dir = Path(values.pop("logs_dir", LOGS_DIR))
        paths = {}
        for key in path_keys:
            if key in values:
                value = values.pop(key)
                paths[key] = Path(value) if value is not None else None
        return cls(command=command, seed=seed, log_level=log_level, logs_dir=logs_dir, paths=paths, options=values)
