"""Hyperparameters, ablation switches and the ``key = value`` run-config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

BRANCHES = ("left", "right", "both")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # Architecture.
    d_x: int = 128
    d_d: int = 128
    n_r: int = 2
    f_d: int = 256
    w_d: int = 2
    d_b: int = 3
    f_s: int = 256
    w_s: int = 3
    branches: str = "both"
    residual: bool = True
    leaky_alpha: float = 0.01
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    # Optimization.
    batch_size: int = 128
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    seed: int = 0
    char_dropout: float = 0.01
    max_len: int = 512
    # Decoding.
    constrained: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d_x", "d_d", "n_r", "f_d", "w_d", "d_b", "f_s", "w_s", "batch_size", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.branches not in BRANCHES:
            raise ConfigError(f"branches must be one of {BRANCHES}, got {self.branches!r}")
        if self.lr < 0 or not 0 <= self.char_dropout < 1:
            raise ConfigError("lr must be >= 0 and char_dropout in [0, 1)")
        if not 0 < self.leaky_alpha < 1 or not 0 < self.bn_momentum < 1 or self.bn_eps <= 0:
            raise ConfigError("leaky_alpha and bn_momentum must lie in (0, 1); bn_eps must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam betas must lie in [0, 1) and adam_eps must be > 0")
        embed = self.d_x + self.d_d
        if self.branches != "right" and self.residual and self.f_d != embed:
            raise ConfigError(f"residual skip needs f_d == d_x + d_d, got f_d={self.f_d}, d_x + d_d={embed}")
        if self.branches == "both" and self.f_d != self.f_s:
            raise ConfigError(f"branch sum needs f_d == f_s, got {self.f_d} and {self.f_s}")

    @property
    def dilations(self) -> list[int]:
        return [self.d_b**i for i in range(self.n_r)]

    @property
    def hidden_size(self) -> int:
        return self.f_s if self.branches == "right" else self.f_d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**values)


def _coerce(field: dataclasses.Field, raw: str):
    kind = field.type
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    try:
        return {"int": int, "float": float, "str": str}[kind](raw.strip())
    except ValueError:
        raise ConfigError(f"{field.name}: expected {kind}, got {raw!r}") from None


def parse_run_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed values."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(fields[key], value)
    return values


def load_run_config(path: str | Path, **overrides) -> TrainConfig:
    values = parse_run_config(Path(path).read_text(encoding="utf-8"), str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)


def format_run_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in config.to_dict().items())
