"""Training configuration and its flat ``key = value`` file format.

One setting per line; blank lines and lines starting with ``#`` are ignored.
Keys are exactly the :class:`TrainConfig` field names; unknown keys and
malformed lines raise :class:`ConfigError`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError, InvalidInput
from .feedback import ADAPTERS, Selection

STRATEGIES = ("TEFL", "NoSF", "Type1", "Type2", "Baseline")
LOSSES = ("mae", "mse")


@dataclass(frozen=True)
class TrainConfig:
    L: int = 96
    H: int = 96
    warmup_epochs: int = 3
    joint_epochs: int = 12
    alpha: float = 1.0
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    adapter_kind: str = "lowrank"
    adapter_rank: int = 64
    strategy: str = "TEFL"
    warmup_loss: str = "mae"
    joint_loss: str = "mse"
    seed: int = 0
    window_norm: bool = False
    base_kind: str = "linear"
    hidden: int = 128
    selection: str = "delayed"
    patience: int = 3
    max_epochs: int = 100
    stride: int = 1
    sf_min_batch: int = 8
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        for name in ("L", "H", "batch_size", "adapter_rank", "hidden", "patience",
                     "max_epochs", "stride", "sf_min_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("warmup_epochs", "joint_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be > 0 and weight_decay >= 0")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.adapter_kind not in ADAPTERS:
            raise ConfigError(f"adapter_kind must be one of {tuple(ADAPTERS)}")
        if self.base_kind not in ("linear", "mlp"):
            raise ConfigError("base_kind must be 'linear' or 'mlp'")
        if self.warmup_loss not in LOSSES or self.joint_loss not in LOSSES:
            raise ConfigError(f"losses must be one of {LOSSES}")
        try:
            Selection.parse(self.selection)
        except InvalidInput as exc:
            raise ConfigError(str(exc)) from None
        if self.strategy in ("TEFL", "NoSF") and self.joint_epochs < 1:
            raise ConfigError(f"strategy {self.strategy} needs joint_epochs >= 1")
        if self.strategy == "Type2" and self.warmup_epochs + self.joint_epochs < 1:
            raise ConfigError("Type2 needs at least one epoch")
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fr) or abs(sum(fr) - 1) > 1e-9:
            raise ConfigError(f"split fractions must be in (0,1) and sum to 1: {fr}")

    def replace(self, **changes) -> "TrainConfig":
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "on" if v else "off"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name, typ, raw):
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected on/off, got {raw!r}")
    try:
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    types = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in s.split("=", 1))
        if key not in types:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r} (line {lineno})")
        values[key] = _coerce(key, types[key], raw)
    return (base or TrainConfig()).replace(**values)


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
