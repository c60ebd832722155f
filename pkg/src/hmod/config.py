"""Run configuration: a flat ``key = value`` text format with typed keys."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # time discretisation
    delta_t: float = 1800.0          # window length and first discrete span, seconds
    depth: int = 4                   # number of discrete memory levels D
    fusion_layers: int = 2           # fusion depth L
    # widths
    d_memory: int = 128
    d_message: int = 128
    d_head: int = 256                # hidden width of the prediction head
    # optimisation
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 500
    patience: int = 20
    # walks
    walk_length: int = 4             # omega
    walk_pairs: int = 2              # epsilon; 2 * walk_pairs walks per anchor
    smoothing: float = 0.01          # additive demand smoothing for discrete-level walks
    horizon: float = 0.0             # candidate look-back, seconds; 0 means 2 * largest discrete span
    decay_timescale: float = 0.0     # seconds; 0 means delta_t
    # data protocol
    seed: int = 0
    train_frac: float = 10 / 14
    val_frac: float = 2 / 14
    test_frac: float = 2 / 14
    thresholds: tuple = (0.0, 3.0, 5.0)
    ha_mode: str = "slot"            # "slot" (time-of-day average) or "global"
    # ablations
    disable_continuous: bool = False
    disable_embedding: bool = False
    plain_mse: bool = False
    use_features: bool = False       # reserved extension point; must stay off
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.delta_t <= 0:
            raise ConfigError("delta_t must be positive")
        if self.depth < 0 or self.fusion_layers < 0:
            raise ConfigError("depth and fusion_layers must be non-negative")
        if self.disable_continuous and self.depth < 1:
            raise ConfigError("disable_continuous needs at least one discrete level")
        if min(self.d_memory, self.d_message, self.d_head) < 1:
            raise ConfigError("widths must be positive")
        if self.walk_length < 1 or self.walk_pairs < 1:
            raise ConfigError("walk_length and walk_pairs must be >= 1")
        if self.smoothing <= 0:
            raise ConfigError("smoothing must be positive")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError("split fractions must be non-negative and sum to 1")
        if self.ha_mode not in ("slot", "global"):
            raise ConfigError("ha_mode must be 'slot' or 'global'")
        if self.use_features:
            raise ConfigError("use_features is reserved; event features are not consumed by the model")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def levels(self) -> list[int]:
        """Memory levels in use, in order."""
        first = 1 if self.disable_continuous else 0
        return list(range(first, self.depth + 1))

    @property
    def walk_horizon(self) -> float:
        if self.horizon > 0:
            return self.horizon
        largest = (2 ** (self.depth - 1)) * self.delta_t if self.depth >= 1 else self.delta_t
        return 2.0 * largest

    @property
    def timescale(self) -> float:
        return self.decay_timescale if self.decay_timescale > 0 else self.delta_t

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse_value(name: str, text: str, default):
    try:
        if isinstance(default, bool):
            v = text.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            if "/" in text:
                num, den = text.split("/", 1)
                return float(num) / float(den)
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


_DEFAULTS = TrainConfig()
KEYS = {f.name: getattr(_DEFAULTS, f.name) for f in dataclasses.fields(TrainConfig)}


def parse_config(text: str, **overrides) -> TrainConfig:
    """Parse ``key = value`` lines; unknown keys are an error naming the key."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"unknown config key: {key}")
        values[key] = _parse_value(key, value.strip(), KEYS[key])
    for key, value in overrides.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key: {key}")
        values[key] = value
    return TrainConfig(**values)


def load_config(path, **overrides) -> TrainConfig:
    return parse_config(Path(path).read_text(), **overrides)
