"""Run configuration dataclasses and the flat key=value override format."""

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .models import LAMBDAS


@dataclass(frozen=True)
class LossConfig:
    lam: float = LAMBDAS[0]
    focal_alpha: float = 0.7
    focal_gamma: float = 2.0
    qs: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not 0 < self.focal_alpha < 1:
            raise ConfigError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0:
            raise ConfigError("focal_gamma must be >= 0")
        if self.qs <= 0:
            raise ConfigError("qs must be > 0")


STAGE_SUBNETS = {
    1: ("analysis", "synthesis", "hyper_analysis", "hyper_mean", "hyper_scale", "hyper_prior"),
    2: ("sr2",),
    3: ("sr4",),
}
STAGE_SF = {2: 2, 3: 4}


@dataclass(frozen=True)
class TrainRun:
    stage: int = 1
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 2
    stage1_sfs: tuple = (1, 2)

    def __post_init__(self):
        if self.stage not in STAGE_SUBNETS:
            raise ConfigError("stage must be 1, 2 or 3")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    @property
    def trainable(self):
        return STAGE_SUBNETS[self.stage]

    @property
    def frozen_layers(self):
        return tuple(s for st, subs in STAGE_SUBNETS.items() if st != self.stage for s in subs)


@dataclass(frozen=True)
class TinyProfile:
    """Desk-scale profile: quarter widths, 32³ blocks, 200 synthetic blocks."""

    block_size: int = 32
    num_blocks: int = 200
    num_test_blocks: int = 50
    data_seed: int = 1
    test_seed: int = 2
    stage1_epochs: int = 30
    warm_epochs: int = 12
    sr_epochs: int = 40
    sr_learning_rate: float = 2e-3
    batch_size: int = 8
    seed: int = 0


def parse_kv(text):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _coerce(value, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        parts = [p.strip() for p in value.strip("()[]").split(",") if p.strip()]
        kind = type(current[0]) if current else str
        return tuple(kind(p) for p in parts)
    return value


def apply_overrides(obj, overrides):
    """New dataclass instance with string overrides coerced to the field types."""
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for k, v in overrides.items():
        if k not in names:
            continue
        try:
            changes[k] = _coerce(v, getattr(obj, k)) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"{k}: {exc}") from None
    return dataclasses.replace(obj, **changes)


def unknown_keys(overrides, *objs):
    known = {f.name for o in objs for f in dataclasses.fields(o)}
    return sorted(set(overrides) - known)
