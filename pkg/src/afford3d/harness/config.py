"""Flat key=value training configuration."""

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..model import Wiring

SEED_ENV = "AFFORD3D_SEED"


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 0.0005
    lambda_c: float = 0.3
    seed: int = 0
    # ablation switches: True keeps the module, False removes it
    msi: bool = True
    gfpm: bool = True
    cgc: bool = True
    sg: bool = True
    scale_sizes: tuple = (64, 128)
    resize_to: int = 224
    channels: int = 512
    heads: int = 4
    gcn_layers: int = 2
    knn: int = 16
    residual: bool = True
    share_gcn: bool = False
    grad_clip: float = 5.0
    cosine_decay: bool = False
    eval_every: int = 10
    binarize_gt: bool = False
    n_points: int = 2048

    def __post_init__(self):
        self.scale_sizes = tuple(int(v) for v in self.scale_sizes)
        for name in ("epochs", "batch_size", "resize_to", "channels", "heads", "gcn_layers",
                     "knn", "eval_every", "n_points"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if self.lambda_c < 0:
            raise ValueError("lambda_c must be >= 0")
        if len(self.scale_sizes) != 2 or min(self.scale_sizes) <= 0:
            raise ValueError("scale_sizes must be two positive region counts")
        if self.channels % self.heads:
            raise ValueError("channels must be divisible by heads")

    @property
    def ablations(self):
        return {"msi": self.msi, "gfpm": self.gfpm, "cgc": self.cgc, "sg": self.sg}

    def to_dict(self):
        return asdict(self)

    def with_overrides(self, **kw):
        return replace(self, **kw)


def apply_ablation(config):
    """Translate the ablation switches into model wiring."""
    return Wiring(multi_scale=config.msi, propagate=config.gfpm,
                  coupled_heads=config.cgc, scene_gate=config.sg)


_TRUE = {"1", "true", "on", "yes"}
_FALSE = {"0", "false", "off", "no"}


def _parse(value, default):
    if isinstance(default, bool):
        v = value.strip().lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(int(v) for v in value.split(","))
    return value


def parse_config(text):
    defaults = TrainConfig()
    names = {f.name for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        if key not in names:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse(value.strip(), getattr(defaults, key))
    return TrainConfig(**values)


def load_config(path=None, env=None):
    """Read a config file (or defaults) and apply the seed environment override."""
    config = parse_config(Path(path).read_text()) if path else TrainConfig()
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        config = config.with_overrides(seed=int(env[SEED_ENV]))
    return config


def dump_config(config):
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, bool):
            value = "on" if value else "off"
        elif isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
