"""Experiment configuration files.

Format: UTF-8 ``key = value`` lines. ``#`` starts a comment (whole line or
trailing); blank lines are ignored; list values are comma-separated::

    experiment = mse-vs-snr
    iq = balanced          # balanced | case1 | case2
    snr_db = -10, 0, 10, 20
"""
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
import typing

from .prompt import Variant

LOOPS = ("open", "closed")
CONTEXTS = ("none", "heatmap", "icar")
IQ_MODES = ("balanced", "case1", "case2")
EXPERIMENTS = ("mse-vs-snr", "mse-vs-pilots", "e2e-toy", "train", "eval")
SCHEDULES = ("constant", "cosine")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "mse-vs-snr"
    loop: str = "open"
    variant: str = "raw"
    context: str = "none"
    iq: str = "balanced"
    m: int = 2
    l: int = 256
    n: int = 11
    p: int = 8
    lam: float = 0.01
    power: float = 1.0
    snr_db: list[float] = field(default_factory=lambda: [-10.0, 0.0, 10.0, 20.0])
    pilot_lens: list[int] = field(default_factory=lambda: [3, 7, 11, 15])
    seeds: list[int] = field(default_factory=lambda: [0])
    # ICL denoiser training
    steps: int = 50_000
    batch: int = 64
    lr: float = 1e-4
    schedule: str = "constant"
    warmup: int = 0
    # optional warm-up phase on short prompts before the main run (0 = off)
    curriculum_n: int = 4
    curriculum_steps: int = 0
    curriculum_batch: int = 0  # 0 = same as batch
    d: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 64
    eval_tasks: int = 10_000
    # toy JSCC
    image_size: int = 16
    hidden: int = 256
    train_images: int = 256
    test_images: int = 64
    image_dir: str = ""
    pretrain_steps: int = 300
    jscc_steps: int = 200
    jscc_batch: int = 8
    jscc_lr: float = 1e-3
    out: str = "results.csv"

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = (("experiment", EXPERIMENTS), ("loop", LOOPS), ("context", CONTEXTS),
                  ("iq", IQ_MODES), ("schedule", SCHEDULES), ("variant", tuple(v.value for v in Variant)))
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not self.snr_db:
            raise ConfigError("snr_db must list at least one SNR")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if self.n < 0 or any(n < 0 for n in self.pilot_lens):
            raise ConfigError("pilot lengths must be non-negative")
        if self.curriculum_steps < 0 or self.curriculum_batch < 0 or (self.curriculum_steps and self.curriculum_n < 1):
            raise ConfigError("curriculum needs curriculum_n >= 1 and non-negative steps and batch")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        for name in ("m", "l", "p", "steps", "batch", "eval_tasks", "d", "layers", "heads", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.d % self.heads:
            raise ConfigError("d must be divisible by heads")

    def with_updates(self, **kw):
        return dataclasses.replace(self, **kw)


_ALIASES = {"lambda": "lam"}


def _field_types():
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in fields(ExperimentConfig)}


def _convert(key, text, typ):
    try:
        if typing.get_origin(typ) is list:
            (inner,) = typing.get_args(typ)
            return [_convert(key, part, inner) for part in text.split(",") if part.strip()]
        text = text.strip()
        if typ is int:
            return int(text, 0)
        if typ is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from exc


def parse_config(text, base=None):
    """Parse config text into an :class:`ExperimentConfig`, starting from ``base`` or defaults."""
    types = _field_types()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key).replace("-", "_")
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, value, types[key])
    base = base or ExperimentConfig()
    return base.with_updates(**values)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        key = "lambda" if f.name == "lam" else f.name
        text = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v) if isinstance(v, list) else (
            repr(v) if isinstance(v, float) else str(v))
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
