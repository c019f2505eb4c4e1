"""Resolved run configuration and its ``key = value`` file format.

Precedence is CLI flag > config file > built-in default. A config file looks
like::

    [train]
    epochs = 200
    batch_size = 4

    [generator]
    encoder_channels = 64, 128, 256, 512, 512, 512, 512, 512
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .losses import LossConfig
from .model import ConfigError, DiscriminatorConfig, GeneratorConfig
from .postprocess import PostprocessConfig, StructuringElement


@dataclass
class TrainConfig:
    learning_rate: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 4
    epochs: int = 200
    seed: int = 0
    checkpoint_every: int = 10
    log_timing: bool = True

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")


@dataclass
class DataConfig:
    root: str = ""
    kind: str = "custom"
    split_file: str = ""


@dataclass
class PostSection:
    threshold: float = 0.5
    morph_shape: str = "square"
    morph_size: int = 3
    morph_iters: int = 1
    keep_largest: bool = False

    def to_postprocess(self) -> PostprocessConfig:
        se = StructuringElement(self.morph_shape, self.morph_size, self.morph_iters)
        se.validate()
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        return PostprocessConfig(self.threshold, se, self.keep_largest)


# fields that are not user-settable: they are fixed by the architecture
_FIXED = {
    "generator": {"in_channels", "kernel", "stride"},
    "discriminator": {"in_channels", "kernel", "strides", "paddings"},
}


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    postprocess: PostSection = field(default_factory=PostSection)
    data: DataConfig = field(default_factory=DataConfig)

    SECTIONS = ("generator", "discriminator", "loss", "train", "postprocess", "data")

    def validate(self) -> None:
        try:
            self.generator.validate()
            self.discriminator.validate()
            self.loss.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.train.validate()
        self.postprocess.to_postprocess()

    def to_dict(self) -> dict:
        out = {}
        for name in self.SECTIONS:
            sec = asdict(getattr(self, name))
            for k in _FIXED.get(name, ()):
                sec.pop(k, None)
            out[name] = sec
        return out

    def fingerprint(self) -> str:
        """Hash of everything that influences training numerics."""
        d = self.to_dict()
        core = {k: d[k] for k in ("generator", "discriminator", "loss", "train")}
        core["train"] = {k: v for k, v in core["train"].items()
                         if k not in ("log_timing", "epochs", "checkpoint_every")}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for section, values in d.items():
            cfg.set_section(section, values)
        return cfg

    def set_section(self, section: str, values: dict) -> None:
        if section not in self.SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(self, section)
        known = {f.name: f for f in fields(target)}
        for key, value in values.items():
            if key not in known or key in _FIXED.get(section, ()):
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(target, key, _coerce(getattr(target, key), value, f"{section}.{key}"))

    def set(self, dotted: str, value) -> None:
        section, key = dotted.split(".", 1)
        self.set_section(section, {key: value})


def _coerce(current, value, name: str):
    if not isinstance(value, str):
        if isinstance(current, list):
            return [int(v) for v in value]
        if isinstance(current, bool):
            return bool(value)
        if isinstance(current, float) and isinstance(value, int):
            return float(value)
        return value
    text = value.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, list):
            return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {value!r}") from None
    return text


def load_config_file(path, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        cfg.set_section(section, dict(parser.items(section)))
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for k, v in values.items():
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8", newline="\n")
