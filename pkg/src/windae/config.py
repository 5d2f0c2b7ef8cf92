"""Run configuration: one YAML/JSON document with strict sections."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    L: int = 128
    max_segments: int = 5
    samples_per_pattern: int = 1000
    test_samples_per_pattern: int | None = None  # None: same as samples_per_pattern
    noise_amplitude: float = 0.1
    length_jitter: float = 0.4
    seed: int = 0


@dataclass
class AeSection:
    c1: int = 4
    hidden: int = 128
    lr: float = 1e-7
    batch: int = 10
    epochs: int = 6000
    eval_every: int = 10
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0
    log_wall_time: bool = False


@dataclass
class ProbeSection:
    hidden: int = 64
    lr: float = 1e-2
    batch: int = 32
    epochs: int = 200
    filters_used: int = 4
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0


@dataclass
class IoSection:
    workdir: str = "run"
    train: str = "data/train.ndjson"
    test: str = "data/test.ndjson"
    ae_checkpoint: str = "ae/final.ckpt.json"
    ae_best_checkpoint: str = "ae/best.ckpt.json"
    ae_log: str = "ae/train_log.ndjson"
    features_train: str = "features/train.ndjson"
    features_test: str = "features/test.ndjson"
    probe_checkpoint: str = "probe/probe.ckpt.json"
    ranks: str = "probe/ranks.csv"
    sweep: str = "probe/sweep.csv"
    reports: str = "reports"

    def path(self, key: str) -> Path:
        p = Path(getattr(self, key))
        return p if p.is_absolute() else Path(self.workdir) / p


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    ae: AeSection = field(default_factory=AeSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    io: IoSection = field(default_factory=IoSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_SECTION_TYPES = {"data": DataSection, "ae": AeSection, "probe": ProbeSection, "io": IoSection}


def _coerce(section: str, key: str, value, target_type):
    if target_type == "int | None":
        if value is None:
            return None
        target_type = "int"
    kind = {"int": int, "float": float, "str": str, "bool": bool}[target_type]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, str):
            # YAML 1.1 reads "1e-7" (no dot) as a string
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
    return value


def _set(cfg: RunConfig, section: str, key: str, value) -> None:
    if section not in _SECTION_TYPES:
        raise ConfigError(f"unknown config section {section!r} (expected one of {sorted(_SECTION_TYPES)})")
    sec = getattr(cfg, section)
    types = {f.name: f.type for f in dataclasses.fields(sec)}
    if key not in types:
        raise ConfigError(f"unknown key {section}.{key} (expected one of {sorted(types)})")
    setattr(sec, key, _coerce(section, key, value, types[key]))


def from_dict(doc: dict | None) -> RunConfig:
    cfg = RunConfig()
    if doc is None:
        return cfg
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of sections")
    for section, values in doc.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {section!r} (expected one of {sorted(_SECTION_TYPES)})")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in values.items():
            _set(cfg, section, key, value)
    return cfg


def load(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(doc)


def apply_override(cfg: RunConfig, assignment: str) -> None:
    """Apply ``section.key=value``; the value is parsed as a YAML scalar."""
    name, sep, raw = assignment.partition("=")
    if not sep or "." not in name:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    section, key = name.split(".", 1)
    _set(cfg, section, key, yaml.safe_load(raw) if raw != "" else "")
