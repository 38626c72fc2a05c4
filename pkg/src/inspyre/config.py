"""Run configuration: one nested record merged from a YAML file and command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import yaml

from .blending import ResizePolicy, TransitionSchedule
from .data import AugmentConfig
from .errors import InvalidArgument
from .model import ModelConfig
from .supervision import LossWeights, TrainSchedule

_SECTIONS = {
    "model": ModelConfig,
    "schedule": TrainSchedule,
    "loss": LossWeights,
    "resize": ResizePolicy,
    "transition": TransitionSchedule,
    "augment": AugmentConfig,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    loss: LossWeights = field(default_factory=LossWeights)
    resize: ResizePolicy = field(default_factory=ResizePolicy)
    transition: TransitionSchedule = field(default_factory=TransitionSchedule)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    use_augment: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidArgument(f"unknown config keys {sorted(unknown)}")
        kw = {}
        for name, typ in _SECTIONS.items():
            sub = d.pop(name, None) or {}
            known = {f.name for f in fields(typ)}
            bad = set(sub) - known
            if bad:
                raise InvalidArgument(f"unknown keys in [{name}]: {sorted(bad)}")
            kw[name] = typ(**{k: tuple(v) if isinstance(v, list) else v for k, v in sub.items()})
        return cls(**kw, **d)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Apply dotted-key overrides such as ``{"schedule.base_lr": 1e-3}``; ``None`` values are ignored."""
        d = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            *path, leaf = key.split(".")
            node = d
            for p in path:
                if p not in node or not isinstance(node[p], dict):
                    raise InvalidArgument(f"unknown config section in {key!r}")
                node = node[p]
            if leaf not in node:
                raise InvalidArgument(f"unknown config key {key!r}")
            node[leaf] = value
        return RunConfig.from_dict(d)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise InvalidArgument(f"cannot parse config {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise InvalidArgument(f"config {path} must be a mapping")
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(_plain(cfg.to_dict()), sort_keys=False)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x
