"""Run configuration: YAML file with CLI flag overrides on top of defaults."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml


@dataclass
class PathsConfig:
    train: str = "corpus/train.jsonl"
    dev: str = "corpus/dev.jsonl"
    test: Optional[str] = None
    fixtures: str = "corpus/fixtures.jsonl"
    cache: str = "corpus/cache"


@dataclass
class ProviderConfig:
    kind: str = "synthetic"           # synthetic | file
    path: Optional[str] = None        # regions JSONL for kind=file
    d_v: int = 64
    max_regions: int = 10


@dataclass
class EnrichmentConfig:
    max_entities: int = 5


@dataclass
class ModelSection:
    d_h: int = 64
    n_l: int = 2
    n_a: int = 4
    d_f: int = 128
    max_len: int = 64
    dropout: float = 0.1


@dataclass
class TrainSection:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    itm_steps: int = 200
    use_itm_transfer: bool = True
    use_tags: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    paths: PathsConfig = field(default_factory=PathsConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    enrichment: EnrichmentConfig = field(default_factory=EnrichmentConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        body = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


_SECTIONS = {"paths": PathsConfig, "provider": ProviderConfig,
             "enrichment": EnrichmentConfig, "model": ModelSection,
             "train": TrainSection}


def _build(cls, data: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if cls is RunConfig and f.name in _SECTIONS:
            kwargs[f.name] = _build(_SECTIONS[f.name], value or {})
        else:
            kwargs[f.name] = value
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: "
                         f"{sorted(unknown)}")
    return cls(**kwargs)


def load_config(path=None, seed: Optional[int] = None,
                out_dir: Optional[str] = None) -> RunConfig:
    """Load YAML config (all keys optional) and apply flag overrides."""
    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    cfg = _build(RunConfig, data)
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True),
                          encoding="utf-8")
